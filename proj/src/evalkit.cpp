#include "ltp/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace ltp::evalkit {

using nlohmann::json;

double tiou(const Segment& a, const Segment& b) {
  if (!(a.end > a.start) || !(b.end > b.start)) throw DomainError("tiou: interval with non-positive length");
  const double inter = std::min(a.end, b.end) - std::max(a.start, b.start);
  if (inter <= 0.0) return 0.0;
  return inter / ((a.end - a.start) + (b.end - b.start) - inter);
}

std::optional<double> average_precision(const std::vector<Detection>& preds, const std::vector<GroundTruth>& gts,
                                        double theta) {
  if (gts.empty()) return std::nullopt;
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (preds[a].score != preds[b].score) return preds[a].score > preds[b].score;
    return preds[a].segment.start < preds[b].segment.start;
  });

  std::map<int, std::vector<std::size_t>> by_video;
  for (std::size_t g = 0; g < gts.size(); ++g) by_video[gts[g].video].push_back(g);
  std::vector<char> used(gts.size(), 0);

  double ap = 0.0;
  std::size_t tp = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const auto& p = preds[order[rank]];
    auto it = by_video.find(p.video);
    if (it == by_video.end()) continue;
    double best = -1.0;
    std::size_t best_g = 0;
    for (std::size_t g : it->second) {
      if (used[g]) continue;
      const double o = tiou(p.segment, gts[g].segment);
      if (o >= theta && o > best) {
        best = o;
        best_g = g;
      }
    }
    if (best < 0.0) continue;
    used[best_g] = 1;
    ++tp;
    ap += static_cast<double>(tp) / static_cast<double>(rank + 1);
  }
  return ap / static_cast<double>(gts.size());
}

Protocol protocol_from_string(const std::string& s) {
  if (s == "thumos_style" || s == "thumos") return Protocol::ThumosStyle;
  if (s == "anet_style" || s == "anet") return Protocol::AnetStyle;
  throw ConfigError("unknown protocol '" + s + "' (expected thumos_style or anet_style)");
}

std::string to_string(Protocol p) { return p == Protocol::ThumosStyle ? "thumos_style" : "anet_style"; }

std::vector<double> thresholds(Protocol p) {
  std::vector<double> t;
  if (p == Protocol::ThumosStyle) {
    for (int i = 3; i <= 7; ++i) t.push_back(i / 10.0);
  } else {
    for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
  }
  return t;
}

std::vector<double> report_points(Protocol p) {
  if (p == Protocol::ThumosStyle) return thresholds(p);
  return {0.5, 0.75, 0.95};
}

MapTable map_over_thresholds(const std::vector<Detection>& preds, const std::vector<GroundTruth>& gts,
                             const std::vector<double>& thetas) {
  if (thetas.empty()) throw ConfigError("empty threshold set");
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    if (!(thetas[i] > 0.0 && thetas[i] < 1.0) || (i > 0 && !(thetas[i] > thetas[i - 1]))) {
      throw ConfigError("thresholds must be strictly increasing in (0, 1)");
    }
  }
  std::map<int, std::vector<GroundTruth>> gt_by_cat;
  for (const auto& g : gts) gt_by_cat[g.category].push_back(g);
  std::map<int, std::vector<Detection>> pred_by_cat;
  for (const auto& p : preds) pred_by_cat[p.category].push_back(p);

  MapTable t;
  t.thresholds = thetas;
  t.map.assign(thetas.size(), 0.0);
  for (const auto& [cat, cat_gts] : gt_by_cat) {
    static const std::vector<Detection> none;
    auto it = pred_by_cat.find(cat);
    const auto& cat_preds = it == pred_by_cat.end() ? none : it->second;
    auto& row = t.per_category[cat];
    for (double th : thetas) row.push_back(*average_precision(cat_preds, cat_gts, th));
  }
  if (!gt_by_cat.empty()) {
    for (std::size_t i = 0; i < thetas.size(); ++i) {
      double s = 0.0;
      for (const auto& [cat, row] : t.per_category) s += row[i];
      t.map[i] = s / static_cast<double>(t.per_category.size());
    }
  }
  t.average = std::accumulate(t.map.begin(), t.map.end(), 0.0) / static_cast<double>(t.map.size());
  return t;
}

std::string coverage_bucket(double c) {
  if (!(c > 0.0) || c > 1.0) throw DomainError("coverage " + std::to_string(c) + " outside (0, 1]");
  if (c <= 0.2) return "XS";
  if (c <= 0.4) return "S";
  if (c <= 0.6) return "M";
  if (c <= 0.8) return "L";
  return "XL";
}

std::string instance_bucket(int count) {
  if (count < 1) throw DomainError("instance count must be positive");
  if (count == 1) return "XS";
  if (count <= 4) return "S";
  if (count <= 8) return "M";
  return "L";
}

const std::vector<std::string>& coverage_bucket_names() {
  static const std::vector<std::string> names{"XS", "S", "M", "L", "XL"};
  return names;
}

const std::vector<std::string>& instance_bucket_names() {
  static const std::vector<std::string> names{"XS", "S", "M", "L"};
  return names;
}

std::vector<BucketResult> detad_sensitivity(const std::vector<Detection>& preds, const std::vector<GroundTruth>& gts,
                                            const std::map<int, double>& video_lengths,
                                            const std::vector<double>& thetas) {
  std::vector<BucketResult> out;
  std::map<std::string, std::vector<GroundTruth>> by_cov;
  std::map<int, int> per_video;
  for (const auto& g : gts) {
    auto it = video_lengths.find(g.video);
    if (it == video_lengths.end()) throw LookupError("no length for video " + std::to_string(g.video));
    by_cov[coverage_bucket((g.segment.end - g.segment.start) / it->second)].push_back(g);
    ++per_video[g.video];
  }
  for (const auto& name : coverage_bucket_names()) {
    BucketResult r{"coverage", name, 0, std::nullopt};
    auto it = by_cov.find(name);
    if (it != by_cov.end()) {
      r.gt_count = it->second.size();
      r.average_map = map_over_thresholds(preds, it->second, thetas).average;
    }
    out.push_back(r);
  }
  for (const auto& name : instance_bucket_names()) {
    std::set<int> videos;
    for (const auto& [v, n] : per_video) {
      if (instance_bucket(n) == name) videos.insert(v);
    }
    BucketResult r{"instances", name, 0, std::nullopt};
    if (!videos.empty()) {
      std::vector<GroundTruth> g;
      std::vector<Detection> p;
      for (const auto& x : gts) {
        if (videos.count(x.video)) g.push_back(x);
      }
      for (const auto& x : preds) {
        if (videos.count(x.video)) p.push_back(x);
      }
      r.gt_count = g.size();
      r.average_map = map_over_thresholds(p, g, thetas).average;
    }
    out.push_back(r);
  }
  return out;
}

namespace {

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LookupError("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::uint64_t offset = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      try {
        out.push_back(json::parse(line));
      } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what(), offset + e.byte);
      }
    }
    offset += line.size() + 1;
  }
  return out;
}

}  // namespace

void write_detections(const std::filesystem::path& path, const std::vector<Detection>& dets) {
  std::string text;
  for (const auto& d : dets) {
    text += json{{"video_id", d.video}, {"category", d.category}, {"start", d.segment.start},
                 {"end", d.segment.end}, {"score", d.score}}
                .dump();
    text += '\n';
  }
  write_text_atomic(path, text);
}

std::vector<Detection> read_detections(const std::filesystem::path& path) {
  std::vector<Detection> out;
  try {
    for (const auto& j : read_jsonl(path)) {
      out.push_back({j.at("video_id").get<int>(), j.at("category").get<int>(),
                     {j.at("start").get<double>(), j.at("end").get<double>()}, j.at("score").get<double>()});
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what(), 0);
  }
  return out;
}

void write_ground_truth(const std::filesystem::path& path, const std::vector<GroundTruth>& gts) {
  std::string text;
  for (const auto& g : gts) {
    text += json{{"video_id", g.video}, {"category", g.category}, {"start", g.segment.start}, {"end", g.segment.end}}
                .dump();
    text += '\n';
  }
  write_text_atomic(path, text);
}

std::vector<GroundTruth> read_ground_truth(const std::filesystem::path& path) {
  std::vector<GroundTruth> out;
  try {
    for (const auto& j : read_jsonl(path)) {
      out.push_back({j.at("video_id").get<int>(), j.at("category").get<int>(),
                     {j.at("start").get<double>(), j.at("end").get<double>()}});
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what(), 0);
  }
  return out;
}

json report_to_json(const EvalReport& r) {
  json j;
  j["protocol"] = to_string(r.protocol);
  j["thresholds"] = r.table.thresholds;
  j["map"] = r.table.map;
  j["average"] = r.table.average;
  json per = json::object();
  for (const auto& [cat, row] : r.table.per_category) per[std::to_string(cat)] = row;
  j["per_category_ap"] = per;
  json buckets = json::array();
  for (const auto& b : r.buckets) {
    buckets.push_back({{"axis", b.axis},
                       {"bucket", b.bucket},
                       {"gt_count", b.gt_count},
                       {"average_map", b.average_map ? json(*b.average_map) : json(nullptr)}});
  }
  j["sensitivity"] = buckets;
  return j;
}

std::string report_to_csv(const EvalReport& r) {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  std::ostringstream os;
  os << "kind,key,value\n";
  for (double p : report_points(r.protocol)) {
    for (std::size_t i = 0; i < r.table.thresholds.size(); ++i) {
      if (std::abs(r.table.thresholds[i] - p) < 1e-9) {
        char key[16];
        std::snprintf(key, sizeof key, "%.2f", p);
        os << "threshold," << key << ',' << num(r.table.map[i]) << '\n';
      }
    }
  }
  os << "average,avg," << num(r.table.average) << '\n';
  for (const auto& b : r.buckets) {
    os << b.axis << ',' << b.bucket << ',' << (b.average_map ? num(*b.average_map) : std::string("absent")) << '\n';
  }
  return os.str();
}

void write_report(const std::filesystem::path& dir, const EvalReport& r) {
  std::filesystem::create_directories(dir);
  write_text_atomic(dir / "eval_report.json", report_to_json(r).dump(2) + "\n");
  write_text_atomic(dir / "eval_report.csv", report_to_csv(r));
}

}  // namespace ltp::evalkit
