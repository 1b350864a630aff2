#include "ltp/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace ltp::analysis {

using nlohmann::json;

double composite_norm(const MatrixD& m) {
  double max_row = 0.0;
  std::vector<double> col(m.cols, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) {
      const double v = std::fabs(m(i, j));
      r += v;
      col[j] += v;
    }
    max_row = std::max(max_row, r);
  }
  const double max_col = col.empty() ? 0.0 : *std::max_element(col.begin(), col.end());
  return std::sqrt(max_col * max_row);
}

double residual_norm(const MatrixD& a_mat, const std::vector<double>& a) {
  if (a.size() != a_mat.cols) throw ShapeError("rank-1 vector length differs from column count");
  MatrixD r = a_mat;
  for (std::size_t i = 0; i < r.rows; ++i) {
    for (std::size_t j = 0; j < r.cols; ++j) r(i, j) -= a[j];
  }
  return composite_norm(r);
}

std::vector<double> rank1_candidate(const MatrixD& a_mat) {
  const std::size_t n = a_mat.rows;
  const std::size_t m = a_mat.cols;
  std::vector<std::vector<double>> cands;
  for (std::size_t i = 0; i < n; ++i) cands.emplace_back(a_mat.row(i).begin(), a_mat.row(i).end());

  std::vector<double> median(m), mean(m);
  std::vector<double> col(n);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t i = 0; i < n; ++i) col[i] = a_mat(i, j);
    std::sort(col.begin(), col.end());
    median[j] = n == 0 ? 0.0 : (n % 2 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]));
    double s = 0.0;
    for (double v : col) s += v;
    mean[j] = n == 0 ? 0.0 : s / static_cast<double>(n);
  }
  cands.push_back(std::move(median));
  cands.push_back(std::move(mean));

  std::size_t best = 0;
  double best_r = residual_norm(a_mat, cands[0]);
  for (std::size_t c = 1; c < cands.size(); ++c) {
    const double r = residual_norm(a_mat, cands[c]);
    if (r < best_r) {
      best_r = r;
      best = c;
    }
  }
  return cands[best];
}

namespace {

// Row and column absolute sums of A - 1 a^T, updated one coordinate at a time.
class Residual {
 public:
  Residual(const MatrixD& a_mat, std::vector<double> a) : A_(a_mat), a_(std::move(a)), rows_(A_.rows, 0.0), cols_(A_.cols, 0.0) {
    for (std::size_t i = 0; i < A_.rows; ++i) {
      for (std::size_t j = 0; j < A_.cols; ++j) {
        const double v = std::fabs(A_(i, j) - a_[j]);
        rows_[i] += v;
        cols_[j] += v;
      }
    }
  }

  double norm() const { return norm_with(rows_, cols_); }

  // Norm after a_j := value, without committing.
  double trial(std::size_t j, double value) {
    scratch_rows_ = rows_;
    double col = 0.0;
    for (std::size_t i = 0; i < A_.rows; ++i) {
      const double nv = std::fabs(A_(i, j) - value);
      scratch_rows_[i] += nv - std::fabs(A_(i, j) - a_[j]);
      col += nv;
    }
    const double saved = cols_[j];
    cols_[j] = col;
    const double r = norm_with(scratch_rows_, cols_);
    cols_[j] = saved;
    return r;
  }

  void commit(std::size_t j, double value) {
    double col = 0.0;
    for (std::size_t i = 0; i < A_.rows; ++i) {
      const double nv = std::fabs(A_(i, j) - value);
      rows_[i] += nv - std::fabs(A_(i, j) - a_[j]);
      col += nv;
    }
    cols_[j] = col;
    a_[j] = value;
  }

  const std::vector<double>& a() const { return a_; }

 private:
  static double norm_with(const std::vector<double>& rows, const std::vector<double>& cols) {
    const double r = rows.empty() ? 0.0 : *std::max_element(rows.begin(), rows.end());
    const double c = cols.empty() ? 0.0 : *std::max_element(cols.begin(), cols.end());
    return std::sqrt(std::max(r, 0.0) * std::max(c, 0.0));
  }

  const MatrixD& A_;
  std::vector<double> a_;
  std::vector<double> rows_, cols_, scratch_rows_;
};

}  // namespace

std::vector<double> rank1_fit(const MatrixD& a_mat) {
  Residual res(a_mat, rank1_candidate(a_mat));
  double best = res.norm();
  if (best == 0.0) return res.a();
  for (double step = 0.25; step >= 1e-6; step *= 0.5) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (std::size_t j = 0; j < a_mat.cols; ++j) {
        for (double dir : {1.0, -1.0}) {
          const double value = res.a()[j] + dir * step;
          const double r = res.trial(j, value);
          if (r < best) {
            res.commit(j, value);
            best = r;
            improved = true;
          }
        }
      }
    }
  }
  return res.a();
}

double diversity(const MatrixD& a_mat) { return residual_norm(a_mat, rank1_fit(a_mat)); }

const LayerDiversity* DiversityReport::find(const std::string& component, int layer) const {
  for (const auto& l : layers) {
    if (l.component == component && l.layer == layer) return &l;
  }
  return nullptr;
}

double DiversityReport::final_encoder_mean() const {
  const LayerDiversity* last = nullptr;
  for (const auto& l : layers) {
    if (l.component == "encoder-self" && (!last || l.layer > last->layer)) last = &l;
  }
  if (!last) throw LookupError("report has no encoder-self layers");
  return last->mean;
}

DiversityReport layer_diversity_profile(const std::vector<nn::AttentionRecord>& records) {
  if (records.empty()) throw UsageError("no captured attention maps; run the model with capture enabled");
  static const std::vector<std::string> order{"encoder-self", "decoder-self", "decoder-cross"};
  std::map<std::pair<int, int>, LayerDiversity> groups;
  std::vector<double> values(records.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < records.size(); ++i) values[i] = diversity(records[i].map);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const auto pos = std::find(order.begin(), order.end(), r.component);
    if (pos == order.end()) throw FormatError("unknown attention component " + r.component, 0);
    auto& g = groups[{static_cast<int>(pos - order.begin()), r.layer}];
    g.component = r.component;
    g.layer = r.layer;
    g.rows = r.map.rows;
    g.cols = r.map.cols;
    g.per_video.push_back(values[i]);
    g.videos.push_back(r.video);
  }
  DiversityReport rep;
  for (auto& [key, g] : groups) {
    double s = 0.0;
    for (double v : g.per_video) s += v;
    g.mean = s / static_cast<double>(g.per_video.size());
    rep.layers.push_back(std::move(g));
  }
  return rep;
}

json report_to_json(const DiversityReport& r) {
  json layers = json::array();
  for (const auto& l : r.layers) {
    json per = json::array();
    for (std::size_t i = 0; i < l.per_video.size(); ++i) per.push_back({{"video", l.videos[i]}, {"diversity", l.per_video[i]}});
    layers.push_back({{"component", l.component},
                      {"layer", l.layer},
                      {"rows", l.rows},
                      {"cols", l.cols},
                      {"mean_diversity", l.mean},
                      {"per_video", per}});
  }
  return {{"layers", layers}};
}

std::string report_to_csv(const DiversityReport& r) {
  std::ostringstream os;
  os << "component,layer,rows,cols,mean_diversity\n";
  for (const auto& l : r.layers) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9f", l.mean);
    os << l.component << ',' << l.layer << ',' << l.rows << ',' << l.cols << ',' << buf << '\n';
  }
  return os.str();
}

void write_report(const std::filesystem::path& dir, const DiversityReport& r) {
  std::filesystem::create_directories(dir);
  write_text_atomic(dir / "diversity.json", report_to_json(r).dump(2) + "\n");
  write_text_atomic(dir / "diversity.csv", report_to_csv(r));
}

}  // namespace ltp::analysis
