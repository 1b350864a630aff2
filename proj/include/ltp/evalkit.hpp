#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ltp/common.hpp"

namespace ltp::evalkit {

struct Segment {
  double start = 0.0;
  double end = 0.0;
  bool operator==(const Segment&) const = default;
};

struct GroundTruth {
  int video = 0;
  int category = 0;
  Segment segment;
  bool operator==(const GroundTruth&) const = default;
};

struct Detection {
  int video = 0;
  int category = 0;
  Segment segment;
  double score = 0.0;
  bool operator==(const Detection&) const = default;
};

// |a n b| / |a u b|. Throws DomainError for a zero or negative length interval.
double tiou(const Segment& a, const Segment& b);

// Greedy matching by descending score (ties: earlier start first), each GT
// used at most once, requiring the same video and tIoU >= theta. AP is the sum
// of precision at each newly recalled GT divided by the GT count. Inputs are
// assumed to be one category. nullopt when there is no GT.
std::optional<double> average_precision(const std::vector<Detection>& preds, const std::vector<GroundTruth>& gts,
                                        double theta);

enum class Protocol { ThumosStyle, AnetStyle };

Protocol protocol_from_string(const std::string& s);
std::string to_string(Protocol p);
std::vector<double> thresholds(Protocol p);
std::vector<double> report_points(Protocol p);

struct MapTable {
  std::vector<double> thresholds;
  std::vector<double> map;  // per threshold; mean AP over categories present in GT
  double average = 0.0;
  std::map<int, std::vector<double>> per_category;
};

// Thresholds must be strictly increasing in (0, 1). With no GT at all every
// entry is 0.
MapTable map_over_thresholds(const std::vector<Detection>& preds, const std::vector<GroundTruth>& gts,
                             const std::vector<double>& thetas);

// Coverage: XS (0, .2], S (.2, .4], M (.4, .6], L (.6, .8], XL (.8, 1].
// Instance count per video: XS 1, S 2-4, M 5-8, L >= 9.
std::string coverage_bucket(double coverage);
std::string instance_bucket(int count);
const std::vector<std::string>& coverage_bucket_names();
const std::vector<std::string>& instance_bucket_names();

struct BucketResult {
  std::string axis;  // coverage | instances
  std::string bucket;
  std::size_t gt_count = 0;
  std::optional<double> average_map;  // nullopt for an empty bucket
};

// Coverage buckets restrict the GT only; instance-count buckets restrict both
// GT and predictions to the bucket's videos. `video_lengths` gives the
// duration each video's coverage is measured against.
std::vector<BucketResult> detad_sensitivity(const std::vector<Detection>& preds, const std::vector<GroundTruth>& gts,
                                            const std::map<int, double>& video_lengths,
                                            const std::vector<double>& thetas);

// JSON lines {video_id, category, start, end[, score]}.
void write_detections(const std::filesystem::path& path, const std::vector<Detection>& dets);
std::vector<Detection> read_detections(const std::filesystem::path& path);
void write_ground_truth(const std::filesystem::path& path, const std::vector<GroundTruth>& gts);
std::vector<GroundTruth> read_ground_truth(const std::filesystem::path& path);

struct EvalReport {
  Protocol protocol = Protocol::AnetStyle;
  MapTable table;
  std::vector<BucketResult> buckets;
};

nlohmann::json report_to_json(const EvalReport& r);
// CSV rows: kind,key,value with kind in {threshold, average, coverage, instances}.
std::string report_to_csv(const EvalReport& r);
void write_report(const std::filesystem::path& dir, const EvalReport& r);

}  // namespace ltp::evalkit
