#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "ltp/common.hpp"
#include "ltp/nn/checkpoint.hpp"

namespace ltp::analysis {

// sqrt(|M|_1 * |M|_inf): max absolute column sum times max absolute row sum.
double composite_norm(const MatrixD& m);

// composite_norm(A - 1 a^T).
double residual_norm(const MatrixD& a_mat, const std::vector<double>& a);

// Candidate start (every row, column median, column mean; first best wins),
// then a coordinate pattern search that only accepts strict improvements.
std::vector<double> rank1_fit(const MatrixD& a_mat);
// The candidate stage alone.
std::vector<double> rank1_candidate(const MatrixD& a_mat);

double diversity(const MatrixD& a_mat);

struct LayerDiversity {
  std::string component;
  int layer = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  double mean = 0.0;
  std::vector<double> per_video;
  std::vector<int> videos;
};

struct DiversityReport {
  std::vector<LayerDiversity> layers;  // encoder-self, decoder-self, decoder-cross; by layer

  const LayerDiversity* find(const std::string& component, int layer) const;
  // Mean diversity of the last encoder self-attention layer.
  double final_encoder_mean() const;
};

// Groups captured maps by (component, layer) and averages d(A) over videos.
// Throws UsageError when there are no captured maps.
DiversityReport layer_diversity_profile(const std::vector<nn::AttentionRecord>& records);

nlohmann::json report_to_json(const DiversityReport& r);
std::string report_to_csv(const DiversityReport& r);  // component,layer,rows,cols,mean_diversity
void write_report(const std::filesystem::path& dir, const DiversityReport& r);

}  // namespace ltp::analysis
