#pragma once

#include <filesystem>
#include <vector>

#include "json.hpp"
#include "ltp/downstream.hpp"
#include "ltp/pretext.hpp"
#include "ltp/synthesis.hpp"

// Dataset directories: dataset_manifest.json, samples.bin (float32 LE feature
// rows, samples back to back) and labels.jsonl (one record per sample with its
// byte offset and annotations).
namespace ltp::dataset_io {

struct PretextDataset {
  std::vector<synthesis::SynthesizedSample> samples;
  std::vector<pretext::Condition> conditions;
  nlohmann::json meta = nlohmann::json::object();
};

void save_pretext(const std::filesystem::path& dir, const PretextDataset& ds);
PretextDataset load_pretext(const std::filesystem::path& dir);

void save_detection(const std::filesystem::path& dir, const downstream::DetectionDataset& ds,
                    const nlohmann::json& meta);
downstream::DetectionDataset load_detection(const std::filesystem::path& dir, nlohmann::json* meta = nullptr);

}  // namespace ltp::dataset_io
