#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "oncosynth/nn/classifier.hpp"
#include "oncosynth/nn/unet.hpp"

namespace oncosynth::nn {

// Binary layout: "ONCOCKPT" | u32 version | u64 header bytes | JSON header |
// float32 little-endian parameter payload in header order. The header names
// the model kind, its architecture, the producing config hash and a hash of
// the parameter values.

struct CheckpointMeta {
  std::string kind;         // "segmenter", "generator", "classifier"
  std::string config_hash;
  nlohmann::json extra = nlohmann::json::object();
};

void save_unet(const std::filesystem::path& path, const UNet& net, const CheckpointMeta& meta);
UNet load_unet(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

void save_classifier(const std::filesystem::path& path, const PatchClassifier& net, const CheckpointMeta& meta);
PatchClassifier load_classifier(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

nlohmann::json to_json(const UNetConfig& c);
UNetConfig unet_config_from_json(const nlohmann::json& j);

}  // namespace oncosynth::nn
