#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "oncosynth/phantom.hpp"
#include "oncosynth/volume.hpp"

namespace oncosynth {

/// Normalised image with its combined label map ({0, organ=1, tumor=2}).
struct TrainCase {
  Volume image;
  LabelMap labels;

  bool has_tumor() const { return labels.count(kTumorClass) > 0; }
  bool has_organ() const { return labels.count_nonzero() > 0; }
  LabelMap tumor() const { return labels.select(kTumorClass); }
};

/// Labeled cases carry organ and tumor labels; unlabeled cases only organ labels.
struct DatasetPool {
  std::vector<TrainCase> labeled;
  std::vector<TrainCase> unlabeled;

  /// No id appears in both pools; every unlabeled case has an organ label.
  void validate() const;
};

enum class Split { Labeled, Unlabeled, Test };
std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

struct PhantomDatasetSpec {
  int labeled = 20;
  int unlabeled = 200;
  int test = 30;
  std::uint64_t seed = 0;
  PhantomConfig tumor_cases{};    // used for labeled and test cases
  PhantomConfig healthy_cases = [] {
    PhantomConfig c;
    c.tumor_count_lo = 0;
    c.tumor_count_hi = 0;
    return c;
  }();
};

struct PhantomDataset {
  DatasetPool pool;
  std::vector<TrainCase> test;
};

/// Deterministic in `spec`; case ids are "<split>-NNNN".
PhantomDataset make_phantom_dataset(const PhantomDatasetSpec& spec, HuWindow window = HuWindow::abdomen());

/// Writes HU volumes with "organ" and (for tumor splits) "tumor" labels plus
/// a manifest.json listing every case and its split.
void write_phantom_dataset(const std::filesystem::path& dir, const PhantomDatasetSpec& spec,
                           HuWindow window = HuWindow::abdomen());

struct LoadedDataset {
  DatasetPool pool;
  std::vector<TrainCase> test;
  HuWindow window;
};

/// Reads a manifest written by write_phantom_dataset and normalises every case.
LoadedDataset load_dataset(const std::filesystem::path& manifest);

}  // namespace oncosynth
