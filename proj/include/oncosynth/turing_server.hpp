#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "oncosynth/turing.hpp"
#include "oncosynth/volume.hpp"

namespace httplib {
class Server;
}

namespace oncosynth::turing {

enum class SliceAxis { Axial, Coronal, Sagittal };
SliceAxis axis_from_string(std::string_view s);

/// Grayscale 8-bit PNG of the slice through `at`, windowed to `w` and
/// enlarged by nearest-neighbour `scale`.
std::string render_slice_png(const Volume& hu, SliceAxis axis, const std::array<int, 3>& at, HuWindow w, int scale = 4);

/// Voxel nearest to the label's centroid.
std::array<int, 3> label_centroid(const LabelMap& m);

/// HTTP JSON API over a SessionStore. Case images are read from the pool
/// directory on first use and cached.
class TuringServer {
 public:
  TuringServer(SessionStore& store, std::filesystem::path pool_dir, HuWindow window = HuWindow::abdomen(),
               std::filesystem::path static_dir = {});
  ~TuringServer();

  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks until stop().
  bool listen();
  void stop();

 private:
  struct Loaded {
    Volume image;
    std::array<int, 3> position{};
  };
  const Loaded& load(const TuringCase& c);
  void routes();

  SessionStore& store_;
  std::filesystem::path pool_dir_;
  HuWindow window_;
  std::filesystem::path static_dir_;
  std::unique_ptr<httplib::Server> http_;
  std::mutex cache_mu_;
  std::map<std::string, Loaded> cache_;
};

}  // namespace oncosynth::turing
