#include "oncosynth/turing_server.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>

#include "httplib.h"
#include "oncosynth/volume_io.hpp"

namespace oncosynth::turing {

using nlohmann::json;

SliceAxis axis_from_string(std::string_view s) {
  if (s == "axial") return SliceAxis::Axial;
  if (s == "coronal") return SliceAxis::Coronal;
  if (s == "sagittal") return SliceAxis::Sagittal;
  fail(ErrorCode::InvalidArgument, "axis must be axial, coronal or sagittal");
}

namespace {

void write_png_chunk(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), len);
}

void flush_png(png_structp) {}

std::string encode_gray(const std::vector<std::uint8_t>& pixels, int width, int height) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) fail(ErrorCode::Io, "png: cannot create writer");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(ErrorCode::Io, "png: cannot create info");
  }
  std::string out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::Io, "png: encoding failed");
  }
  png_set_write_fn(png, &out, write_png_chunk, flush_png);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < height; ++r) {
    png_write_row(png, const_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(r) * width));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void send_error(httplib::Response& res, int status, const std::string& msg) {
  res.status = status;
  res.set_content(json{{"error", msg}}.dump(), "application/json");
}

int status_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::UnknownCase: return 404;
    case ErrorCode::SessionClosed: return 409;
    case ErrorCode::InvalidArgument: return 400;
    default: return 500;
  }
}

}  // namespace

std::array<int, 3> label_centroid(const LabelMap& m) {
  const auto s = m.shape();
  double cx = 0, cy = 0, cz = 0;
  std::size_t n = 0;
  for (int z = 0; z < s.nz; ++z)
    for (int y = 0; y < s.ny; ++y)
      for (int x = 0; x < s.nx; ++x)
        if (m.data(x, y, z)) {
          cx += x;
          cy += y;
          cz += z;
          ++n;
        }
  if (n == 0) fail(ErrorCode::EmptyMask, "label_centroid: empty label");
  const double k = 1.0 / static_cast<double>(n);
  return {static_cast<int>(std::lround(cx * k)), static_cast<int>(std::lround(cy * k)),
          static_cast<int>(std::lround(cz * k))};
}

std::string render_slice_png(const Volume& hu, SliceAxis axis, const std::array<int, 3>& at, HuWindow w, int scale) {
  if (scale < 1) fail(ErrorCode::InvalidArgument, "scale must be >= 1");
  if (!(w.lo < w.hi)) fail(ErrorCode::InvalidArgument, "window lo must be < hi");
  const auto s = hu.shape();
  int width = 0, height = 0;
  switch (axis) {
    case SliceAxis::Axial: width = s.nx, height = s.ny; break;
    case SliceAxis::Coronal: width = s.nx, height = s.nz; break;
    case SliceAxis::Sagittal: width = s.ny, height = s.nz; break;
  }
  const int x0 = std::clamp(at[0], 0, s.nx - 1), y0 = std::clamp(at[1], 0, s.ny - 1), z0 = std::clamp(at[2], 0, s.nz - 1);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(width) * scale * height * scale);
  const int W = width * scale;
  for (int r = 0; r < height * scale; ++r) {
    // Rows run top to bottom; flip so that +y / +z point up.
    const int v = height - 1 - r / scale;
    for (int c = 0; c < W; ++c) {
      const int u = c / scale;
      float val = 0.0f;
      switch (axis) {
        case SliceAxis::Axial: val = hu.data(u, v, z0); break;
        case SliceAxis::Coronal: val = hu.data(u, y0, v); break;
        case SliceAxis::Sagittal: val = hu.data(x0, u, v); break;
      }
      const double t = std::clamp((val - w.lo) / (w.hi - w.lo), 0.0, 1.0);
      px[static_cast<std::size_t>(r) * W + c] = static_cast<std::uint8_t>(std::lround(255.0 * t));
    }
  }
  return encode_gray(px, W, height * scale);
}

TuringServer::TuringServer(SessionStore& store, std::filesystem::path pool_dir, HuWindow window,
                           std::filesystem::path static_dir)
    : store_(store), pool_dir_(std::move(pool_dir)), window_(window), static_dir_(std::move(static_dir)),
      http_(std::make_unique<httplib::Server>()) {
  routes();
}

TuringServer::~TuringServer() { stop(); }

int TuringServer::bind(const std::string& host, int port) {
  if (port == 0) return http_->bind_to_any_port(host);
  if (!http_->bind_to_port(host, port)) fail(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  return port;
}

bool TuringServer::listen() { return http_->listen_after_bind(); }

void TuringServer::stop() {
  if (http_ && http_->is_running()) http_->stop();
}

const TuringServer::Loaded& TuringServer::load(const TuringCase& c) {
  std::lock_guard lock(cache_mu_);
  auto it = cache_.find(c.id);
  if (it != cache_.end()) return it->second;
  auto rec = load_case(pool_dir_ / c.sidecar);
  auto t = rec.labels.find("tumor");
  if (t == rec.labels.end()) fail(ErrorCode::CorruptFile, c.sidecar + ": missing tumor label");
  Loaded l{std::move(rec.image), label_centroid(t->second)};
  return cache_.emplace(c.id, std::move(l)).first->second;
}

void TuringServer::routes() {
  auto& s = *http_;
  auto guarded = [](auto fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        send_error(res, status_for(e.code()), e.what());
      } catch (const json::exception& e) {
        send_error(res, 400, std::string("bad request body: ") + e.what());
      }
    };
  };
  auto send = [](httplib::Response& res, const json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  };

  s.Post("/api/sessions", guarded([this, send](const httplib::Request& req, httplib::Response& res) {
           const auto body = json::parse(req.body);
           const auto id = store_.create(body.at("reader").get<std::string>(),
                                         level_from_string(body.at("level").get<std::string>()));
           send(res, store_.snapshot(id).summary(), 201);
         }));
  s.Get(R"(/api/sessions/([A-Za-z0-9]+))", guarded([this, send](const httplib::Request& req, httplib::Response& res) {
          send(res, store_.snapshot(req.matches[1]).summary());
        }));
  s.Get(R"(/api/sessions/([A-Za-z0-9]+)/next)",
        guarded([this, send](const httplib::Request& req, httplib::Response& res) {
          const std::string sid = req.matches[1];
          const auto snap = store_.snapshot(sid);
          const auto next = store_.next(sid);
          json j = {{"done", !next.has_value()}, {"answered", snap.answered()}, {"total", snap.order.size()}};
          if (next) {
            const auto& c = store_.find_case(*next);
            j["case"] = client_view(c, load(c).position);
          }
          send(res, j);
        }));
  s.Get(R"(/api/sessions/([A-Za-z0-9]+)/cases/([A-Za-z0-9]+))",
        guarded([this, send](const httplib::Request& req, httplib::Response& res) {
          const auto snap = store_.snapshot(req.matches[1]);
          const std::string cid = req.matches[2];
          if (std::find(snap.order.begin(), snap.order.end(), cid) == snap.order.end()) {
            fail(ErrorCode::UnknownCase, "case '" + cid + "' is not in this session");
          }
          const auto& c = store_.find_case(cid);
          send(res, client_view(c, load(c).position));
        }));
  s.Post(R"(/api/sessions/([A-Za-z0-9]+)/verdicts)",
         guarded([this, send](const httplib::Request& req, httplib::Response& res) {
           const std::string sid = req.matches[1];
           const auto body = json::parse(req.body);
           const bool changed = store_.record(sid, body.at("case_id").get<std::string>(),
                                              verdict_from_string(body.at("verdict").get<std::string>()));
           auto j = store_.snapshot(sid).summary();
           j["recorded"] = changed;
           send(res, j);
         }));
  s.Post(R"(/api/sessions/([A-Za-z0-9]+)/close)",
         guarded([this, send](const httplib::Request& req, httplib::Response& res) {
           store_.close(req.matches[1]);
           send(res, store_.snapshot(req.matches[1]).summary());
         }));
  s.Get(R"(/api/cases/([A-Za-z0-9]+)/slices/(axial|coronal|sagittal)\.png)",
        guarded([this](const httplib::Request& req, httplib::Response& res) {
          const auto& l = load(store_.find_case(req.matches[1]));
          res.set_content(render_slice_png(l.image, axis_from_string(std::string(req.matches[2])), l.position, window_),
                          "image/png");
        }));
  s.Get("/api/report", guarded([this, send](const httplib::Request& req, httplib::Response& res) {
          const auto g = grouping_from_string(req.has_param("grouping") ? req.get_param_value("grouping") : "total");
          send(res, to_json(report(store_.sessions(), store_.cases(), g), g));
        }));
  if (!static_dir_.empty()) s.set_mount_point("/", static_dir_.string());
}

}  // namespace oncosynth::turing
