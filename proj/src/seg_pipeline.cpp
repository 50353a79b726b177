#include "oncosynth/seg_pipeline.hpp"

#include <cmath>
#include <numeric>

#include "oncosynth/crop.hpp"
#include "oncosynth/losses.hpp"
#include "oncosynth/rng.hpp"

namespace oncosynth {

FieldFn generator_fn(const nn::UNet& g) {
  return [net = g](const Volume& x) mutable { return net.forward(nn::Tensor::from_grid(x.data)).to_grid(); };
}

ProbFn segmenter_fn(const nn::UNet& s) {
  return [net = s](const Volume& x) mutable { return sigmoid(net.forward(nn::Tensor::from_grid(x.data))); };
}

TrainCase StreamItem::as_train_case() const {
  Grid3<std::uint8_t> g(organ.shape());
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = tumor.data[i] ? kTumorClass : (organ.data[i] ? kOrganClass : 0);
  }
  return {image, LabelMap(std::move(g), organ.spacing, {0, kOrganClass, kTumorClass})};
}

SynthStream::SynthStream(std::vector<TrainCase> unlabeled, FieldFn g, ProbFn s, StreamConfig cfg, VerdictLog* verdicts,
                         std::ostream* skip_log)
    : pool_(std::move(unlabeled)), g_(std::move(g)), s_(std::move(s)), cfg_(cfg), verdicts_(verdicts),
      skip_log_(skip_log) {
  if (pool_.empty()) fail(ErrorCode::InsufficientPool, "synthesis stream needs unlabeled cases");
  if (!(cfg_.threshold > 0.0 && cfg_.threshold <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "quality threshold must be in (0, 1]");
  }
  cfg_.filter.validate();
  cfg_.mask_size.validate();
  if (cfg_.prefetch > 0) thread_ = std::thread([this] { worker(); });
}

SynthStream::~SynthStream() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

std::size_t SynthStream::skipped() const {
  std::lock_guard lock(mu_);
  return skipped_;
}

StreamItem SynthStream::produce_one(std::uint64_t draw, bool& skipped) {
  skipped = false;
  Rng rng(Rng::derive(cfg_.seed, draw));
  const auto& c = pool_[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(pool_.size()) - 1))];
  const auto mask_seed = rng.fork();
  auto note_skip = [&](const std::string& reason) {
    skipped = true;
    if (skip_log_) {
      std::lock_guard lock(mu_);
      *skip_log_ << nlohmann::json{{"skipped", c.image.id}, {"draw", draw}, {"reason", reason}}.dump() << '\n';
    }
    return StreamItem{};
  };
  if (!c.has_organ()) return note_skip("empty organ label");

  Grid3<std::uint8_t> og(c.labels.shape());
  for (std::size_t i = 0; i < og.size(); ++i) og[i] = c.labels.data[i] ? 1 : 0;
  LabelMap organ(std::move(og), c.labels.spacing);
  TumorMask m;
  try {
    m = sample_tumor_mask(organ, cfg_.mask_size, mask_seed, cfg_.sampler, c.image.id);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::OrganTooSmall) throw;
    return note_skip(e.what());
  }
  const GeneratorOutput gout(g_(c.image));
  auto xhat = apply_synthesis(c.image, m, gout, cfg_.filter);
  const auto probs = s_(xhat);
  auto [chosen, verdict] = gate(c.image, xhat, probs, m.mask, cfg_.threshold);
  verdict.case_id = c.image.id + "#" + std::to_string(draw);
  if (verdicts_) verdicts_->append(verdict);

  StreamItem item;
  item.draw = draw;
  item.image = std::move(chosen);
  item.tumor = verdict.passed ? m.mask : LabelMap(Grid3<std::uint8_t>(organ.shape(), 0), organ.spacing);
  item.organ = std::move(organ);
  item.verdict = std::move(verdict);
  return item;
}

StreamItem SynthStream::produce() {
  // Bounded so a pool of unusable organs cannot spin forever.
  const std::size_t limit = 16 * pool_.size() + 16;
  for (std::size_t k = 0; k < limit; ++k) {
    bool skipped = false;
    auto item = produce_one(draw_++, skipped);
    if (skipped) {
      std::lock_guard lock(mu_);
      ++skipped_;
      continue;
    }
    if (!item.verdict.passed && cfg_.failed == FailedCasePolicy::Drop) continue;
    return item;
  }
  fail(ErrorCode::InsufficientPool, "synthesis stream produced nothing usable after " + std::to_string(limit) + " draws");
}

void SynthStream::worker() {
  for (;;) {
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return stop_ || queue_.size() < static_cast<std::size_t>(cfg_.prefetch); });
      if (stop_) return;
    }
    try {
      auto item = produce();
      std::lock_guard lock(mu_);
      queue_.push_back(std::move(item));
    } catch (...) {
      std::lock_guard lock(mu_);
      error_ = std::current_exception();
      cv_.notify_all();
      return;
    }
    cv_.notify_all();
  }
}

StreamItem SynthStream::next() {
  if (cfg_.prefetch <= 0) return produce();
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return !queue_.empty() || error_; });
  if (queue_.empty()) std::rethrow_exception(error_);
  auto item = std::move(queue_.front());
  queue_.pop_front();
  lock.unlock();
  cv_.notify_all();
  return item;
}

void SegTrainConfig::validate() const {
  if (ratio_labeled < 0 || ratio_synthetic < 0 || ratio_labeled + ratio_synthetic == 0) {
    fail(ErrorCode::InvalidArgument, "mix ratio components must be >= 0 and not both 0");
  }
  trainer_settings().validate();
}

int SegTrainConfig::labeled_per_batch() const {
  if (ratio_synthetic == 0) return batch;
  const double share = static_cast<double>(ratio_labeled) / (ratio_labeled + ratio_synthetic);
  return static_cast<int>(std::lround(share * batch));
}

SegTrainerSettings SegTrainConfig::trainer_settings() const {
  SegTrainerSettings s;
  s.lr = lr;
  s.weight_decay = weight_decay;
  s.batch = batch;
  s.labeled_per_batch = labeled_per_batch();
  s.epochs = epochs;
  s.patch = patch;
  s.net = net;
  s.tumor_centered_fraction = tumor_centered_fraction;
  s.flip_augment = flip_augment;
  s.seed = seed;
  s.guard = guard;
  return s;
}

SegTrainResult train_segmentation(const DatasetPool& pool, const FieldFn& g, const ProbFn& s, const SegTrainConfig& cfg,
                                  std::ostream* log, VerdictLog* verdicts) {
  cfg.validate();
  pool.validate();
  auto settings = cfg.trainer_settings();
  if (pool.unlabeled.empty() || settings.labeled_per_batch == settings.batch) {
    settings.labeled_per_batch = settings.batch;
    return run_seg_training(pool.labeled, settings, nullptr, log);
  }
  auto sc = cfg.stream;
  sc.seed = Rng::derive(cfg.seed, 0x5EED);
  SynthStream stream(pool.unlabeled, g, s, sc, verdicts, log);
  SampleSource source = [&stream] { return stream.next().as_train_case(); };
  return run_seg_training(pool.labeled, settings, &source, log);
}

std::vector<int> window_starts(int n, int w, double overlap) {
  if (w < 1 || n < 1) fail(ErrorCode::InvalidArgument, "window and volume extents must be >= 1");
  if (!(overlap >= 0.0 && overlap < 1.0)) fail(ErrorCode::InvalidArgument, "overlap must be in [0, 1)");
  if (n <= w) return {0};
  const int stride = std::max(1, static_cast<int>(std::floor(w * (1.0 - overlap))));
  std::vector<int> out;
  for (int p = 0; p + w < n; p += stride) out.push_back(p);
  out.push_back(n - w);
  return out;
}

InferResult infer(nn::UNet& model, const Volume& v, const InferConfig& cfg) {
  const auto w = cfg.window;
  const int gran = model.config().granularity();
  if (!w.valid() || w.nx % gran || w.ny % gran || w.nz % gran) {
    fail(ErrorCode::ShapeMismatch, "window dims must be positive multiples of " + std::to_string(gran));
  }
  const auto s = v.shape();
  const Shape3 padded{std::max(s.nx, w.nx), std::max(s.ny, w.ny), std::max(s.nz, w.nz)};
  const auto src = padded == s ? v.data : extract_box(v.data, {0, 0, 0}, padded, 0.0f);

  Grid3<double> sum(padded, 0.0);
  Grid3<std::uint16_t> hits(padded, 0);
  for (int z0 : window_starts(padded.nz, w.nz, cfg.overlap))
    for (int y0 : window_starts(padded.ny, w.ny, cfg.overlap))
      for (int x0 : window_starts(padded.nx, w.nx, cfg.overlap)) {
        const auto patch = extract_box(src, {x0, y0, z0}, w, 0.0f);
        const auto p = sigmoid(model.forward(nn::Tensor::from_grid(patch)));
        for (int z = 0; z < w.nz; ++z)
          for (int y = 0; y < w.ny; ++y)
            for (int x = 0; x < w.nx; ++x) {
              sum(x0 + x, y0 + y, z0 + z) += p(x, y, z);
              ++hits(x0 + x, y0 + y, z0 + z);
            }
      }

  InferResult out;
  out.probs = Grid3<float>(s);
  Grid3<std::uint8_t> lab(s, 0);
  for (int z = 0; z < s.nz; ++z)
    for (int y = 0; y < s.ny; ++y)
      for (int x = 0; x < s.nx; ++x) {
        const float p = static_cast<float>(sum(x, y, z) / hits(x, y, z));
        out.probs(x, y, z) = p;
        lab(x, y, z) = p >= cfg.threshold ? 1 : 0;
      }
  out.labels = LabelMap(std::move(lab), v.spacing);
  return out;
}

}  // namespace oncosynth
