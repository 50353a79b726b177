#include "oncosynth/metrics.hpp"

#include <algorithm>
#include <sstream>

#include "oncosynth/morphology.hpp"
#include "oncosynth/rng.hpp"
#include "oncosynth/tumor_mask.hpp"

namespace oncosynth {

namespace {

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

nlohmann::json to_json(const BucketSensitivity& b) {
  return {{"instances", b.instances}, {"detected", b.detected}, {"sensitivity", opt(b.sensitivity)}};
}

}  // namespace

ConfusionMetrics confusion_metrics(const ConfusionCounts& c) {
  ConfusionMetrics m;
  m.sensitivity = ratio(c.tp, c.tp + c.fn);
  m.specificity = ratio(c.tn, c.tn + c.fp);
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = m.sensitivity;
  if (m.precision && m.recall && *m.precision + *m.recall > 0.0) {
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  }
  return m;
}

double dice(const LabelMap& pre, const LabelMap& gro) {
  require_same_shape(pre.shape(), gro.shape(), "dice");
  std::size_t a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < pre.data.size(); ++i) {
    const bool p = pre.data[i] != 0, g = gro.data[i] != 0;
    a += p;
    b += g;
    both += p && g;
  }
  if (a + b == 0) return 100.0;
  return 200.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

std::vector<bool> detect_instances(const LabelMap& pred, const std::vector<LabelMap>& instances) {
  std::vector<bool> hit(instances.size(), false);
  if (instances.empty()) return hit;
  Grid3<int> owner(pred.shape(), -1);
  for (std::size_t k = 0; k < instances.size(); ++k) {
    require_same_shape(pred.shape(), instances[k].shape(), "detect_instances");
    for (std::size_t i = 0; i < owner.size(); ++i) {
      if (!instances[k].data[i]) continue;
      if (owner[i] >= 0) fail(ErrorCode::InvalidArgument, "ground-truth instances overlap");
      owner[i] = static_cast<int>(k);
    }
  }
  for (std::size_t i = 0; i < owner.size(); ++i) {
    if (pred.data[i] && owner[i] >= 0) hit[static_cast<std::size_t>(owner[i])] = true;
  }
  return hit;
}

SizeStrata stratify_small(const std::vector<double>& d) {
  SizeStrata s;
  for (std::size_t i = 0; i < d.size(); ++i) (d[i] < kSmallTumorDiameterMm ? s.small : s.large).push_back(i);
  return s;
}

SizeStrata stratify_small(const std::vector<LabelMap>& instances) {
  std::vector<double> d;
  d.reserve(instances.size());
  for (const auto& m : instances) d.push_back(measure_diameter(m));
  return stratify_small(d);
}

std::vector<std::vector<std::string>> kfold_split(const std::vector<std::string>& ids, int k, std::uint64_t seed) {
  if (k < 1) fail(ErrorCode::InvalidArgument, "k must be >= 1");
  if (static_cast<std::size_t>(k) > ids.size()) {
    fail(ErrorCode::InvalidArgument, "k = " + std::to_string(k) + " exceeds " + std::to_string(ids.size()) + " cases");
  }
  auto order = ids;
  std::sort(order.begin(), order.end());
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::string>> folds(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < order.size(); ++i) folds[i % folds.size()].push_back(order[i]);
  return folds;
}

CaseEval evaluate_case(const std::string& id, const LabelMap& pred, const LabelMap& gt) {
  require_same_shape(pred.shape(), gt.shape(), "evaluate_case");
  CaseEval e;
  e.id = id;
  e.dice = dice(pred, gt);
  e.gt_positive = !gt.empty();
  e.pred_positive = !pred.empty();
  const auto inst = split_instances(gt);
  const auto hits = detect_instances(pred, inst);
  for (std::size_t k = 0; k < inst.size(); ++k) {
    InstanceResult r;
    r.diameter_mm = measure_diameter(inst[k]);
    r.voxels = inst[k].count_nonzero();
    r.small = r.diameter_mm < kSmallTumorDiameterMm;
    r.detected = hits[k];
    e.instances.push_back(r);
  }
  for (const auto& comp : split_instances(pred)) {
    bool touches = false;
    for (std::size_t i = 0; i < comp.data.size() && !touches; ++i) touches = comp.data[i] && gt.data[i];
    if (!touches) ++e.false_positive_components;
  }
  return e;
}

MetricsReport aggregate(std::vector<CaseEval> cases) {
  MetricsReport r;
  double dsum = 0.0;
  for (const auto& c : cases) {
    dsum += c.dice;
    if (c.gt_positive) {
      (c.pred_positive ? r.volume.tp : r.volume.fn) += 1;
    } else {
      (c.pred_positive ? r.volume.fp : r.volume.tn) += 1;
    }
    for (const auto& i : c.instances) {
      (i.detected ? r.instance.tp : r.instance.fn) += 1;
      auto& b = i.small ? r.small : r.large;
      ++b.instances;
      if (i.detected) ++b.detected;
    }
    r.instance.fp += c.false_positive_components;
  }
  if (!cases.empty()) r.dice = dsum / static_cast<double>(cases.size());
  r.volume_metrics = confusion_metrics(r.volume);
  r.instance_metrics = confusion_metrics(r.instance);
  r.instance_metrics.specificity.reset();  // no true negatives at instance level
  r.instance_metrics.accuracy.reset();
  r.small.sensitivity = ratio(r.small.detected, r.small.instances);
  r.large.sensitivity = ratio(r.large.detected, r.large.instances);
  r.cases = std::move(cases);
  return r;
}

nlohmann::json to_json(const ConfusionCounts& c) {
  return {{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}, {"n", c.total()}};
}

nlohmann::json to_json(const ConfusionMetrics& m) {
  return {{"sensitivity", opt(m.sensitivity)}, {"specificity", opt(m.specificity)},
          {"accuracy", opt(m.accuracy)},       {"precision", opt(m.precision)},
          {"recall", opt(m.recall)},           {"f1", opt(m.f1)}};
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json per_case = nlohmann::json::array();
  for (const auto& c : r.cases) {
    nlohmann::json inst = nlohmann::json::array();
    for (const auto& i : c.instances) {
      inst.push_back({{"diameter_mm", i.diameter_mm}, {"voxels", i.voxels}, {"small", i.small}, {"detected", i.detected}});
    }
    per_case.push_back({{"id", c.id},
                        {"dice", c.dice},
                        {"gt_positive", c.gt_positive},
                        {"pred_positive", c.pred_positive},
                        {"false_positive_components", c.false_positive_components},
                        {"instances", inst}});
  }
  return {{"cases", r.cases.size()},
          {"dice", r.dice},
          {"volume", {{"counts", to_json(r.volume)}, {"metrics", to_json(r.volume_metrics)}}},
          {"instance", {{"counts", to_json(r.instance)}, {"metrics", to_json(r.instance_metrics)}}},
          {"by_size", {{"small", to_json(r.small)}, {"large", to_json(r.large)}}},
          {"per_case", per_case}};
}

std::string to_csv(const MetricsReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "id,dice,gt_positive,pred_positive,instances,detected,small,small_detected,fp_components\n";
  for (const auto& c : r.cases) {
    std::size_t det = 0, sm = 0, smd = 0;
    for (const auto& i : c.instances) {
      det += i.detected;
      sm += i.small;
      smd += i.small && i.detected;
    }
    os << c.id << ',' << c.dice << ',' << c.gt_positive << ',' << c.pred_positive << ',' << c.instances.size() << ','
       << det << ',' << sm << ',' << smd << ',' << c.false_positive_components << '\n';
  }
  return os.str();
}

}  // namespace oncosynth
