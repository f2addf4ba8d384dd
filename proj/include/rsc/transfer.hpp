#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rsc/archive.hpp"
#include "rsc/binary_io.hpp"
#include "rsc/dataset.hpp"
#include "rsc/network.hpp"
#include "rsc/parallel.hpp"
#include "rsc/training.hpp"

namespace rsc {

// ---------------------------------------------------------------- feature cache

/// Conv-base outputs stored offline, one vector per sample, tagged with the
/// fingerprint of the base (structure and weights) that produced them.
struct FeatureCache {
  std::string base_fingerprint;
  std::size_t width = 0;
  std::vector<Tensor> features;
  std::vector<FiveClassLabel> labels;
  std::vector<std::string> ids;

  std::size_t size() const noexcept { return features.size(); }
  bool empty() const noexcept { return features.empty(); }

  Samples samples(LabelScheme scheme) const {
    Samples s;
    s.inputs = features;
    for (auto l : labels) s.labels.push_back(map_label(l, scheme));
    return s;
  }

  friend bool operator==(const FeatureCache&, const FeatureCache&) = default;
};

/// Runs the conv base once over every (preprocessed) image. Extraction is
/// per-image independent; results are merged in dataset order.
inline FeatureCache extract_features(const Network& base, const Dataset& data, std::size_t workers = 1) {
  if (base.profile.has_head()) throw StateError("extract_features expects a conv base without a head");
  for (const auto& s : data.items) check_input(base, s.image);
  FeatureCache cache;
  cache.base_fingerprint = weights_fingerprint(base);
  cache.width = base.profile.flatten_width();
  cache.features = parallel_map(data.size(), workers, [&](std::size_t i) { return predict(base, data.items[i].image); });
  for (const auto& s : data.items) {
    cache.labels.push_back(s.label);
    cache.ids.push_back(s.id);
  }
  return cache;
}

// File layout (little-endian): "RSCF" | u32 version=1 | u32 len + base
// fingerprint | u32 count | u32 width | per sample: u32 len + id, u8
// five-class label, width x f64.

inline std::string encode_feature_cache(const FeatureCache& c) {
  ByteWriter w;
  w.raw("RSCF");
  w.u32(1);
  w.str(c.base_fingerprint);
  w.u32(static_cast<std::uint32_t>(c.size()));
  w.u32(static_cast<std::uint32_t>(c.width));
  for (std::size_t i = 0; i < c.size(); ++i) {
    w.str(c.ids[i]);
    w.u8(static_cast<std::uint8_t>(c.labels[i]));
    for (double v : c.features[i].data()) w.f64(v);
  }
  return w.bytes();
}

inline FeatureCache decode_feature_cache(std::string bytes, const std::string& src = "feature cache") {
  ByteReader rd(std::move(bytes), src);
  if (rd.raw(4) != "RSCF") throw FormatError(src + ": bad magic");
  if (const auto v = rd.u32(); v != 1) throw FormatError(src + ": unsupported version " + std::to_string(v));
  FeatureCache c;
  c.base_fingerprint = rd.str();
  const std::uint32_t count = rd.u32();
  c.width = rd.u32();
  if (c.width == 0) throw FormatError(src + ": zero feature width");
  for (std::uint32_t i = 0; i < count; ++i) {
    c.ids.push_back(rd.str());
    const std::uint8_t label = rd.u8();
    if (label > 4) throw FormatError(src + ": bad label " + std::to_string(label));
    c.labels.push_back(static_cast<FiveClassLabel>(label));
    rd.require(c.width * 8);
    std::vector<double> v(c.width);
    for (auto& x : v) x = rd.f64();
    c.features.emplace_back(Shape{c.width}, std::move(v));
  }
  if (!rd.at_end()) throw FormatError(src + ": trailing bytes");
  return c;
}

inline void save_feature_cache(const FeatureCache& c, const std::string& path) { write_file(path, encode_feature_cache(c)); }
inline FeatureCache load_feature_cache(const std::string& path) { return decode_feature_cache(read_file(path), path); }

/// Entries of `cache` whose ids appear in `data`, in `data`'s order.
inline FeatureCache select_features(const FeatureCache& cache, const Dataset& data) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < cache.size(); ++i) index[cache.ids[i]] = i;
  FeatureCache out;
  out.base_fingerprint = cache.base_fingerprint;
  out.width = cache.width;
  for (const auto& s : data.items) {
    const auto it = index.find(s.id);
    if (it == index.end()) throw CompatibilityError("feature cache has no entry for sample '" + s.id + "'");
    if (cache.labels[it->second] != s.label)
      throw CompatibilityError("feature cache label for '" + s.id + "' differs from the dataset");
    out.features.push_back(cache.features[it->second]);
    out.labels.push_back(s.label);
    out.ids.push_back(s.id);
  }
  return out;
}

/// Throws unless the cache was produced by exactly this base.
inline void require_cache_matches(const FeatureCache& cache, const Network& base) {
  const auto fp = weights_fingerprint(base);
  if (cache.base_fingerprint != fp)
    throw CompatibilityError("feature cache was produced by base " + cache.base_fingerprint + ", not " + fp);
}

// ---------------------------------------------------------------- head training

struct HeadResult {
  Network head;
  TrainReport report;
};

/// Glorot-initialised head (Dense/ReLU per hidden width, Dense, Softmax)
/// drawn from the config seed; identical seeds give identical heads.
inline Network build_head(std::size_t feature_width, const std::vector<std::size_t>& widths, std::size_t classes,
                          std::uint64_t seed) {
  SeededRng rng(derive_seed(seed, "head-init"));
  return build_network(ArchitectureProfile::head_only(feature_width, widths, classes), rng);
}

inline PhaseOptions head_phase_options(const TrainConfig& cfg) {
  return {cfg.lr_pretrain, cfg.momentum, cfg.batch_size, cfg.epochs_pretrain, cfg.early_stop_train_acc,
          derive_seed(cfg.seed, "head-shuffle"), cfg.workers};
}

inline PhaseOptions finetune_phase_options(const TrainConfig& cfg) {
  return {cfg.lr_finetune, cfg.momentum, cfg.batch_size, cfg.epochs_finetune, cfg.early_stop_train_acc,
          derive_seed(cfg.seed, "finetune-shuffle"), cfg.workers};
}

/// Trains a classifier head on cached base features with the pre-training
/// learning rate and epoch budget.
inline HeadResult train_head_on_cache(const FeatureCache& cache, const std::vector<std::size_t>& head_widths,
                                      LabelScheme scheme, const TrainConfig& cfg, const FeatureCache* test = nullptr) {
  cfg.validate();
  if (cache.empty()) throw RangeError("cannot train a head on an empty feature cache");
  for (const auto& f : cache.features)
    if (f.size() != cache.width) throw ShapeError("feature vector width does not match cache width");
  if (test && test->width != cache.width) throw ShapeError("test cache width differs from train cache width");
  HeadResult r{build_head(cache.width, head_widths, num_classes(scheme), cfg.seed), {}};
  const Samples train = cache.samples(scheme);
  Samples test_samples;
  if (test) test_samples = test->samples(scheme);
  r.report = train_epochs(r.head, train, test ? &test_samples : nullptr, head_phase_options(cfg));
  r.head.head_trained = true;
  return r;
}

// ---------------------------------------------------------------- fine-tuning

/// Resumes training of the unfrozen blocks plus the head at the fine-tuning
/// learning rate. The first `frozen_blocks_finetune` blocks stay bit-exact.
/// Refuses to run on a network whose head was never trained.
inline TrainReport fine_tune(Network& net, const Samples& train, const Samples* test, const TrainConfig& cfg) {
  cfg.validate();
  if (!net.head_trained)
    throw StateError("fine-tuning needs a trained classifier head; train the head on cached features first");
  set_freeze_by_blocks(net, cfg.frozen_blocks_finetune);
  check_samples(net, train);
  if (test) check_samples(net, *test);
  const PhaseOptions opt = finetune_phase_options(cfg);
  if (!cfg.cache_frozen_prefix) return train_epochs(net, train, test, opt);

  // The frozen prefix is a fixed function during this phase, so its outputs
  // are computed once. The suffix then trains exactly as it would in place.
  const std::size_t split = std::min(net.first_trainable(), net.size() - 1);
  auto run_prefix = [&](const Samples& s) {
    Samples out;
    out.labels = s.labels;
    out.inputs = parallel_map(s.size(), cfg.workers, [&](std::size_t i) {
      return net.infer(as_network_input(net, s.inputs[i]), 0, split);
    });
    return out;
  };
  const Samples train_act = run_prefix(train);
  const Samples test_act = test ? run_prefix(*test) : Samples{};
  LayerStack suffix;
  suffix.layers.assign(net.layers.begin() + static_cast<std::ptrdiff_t>(split), net.layers.end());
  suffix.frozen.assign(net.frozen.begin() + static_cast<std::ptrdiff_t>(split), net.frozen.end());
  TrainReport report = train_epochs(suffix, train_act, test ? &test_act : nullptr, opt);
  for (std::size_t i = 0; i < suffix.size(); ++i) net.layers[split + i].state = std::move(suffix.layers[i].state);
  return report;
}

// ---------------------------------------------------------------- pipeline

struct TransferResult {
  Network model;
  TrainReport head_report;
  TrainReport fine_report;
  double head_only_test_accuracy = 0;  // after head training, before fine-tuning
  double test_accuracy = 0;            // after fine-tuning
};

/// Head training on precomputed base features -> assemble -> fine-tune.
/// The caches must hold the base's features of `train` and `test`, in order.
inline TransferResult transfer_from_features(const Network& base, const FeatureCache& train_cache,
                                             const FeatureCache& test_cache, const Dataset& train, const Dataset& test,
                                             LabelScheme scheme, const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw RangeError("transfer needs a non-empty training set");
  require_cache_matches(train_cache, base);
  require_cache_matches(test_cache, base);
  if (train_cache.size() != train.size() || test_cache.size() != test.size())
    throw ShapeError("feature caches do not match the train/test sets");
  HeadResult head = train_head_on_cache(train_cache, cfg.head_widths, scheme, cfg, test.empty() ? nullptr : &test_cache);

  TransferResult r;
  r.head_report = std::move(head.report);
  r.model = assemble(base, head.head);
  const Samples train_s = make_samples(train, scheme);
  const Samples test_s = make_samples(test, scheme);
  const Samples* test_ptr = test.empty() ? nullptr : &test_s;
  if (test_ptr) r.head_only_test_accuracy = evaluate_accuracy(r.model, test_s, cfg.workers);
  r.fine_report = fine_tune(r.model, train_s, test_ptr, cfg);
  if (test_ptr) r.test_accuracy = evaluate_accuracy(r.model, test_s, cfg.workers);
  return r;
}

/// Feature extraction -> head training on the cache -> assemble -> fine-tune.
/// `train` and `test` must already be preprocessed to the base's input size.
inline TransferResult transfer_pipeline(const Network& pretrained, const Dataset& train, const Dataset& test,
                                        LabelScheme scheme, const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw RangeError("transfer needs a non-empty training set");
  const Network base = truncate_to_conv_base(pretrained);
  const FeatureCache train_cache = extract_features(base, train, cfg.workers);
  const FeatureCache test_cache = extract_features(base, test, cfg.workers);
  return transfer_from_features(base, train_cache, test_cache, train, test, scheme, cfg);
}

inline TransferResult transfer_pipeline(const std::string& archive_path, const ArchitectureProfile& input_profile,
                                        const Dataset& train, const Dataset& test, LabelScheme scheme,
                                        const TrainConfig& cfg) {
  const WeightArchive a = read_archive(archive_path);
  return transfer_pipeline(network_from_archive(a, profile_from_archive(a, input_profile)), train, test, scheme, cfg);
}

/// Resizes and mean-normalises every image to the profile's input size.
inline Dataset prepare(const Dataset& data, const ArchitectureProfile& profile) {
  return preprocess_all(data, profile.height, profile.width);
}

}  // namespace rsc
