#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rsc/dataset.hpp"
#include "rsc/error.hpp"
#include "rsc/labels.hpp"
#include "rsc/loss.hpp"
#include "rsc/metrics.hpp"
#include "rsc/network.hpp"
#include "rsc/parallel.hpp"

namespace rsc {

/// Hyperparameters of the pre-train / fine-tune procedure.
struct TrainConfig {
  double lr_pretrain = 0.001;
  double lr_finetune = 0.0005;
  std::size_t epochs_pretrain = 50;
  std::size_t epochs_finetune = 100;
  std::size_t batch_size = 32;
  double momentum = 0.0;
  double early_stop_train_acc = 0.99;
  std::size_t frozen_blocks_finetune = 2;
  std::vector<std::size_t> head_widths{512, 256};
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  /// Run the frozen prefix once per image during fine-tuning instead of every
  /// epoch. Results are bit-identical either way.
  bool cache_frozen_prefix = true;

  void validate() const {
    if (!(lr_pretrain > 0.0) || !(lr_finetune > 0.0)) throw RangeError("learning rates must be positive");
    if (batch_size == 0) throw RangeError("batch size must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw RangeError("momentum must lie in [0, 1)");
    if (!(early_stop_train_acc > 0.0 && early_stop_train_acc <= 1.0))
      throw RangeError("early-stop accuracy must lie in (0, 1]");
    for (auto w : head_widths)
      if (w == 0) throw RangeError("head widths must be positive");
  }
};

/// Inputs (already preprocessed) with class indices under one label scheme.
struct Samples {
  std::vector<Tensor> inputs;
  std::vector<std::size_t> labels;
  std::size_t size() const noexcept { return inputs.size(); }
  bool empty() const noexcept { return inputs.empty(); }
};

inline Samples make_samples(const Dataset& data, LabelScheme scheme) {
  Samples s;
  s.inputs.reserve(data.size());
  for (const auto& item : data.items) {
    s.inputs.push_back(item.image);
    s.labels.push_back(map_label(item.label, scheme));
  }
  return s;
}

// ---------------------------------------------------------------- report

enum class StopReason { EpochsExhausted, EarlyStop };

inline const char* to_string(StopReason r) { return r == StopReason::EarlyStop ? "early_stop" : "epochs_exhausted"; }

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0;
  double train_accuracy = 0;
  std::optional<double> test_accuracy;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  StopReason stop = StopReason::EpochsExhausted;
  friend bool operator==(const TrainReport&, const TrainReport&) = default;
};

namespace detail {
inline std::string epoch_rows(const TrainReport& r, std::size_t epoch_offset) {
  std::string out;
  for (const auto& e : r.epochs)
    out += std::to_string(e.epoch + epoch_offset) + "," + fixed6(e.train_loss) + "," + fixed6(e.train_accuracy) + "," +
           (e.test_accuracy ? fixed6(*e.test_accuracy) : std::string()) + "\n";
  return out;
}
}  // namespace detail

/// `epoch,train_loss,train_acc,test_acc` rows then `# stop=<reason>`. An
/// empty test_acc field means no test set was evaluated.
inline std::string report_csv(const TrainReport& r) {
  return "epoch,train_loss,train_acc,test_acc\n" + detail::epoch_rows(r, 0) + "# stop=" + to_string(r.stop) + "\n";
}

/// Head phase rows followed by fine-tune rows with continued epoch numbers.
inline std::string report_csv(const TrainReport& head, const TrainReport& fine) {
  return "epoch,train_loss,train_acc,test_acc\n" + detail::epoch_rows(head, 0) +
         detail::epoch_rows(fine, head.epochs.size()) + "# head_stop=" + to_string(head.stop) +
         "\n# stop=" + to_string(fine.stop) + "\n";
}

// ---------------------------------------------------------------- SGD

/// Parameter gradients (or velocities) for every layer of a stack; entries of
/// parameterless layers stay empty.
using ParamGrads = std::vector<Gradients>;

inline ParamGrads zero_param_grads(const LayerStack& net) {
  ParamGrads g(net.size());
  for (std::size_t i = 0; i < net.size(); ++i)
    if (net.layers[i].spec.has_parameters()) {
      g[i].dW = Tensor(net.layers[i].state.weights.shape());
      g[i].db = Tensor(net.layers[i].state.bias.shape());
    }
  return g;
}

/// v <- momentum * v - lr * g ; w <- w + v, for unfrozen layers only.
inline void sgd_step(LayerStack& net, const ParamGrads& grads, double lr, double momentum, ParamGrads& velocity) {
  if (grads.size() != net.size() || velocity.size() != net.size())
    throw ShapeError("gradient list does not match the layer stack");
  for (std::size_t i = 0; i < net.size(); ++i) {
    auto& layer = net.layers[i];
    if (!layer.spec.has_parameters() || net.frozen[i]) continue;
    auto update = [&](Tensor& w, const Tensor& g, Tensor& v) {
      if (g.shape() != w.shape() || v.shape() != w.shape())
        throw ShapeError("gradient for '" + layer.name + "' has shape " + shape_str(g.shape()) + ", expected " +
                         shape_str(w.shape()));
      for (std::size_t k = 0; k < w.size(); ++k) {
        v[k] = momentum * v[k] - lr * g[k];
        w[k] += v[k];
      }
    };
    update(layer.state.weights, grads[i].dW, velocity[i].dW);
    update(layer.state.bias, grads[i].db, velocity[i].db);
  }
}

// ---------------------------------------------------------------- loop

struct PhaseOptions {
  double lr = 0.001;
  double momentum = 0.0;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  double early_stop_train_acc = 0.99;
  std::uint64_t shuffle_seed = 1;
  std::size_t workers = 1;
};

/// Runs forward + fused softmax/cross-entropy backward for one sample and
/// adds the parameter gradients of trainable layers into `acc`. Returns the
/// sample loss; `correct` reports whether the argmax matched.
inline double accumulate_sample(LayerStack& net, const Tensor& x, std::size_t label, ParamGrads& acc, bool& correct) {
  if (net.layers.empty() || net.layers.back().spec.kind != LayerKind::Softmax)
    throw StateError("training requires a stack ending in Softmax");
  const Tensor probs = net.forward(x);
  correct = argmax(probs) == label;
  const double loss = cross_entropy(probs, label);
  const std::size_t first = net.first_trainable();
  Tensor dy = softmax_cross_entropy_grad(probs, label);
  for (std::size_t i = net.size() - 1; i-- > first;) {
    const auto& layer = net.layers[i];
    const bool need_params = layer.spec.has_parameters() && !net.frozen[i];
    Gradients g = layer.backward(dy, i > first, need_params);
    if (need_params) {
      for (std::size_t k = 0; k < g.dW.size(); ++k) acc[i].dW[k] += g.dW[k];
      for (std::size_t k = 0; k < g.db.size(); ++k) acc[i].db[k] += g.db[k];
    }
    dy = std::move(g.dX);
  }
  return loss;
}

inline std::vector<std::size_t> predict_classes(const LayerStack& net, const std::vector<Tensor>& inputs,
                                                std::size_t workers = 1) {
  return parallel_map(inputs.size(), workers, [&](std::size_t i) { return argmax(net.infer(inputs[i])); });
}

inline double evaluate_accuracy(const LayerStack& net, const Samples& data, std::size_t workers = 1) {
  if (data.empty()) throw DomainError("accuracy over an empty set is undefined");
  const auto pred = predict_classes(net, data.inputs, workers);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

/// Mini-batch SGD over `train` with a seeded reshuffle every epoch. Batch
/// gradients are means over the batch. Stops after `max_epochs` or at the
/// first epoch whose running train accuracy reaches the early-stop level.
inline TrainReport train_epochs(LayerStack& net, const Samples& train, const Samples* test, const PhaseOptions& opt) {
  TrainReport report;
  if (opt.max_epochs == 0) return report;
  if (train.empty()) throw RangeError("cannot train on an empty dataset");
  if (opt.batch_size == 0) throw RangeError("batch size must be positive");
  const std::size_t classes = net.layers.back().spec.kind == LayerKind::Softmax && net.size() >= 2
                                  ? net.layers[net.size() - 2].spec.out_units
                                  : 0;
  for (auto l : train.labels)
    if (l >= classes) throw RangeError("label " + std::to_string(l) + " out of range for " + std::to_string(classes) + " classes");

  SeededRng shuffle(opt.shuffle_seed);
  ParamGrads velocity = zero_param_grads(net);
  const std::size_t n = train.size();
  for (std::size_t epoch = 1; epoch <= opt.max_epochs; ++epoch) {
    const auto order = permutation(n, shuffle);
    double loss_sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < n; start += opt.batch_size) {
      const std::size_t stop = std::min(n, start + opt.batch_size);
      ParamGrads acc = zero_param_grads(net);
      for (std::size_t k = start; k < stop; ++k) {
        bool correct = false;
        loss_sum += accumulate_sample(net, train.inputs[order[k]], train.labels[order[k]], acc, correct);
        hits += correct;
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (auto& g : acc) {
        for (auto& v : g.dW.data()) v *= scale;
        for (auto& v : g.db.data()) v *= scale;
      }
      sgd_step(net, acc, opt.lr, opt.momentum, velocity);
    }
    net.clear_caches();
    EpochRecord rec{epoch, loss_sum / static_cast<double>(n), static_cast<double>(hits) / static_cast<double>(n), {}};
    if (test && !test->empty()) rec.test_accuracy = evaluate_accuracy(net, *test, opt.workers);
    report.epochs.push_back(rec);
    if (rec.train_accuracy >= opt.early_stop_train_acc) {
      report.stop = StopReason::EarlyStop;
      break;
    }
  }
  return report;
}

inline void check_samples(const Network& net, const Samples& s) {
  for (const auto& x : s.inputs) check_input(net, x);
}

/// Full-network training (every unfrozen layer) with the pre-training
/// learning rate and epoch budget. Used for surrogate pre-training.
inline TrainReport train_network(Network& net, const Samples& train, const Samples* test, const TrainConfig& cfg) {
  cfg.validate();
  check_samples(net, train);
  if (test) check_samples(net, *test);
  PhaseOptions opt{cfg.lr_pretrain, cfg.momentum, cfg.batch_size, cfg.epochs_pretrain, cfg.early_stop_train_acc,
                   derive_seed(cfg.seed, "pretrain-shuffle"), cfg.workers};
  auto report = train_epochs(net, train, test, opt);
  net.head_trained = net.profile.has_head() && !report.epochs.empty();
  return report;
}

inline ConfusionMatrix evaluate_confusion(const Network& net, const Samples& data, LabelScheme scheme,
                                          std::size_t workers = 1) {
  if (net.profile.num_classes != num_classes(scheme))
    throw CompatibilityError("model predicts " + std::to_string(net.profile.num_classes) + " classes but scheme '" +
                             std::string(token(scheme)) + "' has " + std::to_string(num_classes(scheme)));
  check_samples(net, data);
  return confusion(predict_classes(net, data.inputs, workers), data.labels, num_classes(scheme), class_names(scheme));
}

}  // namespace rsc
