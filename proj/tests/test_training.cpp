#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"

using namespace rsc;
using rsc::testing::random_tensor;

namespace {

/// Dense(in -> classes) + Softmax, no hidden layers.
Network linear_classifier(std::size_t in, std::size_t classes, std::uint64_t seed) {
  SeededRng rng(seed);
  return build_network(ArchitectureProfile::head_only(in, {}, classes), rng);
}

Samples blobs(std::size_t n, std::uint64_t seed) {
  SeededRng rng(seed);
  Samples s;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % 2;
    Tensor x = random_tensor({4, 1, 1}, rng, -0.3, 0.3);
    x[0] += c ? 2.0 : -2.0;
    s.inputs.push_back(x);
    s.labels.push_back(c);
  }
  return s;
}

Network trained_mini(std::uint64_t seed) {
  SeededRng rng(seed);
  Network net = build_network(ArchitectureProfile::mini_32(3), rng);
  net.head_trained = true;
  return net;
}

}  // namespace

TEST(Sgd, SingleSampleStepMatchesHandDerivation) {
  Network net = linear_classifier(3, 2, 1);
  const Tensor W0 = net.layers[1].state.weights, b0 = net.layers[1].state.bias;
  const Tensor x({3, 1, 1}, {0.5, -1.0, 2.0});
  // Oracle: p = softmax(W x + b); dW = (p - y) x^T; db = p - y.
  double z[2], p[2];
  for (std::size_t o = 0; o < 2; ++o) {
    z[o] = b0[o];
    for (std::size_t i = 0; i < 3; ++i) z[o] += W0.at(o, i) * x[i];
  }
  const double m = std::max(z[0], z[1]);
  const double e0 = std::exp(z[0] - m), e1 = std::exp(z[1] - m);
  p[0] = e0 / (e0 + e1);
  p[1] = e1 / (e0 + e1);
  const double lr = 0.1;
  Samples s{{x}, {1}};
  PhaseOptions opt;
  opt.lr = lr;
  opt.batch_size = 1;
  opt.max_epochs = 1;
  opt.early_stop_train_acc = 1.0;
  const TrainReport r = train_epochs(net, s, nullptr, opt);
  ASSERT_EQ(r.epochs.size(), 1u);
  EXPECT_NEAR(r.epochs[0].train_loss, -std::log(p[1]), 1e-12);
  for (std::size_t o = 0; o < 2; ++o) {
    const double g = p[o] - (o == 1 ? 1.0 : 0.0);
    EXPECT_NEAR(net.layers[1].state.bias[o], b0[o] - lr * g, 1e-12);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(net.layers[1].state.weights.at(o, i), W0.at(o, i) - lr * g * x[i], 1e-12);
  }
}

TEST(Sgd, MomentumRecurrence) {
  Network net = linear_classifier(2, 2, 2);
  ParamGrads g = zero_param_grads(net), v = zero_param_grads(net);
  g[1].dW.fill(1.0);
  const double w0 = net.layers[1].state.weights[0];
  sgd_step(net, g, 0.1, 0.9, v);  // v = -0.1, w = w0 - 0.1
  sgd_step(net, g, 0.1, 0.9, v);  // v = -0.19, w = w0 - 0.29
  EXPECT_NEAR(v[1].dW[0], -0.19, 1e-15);
  EXPECT_NEAR(net.layers[1].state.weights[0], w0 - 0.29, 1e-15);
}

TEST(Sgd, BatchGradientIsMeanOfSampleGradients) {
  Network a = linear_classifier(4, 2, 3);
  Network b = a;
  const Samples s = blobs(2, 4);
  // One step on a batch of two ...
  PhaseOptions opt;
  opt.lr = 0.5;
  opt.batch_size = 2;
  opt.max_epochs = 1;
  opt.early_stop_train_acc = 1.0;
  train_epochs(a, s, nullptr, opt);
  // ... equals one step with the hand-averaged gradients.
  ParamGrads acc = zero_param_grads(b), vel = zero_param_grads(b);
  bool ok = false;
  for (std::size_t i = 0; i < 2; ++i) accumulate_sample(b, s.inputs[i], s.labels[i], acc, ok);
  for (auto& g : acc) {
    for (auto& x : g.dW.data()) x /= 2.0;
    for (auto& x : g.db.data()) x /= 2.0;
  }
  sgd_step(b, acc, 0.5, 0.0, vel);
  for (std::size_t k = 0; k < a.layers[1].state.weights.size(); ++k)
    EXPECT_NEAR(a.layers[1].state.weights[k], b.layers[1].state.weights[k], 1e-12);
}

TEST(Training, LearnsSeparableBlobsAndStopsEarly) {
  Network net = linear_classifier(4, 2, 5);
  const Samples s = blobs(64, 6);
  PhaseOptions opt;
  opt.lr = 0.1;
  opt.batch_size = 8;
  opt.max_epochs = 200;
  const TrainReport r = train_epochs(net, s, &s, opt);
  EXPECT_EQ(r.stop, StopReason::EarlyStop);
  EXPECT_LT(r.epochs.size(), 200u);
  EXPECT_GE(r.epochs.back().train_accuracy, 0.99);
  EXPECT_GE(*r.epochs.back().test_accuracy, 0.95);
}

TEST(Training, SameSeedSameReport) {
  const Samples s = blobs(40, 7);
  PhaseOptions opt;
  opt.lr = 0.05;
  opt.batch_size = 7;
  opt.max_epochs = 5;
  opt.early_stop_train_acc = 1.0;
  Network a = linear_classifier(4, 2, 8), b = linear_classifier(4, 2, 8);
  EXPECT_EQ(train_epochs(a, s, nullptr, opt), train_epochs(b, s, nullptr, opt));
  EXPECT_EQ(weights_fingerprint(a), weights_fingerprint(b));
  opt.shuffle_seed = 99;
  Network c = linear_classifier(4, 2, 8);
  train_epochs(c, s, nullptr, opt);
  EXPECT_NE(weights_fingerprint(a), weights_fingerprint(c));
}

TEST(Training, RejectsBadInputs) {
  Network net = linear_classifier(4, 2, 9);
  PhaseOptions opt;
  EXPECT_THROW(train_epochs(net, Samples{}, nullptr, opt), RangeError);
  Samples bad = blobs(4, 1);
  bad.labels[0] = 5;
  EXPECT_THROW(train_epochs(net, bad, nullptr, opt), RangeError);
  TrainConfig cfg;
  cfg.lr_pretrain = 0;
  EXPECT_THROW(cfg.validate(), RangeError);
}

TEST(Training, ReportCsvFormat) {
  TrainReport head{{{1, 0.5, 0.25, 0.5}, {2, 0.25, 0.5, std::nullopt}}, StopReason::EpochsExhausted};
  TrainReport fine{{{1, 0.125, 1.0, 1.0}}, StopReason::EarlyStop};
  EXPECT_EQ(report_csv(head, fine),
            "epoch,train_loss,train_acc,test_acc\n"
            "1,0.500000,0.250000,0.500000\n"
            "2,0.250000,0.500000,\n"
            "3,0.125000,1.000000,1.000000\n"
            "# head_stop=epochs_exhausted\n# stop=early_stop\n");
}

TEST(FineTune, RequiresTrainedHead) {
  SeededRng rng(1);
  Network net = build_network(ArchitectureProfile::mini_32(3), rng);
  const Samples s = make_samples(rsc::testing::small_target(1, 1), LabelScheme::Three);
  TrainConfig cfg;
  EXPECT_THROW(fine_tune(net, s, nullptr, cfg), StateError);
}

TEST(FineTune, FrozenBlocksStayBitIdentical) {
  Network net = trained_mini(2);
  const Network before = net;
  const Samples s = make_samples(rsc::testing::small_target(4, 2), LabelScheme::Three);
  TrainConfig cfg;
  cfg.epochs_finetune = 2;
  cfg.lr_finetune = 0.01;
  cfg.batch_size = 5;
  cfg.frozen_blocks_finetune = 2;
  fine_tune(net, s, nullptr, cfg);
  for (std::size_t i = 0; i < net.size(); ++i) {
    if (!net.layers[i].spec.has_parameters()) continue;
    const bool same = net.layers[i].state.weights == before.layers[i].state.weights &&
                      net.layers[i].state.bias == before.layers[i].state.bias;
    EXPECT_EQ(same, net.layers[i].block == 1 || net.layers[i].block == 2) << net.layers[i].name;
  }
}

TEST(FineTune, PrefixCachingIsBitIdentical) {
  const Samples s = make_samples(rsc::testing::small_target(4, 3), LabelScheme::Three);
  TrainConfig cfg;
  cfg.epochs_finetune = 2;
  cfg.lr_finetune = 0.01;
  cfg.batch_size = 6;
  cfg.frozen_blocks_finetune = 3;
  Network a = trained_mini(3), b = trained_mini(3);
  cfg.cache_frozen_prefix = true;
  const TrainReport ra = fine_tune(a, s, &s, cfg);
  cfg.cache_frozen_prefix = false;
  const TrainReport rb = fine_tune(b, s, &s, cfg);
  EXPECT_EQ(ra, rb);
  EXPECT_EQ(weights_fingerprint(a), weights_fingerprint(b));
}

TEST(Transfer, HeadOnCacheMatchesHeadOnFrozenBase) {
  SeededRng rng(4);
  const Network full = build_network(ArchitectureProfile::mini_32(3), rng);
  const Network base = truncate_to_conv_base(full);
  const Dataset d = rsc::testing::small_target(6, 4);
  TrainConfig cfg;
  cfg.head_widths = {16, 8};
  cfg.epochs_pretrain = 4;
  cfg.lr_pretrain = 0.01;
  cfg.batch_size = 8;
  cfg.early_stop_train_acc = 1.0;
  const HeadResult cached = train_head_on_cache(extract_features(base, d), cfg.head_widths, LabelScheme::Three, cfg);

  Network attached = assemble(base, build_head(32, cfg.head_widths, 3, cfg.seed));
  set_freeze_by_blocks(attached, 5);
  const TrainReport direct = train_epochs(attached, make_samples(d, LabelScheme::Three), nullptr, head_phase_options(cfg));
  ASSERT_EQ(direct.epochs.size(), cached.report.epochs.size());
  for (std::size_t e = 0; e < direct.epochs.size(); ++e)
    EXPECT_NEAR(direct.epochs[e].train_loss, cached.report.epochs[e].train_loss, 1e-9);
}

TEST(Transfer, PipelineIsDeterministicAndCacheVariantAgrees) {
  SeededRng rng(5);
  const Network full = build_network(ArchitectureProfile::mini_32(3), rng);
  const Dataset d = rsc::testing::small_target(6, 5);
  SeededRng split(1);
  const auto [train, test] = split_train_test(d, 0.7, split);
  TrainConfig cfg;
  cfg.head_widths = {16};
  cfg.epochs_pretrain = 3;
  cfg.epochs_finetune = 2;
  cfg.batch_size = 8;
  const TransferResult a = transfer_pipeline(full, train, test, LabelScheme::Three, cfg);
  const TransferResult b = transfer_pipeline(full, train, test, LabelScheme::Three, cfg);
  EXPECT_EQ(a.fine_report, b.fine_report);
  EXPECT_EQ(weights_fingerprint(a.model), weights_fingerprint(b.model));
  const Network base = truncate_to_conv_base(full);
  const FeatureCache all = extract_features(base, d);
  const TransferResult c = transfer_from_features(base, select_features(all, train), select_features(all, test), train,
                                                  test, LabelScheme::Three, cfg);
  EXPECT_EQ(weights_fingerprint(a.model), weights_fingerprint(c.model));
  EXPECT_GE(a.test_accuracy, 0.0);
  EXPECT_LE(a.test_accuracy, 1.0);
}
