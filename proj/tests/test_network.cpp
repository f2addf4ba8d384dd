#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace rsc;
using rsc::testing::random_tensor;

namespace {

std::size_t conv_base_parameters(const ArchitectureProfile& p) {
  std::size_t n = 0, ch = p.channels;
  for (const auto& b : p.conv_blocks)
    for (std::size_t i = 0; i < b.layers; ++i) {
      n += 9 * ch * b.channels + b.channels;
      ch = b.channels;
    }
  return n;
}

}  // namespace

TEST(Profile, Vgg16SpatialTraceAndFlattenWidth) {
  const auto p = ArchitectureProfile::vgg16_150();
  EXPECT_EQ(p.spatial_trace(), (std::vector<std::size_t>{150, 75, 37, 18, 9, 4}));
  EXPECT_EQ(p.flatten_width(), 8192u);
  EXPECT_EQ(conv_base_parameters(p), 14714688u);
}

TEST(Profile, Mini32) {
  const auto p = ArchitectureProfile::mini_32();
  EXPECT_EQ(p.spatial_trace(), (std::vector<std::size_t>{32, 16, 8, 4, 2, 1}));
  EXPECT_EQ(p.flatten_width(), 32u);
}

TEST(Profile, ValidateRejectsOverPooling) {
  ArchitectureProfile p = ArchitectureProfile::mini_32();
  p.height = p.width = 16;
  EXPECT_THROW(p.validate(), ProfileError);
  EXPECT_THROW(ArchitectureProfile::by_name("resnet"), ProfileError);
}

TEST(Profile, FingerprintIgnoresNameButNotStructure) {
  auto a = ArchitectureProfile::mini_32();
  auto b = a;
  b.name = "other";
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  b.fc_head = {64, 16};
  EXPECT_NE(a.fingerprint(), b.fingerprint());
  EXPECT_EQ(a.fingerprint().rfind("fnv1a64:", 0), 0u);
}

TEST(Network, LayerSequenceAndNames) {
  SeededRng rng(1);
  const Network net = build_network(ArchitectureProfile::mini_32(3), rng);
  // 5 x (conv, relu, pool) + flatten + 2 x (dense, relu) + predictions + softmax
  ASSERT_EQ(net.size(), 15u + 1 + 4 + 2);
  EXPECT_EQ(net.layers[0].name, "block1_conv1");
  EXPECT_EQ(net.layers[2].name, "block1_pool");
  EXPECT_EQ(net.layers[15].name, "flatten");
  EXPECT_EQ(net.layers[16].name, "fc1");
  EXPECT_EQ(net.layers[20].name, "predictions");
  EXPECT_EQ(net.layers.back().spec.kind, LayerKind::Softmax);
}

TEST(Network, GlorotBoundsAndZeroBias) {
  SeededRng rng(2);
  const Network net = build_network(ArchitectureProfile::mini_32(3), rng);
  for (const auto& l : net.layers) {
    if (!l.spec.has_parameters()) continue;
    const double fan = l.spec.kind == LayerKind::Conv2D ? 9.0 * (l.spec.in_channels + l.spec.out_channels)
                                                        : static_cast<double>(l.spec.in_units + l.spec.out_units);
    const double limit = std::sqrt(6.0 / fan);
    for (double w : l.state.weights.data()) EXPECT_LE(std::abs(w), limit);
    for (double b : l.state.bias.data()) EXPECT_EQ(b, 0.0);
  }
}

TEST(Network, ForwardGivesProbabilities) {
  SeededRng rng(3);
  Network net = build_network(ArchitectureProfile::mini_32(3), rng);
  const Tensor p = forward(net, random_tensor({3, 32, 32}, rng, -50, 50));
  ASSERT_EQ(p.size(), 3u);
  EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-12);
  EXPECT_THROW(predict(net, Tensor({3, 16, 16})), ShapeError);
}

TEST(Network, FreezeByBlocks) {
  SeededRng rng(4);
  Network net = build_network(ArchitectureProfile::mini_32(3), rng);
  set_freeze_by_blocks(net, 2);
  EXPECT_EQ(frozen_layer_count(net), 4u);  // 2 convs + 2 pools on mini
  EXPECT_EQ(frozen_layer_count(net, true), 2u);
  EXPECT_EQ(net.first_trainable(), 6u);
  set_freeze_by_blocks(net, 0);
  EXPECT_EQ(frozen_layer_count(net), 0u);
  EXPECT_THROW(set_freeze_by_blocks(net, 6), RangeError);
}

TEST(Network, Vgg16FreezingTwoBlocksFreezesSixLayers) {
  // Structure-only check: counts come from the profile, no weights needed.
  const auto p = ArchitectureProfile::vgg16_150();
  std::size_t convs = 0, pools = 0;
  for (std::size_t b = 0; b < 2; ++b) {
    convs += p.conv_blocks[b].layers;
    ++pools;
  }
  EXPECT_EQ(convs + pools, 6u);
}

TEST(Network, TruncateAndAssembleRoundTrip) {
  SeededRng rng(5);
  const Network full = build_network(ArchitectureProfile::mini_32(3), rng);
  const Network base = truncate_to_conv_base(full);
  EXPECT_FALSE(base.profile.has_head());
  EXPECT_EQ(base.layers.back().spec.kind, LayerKind::Flatten);
  const Tensor x = random_tensor({3, 32, 32}, rng, -50, 50);
  EXPECT_EQ(predict(base, x).size(), 32u);

  Network head = build_network(ArchitectureProfile::head_only(32, {64, 32}, 3), rng);
  head.head_trained = true;
  const Network joined = assemble(base, head);
  EXPECT_TRUE(joined.head_trained);
  EXPECT_EQ(joined.profile.fingerprint(), ArchitectureProfile::mini_32(3).fingerprint());
  EXPECT_EQ(predict(joined, x), predict(head, predict(base, x)));
  Network wrong = build_network(ArchitectureProfile::head_only(16, {8}, 3), rng);
  EXPECT_THROW(assemble(base, wrong), ShapeError);
}

TEST(Network, ParameterTotals) {
  SeededRng rng(6);
  Network net = build_network(ArchitectureProfile::mini_32(3), rng);
  const std::size_t conv = conv_base_parameters(net.profile);
  EXPECT_EQ(total_parameters(net), conv + (32 * 64 + 64) + (64 * 32 + 32) + (32 * 3 + 3));
  set_freeze_by_blocks(net, 5);
  EXPECT_EQ(trainable_parameters(net), total_parameters(net) - conv);
}

TEST(Network, WeightsFingerprintTracksParameters) {
  SeededRng a(7), b(7);
  Network n1 = build_network(ArchitectureProfile::mini_32(3), a);
  const Network n2 = build_network(ArchitectureProfile::mini_32(3), b);
  EXPECT_EQ(weights_fingerprint(n1), weights_fingerprint(n2));
  n1.layers[0].state.bias[0] = 1e-9;
  EXPECT_NE(weights_fingerprint(n1), weights_fingerprint(n2));
}
