// Acceptance suite: one PASS/FAIL line per criterion; exits nonzero if any fail.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rsc/rsc.hpp"

using namespace rsc;
namespace fs = std::filesystem;

namespace {

constexpr double kGradTolerance = 1e-6;
constexpr double kConvTolerance = 1e-9;
constexpr double kCacheLossTolerance = 1e-9;
constexpr double kIdentityTolerance = 0.0005;
constexpr double kTransferMedianFloor = 0.90;

// Synthetic transfer setup shared by criteria 9-11.
constexpr std::size_t kSourcePerClass = 100;
constexpr std::size_t kTargetPerClass = 180;
constexpr std::size_t kPretrainEpochs = 30;
constexpr double kPretrainLr = 0.01;
constexpr double kPretrainMomentum = 0.9;
constexpr std::size_t kHeadEpochs = 50;
constexpr std::size_t kFineEpochs = 30;

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("[%s] criterion %2d: %s | %s | %.1fs\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Tensor rand_tensor(Shape s, SeededRng& rng, double lo = -1.0, double hi = 1.0) {
  return uniform_init(std::move(s), lo, hi, rng);
}

Layer param_layer(LayerSpec spec, SeededRng& rng) {
  Layer l{"layer", spec, {}, 0};
  if (spec.kind == LayerKind::Conv2D) {
    l.state.weights = rand_tensor({spec.out_channels, spec.in_channels, 3, 3}, rng, -0.5, 0.5);
    l.state.bias = rand_tensor({spec.out_channels}, rng, -0.5, 0.5);
  } else {
    l.state.weights = rand_tensor({spec.out_units, spec.in_units}, rng, -0.5, 0.5);
    l.state.bias = rand_tensor({spec.out_units}, rng, -0.5, 0.5);
  }
  return l;
}

// Direct sliding-window cross-correlation, 3x3 kernel, stride 1, zero pad 1.
Tensor naive_conv(const Tensor& w, const Tensor& b, const Tensor& x) {
  const std::size_t O = w.dim(0), C = w.dim(1), H = x.dim(1), W = x.dim(2);
  Tensor y({O, H, W});
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        double s = b[o];
        for (std::size_t c = 0; c < C; ++c)
          for (long u = -1; u <= 1; ++u)
            for (long v = -1; v <= 1; ++v) {
              const long ii = static_cast<long>(i) + u, jj = static_cast<long>(j) + v;
              if (ii < 0 || jj < 0 || ii >= static_cast<long>(H) || jj >= static_cast<long>(W)) continue;
              s += w[((o * C + c) * 3 + static_cast<std::size_t>(u + 1)) * 3 + static_cast<std::size_t>(v + 1)] *
                   x.at(c, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj));
            }
        y.at(o, i, j) = s;
      }
  return y;
}

double median(std::vector<double> v) { return box_stats(std::move(v)).median; }

// ------------------------------------------------------------------ shared state for 9-11

struct TransferFixture {
  Network pretrained;
  Dataset target;
  double pretrain_test_accuracy = 0;
};

const TransferFixture& fixture() {
  static const TransferFixture f = [] {
    TransferFixture fx;
    const auto profile = ArchitectureProfile::mini_32(5);
    const Dataset source = prepare(generate_synthetic(SyntheticConfig::source(32, 101), kSourcePerClass), profile);
    SeededRng split(5);
    const auto [train, test] = split_train_test(source, 0.8, split);
    SeededRng init(7);
    fx.pretrained = build_network(profile, init);
    TrainConfig cfg;
    cfg.lr_pretrain = kPretrainLr;
    cfg.epochs_pretrain = kPretrainEpochs;
    cfg.momentum = kPretrainMomentum;
    cfg.seed = 3;
    const Samples tr = make_samples(train, LabelScheme::Five), te = make_samples(test, LabelScheme::Five);
    train_network(fx.pretrained, tr, &te, cfg);
    fx.pretrain_test_accuracy = evaluate_accuracy(fx.pretrained, te);
    fx.target = prepare(generate_synthetic(SyntheticConfig::target(32, 202), kTargetPerClass), profile);
    return fx;
  }();
  return f;
}

TrainConfig transfer_config(std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  c.head_widths = {64, 32};
  c.lr_pretrain = 0.001;
  c.epochs_pretrain = kHeadEpochs;
  c.lr_finetune = 0.0005;
  c.epochs_finetune = kFineEpochs;
  return c;
}

// ------------------------------------------------------------------ CLI helpers

int run_cli(const fs::path& dir, const std::string& args) {
  const std::string cmd = "cd '" + dir.string() + "' && '" RSC_CLI_PATH "' " + args + " >>log.txt 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "log.txt")
      files[fs::relative(e.path(), dir).string()] = read_file(e.path().string());
  return files;
}

}  // namespace

int main() {
  report(1, "parameter-count anchors", [] {
    const auto a = parameter_count(LayerSpec::conv2d(3, 64));
    const auto b = parameter_count(LayerSpec::conv2d(512, 512));
    return Outcome{a == 1792 && b == 2359808, "conv 3->64 = " + std::to_string(a) + ", conv 512->512 = " + std::to_string(b)};
  });

  report(2, "VGG16_150 spatial chain", [] {
    const auto p = ArchitectureProfile::vgg16_150();
    const auto t = p.spatial_trace();
    std::string s;
    for (auto v : t) s += std::to_string(v) + " ";
    const bool ok = t == std::vector<std::size_t>{150, 75, 37, 18, 9, 4} && p.flatten_width() == 8192;
    return Outcome{ok, "trace " + s + "flatten " + std::to_string(p.flatten_width())};
  });

  report(3, "finite-difference gradient checks (100 instances per layer kind)", [] {
    SeededRng rng(2024);
    double conv = 0, dense = 0, relu = 0, softmax = 0, pool = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t C = 1 + rng.below(3), O = 1 + rng.below(3), H = 2 + rng.below(4), W = 2 + rng.below(4);
      Layer c = param_layer(LayerSpec::conv2d(C, O), rng);
      conv = std::max(conv, finite_difference_check(c, rand_tensor({C, H, W}, rng)));

      Layer d = param_layer(LayerSpec::dense(1 + rng.below(8), 1 + rng.below(6)), rng);
      dense = std::max(dense, finite_difference_check(d, rand_tensor({d.spec.in_units}, rng)));

      Layer r{"relu", LayerSpec::relu(), {}, 0};
      Tensor x = rand_tensor({12}, rng);
      for (auto& v : x.data()) v = (v < 0 ? -0.1 : 0.1) + v;  // keep |x| >= 0.1
      relu = std::max(relu, finite_difference_check(r, x));

      softmax = std::max(softmax, softmax_cross_entropy_check(rand_tensor({2 + rng.below(5)}, rng, -4, 4), 0));

      // Distinct input values spaced 0.01 apart.
      const std::size_t PC = 1 + rng.below(3), PH = 2 * (1 + rng.below(3)), PW = 2 * (1 + rng.below(3));
      Tensor px({PC, PH, PW});
      const auto perm = permutation(px.size(), rng);
      for (std::size_t i = 0; i < px.size(); ++i) px[i] = 0.01 * static_cast<double>(perm[i]);
      Layer p{"pool", LayerSpec::maxpool2(), {}, 0};
      pool = std::max(pool, finite_difference_check(p, px));
    }
    const double worst = std::max({conv, dense, relu, softmax, pool});
    return Outcome{worst < kGradTolerance, fmt("max rel err conv %.2e dense %.2e relu %.2e", conv, dense, relu) +
                                               fmt(" softmax+CE %.2e pool %.2e", softmax, pool)};
  });

  report(4, "im2col convolution vs sliding-window oracle (50 trials)", [] {
    SeededRng rng(77);
    double worst = 0;
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t C = 1 + rng.below(4), O = 1 + rng.below(4), H = 1 + rng.below(16), W = 1 + rng.below(16);
      const Tensor w = rand_tensor({O, C, 3, 3}, rng), b = rand_tensor({O}, rng), x = rand_tensor({C, H, W}, rng, -5, 5);
      const Tensor fast = detail::conv_apply(w, b, x, nullptr), slow = naive_conv(w, b, x);
      for (std::size_t i = 0; i < fast.size(); ++i) worst = std::max(worst, std::abs(fast[i] - slow[i]));
    }
    return Outcome{worst <= kConvTolerance, fmt("max abs diff %.2e", worst)};
  });

  report(5, "freeze contract: blocks 1-2 bit-identical after 5 fine-tune epochs", [] {
    SeededRng rng(5);
    Network net = build_network(ArchitectureProfile::mini_32(3), rng);
    net.head_trained = true;
    const Network before = net;
    const Dataset d = preprocess_all(generate_synthetic(SyntheticConfig::target(32, 55), 20), 32, 32);
    TrainConfig cfg;
    cfg.frozen_blocks_finetune = 2;
    cfg.epochs_finetune = 5;
    cfg.lr_finetune = 0.001;
    cfg.early_stop_train_acc = 1.0;
    const TrainReport r = fine_tune(net, make_samples(d, LabelScheme::Three), nullptr, cfg);
    std::size_t frozen_same = 0, frozen_total = 0, free_changed = 0, free_total = 0;
    for (std::size_t i = 0; i < net.size(); ++i) {
      if (!net.layers[i].spec.has_parameters()) continue;
      const bool same = net.layers[i].state.weights == before.layers[i].state.weights &&
                        net.layers[i].state.bias == before.layers[i].state.bias;
      if (net.layers[i].block == 1 || net.layers[i].block == 2) {
        ++frozen_total;
        frozen_same += same;
      } else {
        ++free_total;
        free_changed += !same;
      }
    }
    const bool ok = r.epochs.size() == 5 && frozen_same == frozen_total && free_changed == free_total;
    return Outcome{ok, std::to_string(frozen_same) + "/" + std::to_string(frozen_total) + " frozen layers unchanged, " +
                           std::to_string(free_changed) + "/" + std::to_string(free_total) + " trainable layers updated"};
  });

  report(6, "feature-cache head training equals head on frozen base", [] {
    SeededRng rng(6);
    const Network base = truncate_to_conv_base(build_network(ArchitectureProfile::mini_32(3), rng));
    const Dataset d = preprocess_all(generate_synthetic(SyntheticConfig::target(32, 66), 30), 32, 32);
    TrainConfig cfg;
    cfg.head_widths = {64, 32};
    cfg.epochs_pretrain = 10;
    cfg.lr_pretrain = 0.001;
    cfg.early_stop_train_acc = 1.0;
    cfg.seed = 11;
    const HeadResult cached = train_head_on_cache(extract_features(base, d), cfg.head_widths, LabelScheme::Three, cfg);
    Network attached = assemble(base, build_head(base.profile.flatten_width(), cfg.head_widths, 3, cfg.seed));
    set_freeze_by_blocks(attached, attached.profile.conv_blocks.size());
    const TrainReport direct =
        train_epochs(attached, make_samples(d, LabelScheme::Three), nullptr, head_phase_options(cfg));
    double worst = direct.epochs.size() == cached.report.epochs.size() ? 0.0 : INFINITY;
    for (std::size_t e = 0; e < std::min(direct.epochs.size(), cached.report.epochs.size()); ++e)
      worst = std::max(worst, std::abs(direct.epochs[e].train_loss - cached.report.epochs[e].train_loss));
    return Outcome{worst <= kCacheLossTolerance, fmt("%g epochs, max loss diff %.2e", static_cast<double>(direct.epochs.size()), worst)};
  });

  report(7, "two-class accuracy identity", [] {
    const double acc = accuracy_from_shares({0.5539, 0.4461}, {0.0487, 0.1475});
    return Outcome{std::abs(acc - 0.9072) <= kIdentityTolerance, fmt("overall accuracy %.5f (expected 0.9072)", acc)};
  });

  report(8, "label-scheme mapping and composition", [] {
    // Expected coarse classes per five-class label.
    const std::size_t three[] = {0, 1, 1, 1, 2}, two[] = {0, 1, 1, 1, 1}, three_to_two[] = {0, 1, 1};
    bool ok = true;
    for (std::size_t i = 0; i < 5; ++i) {
      const auto l = kAllFiveClass[i];
      ok &= map_label(l, LabelScheme::Three) == three[i];
      ok &= map_label(l, LabelScheme::Two) == two[i];
      ok &= three_to_two[map_label(l, LabelScheme::Three)] == map_label(l, LabelScheme::Two);
    }
    return Outcome{ok, "5/5 labels checked"};
  });

  report(9, "end-to-end synthetic transfer (5 seeds)", [] {
    const TransferFixture& fx = fixture();
    std::vector<double> head, fine;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      SeededRng split(seed);
      const auto [train, test] = split_train_test(fx.target, 600.0 / 900.0, split);
      const TransferResult r = transfer_pipeline(fx.pretrained, train, test, LabelScheme::Three, transfer_config(seed));
      head.push_back(r.head_only_test_accuracy);
      fine.push_back(r.test_accuracy);
    }
    const double mh = median(head), mf = median(fine);
    return Outcome{mf >= kTransferMedianFloor && mf >= mh,
                   fmt("surrogate pretrain acc %.3f, median head-only %.3f, median fine-tuned %.3f", fx.pretrain_test_accuracy,
                       mh, mf)};
  });

  report(10, "data-size trend (fractions 0.1/0.5/1.0, 5 repeats)", [] {
    const TransferFixture& fx = fixture();
    const DataSizeResult r = run_datasize(fx.pretrained, fx.target, {0.10, 0.50, 1.00}, 5, transfer_config(1));
    const auto& b = r.boxes;
    const bool monotone = b[0].second.median <= b[1].second.median && b[1].second.median <= b[2].second.median;
    const double iqr_small = b[0].second.q75 - b[0].second.q25, iqr_full = b[2].second.q75 - b[2].second.q25;
    return Outcome{monotone && iqr_full <= iqr_small,
                   fmt("medians %.3f %.3f %.3f", b[0].second.median, b[1].second.median, b[2].second.median) +
                       fmt(", IQR(0.1) %.3f IQR(1.0) %.3f", iqr_small, iqr_full)};
  });

  report(11, "freeze-depth trend (fine-tune last 1..3 blocks)", [] {
    const TransferFixture& fx = fixture();
    GridSpec grid;
    grid.fc_structures = {{64, 32}};
    grid.pretrain_lrs = {0.001};
    grid.finetune_lrs = {0.0005};
    grid.freeze_depths = {4, 3, 2};  // fine-tune the last 1, 2, 3 blocks
    const SensitivityResult r = run_sensitivity(grid, fx.pretrained, fx.target, {1, 2, 3, 4, 5}, transfer_config(1));
    std::vector<double> acc, secs;
    for (std::size_t frozen : grid.freeze_depths) {
      std::vector<double> a, t;
      for (const auto& trial : trials_with_depth(r, frozen)) {
        a.push_back(trial.test_accuracy);
        t.push_back(trial.wall_secs);
      }
      acc.push_back(median(a));
      secs.push_back(median(t));
    }
    const bool ok = acc[0] <= acc[1] && acc[1] <= acc[2] && secs[0] < secs[1] && secs[1] < secs[2];
    return Outcome{ok, fmt("median acc %.3f %.3f %.3f", acc[0], acc[1], acc[2]) +
                           fmt(", median secs %.2f %.2f %.2f", secs[0], secs[1], secs[2])};
  });

  report(12, "CLI determinism: identical flags and seed give identical files", [] {
    const fs::path root = fs::temp_directory_path() / "rsc_acceptance_cli";
    fs::remove_all(root);
    const std::vector<std::string> commands = {
        "gen-data --out src --per-class 20 --palette source --seed 3",
        "gen-data --out tgt --per-class 20 --seed 4",
        "pretrain --data src --out base.rscw --epochs 4 --lr 0.01 --momentum 0.9 --seed 2 --report pre.csv",
        "extract-features --base base.rscw --data tgt --out feats.rscf",
        "transfer --base base.rscw --data tgt --head 32 --epochs-pre 5 --epochs-fine 3 --seed 7 --out model.rscw "
        "--report transfer.csv --cache feats.rscf",
        "eval --model model.rscw --data tgt --scheme three --metrics metrics.csv --confusion confusion.csv",
        "experiment --kind datasize --data tgt --base base.rscw --seeds 2 --head 16 --epochs-pre 3 --epochs-fine 2 "
        "--out datasize.csv --workers 2",
        "experiment --kind granularity --data tgt --base base.rscw --seeds 2 --head 16 --epochs-pre 3 "
        "--epochs-fine 2 --out granularity.csv",
        "experiment --kind sensitivity --data tgt --base base.rscw --seeds 2 --epochs-pre 3 --epochs-fine 2 "
        "--fc-structures '16;8' --pre-lrs 0.001,0.005 --fine-lrs 0.0005 --freeze-depths 4,3 --out sensitivity.csv",
    };
    std::map<std::string, std::string> runs[2];
    for (int k = 0; k < 2; ++k) {
      const fs::path dir = root / ("run" + std::to_string(k));
      fs::create_directories(dir);
      for (const auto& c : commands)
        if (run_cli(dir, c) != 0) return Outcome{false, "command failed: " + c + " (see " + (dir / "log.txt").string() + ")"};
      runs[k] = snapshot(dir);
    }
    std::size_t differing = 0;
    std::string first;
    for (const auto& [name, bytes] : runs[0]) {
      const auto it = runs[1].find(name);
      if (it == runs[1].end() || it->second != bytes) {
        ++differing;
        if (first.empty()) first = name;
      }
    }
    const bool ok = differing == 0 && runs[0].size() == runs[1].size() && !runs[0].empty();
    return Outcome{ok, std::to_string(commands.size()) + " commands, " + std::to_string(runs[0].size()) + " files, " +
                           std::to_string(differing) + " differ" + (first.empty() ? "" : " (first: " + first + ")")};
  });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
