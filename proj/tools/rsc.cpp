#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rsc/rsc.hpp"

namespace {

using namespace rsc;

std::vector<std::size_t> parse_widths(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    char* end = nullptr;
    const long long v = std::strtoll(part.c_str(), &end, 10);
    if (*end != '\0' || v <= 0) throw UsageError("bad width '" + part + "' in '" + text + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part.empty()) continue;
    char* end = nullptr;
    const double v = std::strtod(part.c_str(), &end);
    if (*end != '\0') throw UsageError("bad number '" + part + "' in '" + text + "'");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("empty list '" + text + "'");
  return out;
}

/// "256,256;512,256" -> {{256,256},{512,256}}
std::vector<std::vector<std::size_t>> parse_structures(const std::string& text) {
  std::vector<std::vector<std::size_t>> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ';'))
    if (!part.empty()) out.push_back(parse_widths(part));
  if (out.empty()) throw UsageError("empty structure list '" + text + "'");
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::string num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

void print_config(const std::string& command, const std::vector<std::pair<std::string, std::string>>& entries) {
  std::cout << "command=" << command << "\n";
  for (const auto& [k, v] : entries) std::cout << k << "=" << v << "\n";
  std::cout.flush();
}

void require_positive(double v, const char* flag) {
  if (!(v > 0.0)) throw UsageError(std::string(flag) + " must be positive");
}

LabelScheme scheme_flag(const std::string& s) {
  try {
    return parse_scheme(s);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

std::size_t resolve_workers(std::size_t flag_value, bool flag_given) {
  if (flag_given) return std::max<std::size_t>(1, flag_value);
  if (const char* env = std::getenv("RSC_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw UsageError("RSC_WORKERS must be a positive integer");
    return static_cast<std::size_t>(v);
  }
  return 1;
}

/// Replaces a trailing ".csv" with `suffix` (or appends it).
std::string sibling_path(const std::string& path, const std::string& suffix) {
  const std::string ext = ".csv";
  if (path.size() >= ext.size() && path.compare(path.size() - ext.size(), ext.size(), ext) == 0)
    return path.substr(0, path.size() - ext.size()) + suffix;
  return path + suffix;
}

struct TrainFlags {
  double lr_pre = 0.001;
  double lr_fine = 0.0005;
  std::size_t epochs_pre = 50;
  std::size_t epochs_fine = 100;
  std::size_t frozen_blocks = 2;
  std::size_t batch = 32;
  double momentum = 0.0;
  std::string head = "512,256";
  std::uint64_t seed = 1;

  void add(CLI::App* c) {
    c->add_option("--lr-pre", lr_pre, "learning rate of the head-training phase")->capture_default_str();
    c->add_option("--lr-fine", lr_fine, "learning rate of the fine-tuning phase")->capture_default_str();
    c->add_option("--epochs-pre", epochs_pre, "maximum head-training epochs")->capture_default_str();
    c->add_option("--epochs-fine", epochs_fine, "maximum fine-tuning epochs")->capture_default_str();
    c->add_option("--frozen-blocks", frozen_blocks, "conv blocks held fixed during fine-tuning (0-5)")->capture_default_str();
    c->add_option("--batch", batch, "mini-batch size")->capture_default_str();
    c->add_option("--momentum", momentum, "SGD momentum")->capture_default_str();
    c->add_option("--head", head, "hidden widths of the classifier head")->capture_default_str();
    c->add_option("--seed", seed, "random seed")->capture_default_str();
  }

  TrainConfig config(std::size_t workers) const {
    require_positive(lr_pre, "--lr-pre");
    require_positive(lr_fine, "--lr-fine");
    if (frozen_blocks > 5) throw UsageError("--frozen-blocks must be at most 5");
    if (batch == 0) throw UsageError("--batch must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw UsageError("--momentum must lie in [0, 1)");
    TrainConfig c;
    c.lr_pretrain = lr_pre;
    c.lr_finetune = lr_fine;
    c.epochs_pretrain = epochs_pre;
    c.epochs_finetune = epochs_fine;
    c.frozen_blocks_finetune = frozen_blocks;
    c.batch_size = batch;
    c.momentum = momentum;
    c.head_widths = parse_widths(head);
    c.seed = seed;
    c.workers = workers;
    return c;
  }

  void describe(std::vector<std::pair<std::string, std::string>>& e) const {
    e.insert(e.end(), {{"lr_pre", num(lr_pre)},
                       {"lr_fine", num(lr_fine)},
                       {"epochs_pre", std::to_string(epochs_pre)},
                       {"epochs_fine", std::to_string(epochs_fine)},
                       {"frozen_blocks", std::to_string(frozen_blocks)},
                       {"batch", std::to_string(batch)},
                       {"momentum", num(momentum)},
                       {"head", head},
                       {"seed", std::to_string(seed)}});
  }
};

/// Pre-trained archive reduced to its conv base.
Network load_base(const std::string& path) {
  const Network net = load_network(path);
  return net.profile.has_head() ? truncate_to_conv_base(net) : net;
}

int run(int argc, char** argv) {
  CLI::App app{"Winter road-surface classification with a transfer-learned CNN"};
  app.require_subcommand(1);
  std::size_t workers_flag = 1;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "write a synthetic labelled dataset");
  std::string gen_out, gen_palette = "target";
  long long gen_per_class = 0;
  std::size_t gen_size = 32;
  std::uint64_t gen_seed = 1;
  double gen_noise = -1;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--per-class", gen_per_class, "images per five-class label")->required();
  gen->add_option("--size", gen_size, "image side in pixels (32 or 150)")->capture_default_str();
  gen->add_option("--seed", gen_seed, "random seed")->capture_default_str();
  gen->add_option("--palette", gen_palette, "scene family: target or source")->capture_default_str();
  gen->add_option("--noise", gen_noise, "per-pixel noise amplitude (default: palette value)");

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "train a full network on a source dataset");
  std::string pre_data, pre_profile = "mini_32", pre_out, pre_report, pre_scheme = "five";
  std::size_t pre_epochs = 50, pre_batch = 32;
  double pre_lr = 0.001, pre_momentum = 0.0;
  std::uint64_t pre_seed = 1;
  std::string pre_head;
  pre->add_option("--data", pre_data, "dataset directory")->required();
  pre->add_option("--profile", pre_profile, "vgg16_150 or mini_32")->capture_default_str();
  pre->add_option("--out", pre_out, "weight archive to write")->required();
  pre->add_option("--epochs", pre_epochs, "maximum epochs")->capture_default_str();
  pre->add_option("--lr", pre_lr, "learning rate")->capture_default_str();
  pre->add_option("--batch", pre_batch, "mini-batch size")->capture_default_str();
  pre->add_option("--momentum", pre_momentum, "SGD momentum")->capture_default_str();
  pre->add_option("--scheme", pre_scheme, "label scheme of the source task")->capture_default_str();
  pre->add_option("--head", pre_head, "hidden widths of the head (default: profile)");
  pre->add_option("--seed", pre_seed, "random seed")->capture_default_str();
  pre->add_option("--report", pre_report, "per-epoch report CSV");

  // transfer
  auto* tr = app.add_subcommand("transfer", "feature extraction, head training and fine-tuning");
  std::string tr_base, tr_data, tr_scheme = "three", tr_out, tr_report, tr_cache;
  double tr_train_fraction = 0.7;
  TrainFlags tr_flags;
  tr->add_option("--base", tr_base, "pre-trained weight archive")->required();
  tr->add_option("--data", tr_data, "target dataset directory")->required();
  tr->add_option("--scheme", tr_scheme, "five, three or two")->capture_default_str();
  tr->add_option("--out", tr_out, "model archive to write")->required();
  tr->add_option("--report", tr_report, "per-epoch report CSV");
  tr->add_option("--cache", tr_cache, "feature cache from extract-features");
  tr->add_option("--train-fraction", tr_train_fraction, "share of the dataset used for training")->capture_default_str();
  tr_flags.add(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "score a trained model on a dataset");
  std::string ev_model, ev_data, ev_scheme = "three", ev_metrics, ev_confusion;
  ev->add_option("--model", ev_model, "model archive")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--scheme", ev_scheme, "five, three or two")->capture_default_str();
  ev->add_option("--metrics", ev_metrics, "per-class metrics CSV")->required();
  ev->add_option("--confusion", ev_confusion, "confusion matrix CSV");

  // experiment
  auto* ex = app.add_subcommand("experiment", "sensitivity, granularity or data-size study");
  std::string ex_kind, ex_data, ex_base, ex_out, ex_box, ex_scheme = "three";
  std::size_t ex_seeds = 5;
  std::string ex_fractions = "0.1,0.5,1.0", ex_structures, ex_pre_lrs, ex_fine_lrs, ex_depths;
  bool ex_record_time = false;
  TrainFlags ex_flags;
  ex->add_option("--kind", ex_kind, "sensitivity, granularity or datasize")->required();
  ex->add_option("--data", ex_data, "dataset directory")->required();
  ex->add_option("--base", ex_base, "pre-trained weight archive")->required();
  ex->add_option("--seeds", ex_seeds, "seeds per configuration (repeats per fraction for datasize)")->capture_default_str();
  ex->add_option("--out", ex_out, "results CSV")->required();
  ex->add_option("--box-out", ex_box, "box-statistics CSV for datasize (default: <out>_box.csv)");
  ex->add_option("--scheme", ex_scheme, "label scheme (sensitivity, datasize)")->capture_default_str();
  ex->add_option("--fractions", ex_fractions, "data-size fractions")->capture_default_str();
  ex->add_option("--fc-structures", ex_structures, "sensitivity head structures, e.g. 256,256;512,256");
  ex->add_option("--pre-lrs", ex_pre_lrs, "sensitivity head-training learning rates");
  ex->add_option("--fine-lrs", ex_fine_lrs, "sensitivity fine-tuning learning rates");
  ex->add_option("--freeze-depths", ex_depths, "sensitivity frozen-block counts");
  ex->add_flag("--record-time", ex_record_time, "fill the wall_secs column");
  ex_flags.add(ex);

  // extract-features
  auto* xf = app.add_subcommand("extract-features", "cache conv-base features of a dataset");
  std::string xf_base, xf_data, xf_out;
  xf->add_option("--base", xf_base, "pre-trained weight archive")->required();
  xf->add_option("--data", xf_data, "dataset directory")->required();
  xf->add_option("--out", xf_out, "feature cache to write")->required();

  for (auto* c : {tr, ev, ex, xf}) c->add_option("--workers", workers_flag, "worker threads (env RSC_WORKERS)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  auto workers_for = [&](CLI::App* c) { return resolve_workers(workers_flag, c->count("--workers") > 0); };

  if (gen->parsed()) {
    if (gen_per_class < 1) throw UsageError("--per-class must be at least 1");
    if (gen_size != 32 && gen_size != 150) throw UsageError("--size must be 32 or 150");
    SyntheticConfig cfg;
    if (gen_palette == "target")
      cfg = SyntheticConfig::target(gen_size, gen_seed);
    else if (gen_palette == "source")
      cfg = SyntheticConfig::source(gen_size, gen_seed);
    else
      throw UsageError("--palette must be target or source");
    if (gen_noise >= 0) cfg.noise = gen_noise;
    print_config("gen-data", {{"out", gen_out},
                              {"per_class", std::to_string(gen_per_class)},
                              {"size", std::to_string(gen_size)},
                              {"palette", gen_palette},
                              {"noise", num(cfg.noise)},
                              {"seed", std::to_string(gen_seed)}});
    const Dataset d = generate_synthetic(cfg, static_cast<std::size_t>(gen_per_class));
    save_dataset(d, gen_out);
    std::cout << "wrote " << d.size() << " images to " << gen_out << "\n";
    return 0;
  }

  if (pre->parsed()) {
    require_positive(pre_lr, "--lr");
    if (pre_batch == 0) throw UsageError("--batch must be positive");
    if (!(pre_momentum >= 0.0 && pre_momentum < 1.0)) throw UsageError("--momentum must lie in [0, 1)");
    const LabelScheme scheme = scheme_flag(pre_scheme);
    ArchitectureProfile profile;
    try {
      profile = ArchitectureProfile::by_name(pre_profile, num_classes(scheme));
    } catch (const ProfileError& e) {
      throw UsageError(e.what());
    }
    if (!pre_head.empty()) profile.fc_head = parse_widths(pre_head);
    print_config("pretrain", {{"data", pre_data},
                              {"profile", pre_profile},
                              {"out", pre_out},
                              {"epochs", std::to_string(pre_epochs)},
                              {"lr", num(pre_lr)},
                              {"batch", std::to_string(pre_batch)},
                              {"momentum", num(pre_momentum)},
                              {"scheme", pre_scheme},
                              {"head", join(profile.fc_head)},
                              {"seed", std::to_string(pre_seed)}});
    const Dataset data = prepare(load_dataset(pre_data), profile);
    if (data.empty()) throw RangeError("pre-training needs a non-empty dataset");
    SeededRng rng(derive_seed(pre_seed, "init"));
    Network net = build_network(profile, rng);
    TrainConfig cfg;
    cfg.lr_pretrain = pre_lr;
    cfg.epochs_pretrain = pre_epochs;
    cfg.batch_size = pre_batch;
    cfg.momentum = pre_momentum;
    cfg.seed = pre_seed;
    const TrainReport rep = train_network(net, make_samples(data, scheme), nullptr, cfg);
    net.head_trained = true;
    save_weights(net, pre_out);
    if (!pre_report.empty()) write_file(pre_report, report_csv(rep));
    std::cout << "epochs=" << rep.epochs.size() << " stop=" << to_string(rep.stop)
              << " train_acc=" << fixed6(rep.epochs.empty() ? 0.0 : rep.epochs.back().train_accuracy) << "\n"
              << "fingerprint=" << weights_fingerprint(net) << "\n";
    return 0;
  }

  if (tr->parsed()) {
    const LabelScheme scheme = scheme_flag(tr_scheme);
    const TrainConfig cfg = tr_flags.config(workers_for(tr));
    if (!(tr_train_fraction > 0.0 && tr_train_fraction < 1.0)) throw UsageError("--train-fraction must lie in (0, 1)");
    auto entries = std::vector<std::pair<std::string, std::string>>{{"base", tr_base},
                                                                   {"data", tr_data},
                                                                   {"scheme", tr_scheme},
                                                                   {"out", tr_out},
                                                                   {"cache", tr_cache},
                                                                   {"train_fraction", num(tr_train_fraction)}};
    tr_flags.describe(entries);
    entries.emplace_back("workers", std::to_string(cfg.workers));
    print_config("transfer", entries);
    const Network base = load_base(tr_base);
    if (cfg.frozen_blocks_finetune > base.profile.conv_blocks.size())
      throw UsageError("--frozen-blocks exceeds the base's " + std::to_string(base.profile.conv_blocks.size()) + " blocks");
    const Dataset data = prepare(load_dataset(tr_data), base.profile);
    SeededRng split_rng(derive_seed(cfg.seed, "split"));
    const auto [train, test] = split_train_test(data, tr_train_fraction, split_rng);
    TransferResult r;
    if (tr_cache.empty()) {
      r = transfer_pipeline(base, train, test, scheme, cfg);
    } else {
      const FeatureCache cache = load_feature_cache(tr_cache);
      require_cache_matches(cache, base);
      r = transfer_from_features(base, select_features(cache, train), select_features(cache, test), train, test, scheme,
                                 cfg);
    }
    save_weights(r.model, tr_out);
    if (!tr_report.empty()) write_file(tr_report, report_csv(r.head_report, r.fine_report));
    std::cout << "train=" << train.size() << " test=" << test.size() << "\n"
              << "head_epochs=" << r.head_report.epochs.size() << " head_stop=" << to_string(r.head_report.stop)
              << "\n"
              << "fine_epochs=" << r.fine_report.epochs.size() << " stop=" << to_string(r.fine_report.stop) << "\n"
              << "head_only_test_acc=" << fixed6(r.head_only_test_accuracy) << "\n"
              << "test_acc=" << fixed6(r.test_accuracy) << "\n";
    return 0;
  }

  if (ev->parsed()) {
    const LabelScheme scheme = scheme_flag(ev_scheme);
    const std::size_t workers = workers_for(ev);
    print_config("eval", {{"model", ev_model},
                          {"data", ev_data},
                          {"scheme", ev_scheme},
                          {"metrics", ev_metrics},
                          {"confusion", ev_confusion},
                          {"workers", std::to_string(workers)}});
    const Network net = load_network(ev_model);
    if (!net.profile.has_head()) throw CompatibilityError("'" + ev_model + "' holds no classifier head");
    const Dataset data = prepare(load_dataset(ev_data), net.profile);
    const ConfusionMatrix cm = evaluate_confusion(net, make_samples(data, scheme), scheme, workers);
    write_file(ev_metrics, metrics_csv(cm));
    if (!ev_confusion.empty()) write_file(ev_confusion, confusion_csv(cm));
    if (cm.total()) std::cout << "accuracy=" << fixed6(accuracy(cm)) << "\n";
    return 0;
  }

  if (ex->parsed()) {
    if (ex_kind != "sensitivity" && ex_kind != "granularity" && ex_kind != "datasize")
      throw UsageError("--kind must be sensitivity, granularity or datasize, not '" + ex_kind + "'");
    if (ex_seeds < 1) throw UsageError("--seeds must be at least 1");
    const LabelScheme scheme = scheme_flag(ex_scheme);
    const std::size_t workers = workers_for(ex);
    const TrainConfig cfg = ex_flags.config(1);
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < ex_seeds; ++i) seeds.push_back(cfg.seed + i);
    auto entries = std::vector<std::pair<std::string, std::string>>{
        {"kind", ex_kind}, {"data", ex_data}, {"base", ex_base}, {"out", ex_out}, {"seeds", std::to_string(ex_seeds)},
        {"scheme", ex_scheme}};
    ex_flags.describe(entries);
    entries.emplace_back("workers", std::to_string(workers));
    entries.emplace_back("record_time", ex_record_time ? "1" : "0");

    GridSpec grid;
    std::vector<double> fractions;
    if (ex_kind == "sensitivity") {
      if (!ex_structures.empty()) grid.fc_structures = parse_structures(ex_structures);
      if (!ex_pre_lrs.empty()) grid.pretrain_lrs = parse_doubles(ex_pre_lrs);
      if (!ex_fine_lrs.empty()) grid.finetune_lrs = parse_doubles(ex_fine_lrs);
      if (!ex_depths.empty()) grid.freeze_depths = parse_widths(ex_depths);
      try {
        grid.validate();
      } catch (const RangeError& e) {
        throw UsageError(e.what());
      }
      for (auto d : grid.freeze_depths)
        if (d > 5) throw UsageError("freeze depths must be at most 5");
    }
    if (ex_kind == "datasize") {
      fractions = parse_doubles(ex_fractions);
      for (double f : fractions)
        if (!(f > 0.0 && f <= 1.0)) throw UsageError("fractions must lie in (0, 1]");
      if (ex_box.empty()) ex_box = sibling_path(ex_out, "_box.csv");
      entries.emplace_back("fractions", ex_fractions);
      entries.emplace_back("box_out", ex_box);
    }
    print_config("experiment", entries);

    const Network base = load_base(ex_base);
    const Dataset data = prepare(load_dataset(ex_data), base.profile);
    std::vector<TrialResult> results;
    if (ex_kind == "sensitivity") {
      const SensitivityResult r = run_sensitivity(grid, base, data, seeds, cfg, scheme, workers);
      results = r.trials;
      std::cout << "best_structure=" << join(r.best_structure) << " best_lr_pre=" << num(r.best_lr_pre)
                << " best_lr_fine=" << num(r.best_lr_fine) << " best_frozen_blocks=" << r.best_frozen_blocks << "\n";
    } else if (ex_kind == "granularity") {
      const auto groups = run_granularity(base, data, {LabelScheme::Five, LabelScheme::Three, LabelScheme::Two}, cfg,
                                          seeds, workers);
      for (const auto& g : groups) {
        ConfusionMatrix pooled(num_classes(g.scheme), class_names(g.scheme));
        for (const auto& t : g.trials) {
          results.push_back(t);
          for (std::size_t i = 0; i < pooled.classes(); ++i)
            for (std::size_t j = 0; j < pooled.classes(); ++j) pooled.counts[i][j] += t.confusion.counts[i][j];
        }
        const std::string tag = "_" + std::string(token(g.scheme));
        write_file(sibling_path(ex_out, tag + "_confusion.csv"), confusion_csv(pooled));
        write_file(sibling_path(ex_out, tag + "_metrics.csv"), metrics_csv(pooled));
        std::cout << token(g.scheme) << " median_test_acc=" << fixed6(median_accuracy(g.trials)) << "\n";
        if (g.scheme == LabelScheme::Five) {
          const ConfusionMatrix merged = merge_bare_and_lt25(pooled);
          write_file(sibling_path(ex_out, "_five_merged_metrics.csv"), metrics_csv(merged));
          if (merged.total()) std::cout << "five_merged pooled_acc=" << fixed6(accuracy(merged)) << "\n";
        }
      }
    } else {
      const DataSizeResult r = run_datasize(base, data, fractions, ex_seeds, cfg, scheme, workers);
      results = r.trials;
      write_file(ex_box, box_csv(r.boxes));
      for (const auto& [f, b] : r.boxes) std::cout << "fraction=" << num(f) << " median=" << fixed6(b.median) << "\n";
    }
    emit_csv(results, ex_out, ex_record_time);
    std::cout << "trials=" << results.size() << "\n" << field_reference_table();
    return 0;
  }

  if (xf->parsed()) {
    const std::size_t workers = workers_for(xf);
    print_config("extract-features",
                 {{"base", xf_base}, {"data", xf_data}, {"out", xf_out}, {"workers", std::to_string(workers)}});
    const Network base = load_base(xf_base);
    const Dataset data = prepare(load_dataset(xf_data), base.profile);
    const FeatureCache cache = extract_features(base, data, workers);
    save_feature_cache(cache, xf_out);
    std::cout << "vectors=" << cache.size() << " width=" << cache.width << " base=" << cache.base_fingerprint << "\n";
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const rsc::Error& e) {
    std::cerr << "error:" << e.category() << ": " << e.what() << "\n";
    return e.category() == std::string("usage") ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error:internal: " << e.what() << "\n";
    return 1;
  }
}
