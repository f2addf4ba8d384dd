#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rsc/error.hpp"
#include "rsc/image.hpp"
#include "rsc/labels.hpp"
#include "rsc/rng.hpp"

namespace rsc {

struct Sample {
  Tensor image;  // 3 x H x W, raw or preprocessed
  FiveClassLabel label = FiveClassLabel::Bare;
  std::string id;
};

/// Labeled images. Labels are stored at five-class granularity; coarser
/// schemes are applied when the data is viewed for training.
struct Dataset {
  std::vector<Sample> items;

  std::size_t size() const noexcept { return items.size(); }
  bool empty() const noexcept { return items.empty(); }

  void validate() const {
    std::set<std::string> ids;
    for (const auto& s : items)
      if (!ids.insert(s.id).second) throw FormatError("duplicate sample id '" + s.id + "'");
  }

  std::vector<std::size_t> labels(LabelScheme scheme) const {
    std::vector<std::size_t> out;
    out.reserve(items.size());
    for (const auto& s : items) out.push_back(map_label(s.label, scheme));
    return out;
  }
};

inline std::size_t round_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
}

/// Seeded shuffle, then the first round(fraction * N) items train and the rest
/// test. No stratification.
inline std::pair<Dataset, Dataset> split_train_test(const Dataset& data, double train_fraction, SeededRng& rng) {
  if (data.empty()) throw RangeError("cannot split an empty dataset");
  if (!(train_fraction >= 0.0 && train_fraction <= 1.0)) throw RangeError("train fraction must lie in [0, 1]");
  const auto perm = permutation(data.size(), rng);
  const std::size_t n_train = round_count(train_fraction, data.size());
  std::pair<Dataset, Dataset> out;
  for (std::size_t i = 0; i < perm.size(); ++i) (i < n_train ? out.first : out.second).items.push_back(data.items[perm[i]]);
  return out;
}

/// Draws round(fraction * N) items without replacement.
inline Dataset bootstrap_subsample(const Dataset& train, double fraction, SeededRng& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw RangeError("subsample fraction must lie in (0, 1]");
  const auto perm = permutation(train.size(), rng);
  Dataset out;
  const std::size_t n = round_count(fraction, train.size());
  for (std::size_t i = 0; i < n; ++i) out.items.push_back(train.items[perm[i]]);
  return out;
}

/// Applies `preprocess` to every image.
inline Dataset preprocess_all(const Dataset& data, std::size_t out_h, std::size_t out_w) {
  Dataset out;
  out.items.reserve(data.size());
  for (const auto& s : data.items) out.items.push_back({preprocess(s.image, out_h, out_w), s.label, s.id});
  return out;
}

// ---------------------------------------------------------------- manifest
// manifest.csv: `id,path,five_class`, paths relative to the manifest's folder.

inline constexpr const char* kManifestName = "manifest.csv";

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}
}  // namespace detail

struct ManifestRow {
  std::string id;
  std::string path;
  FiveClassLabel label;
};

inline std::vector<ManifestRow> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open manifest '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id,path,five_class") throw FormatError(path + ": unexpected header '" + line + "'");
  std::vector<ManifestRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 3) throw FormatError(path + ":" + std::to_string(lineno) + ": expected 3 fields");
    rows.push_back({f[0], f[1], parse_five_class(f[2])});
  }
  return rows;
}

/// Reads `<dir>/manifest.csv` and every image it lists.
inline Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path root(dir);
  Dataset d;
  for (const auto& row : read_manifest((root / kManifestName).string()))
    d.items.push_back({load_image((root / row.path).string()), row.label, row.id});
  d.validate();
  return d;
}

/// Writes every sample as `<id>.ppm` plus the manifest. Rows follow dataset
/// order, so equal datasets produce byte-identical folders.
inline void save_dataset(const Dataset& data, const std::string& dir) {
  namespace fs = std::filesystem;
  data.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FileError("cannot create directory '" + dir + "': " + ec.message());
  std::string manifest = "id,path,five_class\n";
  for (const auto& s : data.items) {
    const std::string file = s.id + ".ppm";
    write_ppm(s.image, (fs::path(dir) / file).string());
    manifest += s.id + "," + file + "," + std::string(token(s.label)) + "\n";
  }
  write_file((fs::path(dir) / kManifestName).string(), manifest);
}

}  // namespace rsc
