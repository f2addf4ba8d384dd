#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rsc/binary_io.hpp"
#include "rsc/error.hpp"
#include "rsc/network.hpp"

namespace rsc {

// Weight archive, little-endian, no padding:
//   "RSCW" | u32 version | u32 len + fingerprint | u32 record count
//   per record: u32 len + name | u8 dtype (0 = f32) | u8 ndim | ndim x u32 dims
//               | product(dims) x f32

inline constexpr char kArchiveMagic[4] = {'R', 'S', 'C', 'W'};
inline constexpr std::uint32_t kArchiveVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;

struct ArchiveRecord {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct WeightArchive {
  std::uint32_t version = kArchiveVersion;
  std::string fingerprint;
  std::vector<ArchiveRecord> records;

  const ArchiveRecord* find(const std::string& name) const {
    for (const auto& r : records)
      if (r.name == name) return &r;
    return nullptr;
  }
};

inline WeightArchive to_archive(const Network& net) {
  WeightArchive a;
  a.fingerprint = net.profile.fingerprint();
  for (const auto& l : net.layers) {
    if (!l.spec.has_parameters()) continue;
    for (auto [suffix, t] : {std::pair{"/kernel", &l.state.weights}, std::pair{"/bias", &l.state.bias}}) {
      ArchiveRecord r{l.name + suffix, t->shape(), {}};
      r.values.reserve(t->size());
      for (double v : t->data()) r.values.push_back(static_cast<float>(v));
      a.records.push_back(std::move(r));
    }
  }
  return a;
}

inline std::string encode_archive(const WeightArchive& a) {
  ByteWriter w;
  w.raw(std::string_view(kArchiveMagic, 4));
  w.u32(a.version);
  w.str(a.fingerprint);
  w.u32(static_cast<std::uint32_t>(a.records.size()));
  for (const auto& r : a.records) {
    w.str(r.name);
    w.u8(kDtypeF32);
    w.u8(static_cast<std::uint8_t>(r.shape.size()));
    for (auto d : r.shape) w.u32(static_cast<std::uint32_t>(d));
    for (float v : r.values) w.f32(v);
  }
  return w.bytes();
}

inline WeightArchive decode_archive(std::string bytes, const std::string& source = "archive") {
  ByteReader rd(std::move(bytes), source);
  if (rd.raw(4) != std::string_view(kArchiveMagic, 4)) throw FormatError(source + ": bad magic");
  WeightArchive a;
  a.version = rd.u32();
  if (a.version != kArchiveVersion) throw FormatError(source + ": unsupported version " + std::to_string(a.version));
  a.fingerprint = rd.str();
  const std::uint32_t count = rd.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    ArchiveRecord r;
    r.name = rd.str();
    if (rd.u8() != kDtypeF32) throw FormatError(source + ": unsupported dtype in record '" + r.name + "'");
    const std::uint8_t ndim = rd.u8();
    if (ndim == 0) throw FormatError(source + ": record '" + r.name + "' has no dimensions");
    std::size_t n = 1;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      const std::uint32_t e = rd.u32();
      if (e == 0) throw FormatError(source + ": zero extent in record '" + r.name + "'");
      r.shape.push_back(e);
      n *= e;
    }
    rd.require(n * 4);
    r.values.resize(n);
    for (auto& v : r.values) v = rd.f32();
    a.records.push_back(std::move(r));
  }
  if (!rd.at_end()) throw FormatError(source + ": " + std::to_string(rd.remaining()) + " trailing bytes");
  return a;
}

inline void save_weights(const Network& net, const std::string& path) { write_file(path, encode_archive(to_archive(net))); }

inline WeightArchive read_archive(const std::string& path) { return decode_archive(read_file(path), path); }

/// Rebuilds a network of `profile` from archive contents. The fingerprint
/// must match the profile and every parameter record must be present with
/// the expected shape.
inline Network network_from_archive(const WeightArchive& a, const ArchitectureProfile& profile) {
  if (a.fingerprint != profile.fingerprint())
    throw CompatibilityError("archive fingerprint " + a.fingerprint + " does not match profile " + profile.name + " (" +
                             profile.fingerprint() + ")");
  SeededRng unused(0);
  Network net = build_network(profile, unused);
  std::size_t used = 0;
  for (auto& l : net.layers) {
    if (!l.spec.has_parameters()) continue;
    for (auto [suffix, t] : {std::pair{"/kernel", &l.state.weights}, std::pair{"/bias", &l.state.bias}}) {
      const ArchiveRecord* r = a.find(l.name + suffix);
      if (!r) throw CompatibilityError("archive lacks record '" + l.name + suffix + "'");
      if (r->shape != t->shape())
        throw CompatibilityError("record '" + r->name + "' has shape " + shape_str(r->shape) + ", expected " +
                                 shape_str(t->shape()));
      for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = static_cast<double>(r->values[i]);
      ++used;
    }
  }
  if (used != a.records.size()) throw CompatibilityError("archive holds records the profile does not use");
  net.head_trained = profile.has_head();
  return net;
}

inline Network load_weights(const std::string& path, const ArchitectureProfile& profile) {
  return network_from_archive(read_archive(path), profile);
}

/// Recovers the head widths and class count of an archive written for
/// `input_profile`'s input and conv blocks, then verifies the fingerprint.
inline ArchitectureProfile profile_from_archive(const WeightArchive& a, const ArchitectureProfile& input_profile) {
  ArchitectureProfile p = input_profile.conv_base();
  for (std::size_t i = 1;; ++i) {
    const ArchiveRecord* r = a.find("fc" + std::to_string(i) + "/bias");
    if (!r) break;
    p.fc_head.push_back(r->shape.at(0));
  }
  if (const ArchiveRecord* r = a.find("predictions/bias")) p.num_classes = r->shape.at(0);
  if (p.fingerprint() != a.fingerprint)
    throw CompatibilityError("archive fingerprint " + a.fingerprint + " does not match any " + input_profile.name +
                             " layout");
  return p;
}

/// Finds the built-in profile whose input and conv blocks match the archive.
inline ArchitectureProfile infer_profile(const WeightArchive& a) {
  for (const auto& candidate : {ArchitectureProfile::mini_32(), ArchitectureProfile::vgg16_150()}) {
    try {
      return profile_from_archive(a, candidate);
    } catch (const CompatibilityError&) {
    }
  }
  throw CompatibilityError("archive fingerprint " + a.fingerprint + " matches no built-in profile");
}

/// Loads an archive whose layout is inferred from its records.
inline Network load_network(const std::string& path) {
  const WeightArchive a = read_archive(path);
  return network_from_archive(a, infer_profile(a));
}

}  // namespace rsc
