#pragma once

// Weight archive: named float32 tensors.
//
// File layout:
//   bytes 0..7    magic "SBWT0001"
//   bytes 8..15   header length H, unsigned little-endian
//   next H bytes  UTF-8 manifest, one line per tensor: "<name>\t<d0,d1,...>\t<offset>\n",
//                 offset counted in bytes from the start of the payload
//   payload       little-endian float32 data

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "slab/error.hpp"
#include "slab/io/csv.hpp"
#include "slab/lm/config.hpp"

namespace slab::lm {

static_assert(std::endian::native == std::endian::little,
              "weight archives are read by memcpy on little-endian hosts");

struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> data;

  std::int64_t elements() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

class WeightArchive {
 public:
  static constexpr std::string_view kMagic = "SBWT0001";

  void add(std::string name, Tensor tensor) {
    if (static_cast<std::int64_t>(tensor.data.size()) != tensor.elements()) {
      throw ShapeError(fmt::format("tensor '{}': {} values for shape [{}]", name,
                                   tensor.data.size(), fmt::join(tensor.shape, ",")));
    }
    auto [it, inserted] = index_.try_emplace(name, entries_.size());
    if (inserted) {
      entries_.emplace_back(std::move(name), std::move(tensor));
    } else {
      entries_[it->second].second = std::move(tensor);
    }
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const Tensor& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValidationError(fmt::format("missing tensor '{}'", name));
    return entries_[it->second].second;
  }

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

  std::int64_t total_elements() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : entries_) n += t.elements();
    return n;
  }

  std::string manifest() const {
    std::string out;
    std::int64_t offset = 0;
    for (const auto& [name, t] : entries_) {
      out += fmt::format("{}\t{}\t{}\n", name, fmt::join(t.shape, ","), offset);
      offset += t.elements() * 4;
    }
    return out;
  }

  std::string serialize() const {
    std::string header = manifest();
    std::string out(kMagic);
    std::uint64_t hlen = header.size();
    char lenbuf[8];
    std::memcpy(lenbuf, &hlen, 8);
    out.append(lenbuf, 8);
    out += header;
    for (const auto& [name, t] : entries_) {
      const auto* bytes = reinterpret_cast<const char*>(t.data.data());
      out.append(bytes, t.data.size() * sizeof(float));
    }
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError(fmt::format("cannot write weight archive '{}'", path));
    auto bytes = serialize();
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }

  static WeightArchive parse(std::string_view bytes, std::string_view source = "<archive>") {
    if (bytes.size() < 16 || bytes.substr(0, 8) != kMagic)
      throw ValidationError(fmt::format("{}: not a weight archive (bad magic)", source));
    std::uint64_t hlen = 0;
    std::memcpy(&hlen, bytes.data() + 8, 8);
    if (hlen > bytes.size() - 16)
      throw ValidationError(fmt::format("{}: truncated header", source));
    std::string_view header = bytes.substr(16, hlen);
    std::string_view payload = bytes.substr(16 + hlen);

    WeightArchive archive;
    std::size_t pos = 0;
    while (pos < header.size()) {
      auto nl = header.find('\n', pos);
      if (nl == std::string_view::npos) nl = header.size();
      std::string_view line = header.substr(pos, nl - pos);
      pos = nl + 1;
      if (line.empty()) continue;
      auto t1 = line.find('\t');
      auto t2 = line.find('\t', t1 == std::string_view::npos ? t1 : t1 + 1);
      if (t1 == std::string_view::npos || t2 == std::string_view::npos)
        throw ValidationError(fmt::format("{}: malformed manifest line '{}'", source, line));
      std::string name(line.substr(0, t1));
      std::string_view shape_text = line.substr(t1 + 1, t2 - t1 - 1);
      auto offset = io::parse_int(line.substr(t2 + 1), source, 0, "offset");

      Tensor t;
      std::size_t sp = 0;
      while (sp <= shape_text.size() && !shape_text.empty()) {
        auto comma = shape_text.find(',', sp);
        if (comma == std::string_view::npos) comma = shape_text.size();
        t.shape.push_back(io::parse_int(shape_text.substr(sp, comma - sp), source, 0, name));
        sp = comma + 1;
      }
      const auto n = t.elements();
      if (n < 0 || offset < 0 ||
          static_cast<std::uint64_t>(offset) + static_cast<std::uint64_t>(n) * 4 > payload.size())
        throw ValidationError(fmt::format(
            "{}: tensor '{}' declares {} elements beyond the payload", source, name, n));
      t.data.resize(static_cast<std::size_t>(n));
      std::memcpy(t.data.data(), payload.data() + offset, static_cast<std::size_t>(n) * 4);
      archive.add(std::move(name), std::move(t));
    }
    return archive;
  }

  static WeightArchive load(const std::string& path) { return parse(io::read_file(path), path); }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Checks that the archive provides exactly the tensors a config needs with
/// matching shapes. Errors name the offending tensor.
inline void check_archive(const WeightArchive& archive, const EngineConfig& config) {
  for (const auto& spec : config.required_tensors()) {
    if (!archive.contains(spec.name))
      throw ValidationError(fmt::format("missing tensor '{}'", spec.name));
    const auto& t = archive.at(spec.name);
    if (t.shape != spec.shape)
      throw ShapeError(fmt::format("shape mismatch for tensor '{}': archive has [{}], config needs [{}]",
                                   spec.name, fmt::join(t.shape, ","),
                                   fmt::join(spec.shape, ",")));
  }
}

enum class WeightInit { random, zero_projections };

/// Initializes a complete archive for a config. Matrices are drawn from
/// N(0, 1/fan_in); norm gains start near one. `zero_projections` zeroes every
/// matrix (embedding, projections, head), which makes every next-token
/// distribution uniform.
inline WeightArchive init_weights(const EngineConfig& config, std::uint64_t seed,
                                  WeightInit mode = WeightInit::random) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  WeightArchive archive;
  for (const auto& spec : config.required_tensors()) {
    Tensor t{spec.shape, std::vector<float>(static_cast<std::size_t>(spec.elements()))};
    const std::string& n = spec.name;
    auto ends_with = [&](std::string_view suffix) {
      return n.size() >= suffix.size() && n.compare(n.size() - suffix.size(), suffix.size(),
                                                    suffix) == 0;
    };
    auto fill = [&](auto gen) {
      for (auto& v : t.data) v = static_cast<float>(gen());
    };
    if (ends_with("norm.weight") || ends_with("ln0.weight") || ends_with("ln1.weight") ||
        ends_with("ln2.weight")) {
      fill([&] { return 1.0 + 0.1 * normal(rng); });
    } else if (ends_with(".bias") || ends_with(".b1") || ends_with(".b2")) {
      fill([&] { return 0.1 * normal(rng); });
    } else if (ends_with("mix_k") || ends_with("mix_v") || ends_with("mix_r")) {
      fill([&] { return unit(rng); });
    } else if (ends_with("att.decay")) {
      fill([&] { return -1.0 + normal(rng); });
    } else if (ends_with("att.first")) {
      fill([&] { return 0.5 * normal(rng); });
    } else if (ends_with("A_log")) {
      const auto N = spec.shape[1];
      for (std::int64_t i = 0; i < spec.shape[0]; ++i)
        for (std::int64_t j = 0; j < N; ++j)
          t.data[static_cast<std::size_t>(i * N + j)] =
              static_cast<float>(std::log(static_cast<double>(j + 1)) + 0.1 * normal(rng));
    } else if (ends_with(".D")) {
      fill([&] { return 1.0 + 0.1 * normal(rng); });
    } else if (ends_with("conv.weight")) {
      fill([&] { return 0.5 * normal(rng); });
    } else if (spec.shape.size() == 2) {
      // embeddings: unit scale; projections: 1/sqrt(fan_in)
      double scale = n == "embed" ? 1.0 : 1.0 / std::sqrt(static_cast<double>(spec.shape[0]));
      fill([&] { return scale * normal(rng); });
    } else {
      fill([&] { return 0.1 * normal(rng); });
    }
    if (mode == WeightInit::zero_projections && spec.shape.size() == 2) {
      std::fill(t.data.begin(), t.data.end(), 0.0f);
    }
    archive.add(spec.name, std::move(t));
  }
  return archive;
}

}  // namespace slab::lm
