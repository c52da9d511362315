#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "slab/lm/engine.hpp"

namespace slab::fixtures {

inline lm::EngineConfig small_config(lm::Family family, int vocab = 64, int d_model = 32,
                                     int layers = 2) {
  switch (family) {
    case lm::Family::transformer: return lm::EngineConfig::transformer(vocab, d_model, layers, 4);
    case lm::Family::rwkv: return lm::EngineConfig::rwkv(vocab, d_model, layers);
    case lm::Family::mamba: return lm::EngineConfig::mamba(vocab, d_model, layers, 8);
  }
  return {};
}

inline lm::Engine random_engine(lm::Family family, std::uint64_t seed, int vocab = 64,
                                int d_model = 32, int layers = 2) {
  auto cfg = small_config(family, vocab, d_model, layers);
  return lm::Engine::load(lm::init_weights(cfg, seed), cfg);
}

inline lm::Engine uniform_engine(lm::Family family, int vocab, int d_model = 16) {
  auto cfg = small_config(family, vocab, d_model, 1);
  return lm::Engine::load(lm::init_weights(cfg, 0, lm::WeightInit::zero_projections), cfg);
}

inline std::vector<lm::TokenId> random_ids(std::mt19937_64& rng, std::size_t n, int vocab) {
  // BOS (vocab - 1) is excluded so sequences look like ordinary text.
  std::uniform_int_distribution<lm::TokenId> pick(0, static_cast<lm::TokenId>(vocab - 2));
  std::vector<lm::TokenId> ids(n);
  for (auto& id : ids) id = pick(rng);
  return ids;
}

inline constexpr lm::Family kAllFamilies[] = {lm::Family::transformer, lm::Family::rwkv,
                                              lm::Family::mamba};

}  // namespace slab::fixtures
