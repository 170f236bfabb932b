#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nestseg/tensor.hpp"

namespace nestseg {

// Named trainable parameters plus Adam moment buffers. The map is ordered so
// iteration (and the checkpoint layout) is deterministic.
struct ParamStore {
  struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    int64_t step = 0;
  };

  std::map<std::string, Tensor> params;
  std::map<std::string, AdamState> opt_state;
  uint64_t rng_seed = 0;

  Tensor& add(const std::string& name, Tensor t) {
    check_config(!params.count(name), "ParamStore: duplicate parameter id '", name, "'");
    t.set_requires_grad(true);
    auto [it, ok] = params.emplace(name, std::move(t));
    (void)ok;
    return it->second;
  }

  void zero_grads() {
    for (auto& [name, p] : params) p.zero_grad();
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params) n += p.size();
    return n;
  }
};

// One Adam update with bias correction over every parameter; grads are zeroed
// afterwards. Parameters whose grad buffer was never allocated are an error.
void adam_step(ParamStore& store, double lr = 1e-3, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

// Flat binary checkpoint: magic "NSEG1", then per parameter (in map order):
// name length (u32 LE), name bytes, rank (u32 LE), dims (u32 LE each),
// values (f64 LE). Round-trips bit-exactly.
void save_checkpoint(const ParamStore& store, const std::string& path);
void load_checkpoint(ParamStore& store, const std::string& path);

}  // namespace nestseg
