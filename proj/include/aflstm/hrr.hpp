#pragma once

// Holographic reduced representation store: pairs are bound by circular
// convolution, superposed by summation, unbound by circular correlation, and
// the noisy result is resolved against a cleanup memory by dot-product argmax.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "aflstm/errors.hpp"
#include "aflstm/holo.hpp"

namespace aflstm::hrr {

inline RealVector encode(std::span<const double> h, std::span<const double> s) { return holo::circ_conv(h, s); }

inline RealVector decode(std::span<const double> h, std::span<const double> m) { return holo::circ_corr(h, m); }

inline double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = std::sqrt(dot(a, a));
  const double nb = std::sqrt(dot(b, b));
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

inline RealVector unit(std::span<const double> v) {
  const double n = std::sqrt(dot(v, v));
  RealVector out(v.begin(), v.end());
  if (n > 0.0) {
    for (double& x : out) x /= n;
  }
  return out;
}

// Standard-normal entries scaled to unit norm.
template <class Rng>
RealVector random_unit(std::size_t d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  RealVector v(d);
  for (double& x : v) x = normal(rng);
  return unit(v);
}

class CleanupMemory {
 public:
  struct Item {
    std::string key;
    RealVector vector;
  };

  explicit CleanupMemory(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw DimensionError("cleanup memory dimension must be positive");
  }

  // Stores a unit-normalized copy of `v`.
  void add(std::string key, std::span<const double> v) {
    if (v.size() != dim_) {
      throw DimensionError("cleanup memory of dimension " + std::to_string(dim_) + " given vector of length " +
                           std::to_string(v.size()));
    }
    if (!keys_.insert(key).second) throw ContractError("duplicate cleanup key '" + key + "'");
    items_.push_back(Item{std::move(key), unit(v)});
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const std::vector<Item>& items() const { return items_; }

 private:
  std::size_t dim_;
  std::vector<Item> items_;
  std::unordered_set<std::string> keys_;
};

// Index of the stored item with the largest dot product; ties go to the earliest insertion.
inline std::size_t cleanup_index(std::span<const double> probe, const CleanupMemory& mem) {
  if (mem.empty()) throw EmptyStoreError("cleanup on an empty memory");
  if (probe.size() != mem.dim()) {
    throw DimensionError("probe length " + std::to_string(probe.size()) + " vs memory dimension " + std::to_string(mem.dim()));
  }
  std::size_t best = 0;
  double best_score = dot(probe, mem.items()[0].vector);
  for (std::size_t i = 1; i < mem.size(); ++i) {
    const double score = dot(probe, mem.items()[i].vector);
    if (score > best_score) {
      best_score = score;
      best = i;
    }
  }
  return best;
}

inline const std::string& cleanup(std::span<const double> probe, const CleanupMemory& mem) {
  return mem.items()[cleanup_index(probe, mem)].key;
}

// Superposes `num_pairs` bound (key, value) pairs in one trace, then decodes
// every value from its key and cleans it up against the stored values.
// Returns the fraction of correct retrievals over all trials and pairs.
inline double capacity_experiment(std::size_t d, std::size_t num_pairs, std::size_t trials, std::uint64_t seed) {
  if (d < 2) throw ContractError("capacity_experiment: d must be at least 2");
  if (num_pairs < 1) throw ContractError("capacity_experiment: num_pairs must be at least 1");
  if (trials < 1) throw ContractError("capacity_experiment: trials must be at least 1");
  std::mt19937_64 rng(seed);
  std::size_t correct = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<RealVector> keys;
    CleanupMemory values(d);
    RealVector trace(d, 0.0);
    for (std::size_t p = 0; p < num_pairs; ++p) {
      keys.push_back(random_unit(d, rng));
      RealVector v = random_unit(d, rng);
      const RealVector m = encode(keys.back(), v);
      for (std::size_t i = 0; i < d; ++i) trace[i] += m[i];
      values.add(std::to_string(p), v);
    }
    for (std::size_t p = 0; p < num_pairs; ++p) {
      if (cleanup_index(decode(keys[p], trace), values) == p) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(trials * num_pairs);
}

}  // namespace aflstm::hrr
