#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>

#include <boost/random/normal_distribution.hpp>

namespace deepgep {

/// Deterministic random stream keyed by a 64-bit master seed and a chain of
/// labels. Child streams are derived by hashing (parent key, purpose, index),
/// so every consumer gets an independent, replayable sequence regardless of
/// the order in which streams are created or the thread that consumes them.
class RngStream {
 public:
  using Engine = std::mt19937_64;

  RngStream(std::uint64_t master_seed, std::string_view label = "root");

  /// Independent child stream. Does not advance this stream.
  [[nodiscard]] RngStream derive(std::string_view purpose,
                                 std::uint64_t index = 0) const;

  double normal() { return normal_(engine_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  /// Index drawn from a finite distribution; `probs` must sum to one.
  std::size_t discrete(std::span<const double> probs);
  void fill_normal(std::span<double> out);

  std::uint64_t key() const { return key_; }
  std::uint64_t master_seed() const { return master_seed_; }
  const std::string& label() const { return label_; }
  Engine& engine() { return engine_; }

 private:
  RngStream(std::uint64_t master_seed, std::uint64_t key, std::string label);

  std::uint64_t master_seed_;
  std::uint64_t key_;
  std::string label_;
  Engine engine_;
  boost::random::normal_distribution<double> normal_;
};

std::uint64_t hash_label(std::string_view label);
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace deepgep
