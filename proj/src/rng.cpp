#include "deepgep/rng.hpp"

#include <stdexcept>

namespace deepgep {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_label(std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

RngStream::RngStream(std::uint64_t master_seed, std::string_view label)
    : RngStream(master_seed, splitmix64(master_seed ^ splitmix64(hash_label(label))),
                std::string(label)) {}

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t key, std::string label)
    : master_seed_(master_seed), key_(key), label_(std::move(label)), engine_(key) {}

RngStream RngStream::derive(std::string_view purpose, std::uint64_t index) const {
  std::uint64_t k = splitmix64(key_ ^ hash_label(purpose));
  k = splitmix64(k + splitmix64(index + 0x632be59bd9b4e019ULL));
  std::string child = label_;
  child += '/';
  child += purpose;
  child += '#';
  child += std::to_string(index);
  return RngStream(master_seed_, k, std::move(child));
}

std::size_t RngStream::discrete(std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("discrete: empty support");
  if (probs.size() == 1) return 0;
  const double u = uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return probs.size() - 1;
}

void RngStream::fill_normal(std::span<double> out) {
  for (double& v : out) v = normal_(engine_);
}

}  // namespace deepgep
