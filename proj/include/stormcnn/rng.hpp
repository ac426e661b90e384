#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace stormcnn {

struct RngRecord {
  std::string algorithm;
  std::uint64_t seed = 0;
  std::uint64_t position = 0;
};

// Seeded 64-bit generator. Draws are counted so a stream can be replayed from its record.
class Rng {
 public:
  static constexpr const char* kAlgorithm = "mt19937_64";

  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}
  static Rng restore(const RngRecord& record);

  std::uint64_t next_u64() {
    ++position_;
    return engine_();
  }
  // Uniform on [0, 1) with 53 random bits; independent of the standard library's distributions.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();

  RngRecord record() const { return {kAlgorithm, seed_, position_}; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t position_ = 0;
  std::mt19937_64 engine_;
};

// Stateless mixing of a base seed with stream coordinates (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace stormcnn
