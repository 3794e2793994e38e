#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace guidelearn {

using Vec2 = Eigen::Vector2d;

// Derives an independent stream seed from (root seed, purpose label, index).
// splitmix64 over the root seed mixed with an FNV-1a hash of the label and the
// index; every random stream in the project is keyed this way.
std::uint64_t derive_seed(std::uint64_t root, std::string_view label, std::uint64_t index = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  Vec2 normal2() {
    const double a = normal();
    const double b = normal();
    return {a, b};
  }
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * unit_(engine_);
  }
  // Index drawn with probability proportional to weights.
  int categorical(const std::vector<double>& weights);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

}  // namespace guidelearn
