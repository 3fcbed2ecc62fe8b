#pragma once

#include <array>
#include <cmath>

namespace tocp::detail {

// Gauss-Legendre rules mapped to [0, 1].
struct GaussRule {
  static constexpr int kPoints = 5;
  static constexpr std::array<double, 5> nodes = {
      0.5 - 0.5 * 0.9061798459386640, 0.5 - 0.5 * 0.5384693101056831, 0.5,
      0.5 + 0.5 * 0.5384693101056831, 0.5 + 0.5 * 0.9061798459386640};
  static constexpr std::array<double, 5> weights = {
      0.5 * 0.2369268850561891, 0.5 * 0.4786286704993665, 0.5 * 0.5688888888888889,
      0.5 * 0.4786286704993665, 0.5 * 0.2369268850561891};
};

struct GaussRule3 {
  static constexpr int kPoints = 3;
  static constexpr std::array<double, 3> nodes = {0.5 - 0.5 * 0.7745966692414834, 0.5,
                                                  0.5 + 0.5 * 0.7745966692414834};
  static constexpr std::array<double, 3> weights = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
};

}  // namespace tocp::detail
