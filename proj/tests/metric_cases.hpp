#pragma once

// Ten hand-built evaluation episodes with hand-computed metrics at the
// thresholds 50, 20, 10 and 5 mm. Distances are dyadic where possible so
// every expected return is exact.

#include <array>
#include <optional>
#include <vector>

#include "reach/env.hpp"

namespace metric_cases {

inline const std::vector<double> kThresholds{0.05, 0.02, 0.01, 0.005};

struct Case {
  const char* name;
  std::vector<double> distances;
  double expected_return;
  std::array<double, 4> success;
  std::array<std::optional<double>, 4> reach;
};

inline reach::EpisodeLog log_of(const Case& c) {
  reach::EpisodeLog log;
  log.distances = c.distances;
  for (double d : c.distances) log.rewards.push_back(-(d * d));
  return log;
}

inline std::vector<double> repeat(double d, int n) { return std::vector<double>(static_cast<std::size_t>(n), d); }

inline std::vector<double> ramp_then(double d, int n, double last) {
  auto v = repeat(d, n);
  v.push_back(last);
  return v;
}

inline const std::vector<Case>& cases() {
  static const std::vector<Case> all = {
      {"never moves at 0.3 m", repeat(0.3, 100), -9.0, {0, 0, 0, 0}, {}},
      {"ends at 31.25 mm", {0.25, 0.0625, 0.03125}, -0.0673828125, {1, 0, 0, 0}, {3.0, {}, {}, {}}},
      {"ends at 7.8 mm", {0.125, 0.03125, 0.015625, 0.0078125}, -0.01690673828125, {1, 1, 1, 0},
       {2.0, 3.0, 4.0, {}}},
      {"crosses then overshoots", {0.25, 0.03125, 0.25}, -0.1259765625, {0, 0, 0, 0}, {}},
      {"terminates inside 0.5 mm", {0.0625, 0.0001220703125}, -0.0039062649011611938, {1, 1, 1, 1},
       {2.0, 2.0, 2.0, 2.0}},
      {"stops exactly on the 50 mm boundary", {0.05}, -0.0025000000000000005, {0, 0, 0, 0}, {}},
      {"arrives on the last step", ramp_then(0.25, 99, 0.015625), -6.187744140625, {1, 1, 0, 0},
       {100.0, 100.0, {}, {}}},
      {"leaves and re-enters", {0.03125, 0.0625, 0.03125}, -0.005859375, {1, 0, 0, 0}, {1.0, {}, {}, {}}},
      {"starts inside 5 mm", repeat(0.00390625, 5), -0.0000762939453125, {1, 1, 1, 1}, {1.0, 1.0, 1.0, 1.0}},
      {"approaches without arriving", {0.25, 0.125}, -0.078125, {0, 0, 0, 0}, {}},
  };
  return all;
}

// Over all ten logs.
inline constexpr std::array<double, 4> kSuccessAll{0.6, 0.4, 0.3, 0.2};
inline const std::array<std::optional<double>, 4> kReachAll{109.0 / 6.0, 106.0 / 4.0, 7.0 / 3.0, 1.5};

}  // namespace metric_cases
