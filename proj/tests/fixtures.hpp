#pragma once

#include <cstdint>

#include "dcae/data_io.hpp"
#include "dcae/matcomp.hpp"

namespace dcae::fixtures {

struct SyntheticCase {
  matcomp::MatcompProblem mp;
  Eigen::VectorXd x0;
};

/// Synthetic instance with the default model parameters, rank = t_true.
inline SyntheticCase synthetic_case(std::size_t m, std::size_t n, std::size_t t, double density,
                                    double noise_sd, std::uint64_t seed) {
  auto ratings = synthesize(m, n, t, density, noise_sd, seed);
  auto inst = matcomp::MatcompInstance::with_defaults(std::move(ratings), t);
  auto x0 = matcomp::initial_point(inst, seed + 1000).flatten();
  return {matcomp::build_dc_problem(std::move(inst)), std::move(x0)};
}

}  // namespace dcae::fixtures
