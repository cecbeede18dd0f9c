#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stmae/params.hpp"

namespace stmae {

inline constexpr double kGradCheckTolerance = 1e-4;

struct GradCheckCase {
    std::string name;
    GradCheckResult result;
};

/// Finite-difference checks of every differentiable kernel, of L_pred, and
/// of the pretraining loss (lambda = 1) on a 4-node toy model with
/// H = F = 4, D = 3, L = 2.
std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed = 0);

}  // namespace stmae
