#pragma once

#include "mskam/model.hpp"

namespace mskam {

/// Built-in co-orbital example: six quadratic integrable parts H_i = I_i^2
/// with scale factors (1, eps^2, eps^a, eps^3, eps^{a+1}, eps^4) and a
/// synthetic perturbation eps^{a+2} cos(theta_1 + theta_2).
/// Requires eps in (0,1) and a > 2.
HamiltonianSpec example_coorbital(double eps, double a);

/// "ordered" when the scale factors are strictly decreasing, "disordered"
/// otherwise (ties count as disordered).
std::string scale_ordering(const ScaleSet& scales);

}  // namespace mskam
