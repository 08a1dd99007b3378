#include "mskam/example.hpp"

#include <algorithm>
#include <cmath>

namespace mskam {

HamiltonianSpec example_coorbital(double eps, double a) {
    if (!(eps > 0.0) || !(eps < 1.0))
        throw std::invalid_argument("example requires eps in (0, 1)");
    if (!(a > 2.0)) throw std::invalid_argument("example requires a > 2");

    const int n = 6;
    const std::vector<double> exponents{0.0, 2.0, a, 3.0, a + 1.0, 4.0};
    std::vector<double> scales(n);
    for (int i = 0; i < n; ++i) scales[i] = std::pow(eps, exponents[i]);
    const double eps_min = *std::min_element(scales.begin(), scales.end());
    // perturbation size eps^{a+2} expressed through the ratio eps_pert/eps_min
    const double ratio = std::pow(eps, a + 2.0) / eps_min;
    ScaleSet scale_set(scales, ratio);

    std::vector<FourierTaylorSeries> parts;
    parts.reserve(n);
    for (int i = 0; i < n; ++i) {
        std::vector<int> j(n, 0);
        j[i] = 2;
        parts.push_back(FourierTaylorSeries::action_monomial(n, MultiIndex(j), 1.0));
    }

    std::vector<SeriesTerm> pert_terms{
        {FourierMode(std::vector<int>{1, 1, 0, 0, 0, 0}), MultiIndex(std::vector<int>(n, 0)), 0.5},
        {FourierMode(std::vector<int>{-1, -1, 0, 0, 0, 0}), MultiIndex(std::vector<int>(n, 0)), 0.5}};
    FourierTaylorSeries pert(n, pert_terms, true);

    Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -2.0);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, 2.0);
    return HamiltonianSpec(n, 4, std::move(parts), std::move(pert),
                           std::move(scale_set), std::move(lo), std::move(hi));
}

std::string scale_ordering(const ScaleSet& scales) {
    for (std::size_t i = 1; i < scales.epsilons.size(); ++i)
        if (!(scales.epsilons[i] < scales.epsilons[i - 1])) return "disordered";
    return "ordered";
}

}  // namespace mskam
