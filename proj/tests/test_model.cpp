#include <cmath>
#include <random>

#include "doctest.h"
#include "mskam/example.hpp"
#include "mskam/model.hpp"
#include "test_helpers.hpp"

using namespace mskam;
using namespace mskam::testing;

TEST_CASE("scale set: extrema and perturbation size") {
    ScaleSet s({0.5, 0.01, 0.2}, 0.1);
    CHECK(s.eps_min() == 0.01);
    CHECK(s.eps_max() == 0.5);
    CHECK(s.eps_pert() == 0.1 * 0.01);
    CHECK_THROWS_AS(ScaleSet({0.5, -0.1}, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(ScaleSet({0.5}, 0.0), std::invalid_argument);
}

TEST_CASE("expand_at: quadratic shift identity") {
    // single scale, H = I_1^2, base point (1, 0)
    const int n = 2;
    std::vector<int> j(n, 0);
    j[0] = 2;
    std::vector<FourierTaylorSeries> parts{
        FourierTaylorSeries::action_monomial(n, MultiIndex(j), 1.0)};
    ScaleSet scales({0.25}, 0.5);
    FourierTaylorSeries pert(n);
    HamiltonianSpec spec(n, 4, parts, pert, scales,
                         Eigen::VectorXd::Constant(n, -3.0),
                         Eigen::VectorXd::Constant(n, 3.0));
    Eigen::VectorXd xi(n);
    xi << 1.0, 0.0;
    auto ex = expand_at(spec, xi, DomainWindow(0.5, 1.0, 0.1));
    CHECK(ex.nf.e_parts[0] == doctest::Approx(1.0));
    CHECK(ex.nf.omega_parts[0][0] == doctest::Approx(2.0));
    CHECK(ex.nf.omega_parts[0][1] == 0.0);
    CHECK(ex.nf.a_parts[0](0, 0) == doctest::Approx(2.0));
    CHECK(ex.tail.empty());

    // combined quantities carry the scale factor
    CHECK(ex.nf.energy() == doctest::Approx(0.25));
    CHECK(ex.nf.frequency()[0] == doctest::Approx(0.5));
}

TEST_CASE("expand_at: xi = 0 reproduces the spec's own coefficients") {
    std::mt19937_64 rng(5);
    const int n = 2;
    auto part = random_series(rng, n, 0, 5, 12).filter_fourier_below(0);
    std::vector<FourierTaylorSeries> parts{part};
    ScaleSet scales({0.5}, 0.5);
    HamiltonianSpec spec(n, 4, parts, FourierTaylorSeries(n), scales,
                         Eigen::VectorXd::Constant(n, -3.0),
                         Eigen::VectorXd::Constant(n, 3.0));
    auto ex = expand_at(spec, Eigen::VectorXd::Zero(n), DomainWindow(0.5, 1.0, 0.1));
    // low degrees match the original coefficients exactly
    const FourierMode k0(std::vector<int>{0, 0});
    CHECK(ex.nf.e_parts[0] ==
          part.coefficient(k0, idx({0, 0})).real());
    CHECK(ex.nf.omega_parts[0][0] == part.coefficient(k0, idx({1, 0})).real());
    CHECK(ex.nf.a_parts[0](0, 1) == part.coefficient(k0, idx({1, 1})).real());
}

TEST_CASE("expand_at: co-orbital example reassembles pointwise") {
    const double eps = 0.07, a = 3.3;
    auto spec = example_coorbital(eps, a);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> xdist(-1.0, 1.0);
    Eigen::VectorXd xi(6);
    for (int i = 0; i < 6; ++i) xi[i] = xdist(rng);
    const DomainWindow window(0.4, 1.0, 0.1);
    auto ex = expand_at(spec, xi, window);

    const double eps_pert = spec.scales.eps_pert();
    for (int rep = 0; rep < 20; ++rep) {
        auto [actions, angles] = random_point(rng, 6, 0.35);
        // original H at (xi + I, theta)
        std::vector<Complex> shifted(6);
        for (int i = 0; i < 6; ++i) shifted[i] = actions[i] + xi[i];
        Complex orig(0.0, 0.0);
        for (int i = 0; i < 6; ++i)
            orig += spec.scales.epsilons[i] *
                    spec.integrable_parts[i].evaluate(shifted, angles);
        orig += eps_pert * spec.perturbation.evaluate(shifted, angles);

        Complex rebuilt = ex.nf.to_series().evaluate(actions, angles);
        rebuilt += ex.tail.evaluate(actions, angles);
        rebuilt += eps_pert * ex.pert.evaluate(actions, angles);
        CHECK(std::abs(orig - rebuilt) <= 1e-12 * (1.0 + std::abs(orig)));
    }
}

TEST_CASE("expand_at: boundary distance precondition") {
    auto spec = example_coorbital(0.1, 3.0);
    Eigen::VectorXd xi = Eigen::VectorXd::Constant(6, 1.9);
    CHECK_THROWS_AS(expand_at(spec, xi, DomainWindow(0.5, 1.0, 0.1)),
                    std::invalid_argument);
}

TEST_CASE("scale-combination linearity") {
    auto spec = example_coorbital(0.1, 3.0);
    Eigen::VectorXd xi = Eigen::VectorXd::Constant(6, 0.8);
    const DomainWindow window(0.3, 1.0, 0.1);
    auto ex = expand_at(spec, xi, window);

    const double lambda = 0.5;
    std::vector<double> scaled = spec.scales.epsilons;
    for (double& e : scaled) e *= lambda;
    HamiltonianSpec spec2(spec.dim, spec.m_taylor, spec.integrable_parts,
                          spec.perturbation, ScaleSet(scaled, spec.scales.epsilon_ratio),
                          spec.domain_lo, spec.domain_hi);
    auto ex2 = expand_at(spec2, xi, window);
    CHECK(ex2.nf.energy() == doctest::Approx(lambda * ex.nf.energy()).epsilon(1e-14));
    CHECK((ex2.nf.frequency() - lambda * ex.nf.frequency()).norm() <=
          1e-14 * ex.nf.frequency().norm());
    CHECK((ex2.nf.hessian() - lambda * ex.nf.hessian()).norm() <=
          1e-14 * ex.nf.hessian().norm());
}

TEST_CASE("perturbation gate") {
    const int n = 2;
    ScaleSet scales({0.5}, 1e-3);  // eps_pert = 5e-4
    const DomainWindow window(0.5, 0.3, 0.1);
    CHECK(perturbation_gate(FourierTaylorSeries(n), window, scales, 1.0));

    // constant exactly c * eps: strict inequality fails
    auto at_gate = FourierTaylorSeries::constant(n, 5e-4);
    CHECK_FALSE(perturbation_gate(at_gate, window, scales, 1.0));

    auto small = FourierTaylorSeries::constant(n, 1e-6);
    CHECK(perturbation_gate(small, window, scales, 1.0));
}

TEST_CASE("co-orbital example: tail gate with the default window radius") {
    // a = 3, eps = 0.01; r = eps_pert^{1/m}; tail is empty for the
    // quadratic example so the gate reduces to the perturbation itself
    const double eps = 0.01, a = 3.0;
    auto spec = example_coorbital(eps, a);
    Eigen::VectorXd xi = Eigen::VectorXd::Constant(6, 0.9);
    const double r = std::pow(spec.scales.eps_pert(), 1.0 / spec.m_taylor);
    const DomainWindow window(r, 1.0, 0.1);
    auto ex = expand_at(spec, xi, window);
    auto full_pert = add(ex.tail, ex.pert.scaled(spec.scales.eps_pert()));
    CHECK(perturbation_gate(full_pert, window, spec.scales, 10.0));
}

TEST_CASE("normal form validation rejects asymmetric hessian parts") {
    NormalForm nf(2, 4, ScaleSet({0.5}, 0.1));
    nf.a_parts[0] << 1.0, 0.5, -0.5, 1.0;
    CHECK_THROWS_AS(nf.validate(), std::invalid_argument);
}

TEST_CASE("example scale vector at a = 3, eps = 0.1 is tied (disordered)") {
    auto spec = example_coorbital(0.1, 3.0);
    const std::vector<double> expect{1.0, 1e-2, 1e-3, 1e-3, 1e-4, 1e-4};
    for (int i = 0; i < 6; ++i)
        CHECK(spec.scales.epsilons[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    CHECK(scale_ordering(spec.scales) == "disordered");
}
