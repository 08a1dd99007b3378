#include <cmath>
#include <random>

#include "doctest.h"
#include "mskam/conditions.hpp"
#include "mskam/example.hpp"
#include "test_helpers.hpp"

using namespace mskam;
using namespace mskam::testing;

namespace {

// omega(xi) = xi as a polynomial field
std::vector<FourierTaylorSeries> identity_field(int n) {
    std::vector<FourierTaylorSeries> field;
    for (int i = 0; i < n; ++i) {
        std::vector<int> j(n, 0);
        j[i] = 1;
        field.push_back(FourierTaylorSeries::action_monomial(n, MultiIndex(j), 1.0));
    }
    return field;
}

std::vector<Eigen::VectorXd> grid_2d() {
    std::vector<Eigen::VectorXd> grid;
    for (double x : {-1.0, 0.0, 0.7})
        for (double y : {-0.6, 0.4}) {
            Eigen::VectorXd p(2);
            p << x, y;
            grid.push_back(p);
        }
    return grid;
}

NormalForm nf_with_hessian(const Eigen::MatrixXd& a, const Eigen::VectorXd& omega,
                           const ScaleSet& scales) {
    NormalForm nf(static_cast<int>(a.rows()), 4, scales);
    nf.a_parts[0] = a / scales.epsilons[0];
    nf.omega_parts[0] = omega / scales.epsilons[0];
    return nf;
}

}  // namespace

TEST_CASE("check_R: identity map passes, duplicated rows fail") {
    auto rep = check_R(identity_field(2), grid_2d(), -1.0);
    CHECK(rep.pass);
    CHECK(rep.margin >= 1.0);

    // omega(xi) = (xi_1, xi_1): all derivative columns have equal rows
    std::vector<FourierTaylorSeries> dup;
    std::vector<int> j{1, 0};
    dup.push_back(FourierTaylorSeries::action_monomial(2, MultiIndex(j), 1.0));
    dup.push_back(FourierTaylorSeries::action_monomial(2, MultiIndex(j), 1.0));
    auto rep2 = check_R(dup, grid_2d(), -1.0);
    CHECK_FALSE(rep2.pass);
}

TEST_CASE("check_R: co-orbital frequency map has full-rank diagonal jacobian") {
    const double eps = 1e-3, a = 3.0;
    auto spec = example_coorbital(eps, a);
    // combined omega(xi) = 2 (xi_1, eps^2 xi_2, ...): derivative stack
    // smallest singular value is 2 eps^{a+1} = 2 eps_min
    std::vector<FourierTaylorSeries> field;
    FourierTaylorSeries combined(6);
    for (int i = 0; i < 6; ++i)
        combined = add(combined, spec.integrable_parts[i]
                                     .scaled(spec.scales.epsilons[i]))
                       .with_rel_floor(0.0);
    for (int i = 0; i < 6; ++i) field.push_back(combined.derivative_action(i));
    std::vector<Eigen::VectorXd> grid{Eigen::VectorXd::Constant(6, 0.9)};
    const double tol = spec.scales.eps_min();
    auto rep = check_R(field, grid, tol, 1);
    CHECK(rep.pass);
    CHECK(rep.margin == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("check_K: scaled identity and zero matrix") {
    ScaleSet scales({0.5}, 0.1);  // eps_min = 0.5
    const int n = 3;
    auto nf = nf_with_hessian(2.0 * scales.eps_min() * Eigen::MatrixXd::Identity(n, n),
                              Eigen::VectorXd::Zero(n), scales);
    auto rep = check_K(nf, n, 1.0);
    CHECK(rep.pass);
    CHECK(rep.margin == doctest::Approx(2.0).epsilon(1e-12));

    auto zero = nf_with_hessian(Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n),
                                scales);
    for (int n1 = 1; n1 <= n; ++n1) CHECK_FALSE(check_K(zero, n1, 1.0).pass);
}

TEST_CASE("check_K: co-orbital hessian margin") {
    const double eps = 0.1, a = 3.0;
    auto spec = example_coorbital(eps, a);
    Eigen::VectorXd xi = Eigen::VectorXd::Constant(6, 0.9);
    auto ex = expand_at(spec, xi, DomainWindow(0.2, 1.0, 0.1));
    // smallest singular value 2 eps^4 with eps_min = eps^4
    auto rep = check_K(ex.nf, 6, 1.0);
    CHECK(rep.pass);
    CHECK(rep.margin == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("check_K: monotone in c") {
    std::mt19937_64 rng(3);
    ScaleSet scales({0.3}, 0.1);
    Eigen::MatrixXd a = Eigen::MatrixXd::Random(4, 4);
    a = (a + a.transpose()).eval();
    auto nf = nf_with_hessian(a, Eigen::VectorXd::Zero(4), scales);
    auto rep1 = check_K(nf, 2, 1.0);
    auto rep2 = check_K(nf, 2, 0.25);
    CHECK(rep2.margin == doctest::Approx(rep1.margin * 2.0).epsilon(1e-12));
}

TEST_CASE("check_K with n1 = n equals a direct smallest singular value") {
    std::mt19937_64 rng(31);
    ScaleSet scales({0.5}, 0.1);
    for (int rep = 0; rep < 5; ++rep) {
        Eigen::MatrixXd a = Eigen::MatrixXd::Random(4, 4);
        a = (0.5 * (a + a.transpose())).eval();
        auto nf = nf_with_hessian(a, Eigen::VectorXd::Zero(4), scales);
        auto report = check_K(nf, 4, 1.0);
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
        const double direct = svd.singularValues()(3);
        CHECK(report.margin ==
              doctest::Approx(direct / scales.eps_min()).epsilon(1e-10));
    }
}

TEST_CASE("check_K: permutation equivariance") {
    ScaleSet scales({0.5}, 0.1);
    Eigen::MatrixXd a(3, 3);
    a << 4.0, 1.0, 0.2, 1.0, 3.0, 0.1, 0.2, 0.1, 0.05;
    auto nf = nf_with_hessian(a, Eigen::VectorXd::Zero(3), scales);
    auto rep = check_K(nf, 2, 1.0);

    Eigen::PermutationMatrix<Eigen::Dynamic> perm(3);
    perm.indices() << 2, 0, 1;
    Eigen::MatrixXd ap = perm.transpose() * a * perm;
    auto nfp = nf_with_hessian(ap, Eigen::VectorXd::Zero(3), scales);
    auto repp = check_K(nfp, 2, 1.0);
    CHECK(repp.margin == doctest::Approx(rep.margin).epsilon(1e-12));
}

TEST_CASE("check_I: zero data fails, 1-d bordered pair passes") {
    ScaleSet scales({0.01}, 0.1);
    auto zero = nf_with_hessian(Eigen::MatrixXd::Zero(2, 2), Eigen::VectorXd::Zero(2),
                                scales);
    CHECK_FALSE(check_I(zero, 1, 1.0).pass);

    // n = 1: bordered ((2 eps, 1), (1, 0)), determinant -1
    NormalForm nf(1, 4, scales);
    nf.a_parts[0] = Eigen::MatrixXd::Constant(1, 1, 2.0 * scales.eps_min() /
                                                        scales.epsilons[0]);
    nf.omega_parts[0] = Eigen::VectorXd::Constant(1, 1.0 / scales.epsilons[0]);
    auto rep = check_I(nf, 1, 1.0);
    CHECK(rep.pass);
    // closed form: singular values of ((2e,1),(1,0)) are
    // sqrt(1 + e^2) +- e with e = eps_min
    const double e = scales.eps_min();
    const double smin = std::sqrt(1.0 + e * e) - e;
    CHECK(rep.margin == doctest::Approx(smin / e).epsilon(1e-9));
}

TEST_CASE("check_I: co-orbital bordered matrix passes at a nonzero base point") {
    auto spec = example_coorbital(0.1, 3.0);
    Eigen::VectorXd xi = Eigen::VectorXd::Constant(6, 0.9);
    auto ex = expand_at(spec, xi, DomainWindow(0.2, 1.0, 0.1));
    auto rep = check_I(ex.nf, 6, 1e-6);
    CHECK(rep.pass);
}

TEST_CASE("eigen_lower_bound: identity part, kernel counterexample, svd cross-check") {
    ScaleSet single({0.25}, 0.1);
    std::vector<Eigen::MatrixXd> parts{Eigen::MatrixXd::Identity(3, 3)};
    auto rep = eigen_lower_bound(parts, single);
    CHECK(rep.lambda_min == doctest::Approx(0.0625).epsilon(1e-12));
    CHECK(rep.pass);

    // common kernel: both parts annihilate e_3
    Eigen::MatrixXd k1 = Eigen::MatrixXd::Identity(3, 3);
    k1(2, 2) = 0.0;
    std::vector<Eigen::MatrixXd> kern{k1, 0.5 * k1};
    auto rep2 = eigen_lower_bound(kern, ScaleSet({0.1, 0.01}, 0.1));
    CHECK(rep2.lambda_min == doctest::Approx(0.0).epsilon(1e-20));
    CHECK_FALSE(rep2.pass);

    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int rep_i = 0; rep_i < 10; ++rep_i) {
        std::vector<Eigen::MatrixXd> rnd;
        for (int p = 0; p < 2; ++p) {
            Eigen::MatrixXd m(3, 3);
            for (int i = 0; i < 3; ++i)
                for (int q = 0; q < 3; ++q) m(i, q) = dist(rng);
            rnd.push_back(m);
        }
        ScaleSet sc({0.1, 0.01}, 0.1);
        auto r = eigen_lower_bound(rnd, sc);
        Eigen::MatrixXd a = 0.1 * rnd[0] + 0.01 * rnd[1];
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
        const double smin = svd.singularValues()(2);
        CHECK(r.lambda_min == doctest::Approx(smin * smin).epsilon(1e-10));
    }
}

TEST_CASE("determinants: co-orbital closed forms") {
    std::mt19937_64 rng(43);
    std::uniform_real_distribution<double> edist(0.02, 0.2), adist(2.1, 5.0);
    for (int rep = 0; rep < 5; ++rep) {
        const double eps = edist(rng), a = adist(rng);
        auto spec = example_coorbital(eps, a);
        Eigen::VectorXd xi = Eigen::VectorXd::Constant(6, 0.8);
        auto ex = expand_at(spec, xi, DomainWindow(0.2, 1.0, 0.1));
        const double det = hessian_determinant(ex.nf);
        const double expect = 64.0 * std::pow(eps, 10.0 + 2.0 * a);
        CHECK(det == doctest::Approx(expect).epsilon(1e-10));

        const double bordered = bordered_determinant(ex.nf);
        double factor = 0.0;
        const double w[6] = {1.0, eps * eps, 1.0, std::pow(eps, 3.0),
                             std::pow(eps, 1.0 + a), std::pow(eps, 4.0)};
        // weights follow the closed form I1^2 + eps^2 I2^2 + I3^2 + ...
        for (int i = 0; i < 6; ++i) factor += w[i] * xi[i] * xi[i];
        const double expect_b = -128.0 * std::pow(eps, 10.0 + 2.0 * a) * factor;
        CHECK(bordered == doctest::Approx(expect_b).epsilon(1e-10));
    }

    // A = identity, omega = 0: bordered determinant is zero
    NormalForm nf(3, 4, ScaleSet({0.5}, 0.1));
    nf.a_parts[0] = 2.0 * Eigen::MatrixXd::Identity(3, 3);
    CHECK(bordered_determinant(nf) == 0.0);
}

TEST_CASE("hessian determinant on diagonal matrices is the product of diagonals") {
    ScaleSet scales({1.0}, 0.1);
    NormalForm nf(4, 4, scales);
    Eigen::VectorXd d(4);
    d << 2.0, -0.5, 0.25, 8.0;
    nf.a_parts[0] = d.asDiagonal();
    CHECK(hessian_determinant(nf) == doctest::Approx(2.0 * -0.5 * 0.25 * 8.0).epsilon(1e-15));
}

TEST_CASE("errors: grid and range validation") {
    CHECK_THROWS_AS(check_R(identity_field(2), {}, -1.0), std::invalid_argument);
    NormalForm nf(2, 4, ScaleSet({0.5}, 0.1));
    CHECK_THROWS_AS(check_K(nf, 0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(check_K(nf, 3, 1.0), std::invalid_argument);
}
