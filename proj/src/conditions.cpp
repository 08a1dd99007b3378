#include "mskam/conditions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mskam {

namespace {

// next subset of {0..n-1} of fixed size in lexicographic order
bool next_combination(std::vector<int>& idx, int n) {
    const int k = static_cast<int>(idx.size());
    for (int i = k - 1; i >= 0; --i) {
        if (idx[i] < n - k + i) {
            ++idx[i];
            for (int q = i + 1; q < k; ++q) idx[q] = idx[q - 1] + 1;
            return true;
        }
    }
    return false;
}

Eigen::MatrixXd submatrix(const Eigen::MatrixXd& a, const std::vector<int>& rows,
                          const std::vector<int>& cols) {
    Eigen::MatrixXd s(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t q = 0; q < cols.size(); ++q) s(i, q) = a(rows[i], cols[q]);
    return s;
}

double smallest_singular_value(const Eigen::MatrixXd& m) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    return svd.singularValues().tail(1)(0);
}

// best n1 x n1 submatrix by smallest singular value; exhaustive for small
// matrices, pivoted-QR column/row selection otherwise
ConditionReport best_submatrix_report(const Eigen::MatrixXd& a, int sub,
                                      double c, double eps_min,
                                      const std::string& id) {
    const int n = static_cast<int>(a.rows());
    ConditionReport rep;
    rep.condition_id = id;
    rep.threshold = c * eps_min * eps_min;
    const double demand = std::sqrt(c) * eps_min;

    double best = -1.0;
    std::vector<int> best_rows, best_cols;
    if (n <= 10) {
        std::vector<int> rows(sub), cols(sub);
        for (int i = 0; i < sub; ++i) rows[i] = i;
        do {
            for (int i = 0; i < sub; ++i) cols[i] = i;
            do {
                const double s = smallest_singular_value(submatrix(a, rows, cols));
                if (s > best) {
                    best = s;
                    best_rows = rows;
                    best_cols = cols;
                }
            } while (next_combination(cols, n));
        } while (next_combination(rows, n));
    } else {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> colqr(a);
        std::vector<int> cols(colqr.colsPermutation().indices().data(),
                              colqr.colsPermutation().indices().data() + n);
        cols.resize(sub);
        Eigen::MatrixXd picked(n, sub);
        for (int q = 0; q < sub; ++q) picked.col(q) = a.col(cols[q]);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> rowqr(picked.transpose());
        std::vector<int> rows(rowqr.colsPermutation().indices().data(),
                              rowqr.colsPermutation().indices().data() + n);
        rows.resize(sub);
        std::sort(rows.begin(), rows.end());
        std::sort(cols.begin(), cols.end());
        best = smallest_singular_value(submatrix(a, rows, cols));
        best_rows = rows;
        best_cols = cols;
    }

    rep.margin = demand > 0.0 ? best / demand
                              : std::numeric_limits<double>::infinity();
    rep.pass = rep.margin >= 1.0;
    rep.witness_rows = best_rows;
    rep.witness_cols = best_cols;
    return rep;
}

}  // namespace

std::vector<std::vector<int>> multi_indices_up_to(int dim, int order) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(dim, 0);
    // counts in colexicographic order per total degree
    auto rec = [&](auto&& self, int pos, int remaining) -> void {
        if (pos == dim - 1) {
            cur[pos] = remaining;
            out.push_back(cur);
            return;
        }
        for (int v = 0; v <= remaining; ++v) {
            cur[pos] = v;
            self(self, pos + 1, remaining - v);
        }
    };
    for (int total = 0; total <= order; ++total) rec(rec, 0, total);
    return out;
}

DerivativeStack build_derivative_stack(const std::vector<FourierTaylorSeries>& omega_field,
                                       const std::vector<Eigen::VectorXd>& grid,
                                       int order) {
    if (omega_field.empty()) throw std::invalid_argument("empty frequency field");
    if (grid.empty()) throw std::invalid_argument("empty sample grid");
    const int n = static_cast<int>(omega_field.size());
    for (const auto& comp : omega_field) {
        if (comp.dim() != n)
            throw std::invalid_argument("frequency field component dimension mismatch");
        if (comp.max_fourier_norm() != 0)
            throw std::invalid_argument("frequency field must be polynomial (angle-free)");
    }

    const auto alphas = multi_indices_up_to(n, order);
    // precompute the derivative series d^alpha omega_i once
    std::vector<std::vector<FourierTaylorSeries>> deriv(alphas.size());
    for (std::size_t a = 0; a < alphas.size(); ++a) {
        deriv[a].reserve(n);
        for (int i = 0; i < n; ++i) {
            FourierTaylorSeries d = omega_field[i];
            for (int v = 0; v < n; ++v)
                for (int rep = 0; rep < alphas[a][v]; ++rep) d = d.derivative_action(v);
            deriv[a].push_back(std::move(d));
        }
    }

    DerivativeStack stack;
    stack.derivative_order = order;
    stack.base_points = grid;
    stack.matrices.reserve(grid.size());
    stack.singular_values.reserve(grid.size());
    for (const auto& xi : grid) {
        if (xi.size() != n) throw std::invalid_argument("grid point dimension mismatch");
        std::vector<Complex> actions(n), angles(n, Complex(0.0, 0.0));
        for (int i = 0; i < n; ++i) actions[i] = xi[i];
        Eigen::MatrixXd m(n, alphas.size());
        for (std::size_t a = 0; a < alphas.size(); ++a)
            for (int i = 0; i < n; ++i)
                m(i, a) = deriv[a][i].evaluate(actions, angles).real();
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
        stack.matrices.push_back(std::move(m));
        stack.singular_values.push_back(svd.singularValues());
    }
    return stack;
}

ConditionReport check_R(const std::vector<FourierTaylorSeries>& omega_field,
                        const std::vector<Eigen::VectorXd>& grid,
                        double svd_tol, int order) {
    const int n = static_cast<int>(omega_field.size());
    if (order < 0) order = n - 1;
    const auto stack = build_derivative_stack(omega_field, grid, order);

    ConditionReport rep;
    rep.condition_id = "R";
    double worst = std::numeric_limits<double>::infinity();
    std::size_t worst_idx = 0;
    double tol_used = svd_tol;
    for (std::size_t g = 0; g < stack.base_points.size(); ++g) {
        const auto& sv = stack.singular_values[g];
        const double tol = svd_tol > 0.0 ? svd_tol : 1e-10 * sv(0);
        const double ratio = tol > 0.0 ? sv(n - 1) / tol
                                       : std::numeric_limits<double>::infinity();
        if (ratio < worst) {
            worst = ratio;
            worst_idx = g;
            tol_used = tol;
        }
    }
    rep.margin = worst;
    rep.threshold = tol_used;
    rep.pass = worst >= 1.0;
    rep.worst_point = stack.base_points[worst_idx];
    return rep;
}

ConditionReport check_K(const NormalForm& nf, int n1, double c) {
    if (n1 < 1 || n1 > nf.dim)
        throw std::invalid_argument("n1 out of range for condition (K)");
    auto rep = best_submatrix_report(nf.hessian(), n1, c, nf.scales.eps_min(), "K");
    return rep;
}

ConditionReport check_I(const NormalForm& nf, int n1, double c) {
    if (n1 < 1 || n1 > nf.dim)
        throw std::invalid_argument("n1 out of range for condition (I)");
    const int n = nf.dim;
    Eigen::MatrixXd b(n + 1, n + 1);
    b.setZero();
    b.topLeftCorner(n, n) = nf.hessian();
    const Eigen::VectorXd w = nf.frequency();
    b.topRightCorner(n, 1) = w;
    b.bottomLeftCorner(1, n) = w.transpose();
    auto rep = best_submatrix_report(b, n1 + 1, c, nf.scales.eps_min(), "I");
    return rep;
}

EigenBoundReport eigen_lower_bound(const std::vector<Eigen::MatrixXd>& parts,
                                   const ScaleSet& scales) {
    if (parts.empty()) throw std::invalid_argument("no matrix parts given");
    if (static_cast<int>(parts.size()) != scales.count())
        throw std::invalid_argument("part count != scale count");
    const auto n = parts.front().rows();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        if (parts[k].rows() != n || parts[k].cols() != n)
            throw std::invalid_argument("matrix part dimension mismatch");
        a += scales.epsilons[k] * parts[k];
    }

    const Eigen::MatrixXd gram = a * a.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    EigenBoundReport rep;
    rep.lambda_min = es.eigenvalues()(0);

    const double emax2 = scales.eps_max() * scales.eps_max();
    const Eigen::MatrixXd correction =
        gram - emax2 * Eigen::MatrixXd::Identity(n, n);
    const double bound_raw = emax2 - correction.norm();  // frobenius
    rep.bound = std::max(0.0, bound_raw);
    const double emin2 = scales.eps_min() * scales.eps_min();
    const double c_est = emin2 > 0.0 ? rep.bound / emin2 : 0.0;
    rep.bound_statement = c_est * scales.eps_min();
    rep.pass = rep.lambda_min > 0.0 && rep.lambda_min >= rep.bound;
    return rep;
}

double hessian_determinant(const NormalForm& nf) { return nf.hessian().determinant(); }

double bordered_determinant(const Eigen::MatrixXd& a, const Eigen::VectorXd& omega) {
    const auto n = a.rows();
    Eigen::MatrixXd b(n + 1, n + 1);
    b.setZero();
    b.topLeftCorner(n, n) = a;
    b.topRightCorner(n, 1) = omega;
    b.bottomLeftCorner(1, n) = omega.transpose();
    return b.determinant();
}

double bordered_determinant(const NormalForm& nf) {
    return bordered_determinant(nf.hessian(), nf.frequency());
}

}  // namespace mskam
