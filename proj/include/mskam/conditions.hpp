#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mskam/model.hpp"

namespace mskam {

/// Columns of d^alpha omega(xi) for all |alpha| <= order, one matrix per
/// sample point, with singular values sorted descending.
struct DerivativeStack {
    std::vector<Eigen::VectorXd> base_points;
    std::vector<Eigen::MatrixXd> matrices;
    std::vector<Eigen::VectorXd> singular_values;
    int derivative_order = 0;
};

struct ConditionReport {
    std::string condition_id;
    bool pass = false;
    double margin = 0.0;     // achieved quantity / threshold; pass iff >= 1
    double threshold = 0.0;  // c * eps_min^2 for (K)/(I); the svd tolerance for (R)
    std::vector<int> witness_rows, witness_cols;
    Eigen::VectorXd worst_point;
};

/// Enumerate multi-indices alpha with |alpha| <= order over `dim` variables.
std::vector<std::vector<int>> multi_indices_up_to(int dim, int order);

/// The frequency field must be polynomial in xi: one angle-free series per
/// component, derivatives taken exactly from the coefficients.
DerivativeStack build_derivative_stack(const std::vector<FourierTaylorSeries>& omega_field,
                                       const std::vector<Eigen::VectorXd>& grid,
                                       int order);

/// Rank condition: at every grid point the derivative stack must have n
/// singular values above the tolerance. svd_tol <= 0 selects the relative
/// default 1e-10 * sigma_max per point. order < 0 selects n - 1.
ConditionReport check_R(const std::vector<FourierTaylorSeries>& omega_field,
                        const std::vector<Eigen::VectorXd>& grid,
                        double svd_tol, int order = -1);

/// Some n1 x n1 submatrix of the combined hessian has smallest singular
/// value >= sqrt(c) * eps_min. Exhaustive search for dim <= 10, greedy
/// pivoted selection above.
ConditionReport check_K(const NormalForm& nf, int n1, double c);

/// Same check on the bordered matrix ((A, omega^T), (omega, 0)) with
/// submatrices of size n1 + 1.
ConditionReport check_I(const NormalForm& nf, int n1, double c);

struct EigenBoundReport {
    double lambda_min = 0.0;       // smallest eigenvalue of A A^*
    double bound = 0.0;            // constructed lower bound c * eps_min^2
    bool pass = false;
    double bound_statement = 0.0;  // the statement-form threshold c * eps_min
};

/// Smallest eigenvalue of (sum_k eps_k A_k)(...)^* against the constructed
/// multi-scale lower bound. pass is a report, not an assertion.
EigenBoundReport eigen_lower_bound(const std::vector<Eigen::MatrixXd>& parts,
                                   const ScaleSet& scales);

double hessian_determinant(const NormalForm& nf);
/// Determinant of ((A, omega^T), (omega, 0)) with the normal form's own
/// combined hessian and frequency.
double bordered_determinant(const NormalForm& nf);
double bordered_determinant(const Eigen::MatrixXd& a, const Eigen::VectorXd& omega);

}  // namespace mskam
