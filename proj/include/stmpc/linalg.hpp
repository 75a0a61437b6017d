#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace stmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Largest singular value.
double spectral_norm(const Mat& a);

/// Extreme eigenvalues of a symmetric matrix.
double min_eigenvalue(const Mat& sym);
double max_eigenvalue(const Mat& sym);

bool is_symmetric(const Mat& a, double tol = 1e-12);

/// Real parts of the eigenvalues of a general square matrix.
std::vector<double> eigenvalues_real(const Mat& a);

/// Stabilizing solution of A'P + PA - P B R^-1 B' P + Q = 0, from the stable
/// invariant subspace of the Hamiltonian matrix.
Mat solve_care(const Mat& A, const Mat& B, const Mat& Q, const Mat& R);

/// Formats a vector as space-separated values with 17 significant digits.
std::string format_vec(const Vec& v);

}  // namespace stmpc
