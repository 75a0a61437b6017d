#include "stmpc/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <cstdio>
#include <stdexcept>

namespace stmpc {

double spectral_norm(const Mat& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(a);
  return svd.singularValues()(0);
}

double min_eigenvalue(const Mat& sym) {
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_eigenvalue(const Mat& sym) {
  Eigen::SelfAdjointEigenSolver<Mat> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

bool is_symmetric(const Mat& a, double tol) {
  if (a.rows() != a.cols()) return false;
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * (1.0 + a.cwiseAbs().maxCoeff());
}

std::vector<double> eigenvalues_real(const Mat& a) {
  Eigen::EigenSolver<Mat> es(a, false);
  std::vector<double> out;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) out.push_back(es.eigenvalues()(i).real());
  return out;
}

Mat solve_care(const Mat& A, const Mat& B, const Mat& Q, const Mat& R) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n || R.rows() != B.cols() || R.cols() != B.cols())
    throw std::invalid_argument("solve_care: inconsistent dimensions");
  Mat H(2 * n, 2 * n);
  H << A, -B * R.ldlt().solve(B.transpose()), -Q, -A.transpose();
  Eigen::ComplexEigenSolver<Mat> es(H);
  Eigen::MatrixXcd stable(2 * n, n);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    if (es.eigenvalues()(i).real() < 0.0) {
      if (k == n) throw std::runtime_error("solve_care: Hamiltonian has too many stable eigenvalues");
      stable.col(k++) = es.eigenvectors().col(i);
    }
  }
  if (k != n) throw std::runtime_error("solve_care: no stabilizing solution (eigenvalues on the imaginary axis)");
  const Eigen::MatrixXcd X1 = stable.topRows(n), X2 = stable.bottomRows(n);
  const Mat P = (X2 * X1.inverse()).real();
  return 0.5 * (P + P.transpose());
}

std::string format_vec(const Vec& v) {
  std::string s;
  char buf[40];
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v(i));
    if (i) s += ' ';
    s += buf;
  }
  return s;
}

}  // namespace stmpc
