#pragma once

#include <complex>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace ddessm {

using cplx = std::complex<double>;
using Vec = Eigen::VectorXd;
using CVec = Eigen::VectorXcd;
using Mat = Eigen::MatrixXd;
using CMat = Eigen::MatrixXcd;
using SpMat = Eigen::SparseMatrix<double>;
using CSpMat = Eigen::SparseMatrix<cplx>;

}  // namespace ddessm
