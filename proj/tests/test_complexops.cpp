#include <complex>

#include <Eigen/Dense>

#include "covbeam/complexops.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace covbeam;
using namespace covbeam::ad;
using covbeam::testutil::check_gradients;
using covbeam::testutil::fill_random;

namespace {

CTensor<double> random_ctensor(int rows, int cols, Rng& rng, bool requires_grad = true) {
  CTensor<double> t = CTensor<double>::zeros(rows, cols);
  t.re.set_requires_grad(requires_grad);
  t.im.set_requires_grad(requires_grad);
  fill_random(t.re, rng);
  fill_random(t.im, rng);
  return t;
}

Eigen::MatrixXcd to_eigen_mat(const CTensor<double>& t, int row, int m) {
  Eigen::MatrixXcd out(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) out(i, j) = t.at(row, i * m + j);
  return out;
}

Eigen::VectorXcd to_eigen_vec(const CTensor<double>& t, int row) {
  Eigen::VectorXcd out(t.cols());
  for (int j = 0; j < t.cols(); ++j) out(j) = t.at(row, j);
  return out;
}

// row-wise scalar with some margin from zero, used as a divisor
CTensor<double> safe_divisor(const CTensor<double>& b) {
  CTensor<double> d = {rowsum(b.re), rowsum(b.im)};
  return {add_scalar(d.re, 3.0), d.im};
}

}  // namespace

TEST_CASE("complex outer/matvec/inner/matmul agree with Eigen") {
  Rng rng(20);
  int rows = 3, m = 4;
  CTensor<double> a = random_ctensor(rows, m, rng);
  CTensor<double> b = random_ctensor(rows, m, rng);
  CTensor<double> A = random_ctensor(rows, m * m, rng);
  CTensor<double> B = random_ctensor(rows, m * m, rng);

  CTensor<double> outer = c_outer(a, b);
  CTensor<double> mv = c_matvec(A, a);
  CTensor<double> inner = c_inner(a, b);
  CTensor<double> mm = c_row_matmul(A, B, m);
  CTensor<double> herm = c_row_herm(A, m);

  for (int r = 0; r < rows; ++r) {
    Eigen::VectorXcd av = to_eigen_vec(a, r), bv = to_eigen_vec(b, r);
    Eigen::MatrixXcd Am = to_eigen_mat(A, r, m), Bm = to_eigen_mat(B, r, m);

    Eigen::MatrixXcd outer_ref = av * bv.adjoint();
    Eigen::VectorXcd mv_ref = Am * av;
    std::complex<double> inner_ref = av.adjoint() * bv;
    Eigen::MatrixXcd mm_ref = Am * Bm;
    Eigen::MatrixXcd herm_ref = Am.adjoint();

    for (int i = 0; i < m; ++i) {
      CHECK(std::abs(mv.at(r, i) - mv_ref(i)) <= 1e-12);
      for (int j = 0; j < m; ++j) {
        CHECK(std::abs(outer.at(r, i * m + j) - outer_ref(i, j)) <= 1e-12);
        CHECK(std::abs(mm.at(r, i * m + j) - mm_ref(i, j)) <= 1e-11);
        CHECK(std::abs(herm.at(r, i * m + j) - herm_ref(i, j)) <= 1e-12);
      }
    }
    CHECK(std::abs(inner.at(r, 0) - inner_ref) <= 1e-12);
  }
}

TEST_CASE("complex op gradients are Wirtinger-consistent (re/im as reals)") {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    int rows = 2, m = 3;
    CTensor<double> a = random_ctensor(rows, m, rng);
    CTensor<double> b = random_ctensor(rows, m, rng);
    CTensor<double> A = random_ctensor(rows, m * m, rng);

    auto abs_all = [](const CTensor<double>& t) { return sum_all(c_abs_sq(t)); };

    CHECK(check_gradients({&a.re, &a.im, &b.re, &b.im},
                          [&] { return abs_all(c_outer(a, b)); }) <= 1e-6);
    CHECK(check_gradients({&A.re, &A.im, &a.re, &a.im},
                          [&] { return abs_all(c_matvec(A, a)); }) <= 1e-6);
    CHECK(check_gradients({&a.re, &a.im, &b.re, &b.im},
                          [&] { return abs_all(c_mul(c_inner(a, b), c_inner(b, a))); }) <= 1e-6);
    CHECK(check_gradients({&A.re, &A.im},
                          [&] { return abs_all(c_row_matmul(A, c_row_herm(A, m), m)); }) <= 1e-6);
    CHECK(check_gradients({&a.re, &a.im, &b.re, &b.im}, [&] {
            return abs_all(c_div_rowscalar(a, safe_divisor(b)));
          }) <= 1e-6);
  }
}
