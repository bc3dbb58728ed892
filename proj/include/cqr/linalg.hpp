#ifndef CQR_LINALG_HPP
#define CQR_LINALG_HPP

#include <cassert>
#include <cstddef>
#include <vector>

namespace cqr {

// Dense row-major matrix of doubles. Everything in the training stack is
// small (vectors of dim <= a few hundred), so a flat std::vector is plenty.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}
  Mat(int r, int c, std::vector<double> data) : rows(r), cols(c), v(std::move(data)) {
    assert(static_cast<size_t>(r) * c == v.size());
  }

  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
  size_t size() const { return v.size(); }
  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
  void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

// C += op(A) * op(B). Loop orders chosen so the inner loop streams rows.
inline void gemm_acc(bool trans_a, bool trans_b, const Mat& a, const Mat& b, Mat& c) {
  const int m = trans_a ? a.cols : a.rows;
  const int k = trans_a ? a.rows : a.cols;
  const int n = trans_b ? b.rows : b.cols;
  assert((trans_b ? b.cols : b.rows) == k);
  assert(c.rows == m && c.cols == n);
  if (!trans_a && !trans_b) {
    for (int i = 0; i < m; ++i) {
      double* ci = c.row(i);
      const double* ai = a.row(i);
      for (int p = 0; p < k; ++p) {
        const double aip = ai[p];
        const double* bp = b.row(p);
        for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
      }
    }
  } else if (!trans_a && trans_b) {
    for (int i = 0; i < m; ++i) {
      double* ci = c.row(i);
      const double* ai = a.row(i);
      for (int j = 0; j < n; ++j) {
        const double* bj = b.row(j);
        double acc = 0.0;
        for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
        ci[j] += acc;
      }
    }
  } else if (trans_a && !trans_b) {
    for (int p = 0; p < k; ++p) {
      const double* ap = a.row(p);
      const double* bp = b.row(p);
      for (int i = 0; i < m; ++i) {
        const double api = ap[i];
        double* ci = c.row(i);
        for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
      }
    }
  } else {
    for (int i = 0; i < m; ++i) {
      double* ci = c.row(i);
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int p = 0; p < k; ++p) acc += a.at(p, i) * b.at(j, p);
        ci[j] += acc;
      }
    }
  }
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.rows, b.cols);
  gemm_acc(false, false, a, b, c);
  return c;
}

}  // namespace cqr

#endif
