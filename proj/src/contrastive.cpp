#include "cqr/contrastive.hpp"

#include <cmath>
#include <string>

#include "cqr/errors.hpp"

namespace cqr {

EmbeddingBatch::EmbeddingBatch(Mat m) : rows(std::move(m)) {
  if (rows.rows < 1 || rows.cols < 1) {
    throw ContractViolation("EmbeddingBatch: need at least one row and one column");
  }
  for (double x : rows.v) {
    if (!std::isfinite(x)) throw ContractViolation("EmbeddingBatch: non-finite entry");
  }
}

namespace contrastive {

namespace {

void check_even_batch(const Mat& x, double tau) {
  if (tau <= 0.0) throw ContractViolation("contrastive: tau must be positive");
  if (x.rows < 2 || x.rows % 2 != 0) {
    throw ContractViolation("contrastive: row count must be even and >= 2, got " +
                            std::to_string(x.rows));
  }
  for (double v : x.v) {
    if (!std::isfinite(v)) throw ContractViolation("contrastive: non-finite embedding entry");
  }
}

std::vector<double> row_norms(const Mat& x) {
  std::vector<double> norms(x.rows);
  for (int i = 0; i < x.rows; ++i) {
    double s = 0.0;
    for (int c = 0; c < x.cols; ++c) s += x.at(i, c) * x.at(i, c);
    norms[i] = std::sqrt(s);
    if (norms[i] == 0.0) {
      throw ContractViolation("contrastive: zero embedding row " + std::to_string(i));
    }
  }
  return norms;
}

Mat cosine_matrix(const Mat& x, const std::vector<double>& norms) {
  Mat sim(x.rows, x.rows);
  for (int i = 0; i < x.rows; ++i) {
    for (int j = 0; j < x.rows; ++j) {
      double dot = 0.0;
      for (int c = 0; c < x.cols; ++c) dot += x.at(i, c) * x.at(j, c);
      sim.at(i, j) = dot / (norms[i] * norms[j]);
    }
  }
  return sim;
}

// dL/dS for the in-batch loss. Every row is the anchor of exactly one
// ordered positive pair; for anchor i with partner p:
//   dL/dS(i,p) -= 1/(2N tau)
//   dL/dS(i,k) += softmax_k(S(i,.)/tau excluding k=i) / (2N tau) for k != i
Mat loss_grad_wrt_sim(const Mat& sim, double tau) {
  const int rows = sim.rows;
  Mat g(rows, rows);
  const double scale = 1.0 / (rows * tau);
  for (int i = 0; i < rows; ++i) {
    const int partner = (i % 2 == 0) ? i + 1 : i - 1;
    double mx = -1e300;
    for (int k = 0; k < rows; ++k) {
      if (k != i) mx = std::max(mx, sim.at(i, k) / tau);
    }
    double denom = 0.0;
    for (int k = 0; k < rows; ++k) {
      if (k != i) denom += std::exp(sim.at(i, k) / tau - mx);
    }
    for (int k = 0; k < rows; ++k) {
      if (k == i) continue;
      g.at(i, k) += scale * std::exp(sim.at(i, k) / tau - mx) / denom;
    }
    g.at(i, partner) -= scale;
  }
  return g;
}

}  // namespace

double cosine_sim(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.empty()) {
    throw ContractViolation("cosine_sim: dimension mismatch");
  }
  double dot = 0, nx = 0, ny = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    nx += x[i] * x[i];
    ny += y[i] * y[i];
  }
  if (nx == 0.0 || ny == 0.0) {
    throw ContractViolation("cosine_sim: zero vector has no defined similarity");
  }
  return dot / (std::sqrt(nx) * std::sqrt(ny));
}

EmbeddingBatch combine(const EmbeddingBatch& a, const EmbeddingBatch& b) {
  if (a.n() != b.n() || a.dim() != b.dim()) {
    throw ContractViolation("combine: shape mismatch (" + std::to_string(a.n()) + "x" +
                            std::to_string(a.dim()) + " vs " + std::to_string(b.n()) + "x" +
                            std::to_string(b.dim()) + ")");
  }
  Mat out(2 * a.n(), a.dim());
  for (int i = 0; i < a.n(); ++i) {
    std::copy(a.rows.row(i), a.rows.row(i) + a.dim(), out.row(2 * i));
    std::copy(b.rows.row(i), b.rows.row(i) + b.dim(), out.row(2 * i + 1));
  }
  return EmbeddingBatch(std::move(out));
}

EmbeddingBatch average(const EmbeddingBatch& a, const EmbeddingBatch& b) {
  if (a.n() != b.n() || a.dim() != b.dim()) {
    throw ContractViolation("average: shape mismatch");
  }
  Mat out = a.rows;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] = 0.5 * (out.v[i] + b.rows.v[i]);
  return EmbeddingBatch(std::move(out));
}

double in_batch_loss_from_similarities(const Mat& sim, double tau) {
  if (sim.rows != sim.cols) throw ContractViolation("in_batch_loss: similarity matrix not square");
  if (tau <= 0.0) throw ContractViolation("contrastive: tau must be positive");
  if (sim.rows < 2 || sim.rows % 2 != 0) {
    throw ContractViolation("in_batch_loss: row count must be even and >= 2");
  }
  const int rows = sim.rows;
  double total = 0.0;
  for (int i = 0; i < rows; ++i) {
    const int partner = (i % 2 == 0) ? i + 1 : i - 1;
    double mx = -1e300;
    for (int k = 0; k < rows; ++k) {
      if (k != i) mx = std::max(mx, sim.at(i, k) / tau);
    }
    double denom = 0.0;
    for (int k = 0; k < rows; ++k) {
      if (k != i) denom += std::exp(sim.at(i, k) / tau - mx);
    }
    // -log l(i, partner) = log(denom) + mx - sim(i,partner)/tau
    total += std::log(denom) + mx - sim.at(i, partner) / tau;
  }
  return total / rows;
}

double in_batch_loss_mat(const Mat& x, double tau) {
  check_even_batch(x, tau);
  const auto norms = row_norms(x);
  return in_batch_loss_from_similarities(cosine_matrix(x, norms), tau);
}

double in_batch_loss(const EmbeddingBatch& x, double tau) { return in_batch_loss_mat(x.rows, tau); }

Mat in_batch_loss_grad(const Mat& x, double tau) {
  check_even_batch(x, tau);
  const auto norms = row_norms(x);
  const Mat sim = cosine_matrix(x, norms);
  const Mat gs = loss_grad_wrt_sim(sim, tau);
  Mat dx(x.rows, x.cols);
  // d cos(x_i, x_j)/dx_i = x_j/(|x_i||x_j|) - cos * x_i/|x_i|^2, and the
  // mirrored expression for x_j.
  for (int i = 0; i < x.rows; ++i) {
    for (int j = 0; j < x.rows; ++j) {
      if (i == j) continue;
      const double g = gs.at(i, j);
      if (g == 0.0) continue;
      const double inv_ij = 1.0 / (norms[i] * norms[j]);
      const double cos_ij = sim.at(i, j);
      const double inv_ii = 1.0 / (norms[i] * norms[i]);
      const double inv_jj = 1.0 / (norms[j] * norms[j]);
      for (int c = 0; c < x.cols; ++c) {
        dx.at(i, c) += g * (x.at(j, c) * inv_ij - cos_ij * x.at(i, c) * inv_ii);
        dx.at(j, c) += g * (x.at(i, c) * inv_ij - cos_ij * x.at(j, c) * inv_jj);
      }
    }
  }
  return dx;
}

double internal_loss(const EmbeddingBatch& q1, const EmbeddingBatch& q2, double tau) {
  return in_batch_loss(combine(q1, q2), tau);
}

void internal_loss_grad(const EmbeddingBatch& q1, const EmbeddingBatch& q2, double tau, Mat* dq1,
                        Mat* dq2) {
  const Mat dx = in_batch_loss_grad(combine(q1, q2).rows, tau);
  *dq1 = Mat(q1.n(), q1.dim());
  *dq2 = Mat(q2.n(), q2.dim());
  for (int i = 0; i < q1.n(); ++i) {
    for (int c = 0; c < q1.dim(); ++c) {
      dq1->at(i, c) = dx.at(2 * i, c);
      dq2->at(i, c) = dx.at(2 * i + 1, c);
    }
  }
}

double external_loss(const EmbeddingBatch& q1, const EmbeddingBatch& q2, const EmbeddingBatch& t,
                     double tau) {
  if (t.n() != q1.n() || t.dim() != q1.dim()) {
    throw ContractViolation("external_loss: target batch shape mismatch");
  }
  return in_batch_loss(combine(average(q1, q2), t), tau);
}

void external_loss_grad(const EmbeddingBatch& q1, const EmbeddingBatch& q2,
                        const EmbeddingBatch& t, double tau, Mat* dq1, Mat* dq2, Mat* dt) {
  const Mat dx = in_batch_loss_grad(combine(average(q1, q2), t).rows, tau);
  *dq1 = Mat(q1.n(), q1.dim());
  *dq2 = Mat(q2.n(), q2.dim());
  *dt = Mat(t.n(), t.dim());
  for (int i = 0; i < q1.n(); ++i) {
    for (int c = 0; c < q1.dim(); ++c) {
      dq1->at(i, c) = 0.5 * dx.at(2 * i, c);
      dq2->at(i, c) = 0.5 * dx.at(2 * i, c);
      dt->at(i, c) = dx.at(2 * i + 1, c);
    }
  }
}

double contrastive_total(const EmbeddingBatch& q1, const EmbeddingBatch& q2,
                         const EmbeddingBatch& t, double tau) {
  return internal_loss(q1, q2, tau) + external_loss(q1, q2, t, tau);
}

}  // namespace contrastive
}  // namespace cqr
