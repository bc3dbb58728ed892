#ifndef CQR_CONTRASTIVE_HPP
#define CQR_CONTRASTIVE_HPP

#include <vector>

#include "cqr/linalg.hpp"

namespace cqr {

// N x m batch of sentence embeddings. Rows must share a dimension and be
// finite; N >= 1.
struct EmbeddingBatch {
  Mat rows;

  EmbeddingBatch() = default;
  explicit EmbeddingBatch(Mat m);
  int n() const { return rows.rows; }
  int dim() const { return rows.cols; }
};

struct ContrastiveConfig {
  double temperature = 0.1;
  double weight = 0.03;
};

namespace contrastive {

// dot(x,y) / (|x||y|). Zero vectors are an error (undefined similarity).
double cosine_sim(const std::vector<double>& x, const std::vector<double>& y);

// Interleaves A and B row by row: (A1, B1, A2, B2, ...). Positive pairs end
// up in adjacent rows.
EmbeddingBatch combine(const EmbeddingBatch& a, const EmbeddingBatch& b);

// Elementwise mean of two batches.
EmbeddingBatch average(const EmbeddingBatch& a, const EmbeddingBatch& b);

// Normalized temperature-scaled in-batch loss over an interleaved batch:
//   l(i,j)  = exp(sim(x_i,x_j)/tau) / sum_{k != i} exp(sim(x_i,x_k)/tau)
//   L       = -(1/2N) sum over positive pairs of [log l(i,j) + log l(j,i)]
// Requires an even row count >= 2 and tau > 0; NaN input is an error.
double in_batch_loss(const EmbeddingBatch& x, double tau);

// Same loss given a precomputed similarity matrix (diagonal ignored).
double in_batch_loss_from_similarities(const Mat& sim, double tau);

// Raw-Mat entry points used by the autodiff bridge.
double in_batch_loss_mat(const Mat& x, double tau);
Mat in_batch_loss_grad(const Mat& x, double tau);  // dL/dX, analytic

// Two stochastic encodings of the same inputs as positive pairs.
double internal_loss(const EmbeddingBatch& q1, const EmbeddingBatch& q2, double tau);
void internal_loss_grad(const EmbeddingBatch& q1, const EmbeddingBatch& q2, double tau, Mat* dq1,
                        Mat* dq2);

// Averaged input encoding paired with the target encoding.
double external_loss(const EmbeddingBatch& q1, const EmbeddingBatch& q2, const EmbeddingBatch& t,
                     double tau);
void external_loss_grad(const EmbeddingBatch& q1, const EmbeddingBatch& q2,
                        const EmbeddingBatch& t, double tau, Mat* dq1, Mat* dq2, Mat* dt);

// internal + external.
double contrastive_total(const EmbeddingBatch& q1, const EmbeddingBatch& q2,
                         const EmbeddingBatch& t, double tau);

}  // namespace contrastive
}  // namespace cqr

#endif
