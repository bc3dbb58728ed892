#ifndef CQR_AUTODIFF_HPP
#define CQR_AUTODIFF_HPP

#include <functional>
#include <vector>

#include "cqr/linalg.hpp"

namespace cqr::ad {

// Define-by-run reverse-mode tape over Mat values. A fresh Tape is built per
// training step; backward() walks nodes in reverse creation order, which is
// a valid topological order by construction.
//
// In inference mode no gradients are allocated and backward() is forbidden;
// the same forward code then doubles as the decode/scoring path.
class Tape {
 public:
  using Id = int;

  explicit Tape(bool inference = false) : inference_(inference) {}

  bool inference() const { return inference_; }

  // Leaf bound to external parameter storage; grads flush into *grad.
  Id param(const Mat* value, Mat* grad);
  Id constant(Mat value);

  Id lookup_row(Id table, int row);             // 1 x c slice of a param table
  Id matmul(Id a, Id b);                        // a * b
  Id matmul_t(Id a, Id b);                      // a * b^T
  Id add(Id a, Id b);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);                           // elementwise
  Id scale(Id a, double s);
  Id add_row(Id a, Id row);                     // broadcast a 1 x c row over rows of a
  Id sigmoid(Id a);
  Id tanh(Id a);
  Id slice_cols(Id a, int col0, int len);
  Id concat_cols(Id a, Id b);
  Id softmax_row(Id a);                         // rowwise softmax
  Id stack_rows(const std::vector<Id>& rows);   // k x c from 1 x c rows
  Id mean_rows(Id a);                           // 1 x c column means
  Id dropout(Id a, Mat mask);                   // elementwise mask multiply
  Id nll_logits(Id logits, int target);         // scalar -log softmax(logits)[target]
  // Scalar linear combination sum_i coeff_i * scalar_i.
  Id weighted_sum(const std::vector<std::pair<Id, double>>& terms);
  // NT-Xent over an interleaved 2N x m batch; backward uses the analytic
  // gradient from the contrastive module.
  Id nt_xent(Id x, double tau);

  const Mat& value(Id id) const { return nodes_[id].val; }
  double scalar(Id id) const { return nodes_[id].val.at(0, 0); }
  Mat& grad(Id id) { return nodes_[id].grad; }

  void backward(Id root);
  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Mat val;
    Mat grad;
    std::function<void(Tape&)> back;  // null for constants
  };
  struct ParamBinding {
    Id node;
    Mat* external_grad;
  };

  Id push(Mat val, std::function<void(Tape&)> back);

  std::vector<Node> nodes_;
  std::vector<ParamBinding> params_;
  bool inference_;
};

}  // namespace cqr::ad

#endif
