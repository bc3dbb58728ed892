#include "cqr/autodiff.hpp"

#include <cassert>
#include <cmath>

#include "cqr/contrastive.hpp"
#include "cqr/errors.hpp"

namespace cqr::ad {

Tape::Id Tape::push(Mat val, std::function<void(Tape&)> back) {
  Node n;
  n.val = std::move(val);
  if (!inference_) {
    n.grad = Mat(n.val.rows, n.val.cols);
    n.back = std::move(back);
  }
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size()) - 1;
}

Tape::Id Tape::param(const Mat* value, Mat* grad) {
  Id id = push(*value, nullptr);
  if (!inference_) params_.push_back({id, grad});
  return id;
}

Tape::Id Tape::constant(Mat value) { return push(std::move(value), nullptr); }

Tape::Id Tape::lookup_row(Id table, int row) {
  const Mat& t = nodes_[table].val;
  Mat out(1, t.cols);
  std::copy(t.row(row), t.row(row) + t.cols, out.row(0));
  return push(std::move(out), [table, row, id = static_cast<Id>(nodes_.size())](Tape& tp) {
    const Mat& g = tp.nodes_[id].grad;
    double* dst = tp.nodes_[table].grad.row(row);
    for (int c = 0; c < g.cols; ++c) dst[c] += g.at(0, c);
  });
}

Tape::Id Tape::matmul(Id a, Id b) {
  Mat out(nodes_[a].val.rows, nodes_[b].val.cols);
  gemm_acc(false, false, nodes_[a].val, nodes_[b].val, out);
  return push(std::move(out), [a, b, id = static_cast<Id>(nodes_.size())](Tape& tp) {
    const Mat& g = tp.nodes_[id].grad;
    gemm_acc(false, true, g, tp.nodes_[b].val, tp.nodes_[a].grad);   // dA += g * B^T
    gemm_acc(true, false, tp.nodes_[a].val, g, tp.nodes_[b].grad);   // dB += A^T * g
  });
}

Tape::Id Tape::matmul_t(Id a, Id b) {
  Mat out(nodes_[a].val.rows, nodes_[b].val.rows);
  gemm_acc(false, true, nodes_[a].val, nodes_[b].val, out);
  return push(std::move(out), [a, b, id = static_cast<Id>(nodes_.size())](Tape& tp) {
    const Mat& g = tp.nodes_[id].grad;
    gemm_acc(false, false, g, tp.nodes_[b].val, tp.nodes_[a].grad);  // dA += g * B
    gemm_acc(true, false, g, tp.nodes_[a].val, tp.nodes_[b].grad);   // dB += g^T * A
  });
}

Tape::Id Tape::add(Id a, Id b) {
  assert(nodes_[a].val.same_shape(nodes_[b].val));
  Mat out = nodes_[a].val;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] += nodes_[b].val.v[i];
  return push(std::move(out), [a, b, id = static_cast<Id>(nodes_.size())](Tape& tp) {
    const Mat& g = tp.nodes_[id].grad;
    for (size_t i = 0; i < g.size(); ++i) {
      tp.nodes_[a].grad.v[i] += g.v[i];
      tp.nodes_[b].grad.v[i] += g.v[i];
    }
  });
}

Tape::Id Tape::sub(Id a, Id b) {
  assert(nodes_[a].val.same_shape(nodes_[b].val));
  Mat out = nodes_[a].val;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] -= nodes_[b].val.v[i];
  return push(std::move(out), [a, b, id = static_cast<Id>(nodes_.size())](Tape& tp) {
    const Mat& g = tp.nodes_[id].grad;
    for (size_t i = 0; i < g.size(); ++i) {
      tp.nodes_[a].grad.v[i] += g.v[i];
      tp.nodes_[b].grad.v[i] -= g.v[i];
    }
  });
}

Tape::Id Tape::mul(Id a, Id b) {
  assert(nodes_[a].val.same_shape(nodes_[b].val));
  Mat out = nodes_[a].val;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] *= nodes_[b].val.v[i];
  return push(std::move(out), [a, b, id = static_cast<Id>(nodes_.size())](Tape& tp) {
    const Mat& g = tp.nodes_[id].grad;
    for (size_t i = 0; i < g.size(); ++i) {
      tp.nodes_[a].grad.v[i] += g.v[i] * tp.nodes_[b].val.v[i];
      tp.nodes_[b].grad.v[i] += g.v[i] * tp.nodes_[a].val.v[i];
    }
  });
}

Tape::Id Tape::scale(Id a, double s) {
  Mat out = nodes_[a].val;
  for (double& x : out.v) x *= s;
  return push(std::move(out), [a, s, id = static_cast<Id>(nodes_.size())](Tape& tp) {
    const Mat& g = tp.nodes_[id].grad;
    for (size_t i = 0; i < g.size(); ++i) tp.nodes_[a].grad.v[i] += s * g.v[i];
  });
}

Tape::Id Tape::add_row(Id a, Id row) {
  const Mat& r = nodes_[row].val;
  assert(r.rows == 1 && r.cols == nodes_[a].val.cols);
  Mat out = nodes_[a].val;
  for (int i = 0; i < out.rows; ++i) {
    double* o = out.row(i);
    for (int c = 0; c < out.cols; ++c) o[c] += r.at(0, c);
  }
  return push(std::move(out), [a, row, id = static_cast<Id>(nodes_.size())](Tape& tp) {
    const Mat& g = tp.nodes_[id].grad;
    for (size_t i = 0; i < g.size(); ++i) tp.nodes_[a].grad.v[i] += g.v[i];
    Mat& rg = tp.nodes_[row].grad;
    for (int i = 0; i < g.rows; ++i) {
      for (int c = 0; c < g.cols; ++c) rg.at(0, c) += g.at(i, c);
    }
  });
}

Tape::Id Tape::sigmoid(Id a) {
  Mat out = nodes_[a].val;
  for (double& x : out.v) x = 1.0 / (1.0 + std::exp(-x));
  return push(std::move(out), [a, id = static_cast<Id>(nodes_.size())](Tape& tp) {
    const Mat& g = tp.nodes_[id].grad;
    const Mat& y = tp.nodes_[id].val;
    for (size_t i = 0; i < g.size(); ++i) {
      tp.nodes_[a].grad.v[i] += g.v[i] * y.v[i] * (1.0 - y.v[i]);
    }
  });
}

Tape::Id Tape::tanh(Id a) {
  Mat out = nodes_[a].val;
  for (double& x : out.v) x = std::tanh(x);
  return push(std::move(out), [a, id = static_cast<Id>(nodes_.size())](Tape& tp) {
    const Mat& g = tp.nodes_[id].grad;
    const Mat& y = tp.nodes_[id].val;
    for (size_t i = 0; i < g.size(); ++i) {
      tp.nodes_[a].grad.v[i] += g.v[i] * (1.0 - y.v[i] * y.v[i]);
    }
  });
}

Tape::Id Tape::slice_cols(Id a, int col0, int len) {
  const Mat& src = nodes_[a].val;
  Mat out(src.rows, len);
  for (int i = 0; i < src.rows; ++i) {
    std::copy(src.row(i) + col0, src.row(i) + col0 + len, out.row(i));
  }
  return push(std::move(out), [a, col0, len, id = static_cast<Id>(nodes_.size())](Tape& tp) {
    const Mat& g = tp.nodes_[id].grad;
    Mat& ag = tp.nodes_[a].grad;
    for (int i = 0; i < g.rows; ++i) {
      for (int c = 0; c < len; ++c) ag.at(i, col0 + c) += g.at(i, c);
    }
  });
}

Tape::Id Tape::concat_cols(Id a, Id b) {
  const Mat& ma = nodes_[a].val;
  const Mat& mb = nodes_[b].val;
  assert(ma.rows == mb.rows);
  Mat out(ma.rows, ma.cols + mb.cols);
  for (int i = 0; i < ma.rows; ++i) {
    std::copy(ma.row(i), ma.row(i) + ma.cols, out.row(i));
    std::copy(mb.row(i), mb.row(i) + mb.cols, out.row(i) + ma.cols);
  }
  return push(std::move(out), [a, b, id = static_cast<Id>(nodes_.size())](Tape& tp) {
    const Mat& g = tp.nodes_[id].grad;
    Mat& ag = tp.nodes_[a].grad;
    Mat& bg = tp.nodes_[b].grad;
    for (int i = 0; i < g.rows; ++i) {
      for (int c = 0; c < ag.cols; ++c) ag.at(i, c) += g.at(i, c);
      for (int c = 0; c < bg.cols; ++c) bg.at(i, c) += g.at(i, ag.cols + c);
    }
  });
}

Tape::Id Tape::softmax_row(Id a) {
  Mat out = nodes_[a].val;
  for (int i = 0; i < out.rows; ++i) {
    double* r = out.row(i);
    double mx = r[0];
    for (int c = 1; c < out.cols; ++c) mx = std::max(mx, r[c]);
    double sum = 0.0;
    for (int c = 0; c < out.cols; ++c) {
      r[c] = std::exp(r[c] - mx);
      sum += r[c];
    }
    for (int c = 0; c < out.cols; ++c) r[c] /= sum;
  }
  return push(std::move(out), [a, id = static_cast<Id>(nodes_.size())](Tape& tp) {
    const Mat& g = tp.nodes_[id].grad;
    const Mat& y = tp.nodes_[id].val;
    Mat& ag = tp.nodes_[a].grad;
    for (int i = 0; i < g.rows; ++i) {
      double dot = 0.0;
      for (int c = 0; c < g.cols; ++c) dot += g.at(i, c) * y.at(i, c);
      for (int c = 0; c < g.cols; ++c) ag.at(i, c) += y.at(i, c) * (g.at(i, c) - dot);
    }
  });
}

Tape::Id Tape::stack_rows(const std::vector<Id>& rows) {
  assert(!rows.empty());
  const int cols = nodes_[rows[0]].val.cols;
  Mat out(static_cast<int>(rows.size()), cols);
  for (size_t i = 0; i < rows.size(); ++i) {
    assert(nodes_[rows[i]].val.rows == 1 && nodes_[rows[i]].val.cols == cols);
    std::copy(nodes_[rows[i]].val.row(0), nodes_[rows[i]].val.row(0) + cols, out.row(i));
  }
  return push(std::move(out), [rows, id = static_cast<Id>(nodes_.size())](Tape& tp) {
    const Mat& g = tp.nodes_[id].grad;
    for (size_t i = 0; i < rows.size(); ++i) {
      Mat& rg = tp.nodes_[rows[i]].grad;
      for (int c = 0; c < g.cols; ++c) rg.at(0, c) += g.at(static_cast<int>(i), c);
    }
  });
}

Tape::Id Tape::mean_rows(Id a) {
  const Mat& m = nodes_[a].val;
  Mat out(1, m.cols);
  for (int i = 0; i < m.rows; ++i) {
    for (int c = 0; c < m.cols; ++c) out.at(0, c) += m.at(i, c);
  }
  for (double& x : out.v) x /= m.rows;
  return push(std::move(out), [a, id = static_cast<Id>(nodes_.size())](Tape& tp) {
    const Mat& g = tp.nodes_[id].grad;
    Mat& ag = tp.nodes_[a].grad;
    const double inv = 1.0 / ag.rows;
    for (int i = 0; i < ag.rows; ++i) {
      for (int c = 0; c < ag.cols; ++c) ag.at(i, c) += inv * g.at(0, c);
    }
  });
}

Tape::Id Tape::dropout(Id a, Mat mask) {
  assert(nodes_[a].val.same_shape(mask));
  Mat out = nodes_[a].val;
  for (size_t i = 0; i < out.size(); ++i) out.v[i] *= mask.v[i];
  return push(std::move(out),
              [a, mask = std::move(mask), id = static_cast<Id>(nodes_.size())](Tape& tp) {
                const Mat& g = tp.nodes_[id].grad;
                for (size_t i = 0; i < g.size(); ++i) {
                  tp.nodes_[a].grad.v[i] += g.v[i] * mask.v[i];
                }
              });
}

Tape::Id Tape::nll_logits(Id logits, int target) {
  const Mat& l = nodes_[logits].val;
  assert(l.rows == 1 && target >= 0 && target < l.cols);
  double mx = l.v[0];
  for (double x : l.v) mx = std::max(mx, x);
  double sum = 0.0;
  std::vector<double> probs(l.v.size());
  for (size_t i = 0; i < l.v.size(); ++i) {
    probs[i] = std::exp(l.v[i] - mx);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
  Mat out(1, 1);
  out.at(0, 0) = std::log(sum) + mx - l.v[target];
  return push(std::move(out), [logits, target, probs = std::move(probs),
                               id = static_cast<Id>(nodes_.size())](Tape& tp) {
    const double g = tp.nodes_[id].grad.at(0, 0);
    Mat& lg = tp.nodes_[logits].grad;
    for (size_t i = 0; i < probs.size(); ++i) lg.v[i] += g * probs[i];
    lg.v[target] -= g;
  });
}

Tape::Id Tape::weighted_sum(const std::vector<std::pair<Id, double>>& terms) {
  Mat out(1, 1);
  for (const auto& [id, w] : terms) {
    assert(nodes_[id].val.rows == 1 && nodes_[id].val.cols == 1);
    out.at(0, 0) += w * nodes_[id].val.at(0, 0);
  }
  return push(std::move(out), [terms, id = static_cast<Id>(nodes_.size())](Tape& tp) {
    const double g = tp.nodes_[id].grad.at(0, 0);
    for (const auto& [tid, w] : terms) tp.nodes_[tid].grad.at(0, 0) += g * w;
  });
}

Tape::Id Tape::nt_xent(Id x, double tau) {
  Mat out(1, 1);
  out.at(0, 0) = contrastive::in_batch_loss_mat(nodes_[x].val, tau);
  return push(std::move(out), [x, tau, id = static_cast<Id>(nodes_.size())](Tape& tp) {
    const double g = tp.nodes_[id].grad.at(0, 0);
    const Mat dx = contrastive::in_batch_loss_grad(tp.nodes_[x].val, tau);
    Mat& xg = tp.nodes_[x].grad;
    for (size_t i = 0; i < xg.size(); ++i) xg.v[i] += g * dx.v[i];
  });
}

void Tape::backward(Id root) {
  if (inference_) throw ContractViolation("backward() on an inference tape");
  assert(nodes_[root].val.rows == 1 && nodes_[root].val.cols == 1);
  nodes_[root].grad.at(0, 0) = 1.0;
  for (Id i = root; i >= 0; --i) {
    if (nodes_[i].back) nodes_[i].back(*this);
  }
  for (const ParamBinding& p : params_) {
    Mat& dst = *p.external_grad;
    const Mat& src = nodes_[p.node].grad;
    for (size_t i = 0; i < dst.size(); ++i) dst.v[i] += src.v[i];
  }
}

}  // namespace cqr::ad
