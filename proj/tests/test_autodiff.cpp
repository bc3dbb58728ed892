#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cqr/autodiff.hpp"
#include "cqr/rng.hpp"
#include "oracles.hpp"

using namespace cqr;
using ad::Tape;

namespace {

Mat random_mat(Rng& rng, int r, int c, double scale = 1.0) {
  Mat m(r, c);
  for (double& x : m.v) x = rng.uniform(-scale, scale);
  return m;
}

// Finite-difference check of d(loss)/d(p) for the scalar node built by build().
double fd_check(Mat& p, const std::function<Tape::Id(Tape&, Tape::Id)>& build) {
  Mat grad(p.rows, p.cols);
  {
    Tape tape;
    Tape::Id leaf = tape.param(&p, &grad);
    tape.backward(build(tape, leaf));
  }
  const auto value_at = [&](const std::vector<double>& flat) {
    Mat saved = p;
    p.v = flat;
    Tape tape(true);
    Tape::Id leaf = tape.param(&p, nullptr);
    const double out = tape.scalar(build(tape, leaf));
    p = saved;
    return out;
  };
  const auto fd = oracles::finite_diff(value_at, p.v, 1e-6);
  return oracles::max_rel_err(grad.v, fd);
}

}  // namespace

TEST_CASE("matmul and activations match finite differences") {
  Rng rng(5);
  Mat p = random_mat(rng, 3, 4, 0.8);
  Mat other = random_mat(rng, 4, 2, 0.7);
  const double err = fd_check(p, [&](Tape& t, Tape::Id leaf) {
    Tape::Id b = t.constant(other);
    Tape::Id prod = t.matmul(leaf, b);       // 3x2
    Tape::Id act = t.tanh(t.sigmoid(prod));  // 3x2
    Tape::Id pooled = t.mean_rows(act);      // 1x2
    Tape::Id stacked = t.matmul_t(pooled, pooled);  // 1x1
    return t.weighted_sum({{stacked, 2.5}});
  });
  CHECK(err < 1e-6);
}

TEST_CASE("slice, concat, add_row, mul, sub, softmax match finite differences") {
  Rng rng(17);
  Mat p = random_mat(rng, 1, 6, 0.9);
  Mat bias = random_mat(rng, 1, 3, 0.5);
  const double err = fd_check(p, [&](Tape& t, Tape::Id leaf) {
    Tape::Id left = t.slice_cols(leaf, 0, 3);
    Tape::Id right = t.slice_cols(leaf, 3, 3);
    Tape::Id mixed = t.mul(left, t.sigmoid(right));
    Tape::Id shifted = t.add_row(mixed, t.constant(bias));
    Tape::Id both = t.concat_cols(shifted, t.sub(left, right));  // 1x6
    Tape::Id sm = t.softmax_row(both);
    return t.nll_logits(t.scale(sm, 3.0), 2);
  });
  CHECK(err < 1e-6);
}

TEST_CASE("lookup_row and stack_rows route gradients to the right rows") {
  Rng rng(23);
  Mat table = random_mat(rng, 5, 3, 1.0);
  const double err = fd_check(table, [&](Tape& t, Tape::Id leaf) {
    Tape::Id r1 = t.lookup_row(leaf, 1);
    Tape::Id r4 = t.lookup_row(leaf, 4);
    Tape::Id r1b = t.lookup_row(leaf, 1);  // repeated lookup accumulates
    Tape::Id stacked = t.stack_rows({r1, r4, r1b});
    Tape::Id pooled = t.mean_rows(t.tanh(stacked));
    return t.nll_logits(pooled, 0);
  });
  CHECK(err < 1e-6);
}

TEST_CASE("nll_logits equals cross entropy by hand") {
  Mat logits(1, 4);
  logits.v = {0.0, 0.0, 0.0, 0.0};
  Tape t(true);
  Tape::Id l = t.constant(logits);
  CHECK(t.scalar(t.nll_logits(l, 2)) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("dropout mask scales gradients") {
  Mat p(1, 4);
  p.v = {1.0, 2.0, 3.0, 4.0};
  Mat mask(1, 4);
  mask.v = {0.0, 2.0, 0.0, 2.0};  // inverted dropout with rate 0.5
  Mat grad(1, 4);
  Tape t;
  Tape::Id leaf = t.param(&p, &grad);
  Tape::Id dropped = t.dropout(leaf, mask);
  Tape::Id pooled = t.mean_rows(dropped);
  Tape::Id loss = t.weighted_sum({{t.nll_logits(pooled, 0), 1.0}});
  t.backward(loss);
  CHECK(grad.v[0] == 0.0);
  CHECK(grad.v[2] == 0.0);
  CHECK(grad.v[1] != 0.0);
  CHECK(t.value(dropped).v[1] == 4.0);
}

TEST_CASE("backward on an inference tape is rejected") {
  Tape t(true);
  Mat m(1, 1);
  Tape::Id c = t.constant(m);
  CHECK_THROWS(t.backward(c));
}

TEST_CASE("nt_xent node matches the value and finite differences") {
  Rng rng(31);
  Mat p = random_mat(rng, 6, 4, 1.0);
  for (double& x : p.v) x += 1.5;  // keep rows clearly nonzero
  const double tau = 0.2;
  Mat grad(6, 4);
  double val = 0;
  {
    Tape t;
    Tape::Id leaf = t.param(&p, &grad);
    Tape::Id loss = t.nt_xent(leaf, tau);
    val = t.scalar(loss);
    t.backward(loss);
  }
  CHECK(val == doctest::Approx(oracles::nt_xent_ref(p, tau)).epsilon(1e-10));
  const auto fd = oracles::finite_diff(
      [&](const std::vector<double>& flat) {
        Mat m(6, 4, flat);
        return oracles::nt_xent_ref(m, tau);
      },
      p.v, 1e-6);
  CHECK(oracles::max_rel_err(grad.v, fd) < 1e-6);
}
