#ifndef CQR_TESTS_ORACLES_HPP
#define CQR_TESTS_ORACLES_HPP

// Independent brute-force reference implementations used only by tests.
// These deliberately take different algorithmic routes from the library
// (linear n-gram scans instead of hash maps, recursive LCS, term-by-term
// contrastive evaluation) so agreement is meaningful.

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cqr/linalg.hpp"

namespace oracles {

struct MetricScores {
  double bleu1, bleu2, bleu4, rouge1, rouge2, rougeL, em;
};

double bleu_ref(const std::string& cand, const std::string& ref, int n);
double rouge_n_ref(const std::string& cand, const std::string& ref, int n);
double rouge_l_ref(const std::string& cand, const std::string& ref);
int em_ref(const std::string& cand, const std::string& ref);
MetricScores all_metrics_ref(const std::string& cand, const std::string& ref);

// Term-by-term in-batch contrastive loss on the full 2N x 2N similarity
// matrix: l(i,j) = exp(sim_ij/tau) / sum_{k != i} exp(sim_ik/tau), and
// L = -(1/2N) * sum_k [log l(2k-1,2k) + log l(2k,2k-1)] (1-based rows).
double nt_xent_ref(const cqr::Mat& x, double tau);

// Central finite differences of f at x, step h.
std::vector<double> finite_diff(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> x, double h);

// max_i |a_i - b_i| / max(1, |a_i|, |b_i|)
double max_rel_err(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace oracles

#endif
