#ifndef CQR_METRICS_HPP
#define CQR_METRICS_HPP

#include <string>
#include <utility>
#include <vector>

namespace cqr::metrics {

// Shared metric tokenization: lowercase, ASCII punctuation isolated as
// separate tokens, whitespace split. Every metric goes through this one
// routine.
std::vector<std::string> tokenize(const std::string& text);

// Sentence BLEU-n: geometric mean of modified k-gram precisions (k=1..n)
// times the brevity penalty min(1, exp(1 - r/c)). Zero-count precisions for
// k >= 2 get add-one smoothing; a zero unigram precision or a candidate with
// no k-grams yields 0.
double bleu_n(const std::string& candidate, const std::string& reference, int n);

// ROUGE-n F1 over n-gram overlap (clipped counts), n in {1, 2}.
double rouge_n(const std::string& candidate, const std::string& reference, int n);

// ROUGE-L F1 over the longest common subsequence.
double rouge_l(const std::string& candidate, const std::string& reference);

// 1 iff the two texts are identical after lowercasing and canonical
// single-space retokenization.
int exact_match(const std::string& candidate, const std::string& reference);

struct ExampleScores {
  double bleu1 = 0, bleu2 = 0, bleu4 = 0;
  double rouge1 = 0, rouge2 = 0, rougeL = 0;
  double em = 0;
};

struct MetricReport {
  double bleu1 = 0, bleu2 = 0, bleu4 = 0;
  double rouge1 = 0, rouge2 = 0, rougeL = 0;
  double em = 0;
  int n = 0;
  std::vector<ExampleScores> per_example;

  std::string to_json() const;
};

// Corpus scores are the means of the per-example sentence scores.
MetricReport evaluate_corpus(const std::vector<std::pair<std::string, std::string>>& pairs);

// Two-tailed paired t-test p-value. Throws ContractViolation when the
// differences have zero variance (incomparable) or fewer than 2 samples.
double paired_ttest(const std::vector<double>& scores_a, const std::vector<double>& scores_b);

}  // namespace cqr::metrics

#endif
