#include "cqr/metrics.hpp"

#include <cctype>
#include <cmath>
#include <unordered_map>

#include <json.hpp>

#include "cqr/errors.hpp"

namespace cqr::metrics {

namespace {

std::string ngram_key(const std::vector<std::string>& t, int start, int n) {
  std::string key;
  for (int k = 0; k < n; ++k) {
    if (k) key += '\x1f';
    key += t[start + k];
  }
  return key;
}

std::unordered_map<std::string, int> ngram_counts(const std::vector<std::string>& t, int n) {
  std::unordered_map<std::string, int> counts;
  for (int i = 0; i + n <= static_cast<int>(t.size()); ++i) ++counts[ngram_key(t, i, n)];
  return counts;
}

// Sum over n-grams of min(candidate count, reference count).
int clipped_overlap(const std::unordered_map<std::string, int>& cand,
                    const std::unordered_map<std::string, int>& ref) {
  int total = 0;
  for (const auto& [g, c] : cand) {
    auto it = ref.find(g);
    if (it != ref.end()) total += std::min(c, it->second);
  }
  return total;
}

int lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const size_t n = b.size();
  std::vector<int> prev(n + 1, 0), cur(n + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= n; ++j) {
      cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[n];
}

// F1 when precision = overlap/|cand| and recall = overlap/|ref| share the
// numerator: 2PR/(P+R) reduces to 2*overlap/(|cand|+|ref|), which is also
// exact in floating point for the hand-checkable fixtures.
double f1_from_overlap(int overlap, int cand_size, int ref_size) {
  if (overlap == 0 || cand_size == 0 || ref_size == 0) return 0.0;
  return 2.0 * overlap / static_cast<double>(cand_size + ref_size);
}

double mean(const std::vector<ExampleScores>& xs, double ExampleScores::*field) {
  double s = 0.0;
  for (const auto& x : xs) s += x.*field;
  return s / static_cast<double>(xs.size());
}

double log_gamma(double x) { return std::lgamma(x); }

// Regularized incomplete beta I_x(a, b) by the standard continued fraction.
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 200;
  constexpr double kEps = 3e-14;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

double inc_beta_reg(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front =
      log_gamma(a + b) - log_gamma(a) - log_gamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::string spaced;
  spaced.reserve(text.size() * 2);
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::ispunct(c)) {
      spaced += ' ';
      spaced += ch;
      spaced += ' ';
    } else if (ch >= 'A' && ch <= 'Z') {
      spaced += static_cast<char>(ch - 'A' + 'a');
    } else {
      spaced += ch;
    }
  }
  std::vector<std::string> out;
  std::string cur;
  for (char ch : spaced) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) {
        out.push_back(std::move(cur));
        cur.clear();
      }
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

double bleu_n(const std::string& candidate, const std::string& reference, int n) {
  if (n < 1 || n > 4) throw ContractViolation("bleu_n: n must be in [1, 4]");
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  if (cand.empty()) return 0.0;
  // Effective order: a candidate shorter than n is scored over the orders it
  // actually has n-grams for, so identical short texts still score 1.
  const int order = std::min(n, static_cast<int>(cand.size()));
  double log_prec_sum = 0.0;
  for (int k = 1; k <= order; ++k) {
    const int total = static_cast<int>(cand.size()) - k + 1;
    const int match = clipped_overlap(ngram_counts(cand, k), ngram_counts(ref, k));
    double num = match, den = total;
    if (match == 0) {
      if (k == 1) return 0.0;
      num += 1.0;  // add-one smoothing for zero-count higher orders
      den += 1.0;
    }
    log_prec_sum += std::log(num / den);
  }
  const double bp = std::min(
      1.0, std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(cand.size())));
  return bp * std::exp(log_prec_sum / order);
}

double rouge_n(const std::string& candidate, const std::string& reference, int n) {
  if (n != 1 && n != 2) throw ContractViolation("rouge_n: n must be 1 or 2");
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  const int cand_grams = static_cast<int>(cand.size()) - n + 1;
  const int ref_grams = static_cast<int>(ref.size()) - n + 1;
  if (cand_grams <= 0 || ref_grams <= 0) return 0.0;
  const int overlap = clipped_overlap(ngram_counts(cand, n), ngram_counts(ref, n));
  return f1_from_overlap(overlap, cand_grams, ref_grams);
}

double rouge_l(const std::string& candidate, const std::string& reference) {
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  if (cand.empty() || ref.empty()) return 0.0;
  const int lcs = lcs_length(cand, ref);
  return f1_from_overlap(lcs, static_cast<int>(cand.size()), static_cast<int>(ref.size()));
}

int exact_match(const std::string& candidate, const std::string& reference) {
  return tokenize(candidate) == tokenize(reference) ? 1 : 0;
}

MetricReport evaluate_corpus(const std::vector<std::pair<std::string, std::string>>& pairs) {
  if (pairs.empty()) throw ContractViolation("evaluate_corpus: empty corpus");
  MetricReport report;
  report.per_example.reserve(pairs.size());
  for (const auto& [cand, ref] : pairs) {
    ExampleScores s;
    s.bleu1 = bleu_n(cand, ref, 1);
    s.bleu2 = bleu_n(cand, ref, 2);
    s.bleu4 = bleu_n(cand, ref, 4);
    s.rouge1 = rouge_n(cand, ref, 1);
    s.rouge2 = rouge_n(cand, ref, 2);
    s.rougeL = rouge_l(cand, ref);
    s.em = exact_match(cand, ref);
    report.per_example.push_back(s);
  }
  report.n = static_cast<int>(pairs.size());
  report.bleu1 = mean(report.per_example, &ExampleScores::bleu1);
  report.bleu2 = mean(report.per_example, &ExampleScores::bleu2);
  report.bleu4 = mean(report.per_example, &ExampleScores::bleu4);
  report.rouge1 = mean(report.per_example, &ExampleScores::rouge1);
  report.rouge2 = mean(report.per_example, &ExampleScores::rouge2);
  report.rougeL = mean(report.per_example, &ExampleScores::rougeL);
  report.em = mean(report.per_example, &ExampleScores::em);
  return report;
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["bleu1"] = bleu1;
  j["bleu2"] = bleu2;
  j["bleu4"] = bleu4;
  j["rouge1"] = rouge1;
  j["rouge2"] = rouge2;
  j["rougeL"] = rougeL;
  j["em"] = em;
  j["n"] = n;
  return j.dump();
}

double paired_ttest(const std::vector<double>& scores_a, const std::vector<double>& scores_b) {
  if (scores_a.size() != scores_b.size()) {
    throw ContractViolation("paired_ttest: score lists differ in length");
  }
  const size_t n = scores_a.size();
  if (n < 2) throw ContractViolation("paired_ttest: need at least 2 pairs");
  std::vector<double> d(n);
  double mean_d = 0.0;
  for (size_t i = 0; i < n; ++i) {
    d[i] = scores_a[i] - scores_b[i];
    mean_d += d[i];
  }
  mean_d /= static_cast<double>(n);
  double var = 0.0;
  for (double x : d) var += (x - mean_d) * (x - mean_d);
  var /= static_cast<double>(n - 1);
  if (var == 0.0) {
    throw ContractViolation("paired_ttest: zero-variance differences, samples incomparable");
  }
  const double t = mean_d / std::sqrt(var / static_cast<double>(n));
  const double df = static_cast<double>(n - 1);
  // Two-tailed: P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2).
  return inc_beta_reg(df / 2.0, 0.5, df / (df + t * t));
}

}  // namespace cqr::metrics
