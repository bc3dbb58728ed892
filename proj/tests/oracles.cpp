#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oracles {
namespace {

// Same tokenization contract as the library, re-stated independently:
// lowercase, ASCII punctuation split off, whitespace split.
std::vector<std::string> toks(const std::string& text) {
  std::string spaced;
  for (char c : text) {
    const unsigned char u = static_cast<unsigned char>(c);
    if (u < 0x80 && std::ispunct(u)) {
      spaced += ' ';
      spaced += c;
      spaced += ' ';
    } else if (c >= 'A' && c <= 'Z') {
      spaced += static_cast<char>(c - 'A' + 'a');
    } else {
      spaced += c;
    }
  }
  std::vector<std::string> out;
  std::string cur;
  for (char c : spaced) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<std::string> ngrams(const std::vector<std::string>& t, int n) {
  std::vector<std::string> out;
  for (int i = 0; i + n <= static_cast<int>(t.size()); ++i) {
    std::string g;
    for (int k = 0; k < n; ++k) {
      if (k) g += '\x1f';
      g += t[i + k];
    }
    out.push_back(g);
  }
  return out;
}

int count_of(const std::vector<std::string>& v, const std::string& g) {
  int c = 0;
  for (const auto& x : v)
    if (x == g) ++c;
  return c;
}

// Clipped matches: sum over distinct candidate n-grams of
// min(count_in_candidate, count_in_reference).
int clipped_matches(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
  std::vector<std::string> seen;
  int total = 0;
  for (const auto& g : cand) {
    if (count_of(seen, g) > 0) continue;
    seen.push_back(g);
    total += std::min(count_of(cand, g), count_of(ref, g));
  }
  return total;
}

int lcs_rec(const std::vector<std::string>& a, const std::vector<std::string>& b, size_t i, size_t j,
            std::vector<int>& memo) {
  if (i == a.size() || j == b.size()) return 0;
  int& m = memo[i * (b.size() + 1) + j];
  if (m >= 0) return m;
  if (a[i] == b[j]) {
    m = 1 + lcs_rec(a, b, i + 1, j + 1, memo);
  } else {
    m = std::max(lcs_rec(a, b, i + 1, j, memo), lcs_rec(a, b, i, j + 1, memo));
  }
  return m;
}

}  // namespace

double bleu_ref(const std::string& cand, const std::string& ref, int n) {
  const auto c = toks(cand);
  const auto r = toks(ref);
  if (c.empty()) return 0.0;
  const int order = std::min<int>(n, static_cast<int>(c.size()));
  double log_prec_sum = 0.0;
  for (int k = 1; k <= order; ++k) {
    const auto cg = ngrams(c, k);
    const auto rg = ngrams(r, k);
    double match = clipped_matches(cg, rg);
    double total = static_cast<double>(cg.size());
    if (match == 0.0) {
      if (k == 1) return 0.0;
      match += 1.0;
      total += 1.0;
    }
    log_prec_sum += std::log(match / total);
  }
  const double bp =
      std::min(1.0, std::exp(1.0 - static_cast<double>(r.size()) / static_cast<double>(c.size())));
  return bp * std::exp(log_prec_sum / order);
}

double rouge_n_ref(const std::string& cand, const std::string& ref, int n) {
  const auto cg = ngrams(toks(cand), n);
  const auto rg = ngrams(toks(ref), n);
  if (cg.empty() || rg.empty()) return 0.0;
  const int overlap = clipped_matches(cg, rg);
  if (overlap == 0) return 0.0;
  return 2.0 * overlap / static_cast<double>(cg.size() + rg.size());
}

double rouge_l_ref(const std::string& cand, const std::string& ref) {
  const auto c = toks(cand);
  const auto r = toks(ref);
  if (c.empty() || r.empty()) return 0.0;
  std::vector<int> memo((c.size() + 1) * (r.size() + 1), -1);
  const int l = lcs_rec(c, r, 0, 0, memo);
  if (l == 0) return 0.0;
  return 2.0 * l / static_cast<double>(c.size() + r.size());
}

int em_ref(const std::string& cand, const std::string& ref) {
  return toks(cand) == toks(ref) ? 1 : 0;
}

MetricScores all_metrics_ref(const std::string& cand, const std::string& ref) {
  return MetricScores{bleu_ref(cand, ref, 1),  bleu_ref(cand, ref, 2),  bleu_ref(cand, ref, 4),
                      rouge_n_ref(cand, ref, 1), rouge_n_ref(cand, ref, 2), rouge_l_ref(cand, ref),
                      static_cast<double>(em_ref(cand, ref))};
}

double nt_xent_ref(const cqr::Mat& x, double tau) {
  const int rows = x.rows;
  if (rows < 2 || rows % 2 != 0) throw std::invalid_argument("nt_xent_ref: need even row count >= 2");
  cqr::Mat sim(rows, rows);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < rows; ++j) {
      double dot = 0, ni = 0, nj = 0;
      for (int d = 0; d < x.cols; ++d) {
        dot += x.at(i, d) * x.at(j, d);
        ni += x.at(i, d) * x.at(i, d);
        nj += x.at(j, d) * x.at(j, d);
      }
      sim.at(i, j) = dot / (std::sqrt(ni) * std::sqrt(nj));
    }
  }
  const auto l = [&](int i, int j) {
    double denom = 0.0;
    for (int k = 0; k < rows; ++k) {
      if (k == i) continue;
      denom += std::exp(sim.at(i, k) / tau);
    }
    return std::exp(sim.at(i, j) / tau) / denom;
  };
  double total = 0.0;
  for (int k = 0; k < rows / 2; ++k) {
    total += std::log(l(2 * k, 2 * k + 1)) + std::log(l(2 * k + 1, 2 * k));
  }
  return -total / rows;
}

std::vector<double> finite_diff(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({1.0, std::fabs(a[i]), std::fabs(b[i])});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace oracles
