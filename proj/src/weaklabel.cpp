#include "cqr/weaklabel.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "cqr/errors.hpp"
#include "cqr/rng.hpp"
#include "cqr/text.hpp"

namespace cqr::weaklabel {

namespace {

const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> kStop = {
      "a",     "an",    "the",   "what",  "which", "who",   "whom",  "whose", "when",  "where",
      "why",   "how",   "is",    "are",   "was",   "were",  "am",    "be",    "been",  "being",
      "do",    "does",  "did",   "can",   "could", "will",  "would", "shall", "should", "may",
      "might", "must",  "have",  "has",   "had",   "of",    "in",    "on",    "at",    "to",
      "for",   "from",  "with",  "about", "as",    "by",    "and",   "or",    "but",   "not",
      "no",    "it",    "its",   "he",    "she",   "his",   "her",   "him",   "they",  "them",
      "their", "this",  "that",  "these", "those", "there", "here",  "we",    "us",    "our",
      "you",   "your",  "i",     "my",    "me",    "else",  "some",  "any",   "other", "more"};
  return kStop;
}

bool is_punct_token(const std::string& t) {
  for (char c : t) {
    if (!std::ispunct(static_cast<unsigned char>(c))) return false;
  }
  return !t.empty();
}

bool is_content(const std::string& token) {
  const std::string lower = ascii_lower(token);
  return !is_punct_token(token) && !stopwords().count(lower);
}

bool is_possessive(const std::string& token) {
  const std::string lower = ascii_lower(token);
  return lower.size() > 2 && lower.compare(lower.size() - 2, 2, "'s") == 0;
}

// Lowercase, possessive suffix stripped.
std::string stem(const std::string& token) {
  std::string s = ascii_lower(token);
  if (s.size() > 2 && s.compare(s.size() - 2, 2, "'s") == 0) s.resize(s.size() - 2);
  return s;
}

// Exact stem equality, or prefix containment with at least 4 shared chars
// ("australia" ~ "australian").
bool stems_match(const std::string& a, const std::string& b) {
  const std::string sa = stem(a), sb = stem(b);
  if (sa == sb) return true;
  const std::string& shorter = sa.size() <= sb.size() ? sa : sb;
  const std::string& longer = sa.size() <= sb.size() ? sb : sa;
  return shorter.size() >= 4 && longer.compare(0, shorter.size(), shorter) == 0;
}

std::string pronoun_for(const PronounLexicon& lexicon, const std::string& token, bool possessive) {
  EntityTag tag = EntityTag::kOther;
  auto it = lexicon.find(stem(token));
  if (it != lexicon.end()) tag = it->second;
  switch (tag) {
    case EntityTag::kPersonF:
      return possessive ? "her" : "she";
    case EntityTag::kPersonM:
      return possessive ? "his" : "he";
    case EntityTag::kPlural:
      return possessive ? "their" : "they";
    case EntityTag::kOther:
      break;
  }
  return possessive ? "its" : "it";
}

bool is_article(const std::string& token) {
  const std::string l = ascii_lower(token);
  return l == "a" || l == "an" || l == "the";
}

std::vector<std::vector<std::string>> history_token_lists(const std::vector<std::string>& history) {
  std::vector<std::vector<std::string>> out;
  for (const std::string& h : history) {
    std::vector<std::string> toks = whitespace_tokens(h);
    for (std::string& t : toks) t = ascii_lower(t);
    out.push_back(std::move(toks));
  }
  return out;
}

bool ngram_in_history(const std::vector<std::vector<std::string>>& hist,
                      const std::vector<std::string>& cur_lower, int start, int len) {
  for (const auto& h : hist) {
    for (size_t j = 0; j + len <= h.size(); ++j) {
      bool eq = true;
      for (int k = 0; k < len && eq; ++k) eq = h[j + k] == cur_lower[start + k];
      if (eq) return true;
    }
  }
  return false;
}

// R1: pronoun substitution.
std::optional<std::string> rule_pronoun(const std::vector<std::string>& history,
                                        const std::string& query, const PronounLexicon& lexicon) {
  const std::vector<std::string> cur = whitespace_tokens(query);
  std::vector<std::string> cur_lower = cur;
  for (std::string& t : cur_lower) t = ascii_lower(t);
  const auto hist = history_token_lists(history);
  if (hist.empty()) return std::nullopt;

  // Longest all-content n-gram (>= 2 tokens) repeated from the history,
  // rightmost occurrence first.
  for (int len = static_cast<int>(cur.size()); len >= 2; --len) {
    for (int start = static_cast<int>(cur.size()) - len; start >= 0; --start) {
      bool all_content = true;
      for (int k = 0; k < len && all_content; ++k) all_content = is_content(cur[start + k]);
      if (!all_content) continue;
      if (!ngram_in_history(hist, cur_lower, start, len)) continue;
      std::vector<std::string> out(cur.begin(), cur.begin() + start);
      if (is_possessive(cur[start])) {
        // keep the possessed noun: "X's voice" -> "her voice"
        out.push_back(pronoun_for(lexicon, cur[start], true));
        out.insert(out.end(), cur.begin() + start + 1, cur.end());
      } else {
        if (!out.empty() && is_article(out.back())) out.pop_back();
        out.push_back(pronoun_for(lexicon, cur[start], false));
        out.insert(out.end(), cur.begin() + start + len, cur.end());
      }
      const std::string result = join_tokens(out);
      if (result != query) return result;
      return std::nullopt;
    }
  }

  // Single content token matched exactly or by stem, rightmost first.
  std::vector<std::string> hist_content;
  for (const auto& h : hist) {
    for (const auto& t : h) {
      if (is_content(t)) hist_content.push_back(t);
    }
  }
  for (int i = static_cast<int>(cur.size()) - 1; i >= 0; --i) {
    if (!is_content(cur[i])) continue;
    bool matched = false;
    for (const auto& h : hist_content) matched = matched || stems_match(cur[i], h);
    if (!matched) continue;
    std::vector<std::string> out(cur.begin(), cur.begin() + i);
    const bool poss = is_possessive(cur[i]);
    if (!poss && !out.empty() && is_article(out.back())) out.pop_back();
    out.push_back(pronoun_for(lexicon, cur[i], poss));
    out.insert(out.end(), cur.begin() + i + 1, cur.end());
    const std::string result = join_tokens(out);
    if (result != query) return result;
    return std::nullopt;
  }
  return std::nullopt;
}

// R2: ellipsis via shared prefix/suffix with a history query.
std::optional<std::string> rule_ellipsis(const std::vector<std::string>& history,
                                         const std::string& query) {
  const std::vector<std::string> cur = whitespace_tokens(query);
  std::vector<std::string> cur_lower = cur;
  for (std::string& t : cur_lower) t = ascii_lower(t);
  const auto hist = history_token_lists(history);
  for (auto it = hist.rbegin(); it != hist.rend(); ++it) {
    const auto& h = *it;
    const size_t max_p = std::min(cur.size(), h.size());
    size_t p = 0;
    while (p < max_p && cur_lower[p] == h[p]) ++p;
    if (p < 3) continue;
    size_t s = 0;
    while (s < max_p - p && cur_lower[cur.size() - 1 - s] == h[h.size() - 1 - s]) ++s;
    const size_t mid_len = cur.size() - p - s;
    if (mid_len == 0 || mid_len > 3) continue;
    bool has_content = false;
    for (size_t k = p; k < p + mid_len; ++k) has_content = has_content || is_content(cur[k]);
    if (!has_content) continue;
    std::vector<std::string> out = {"what", "about", "the"};
    for (size_t k = p; k < p + mid_len; ++k) out.push_back(cur[k]);
    out.push_back("?");
    const std::string result = join_tokens(out);
    if (result != query) return result;
  }
  return std::nullopt;
}

}  // namespace

std::optional<std::string> apply_rules(const std::vector<std::string>& history,
                                       const std::string& query, const PronounLexicon& lexicon) {
  if (auto r1 = rule_pronoun(history, query, lexicon)) return r1;
  return rule_ellipsis(history, query);
}

std::vector<LabeledExample> rule_simplify(const Session& session, const PronounLexicon& lexicon) {
  std::vector<LabeledExample> out;
  std::vector<std::string> history;
  for (const Turn& turn : session.turns) {
    if (!history.empty()) {
      if (auto simplified = apply_rules(history, turn.query, lexicon)) {
        out.push_back(LabeledExample{history, *simplified, turn.query});
      }
    }
    history.push_back(turn.query);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic world

SyntheticWorld::SyntheticWorld()
    : SyntheticWorld(
          {"sun",     "moon",    "river",  "mountain", "ocean",  "forest", "desert",  "castle",
           "bridge",  "temple",  "garden", "harbor",   "valley", "glacier", "volcano", "island",
           "canyon",  "meadow",  "lagoon", "plateau",  "tower",  "market", "palace",  "lighthouse"},
          {"color", "size", "weight", "height", "age", "shape", "origin", "price"}) {}

SyntheticWorld::SyntheticWorld(std::vector<std::string> entities, std::vector<std::string> attributes)
    : entities_(std::move(entities)), attributes_(std::move(attributes)) {
  if (entities_.empty() || attributes_.empty()) {
    throw ContractViolation("SyntheticWorld: need entities and attributes");
  }
}

std::string SyntheticWorld::full_form(int entity, int attribute) const {
  return "what is the " + attributes_.at(attribute) + " of the " + entities_.at(entity) + " ?";
}

std::string SyntheticWorld::pronoun_form(int attribute) const {
  return "what is the " + attributes_.at(attribute) + " of it ?";
}

std::string SyntheticWorld::ellipsis_form(int attribute) const {
  return "what about the " + attributes_.at(attribute) + " ?";
}

long SyntheticWorld::session_capacity(int turns_per_session) const {
  if (turns_per_session > attribute_count()) return 0;
  long arrangements = 1;
  for (int k = 0; k < turns_per_session; ++k) arrangements *= attribute_count() - k;
  return arrangements * entity_count();
}

namespace {

struct SessionPlan {
  int entity;
  std::vector<int> attrs;
};

// Sample distinct (entity, ordered attributes) plans by rejection.
std::vector<SessionPlan> sample_plans(const SyntheticWorld& world, int count, int turns, Rng& rng) {
  const long capacity = world.session_capacity(turns);
  if (count > capacity) {
    throw DataError("synthetic world too small: need " + std::to_string(count) + " sessions, have " +
                    std::to_string(capacity));
  }
  std::set<std::vector<int>> seen;
  std::vector<SessionPlan> plans;
  while (static_cast<int>(plans.size()) < count) {
    SessionPlan plan;
    plan.entity = static_cast<int>(rng.below(world.entity_count()));
    std::vector<int> attrs(world.attribute_count());
    for (size_t i = 0; i < attrs.size(); ++i) attrs[i] = static_cast<int>(i);
    rng.shuffle(attrs);
    plan.attrs.assign(attrs.begin(), attrs.begin() + turns);
    std::vector<int> signature = {plan.entity};
    signature.insert(signature.end(), plan.attrs.begin(), plan.attrs.end());
    if (seen.insert(signature).second) plans.push_back(std::move(plan));
  }
  return plans;
}

Session plan_to_session(const SyntheticWorld& world, const SessionPlan& plan, const std::string& id,
                        bool fully_specified, bool labeled, Rng& rng) {
  Session s;
  s.id = id;
  for (size_t t = 0; t < plan.attrs.size(); ++t) {
    const std::string full = world.full_form(plan.entity, plan.attrs[t]);
    Turn turn;
    if (t == 0 || fully_specified) {
      turn.query = full;
    } else {
      turn.query = rng.bernoulli(0.5) ? world.pronoun_form(plan.attrs[t])
                                      : world.ellipsis_form(plan.attrs[t]);
      if (labeled) turn.rewrite = full;
    }
    s.turns.push_back(std::move(turn));
  }
  return s;
}

}  // namespace

SynthData synth_generate(int n_sessions, int turns_per_session, uint64_t seed) {
  if (n_sessions < 1) throw ConfigError("synth_generate: n_sessions must be >= 1");
  constexpr int kLabeledSessions = 16;
  constexpr int kTestSessions = 50;
  const SyntheticWorld world;
  if (turns_per_session < 2 || turns_per_session > world.attribute_count()) {
    throw ConfigError("synth_generate: turns_per_session must be in [2, " +
                      std::to_string(world.attribute_count()) + "]");
  }
  Rng rng(derive_seed(seed, 0x5EED));
  const int total = kLabeledSessions + kTestSessions + 2 * n_sessions;
  const auto plans = sample_plans(world, total, turns_per_session, rng);

  SynthData data;
  int next = 0;
  const auto take = [&](std::vector<Session>& dst, int count, const char* prefix, bool full,
                        bool labeled) {
    for (int i = 0; i < count; ++i) {
      const std::string id = std::string("synth-") + prefix + "-" + std::to_string(i);
      dst.push_back(plan_to_session(world, plans[next++], id, full, labeled, rng));
    }
  };
  take(data.labeled, kLabeledSessions, "d", false, true);
  take(data.test, kTestSessions, "test", false, true);
  take(data.pool_simplifier, n_sessions, "us", true, false);
  take(data.pool_rewriter, n_sessions, "ur", false, false);
  return data;
}

// ---------------------------------------------------------------------------
// Oracle

namespace {

// Parses "what is the <attr> of the <entity> ?" -> (attr, entity).
bool parse_full(const std::vector<std::string>& toks, std::string* attr, std::string* entity) {
  if (toks.size() < 8 || toks.back() != "?") return false;
  if (toks[0] != "what" || toks[1] != "is" || toks[2] != "the") return false;
  // find " of the " splitting attr and entity
  for (size_t i = 3; i + 3 < toks.size(); ++i) {
    if (toks[i] == "of" && toks[i + 1] == "the") {
      if (i == 3 || i + 2 >= toks.size() - 1) return false;
      *attr = join_tokens({toks.begin() + 3, toks.begin() + i});
      *entity = join_tokens({toks.begin() + i + 2, toks.end() - 1});
      return true;
    }
  }
  return false;
}

bool parse_pronoun(const std::vector<std::string>& toks, std::string* attr) {
  if (toks.size() < 7 || toks.back() != "?") return false;
  if (toks[0] != "what" || toks[1] != "is" || toks[2] != "the") return false;
  const size_t n = toks.size();
  if (toks[n - 3] != "of" || toks[n - 2] != "it") return false;
  if (n - 3 <= 3) return false;
  *attr = join_tokens({toks.begin() + 3, toks.begin() + static_cast<long>(n - 3)});
  return true;
}

bool parse_ellipsis(const std::vector<std::string>& toks, std::string* attr) {
  if (toks.size() < 5 || toks.back() != "?") return false;
  if (toks[0] != "what" || toks[1] != "about" || toks[2] != "the") return false;
  *attr = join_tokens({toks.begin() + 3, toks.end() - 1});
  return true;
}

std::string resolve_entity(const std::vector<std::string>& history) {
  for (auto it = history.rbegin(); it != history.rend(); ++it) {
    std::string attr, entity;
    if (parse_full(whitespace_tokens(*it), &attr, &entity)) return entity;
  }
  throw DataError("oracle_rewrite: no fully specified antecedent in history");
}

}  // namespace

std::string oracle_rewrite(const std::vector<std::string>& history, const std::string& reduced) {
  const auto toks = whitespace_tokens(reduced);
  std::string attr, entity;
  if (parse_full(toks, &attr, &entity)) return reduced;  // already fully specified
  if (parse_pronoun(toks, &attr) || parse_ellipsis(toks, &attr)) {
    return "what is the " + attr + " of the " + resolve_entity(history) + " ?";
  }
  throw DataError("oracle_rewrite: '" + reduced + "' is not a synthetic grammar form");
}

std::vector<Triple> generate_triples(int count, uint64_t seed) {
  const SyntheticWorld world;
  Rng rng(derive_seed(seed, 0x7219));
  std::vector<Triple> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const int entity = static_cast<int>(rng.below(world.entity_count()));
    const int history_len = 1 + static_cast<int>(rng.below(3));
    std::vector<int> attrs(world.attribute_count());
    for (size_t k = 0; k < attrs.size(); ++k) attrs[k] = static_cast<int>(k);
    rng.shuffle(attrs);
    Triple t;
    for (int h = 0; h < history_len; ++h) {
      // only the first history turn must be fully specified
      if (h == 0) {
        t.history.push_back(world.full_form(entity, attrs[h]));
      } else {
        t.history.push_back(rng.bernoulli(0.5) ? world.pronoun_form(attrs[h])
                                               : world.full_form(entity, attrs[h]));
      }
    }
    const int target_attr = attrs[history_len];
    t.full = world.full_form(entity, target_attr);
    t.reduced =
        rng.bernoulli(0.5) ? world.pronoun_form(target_attr) : world.ellipsis_form(target_attr);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace cqr::weaklabel
