#include "cqr/core.hpp"

#include "cqr/errors.hpp"
#include "cqr/text.hpp"

namespace cqr {

void validate_session(const Session& s) {
  if (s.id.empty()) throw DataError("session with empty id");
  if (s.turns.empty()) throw DataError("session '" + s.id + "' has no turns");
  for (size_t i = 0; i < s.turns.size(); ++i) {
    const Turn& t = s.turns[i];
    if (whitespace_tokens(t.query).empty()) {
      throw DataError("session '" + s.id + "' turn " + std::to_string(i) + " has an empty query");
    }
    if (t.rewrite && whitespace_tokens(*t.rewrite).empty()) {
      throw DataError("session '" + s.id + "' turn " + std::to_string(i) + " has an empty rewrite");
    }
  }
}

LabeledExample reverse(const LabeledExample& ex) {
  return LabeledExample{ex.history, ex.target, ex.source};
}

const char* direction_name(Direction d) {
  return d == Direction::kSimplify ? "simplify" : "rewrite";
}

DataPool::DataPool(std::vector<Session> sessions) : sessions_(std::move(sessions)) {
  for (const Session& s : sessions_) {
    validate_session(s);
    for (int t = 0; t < static_cast<int>(s.turns.size()); ++t) {
      if (!known_.insert({s.id, t}).second) {
        throw DataError("duplicate session id '" + s.id + "' in pool");
      }
    }
  }
}

std::vector<DataPool::Item> DataPool::unconsumed() const {
  std::vector<Item> items;
  for (const Session& s : sessions_) {
    for (int t = 0; t < static_cast<int>(s.turns.size()); ++t) {
      if (!consumed_.count({s.id, t})) items.push_back({&s, t});
    }
  }
  return items;
}

size_t DataPool::size() const { return known_.size() - consumed_.size(); }

void DataPool::remove_consumed(const std::vector<PseudoExample>& taken) {
  // Validate the whole batch before mutating so a bad item has no effect.
  std::set<std::pair<std::string, int>> batch;
  for (const PseudoExample& ex : taken) {
    const std::pair<std::string, int> key{ex.session_id, ex.turn_index};
    if (!known_.count(key) || consumed_.count(key) || batch.count(key)) {
      throw ContractViolation("remove_consumed: unknown or already-consumed item (" + ex.session_id +
                              ", turn " + std::to_string(ex.turn_index) + ")");
    }
    batch.insert(key);
  }
  consumed_.insert(batch.begin(), batch.end());
}

Selection select(const std::vector<PseudoExample>& candidates, double threshold) {
  Selection out;
  for (const PseudoExample& ex : candidates) {
    (ex.confidence > threshold ? out.kept : out.rejected).push_back(ex);
  }
  return out;
}

SyntheticDataset fuse(const std::vector<PseudoExample>& p_s, const std::vector<PseudoExample>& p_r) {
  const auto check = [](const PseudoExample& ex, Direction want) {
    if (ex.direction != want) {
      throw ContractViolation(std::string("fuse: example (") + ex.session_id + ", turn " +
                              std::to_string(ex.turn_index) + ") has direction " +
                              direction_name(ex.direction) + ", expected " + direction_name(want));
    }
  };
  SyntheticDataset out;
  for (const PseudoExample& ex : p_s) {
    check(ex, Direction::kSimplify);
    out.for_rewriter_.push_back({ex.history, ex.generated, ex.source, ex.confidence, ex.direction});
  }
  for (const PseudoExample& ex : p_r) {
    check(ex, Direction::kRewrite);
    out.for_simplifier_.push_back({ex.history, ex.generated, ex.source, ex.confidence, ex.direction});
  }
  return out;
}

}  // namespace cqr
