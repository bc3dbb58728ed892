#ifndef CQR_CORE_HPP
#define CQR_CORE_HPP

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace cqr {

struct Turn {
  std::string query;
  std::optional<std::string> rewrite;
  std::optional<std::string> answer;
};

struct Session {
  std::string id;
  std::vector<Turn> turns;
};

// Throws DataError when invariants fail (empty query, empty rewrite, ...).
void validate_session(const Session& s);

// One supervised pair: history of prior queries, in-context source, target.
struct LabeledExample {
  std::vector<std::string> history;
  std::string source;
  std::string target;
};

// Swap source and target; history unchanged. An involution.
LabeledExample reverse(const LabeledExample& ex);

enum class Direction { kSimplify, kRewrite };

const char* direction_name(Direction d);

// A model-generated training pair. `source` is the pool query the model was
// run on, `generated` its output. Identity for pool bookkeeping is
// (session id, turn index).
struct PseudoExample {
  std::string session_id;
  int turn_index = 0;
  std::vector<std::string> history;
  std::string source;
  std::string generated;
  double confidence = 0.0;
  Direction direction = Direction::kSimplify;
};

// An unlabeled pool. Items removed from the pool are never emitted again;
// the pool only shrinks. Single-writer.
class DataPool {
 public:
  DataPool() = default;
  explicit DataPool(std::vector<Session> sessions);

  // (session, turn) references for all unconsumed queries, in session order.
  struct Item {
    const Session* session;
    int turn_index;
  };
  std::vector<Item> unconsumed() const;

  size_t size() const;  // number of unconsumed queries
  bool empty() const { return size() == 0; }
  const std::vector<Session>& sessions() const { return sessions_; }

  // Marks the origins of `taken` consumed. Unknown or already-consumed
  // identifiers raise ContractViolation.
  void remove_consumed(const std::vector<PseudoExample>& taken);

 private:
  std::vector<Session> sessions_;
  std::set<std::pair<std::string, int>> consumed_;
  std::set<std::pair<std::string, int>> known_;
};

// Confidence selection: keeps candidates with confidence strictly greater
// than threshold, order preserved. kept and rejected partition the input.
struct Selection {
  std::vector<PseudoExample> kept;
  std::vector<PseudoExample> rejected;
};
Selection select(const std::vector<PseudoExample>& candidates, double threshold);

// One oriented training pair inside a synthetic dataset view. `input` is
// always the model-generated text and `target` the pool query it came from.
struct OrientedPair {
  std::vector<std::string> history;
  std::string input;
  std::string target;
  double confidence = 0.0;
  Direction produced_by = Direction::kSimplify;
};

// Pseudo-labeled pairs from both directions fused into one dataset with a
// view per consumer model.
class SyntheticDataset {
 public:
  SyntheticDataset() = default;
  size_t size() const { return for_rewriter_.size() + for_simplifier_.size(); }
  const std::vector<OrientedPair>& for_rewriter() const { return for_rewriter_; }
  const std::vector<OrientedPair>& for_simplifier() const { return for_simplifier_; }

  friend SyntheticDataset fuse(const std::vector<PseudoExample>& p_s,
                               const std::vector<PseudoExample>& p_r);

 private:
  std::vector<OrientedPair> for_rewriter_;
  std::vector<OrientedPair> for_simplifier_;
};

// p_s must all be kSimplify (they train the Rewriter), p_r all kRewrite
// (they train the Simplifier). Direction mismatch raises ContractViolation
// naming the offending example.
SyntheticDataset fuse(const std::vector<PseudoExample>& p_s, const std::vector<PseudoExample>& p_r);

}  // namespace cqr

#endif
