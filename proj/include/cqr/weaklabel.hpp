#ifndef CQR_WEAKLABEL_HPP
#define CQR_WEAKLABEL_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cqr/core.hpp"

namespace cqr::weaklabel {

enum class EntityTag { kPersonF, kPersonM, kPlural, kOther };

// Lowercased entity stem -> tag, used to pick pronouns ("her" vs "its").
// Entities absent from the lexicon default to it/its.
using PronounLexicon = std::map<std::string, EntityTag>;

// Deterministic query simplification rules:
//   R1 pronoun substitution - a content n-gram (or single content token,
//      matched exactly or by crude stemming) repeated from the history is
//      replaced by a pronoun; possessive heads keep their noun ("X's voice"
//      -> "her voice"). A leading article is dropped with the noun.
//   R2 ellipsis - a query sharing a >= 3 token prefix and a suffix with a
//      history query collapses its distinct middle to "what about the X ?".
// R1 is tried first. Emits one (history, simplified, original) example per
// turn after the first where a rule fires.
std::vector<LabeledExample> rule_simplify(const Session& session,
                                          const PronounLexicon& lexicon = {});

// A single rule application, exposed for tests: returns the simplified query
// or nothing when neither rule fires.
std::optional<std::string> apply_rules(const std::vector<std::string>& history,
                                       const std::string& query, const PronounLexicon& lexicon);

// Regular question grammar over entities and attributes whose reduction is
// exactly invertible given the session history. Stands in for the real
// unlabeled pools at desk scale.
class SyntheticWorld {
 public:
  SyntheticWorld();  // default world: 24 entities x 8 attributes
  SyntheticWorld(std::vector<std::string> entities, std::vector<std::string> attributes);

  std::string full_form(int entity, int attribute) const;
  std::string pronoun_form(int attribute) const;
  std::string ellipsis_form(int attribute) const;

  int entity_count() const { return static_cast<int>(entities_.size()); }
  int attribute_count() const { return static_cast<int>(attributes_.size()); }
  // Distinct sessions available for a given turn count: entities times
  // ordered attribute arrangements.
  long session_capacity(int turns_per_session) const;

 private:
  std::vector<std::string> entities_;
  std::vector<std::string> attributes_;
};

struct SynthData {
  std::vector<Session> labeled;          // D: reduced queries with gold rewrites
  std::vector<Session> pool_simplifier;  // U_S: fully specified, unlabeled
  std::vector<Session> pool_rewriter;    // U_R: contextual, unlabeled
  std::vector<Session> test;             // held-out labeled sessions
};

// Deterministic under seed. Each pool gets n_sessions sessions; the labeled
// and test splits are fixed at 16 and 50 sessions. All four parts are
// pairwise disjoint by session id and by (entity, attribute-order) content.
SynthData synth_generate(int n_sessions, int turns_per_session, uint64_t seed);

// Exact inverse of the synthetic reduction. Full-form input comes back
// unchanged; anything unresolvable raises DataError.
std::string oracle_rewrite(const std::vector<std::string>& history, const std::string& reduced);

// Random grammar triples for round-trip checks.
struct Triple {
  std::vector<std::string> history;
  std::string reduced;
  std::string full;
};
std::vector<Triple> generate_triples(int count, uint64_t seed);

}  // namespace cqr::weaklabel

#endif
