#ifndef CQR_DATAIO_HPP
#define CQR_DATAIO_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "cqr/core.hpp"

namespace cqr::dataio {

// Canonical session format: JSONL, one session per line,
//   {"session_id": str, "turns": [{"query": str, "rewrite": str|null,
//    "answer": str|null}]}
// Text is normalized on load. Malformed lines and duplicate ids are errors
// naming the line.
std::vector<Session> load_sessions(const std::filesystem::path& path);
void save_sessions(const std::vector<Session>& sessions, const std::filesystem::path& path);

std::string session_to_json_line(const Session& s);

// One example per turn carrying a rewrite; history is every prior query of
// the session.
std::vector<LabeledExample> to_labeled(const std::vector<Session>& sessions);

// Session-level k-fold assignment, deterministic under seed. Fold sizes
// differ by at most one; test folds partition the session set.
struct Fold {
  std::vector<Session> train;
  std::vector<Session> test;
};
std::vector<Fold> kfold_split(const std::vector<Session>& sessions, int k, uint64_t seed);

enum class SourceFormat { kCanard, kTrecCast, kQuac, kMarcoSessions };

SourceFormat parse_format(const std::string& name);  // throws ConfigError

// Converts an external dataset release to canonical sessions. Field
// mappings are documented in the README; unknown fields are ignored,
// missing required fields raise DataError naming the record.
std::vector<Session> adapt(SourceFormat format, const std::filesystem::path& path);

}  // namespace cqr::dataio

#endif
