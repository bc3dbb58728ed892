#include "cqr/dataio.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "cqr/errors.hpp"
#include "cqr/rng.hpp"
#include "cqr/text.hpp"

namespace cqr::dataio {

using nlohmann::json;

namespace {

std::string norm_or_throw(const json& j, const char* field, const std::string& where) {
  if (!j.contains(field) || !j[field].is_string()) {
    throw DataError(where + ": missing required string field '" + field + "'");
  }
  return normalize_text(j[field].get<std::string>());
}

Session session_from_json(const json& j, const std::string& where) {
  Session s;
  if (!j.contains("session_id") || !j["session_id"].is_string()) {
    throw DataError(where + ": missing required string field 'session_id'");
  }
  s.id = j["session_id"].get<std::string>();
  if (!j.contains("turns") || !j["turns"].is_array()) {
    throw DataError(where + ": missing required array field 'turns'");
  }
  for (const json& jt : j["turns"]) {
    Turn t;
    t.query = norm_or_throw(jt, "query", where);
    if (jt.contains("rewrite") && !jt["rewrite"].is_null()) {
      t.rewrite = normalize_text(jt["rewrite"].get<std::string>());
    }
    if (jt.contains("answer") && !jt["answer"].is_null()) {
      t.answer = normalize_text(jt["answer"].get<std::string>());
    }
    s.turns.push_back(std::move(t));
  }
  validate_session(s);
  return s;
}

}  // namespace

std::vector<Session> load_sessions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Session> sessions;
  std::set<std::string> ids;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(where + ": malformed JSON (" + e.what() + ")");
    }
    Session s = session_from_json(j, where);
    if (!ids.insert(s.id).second) {
      throw DataError(where + ": duplicate session_id '" + s.id + "'");
    }
    sessions.push_back(std::move(s));
  }
  return sessions;
}

std::string session_to_json_line(const Session& s) {
  json turns = json::array();
  for (const Turn& t : s.turns) {
    json jt;
    jt["query"] = t.query;
    jt["rewrite"] = t.rewrite ? json(*t.rewrite) : json(nullptr);
    jt["answer"] = t.answer ? json(*t.answer) : json(nullptr);
    turns.push_back(std::move(jt));
  }
  json j;
  j["session_id"] = s.id;
  j["turns"] = std::move(turns);
  return j.dump();
}

void save_sessions(const std::vector<Session>& sessions, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const Session& s : sessions) out << session_to_json_line(s) << "\n";
}

std::vector<LabeledExample> to_labeled(const std::vector<Session>& sessions) {
  std::vector<LabeledExample> out;
  for (const Session& s : sessions) {
    std::vector<std::string> history;
    for (const Turn& t : s.turns) {
      if (t.rewrite) out.push_back(LabeledExample{history, t.query, *t.rewrite});
      history.push_back(t.query);
    }
  }
  return out;
}

std::vector<Fold> kfold_split(const std::vector<Session>& sessions, int k, uint64_t seed) {
  if (k < 2) throw ConfigError("kfold_split: k must be >= 2");
  if (static_cast<int>(sessions.size()) < k) {
    throw ConfigError("kfold_split: need at least k sessions (" + std::to_string(sessions.size()) +
                      " < " + std::to_string(k) + ")");
  }
  std::vector<int> order(sessions.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng rng(derive_seed(seed, 0xF01D));
  rng.shuffle(order);
  std::vector<Fold> folds(k);
  for (size_t pos = 0; pos < order.size(); ++pos) {
    const int fold = static_cast<int>(pos % k);
    for (int f = 0; f < k; ++f) {
      (f == fold ? folds[f].test : folds[f].train).push_back(sessions[order[pos]]);
    }
  }
  return folds;
}

SourceFormat parse_format(const std::string& name) {
  const std::string n = ascii_lower(name);
  if (n == "canard") return SourceFormat::kCanard;
  if (n == "trec_cast" || n == "trec-cast" || n == "cast") return SourceFormat::kTrecCast;
  if (n == "quac") return SourceFormat::kQuac;
  if (n == "marco_sessions" || n == "marco") return SourceFormat::kMarcoSessions;
  throw ConfigError("unknown dataset format '" + name +
                    "' (expected canard, trec_cast, quac, marco_sessions)");
}

namespace {

json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed JSON (" + e.what() + ")");
  }
}

// CANARD release: a JSON array of records with History, Question, Rewrite,
// QuAC_dialog_id and Question_no. Records are grouped by dialogue id and
// ordered by Question_no; the History field (title/section header plus
// alternating utterances) is not re-used, prior Questions form the history.
std::vector<Session> adapt_canard(const std::filesystem::path& path) {
  const json j = load_json_file(path);
  if (!j.is_array()) throw DataError(path.string() + ": expected a JSON array of records");
  std::map<std::string, std::map<int, Turn>> dialogs;
  std::vector<std::string> id_order;
  int rec_no = 0;
  for (const json& rec : j) {
    ++rec_no;
    const std::string where = path.filename().string() + " record " + std::to_string(rec_no);
    for (const char* field : {"QuAC_dialog_id", "Question", "Rewrite"}) {
      if (!rec.contains(field)) throw DataError(where + ": missing required field '" + field + "'");
    }
    if (!rec.contains("Question_no") || !rec["Question_no"].is_number()) {
      throw DataError(where + ": missing required numeric field 'Question_no'");
    }
    const std::string id = rec["QuAC_dialog_id"].get<std::string>();
    if (!dialogs.count(id)) id_order.push_back(id);
    Turn t;
    t.query = normalize_text(rec["Question"].get<std::string>());
    t.rewrite = normalize_text(rec["Rewrite"].get<std::string>());
    dialogs[id][rec["Question_no"].get<int>()] = std::move(t);
  }
  std::vector<Session> sessions;
  for (const std::string& id : id_order) {
    Session s;
    s.id = id;
    for (auto& [no, turn] : dialogs[id]) s.turns.push_back(std::move(turn));
    validate_session(s);
    sessions.push_back(std::move(s));
  }
  return sessions;
}

// TREC CAsT evaluation topics: {"number", "turn": [{"number",
// "raw_utterance", optional "manual_rewritten_utterance"}]}.
std::vector<Session> adapt_trec_cast(const std::filesystem::path& path) {
  const json j = load_json_file(path);
  if (!j.is_array()) throw DataError(path.string() + ": expected a JSON array of topics");
  std::vector<Session> sessions;
  for (const json& topic : j) {
    if (!topic.contains("number")) {
      throw DataError(path.filename().string() + ": topic missing required field 'number'");
    }
    Session s;
    s.id = "cast-" + std::to_string(topic["number"].get<long>());
    if (!topic.contains("turn") || !topic["turn"].is_array()) {
      throw DataError(s.id + ": missing required array field 'turn'");
    }
    for (const json& jt : topic["turn"]) {
      Turn t;
      t.query = norm_or_throw(jt, "raw_utterance", s.id);
      if (jt.contains("manual_rewritten_utterance") && !jt["manual_rewritten_utterance"].is_null()) {
        t.rewrite = normalize_text(jt["manual_rewritten_utterance"].get<std::string>());
      }
      s.turns.push_back(std::move(t));
    }
    validate_session(s);
    sessions.push_back(std::move(s));
  }
  return sessions;
}

// QuAC: {"data": [{"paragraphs": [{"id", "qas": [{"question", ...}]}]}]}.
// Queries only; rewrite stays null (unlabeled pool).
std::vector<Session> adapt_quac(const std::filesystem::path& path) {
  const json j = load_json_file(path);
  if (!j.contains("data") || !j["data"].is_array()) {
    throw DataError(path.string() + ": missing required array field 'data'");
  }
  std::vector<Session> sessions;
  for (const json& article : j["data"]) {
    if (!article.contains("paragraphs")) continue;
    for (const json& para : article["paragraphs"]) {
      Session s;
      if (!para.contains("id") || !para["id"].is_string()) {
        throw DataError(path.filename().string() + ": paragraph missing required field 'id'");
      }
      s.id = para["id"].get<std::string>();
      if (!para.contains("qas") || !para["qas"].is_array()) {
        throw DataError(s.id + ": missing required array field 'qas'");
      }
      for (const json& qa : para["qas"]) {
        Turn t;
        t.query = norm_or_throw(qa, "question", s.id);
        s.turns.push_back(std::move(t));
      }
      validate_session(s);
      sessions.push_back(std::move(s));
    }
  }
  return sessions;
}

// Search-session text files: one session per line, queries separated by
// "||". All rewrites stay null (unlabeled pool).
std::vector<Session> adapt_marco(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Session> sessions;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (whitespace_tokens(line).empty()) continue;
    Session s;
    s.id = "marco-" + std::to_string(line_no);
    size_t start = 0;
    while (start <= line.size()) {
      const size_t sep = line.find("||", start);
      const std::string piece =
          line.substr(start, sep == std::string::npos ? std::string::npos : sep - start);
      const std::string q = normalize_text(piece);
      if (!q.empty()) s.turns.push_back(Turn{q, {}, {}});
      if (sep == std::string::npos) break;
      start = sep + 2;
    }
    if (s.turns.empty()) {
      throw DataError(path.filename().string() + ":" + std::to_string(line_no) +
                      ": no queries on line");
    }
    validate_session(s);
    sessions.push_back(std::move(s));
  }
  return sessions;
}

}  // namespace

std::vector<Session> adapt(SourceFormat format, const std::filesystem::path& path) {
  switch (format) {
    case SourceFormat::kCanard:
      return adapt_canard(path);
    case SourceFormat::kTrecCast:
      return adapt_trec_cast(path);
    case SourceFormat::kQuac:
      return adapt_quac(path);
    case SourceFormat::kMarcoSessions:
      return adapt_marco(path);
  }
  throw ContractViolation("adapt: unhandled format");
}

}  // namespace cqr::dataio
