#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "cqr/dataio.hpp"
#include "cqr/errors.hpp"
#include "cqr/weaklabel.hpp"

using namespace cqr;
namespace fs = std::filesystem;

namespace {

const fs::path kData = CQR_TEST_DATA_DIR;

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "cqr_dataio_test";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

}  // namespace

TEST_CASE("load_sessions parses the canonical format") {
  const auto p = temp_file("ok.jsonl");
  write_file(p,
             R"({"session_id": "s1", "turns": [{"query": "what  is   x ?", "rewrite": null, "answer": null}, {"query": "and y ?", "rewrite": "and why y ?", "answer": "because"}]})"
             "\n");
  const auto sessions = dataio::load_sessions(p);
  REQUIRE(sessions.size() == 1);
  CHECK(sessions[0].id == "s1");
  REQUIRE(sessions[0].turns.size() == 2);
  CHECK(sessions[0].turns[0].query == "what is x ?");  // normalized
  CHECK_FALSE(sessions[0].turns[0].rewrite.has_value());
  CHECK(sessions[0].turns[1].rewrite.value() == "and why y ?");
  CHECK(sessions[0].turns[1].answer.value() == "because");
}

TEST_CASE("empty file loads as an empty list") {
  const auto p = temp_file("empty.jsonl");
  write_file(p, "");
  CHECK(dataio::load_sessions(p).empty());
}

TEST_CASE("malformed line errors carry the line number") {
  const auto p = temp_file("bad.jsonl");
  write_file(p, R"({"session_id": "a", "turns": [{"query": "q"}]})"
               "\nnot json\n");
  try {
    dataio::load_sessions(p);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
}

TEST_CASE("duplicate session ids are rejected") {
  const auto p = temp_file("dup.jsonl");
  const std::string line = R"({"session_id": "same", "turns": [{"query": "q ?"}]})";
  write_file(p, line + "\n" + line + "\n");
  CHECK_THROWS_AS(dataio::load_sessions(p), DataError);
}

TEST_CASE("save then load round trips") {
  const auto data = weaklabel::synth_generate(8, 3, 5);
  const auto p = temp_file("roundtrip.jsonl");
  dataio::save_sessions(data.labeled, p);
  const auto loaded = dataio::load_sessions(p);
  REQUIRE(loaded.size() == data.labeled.size());
  for (size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].id == data.labeled[i].id);
    REQUIRE(loaded[i].turns.size() == data.labeled[i].turns.size());
    for (size_t t = 0; t < loaded[i].turns.size(); ++t) {
      CHECK(loaded[i].turns[t].query == data.labeled[i].turns[t].query);
      CHECK(loaded[i].turns[t].rewrite == data.labeled[i].turns[t].rewrite);
    }
  }
  // byte-identical re-save
  const auto p2 = temp_file("roundtrip2.jsonl");
  dataio::save_sessions(loaded, p2);
  std::ifstream a(p, std::ios::binary), b(p2, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
}

TEST_CASE("to_labeled collects rewriting turns with prior-query history") {
  Session s{"t1",
            {{"q1 ?", {}, {}},
             {"q2 ?", std::optional<std::string>{"q2 full ?"}, {}},
             {"q3 ?", std::optional<std::string>{"q3 full ?"}, {}}}};
  const auto ex = dataio::to_labeled({s});
  REQUIRE(ex.size() == 2);
  CHECK(ex[0].history == std::vector<std::string>{"q1 ?"});
  CHECK(ex[0].source == "q2 ?");
  CHECK(ex[0].target == "q2 full ?");
  CHECK(ex[1].history == std::vector<std::string>{"q1 ?", "q2 ?"});
  // a rewrite on the first turn gets an empty history
  Session first{"t2", {{"q1 ?", std::optional<std::string>{"full ?"}, {}}}};
  const auto ex2 = dataio::to_labeled({first});
  REQUIRE(ex2.size() == 1);
  CHECK(ex2[0].history.empty());
  CHECK(dataio::to_labeled({Session{"t3", {{"q", {}, {}}}}}).empty());
}

TEST_CASE("kfold splits sessions into balanced disjoint folds") {
  std::vector<Session> sessions;
  for (int i = 0; i < 50; ++i) {
    sessions.push_back(Session{"s" + std::to_string(i), {{"q ?", {}, {}}}});
  }
  const auto folds = dataio::kfold_split(sessions, 5, 17);
  REQUIRE(folds.size() == 5);
  std::set<std::string> all_test;
  for (const auto& f : folds) {
    CHECK(f.test.size() == 10);
    CHECK(f.train.size() == 40);
    std::set<std::string> train_ids;
    for (const auto& s : f.train) train_ids.insert(s.id);
    for (const auto& s : f.test) {
      CHECK_FALSE(train_ids.count(s.id));
      all_test.insert(s.id);
    }
  }
  CHECK(all_test.size() == 50);

  // determinism + difference across seeds
  const auto again = dataio::kfold_split(sessions, 5, 17);
  CHECK(again[0].test[0].id == folds[0].test[0].id);
  CHECK(dataio::kfold_split(sessions, 5, 18)[0].test[0].id != folds[0].test[0].id);

  // minimal case: k = 2 with 2 sessions
  const auto two = dataio::kfold_split({sessions[0], sessions[1]}, 2, 1);
  CHECK(two[0].test.size() == 1);
  CHECK(two[1].test.size() == 1);
  CHECK(two[0].test[0].id != two[1].test[0].id);

  CHECK_THROWS_AS(dataio::kfold_split({sessions[0]}, 2, 1), ConfigError);
}

TEST_CASE("uneven kfold sizes differ by at most one") {
  std::vector<Session> sessions;
  for (int i = 0; i < 23; ++i) {
    sessions.push_back(Session{"s" + std::to_string(i), {{"q ?", {}, {}}}});
  }
  const auto folds = dataio::kfold_split(sessions, 5, 3);
  size_t mn = 1000, mx = 0;
  for (const auto& f : folds) {
    mn = std::min(mn, f.test.size());
    mx = std::max(mx, f.test.size());
  }
  CHECK(mx - mn <= 1);
}

TEST_CASE("canard adapter groups records into sessions") {
  const auto sessions = dataio::adapt(dataio::SourceFormat::kCanard, kData / "canard_sample.json");
  REQUIRE(sessions.size() == 2);
  CHECK(sessions[0].id == "dlg1");
  REQUIRE(sessions[0].turns.size() == 2);
  CHECK(sessions[0].turns[1].query == "What are some other facts about her voice ?");
  CHECK(sessions[0].turns[1].rewrite.value() == "What are some other facts about Beyonce's voice ?");
  CHECK(sessions[1].turns[0].rewrite.has_value());
}

TEST_CASE("trec cast adapter keeps manual rewrites when present") {
  const auto sessions =
      dataio::adapt(dataio::SourceFormat::kTrecCast, kData / "trec_cast_sample.json");
  REQUIRE(sessions.size() == 2);
  CHECK(sessions[0].id == "cast-31");
  CHECK(sessions[0].turns[1].rewrite.value() == "Is throat cancer treatable ?");
  CHECK_FALSE(sessions[1].turns[0].rewrite.has_value());
}

TEST_CASE("quac and marco adapters emit unlabeled pools") {
  const auto quac = dataio::adapt(dataio::SourceFormat::kQuac, kData / "quac_sample.json");
  REQUIRE(quac.size() == 2);
  CHECK(quac[0].id == "quac-p1");
  CHECK(quac[0].turns.size() == 2);
  for (const auto& s : quac) {
    for (const auto& t : s.turns) CHECK_FALSE(t.rewrite.has_value());
  }

  const auto marco =
      dataio::adapt(dataio::SourceFormat::kMarcoSessions, kData / "marco_sample.txt");
  REQUIRE(marco.size() == 2);
  CHECK(marco[0].turns.size() == 2);
  CHECK(marco[0].turns[0].query == "what is the australian flag ?");
  CHECK(marco[1].turns.size() == 3);
  for (const auto& s : marco) {
    for (const auto& t : s.turns) CHECK_FALSE(t.rewrite.has_value());
  }
}

TEST_CASE("adapter output reloads through the canonical format") {
  for (auto [fmt, file] : std::initializer_list<std::pair<dataio::SourceFormat, const char*>>{
           {dataio::SourceFormat::kCanard, "canard_sample.json"},
           {dataio::SourceFormat::kTrecCast, "trec_cast_sample.json"},
           {dataio::SourceFormat::kQuac, "quac_sample.json"},
           {dataio::SourceFormat::kMarcoSessions, "marco_sample.txt"}}) {
    const auto sessions = dataio::adapt(fmt, kData / file);
    const auto p = temp_file("adapted.jsonl");
    dataio::save_sessions(sessions, p);
    const auto reloaded = dataio::load_sessions(p);
    CHECK(reloaded.size() == sessions.size());
  }
}

TEST_CASE("adapters fail loudly on missing required fields") {
  const auto p = temp_file("bad_canard.json");
  write_file(p, R"([{"QuAC_dialog_id": "d", "Question_no": 1, "Question": "q ?"}])");
  try {
    dataio::adapt(dataio::SourceFormat::kCanard, p);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("Rewrite") != std::string::npos);
    CHECK(std::string(e.what()).find("record 1") != std::string::npos);
  }
}

TEST_CASE("format names parse case-insensitively") {
  CHECK(dataio::parse_format("CANARD") == dataio::SourceFormat::kCanard);
  CHECK(dataio::parse_format("trec_cast") == dataio::SourceFormat::kTrecCast);
  CHECK(dataio::parse_format("quac") == dataio::SourceFormat::kQuac);
  CHECK(dataio::parse_format("marco_sessions") == dataio::SourceFormat::kMarcoSessions);
  CHECK_THROWS_AS(dataio::parse_format("whatever"), ConfigError);
}
