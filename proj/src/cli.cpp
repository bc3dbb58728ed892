#include "cqr/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "cqr/dataio.hpp"
#include "cqr/errors.hpp"
#include "cqr/text.hpp"
#include "cqr/weaklabel.hpp"

namespace cqr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> kKeys = {
      "cotrain.mode",           "cotrain.s_s",           "cotrain.s_r",
      "cotrain.lambda",         "cotrain.w",             "cotrain.tau",
      "cotrain.max_iterations", "cotrain.warmup_epochs", "cotrain.iter_epochs",
      "cotrain.batch_size",     "cotrain.learning_rate", "cotrain.seed",
      "model.hidden",           "model.layers",          "model.dropout",
      "model.history_budget",   "model.max_decode_len",  "data.labeled",
      "data.pool_simplifier",   "data.pool_rewriter",    "data.run_dir",
  };
  return kKeys;
}

std::string env_name(const std::string& key) {
  std::string name = "COTRAIN_";
  for (char c : key) {
    name += (c == '.') ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return name;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const double d = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing garbage");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config field '" + key + "' has invalid numeric value '" + value + "'");
  }
}

long parse_int(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const long v = std::stol(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing garbage");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config field '" + key + "' has invalid integer value '" + value + "'");
  }
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  size_t e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

}  // namespace

RunConfig run_config_from_map(const std::map<std::string, std::string>& file_kv) {
  std::map<std::string, std::string> kv = file_kv;
  for (const auto& key : known_keys()) {
    if (const char* env = std::getenv(env_name(key).c_str())) kv[key] = env;
  }
  for (const auto& [key, value] : kv) {
    (void)value;
    if (!known_keys().count(key)) throw ConfigError("unknown config key '" + key + "'");
  }

  RunConfig rc;
  const auto get = [&](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    return it->second;
  };
  if (auto v = get("cotrain.mode")) {
    const std::string m = ascii_lower(*v);
    if (m == "few_shot") {
      rc.cotrain.mode = cotrain::Mode::kFewShot;
    } else if (m == "zero_shot") {
      rc.cotrain.mode = cotrain::Mode::kZeroShot;
    } else {
      throw ConfigError("config field 'cotrain.mode' must be few_shot or zero_shot, got '" + *v +
                        "'");
    }
  }
  if (auto v = get("cotrain.s_s")) rc.cotrain.s_s = parse_double("cotrain.s_s", *v);
  if (auto v = get("cotrain.s_r")) rc.cotrain.s_r = parse_double("cotrain.s_r", *v);
  if (auto v = get("cotrain.lambda")) rc.cotrain.lambda = parse_double("cotrain.lambda", *v);
  if (auto v = get("cotrain.w")) rc.cotrain.w = parse_double("cotrain.w", *v);
  if (auto v = get("cotrain.tau")) rc.cotrain.tau = parse_double("cotrain.tau", *v);
  if (auto v = get("cotrain.max_iterations")) {
    rc.cotrain.max_iterations = static_cast<int>(parse_int("cotrain.max_iterations", *v));
  }
  if (auto v = get("cotrain.warmup_epochs")) {
    rc.cotrain.warmup_epochs = static_cast<int>(parse_int("cotrain.warmup_epochs", *v));
  }
  if (auto v = get("cotrain.iter_epochs")) {
    rc.cotrain.iter_epochs = static_cast<int>(parse_int("cotrain.iter_epochs", *v));
  }
  if (auto v = get("cotrain.batch_size")) {
    rc.cotrain.batch_size = static_cast<int>(parse_int("cotrain.batch_size", *v));
  }
  if (auto v = get("cotrain.learning_rate")) {
    rc.cotrain.learning_rate = parse_double("cotrain.learning_rate", *v);
  }
  if (auto v = get("cotrain.seed")) {
    rc.cotrain.seed = static_cast<uint64_t>(parse_int("cotrain.seed", *v));
  }
  if (auto v = get("model.hidden")) {
    rc.cotrain.model.hidden = static_cast<int>(parse_int("model.hidden", *v));
  }
  if (auto v = get("model.layers")) {
    rc.cotrain.model.layers = static_cast<int>(parse_int("model.layers", *v));
  }
  if (auto v = get("model.dropout")) rc.cotrain.model.dropout = parse_double("model.dropout", *v);
  if (auto v = get("model.history_budget")) {
    rc.cotrain.model.history_budget = static_cast<int>(parse_int("model.history_budget", *v));
  }
  if (auto v = get("model.max_decode_len")) {
    rc.cotrain.model.max_decode_len = static_cast<int>(parse_int("model.max_decode_len", *v));
  }
  if (auto v = get("data.labeled")) rc.labeled = fs::path(*v);

  const auto require_path = [&](const char* key) {
    auto v = get(key);
    if (!v || v->empty()) throw ConfigError(std::string("config field '") + key + "' is required");
    return fs::path(*v);
  };
  rc.pool_simplifier = require_path("data.pool_simplifier");
  rc.pool_rewriter = require_path("data.pool_rewriter");
  rc.run_dir = require_path("data.run_dir");

  rc.cotrain.validate();
  if (rc.cotrain.mode == cotrain::Mode::kZeroShot && rc.labeled) {
    throw ConfigError(
        "config field 'data.labeled' conflicts with cotrain.mode = zero_shot (warm-up labels are "
        "rule-generated)");
  }
  if (rc.cotrain.mode == cotrain::Mode::kFewShot && !rc.labeled) {
    throw ConfigError("config field 'data.labeled' is required in few_shot mode");
  }
  return rc;
}

RunConfig parse_run_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.empty()) continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.filename().string() + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (kv.count(key)) {
      throw ConfigError(path.filename().string() + ":" + std::to_string(line_no) +
                        ": duplicate key '" + key + "'");
    }
    kv[key] = value;
  }
  return run_config_from_map(kv);
}

namespace {

std::string format_double(double d) {
  if (d == std::numeric_limits<double>::infinity()) return "inf";
  if (d == -std::numeric_limits<double>::infinity()) return "-inf";
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

}  // namespace

std::string RunConfig::to_snapshot() const {
  std::ostringstream os;
  os << "cotrain.mode = " << (cotrain.mode == cotrain::Mode::kFewShot ? "few_shot" : "zero_shot")
     << "\n";
  os << "cotrain.s_s = " << format_double(cotrain.s_s) << "\n";
  os << "cotrain.s_r = " << format_double(cotrain.s_r) << "\n";
  os << "cotrain.lambda = " << format_double(cotrain.lambda) << "\n";
  os << "cotrain.w = " << format_double(cotrain.w) << "\n";
  os << "cotrain.tau = " << format_double(cotrain.tau) << "\n";
  os << "cotrain.max_iterations = " << cotrain.max_iterations << "\n";
  os << "cotrain.warmup_epochs = " << cotrain.warmup_epochs << "\n";
  os << "cotrain.iter_epochs = " << cotrain.iter_epochs << "\n";
  os << "cotrain.batch_size = " << cotrain.batch_size << "\n";
  os << "cotrain.learning_rate = " << format_double(cotrain.learning_rate) << "\n";
  os << "cotrain.seed = " << cotrain.seed << "\n";
  os << "model.hidden = " << cotrain.model.hidden << "\n";
  os << "model.layers = " << cotrain.model.layers << "\n";
  os << "model.dropout = " << format_double(cotrain.model.dropout) << "\n";
  os << "model.history_budget = " << cotrain.model.history_budget << "\n";
  os << "model.max_decode_len = " << cotrain.model.max_decode_len << "\n";
  if (labeled) os << "data.labeled = " << labeled->string() << "\n";
  os << "data.pool_simplifier = " << pool_simplifier.string() << "\n";
  os << "data.pool_rewriter = " << pool_rewriter.string() << "\n";
  os << "data.run_dir = " << run_dir.string() << "\n";
  return os.str();
}

namespace {

int run_one(RunConfig rc) {
  const auto pool_s_sessions = dataio::load_sessions(rc.pool_simplifier);
  const auto pool_r_sessions = dataio::load_sessions(rc.pool_rewriter);
  std::vector<LabeledExample> labeled;
  if (rc.cotrain.mode == cotrain::Mode::kFewShot) {
    labeled = dataio::to_labeled(dataio::load_sessions(*rc.labeled));
  } else {
    for (const Session& s : pool_s_sessions) {
      for (auto& ex : weaklabel::rule_simplify(s)) labeled.push_back(std::move(ex));
    }
  }
  fs::create_directories(rc.run_dir);
  {
    std::ofstream snap(rc.run_dir / "config.snapshot", std::ios::binary);
    if (!snap) throw DataError("cannot write " + (rc.run_dir / "config.snapshot").string());
    snap << rc.to_snapshot();
  }
  cotrain::RunOptions opts;
  opts.run_dir = rc.run_dir;
  cotrain::run(rc.cotrain, labeled, DataPool(pool_s_sessions), DataPool(pool_r_sessions), opts);
  return kExitOk;
}

// "cotrain.s_s=50,70;cotrain.s_r=70,90" -> list of (key, values)
std::vector<std::pair<std::string, std::vector<std::string>>> parse_sweep(const std::string& spec) {
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ';')) {
    part = trim(part);
    if (part.empty()) continue;
    const size_t eq = part.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("sweep spec entry '" + part + "' must be key=v1,v2,...");
    }
    std::string key = trim(part.substr(0, eq));
    if (key.find('.') == std::string::npos) key = "cotrain." + key;
    if (!known_keys().count(key)) throw ConfigError("unknown sweep key '" + key + "'");
    std::vector<std::string> values;
    std::stringstream vs(part.substr(eq + 1));
    std::string v;
    while (std::getline(vs, v, ',')) {
      v = trim(v);
      if (!v.empty()) values.push_back(v);
    }
    if (values.empty()) throw ConfigError("sweep key '" + key + "' has no values");
    out.push_back({key, values});
  }
  if (out.empty()) throw ConfigError("empty sweep spec");
  return out;
}

std::string sanitize_for_path(std::string s) {
  for (char& c : s) {
    if (c == '.' || c == '/' || c == '\\' || c == ' ') c = '_';
  }
  return s;
}

int report_error(const std::exception& e, int code) {
  std::cerr << "error: " << e.what() << "\n";
  return code;
}

}  // namespace

int cmd_cotrain(const fs::path& config_path, const std::string& sweep_spec) {
  try {
    // Re-read the raw key/value map so sweep points can override it.
    RunConfig base = parse_run_config(config_path);
    if (sweep_spec.empty()) return run_one(std::move(base));

    const auto sweep = parse_sweep(sweep_spec);
    std::vector<std::map<std::string, std::string>> grid = {{}};
    for (const auto& [key, values] : sweep) {
      std::vector<std::map<std::string, std::string>> next;
      for (const auto& point : grid) {
        for (const auto& value : values) {
          auto p = point;
          p[key] = value;
          next.push_back(std::move(p));
        }
      }
      grid = std::move(next);
    }
    // Rebuild the file map once; each grid point patches it.
    std::ifstream in(config_path, std::ios::binary);
    std::map<std::string, std::string> file_kv;
    std::string line;
    while (std::getline(in, line)) {
      const std::string stripped = trim(line.substr(0, line.find('#')));
      if (stripped.empty()) continue;
      const size_t eq = stripped.find('=');
      if (eq == std::string::npos) continue;
      file_kv[trim(stripped.substr(0, eq))] = trim(stripped.substr(eq + 1));
    }
    for (const auto& point : grid) {
      auto kv = file_kv;
      std::string suffix = "sweep";
      for (const auto& [key, value] : point) {
        kv[key] = value;
        suffix += "_" + sanitize_for_path(key.substr(key.find('.') + 1)) + "-" +
                  sanitize_for_path(value);
      }
      RunConfig rc = run_config_from_map(kv);
      rc.run_dir = rc.run_dir / suffix;
      std::cout << "sweep point -> " << rc.run_dir.string() << "\n";
      const int code = run_one(std::move(rc));
      if (code != kExitOk) return code;
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    return report_error(e, kExitConfig);
  } catch (const std::exception& e) {
    return report_error(e, kExitRuntime);
  }
}

int cmd_generate(const fs::path& checkpoint, const fs::path& input, const fs::path& output,
                 int max_len) {
  try {
    auto model = SeqToSeqModel::load_checkpoint(checkpoint, 1e-3);
    const auto sessions = dataio::load_sessions(input);
    std::ofstream out(output, std::ios::binary);
    if (!out) throw DataError("cannot write " + output.string());
    const int cap = max_len > 0 ? max_len : model->config().max_decode_len;
    for (const Session& s : sessions) {
      std::vector<std::string> history;
      for (size_t t = 0; t < s.turns.size(); ++t) {
        const GenerationResult res = model->generate(history, s.turns[t].query, cap);
        json j;
        j["session_id"] = s.id;
        j["turn"] = t;
        j["generated"] = res.text;
        j["confidence"] = res.confidence;
        out << j.dump() << "\n";
        history.push_back(s.turns[t].query);
      }
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    return report_error(e, kExitConfig);
  } catch (const std::exception& e) {
    return report_error(e, kExitRuntime);
  }
}

int cmd_evaluate(const fs::path& pred_path, const fs::path& gold_path) {
  try {
    std::ifstream in(pred_path, std::ios::binary);
    if (!in) throw DataError("cannot open " + pred_path.string());
    std::map<std::pair<std::string, int>, std::string> preds;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw DataError(pred_path.filename().string() + ":" + std::to_string(line_no) +
                        ": malformed JSON (" + e.what() + ")");
      }
      preds[{j.at("session_id").get<std::string>(), j.at("turn").get<int>()}] =
          j.at("generated").get<std::string>();
    }
    const auto gold = dataio::load_sessions(gold_path);
    std::vector<std::pair<std::string, std::string>> pairs;
    std::vector<std::string> missing;
    for (const Session& s : gold) {
      for (size_t t = 0; t < s.turns.size(); ++t) {
        if (!s.turns[t].rewrite) continue;
        auto it = preds.find({s.id, static_cast<int>(t)});
        if (it == preds.end()) {
          missing.push_back(s.id + "#" + std::to_string(t));
        } else {
          pairs.emplace_back(it->second, *s.turns[t].rewrite);
        }
      }
    }
    if (!missing.empty()) {
      std::string msg = "predictions missing for " + std::to_string(missing.size()) + " gold keys:";
      for (size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
      throw ConfigError(msg);
    }
    if (pairs.empty()) throw ConfigError("no gold rewrites to evaluate against");
    std::cout << metrics::evaluate_corpus(pairs).to_json() << "\n";
    return kExitOk;
  } catch (const ConfigError& e) {
    return report_error(e, kExitConfig);
  } catch (const std::exception& e) {
    return report_error(e, kExitRuntime);
  }
}

int cmd_synth(int n_sessions, int turns, uint64_t seed, const fs::path& out_dir) {
  try {
    const auto data = weaklabel::synth_generate(n_sessions, turns, seed);
    fs::create_directories(out_dir);
    dataio::save_sessions(data.labeled, out_dir / "labeled.jsonl");
    dataio::save_sessions(data.pool_simplifier, out_dir / "pool_simplifier.jsonl");
    dataio::save_sessions(data.pool_rewriter, out_dir / "pool_rewriter.jsonl");
    dataio::save_sessions(data.test, out_dir / "test.jsonl");
    return kExitOk;
  } catch (const ConfigError& e) {
    return report_error(e, kExitConfig);
  } catch (const std::exception& e) {
    return report_error(e, kExitRuntime);
  }
}

int cmd_adapt(const std::string& format, const fs::path& input, const fs::path& output) {
  try {
    const auto sessions = dataio::adapt(dataio::parse_format(format), input);
    dataio::save_sessions(sessions, output);
    return kExitOk;
  } catch (const ConfigError& e) {
    return report_error(e, kExitConfig);
  } catch (const std::exception& e) {
    return report_error(e, kExitRuntime);
  }
}

}  // namespace cqr::cli
