#include "cqr/genmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "cqr/errors.hpp"
#include "cqr/text.hpp"

namespace cqr {

using ad::Tape;

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  for (const char* w : {"<unk>", "<bos>", "<eos>", "<sep>"}) {
    index_[w] = static_cast<int>(words_.size());
    words_.push_back(w);
  }
}

void Vocabulary::add_text(const std::string& text) {
  for (const std::string& tok : whitespace_tokens(text)) {
    if (!index_.count(tok)) {
      index_[tok] = static_cast<int>(words_.size());
      words_.push_back(tok);
    }
  }
}

int Vocabulary::id_of(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::word_of(int id) const { return words_.at(id); }

std::vector<int> Vocabulary::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const std::string& tok : whitespace_tokens(text)) ids.push_back(id_of(tok));
  return ids;
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
  Vocabulary v;
  if (words.size() < 4 || words[0] != "<unk>" || words[1] != "<bos>" || words[2] != "<eos>" ||
      words[3] != "<sep>") {
    throw DataError("vocabulary list must start with the reserved symbols");
  }
  for (size_t i = 4; i < words.size(); ++i) {
    if (v.index_.count(words[i])) throw DataError("duplicate vocabulary word '" + words[i] + "'");
    v.index_[words[i]] = static_cast<int>(v.words_.size());
    v.words_.push_back(words[i]);
  }
  return v;
}

Vocabulary build_vocabulary(const std::vector<std::string>& texts) {
  Vocabulary v;
  for (const std::string& t : texts) v.add_text(t);
  return v;
}

// ---------------------------------------------------------------------------
// SeqToSeqModel

SeqToSeqModel::SeqToSeqModel(Vocabulary vocab, ModelConfig cfg, uint64_t seed, double learning_rate)
    : vocab_(std::move(vocab)), cfg_(cfg), learning_rate_(learning_rate), train_rng_(0) {
  if (vocab_.size() < 4) throw ContractViolation("model requires an initialized vocabulary");
  if (cfg_.hidden < 1 || cfg_.layers < 1) throw ConfigError("model dims must be positive");
  if (cfg_.dropout < 0.0 || cfg_.dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  allocate();
  reinitialize(seed);
}

void SeqToSeqModel::allocate() {
  const int h = cfg_.hidden;
  const int v = vocab_.size();
  const auto add = [&](const std::string& name, int r, int c) {
    param_names_.push_back(name);
    params_.emplace_back(r, c);
    grads_.emplace_back(r, c);
    adam_m_.emplace_back(r, c);
    adam_v_.emplace_back(r, c);
    return static_cast<int>(params_.size()) - 1;
  };
  enc_embed_ = add("enc_embed", v, h);
  dec_embed_ = add("dec_embed", v, h);
  for (int side = 0; side < 2; ++side) {
    std::vector<int>& dst = side == 0 ? enc_gru_ : dec_gru_;
    const std::string tag = side == 0 ? "enc" : "dec";
    for (int l = 0; l < cfg_.layers; ++l) {
      const std::string base = tag + std::to_string(l);
      dst.push_back(add(base + ".wx", h, 3 * h));
      dst.push_back(add(base + ".wh", h, 3 * h));
      dst.push_back(add(base + ".bx", 1, 3 * h));
      dst.push_back(add(base + ".bh", 1, 3 * h));
    }
  }
  attn_w_ = add("attn.w", 2 * h, h);
  attn_b_ = add("attn.b", 1, h);
  out_w_ = add("out.w", h, v);
  out_b_ = add("out.b", 1, v);
}

void SeqToSeqModel::init_params(uint64_t seed) {
  Rng rng(derive_seed(seed, 0x1417u));
  for (Mat& p : params_) {
    for (double& x : p.v) x = rng.uniform(-0.08, 0.08);
  }
}

void SeqToSeqModel::reinitialize(uint64_t seed) {
  seed_ = seed;
  init_params(seed);
  for (Mat& m : adam_m_) m.fill(0.0);
  for (Mat& m : adam_v_) m.fill(0.0);
  adam_t_ = 0;
  train_rng_ = Rng(derive_seed(seed, 0xD207u));
}

uint64_t SeqToSeqModel::checksum() const {
  uint64_t h = 1469598103934665603ull;  // FNV-1a over the raw parameter bytes
  for (const Mat& p : params_) {
    const unsigned char* bytes = reinterpret_cast<const unsigned char*>(p.v.data());
    for (size_t i = 0; i < p.v.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::vector<Mat*> SeqToSeqModel::parameters() {
  std::vector<Mat*> out;
  for (Mat& p : params_) out.push_back(&p);
  return out;
}

std::vector<Mat*> SeqToSeqModel::gradients() {
  std::vector<Mat*> out;
  for (Mat& g : grads_) out.push_back(&g);
  return out;
}

void SeqToSeqModel::zero_grads() {
  for (Mat& g : grads_) g.fill(0.0);
}

void SeqToSeqModel::adam_step() {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  ++adam_t_;
  const double bc1 = 1.0 - std::pow(kBeta1, adam_t_);
  const double bc2 = 1.0 - std::pow(kBeta2, adam_t_);
  for (size_t p = 0; p < params_.size(); ++p) {
    for (size_t i = 0; i < params_[p].v.size(); ++i) {
      const double g = grads_[p].v[i];
      adam_m_[p].v[i] = kBeta1 * adam_m_[p].v[i] + (1.0 - kBeta1) * g;
      adam_v_[p].v[i] = kBeta2 * adam_v_[p].v[i] + (1.0 - kBeta2) * g * g;
      const double mhat = adam_m_[p].v[i] / bc1;
      const double vhat = adam_v_[p].v[i] / bc2;
      params_[p].v[i] -= learning_rate_ * mhat / (std::sqrt(vhat) + kEps);
    }
  }
}

std::vector<int> SeqToSeqModel::input_ids(const std::vector<std::string>& history,
                                          const std::string& source) const {
  std::vector<int> ids;
  for (const std::string& h : history) {
    const auto hi = vocab_.encode(h);
    ids.insert(ids.end(), hi.begin(), hi.end());
    ids.push_back(Vocabulary::kSep);
  }
  const auto src = vocab_.encode(source);
  ids.insert(ids.end(), src.begin(), src.end());
  if (static_cast<int>(ids.size()) > cfg_.history_budget) {
    ids.erase(ids.begin(), ids.end() - cfg_.history_budget);
  }
  if (ids.empty()) throw ContractViolation("generator input reduced to zero tokens");
  return ids;
}

SeqToSeqModel::Ctx SeqToSeqModel::make_ctx(Tape& tape) {
  return Ctx{tape, std::vector<Tape::Id>(params_.size(), -1)};
}

Tape::Id SeqToSeqModel::param_node(Ctx& ctx, int index) {
  if (ctx.param_nodes[index] < 0) {
    ctx.param_nodes[index] = ctx.tape.param(&params_[index], &grads_[index]);
  }
  return ctx.param_nodes[index];
}

Tape::Id SeqToSeqModel::maybe_dropout(Ctx& ctx, Tape::Id x, bool train_mode) {
  if (!train_mode || cfg_.dropout == 0.0) return x;
  const Mat& val = ctx.tape.value(x);
  Mat mask(val.rows, val.cols);
  const double keep = 1.0 - cfg_.dropout;
  for (double& m : mask.v) m = train_rng_.bernoulli(keep) ? 1.0 / keep : 0.0;
  return ctx.tape.dropout(x, std::move(mask));
}

// One GRU cell step. Gate layout in the 3h-wide tables: [r | z | n].
// layer_base indexes the wx/wh/bx/bh quad for one layer.
Tape::Id SeqToSeqModel::gru_step(Ctx& ctx, int layer_base, Tape::Id x, Tape::Id h) {
  Tape& tape = ctx.tape;
  const int hd = cfg_.hidden;
  Tape::Id gx =
      tape.add_row(tape.matmul(x, param_node(ctx, layer_base)), param_node(ctx, layer_base + 2));
  Tape::Id gh = tape.add_row(tape.matmul(h, param_node(ctx, layer_base + 1)),
                             param_node(ctx, layer_base + 3));
  Tape::Id r = tape.sigmoid(tape.add(tape.slice_cols(gx, 0, hd), tape.slice_cols(gh, 0, hd)));
  Tape::Id z = tape.sigmoid(tape.add(tape.slice_cols(gx, hd, hd), tape.slice_cols(gh, hd, hd)));
  Tape::Id n = tape.tanh(
      tape.add(tape.slice_cols(gx, 2 * hd, hd), tape.mul(r, tape.slice_cols(gh, 2 * hd, hd))));
  // h' = n + z * (h - n)
  return tape.add(n, tape.mul(z, tape.sub(h, n)));
}

SeqToSeqModel::EncoderOut SeqToSeqModel::run_encoder(Ctx& ctx, const std::vector<int>& ids,
                                                     bool train_mode) {
  Tape& tape = ctx.tape;
  const int hd = cfg_.hidden;
  Tape::Id embed_table = param_node(ctx, enc_embed_);
  std::vector<Tape::Id> hidden(cfg_.layers, tape.constant(Mat(1, hd)));
  std::vector<Tape::Id> top_outputs;
  for (int id : ids) {
    Tape::Id x = maybe_dropout(ctx, tape.lookup_row(embed_table, id), train_mode);
    for (int l = 0; l < cfg_.layers; ++l) {
      hidden[l] = gru_step(ctx, enc_gru_[4 * l], x, hidden[l]);
      x = maybe_dropout(ctx, hidden[l], train_mode);
    }
    top_outputs.push_back(x);
  }
  EncoderOut out;
  out.enc_mat = tape.stack_rows(top_outputs);
  out.finals = hidden;
  return out;
}

Tape::Id SeqToSeqModel::decode_logits(Ctx& ctx, const EncoderOut& enc,
                                      std::vector<Tape::Id>& hidden, int prev_token,
                                      bool train_mode) {
  Tape& tape = ctx.tape;
  Tape::Id x =
      maybe_dropout(ctx, tape.lookup_row(param_node(ctx, dec_embed_), prev_token), train_mode);
  for (int l = 0; l < cfg_.layers; ++l) {
    hidden[l] = gru_step(ctx, dec_gru_[4 * l], x, hidden[l]);
    x = maybe_dropout(ctx, hidden[l], train_mode);
  }
  // Dot-product attention over the encoder outputs.
  Tape::Id scores = tape.matmul_t(x, enc.enc_mat);  // 1 x T
  Tape::Id alpha = tape.softmax_row(scores);
  Tape::Id context = tape.matmul(alpha, enc.enc_mat);  // 1 x h
  Tape::Id attn_in = tape.concat_cols(x, context);
  Tape::Id attn_h = tape.tanh(
      tape.add_row(tape.matmul(attn_in, param_node(ctx, attn_w_)), param_node(ctx, attn_b_)));
  attn_h = maybe_dropout(ctx, attn_h, train_mode);
  return tape.add_row(tape.matmul(attn_h, param_node(ctx, out_w_)), param_node(ctx, out_b_));
}

Tape::Id SeqToSeqModel::example_nll(Ctx& ctx, const TrainExample& ex, bool train_mode) {
  const std::vector<int> ids = input_ids(ex.history, ex.source);
  EncoderOut enc = run_encoder(ctx, ids, train_mode);
  std::vector<Tape::Id> hidden = enc.finals;
  std::vector<int> targets = vocab_.encode(ex.target);
  targets.push_back(Vocabulary::kEos);
  std::vector<std::pair<Tape::Id, double>> terms;
  int prev = Vocabulary::kBos;
  for (int target : targets) {
    Tape::Id logits = decode_logits(ctx, enc, hidden, prev, train_mode);
    terms.push_back({ctx.tape.nll_logits(logits, target), 1.0});
    prev = target;
  }
  return ctx.tape.weighted_sum(terms);
}

double SeqToSeqModel::generation_loss(const TrainBatch& batch) {
  if (batch.examples.empty()) throw ContractViolation("generation_loss: empty batch");
  Tape tape(true);
  Ctx ctx = make_ctx(tape);
  double total = 0.0;
  for (const TrainExample& ex : batch.examples) {
    total += tape.scalar(example_nll(ctx, ex, false));
  }
  return total / static_cast<double>(batch.examples.size());
}

double SeqToSeqModel::compute_generation_gradients(const TrainBatch& batch) {
  if (batch.examples.empty()) throw ContractViolation("empty batch");
  zero_grads();
  Tape tape;
  Ctx ctx = make_ctx(tape);
  std::vector<std::pair<Tape::Id, double>> terms;
  const double inv = 1.0 / static_cast<double>(batch.examples.size());
  for (const TrainExample& ex : batch.examples) {
    terms.push_back({example_nll(ctx, ex, false), inv});
  }
  Tape::Id loss = tape.weighted_sum(terms);
  tape.backward(loss);
  return tape.scalar(loss);
}

GenerationResult SeqToSeqModel::generate(const std::vector<std::string>& history,
                                         const std::string& source, int max_len) {
  if (max_len < 1) throw ContractViolation("generate: max_len must be >= 1");
  if (whitespace_tokens(source).empty()) throw ContractViolation("generate: empty source");
  Tape tape(true);
  Ctx ctx = make_ctx(tape);
  EncoderOut enc = run_encoder(ctx, input_ids(history, source), false);
  std::vector<Tape::Id> hidden = enc.finals;
  GenerationResult res;
  std::vector<std::string> words;
  int prev = Vocabulary::kBos;
  while (res.token_count < max_len) {
    Tape::Id probs_node = tape.softmax_row(decode_logits(ctx, enc, hidden, prev, false));
    const Mat& probs = tape.value(probs_node);
    int best = 0;
    for (int i = 1; i < probs.cols; ++i) {
      if (probs.at(0, i) > probs.at(0, best)) best = i;
    }
    res.confidence += std::log(probs.at(0, best));
    if (best == Vocabulary::kEos) {
      res.ended_with_eos = true;
      break;
    }
    words.push_back(vocab_.word_of(best));
    ++res.token_count;
    prev = best;
  }
  res.text = join_tokens(words);
  return res;
}

double SeqToSeqModel::score_tokens(const std::vector<std::string>& history,
                                   const std::string& source, const std::vector<int>& tokens,
                                   bool include_eos) {
  Tape tape(true);
  Ctx ctx = make_ctx(tape);
  EncoderOut enc = run_encoder(ctx, input_ids(history, source), false);
  std::vector<Tape::Id> hidden = enc.finals;
  std::vector<int> seq = tokens;
  if (include_eos) seq.push_back(Vocabulary::kEos);
  double score = 0.0;
  int prev = Vocabulary::kBos;
  for (int tok : seq) {
    Tape::Id probs = tape.softmax_row(decode_logits(ctx, enc, hidden, prev, false));
    score += std::log(tape.value(probs).at(0, tok));
    prev = tok;
  }
  return score;
}

std::vector<double> SeqToSeqModel::encode(const std::vector<std::string>& history,
                                          const std::string& source, bool stochastic) {
  Tape tape(true);
  Ctx ctx = make_ctx(tape);
  EncoderOut enc = run_encoder(ctx, input_ids(history, source), stochastic);
  Tape::Id pooled = tape.mean_rows(enc.enc_mat);
  return tape.value(pooled).v;
}

Tape::Id SeqToSeqModel::encode_node(Ctx& ctx, const std::vector<std::string>& history,
                                    const std::string& source, bool train_mode) {
  EncoderOut enc = run_encoder(ctx, input_ids(history, source), train_mode);
  return ctx.tape.mean_rows(enc.enc_mat);
}

StepLosses SeqToSeqModel::train_step(const CompositeStep& step) {
  if (step.gold.examples.empty() && !(step.pseudo && !step.pseudo->examples.empty())) {
    throw ContractViolation("train_step: no examples");
  }
  zero_grads();
  Tape tape;
  Ctx ctx = make_ctx(tape);
  StepLosses out;
  std::vector<std::pair<Tape::Id, double>> total_terms;

  if (!step.gold.examples.empty()) {
    std::vector<std::pair<Tape::Id, double>> terms;
    const double inv = 1.0 / static_cast<double>(step.gold.examples.size());
    for (const TrainExample& ex : step.gold.examples) {
      terms.push_back({example_nll(ctx, ex, true), inv});
    }
    Tape::Id gold = tape.weighted_sum(terms);
    out.gold = tape.scalar(gold);
    total_terms.push_back({gold, step.gold.weight});
  }
  if (step.pseudo && !step.pseudo->examples.empty()) {
    std::vector<std::pair<Tape::Id, double>> terms;
    const double inv = 1.0 / static_cast<double>(step.pseudo->examples.size());
    for (const TrainExample& ex : step.pseudo->examples) {
      terms.push_back({example_nll(ctx, ex, true), inv});
    }
    Tape::Id pseudo = tape.weighted_sum(terms);
    out.pseudo = tape.scalar(pseudo);
    total_terms.push_back({pseudo, step.lambda});
  }
  // Contrastive terms need at least two positive pairs to have negatives.
  if (step.contrastive_weight > 0.0 && step.contrastive.size() >= 2) {
    std::vector<Tape::Id> icl_rows, ecl_rows;
    for (const TrainExample& ex : step.contrastive) {
      Tape::Id q1 = encode_node(ctx, ex.history, ex.source, true);
      Tape::Id q2 = encode_node(ctx, ex.history, ex.source, true);
      Tape::Id t = encode_node(ctx, ex.history, ex.target, true);
      icl_rows.push_back(q1);
      icl_rows.push_back(q2);
      ecl_rows.push_back(tape.scale(tape.add(q1, q2), 0.5));
      ecl_rows.push_back(t);
    }
    Tape::Id icl = tape.nt_xent(tape.stack_rows(icl_rows), step.tau);
    Tape::Id ecl = tape.nt_xent(tape.stack_rows(ecl_rows), step.tau);
    out.icl = tape.scalar(icl);
    out.ecl = tape.scalar(ecl);
    out.contrastive_applied = true;
    total_terms.push_back({icl, step.contrastive_weight});
    total_terms.push_back({ecl, step.contrastive_weight});
  }

  Tape::Id total = tape.weighted_sum(total_terms);
  out.total = tape.scalar(total);
  if (!std::isfinite(out.total)) {
    throw DataError("train_step: non-finite loss on a batch of " +
                    std::to_string(step.gold.examples.size()) + " gold examples (origin " +
                    (step.gold.origin == BatchOrigin::kGold ? "gold" : "pseudo") + ")");
  }
  tape.backward(total);
  adam_step();
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr const char* kCheckpointFormat = "genmodel-ckpt/1";
}

void SeqToSeqModel::save_checkpoint(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["config"] = {{"hidden", cfg_.hidden},
                 {"layers", cfg_.layers},
                 {"dropout", cfg_.dropout},
                 {"history_budget", cfg_.history_budget},
                 {"max_decode_len", cfg_.max_decode_len},
                 {"seed", seed_}};
  j["vocab"] = vocab_.words();
  nlohmann::json tensors;
  for (size_t p = 0; p < params_.size(); ++p) {
    tensors[param_names_[p]] = {
        {"rows", params_[p].rows}, {"cols", params_[p].cols}, {"data", params_[p].v}};
  }
  j["tensors"] = std::move(tensors);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint to " + path.string());
  out << j.dump() << "\n";
}

std::unique_ptr<SeqToSeqModel> SeqToSeqModel::load_checkpoint(const std::filesystem::path& path,
                                                              double learning_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  if (!j.contains("format") || j["format"] != kCheckpointFormat) {
    throw ConfigError("checkpoint " + path.string() + " has unsupported format '" +
                      (j.contains("format") && j["format"].is_string()
                           ? j["format"].get<std::string>()
                           : std::string("<missing>")) +
                      "', expected " + kCheckpointFormat);
  }
  ModelConfig cfg;
  const auto& jc = j.at("config");
  cfg.hidden = jc.at("hidden").get<int>();
  cfg.layers = jc.at("layers").get<int>();
  cfg.dropout = jc.at("dropout").get<double>();
  cfg.history_budget = jc.at("history_budget").get<int>();
  cfg.max_decode_len = jc.at("max_decode_len").get<int>();
  Vocabulary vocab = Vocabulary::from_words(j.at("vocab").get<std::vector<std::string>>());
  auto model = std::make_unique<SeqToSeqModel>(std::move(vocab), cfg,
                                               jc.at("seed").get<uint64_t>(), learning_rate);
  const auto& tensors = j.at("tensors");
  for (size_t p = 0; p < model->params_.size(); ++p) {
    const auto& t = tensors.at(model->param_names_[p]);
    if (t.at("rows").get<int>() != model->params_[p].rows ||
        t.at("cols").get<int>() != model->params_[p].cols) {
      throw DataError("checkpoint tensor '" + model->param_names_[p] + "' has unexpected shape");
    }
    model->params_[p].v = t.at("data").get<std::vector<double>>();
  }
  return model;
}

}  // namespace cqr
