#ifndef CQR_GENMODEL_HPP
#define CQR_GENMODEL_HPP

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cqr/autodiff.hpp"
#include "cqr/contrastive.hpp"
#include "cqr/linalg.hpp"
#include "cqr/rng.hpp"

namespace cqr {

// Word-level vocabulary with reserved symbols. Out-of-vocabulary tokens map
// to <unk>; insertion order is the id order, so builds are deterministic.
class Vocabulary {
 public:
  static constexpr int kUnk = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kSep = 3;

  Vocabulary();
  void add_text(const std::string& text);
  int id_of(const std::string& word) const;  // kUnk when absent
  const std::string& word_of(int id) const;
  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }
  std::vector<int> encode(const std::string& text) const;

  static Vocabulary from_words(const std::vector<std::string>& words);

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

struct ModelConfig {
  int hidden = 64;          // embedding and hidden width
  int layers = 2;           // encoder and decoder depth
  double dropout = 0.1;     // on embeddings and layer outputs
  int history_budget = 64;  // input token budget, truncated from the left
  int max_decode_len = 24;
};

struct GenerationResult {
  std::string text;
  double confidence = 0.0;  // sum of log-probs of the emitted decisions
  int token_count = 0;      // text tokens, end-of-sequence excluded
  bool ended_with_eos = false;
};

enum class BatchOrigin { kGold, kPseudo };

struct TrainExample {
  std::vector<std::string> history;
  std::string source;
  std::string target;
};

struct TrainBatch {
  std::vector<TrainExample> examples;
  double weight = 1.0;  // per-batch loss multiplier
  BatchOrigin origin = BatchOrigin::kGold;
};

// One Eq-style composite optimizer step: generation loss on a gold batch,
// optionally a weighted pseudo batch, optionally the in-batch contrastive
// terms over dropout-perturbed encodings.
struct CompositeStep {
  TrainBatch gold;
  std::optional<TrainBatch> pseudo;
  std::vector<TrainExample> contrastive;  // inputs + targets for the contrastive terms
  double lambda = 0.0;                    // pseudo generation-loss weight
  double contrastive_weight = 0.0;        // w
  double tau = 0.1;
};

struct StepLosses {
  double gold = 0.0;
  double pseudo = 0.0;
  double icl = 0.0;
  double ecl = 0.0;
  double total = 0.0;
  bool contrastive_applied = false;
};

// The contract both the Simplifier and the Rewriter satisfy. A pretrained-LM
// adapter would implement this same surface.
class GeneratorModel {
 public:
  virtual ~GeneratorModel() = default;

  // Greedy decode, terminated by end-of-sequence or max_len text tokens.
  virtual GenerationResult generate(const std::vector<std::string>& history,
                                    const std::string& source, int max_len) = 0;

  // Teacher-forced negative log-likelihood of the batch targets, averaged
  // over examples. Deterministic (dropout disabled); for measurement.
  virtual double generation_loss(const TrainBatch& batch) = 0;

  // Mean-pooled encoder embedding. stochastic=true applies a fresh dropout
  // mask; stochastic=false is a pure function of (parameters, input).
  virtual std::vector<double> encode(const std::vector<std::string>& history,
                                     const std::string& source, bool stochastic) = 0;

  // One optimizer step on the composite loss; returns the logged components.
  virtual StepLosses train_step(const CompositeStep& step) = 0;

  virtual void reinitialize(uint64_t seed) = 0;
  virtual uint64_t checksum() const = 0;
  virtual void save_checkpoint(const std::filesystem::path& path) const = 0;
  virtual const Vocabulary& vocabulary() const = 0;
  virtual const ModelConfig& config() const = 0;
};

// Reference backend: a small GRU encoder-decoder with dot-product attention
// over a word-level vocabulary, trained with Adam. Everything runs on the
// reverse-mode tape, so the same forward code serves decode and training.
class SeqToSeqModel final : public GeneratorModel {
 public:
  SeqToSeqModel(Vocabulary vocab, ModelConfig cfg, uint64_t seed, double learning_rate);

  GenerationResult generate(const std::vector<std::string>& history, const std::string& source,
                            int max_len) override;
  double generation_loss(const TrainBatch& batch) override;
  std::vector<double> encode(const std::vector<std::string>& history, const std::string& source,
                             bool stochastic) override;
  StepLosses train_step(const CompositeStep& step) override;
  void reinitialize(uint64_t seed) override;
  uint64_t checksum() const override;
  void save_checkpoint(const std::filesystem::path& path) const override;
  const Vocabulary& vocabulary() const override { return vocab_; }
  const ModelConfig& config() const override { return cfg_; }

  static std::unique_ptr<SeqToSeqModel> load_checkpoint(const std::filesystem::path& path,
                                                        double learning_rate);

  // Teacher-forced sum of log-probs of `tokens` (optionally plus the
  // end-of-sequence decision) given the input. Used for the decode/score
  // self-consistency contract and by tests.
  double score_tokens(const std::vector<std::string>& history, const std::string& source,
                      const std::vector<int>& tokens, bool include_eos);

  void set_learning_rate(double lr) { learning_rate_ = lr; }
  double learning_rate() const { return learning_rate_; }

  // Parameter access for gradient checks and checkpoint tests.
  std::vector<Mat*> parameters();
  std::vector<Mat*> gradients();
  const std::vector<std::string>& parameter_names() const { return param_names_; }
  // Builds the generation-loss graph, runs backward, leaves grads filled.
  double compute_generation_gradients(const TrainBatch& batch);

  std::vector<int> input_ids(const std::vector<std::string>& history,
                             const std::string& source) const;

 private:
  struct GruParams {
    Mat wx, wh, bx, bh;  // input/hidden weights and biases, 3*hidden gates
  };
  struct EncoderOut {
    ad::Tape::Id enc_mat;              // T x hidden top-layer outputs
    std::vector<ad::Tape::Id> finals;  // final hidden per layer
  };
  // Per-tape forward context; caches parameter leaf nodes so each parameter
  // enters a tape once per step, not once per token.
  struct Ctx {
    ad::Tape& tape;
    std::vector<ad::Tape::Id> param_nodes;
  };

  void allocate();
  void init_params(uint64_t seed);
  Ctx make_ctx(ad::Tape& tape);
  ad::Tape::Id param_node(Ctx& ctx, int index);
  ad::Tape::Id maybe_dropout(Ctx& ctx, ad::Tape::Id x, bool train_mode);
  ad::Tape::Id gru_step(Ctx& ctx, int layer_base, ad::Tape::Id x, ad::Tape::Id h);
  EncoderOut run_encoder(Ctx& ctx, const std::vector<int>& ids, bool train_mode);
  ad::Tape::Id decode_logits(Ctx& ctx, const EncoderOut& enc, std::vector<ad::Tape::Id>& hidden,
                             int prev_token, bool train_mode);
  ad::Tape::Id example_nll(Ctx& ctx, const TrainExample& ex, bool train_mode);
  ad::Tape::Id encode_node(Ctx& ctx, const std::vector<std::string>& history,
                           const std::string& source, bool train_mode);
  void adam_step();
  void zero_grads();

  Vocabulary vocab_;
  ModelConfig cfg_;
  double learning_rate_;
  uint64_t seed_ = 0;

  std::vector<Mat> params_;
  std::vector<Mat> grads_;
  std::vector<Mat> adam_m_, adam_v_;
  long adam_t_ = 0;
  std::vector<std::string> param_names_;

  // Parameter layout indices into params_.
  int enc_embed_ = 0, dec_embed_ = 0;
  std::vector<int> enc_gru_, dec_gru_;  // 4 entries per layer: wx, wh, bx, bh
  int attn_w_ = 0, attn_b_ = 0, out_w_ = 0, out_b_ = 0;

  Rng train_rng_;
};

// Vocabulary from texts in deterministic first-appearance order.
Vocabulary build_vocabulary(const std::vector<std::string>& texts);

}  // namespace cqr

#endif
