#ifndef CQR_COTRAIN_HPP
#define CQR_COTRAIN_HPP

#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cqr/core.hpp"
#include "cqr/genmodel.hpp"
#include "cqr/metrics.hpp"

namespace cqr::cotrain {

enum class Mode { kFewShot, kZeroShot };

struct CoTrainConfig {
  double s_s = -std::numeric_limits<double>::infinity();  // Simplifier selector threshold
  double s_r = -std::numeric_limits<double>::infinity();  // Rewriter selector threshold
  double lambda = 0.5;   // pseudo-data generation-loss weight
  double w = 0.03;       // contrastive loss weight
  double tau = 0.1;      // contrastive temperature
  int max_iterations = 3;
  int warmup_epochs = 20;
  int iter_epochs = 2;
  int batch_size = 4;
  double learning_rate = 5e-5;
  uint64_t seed = 1;
  Mode mode = Mode::kFewShot;
  ModelConfig model;

  void validate() const;  // throws ConfigError naming the offending field
};

struct LossSummary {
  double gen_gold = 0.0;
  double gen_pseudo = 0.0;
  double icl = 0.0;
  double ecl = 0.0;
  double total = 0.0;
  int steps = 0;
};

struct IterationReport {
  int iteration = 0;  // 0 is the warm-up snapshot
  size_t kept_simplify = 0, rejected_simplify = 0;
  size_t kept_rewrite = 0, rejected_rewrite = 0;
  size_t pool_simplifier = 0, pool_rewriter = 0;  // after selection
  std::optional<double> mean_conf_kept_simplify, mean_conf_rejected_simplify;
  std::optional<double> mean_conf_kept_rewrite, mean_conf_rejected_rewrite;
  LossSummary simplifier_losses, rewriter_losses;
  std::optional<metrics::MetricReport> dev_rewriter, dev_simplifier;
  uint64_t simplifier_init_checksum = 0, rewriter_init_checksum = 0;
  uint64_t simplifier_trained_checksum = 0, rewriter_trained_checksum = 0;
  // Both kept sets empty: the iteration has nothing new to train on, so the
  // models pass through unchanged.
  bool degenerate = false;

  std::string to_json() const;
};

// Read-only hooks for instrumentation and tests. Must not mutate anything.
class RunObserver {
 public:
  virtual ~RunObserver() = default;
  virtual void on_selection(Direction /*direction*/, const Selection& /*sel*/,
                            double /*threshold*/) {}
  virtual void on_train_batch(bool /*is_rewriter*/, const TrainBatch& /*gold*/,
                              const TrainBatch* /*pseudo*/) {}
  virtual void after_warmup(GeneratorModel& /*simplifier*/, GeneratorModel& /*rewriter*/,
                            const IterationReport& /*report*/) {}
  virtual void after_iteration(int /*k*/, GeneratorModel& /*simplifier*/,
                               GeneratorModel& /*rewriter*/, const IterationReport& /*report*/) {}
};

struct RunOptions {
  std::optional<std::filesystem::path> run_dir;
  RunObserver* observer = nullptr;
};

struct RunResult {
  std::unique_ptr<GeneratorModel> simplifier;
  std::unique_ptr<GeneratorModel> rewriter;
  std::vector<IterationReport> reports;  // warm-up first
};

// L_all composition: gold + lambda * pseudo + w * contrastive.
double total_loss(double lg_gold, double lg_pseudo, double lc, double lambda, double w);

// Deterministic model seeds: warm-up is iteration 0.
uint64_t iteration_model_seed(uint64_t config_seed, int iteration, bool rewriter);

// Held-out dev split: 10% of the labeled set (at least 1 example when the
// set has 2 or more), deterministic under seed.
std::pair<std::vector<LabeledExample>, std::vector<LabeledExample>> split_dev(
    const std::vector<LabeledExample>& labeled, uint64_t seed);

// Vocabulary over warm-up plus pool text.
Vocabulary build_model_vocabulary(const std::vector<LabeledExample>& labeled, const DataPool& us,
                                  const DataPool& ur);

// Supervised warm-up: the Rewriter trains on the examples as given, the
// Simplifier on their reversals; generation loss only.
std::pair<LossSummary, LossSummary> warm_up(GeneratorModel& simplifier, GeneratorModel& rewriter,
                                            const std::vector<LabeledExample>& labeled,
                                            const CoTrainConfig& cfg);

// One PseudoExample per unconsumed pool query; history is the session's
// preceding queries.
std::vector<PseudoExample> pseudo_label(GeneratorModel& model, const DataPool& pool,
                                        Direction direction, const CoTrainConfig& cfg);

struct IterationOutcome {
  IterationReport report;
  std::vector<PseudoExample> kept_simplify, kept_rewrite;
};

IterationOutcome co_train_iteration(GeneratorModel& simplifier, GeneratorModel& rewriter,
                                    DataPool& pool_s, DataPool& pool_r,
                                    const std::vector<LabeledExample>& gold,
                                    const std::vector<LabeledExample>& dev,
                                    const CoTrainConfig& cfg, int iter_idx,
                                    RunObserver* observer = nullptr);

// Full pipeline: warm-up, then iterations until the cap or both pools empty.
RunResult run(const CoTrainConfig& cfg, const std::vector<LabeledExample>& labeled, DataPool pool_s,
              DataPool pool_r, const RunOptions& options = {});

// Greedy-decode every example and score against its target.
metrics::MetricReport evaluate_model(GeneratorModel& model,
                                     const std::vector<LabeledExample>& examples, int max_len);

}  // namespace cqr::cotrain

#endif
