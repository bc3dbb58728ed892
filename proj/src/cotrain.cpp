#include "cqr/cotrain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "cqr/dataio.hpp"
#include "cqr/errors.hpp"
#include "cqr/rng.hpp"
#include "cqr/text.hpp"

namespace cqr::cotrain {

using nlohmann::json;

void CoTrainConfig::validate() const {
  const auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("config field '" + field + "' " + why);
  };
  if (std::isnan(s_s)) fail("cotrain.s_s", "must not be NaN");
  if (std::isnan(s_r)) fail("cotrain.s_r", "must not be NaN");
  if (lambda < 0.0 || !std::isfinite(lambda)) fail("cotrain.lambda", "must be >= 0");
  if (w < 0.0 || !std::isfinite(w)) fail("cotrain.w", "must be >= 0");
  if (tau <= 0.0 || !std::isfinite(tau)) fail("cotrain.tau", "must be > 0");
  if (max_iterations < 1) fail("cotrain.max_iterations", "must be >= 1");
  if (warmup_epochs < 1) fail("cotrain.warmup_epochs", "must be >= 1");
  if (iter_epochs < 1) fail("cotrain.iter_epochs", "must be >= 1");
  if (batch_size < 1) fail("cotrain.batch_size", "must be >= 1");
  if (learning_rate <= 0.0 || !std::isfinite(learning_rate)) {
    fail("cotrain.learning_rate", "must be > 0");
  }
  if (model.hidden < 1) fail("model.hidden", "must be >= 1");
  if (model.layers < 1) fail("model.layers", "must be >= 1");
  if (model.dropout < 0.0 || model.dropout >= 1.0) fail("model.dropout", "must be in [0, 1)");
  if (model.history_budget < 1) fail("model.history_budget", "must be >= 1");
  if (model.max_decode_len < 1) fail("model.max_decode_len", "must be >= 1");
}

double total_loss(double lg_gold, double lg_pseudo, double lc, double lambda, double w) {
  if (!std::isfinite(lg_gold) || !std::isfinite(lg_pseudo) || !std::isfinite(lc)) {
    throw ContractViolation("total_loss: non-finite component");
  }
  return lg_gold + lambda * lg_pseudo + w * lc;
}

uint64_t iteration_model_seed(uint64_t config_seed, int iteration, bool rewriter) {
  return derive_seed(config_seed, static_cast<uint64_t>(iteration) + 1, rewriter ? 2 : 1);
}

std::pair<std::vector<LabeledExample>, std::vector<LabeledExample>> split_dev(
    const std::vector<LabeledExample>& labeled, uint64_t seed) {
  std::vector<size_t> order(labeled.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0xDE5));
  rng.shuffle(order);
  const size_t dev_count = labeled.size() >= 2 ? std::max<size_t>(1, labeled.size() / 10) : 0;
  std::vector<LabeledExample> train, dev;
  for (size_t i = 0; i < order.size(); ++i) {
    (i < dev_count ? dev : train).push_back(labeled[order[i]]);
  }
  return {train, dev};
}

Vocabulary build_model_vocabulary(const std::vector<LabeledExample>& labeled, const DataPool& us,
                                  const DataPool& ur) {
  Vocabulary v;
  for (const LabeledExample& ex : labeled) {
    for (const std::string& h : ex.history) v.add_text(h);
    v.add_text(ex.source);
    v.add_text(ex.target);
  }
  for (const DataPool* pool : {&us, &ur}) {
    for (const Session& s : pool->sessions()) {
      for (const Turn& t : s.turns) v.add_text(t.query);
    }
  }
  return v;
}

namespace {

std::vector<TrainExample> to_train_examples(const std::vector<LabeledExample>& xs, bool reversed) {
  std::vector<TrainExample> out;
  out.reserve(xs.size());
  for (const LabeledExample& ex : xs) {
    const LabeledExample e = reversed ? reverse(ex) : ex;
    out.push_back(TrainExample{e.history, e.source, e.target});
  }
  return out;
}

// Pseudo pairs whose model-generated input came out empty cannot be encoded;
// they are dropped from training (still consumed from the pool).
std::vector<TrainExample> to_train_examples(const std::vector<OrientedPair>& xs) {
  std::vector<TrainExample> out;
  out.reserve(xs.size());
  for (const OrientedPair& p : xs) {
    if (whitespace_tokens(p.input).empty()) continue;
    out.push_back(TrainExample{p.history, p.input, p.target});
  }
  return out;
}

// Epochs over the larger of the gold and pseudo sets; each step draws one
// batch of each (cycling the smaller set) and applies the composite loss.
LossSummary train_model_epochs(GeneratorModel& model, const std::vector<TrainExample>& gold,
                               const std::vector<TrainExample>& pseudo, const CoTrainConfig& cfg,
                               int epochs, uint64_t shuffle_seed, bool with_contrastive,
                               bool is_rewriter, RunObserver* observer) {
  if (gold.empty()) throw ContractViolation("train_model_epochs: empty gold set");
  Rng rng(derive_seed(shuffle_seed, 0xBA7C));
  LossSummary summary;
  const size_t per_epoch =
      (std::max(gold.size(), pseudo.size()) + cfg.batch_size - 1) / cfg.batch_size;
  std::vector<size_t> gold_order(gold.size());
  std::iota(gold_order.begin(), gold_order.end(), 0);
  std::vector<size_t> pseudo_order(pseudo.size());
  std::iota(pseudo_order.begin(), pseudo_order.end(), 0);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(gold_order);
    rng.shuffle(pseudo_order);
    size_t gold_pos = 0, pseudo_pos = 0;
    for (size_t s = 0; s < per_epoch; ++s) {
      CompositeStep step;
      step.lambda = cfg.lambda;
      step.tau = cfg.tau;
      step.contrastive_weight = with_contrastive ? cfg.w : 0.0;
      step.gold.origin = BatchOrigin::kGold;
      step.gold.weight = 1.0;
      for (int b = 0; b < cfg.batch_size; ++b) {
        step.gold.examples.push_back(gold[gold_order[gold_pos]]);
        gold_pos = (gold_pos + 1) % gold_order.size();
      }
      if (!pseudo.empty()) {
        TrainBatch pb;
        pb.origin = BatchOrigin::kPseudo;
        pb.weight = cfg.lambda;
        for (int b = 0; b < cfg.batch_size; ++b) {
          pb.examples.push_back(pseudo[pseudo_order[pseudo_pos]]);
          pseudo_pos = (pseudo_pos + 1) % pseudo_order.size();
        }
        step.pseudo = std::move(pb);
      }
      if (step.contrastive_weight > 0.0) {
        step.contrastive = step.gold.examples;
        if (step.pseudo) {
          step.contrastive.insert(step.contrastive.end(), step.pseudo->examples.begin(),
                                  step.pseudo->examples.end());
        }
      }
      if (observer) {
        observer->on_train_batch(is_rewriter, step.gold, step.pseudo ? &*step.pseudo : nullptr);
      }
      const StepLosses losses = model.train_step(step);
      summary.gen_gold += losses.gold;
      summary.gen_pseudo += losses.pseudo;
      summary.icl += losses.icl;
      summary.ecl += losses.ecl;
      summary.total += losses.total;
      ++summary.steps;
    }
  }
  if (summary.steps > 0) {
    summary.gen_gold /= summary.steps;
    summary.gen_pseudo /= summary.steps;
    summary.icl /= summary.steps;
    summary.ecl /= summary.steps;
    summary.total /= summary.steps;
  }
  return summary;
}

std::optional<double> mean_confidence(const std::vector<PseudoExample>& xs) {
  if (xs.empty()) return std::nullopt;
  double sum = 0.0;
  for (const PseudoExample& x : xs) sum += x.confidence;
  return sum / static_cast<double>(xs.size());
}

json losses_to_json(const LossSummary& l) {
  return json{{"gen_gold", l.gen_gold}, {"gen_pseudo", l.gen_pseudo}, {"icl", l.icl},
              {"ecl", l.ecl},           {"total", l.total},           {"steps", l.steps}};
}

json metrics_to_json(const std::optional<metrics::MetricReport>& m) {
  if (!m) return nullptr;
  return json::parse(m->to_json());
}

json opt_to_json(const std::optional<double>& d) { return d ? json(*d) : json(nullptr); }

}  // namespace

std::string IterationReport::to_json() const {
  json j;
  j["iteration"] = iteration;
  j["kept_simplify"] = kept_simplify;
  j["rejected_simplify"] = rejected_simplify;
  j["kept_rewrite"] = kept_rewrite;
  j["rejected_rewrite"] = rejected_rewrite;
  j["pool_simplifier"] = pool_simplifier;
  j["pool_rewriter"] = pool_rewriter;
  j["mean_conf_kept_simplify"] = opt_to_json(mean_conf_kept_simplify);
  j["mean_conf_rejected_simplify"] = opt_to_json(mean_conf_rejected_simplify);
  j["mean_conf_kept_rewrite"] = opt_to_json(mean_conf_kept_rewrite);
  j["mean_conf_rejected_rewrite"] = opt_to_json(mean_conf_rejected_rewrite);
  j["simplifier_losses"] = losses_to_json(simplifier_losses);
  j["rewriter_losses"] = losses_to_json(rewriter_losses);
  j["dev_rewriter"] = metrics_to_json(dev_rewriter);
  j["dev_simplifier"] = metrics_to_json(dev_simplifier);
  j["simplifier_init_checksum"] = simplifier_init_checksum;
  j["rewriter_init_checksum"] = rewriter_init_checksum;
  j["simplifier_trained_checksum"] = simplifier_trained_checksum;
  j["rewriter_trained_checksum"] = rewriter_trained_checksum;
  j["degenerate"] = degenerate;
  return j.dump();
}

std::pair<LossSummary, LossSummary> warm_up(GeneratorModel& simplifier, GeneratorModel& rewriter,
                                            const std::vector<LabeledExample>& labeled,
                                            const CoTrainConfig& cfg) {
  if (labeled.empty()) {
    throw DataError(cfg.mode == Mode::kFewShot
                        ? "warm_up: labeled set is empty"
                        : "warm_up: rule-generated weak label set is empty");
  }
  CoTrainConfig warm_cfg = cfg;
  warm_cfg.w = 0.0;  // generation loss only during warm-up
  const auto gold_r = to_train_examples(labeled, false);
  const auto gold_s = to_train_examples(labeled, true);
  LossSummary ls = train_model_epochs(simplifier, gold_s, {}, warm_cfg, cfg.warmup_epochs,
                                      derive_seed(cfg.seed, 0, 11), false, false, nullptr);
  LossSummary lr = train_model_epochs(rewriter, gold_r, {}, warm_cfg, cfg.warmup_epochs,
                                      derive_seed(cfg.seed, 0, 12), false, true, nullptr);
  return {ls, lr};
}

std::vector<PseudoExample> pseudo_label(GeneratorModel& model, const DataPool& pool,
                                        Direction direction, const CoTrainConfig& cfg) {
  std::vector<PseudoExample> out;
  for (const DataPool::Item& item : pool.unconsumed()) {
    const Session& s = *item.session;
    PseudoExample ex;
    ex.session_id = s.id;
    ex.turn_index = item.turn_index;
    for (int t = 0; t < item.turn_index; ++t) ex.history.push_back(s.turns[t].query);
    ex.source = s.turns[item.turn_index].query;
    const GenerationResult gen = model.generate(ex.history, ex.source, cfg.model.max_decode_len);
    ex.generated = gen.text;
    ex.confidence = gen.confidence;
    ex.direction = direction;
    out.push_back(std::move(ex));
  }
  return out;
}

metrics::MetricReport evaluate_model(GeneratorModel& model,
                                     const std::vector<LabeledExample>& examples, int max_len) {
  std::vector<std::pair<std::string, std::string>> pairs;
  pairs.reserve(examples.size());
  for (const LabeledExample& ex : examples) {
    pairs.emplace_back(model.generate(ex.history, ex.source, max_len).text, ex.target);
  }
  return metrics::evaluate_corpus(pairs);
}

namespace {

std::optional<metrics::MetricReport> dev_metrics(GeneratorModel& model,
                                                 const std::vector<LabeledExample>& dev,
                                                 int max_len) {
  if (dev.empty()) return std::nullopt;
  return evaluate_model(model, dev, max_len);
}

}  // namespace

IterationOutcome co_train_iteration(GeneratorModel& simplifier, GeneratorModel& rewriter,
                                    DataPool& pool_s, DataPool& pool_r,
                                    const std::vector<LabeledExample>& gold,
                                    const std::vector<LabeledExample>& dev,
                                    const CoTrainConfig& cfg, int iter_idx, RunObserver* observer) {
  IterationOutcome out;
  IterationReport& report = out.report;
  report.iteration = iter_idx;

  const auto cand_s = pseudo_label(simplifier, pool_s, Direction::kSimplify, cfg);
  Selection sel_s = select(cand_s, cfg.s_s);
  if (observer) observer->on_selection(Direction::kSimplify, sel_s, cfg.s_s);
  const auto cand_r = pseudo_label(rewriter, pool_r, Direction::kRewrite, cfg);
  Selection sel_r = select(cand_r, cfg.s_r);
  if (observer) observer->on_selection(Direction::kRewrite, sel_r, cfg.s_r);

  pool_s.remove_consumed(sel_s.kept);
  pool_r.remove_consumed(sel_r.kept);

  report.kept_simplify = sel_s.kept.size();
  report.rejected_simplify = sel_s.rejected.size();
  report.kept_rewrite = sel_r.kept.size();
  report.rejected_rewrite = sel_r.rejected.size();
  report.pool_simplifier = pool_s.size();
  report.pool_rewriter = pool_r.size();
  report.mean_conf_kept_simplify = mean_confidence(sel_s.kept);
  report.mean_conf_rejected_simplify = mean_confidence(sel_s.rejected);
  report.mean_conf_kept_rewrite = mean_confidence(sel_r.kept);
  report.mean_conf_rejected_rewrite = mean_confidence(sel_r.rejected);

  const SyntheticDataset fused = fuse(sel_s.kept, sel_r.kept);

  if (fused.size() == 0) {
    // Nothing survived selection: keep the warm models as they are.
    report.degenerate = true;
    report.simplifier_init_checksum = simplifier.checksum();
    report.rewriter_init_checksum = rewriter.checksum();
    report.simplifier_trained_checksum = report.simplifier_init_checksum;
    report.rewriter_trained_checksum = report.rewriter_init_checksum;
    report.dev_rewriter = dev_metrics(rewriter, dev, cfg.model.max_decode_len);
    std::vector<LabeledExample> dev_rev;
    for (const LabeledExample& ex : dev) dev_rev.push_back(reverse(ex));
    report.dev_simplifier = dev_metrics(simplifier, dev_rev, cfg.model.max_decode_len);
    out.kept_simplify = std::move(sel_s.kept);
    out.kept_rewrite = std::move(sel_r.kept);
    return out;
  }

  simplifier.reinitialize(iteration_model_seed(cfg.seed, iter_idx, false));
  rewriter.reinitialize(iteration_model_seed(cfg.seed, iter_idx, true));
  report.simplifier_init_checksum = simplifier.checksum();
  report.rewriter_init_checksum = rewriter.checksum();

  const auto gold_r = to_train_examples(gold, false);
  const auto gold_s = to_train_examples(gold, true);
  const auto pseudo_r = to_train_examples(fused.for_rewriter());
  const auto pseudo_s = to_train_examples(fused.for_simplifier());

  report.simplifier_losses =
      train_model_epochs(simplifier, gold_s, pseudo_s, cfg, cfg.iter_epochs,
                         derive_seed(cfg.seed, iter_idx, 21), true, false, observer);
  report.rewriter_losses =
      train_model_epochs(rewriter, gold_r, pseudo_r, cfg, cfg.iter_epochs,
                         derive_seed(cfg.seed, iter_idx, 22), true, true, observer);

  report.simplifier_trained_checksum = simplifier.checksum();
  report.rewriter_trained_checksum = rewriter.checksum();

  report.dev_rewriter = dev_metrics(rewriter, dev, cfg.model.max_decode_len);
  std::vector<LabeledExample> dev_rev;
  for (const LabeledExample& ex : dev) dev_rev.push_back(reverse(ex));
  report.dev_simplifier = dev_metrics(simplifier, dev_rev, cfg.model.max_decode_len);

  out.kept_simplify = std::move(sel_s.kept);
  out.kept_rewrite = std::move(sel_r.kept);
  return out;
}

namespace {

json pseudo_to_json(const PseudoExample& ex) {
  json j;
  j["direction"] = direction_name(ex.direction);
  j["session_id"] = ex.session_id;
  j["turn"] = ex.turn_index;
  j["history"] = ex.history;
  j["source"] = ex.source;
  j["generated"] = ex.generated;
  j["confidence"] = ex.confidence;
  return j;
}

void write_text(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << content;
}

void write_iteration_artifacts(const std::filesystem::path& run_dir, const IterationReport& report,
                               GeneratorModel& simplifier, GeneratorModel& rewriter,
                               const std::vector<PseudoExample>& kept_s,
                               const std::vector<PseudoExample>& kept_r) {
  namespace fs = std::filesystem;
  const fs::path iter_dir = run_dir / ("iter_" + std::to_string(report.iteration));
  fs::create_directories(iter_dir);
  write_text(iter_dir / "report.json", report.to_json() + "\n");
  simplifier.save_checkpoint(iter_dir / "simplifier.ckpt");
  rewriter.save_checkpoint(iter_dir / "rewriter.ckpt");
  if (report.iteration > 0) {
    fs::create_directories(run_dir / "pseudo");
    std::string lines;
    for (const PseudoExample& ex : kept_s) lines += pseudo_to_json(ex).dump() + "\n";
    for (const PseudoExample& ex : kept_r) lines += pseudo_to_json(ex).dump() + "\n";
    write_text(run_dir / "pseudo" / ("iter_" + std::to_string(report.iteration) + ".jsonl"), lines);
  }
}

Session example_to_session(const LabeledExample& ex, const std::string& id) {
  Session s;
  s.id = id;
  for (const std::string& h : ex.history) s.turns.push_back(Turn{h, {}, {}});
  s.turns.push_back(Turn{ex.source, ex.target, {}});
  return s;
}

}  // namespace

RunResult run(const CoTrainConfig& cfg, const std::vector<LabeledExample>& labeled, DataPool pool_s,
              DataPool pool_r, const RunOptions& options) {
  cfg.validate();
  auto [train, dev] = split_dev(labeled, cfg.seed);
  Vocabulary vocab = build_model_vocabulary(labeled, pool_s, pool_r);

  RunResult result;
  auto simplifier = std::make_unique<SeqToSeqModel>(
      vocab, cfg.model, iteration_model_seed(cfg.seed, 0, false), cfg.learning_rate);
  auto rewriter = std::make_unique<SeqToSeqModel>(
      vocab, cfg.model, iteration_model_seed(cfg.seed, 0, true), cfg.learning_rate);

  if (options.run_dir) {
    std::filesystem::create_directories(*options.run_dir);
    // The dev split is written out so the rewrite/evaluate commands can
    // reproduce the reported dev metrics from the run directory alone.
    std::string dev_lines;
    for (size_t i = 0; i < dev.size(); ++i) {
      dev_lines +=
          dataio::session_to_json_line(example_to_session(dev[i], "dev-" + std::to_string(i))) +
          "\n";
    }
    write_text(*options.run_dir / "dev.jsonl", dev_lines);
  }

  IterationReport warm_report;
  warm_report.iteration = 0;
  warm_report.pool_simplifier = pool_s.size();
  warm_report.pool_rewriter = pool_r.size();
  warm_report.simplifier_init_checksum = simplifier->checksum();
  warm_report.rewriter_init_checksum = rewriter->checksum();
  const auto [ls, lr] = warm_up(*simplifier, *rewriter, train, cfg);
  warm_report.simplifier_losses = ls;
  warm_report.rewriter_losses = lr;
  warm_report.simplifier_trained_checksum = simplifier->checksum();
  warm_report.rewriter_trained_checksum = rewriter->checksum();
  warm_report.dev_rewriter = dev_metrics(*rewriter, dev, cfg.model.max_decode_len);
  std::vector<LabeledExample> dev_rev;
  for (const LabeledExample& ex : dev) dev_rev.push_back(reverse(ex));
  warm_report.dev_simplifier = dev_metrics(*simplifier, dev_rev, cfg.model.max_decode_len);
  if (options.run_dir) {
    write_iteration_artifacts(*options.run_dir, warm_report, *simplifier, *rewriter, {}, {});
  }
  if (options.observer) options.observer->after_warmup(*simplifier, *rewriter, warm_report);
  result.reports.push_back(std::move(warm_report));

  for (int k = 1; k <= cfg.max_iterations; ++k) {
    if (pool_s.empty() && pool_r.empty()) break;
    IterationOutcome outcome = co_train_iteration(*simplifier, *rewriter, pool_s, pool_r, train,
                                                  dev, cfg, k, options.observer);
    if (options.run_dir) {
      write_iteration_artifacts(*options.run_dir, outcome.report, *simplifier, *rewriter,
                                outcome.kept_simplify, outcome.kept_rewrite);
    }
    if (options.observer) {
      options.observer->after_iteration(k, *simplifier, *rewriter, outcome.report);
    }
    result.reports.push_back(std::move(outcome.report));
  }

  result.simplifier = std::move(simplifier);
  result.rewriter = std::move(rewriter);
  return result;
}

}  // namespace cqr::cotrain
