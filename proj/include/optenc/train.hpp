#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "optenc/checkpoint.hpp"
#include "optenc/corpus.hpp"
#include "optenc/inputs.hpp"
#include "optenc/model.hpp"
#include "optenc/vocab.hpp"

namespace optenc {

struct TrainConfig {
  std::uint64_t seed = 0;
  int batch_size = 8;
  int steps = 100;
  double learning_rate = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Linear warmup length in steps; 0 disables warmup.
  int warmup_steps = 0;
  Ablation ablation = Ablation::full;
  double mlm_rate = 0.15;
  double ccp_rate = 0.5;
  double msp_rate = 0.15;
  bool msp_mask_node_id = false;
  /// 0 writes only the final checkpoint.
  int checkpoint_every = 0;
  int log_every = 1;
  unsigned threads = 1;

  void validate() const;
};

struct TrainRecord {
  int step = 0;
  double loss_total = 0.0;
  double loss_mlm = 0.0;
  double loss_ccp = 0.0;
  double loss_msp = 0.0;
  /// Accuracies are 0 for a task with no labels in the batch.
  double mlm_masked_accuracy = 0.0;
  double ccp_accuracy = 0.0;
  double msp_pair_accuracy = 0.0;

  nlohmann::ordered_json to_json() const;
};

/// One step of bias-corrected Adam on a single tensor; `t` is the 1-based
/// step count.
void adam_update(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v, int t, double lr,
                 double beta1, double beta2, double epsilon);

class Adam {
 public:
  Adam(const ParameterSet& like, double beta1, double beta2, double epsilon);
  void step(ParameterSet& params, const GradientSet& grad, double lr);
  int steps_taken() const { return t_; }

 private:
  ParameterSet m_, v_;
  double beta1_, beta2_, epsilon_;
  int t_ = 0;
};

struct PretrainOptions {
  /// Initial parameters; drawn from `init_parameters(cfg, seed)` when empty.
  std::optional<ParameterSet> initial;
  /// Observes every assembled (and sampled) training input.
  std::function<void(const ModelInput&)> on_input;
};

struct PretrainResult {
  std::vector<TrainRecord> records;
  ParameterSet params;
};

/// Joint MLM + CCP + MSP pre-training with Adam. Writes `train_log.jsonl`,
/// intermediate `checkpoint_step<N>.ckpt` files and the final `model.ckpt`
/// into `out_dir` (skipped when `out_dir` is empty). Throws NonFiniteError
/// naming the failing step.
PretrainResult pretrain(std::span<const FormulaContextPair> pairs, const Vocab& vocab,
                        const ModelConfig& mcfg, const TrainConfig& tcfg,
                        const std::filesystem::path& out_dir, const PretrainOptions& options = {});
PretrainResult pretrain(const std::filesystem::path& dataset, const Vocab& vocab,
                        const ModelConfig& mcfg, const TrainConfig& tcfg,
                        const std::filesystem::path& out_dir);

/// Builds the pre-training input for pool entry `index` exactly as a training
/// step does: CCP swap, assembly, MLM and MSP sampling.
ModelInput make_pretrain_input(std::span<const FormulaContextPair> pool, std::size_t index,
                               const Vocab& vocab, const ModelConfig& mcfg,
                               const TrainConfig& tcfg, Rng& rng);

/// Masked-token argmax accuracy over the pairs, using `draws` MLM samplings
/// per pair with contexts left in place.
double mlm_accuracy(std::span<const FormulaContextPair> pairs, const Vocab& vocab,
                    const ParameterSet& params, const ModelConfig& cfg, const TrainConfig& tcfg,
                    std::uint64_t seed, int draws = 1);

struct FinetuneRecord {
  int step = 0;
  double loss = 0.0;
  double accuracy = 0.0;

  nlohmann::ordered_json to_json() const;
};

struct FinetuneResult {
  ModelConfig config;
  ParameterSet params;
  /// Topic string of each class id (sorted).
  std::vector<std::string> class_names;
  std::vector<FinetuneRecord> records;
};

/// Adds a zero-initialized softmax head over the final [CLS] vector and
/// trains every parameter on topic cross-entropy. Inputs follow
/// `tcfg.ablation` (formula_only for formula-only inputs, no_opt or full for
/// formula with context); no pre-training sampling happens. Writes
/// `model.ckpt`, `classes.txt` and `finetune_log.jsonl` into `out_dir` when
/// it is non-empty. Throws MissingLabel when a pair has no topic.
FinetuneResult finetune_classify(std::span<const FormulaContextPair> pairs, const Vocab& vocab,
                                 const Checkpoint& base, int classes, const TrainConfig& tcfg,
                                 const std::filesystem::path& out_dir);

/// Class ids of `class_names` for each pair's topic; throws MissingLabel.
std::vector<int> topic_labels(std::span<const FormulaContextPair> pairs,
                              std::span<const std::string> class_names);

/// Argmax class of the classifier head for each pair.
std::vector<int> predict_classes(std::span<const FormulaContextPair> pairs, const Vocab& vocab,
                                 const ParameterSet& params, const ModelConfig& cfg,
                                 Ablation ablation);

void write_lines(const std::filesystem::path& path, std::span<const std::string> lines);
std::vector<std::string> read_lines(const std::filesystem::path& path);

}  // namespace optenc
