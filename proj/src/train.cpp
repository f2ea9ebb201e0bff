#include "optenc/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>
#include <set>

#include "optenc/error.hpp"

namespace optenc {
namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (steps < 1) throw ConfigError("steps must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  for (double r : {mlm_rate, ccp_rate, msp_rate})
    if (r < 0.0 || r > 1.0) throw ConfigError("sampling rates must lie in [0, 1]");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ConfigError("adam betas must lie in [0, 1)");
  if (warmup_steps < 0 || checkpoint_every < 0 || log_every < 1)
    throw ConfigError("warmup_steps/checkpoint_every must be >= 0 and log_every >= 1");
}

nlohmann::ordered_json TrainRecord::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["loss_total"] = loss_total;
  j["loss_mlm"] = loss_mlm;
  j["loss_ccp"] = loss_ccp;
  j["loss_msp"] = loss_msp;
  j["mlm_masked_accuracy"] = mlm_masked_accuracy;
  j["ccp_accuracy"] = ccp_accuracy;
  j["msp_pair_accuracy"] = msp_pair_accuracy;
  return j;
}

nlohmann::ordered_json FinetuneRecord::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["loss"] = loss;
  j["accuracy"] = accuracy;
  return j;
}

void adam_update(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v, int t, double lr,
                 double beta1, double beta2, double epsilon) {
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + epsilon);
}

Adam::Adam(const ParameterSet& like, double beta1, double beta2, double epsilon)
    : m_(like.zeros_like()), v_(like.zeros_like()), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

void Adam::step(ParameterSet& params, const GradientSet& grad, double lr) {
  ++t_;
  auto p = params.tensors();
  const auto g = grad.tensors();
  auto m = m_.tensors();
  auto v = v_.tensors();
  for (std::size_t i = 0; i < p.size(); ++i)
    adam_update(*p[i], *g[i], *m[i], *v[i], t_, lr, beta1_, beta2_, epsilon_);
}

namespace {

struct ExampleResult {
  Losses losses;
  GradientSet grad;
  std::size_t mlm_total = 0, mlm_correct = 0;
  std::size_t ccp_total = 0, ccp_correct = 0;
  std::size_t msp_total = 0, msp_correct = 0;
};

std::size_t argmax(const RowVector& v) {
  Eigen::Index best = 0;
  v.maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; results come back in
// index order so any later reduction is deterministic.
template <typename Fn>
auto parallel_map(std::size_t n, unsigned threads, Fn fn) {
  using R = decltype(fn(std::size_t{0}));
  std::vector<R> out(n);
  const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::vector<std::future<void>> futures;
  for (std::size_t w = 0; w < workers; ++w) {
    futures.push_back(std::async(std::launch::async, [&, w] {
      for (std::size_t i = w; i < n; i += workers) out[i] = fn(i);
    }));
  }
  for (auto& f : futures) f.get();
  return out;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
  return order;
}

// Fixed separation between the streams used for epoch shuffles and for
// per-example sampling.
constexpr std::uint64_t kExampleStream = 0x5EED0F5A3D1E5ULL;
constexpr std::uint64_t kEvalStream = 0xE7A1CAFEULL;

class EpochSampler {
 public:
  EpochSampler(std::size_t n, std::uint64_t seed) : n_(n), seed_(seed) {}
  std::size_t at(std::uint64_t example) {
    const std::uint64_t epoch = example / n_;
    if (epoch != cached_epoch_ || order_.empty()) {
      order_ = epoch_order(n_, seed_, epoch);
      cached_epoch_ = epoch;
    }
    return order_[example % n_];
  }

 private:
  std::size_t n_;
  std::uint64_t seed_;
  std::uint64_t cached_epoch_ = 0;
  std::vector<std::size_t> order_;
};

void write_log_line(std::ofstream& log, const nlohmann::ordered_json& j) {
  log << j.dump() << '\n';
  log.flush();
}

}  // namespace

ModelInput make_pretrain_input(std::span<const FormulaContextPair> pool, std::size_t index,
                               const Vocab& vocab, const ModelConfig& mcfg,
                               const TrainConfig& tcfg, Rng& rng) {
  const bool ccp = uses_context(tcfg.ablation) && pool.size() >= 2;
  ModelInput input;
  if (ccp) {
    const CcpSample sample = sample_ccp(pool, index, rng, tcfg.ccp_rate);
    input = assemble(sample.pair, vocab, static_cast<std::size_t>(mcfg.max_len), tcfg.ablation);
    input.ccp_label = sample.delta;
  } else {
    input = assemble(pool[index], vocab, static_cast<std::size_t>(mcfg.max_len), tcfg.ablation);
  }
  input = sample_mlm(std::move(input), vocab.size(), rng, tcfg.mlm_rate);
  if (uses_nodes(tcfg.ablation)) {
    const OperatorTree tree = input.tree;
    input = sample_msp(std::move(input), tree, rng, tcfg.msp_rate, tcfg.msp_mask_node_id);
  }
  return input;
}

PretrainResult pretrain(std::span<const FormulaContextPair> pairs, const Vocab& vocab,
                        const ModelConfig& mcfg, const TrainConfig& tcfg,
                        const fs::path& out_dir, const PretrainOptions& options) {
  mcfg.validate();
  tcfg.validate();
  if (pairs.empty()) throw EmptyDataset("pre-training needs at least one pair");
  if (static_cast<std::size_t>(mcfg.vocab_size) != vocab.size())
    throw ConfigError("vocab_size does not match the vocabulary");

  PretrainResult result;
  result.params = options.initial ? *options.initial : init_parameters(mcfg, tcfg.seed);
  Adam adam(result.params, tcfg.beta1, tcfg.beta2, tcfg.epsilon);

  std::ofstream log;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    log.open(out_dir / "train_log.jsonl", std::ios::binary);
    if (!log) throw IoError("cannot write " + (out_dir / "train_log.jsonl").string());
  }

  EpochSampler sampler(pairs.size(), tcfg.seed);
  const auto bs = static_cast<std::size_t>(tcfg.batch_size);
  for (int step = 1; step <= tcfg.steps; ++step) {
    std::vector<std::size_t> indices(bs);
    std::vector<std::uint64_t> example_ids(bs);
    for (std::size_t b = 0; b < bs; ++b) {
      example_ids[b] = static_cast<std::uint64_t>(step - 1) * bs + b;
      indices[b] = sampler.at(example_ids[b]);
    }
    std::vector<ModelInput> inputs(bs);
    std::vector<std::uint64_t> dropout_seeds(bs);
    for (std::size_t b = 0; b < bs; ++b) {
      Rng rng(derive_seed(tcfg.seed ^ kExampleStream, example_ids[b]));
      inputs[b] = make_pretrain_input(pairs, indices[b], vocab, mcfg, tcfg, rng);
      dropout_seeds[b] = rng.next();
      if (options.on_input) options.on_input(inputs[b]);
    }

    std::vector<ExampleResult> results;
    try {
      results = parallel_map(bs, tcfg.threads, [&](std::size_t b) {
        const ModelInput& in = inputs[b];
        Rng drop_rng(dropout_seeds[b]);
        const ForwardTrace trace = forward(in, result.params, mcfg, true, &drop_rng);
        ExampleResult r;
        r.losses = compute_losses(trace, in, result.params);
        r.grad = backward(trace, in, result.params, mcfg);
        for (const auto& l : in.mlm_labels) {
          ++r.mlm_total;
          r.mlm_correct += argmax(mlm_logits(trace, result.params, l.position)) ==
                           static_cast<std::size_t>(l.original);
        }
        if (in.ccp_label) {
          ++r.ccp_total;
          r.ccp_correct += (ccp_logit(trace, result.params) > 0.0) == (*in.ccp_label == 1);
        }
        for (const auto& l : in.msp_labels) {
          ++r.msp_total;
          r.msp_correct += (msp_logit(trace, result.params, l.i, l.j) > 0.0) == (l.delta == 1);
        }
        return r;
      });
    } catch (const NonFiniteError& e) {
      throw NonFiniteError("step " + std::to_string(step) + ": " + e.what());
    }

    GradientSet grad = results[0].grad;
    TrainRecord rec;
    rec.step = step;
    std::size_t mt = 0, mc = 0, ct = 0, cc = 0, st = 0, sc = 0;
    for (std::size_t b = 0; b < bs; ++b) {
      if (b > 0) grad += results[b].grad;
      rec.loss_mlm += results[b].losses.mlm;
      rec.loss_ccp += results[b].losses.ccp;
      rec.loss_msp += results[b].losses.msp;
      mt += results[b].mlm_total;
      mc += results[b].mlm_correct;
      ct += results[b].ccp_total;
      cc += results[b].ccp_correct;
      st += results[b].msp_total;
      sc += results[b].msp_correct;
    }
    const double inv = 1.0 / static_cast<double>(bs);
    grad *= inv;
    rec.loss_mlm *= inv;
    rec.loss_ccp *= inv;
    rec.loss_msp *= inv;
    rec.loss_total = loss_total(rec.loss_mlm, rec.loss_ccp, rec.loss_msp);
    rec.mlm_masked_accuracy = mt ? static_cast<double>(mc) / static_cast<double>(mt) : 0.0;
    rec.ccp_accuracy = ct ? static_cast<double>(cc) / static_cast<double>(ct) : 0.0;
    rec.msp_pair_accuracy = st ? static_cast<double>(sc) / static_cast<double>(st) : 0.0;
    if (!std::isfinite(rec.loss_total))
      throw NonFiniteError("step " + std::to_string(step) + ": non-finite loss");

    double lr = tcfg.learning_rate;
    if (tcfg.warmup_steps > 0)
      lr *= std::min(1.0, static_cast<double>(step) / static_cast<double>(tcfg.warmup_steps));
    adam.step(result.params, grad, lr);
    if (!result.params.all_finite())
      throw NonFiniteError("step " + std::to_string(step) + ": non-finite parameters after update");

    result.records.push_back(rec);
    if (log.is_open() && (step % tcfg.log_every == 0 || step == tcfg.steps))
      write_log_line(log, rec.to_json());
    if (!out_dir.empty() && tcfg.checkpoint_every > 0 && step % tcfg.checkpoint_every == 0)
      save_checkpoint(result.params, mcfg,
                      out_dir / ("checkpoint_step" + std::to_string(step) + ".ckpt"));
  }
  if (!out_dir.empty()) save_checkpoint(result.params, mcfg, out_dir / "model.ckpt");
  return result;
}

PretrainResult pretrain(const fs::path& dataset, const Vocab& vocab, const ModelConfig& mcfg,
                        const TrainConfig& tcfg, const fs::path& out_dir) {
  const auto pairs = read_dataset(dataset);
  return pretrain(pairs, vocab, mcfg, tcfg, out_dir);
}

double mlm_accuracy(std::span<const FormulaContextPair> pairs, const Vocab& vocab,
                    const ParameterSet& params, const ModelConfig& cfg, const TrainConfig& tcfg,
                    std::uint64_t seed, int draws) {
  std::size_t total = 0, correct = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const ModelInput base =
        assemble(pairs[i], vocab, static_cast<std::size_t>(cfg.max_len), tcfg.ablation);
    for (int d = 0; d < draws; ++d) {
      Rng rng(derive_seed(seed ^ kEvalStream, i * 1000003ULL + static_cast<std::uint64_t>(d)));
      const ModelInput in = sample_mlm(base, vocab.size(), rng, tcfg.mlm_rate);
      const ForwardTrace trace = forward(in, params, cfg);
      for (const auto& l : in.mlm_labels) {
        ++total;
        correct += argmax(mlm_logits(trace, params, l.position)) ==
                   static_cast<std::size_t>(l.original);
      }
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

std::vector<int> topic_labels(std::span<const FormulaContextPair> pairs,
                              std::span<const std::string> class_names) {
  std::vector<int> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (!p.topic) throw MissingLabel("pair " + p.source_id + " has no topic label");
    const auto it = std::find(class_names.begin(), class_names.end(), *p.topic);
    if (it == class_names.end()) throw MissingLabel("unknown topic '" + *p.topic + "'");
    out.push_back(static_cast<int>(it - class_names.begin()));
  }
  return out;
}

FinetuneResult finetune_classify(std::span<const FormulaContextPair> pairs, const Vocab& vocab,
                                 const Checkpoint& base, int classes, const TrainConfig& tcfg,
                                 const fs::path& out_dir) {
  tcfg.validate();
  if (classes < 2) throw ConfigError("classes must be >= 2");
  if (pairs.empty()) throw EmptyDataset("fine-tuning needs at least one pair");
  std::set<std::string> topics;
  for (const auto& p : pairs) {
    if (!p.topic) throw MissingLabel("pair " + p.source_id + " has no topic label");
    topics.insert(*p.topic);
  }
  if (topics.size() > static_cast<std::size_t>(classes))
    throw ConfigError("dataset has " + std::to_string(topics.size()) + " topics but classes=" +
                      std::to_string(classes));

  FinetuneResult result;
  result.config = base.config;
  result.params = base.params;
  result.class_names.assign(topics.begin(), topics.end());
  reset_classifier(result.params, result.config, classes);
  const ModelConfig& cfg = result.config;
  const auto labels = topic_labels(pairs, result.class_names);

  std::vector<ModelInput> inputs;
  inputs.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    inputs.push_back(
        assemble(pairs[i], vocab, static_cast<std::size_t>(cfg.max_len), tcfg.ablation));
    inputs.back().class_label = labels[i];
  }

  std::ofstream log;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    log.open(out_dir / "finetune_log.jsonl", std::ios::binary);
    if (!log) throw IoError("cannot write " + (out_dir / "finetune_log.jsonl").string());
  }

  Adam adam(result.params, tcfg.beta1, tcfg.beta2, tcfg.epsilon);
  EpochSampler sampler(pairs.size(), tcfg.seed);
  const auto bs = static_cast<std::size_t>(tcfg.batch_size);
  struct Item {
    double loss = 0.0;
    bool correct = false;
    GradientSet grad;
  };
  for (int step = 1; step <= tcfg.steps; ++step) {
    std::vector<std::size_t> idx(bs);
    for (std::size_t b = 0; b < bs; ++b)
      idx[b] = sampler.at(static_cast<std::uint64_t>(step - 1) * bs + b);
    auto items = parallel_map(bs, tcfg.threads, [&](std::size_t b) {
      const ModelInput& in = inputs[idx[b]];
      Rng drop_rng(derive_seed(tcfg.seed ^ kExampleStream,
                               static_cast<std::uint64_t>(step - 1) * bs + b));
      const ForwardTrace trace = forward(in, result.params, cfg, true, &drop_rng);
      Item it;
      it.loss = loss_cls(trace, in, result.params);
      it.correct = argmax(class_logits(trace, result.params)) ==
                   static_cast<std::size_t>(*in.class_label);
      it.grad = backward(trace, in, result.params, cfg);
      return it;
    });
    GradientSet grad = items[0].grad;
    FinetuneRecord rec;
    rec.step = step;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < bs; ++b) {
      if (b > 0) grad += items[b].grad;
      rec.loss += items[b].loss;
      correct += items[b].correct;
    }
    const double inv = 1.0 / static_cast<double>(bs);
    grad *= inv;
    rec.loss *= inv;
    rec.accuracy = static_cast<double>(correct) * inv;
    double lr = tcfg.learning_rate;
    if (tcfg.warmup_steps > 0)
      lr *= std::min(1.0, static_cast<double>(step) / static_cast<double>(tcfg.warmup_steps));
    adam.step(result.params, grad, lr);
    if (!result.params.all_finite())
      throw NonFiniteError("fine-tune step " + std::to_string(step) + ": non-finite parameters");
    result.records.push_back(rec);
    if (log.is_open() && (step % tcfg.log_every == 0 || step == tcfg.steps))
      write_log_line(log, rec.to_json());
  }
  if (!out_dir.empty()) {
    save_checkpoint(result.params, result.config, out_dir / "model.ckpt");
    write_lines(out_dir / "classes.txt", result.class_names);
  }
  return result;
}

std::vector<int> predict_classes(std::span<const FormulaContextPair> pairs, const Vocab& vocab,
                                 const ParameterSet& params, const ModelConfig& cfg,
                                 Ablation ablation) {
  if (cfg.classes < 1) throw ConfigError("checkpoint has no classifier head");
  std::vector<int> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    const ModelInput in = assemble(p, vocab, static_cast<std::size_t>(cfg.max_len), ablation);
    const ForwardTrace trace = forward(in, params, cfg);
    out.push_back(static_cast<int>(argmax(class_logits(trace, params))));
  }
  return out;
}

void write_lines(const fs::path& path, std::span<const std::string> lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace optenc
