#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "optenc/checkpoint.hpp"
#include "optenc/corpus.hpp"
#include "optenc/error.hpp"
#include "optenc/eval.hpp"
#include "optenc/train.hpp"
#include "optenc/vocab.hpp"

#ifndef OPTENC_VERSION
#define OPTENC_VERSION "0.0.0"
#endif

namespace optenc {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A flag whose resolved value goes into the run manifest.
struct Setting {
  std::string name;
  std::function<json()> value;
};

class Command {
 public:
  Command(CLI::App& root, const std::string& name, const std::string& description)
      : app_(root.add_subcommand(name, description)), name_(name) {
    app_->add_option("--config", config_path_, "key=value file; explicit flags override it");
  }

  template <typename T>
  CLI::Option* add(const std::string& names, T& var, const std::string& help) {
    CLI::Option* o = app_->add_option(names, var, help);
    settings_.push_back({primary(names), [&var] { return json(var); }});
    return o;
  }

  template <typename T>
  CLI::Option* required(const std::string& names, T& var, const std::string& help) {
    return add(names, var, help)->required();
  }

  CLI::Option* flag(const std::string& names, bool& var, const std::string& help) {
    CLI::Option* o = app_->add_flag(names, var, help);
    settings_.push_back({primary(names), [&var] { return json(var); }});
    return o;
  }

  CLI::Option* ablation(std::string& var) {
    return add("--ablation", var, "full | no_opt | no_context | formula_only")
        ->check(CLI::IsMember({"full", "no_opt", "no_context", "formula_only"}));
  }

  CLI::Option* pooling(std::string& var) {
    return add("--pool", var, "mean2 | cls2")->check(CLI::IsMember({"mean2", "cls2"}));
  }

  CLI::App* app() const { return app_; }
  const std::string& name() const { return name_; }

  json resolved() const {
    json j = json::object();
    for (const auto& s : settings_) j[s.name] = s.value();
    return j;
  }

  void write_manifest(const fs::path& where, const std::vector<std::string>& inputs,
                      const std::vector<std::string>& outputs) const {
    json m;
    m["command"] = name_;
    m["artifact_version"] = OPTENC_VERSION;
    const json cfg = resolved();
    m["seed"] = cfg.contains("seed") ? cfg["seed"] : json(0);
    m["config"] = cfg;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    if (!where.parent_path().empty()) fs::create_directories(where.parent_path());
    std::ofstream out(where, std::ios::binary);
    if (!out) throw IoError("cannot write " + where.string());
    out << m.dump(2) << '\n';
  }

 private:
  static std::string primary(const std::string& names) {
    std::stringstream in(names);
    std::string part;
    while (std::getline(in, part, ','))
      if (part.rfind("--", 0) == 0) return part.substr(2);
    return names;
  }

  CLI::App* app_;
  std::string name_;
  std::string config_path_;
  std::vector<Setting> settings_;
};

std::string kind_of(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) return err->kind();
  return "Error";
}

// --- config files -----------------------------------------------------------

std::vector<std::string> config_flags(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::vector<std::string> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    std::replace(key.begin(), key.end(), '_', '-');
    if (key.empty() || key == "config")
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": bad key");
    out.push_back("--" + key + "=" + value);
  }
  return out;
}

// Splices the flags of every --config file (in order) in right after the
// subcommand so that flags given on the command line come later and win.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::vector<std::string> extra;
  for (std::size_t i = 1; i < args.size(); ++i) {
    std::string path;
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      continue;
    }
    const auto flags = config_flags(path);
    extra.insert(extra.end(), flags.begin(), flags.end());
  }
  if (!args.empty()) args.insert(args.begin() + 1, extra.begin(), extra.end());
  return args;
}

// --- helpers ----------------------------------------------------------------

ModelConfig model_config(int layers, int hidden, int heads, int ffn_mult, int max_len,
                         double dropout, std::size_t vocab_size) {
  ModelConfig c;
  c.layers = layers;
  c.hidden = hidden;
  c.heads = heads;
  c.ffn_mult = ffn_mult;
  c.max_len = max_len;
  c.dropout = dropout;
  c.vocab_size = static_cast<int>(vocab_size);
  return c;
}

std::vector<std::string> sorted_files(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json")
      out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

struct FormulaLine {
  std::string id;
  std::string latex;
};

// One formula per line, optionally `id<TAB>latex`; bare lines get ids f1, f2, ...
std::vector<FormulaLine> read_formulas(const fs::path& path) {
  std::vector<FormulaLine> out;
  std::size_t k = 0;
  for (const auto& line : read_lines(path)) {
    ++k;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      out.push_back({"f" + std::to_string(k), line});
    else
      out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return out;
}

// --- commands ---------------------------------------------------------------

struct Options {
  // shared
  std::uint64_t seed = 0;
  unsigned threads = 1;
  // ingest
  std::vector<std::string> inputs;
  std::string output;
  std::size_t min_context_chars = kDefaultMinContextChars;
  bool topic_from_dir = false;
  // vocab
  std::string dataset;
  std::size_t min_freq = 1;
  // model
  int layers = 2, hidden = 64, heads = 4, ffn_mult = 4, max_len = 128;
  double dropout = 0.0;
  // training
  std::string vocab, out_dir, checkpoint, init;
  int batch_size = 8, steps = 100, warmup_steps = 0, checkpoint_every = 0, log_every = 1;
  double lr = 2e-5, beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  double mlm_rate = 0.15, ccp_rate = 0.5, msp_rate = 0.15;
  bool msp_mask_node_id = false;
  std::string ablation = "full";
  int classes = 0;
  // retrieval
  std::string pool = "mean2", queries, candidates, first_stage, run, qrels;
  std::size_t top_k = 1000;
  std::string classes_file, anchor = "\\frac{a+b}{c+d}", formulas;
};

TrainConfig train_config(const Options& o) {
  TrainConfig t;
  t.seed = o.seed;
  t.batch_size = o.batch_size;
  t.steps = o.steps;
  t.learning_rate = o.lr;
  t.beta1 = o.beta1;
  t.beta2 = o.beta2;
  t.epsilon = o.epsilon;
  t.warmup_steps = o.warmup_steps;
  t.ablation = parse_ablation(o.ablation);
  t.mlm_rate = o.mlm_rate;
  t.ccp_rate = o.ccp_rate;
  t.msp_rate = o.msp_rate;
  t.msp_mask_node_id = o.msp_mask_node_id;
  t.checkpoint_every = o.checkpoint_every;
  t.log_every = o.log_every;
  t.threads = o.threads;
  return t;
}

void add_train_flags(Command& c, Options& o) {
  c.add("--seed", o.seed, "global seed");
  c.add("--threads", o.threads, "worker cap for batch fan-out");
  c.add("--batch-size", o.batch_size, "examples per step");
  c.add("--steps", o.steps, "optimizer steps");
  c.add("--lr,--learning-rate", o.lr, "Adam learning rate");
  c.add("--beta1", o.beta1, "Adam beta1");
  c.add("--beta2", o.beta2, "Adam beta2");
  c.add("--epsilon", o.epsilon, "Adam epsilon");
  c.add("--warmup-steps", o.warmup_steps, "linear warmup length, 0 = none");
  c.add("--log-every", o.log_every, "log interval in steps");
}

void add_model_flags(Command& c, Options& o) {
  c.add("--layers", o.layers, "transformer layers");
  c.add("--hidden", o.hidden, "hidden size");
  c.add("--heads", o.heads, "attention heads");
  c.add("--ffn-mult", o.ffn_mult, "feed-forward width multiplier");
  c.add("--max-len", o.max_len, "maximum sequence length");
  c.add("--dropout", o.dropout, "dropout rate");
}

using Runner = std::function<void()>;

Runner setup_ingest(Command& c, Options& o) {
  c.required("-i,--input", o.inputs, ".tex files or directories")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  c.required("-o,--output", o.output, "dataset JSONL");
  c.add("--min-context-chars", o.min_context_chars, "context window size in characters");
  c.flag("--topic-from-dir", o.topic_from_dir, "label pairs with their parent directory");
  c.add("--threads", o.threads, "extraction workers");
  return [&c, &o] {
    DatasetOptions d;
    d.min_context_chars = o.min_context_chars;
    d.topic_from_dir = o.topic_from_dir;
    d.threads = o.threads;
    std::vector<fs::path> in(o.inputs.begin(), o.inputs.end());
    const auto summary = build_dataset(in, o.output, d);
    c.write_manifest(o.output + ".manifest.json", o.inputs, {o.output, o.output + ".meta.json"});
    std::cout << summary.to_json().dump() << '\n';
  };
}

Runner setup_vocab(Command& c, Options& o) {
  c.required("--dataset", o.dataset, "dataset JSONL");
  c.required("-o,--output", o.output, "vocabulary file");
  c.add("--min-freq", o.min_freq, "minimum token count");
  return [&c, &o] {
    const auto pairs = read_dataset(o.dataset);
    const Vocab v = build_vocab(pairs, o.min_freq);
    v.save(o.output);
    c.write_manifest(o.output + ".manifest.json", {o.dataset}, {o.output});
    std::cout << "vocab " << v.size() << " tokens\n";
  };
}

Runner setup_pretrain(Command& c, Options& o) {
  c.required("--dataset", o.dataset, "dataset JSONL");
  c.required("--vocab", o.vocab, "vocabulary file");
  c.required("--out-dir", o.out_dir, "directory for log, checkpoints and manifest");
  c.add("--init", o.init, "continue from this checkpoint");
  add_model_flags(c, o);
  add_train_flags(c, o);
  c.ablation(o.ablation);
  c.add("--mlm-rate", o.mlm_rate, "MLM masking rate");
  c.add("--ccp-rate", o.ccp_rate, "CCP swap rate");
  c.add("--msp-rate", o.msp_rate, "MSP node rate");
  c.flag("--msp-mask-node-id", o.msp_mask_node_id, "also replace MSP node tokens by [MASK]");
  c.add("--checkpoint-every", o.checkpoint_every, "intermediate checkpoint interval, 0 = none");
  return [&c, &o] {
    const auto pairs = read_dataset(o.dataset);
    const Vocab v = Vocab::load(o.vocab);
    ModelConfig m = model_config(o.layers, o.hidden, o.heads, o.ffn_mult, o.max_len, o.dropout, v.size());
    PretrainOptions po;
    if (!o.init.empty()) {
      Checkpoint ck = load_checkpoint(o.init);
      if (ck.config.vocab_size != m.vocab_size)
        throw ConfigError("--init checkpoint has a different vocabulary size");
      m = ck.config;
      po.initial = std::move(ck.params);
    }
    const auto r = pretrain(pairs, v, m, train_config(o), o.out_dir, po);
    std::vector<std::string> inputs{o.dataset, o.vocab};
    if (!o.init.empty()) inputs.push_back(o.init);
    c.write_manifest(fs::path(o.out_dir) / "manifest.json", inputs, sorted_files(o.out_dir));
    std::cout << r.records.back().to_json().dump() << '\n';
  };
}

Runner setup_finetune(Command& c, Options& o) {
  c.required("--dataset", o.dataset, "dataset JSONL with topics");
  c.required("--vocab", o.vocab, "vocabulary file");
  c.required("--checkpoint", o.checkpoint, "pre-trained checkpoint");
  c.required("--out-dir", o.out_dir, "output directory");
  c.required("--classes", o.classes, "number of classes");
  o.lr = 1e-3;
  o.steps = 200;
  o.ablation = "formula_only";
  add_train_flags(c, o);
  c.ablation(o.ablation);
  return [&c, &o] {
    const auto pairs = read_dataset(o.dataset);
    const Vocab v = Vocab::load(o.vocab);
    const Checkpoint base = load_checkpoint(o.checkpoint);
    const auto r = finetune_classify(pairs, v, base, o.classes, train_config(o), o.out_dir);
    c.write_manifest(fs::path(o.out_dir) / "manifest.json", {o.dataset, o.vocab, o.checkpoint},
                     sorted_files(o.out_dir));
    std::cout << r.records.back().to_json().dump() << '\n';
  };
}

Runner setup_embed(Command& c, Options& o) {
  c.required("--checkpoint", o.checkpoint, "model checkpoint");
  c.required("--vocab", o.vocab, "vocabulary file");
  c.required("-i,--input", o.formulas, "formula list, one per line or id<TAB>latex");
  c.required("-o,--output", o.output, "embedding JSONL");
  c.ablation(o.ablation);
  c.pooling(o.pool);
  c.add("--threads", o.threads, "embedding workers");
  return [&c, &o] {
    const Checkpoint ck = load_checkpoint(o.checkpoint);
    const Vocab v = Vocab::load(o.vocab);
    const auto lines = read_formulas(o.formulas);
    const Ablation ab = parse_ablation(o.ablation);
    const Pooling pool = parse_pooling(o.pool);
    std::vector<FormulaEmbedding> out(lines.size());
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(o.threads, lines.size()));
    std::vector<std::future<void>> jobs;
    for (std::size_t w = 0; w < workers; ++w)
      jobs.push_back(std::async(std::launch::async, [&, w] {
        for (std::size_t i = w; i < lines.size(); i += workers) {
          try {
            out[i] = embed(lines[i].latex, ck, v, ab, pool, nullptr, lines[i].id);
          } catch (const Error& e) {
            throw Error(e.kind(), "formula " + lines[i].id + ": " + e.what());
          }
        }
      }));
    for (auto& j : jobs) j.get();
    write_embeddings(o.output, out);
    c.write_manifest(o.output + ".manifest.json", {o.checkpoint, o.vocab, o.formulas}, {o.output});
    std::cout << "embedded " << out.size() << " formulas\n";
  };
}

Runner setup_rank(Command& c, Options& o) {
  c.required("--queries", o.queries, "query embedding JSONL");
  c.required("--candidates", o.candidates, "candidate embedding JSONL");
  c.required("-o,--output", o.output, "run file");
  c.add("--first-stage", o.first_stage, "run file whose lists restrict each query's candidates");
  c.add("--top-k", o.top_k, "entries kept per query");
  return [&c, &o] {
    const auto queries = read_embeddings(o.queries);
    const auto cands = read_embeddings(o.candidates);
    std::map<std::string, const FormulaEmbedding*> by_id;
    for (const auto& e : cands) by_id[e.id] = &e;
    std::map<std::string, std::vector<FormulaEmbedding>> pool;
    std::size_t missing = 0;
    if (!o.first_stage.empty()) {
      for (const auto& r : read_run(o.first_stage)) {
        auto& list = pool[r.query_id];
        for (std::size_t k = 0; k < r.entries.size() && k < o.top_k; ++k) {
          const auto it = by_id.find(r.entries[k].first);
          if (it == by_id.end()) {
            ++missing;
            continue;
          }
          list.push_back(*it->second);
        }
      }
    }
    std::vector<RankedList> runs;
    for (const auto& q : queries) {
      RankedList r;
      if (o.first_stage.empty()) {
        r = rerank(q, cands);
      } else {
        const auto it = pool.find(q.id);
        if (it == pool.end() || it->second.empty()) {
          std::cerr << "warning: no first-stage candidates for query " << q.id << '\n';
          continue;
        }
        r = rerank(q, it->second);
      }
      if (r.entries.size() > o.top_k) r.entries.resize(o.top_k);
      runs.push_back(std::move(r));
    }
    if (missing) std::cerr << "warning: " << missing << " first-stage documents have no embedding\n";
    write_run(o.output, runs);
    std::vector<std::string> inputs{o.queries, o.candidates};
    if (!o.first_stage.empty()) inputs.push_back(o.first_stage);
    c.write_manifest(o.output + ".manifest.json", inputs, {o.output});
    std::cout << "ranked " << runs.size() << " queries\n";
  };
}

Runner setup_eval_ir(Command& c, Options& o) {
  c.required("--run", o.run, "run file");
  c.required("--qrels", o.qrels, "qrels file");
  c.add("-o,--output", o.output, "report JSON (stdout only when empty)");
  return [&c, &o] {
    const auto runs = read_run(o.run);
    const auto report = eval_retrieval(runs, read_qrels(o.qrels));
    const std::string text = report.to_json().dump(2) + "\n";
    if (!o.output.empty()) {
      write_text(o.output, text);
      c.write_manifest(o.output + ".manifest.json", {o.run, o.qrels}, {o.output});
    }
    std::cout << text;
  };
}

Runner setup_eval_cls(Command& c, Options& o) {
  c.required("--dataset", o.dataset, "dataset JSONL with topics");
  c.required("--vocab", o.vocab, "vocabulary file");
  c.required("--checkpoint", o.checkpoint, "fine-tuned checkpoint");
  c.add("--classes-file", o.classes_file, "class names (default: classes.txt next to the checkpoint)");
  c.add("-o,--output", o.output, "report JSON (stdout only when empty)");
  o.ablation = "formula_only";
  c.ablation(o.ablation);
  return [&c, &o] {
    const auto pairs = read_dataset(o.dataset);
    const Vocab v = Vocab::load(o.vocab);
    const Checkpoint ck = load_checkpoint(o.checkpoint);
    const fs::path names_path =
        o.classes_file.empty() ? fs::path(o.checkpoint).parent_path() / "classes.txt" : fs::path(o.classes_file);
    const auto names = read_lines(names_path);
    if (static_cast<int>(names.size()) > ck.config.classes)
      throw FormatError("classes file lists more classes than the checkpoint head");
    const auto gold = topic_labels(pairs, names);
    const auto pred = predict_classes(pairs, v, ck.params, ck.config, parse_ablation(o.ablation));
    std::vector<std::pair<int, int>> gp;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      gp.emplace_back(gold[i], pred[i]);
      correct += gold[i] == pred[i];
    }
    json report = eval_classify(gp, ck.config.classes).to_json();
    report["accuracy"] = gold.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(gold.size());
    report["class_names"] = names;
    const std::string text = report.dump(2) + "\n";
    if (!o.output.empty()) {
      write_text(o.output, text);
      c.write_manifest(o.output + ".manifest.json", {o.dataset, o.vocab, o.checkpoint, names_path.string()},
                       {o.output});
    }
    std::cout << text;
  };
}

Runner setup_demo(Command& c, Options& o) {
  c.required("--checkpoint", o.checkpoint, "model checkpoint");
  c.required("--vocab", o.vocab, "vocabulary file");
  c.add("--anchor", o.anchor, "formula to compare against");
  c.add("--formulas", o.formulas, "formula list (default: built-in list of 15)");
  c.add("-o,--output", o.output, "also write the table here");
  c.ablation(o.ablation);
  c.pooling(o.pool);
  return [&c, &o] {
    const Checkpoint ck = load_checkpoint(o.checkpoint);
    const Vocab v = Vocab::load(o.vocab);
    std::vector<std::string> list;
    if (o.formulas.empty()) {
      list = default_demo_formulas();
    } else {
      for (auto& f : read_formulas(o.formulas)) list.push_back(std::move(f.latex));
    }
    const auto rows = similarity_demo(o.anchor, list, ck, v, parse_ablation(o.ablation), parse_pooling(o.pool));
    const std::string table = format_demo_table(o.anchor, rows);
    if (!o.output.empty()) {
      write_text(o.output, table);
      std::vector<std::string> inputs{o.checkpoint, o.vocab};
      if (!o.formulas.empty()) inputs.push_back(o.formulas);
      c.write_manifest(o.output + ".manifest.json", inputs, {o.output});
    }
    std::cout << table;
  };
}

// Rebuilds the argument list a manifest was produced with.
std::vector<std::string> replay_args(const fs::path& manifest, const std::vector<std::string>& sets) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot read " + manifest.string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(manifest.string() + ": " + e.what());
  }
  if (!m.contains("command") || !m.contains("config") || !m["config"].is_object())
    throw FormatError(manifest.string() + ": not a run manifest");
  json cfg = m["config"];
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
    const std::string key = s.substr(0, eq), value = s.substr(eq + 1);
    if (!cfg.contains(key)) throw UsageError("manifest has no setting '" + key + "'");
    if (cfg[key].is_array())
      cfg[key] = json::array({value});
    else if (cfg[key].is_boolean())
      cfg[key] = value == "true" || value == "1";
    else
      cfg[key] = value;
  }
  std::vector<std::string> args{m["command"].get<std::string>()};
  for (const auto& [key, v] : cfg.items()) {
    if (v.is_boolean()) {
      if (v.get<bool>()) args.push_back("--" + key);
    } else if (v.is_array()) {
      for (const auto& x : v) {
        args.push_back("--" + key);
        args.push_back(x.get<std::string>());
      }
    } else if (v.is_string()) {
      if (v.get<std::string>().empty()) continue;
      args.push_back("--" + key);
      args.push_back(v.get<std::string>());
    } else {
      args.push_back("--" + key);
      args.push_back(v.dump());
    }
  }
  return args;
}

int run_args(std::vector<std::string> args);

int run_parsed(std::vector<std::string> args) {
  CLI::App app("Structure-aware formula encoder: corpus ingest, pre-training, embedding and evaluation",
               "optenc");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_version_flag("--version", OPTENC_VERSION);

  std::vector<std::unique_ptr<Command>> commands;
  std::vector<std::unique_ptr<Options>> options;
  std::map<std::string, Runner> runners;
  auto make = [&](const std::string& name, const std::string& desc, Runner (*setup)(Command&, Options&)) {
    commands.push_back(std::make_unique<Command>(app, name, desc));
    options.push_back(std::make_unique<Options>());
    runners[name] = setup(*commands.back(), *options.back());
  };
  make("ingest", "extract formula-context pairs from LaTeX sources", setup_ingest);
  make("vocab", "build the token vocabulary of a dataset", setup_vocab);
  make("pretrain", "joint MLM + CCP + MSP pre-training", setup_pretrain);
  make("finetune", "topic classification fine-tuning", setup_finetune);
  make("embed", "formula embeddings from a checkpoint", setup_embed);
  make("rank", "rerank candidates by cosine similarity", setup_rank);
  make("eval-ir", "bpref retrieval report", setup_eval_ir);
  make("eval-cls", "macro precision / recall / F1 of a classifier", setup_eval_cls);
  make("demo", "rank formulas by similarity to an anchor", setup_demo);

  std::string manifest;
  std::vector<std::string> sets;
  bool dry_run = false;
  CLI::App* replay = app.add_subcommand("replay", "re-run the command recorded in a manifest");
  replay->add_option("manifest", manifest, "manifest JSON")->required();
  replay->add_option("--set", sets, "override a recorded setting, key=value")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  replay->add_flag("--dry-run", dry_run, "print the command instead of running it");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp&) {
    std::cout << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    std::cout << OPTENC_VERSION << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: UsageError: " << e.what() << '\n';
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return 2;
  }

  if (replay->parsed()) {
    auto again = replay_args(manifest, sets);
    if (dry_run) {
      std::cout << "optenc";
      for (const auto& a : again) std::cout << ' ' << a;
      std::cout << '\n';
      return 0;
    }
    return run_args(std::move(again));
  }
  for (const auto& c : commands)
    if (c->app()->parsed()) {
      runners.at(c->name())();
      return 0;
    }
  return 2;
}

int run_args(std::vector<std::string> args) {
  try {
    return run_parsed(expand_config(std::move(args)));
  } catch (const UsageError& e) {
    std::cerr << "error: UsageError: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: ConfigError: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << kind_of(e) << ": " << msg << '\n';
    return 1;
  }
}

}  // namespace

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_args(std::move(args));
}

}  // namespace optenc
