#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "motif/checkpoint.hpp"
#include "motif/corpus.hpp"
#include "motif/dpo.hpp"
#include "motif/minhash.hpp"
#include "motif/mixture.hpp"
#include "motif/model.hpp"
#include "motif/train.hpp"
#include "motif/vocab.hpp"

namespace motif::cli {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitBadConfig = 2;
constexpr int kExitMissingFile = 3;
constexpr int kExitRuntime = 4;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingFileError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

using nlohmann::json;

inline const json& member(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(path + "." + key + ": missing");
  return *it;
}

inline double num(const json& j, const std::string& key, const std::string& path) {
  const json& v = member(j, key, path);
  if (!v.is_number()) throw ConfigError(path + "." + key + ": expected a number");
  return v.get<double>();
}

inline double num_or(const json& j, const std::string& key, const std::string& path, double dflt) {
  if (!j.is_object() || !j.contains(key)) return dflt;
  return num(j, key, path);
}

inline std::uint64_t uint_field(const json& j, const std::string& key, const std::string& path) {
  const double v = num(j, key, path);
  if (v < 0 || v != std::floor(v)) throw ConfigError(path + "." + key + ": expected a non-negative integer");
  return std::uint64_t(v);
}

inline std::uint64_t uint_or(const json& j, const std::string& key, const std::string& path,
                             std::uint64_t dflt) {
  if (!j.is_object() || !j.contains(key)) return dflt;
  return uint_field(j, key, path);
}

inline std::string str_field(const json& j, const std::string& key, const std::string& path) {
  const json& v = member(j, key, path);
  if (!v.is_string()) throw ConfigError(path + "." + key + ": expected a string");
  return v.get<std::string>();
}

inline ModelConfig parse_model(const json& j, const std::string& path) {
  ModelConfig c;
  c.hidden_dim = uint_field(j, "hidden_dim", path);
  c.n_layers = uint_field(j, "n_layers", path);
  c.ffn_dim = uint_field(j, "ffn_dim", path);
  c.n_heads = uint_field(j, "n_heads", path);
  c.n_kv_heads = uint_or(j, "n_kv_heads", path, c.n_heads);
  c.vocab_size = uint_field(j, "vocab_size", path);
  c.max_seq_len = uint_field(j, "max_seq_len", path);
  c.rope_theta = num_or(j, "rope_theta", path, 10000.0);
  c.tied_embeddings = j.value("tied_embeddings", true);
  c.polynorm_epsilon = num_or(j, "polynorm_epsilon", path, 1e-6);
  c.rmsnorm_epsilon = num_or(j, "rmsnorm_epsilon", path, 1e-6);
  try {
    validate_config(c);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return c;
}

inline std::array<double, kNumGroups> parse_ratios(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != kNumGroups) {
    throw ConfigError(path + ": expected an array of 8 ratios");
  }
  std::array<double, kNumGroups> out{};
  for (std::size_t g = 0; g < kNumGroups; ++g) {
    if (!j[g].is_number()) throw ConfigError(path + "[" + std::to_string(g) + "]: expected a number");
    out[g] = j[g].get<double>();
  }
  return out;
}

struct TrainSection {
  std::uint64_t steps = 0;
  std::size_t batch_tokens = 8192;
  std::size_t seq_len = 128;
  double grad_clip = 1.0;
};

struct AnnealSection {
  double theta = 500000.0;
  std::size_t max_seq_len = 0;
  std::uint64_t steps = 0;
};

struct PreprocessSection {
  std::int64_t min_tokens = 24;
  std::int64_t max_tokens = 4096;
  MinHashConfig minhash;
};

struct DpoStageSpec {
  std::string pairs_path;
  std::uint64_t steps = 50;
};

struct DpoSection {
  DpoStageConfig stage;
  std::vector<DpoStageSpec> stages;
};

struct RunConfig {
  ModelConfig model;
  bool has_model = false;
  OptimizerConfig optimizer;
  WsdSchedule wsd;  // token axis
  bool has_wsd = false;
  MixtureSchedule mixture = MixtureSchedule::single_group(DomainGroup::general_web);
  std::optional<SmaConfig> sma;
  TrainSection train;
  AnnealSection anneal;
  PreprocessSection preprocess;
  DpoSection dpo;
  std::uint64_t seed = 0;
  std::string corpus_path, out_dir = ".", metrics_path;
};

inline RunConfig parse_run_config(const json& j) {
  RunConfig rc;
  if (j.contains("model")) {
    rc.model = parse_model(j["model"], "config.model");
    rc.has_model = true;
  }
  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    rc.optimizer.peak_lr = num_or(o, "peak_lr", "config.optimizer", 5e-4);
    rc.optimizer.beta1 = num_or(o, "beta1", "config.optimizer", 0.9);
    rc.optimizer.beta2 = num_or(o, "beta2", "config.optimizer", 0.95);
    rc.optimizer.weight_decay = num_or(o, "weight_decay", "config.optimizer", 0.1);
    rc.optimizer.epsilon = num_or(o, "epsilon", "config.optimizer", 1e-8);
    rc.optimizer.warmup_steps = std::int64_t(uint_or(o, "warmup_steps", "config.optimizer", 5000));
    try {
      rc.optimizer.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config.optimizer: ") + e.what());
    }
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    rc.train.steps = uint_or(t, "steps", "config.train", 0);
    rc.train.batch_tokens = uint_or(t, "batch_tokens", "config.train", 8192);
    rc.train.seq_len = uint_or(t, "seq_len", "config.train", 128);
    rc.train.grad_clip = num_or(t, "grad_clip", "config.train", 1.0);
    if (rc.train.seq_len == 0 || rc.train.batch_tokens < rc.train.seq_len) {
      throw ConfigError("config.train: batch_tokens must cover at least one seq_len");
    }
  }
  if (j.contains("wsd")) {
    const json& w = j["wsd"];
    rc.wsd.stable_end = num(w, "stable_end_tokens", "config.wsd");
    rc.wsd.total = num(w, "total_tokens", "config.wsd");
    rc.wsd.floor_fraction = num_or(w, "floor_fraction", "config.wsd", 0.25);
    rc.wsd.warmup = num_or(w, "warmup_tokens", "config.wsd",
                           double(rc.optimizer.warmup_steps) * double(rc.train.batch_tokens));
    try {
      rc.wsd.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config.wsd: ") + e.what());
    }
    rc.has_wsd = true;
  }
  if (j.contains("mixture")) {
    const json& m = j["mixture"];
    rc.mixture.initial_ratios = parse_ratios(member(m, "initial_ratios", "config.mixture"),
                                             "config.mixture.initial_ratios");
    rc.mixture.final_ratios = parse_ratios(member(m, "final_ratios", "config.mixture"),
                                           "config.mixture.final_ratios");
    try {
      rc.mixture.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config.mixture: ") + e.what());
    }
  }
  if (j.contains("sma")) {
    SmaConfig sma;
    sma.window = uint_or(j["sma"], "window", "config.sma", 6);
    sma.interval_tokens = uint_field(j["sma"], "interval_tokens", "config.sma");
    try {
      sma.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config.sma: ") + e.what());
    }
    rc.sma = sma;
  }
  if (j.contains("anneal")) {
    const json& a = j["anneal"];
    rc.anneal.theta = num_or(a, "theta", "config.anneal", 500000.0);
    rc.anneal.max_seq_len = uint_field(a, "max_seq_len", "config.anneal");
    rc.anneal.steps = uint_or(a, "steps", "config.anneal", 0);
  }
  if (j.contains("preprocess")) {
    const json& p = j["preprocess"];
    rc.preprocess.min_tokens = std::int64_t(uint_or(p, "min_tokens", "config.preprocess", 24));
    rc.preprocess.max_tokens = std::int64_t(uint_or(p, "max_tokens", "config.preprocess", 4096));
    rc.preprocess.minhash.shingle_size = uint_or(p, "shingle_size", "config.preprocess", 5);
    rc.preprocess.minhash.num_hashes = uint_or(p, "num_hashes", "config.preprocess", 128);
    rc.preprocess.minhash.bands = uint_or(p, "bands", "config.preprocess", 16);
    rc.preprocess.minhash.rows = uint_or(p, "rows", "config.preprocess", 8);
    rc.preprocess.minhash.jaccard_threshold =
        num_or(p, "jaccard_threshold", "config.preprocess", 0.9);
    try {
      rc.preprocess.minhash.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config.preprocess: ") + e.what());
    }
  }
  if (j.contains("dpo")) {
    const json& d = j["dpo"];
    rc.dpo.stage.beta = num_or(d, "beta", "config.dpo", 0.1);
    rc.dpo.stage.lr = num_or(d, "lr", "config.dpo", 1e-5);
    rc.dpo.stage.batch_pairs = uint_or(d, "batch_pairs", "config.dpo", 4);
    rc.dpo.stage.holdout_fraction = num_or(d, "holdout_fraction", "config.dpo", 0.2);
    rc.dpo.stage.eval_every = uint_or(d, "eval_every", "config.dpo", 10);
    if (d.contains("stages")) {
      if (!d["stages"].is_array() || d["stages"].empty()) {
        throw ConfigError("config.dpo.stages: expected a non-empty array");
      }
      for (std::size_t i = 0; i < d["stages"].size(); ++i) {
        const std::string path = "config.dpo.stages[" + std::to_string(i) + "]";
        DpoStageSpec spec;
        spec.pairs_path = str_field(d["stages"][i], "pairs", path);
        spec.steps = uint_or(d["stages"][i], "steps", path, 50);
        rc.dpo.stages.push_back(spec);
      }
    }
  }
  rc.seed = uint_or(j, "seed", "config", 0);
  if (j.contains("paths")) {
    const json& p = j["paths"];
    if (p.contains("corpus")) rc.corpus_path = str_field(p, "corpus", "config.paths");
    if (p.contains("out_dir")) rc.out_dir = str_field(p, "out_dir", "config.paths");
    if (p.contains("metrics")) rc.metrics_path = str_field(p, "metrics", "config.paths");
  }
  return rc;
}

inline RunConfig load_config(const std::string& path) {
  if (!std::filesystem::exists(path)) throw MissingFileError("config file not found: " + path);
  std::ifstream f(path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error: " + std::string(e.what()));
  }
  return parse_run_config(j);
}

/// Corpus loader: .txt becomes one general_web document, anything else is
/// treated as JSONL.
inline std::vector<Document> load_corpus(const std::string& path) {
  if (!std::filesystem::exists(path)) throw MissingFileError("corpus file not found: " + path);
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".txt") {
    std::ifstream f(path, std::ios::binary);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return {make_document(std::filesystem::path(path).stem().string(), std::move(text),
                          DomainGroup::general_web)};
  }
  try {
    return read_jsonl_file(path);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

inline std::vector<PreferencePair> load_pairs(const std::string& path) {
  if (!std::filesystem::exists(path)) throw MissingFileError("pairs file not found: " + path);
  std::ifstream f(path);
  std::vector<PreferencePair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError("pairs line " + std::to_string(line_no) + ": " + e.what());
    }
    PreferencePair p;
    p.prompt = byte_tokenize(str_field(j, "prompt", "pairs"));
    p.chosen = byte_tokenize(str_field(j, "chosen", "pairs"));
    p.rejected = byte_tokenize(str_field(j, "rejected", "pairs"));
    if (p.prompt.empty() || p.chosen.empty() || p.rejected.empty()) {
      throw ConfigError("pairs line " + std::to_string(line_no) + ": empty field");
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

inline Checkpoint load_checkpoint_file(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    throw MissingFileError("checkpoint not found: " + path);
  }
  return read_checkpoint(path);
}

inline TrainOptions to_train_options(const RunConfig& rc, std::uint64_t steps) {
  TrainOptions opts;
  opts.steps = steps;
  opts.batch_tokens = rc.train.batch_tokens;
  opts.seq_len = rc.train.seq_len;
  opts.grad_clip = rc.train.grad_clip;
  opts.seed = rc.seed;
  opts.wsd = rc.wsd;
  opts.opt = rc.optimizer;
  opts.mixture = rc.mixture;
  opts.sma = rc.sma;
  return opts;
}

}  // namespace detail

/// Entry point shared by the binary and the tests. args excludes argv[0].
inline int run_command(const std::vector<std::string>& args, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  using detail::RunConfig;
  CLI::App app{"Motif-2.6B desk-scale training stack"};
  app.require_subcommand(1);

  std::string config_path, resume_path, out_dir, prompt = "The ";
  std::uint64_t seed_override = 0;
  bool seed_given = false;
  std::int64_t steps_override = -1;
  std::size_t max_new = 128;
  double temperature = 0.0;
  std::vector<std::string> average_inputs;
  std::string average_out = "averaged.ckpt";

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    auto* opt = cmd->add_option("--config", config_path, "JSON run configuration");
    if (needs_config) opt->required();
    cmd->add_option("--seed", seed_override, "seed override")->each([&](const std::string&) {
      seed_given = true;
    });
    cmd->add_option("--resume", resume_path, "checkpoint to load");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--steps", steps_override, "step-count override");
  };

  CLI::App* cmd_count = app.add_subcommand("count-params", "print parameter counts for a config");
  add_common(cmd_count, true);
  CLI::App* cmd_pre = app.add_subcommand("preprocess", "filter and deduplicate a JSONL corpus");
  add_common(cmd_pre, true);
  CLI::App* cmd_train = app.add_subcommand("train", "stage-1 pre-training loop");
  add_common(cmd_train, true);
  CLI::App* cmd_anneal = app.add_subcommand("anneal", "ABF long-context continuation");
  add_common(cmd_anneal, true);
  CLI::App* cmd_avg = app.add_subcommand("average", "element-wise average of checkpoints");
  cmd_avg->add_option("--out", average_out, "output checkpoint path");
  cmd_avg->add_option("checkpoints", average_inputs, "checkpoint files")->required();
  CLI::App* cmd_dpo = app.add_subcommand("dpo", "preference-alignment stages");
  add_common(cmd_dpo, true);
  CLI::App* cmd_sample = app.add_subcommand("sample", "generate text from a checkpoint");
  add_common(cmd_sample, true);
  cmd_sample->add_option("--prompt", prompt, "prompt text");
  cmd_sample->add_option("--max-new", max_new, "tokens to generate");
  cmd_sample->add_option("--temperature", temperature, "0 = greedy");

  std::vector<const char*> argv;
  argv.push_back("motif");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help() << std::endl;
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << std::endl;
    return kExitUsage;
  }

  try {
    RunConfig rc;
    if (!config_path.empty()) rc = detail::load_config(config_path);
    if (seed_given) rc.seed = seed_override;
    if (!out_dir.empty()) rc.out_dir = out_dir;
    std::filesystem::create_directories(rc.out_dir);
    auto out_path = [&](const std::string& name) {
      return (std::filesystem::path(rc.out_dir) / name).string();
    };

    if (*cmd_count) {
      if (!rc.has_model) throw ConfigError("config.model: missing");
      auto count = count_parameters(rc.model);
      out << "total_parameters " << count.total << "\n";
      out << "non_embedding_parameters " << count.non_embedding << "\n";
      out.precision(3);
      out << "total_approx " << std::scientific << double(count.total) << std::defaultfloat
          << "\n";
      return kExitOk;
    }

    if (*cmd_pre) {
      if (rc.corpus_path.empty()) throw ConfigError("config.paths.corpus: missing");
      auto docs = detail::load_corpus(rc.corpus_path);
      LengthFilterStats lf;
      auto filtered = length_filter(docs, rc.preprocess.min_tokens, rc.preprocess.max_tokens, &lf);
      ExactDedupStats ed;
      auto exact = exact_dedup(filtered, &ed);
      auto near = minhash_near_dedup(exact, rc.preprocess.minhash);
      write_jsonl_file(near.unique, out_path("corpus.clean.jsonl"));
      {
        std::ofstream pf(out_path("duplicate_pairs.csv"));
        write_pair_report(near.pairs, pf);
      }
      out << "input_docs " << lf.input_docs << "\n";
      out << "dropped_short " << lf.dropped_short << "\n";
      out << "split_docs " << lf.split_docs << "\n";
      out << "exact_duplicates_removed " << ed.removed << "\n";
      out << "near_duplicates_removed " << near.removed << "\n";
      out << "flagged_empty_shingles " << near.empty_shingle.size() << "\n";
      out << "output_docs " << near.unique.size() << "\n";
      return kExitOk;
    }

    if (*cmd_avg) {
      std::vector<Checkpoint> cks;
      for (const auto& p : average_inputs) cks.push_back(detail::load_checkpoint_file(p));
      Checkpoint avg = sma_average(cks);
      write_checkpoint(avg, average_out);
      out << "averaged " << cks.size() << " checkpoints -> " << average_out << "\n";
      return kExitOk;
    }

    if (!rc.has_model) throw ConfigError("config.model: missing");

    if (*cmd_train || *cmd_anneal) {
      if (!rc.has_wsd) throw ConfigError("config.wsd: missing");
      if (rc.corpus_path.empty()) throw ConfigError("config.paths.corpus: missing");
      Model<float> model(rc.model, rc.seed);
      AdamState<float> state = AdamState<float>::init(model.named_params());
      std::uint64_t start_step = 0, start_tokens = 0;
      if (!resume_path.empty()) {
        Checkpoint ck = detail::load_checkpoint_file(resume_path);
        restore_model(ck, model, ck.has_opt ? &state : nullptr);
        start_step = ck.step;
        start_tokens = ck.tokens;
      } else if (*cmd_anneal) {
        throw ConfigError("anneal requires --resume");
      }
      if (*cmd_anneal) {
        model.apply_abf(rc.anneal.theta, rc.anneal.max_seq_len);
      }
      auto docs = detail::load_corpus(rc.corpus_path);
      TokenPools pools = TokenPools::from_documents(docs);

      std::uint64_t steps = *cmd_anneal ? rc.anneal.steps : rc.train.steps;
      if (steps_override >= 0) steps = std::uint64_t(steps_override);
      TrainOptions opts = detail::to_train_options(rc, steps);
      opts.start_step = start_step;
      opts.start_tokens = start_tokens;
      opts.metrics_path = rc.metrics_path.empty() ? out_path("metrics.csv") : rc.metrics_path;
      {
        std::ofstream mf(out_path("mixture_manifest.csv"));
        write_mixture_manifest(opts.mixture, 101, mf);
      }
      TrainResult result = train_loop(model, pools, opts, &state);
      write_checkpoint(result.final_checkpoint, out_path("final.ckpt"));
      out << "steps " << result.log.size() << "\n";
      if (!result.log.empty()) {
        out << "first_loss " << result.log.front().loss << "\n";
        out << "final_loss " << result.log.back().loss << "\n";
      }
      out << "checkpoint " << out_path("final.ckpt") << "\n";
      out << "metrics " << opts.metrics_path << "\n";
      if (result.aborted) {
        err << "error: training aborted: " << result.abort_reason << std::endl;
        return kExitRuntime;
      }
      return kExitOk;
    }

    if (*cmd_dpo) {
      if (rc.dpo.stages.empty()) throw ConfigError("config.dpo.stages: missing");
      Model<float> model(rc.model, rc.seed);
      if (!resume_path.empty()) {
        Checkpoint ck = detail::load_checkpoint_file(resume_path);
        restore_model(ck, model, nullptr);
      }
      DpoStageConfig stage_cfg = rc.dpo.stage;
      stage_cfg.seed = rc.seed;
      Checkpoint best;
      for (std::size_t s = 0; s < rc.dpo.stages.size(); ++s) {
        auto pairs = detail::load_pairs(rc.dpo.stages[s].pairs_path);
        stage_cfg.steps = rc.dpo.stages[s].steps;
        if (steps_override >= 0) stage_cfg.steps = std::uint64_t(steps_override);
        DpoStageResult r = dpo_stage(model, pairs, stage_cfg);
        out << "stage " << (s + 1) << " initial_holdout " << r.initial_holdout
            << " best_holdout " << r.best_holdout << " best_step " << r.best_step << "\n";
        best = r.best;
        restore_model(best, model, nullptr);  // stage s+1 resumes from the best
        write_checkpoint(best, out_path("dpo_stage" + std::to_string(s + 1) + ".ckpt"));
      }
      write_checkpoint(best, out_path("dpo_final.ckpt"));
      out << "checkpoint " << out_path("dpo_final.ckpt") << "\n";
      return kExitOk;
    }

    if (*cmd_sample) {
      if (resume_path.empty()) throw ConfigError("sample requires --resume");
      Model<float> model(rc.model, rc.seed);
      Checkpoint ck = detail::load_checkpoint_file(resume_path);
      restore_model(ck, model, nullptr);
      NoGradGuard ng;
      std::vector<std::int32_t> context = byte_tokenize(prompt);
      if (context.empty()) context.push_back(' ');
      std::mt19937_64 rng(rc.seed);
      std::string generated;
      for (std::size_t i = 0; i < max_new; ++i) {
        if (context.size() >= model.config().max_seq_len) {
          context.erase(context.begin(),
                        context.begin() + (context.size() - model.config().max_seq_len + 1));
        }
        TensorF logits = model.forward(context);
        const std::size_t vocab = model.config().vocab_size;
        const float* row = logits.data().data() + (context.size() - 1) * vocab;
        std::int32_t next = 0;
        if (temperature <= 0) {
          for (std::size_t v = 1; v < vocab; ++v) {
            if (row[v] > row[next]) next = std::int32_t(v);
          }
        } else {
          std::vector<double> probs(vocab);
          double mx = row[0];
          for (std::size_t v = 1; v < vocab; ++v) mx = std::max(mx, double(row[v]));
          double sum = 0;
          for (std::size_t v = 0; v < vocab; ++v) {
            probs[v] = std::exp((double(row[v]) - mx) / temperature);
            sum += probs[v];
          }
          std::uniform_real_distribution<double> dist(0.0, sum);
          double r = dist(rng);
          for (std::size_t v = 0; v < vocab; ++v) {
            r -= probs[v];
            if (r <= 0) {
              next = std::int32_t(v);
              break;
            }
          }
        }
        context.push_back(next);
        generated.push_back(char(static_cast<unsigned char>(next)));
      }
      out << prompt << generated << "\n";
      return kExitOk;
    }

    err << "error: no subcommand handled" << std::endl;
    return kExitUsage;
  } catch (const MissingFileError& e) {
    err << "error: " << e.what() << std::endl;
    return kExitMissingFile;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << std::endl;
    return kExitBadConfig;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << std::endl;
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << std::endl;
    return kExitRuntime;
  }
}

}  // namespace motif::cli
