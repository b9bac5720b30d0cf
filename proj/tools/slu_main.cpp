// slu_main.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "slu/attention.hpp"
#include "slu/augment.hpp"
#include "slu/checkpoint.hpp"
#include "slu/corpus.hpp"
#include "slu/eval.hpp"
#include "slu/split.hpp"
#include "slu/stats.hpp"
#include "slu/synth.hpp"
#include "slu/train.hpp"

namespace {

struct CorpusFlags {
  bool keep_case = false;
  bool lenient_iob = false;

  slu::ParseOptions options() const {
    slu::ParseOptions opt;
    opt.lowercase = !keep_case;
    opt.lenient_iob = lenient_iob;
    return opt;
  }
};

void add_corpus_flags(CLI::App* cmd, CorpusFlags& flags) {
  cmd->add_flag("--keep-case", flags.keep_case, "Preserve token case when parsing");
  cmd->add_flag("--lenient-iob", flags.lenient_iob,
                "Repair bare I- labels to B- instead of failing");
}

struct TrainFlags {
  std::string train_dir, test_dir, out_dir;
  CorpusFlags corpus;
  slu::TrainConfig train_cfg;
  slu::ModelConfig model_cfg;
  bool paired = false;
  long long pairs = -1;
  std::uint64_t pair_seed_offset = 9000;

  void add_to(CLI::App* cmd, bool with_seed = true) {
    cmd->add_option("--train", train_dir, "Training corpus directory")->required();
    cmd->add_option("--test", test_dir, "Test corpus directory")->required();
    cmd->add_option("--out", out_dir, "Output directory")->required();
    add_corpus_flags(cmd, corpus);
    cmd->add_option("--lambda1", train_cfg.weights.lambda1, "Slot loss weight");
    cmd->add_option("--lambda2", train_cfg.weights.lambda2, "Slot-pair loss weight");
    cmd->add_option("--lambda3", train_cfg.weights.lambda3, "Non-degenerate loss weight");
    cmd->add_option("--kl-cap", train_cfg.weights.kl_cap, "Cap per KL term (nats)");
    cmd->add_option("--prob-floor", train_cfg.weights.prob_floor,
                    "Probability floor inside KL terms");
    cmd->add_flag("--paired,!--no-paired", paired, "Paired-training augmentation");
    cmd->add_option("--pairs", pairs, "Synthesized sample count (default: train size)");
    cmd->add_option("--lr", train_cfg.learning_rate, "Learning rate");
    cmd->add_option("--steps", train_cfg.n_steps, "Training steps");
    cmd->add_option("--batch-size", train_cfg.batch_size, "Batch size");
    cmd->add_option("--eval-every", train_cfg.eval_every,
                    "Evaluate every N steps (0 = end only)");
    if (with_seed) cmd->add_option("--seed", train_cfg.seed, "RNG seed");
    cmd->add_option("--layers", model_cfg.n_layers, "Transformer layers");
    cmd->add_option("--heads", model_cfg.n_heads, "Attention heads");
    cmd->add_option("--d-model", model_cfg.d_model, "Model width");
    cmd->add_option("--d-ff", model_cfg.d_ff, "Feed-forward width");
    cmd->add_option("--max-len", model_cfg.max_len, "Maximum sequence length");
    cmd->add_option("--dropout", model_cfg.dropout, "Dropout fraction");
  }

  slu::TrainConfig finalize_train_cfg() const {
    slu::TrainConfig cfg = train_cfg;
    cfg.use_paired_training = paired;
    if (pairs >= 0) cfg.paired.n_pairs = static_cast<std::size_t>(pairs);
    cfg.paired.seed = cfg.seed + pair_seed_offset;
    return cfg;
  }
};

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw slu::Error("cannot write " + path.string());
  out << content;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw slu::Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_predictions(const slu::Predictions& preds, const std::filesystem::path& dir) {
  std::string labels, intents;
  for (const auto& seq : preds.labels) {
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i) labels += ' ';
      labels += seq[i];
    }
    labels += '\n';
  }
  for (const auto& intent : preds.intents) {
    intents += intent;
    intents += '\n';
  }
  write_file(dir / "predictions.txt", labels);
  write_file(dir / "predictions.intent.txt", intents);
}

void run_training(const TrainFlags& flags) {
  slu::ParseOptions opt = flags.corpus.options();
  slu::Corpus train_corpus = slu::load_corpus_dir(flags.train_dir, opt);
  slu::Corpus test_corpus = slu::load_corpus_dir(flags.test_dir, opt);
  slu::TrainConfig cfg = flags.finalize_train_cfg();

  std::filesystem::create_directories(flags.out_dir);
  std::ofstream log(std::filesystem::path(flags.out_dir) / "train_log.jsonl");
  if (!log) throw slu::Error("cannot write training log");
  slu::StepCallback callback = [&log](const slu::TrainStepView& view) {
    log << view.breakdown->to_json_line(view.step) << '\n';
  };

  slu::TrainResult result =
      slu::train(train_corpus, test_corpus, flags.model_cfg, cfg, callback);

  // periodic metrics join the stream after the per-step records; every line
  // carries its step
  for (const auto& [step, eval] : result.periodic_evals) {
    nlohmann::json j;
    j["step"] = step;
    j["slot_f1"] = eval.slot_f1;
    j["intent_acc"] = eval.intent_acc;
    log << j.dump() << '\n';
  }

  slu::save_checkpoint(result.model, result.vocab, opt.lowercase,
                       std::filesystem::path(flags.out_dir) / "checkpoint.json");
  write_file(std::filesystem::path(flags.out_dir) / "metrics.json",
             result.final_eval.to_json() + "\n");
  write_predictions(slu::predict(result.model, result.vocab, test_corpus),
                    flags.out_dir);
  std::cout << "slot_f1=" << result.final_eval.slot_f1
            << " intent_acc=" << result.final_eval.intent_acc
            << " synthesized=" << result.synthesized << std::endl;
}

int run(int argc, char** argv) {
  CLI::App app{"Compositional SLU toolkit: splits, paired training, and a "
               "small attention-regularized transformer"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a synthetic corpus");
  std::string gen_config, gen_out;
  bool gen_jsonl = false;
  slu::SynthGrammarConfig synth_cfg;
  gen->add_option("--config", gen_config, "JSON config file");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_flag("--jsonl", gen_jsonl, "Also export corpus.jsonl per corpus");
  gen->add_option("--intents", synth_cfg.n_intents, "Intent count");
  gen->add_option("--slot-types", synth_cfg.n_slot_types, "Slot type count");
  gen->add_option("--values", synth_cfg.values_per_slot, "Values per slot type");
  gen->add_option("--templates", synth_cfg.templates_per_intent, "Templates per intent");
  gen->add_option("--max-slots", synth_cfg.max_slots_per_template,
                  "Max slots per template");
  gen->add_option("--train", synth_cfg.n_train, "Training utterances");
  gen->add_option("--test", synth_cfg.n_test, "Test utterances");
  gen->add_option("--seed", synth_cfg.seed, "RNG seed");
  gen->callback([&]() {
    slu::SynthGrammarConfig cfg = synth_cfg;
    if (!gen_config.empty()) cfg = slu::synth_config_from_json(read_file(gen_config));
    slu::SynthResult result = slu::synth_generate(cfg);
    slu::write_corpus_dir(result.train, std::filesystem::path(gen_out) / "train");
    slu::write_corpus_dir(result.test, std::filesystem::path(gen_out) / "test");
    if (gen_jsonl) {
      write_file(std::filesystem::path(gen_out) / "train" / "corpus.jsonl",
                 slu::corpus_to_jsonl(result.train));
      write_file(std::filesystem::path(gen_out) / "test" / "corpus.jsonl",
                 slu::corpus_to_jsonl(result.test));
    }
    write_file(std::filesystem::path(gen_out) / "config.json",
               slu::synth_config_to_json(cfg) + "\n");
    std::cout << "train=" << result.train.size() << " test=" << result.test.size()
              << std::endl;
  });

  // split
  auto* split = app.add_subcommand("split", "Build a compositional split");
  std::string split_train, split_test, split_out, split_mode = "novel-comb";
  CorpusFlags split_corpus;
  slu::SplitConfig split_cfg;
  bool no_oov = false;
  split->add_option("--train", split_train, "Training corpus directory")->required();
  split->add_option("--test", split_test, "Test corpus directory")->required();
  split->add_option("--out", split_out, "Output directory")->required();
  split->add_option("--mode", split_mode, "novel-comb or length")
      ->check(CLI::IsMember({"novel-comb", "length"}));
  split->add_option("--k", split_cfg.k, "Max slots per training utterance");
  split->add_option("--seed", split_cfg.seed, "RNG seed for OOV substitution");
  split->add_flag("--no-oov-sub", no_oov, "Disable OOV slot-value substitution");
  bool split_jsonl = false;
  split->add_flag("--jsonl", split_jsonl, "Also export corpus.jsonl per side");
  add_corpus_flags(split, split_corpus);
  split->callback([&]() {
    slu::ParseOptions opt = split_corpus.options();
    slu::Corpus train = slu::load_corpus_dir(split_train, opt);
    slu::Corpus test = slu::load_corpus_dir(split_test, opt);
    split_cfg.oov_substitution = !no_oov;
    split_cfg.mode = split_mode == "length" ? slu::SplitMode::LengthGeneralization
                                            : slu::SplitMode::NovelCombination;
    slu::SplitResult result =
        split_cfg.mode == slu::SplitMode::LengthGeneralization
            ? slu::length_split(train, test, split_cfg)
            : slu::novel_combination_split(train, test, split_cfg);
    slu::write_split_result(result, split_out);
    if (split_jsonl) {
      write_file(std::filesystem::path(split_out) / "train" / "corpus.jsonl",
                 slu::corpus_to_jsonl(result.train));
      write_file(std::filesystem::path(split_out) / "test" / "corpus.jsonl",
                 slu::corpus_to_jsonl(result.test));
    }
    std::cout << slu::report_to_json(result.report) << std::endl;
  });

  // augment
  auto* aug = app.add_subcommand("augment", "Paired-training augmentation");
  std::string aug_train, aug_out;
  CorpusFlags aug_corpus;
  slu::AugmentConfig aug_cfg;
  long long aug_pairs = -1;
  aug->add_option("--train", aug_train, "Training corpus directory")->required();
  aug->add_option("--out", aug_out, "Output directory")->required();
  aug->add_option("--pairs", aug_pairs, "Synthesized sample count (default: train size)");
  aug->add_option("--seed", aug_cfg.seed, "RNG seed");
  aug->add_option("--separator", aug_cfg.separator, "Separator token");
  add_corpus_flags(aug, aug_corpus);
  aug->callback([&]() {
    slu::Corpus train = slu::load_corpus_dir(aug_train, aug_corpus.options());
    if (aug_pairs >= 0) aug_cfg.n_pairs = static_cast<std::size_t>(aug_pairs);
    slu::AugmentResult result = slu::augment_corpus(train, aug_cfg);
    slu::write_corpus_dir(result.corpus, aug_out);
    nlohmann::json j;
    j["synthesized"] = result.synthesized;
    j["shortfall"] = result.shortfall;
    j["total"] = result.corpus.size();
    write_file(std::filesystem::path(aug_out) / "report.json", j.dump(2) + "\n");
    std::cout << j.dump() << std::endl;
  });

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  TrainFlags train_flags;
  train_flags.add_to(train_cmd);
  train_cmd->callback([&]() { run_training(train_flags); });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt, eval_test, eval_out;
  bool by_slot_count = false;
  CorpusFlags eval_corpus_flags;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--test", eval_test, "Test corpus directory")->required();
  eval_cmd->add_option("--out", eval_out, "Output directory")->required();
  eval_cmd->add_flag("--by-slot-count", by_slot_count,
                     "Print the per-slot-count F1 table");
  eval_cmd->add_flag("--lenient-iob", eval_corpus_flags.lenient_iob,
                     "Repair bare I- labels in the test corpus");
  eval_cmd->callback([&]() {
    slu::LoadedCheckpoint ckpt = slu::load_checkpoint(eval_ckpt);
    slu::ParseOptions opt;
    opt.lowercase = ckpt.lowercase;
    opt.lenient_iob = eval_corpus_flags.lenient_iob;
    slu::Corpus test = slu::load_corpus_dir(eval_test, opt);
    slu::EvalResult result = slu::evaluate(ckpt.model, ckpt.vocab, test);
    std::filesystem::create_directories(eval_out);
    write_file(std::filesystem::path(eval_out) / "metrics.json", result.to_json() + "\n");
    write_predictions(slu::predict(ckpt.model, ckpt.vocab, test), eval_out);
    std::cout << "slot_f1=" << result.slot_f1 << " intent_acc=" << result.intent_acc
              << std::endl;
    if (by_slot_count) {
      for (const auto& [l, bucket] : result.f1_by_slot_count) {
        std::cout << "L=" << l << " f1=" << bucket.f1 << " gold_spans="
                  << bucket.gold_spans << " utterances=" << bucket.utterances
                  << std::endl;
      }
    }
  });

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Multi-seed training sweep");
  TrainFlags sweep_flags;
  std::string seeds_text = "1,2,3,4,5";
  int jobs = 1;
  sweep_flags.add_to(sweep, /*with_seed=*/false);
  sweep->add_option("--seeds", seeds_text, "Comma-separated seed list");
  sweep->add_option("--jobs", jobs, "Parallel workers");
  sweep->callback([&]() {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(seeds_text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) seeds.push_back(std::stoull(item));
    }
    slu::ParseOptions opt = sweep_flags.corpus.options();
    slu::Corpus train_corpus = slu::load_corpus_dir(sweep_flags.train_dir, opt);
    slu::Corpus test_corpus = slu::load_corpus_dir(sweep_flags.test_dir, opt);
    slu::EvalResult result = slu::seed_sweep(train_corpus, test_corpus,
                                             sweep_flags.model_cfg,
                                             sweep_flags.finalize_train_cfg(), seeds, jobs);
    std::filesystem::create_directories(sweep_flags.out_dir);
    write_file(std::filesystem::path(sweep_flags.out_dir) / "metrics.json",
               result.to_json() + "\n");
    std::cout << "slot_f1=" << result.slot_f1_mean << "+/-" << result.slot_f1_std
              << " intent_acc=" << result.intent_acc_mean << "+/-"
              << result.intent_acc_std << std::endl;
  });

  // attn
  auto* attn = app.add_subcommand("attn", "Dump final-layer attention");
  std::string attn_ckpt, attn_utt, attn_out;
  bool per_head = false;
  attn->add_option("--checkpoint", attn_ckpt, "Checkpoint file")->required();
  attn->add_option("--utterance", attn_utt, "Utterance text")->required();
  attn->add_option("--out", attn_out, "Output path prefix")->required();
  attn->add_flag("--per-head", per_head, "Also write the per-head JSON");
  attn->callback([&]() {
    slu::LoadedCheckpoint ckpt = slu::load_checkpoint(attn_ckpt);
    slu::AttentionDump dump =
        slu::dump_attention(ckpt.model, ckpt.vocab, ckpt.lowercase, attn_utt);
    write_file(attn_out + ".csv", slu::attention_to_csv(dump));
    if (per_head) {
      write_file(attn_out + ".per_head.json", slu::attention_per_head_json(dump) + "\n");
    }
    std::cout << "tokens=" << dump.tokens.size() << std::endl;
  });

  // significance
  auto* sig = app.add_subcommand("significance", "Welch t-test over two sweeps");
  std::string sig_a, sig_b, sig_metric = "slot_f1";
  sig->add_option("--a", sig_a, "First sweep metrics.json")->required();
  sig->add_option("--b", sig_b, "Second sweep metrics.json")->required();
  sig->add_option("--metric", sig_metric, "slot_f1 or intent_acc")
      ->check(CLI::IsMember({"slot_f1", "intent_acc"}));
  sig->callback([&]() {
    auto load_metric = [&](const std::string& path) {
      nlohmann::json j = nlohmann::json::parse(read_file(path));
      std::vector<double> xs;
      for (const auto& entry : j.at("per_seed")) {
        xs.push_back(entry.at(sig_metric).get<double>());
      }
      return xs;
    };
    std::vector<double> a = load_metric(sig_a);
    std::vector<double> b = load_metric(sig_b);
    double p = slu::welch_p_value(a, b);
    nlohmann::json j;
    j["metric"] = sig_metric;
    j["p_value"] = p;
    j["mean_a"] = slu::mean(a);
    j["mean_b"] = slu::mean(b);
    j["n_a"] = a.size();
    j["n_b"] = b.size();
    std::cout << j.dump() << std::endl;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);  // prints the usage message
    return code == 0 ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const slu::Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
}
