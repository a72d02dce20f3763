// SPDX-License-Identifier: Apache-2.0
// hopper: train, evaluate and query scene-graph walking agents.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "hopper/agent/checkpoint.hpp"
#include "hopper/harness/gradcheck.hpp"
#include "hopper/harness/metrics.hpp"
#include "hopper/harness/pipeline.hpp"
#include "hopper/harness/synth.hpp"

using namespace hopper;

namespace {

struct TrainArgs {
  std::string data, vectors, out = "run";
  std::string precision = "float";
  int dim = 0;
  int hidden = 300;
  TrainConfig cfg;
};

struct EvalArgs {
  std::string checkpoint, data, report;
  int beam = 20;
  bool traces = false;
};

struct InferArgs {
  std::string checkpoint, graph, graph_id, question;
  int beam = 20;
  bool trace = false;
};

template <typename S>
int run_train(const TrainArgs& a) {
  auto data = load_dataset(a.data);
  auto table = load_word_vectors<S>(a.vectors, a.dim);
  ModelConfig mc;
  mc.hidden = a.hidden;
  mc.seed = a.cfg.seed;
  auto model = build_model(data, table, mc);
  auto cfg = a.cfg;
  cfg.out_dir = a.out;
  std::cerr << "training on " << data.records.size() << " questions, " << data.graphs.size() << " graphs, "
            << model->params().count() << " trainable parameters\n";
  train(*model, training_examples(data), cfg, [](const EpochMetrics& m) {
    std::fprintf(stderr, "epoch %3d  reward %.4f  entropy %.4f  loss %.5f  baseline %.4f  beta %.5f\n", m.epoch,
                 m.mean_reward, m.mean_entropy, m.loss, m.baseline, m.entropy_weight);
  });
  if (cfg.epochs == 0) {
    std::filesystem::create_directories(a.out);
    save_checkpoint(std::filesystem::path(a.out) / "checkpoint.bin", *model, TrainerState<S>{},
                    nlohmann::json{{"train", cfg}});
  }
  std::cout << (std::filesystem::path(a.out) / "checkpoint.bin").string() << "\n";
  return 0;
}

EvalOptions eval_options(const nlohmann::json& extra, int beam) {
  EvalOptions opt;
  opt.beam = beam;
  if (extra.contains("train")) {
    const auto& t = extra.at("train");
    opt.steps_query = t.value("steps_query", opt.steps_query);
    opt.steps_binary = t.value("steps_binary", opt.steps_binary);
    opt.reset = t.value("reset", opt.reset);
  }
  return opt;
}

template <typename S>
int run_eval(const EvalArgs& a) {
  auto ck = load_checkpoint<S>(a.checkpoint);
  auto data = load_dataset(a.data);
  auto opt = eval_options(ck.extra, a.beam);
  opt.traces = a.traces;
  auto report = evaluate(*ck.model, data, opt);
  std::cout << report_table(report);
  if (!a.report.empty()) {
    std::ofstream out(a.report, std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write " + a.report);
    out << report_json(report, a.traces).dump(2) << "\n";
  }
  return 0;
}

template <typename S>
int run_infer(const InferArgs& a) {
  auto ck = load_checkpoint<S>(a.checkpoint);
  std::vector<std::string> warnings;
  auto graphs = load_scene_graph_file(a.graph, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  if (graphs.empty()) throw Error(Errc::graph_empty, a.graph + " holds no scene graph");
  const SceneGraph* open = nullptr;
  if (!a.graph_id.empty()) {
    auto it = graphs.find(a.graph_id);
    if (it == graphs.end()) throw Error(Errc::lookup, "no graph " + a.graph_id + " in " + a.graph);
    open = &it->second;
  } else if (graphs.size() == 1) {
    open = &graphs.begin()->second;
  } else {
    throw Error(Errc::config, a.graph + " holds " + std::to_string(graphs.size()) + " graphs; pick one with --graph-id");
  }
  const auto tokens = tokenize(a.question);
  const auto type = ck.model->classify(tokens);
  const auto sg = attach_auxiliary(close_graph(*open), type);
  const auto opt = eval_options(ck.extra, a.beam);
  const auto paths = beam_search(*ck.model, sg, tokens, opt.schedule(type), a.beam);
  const auto ans = answer(paths, type, sg);
  std::cout << "type: " << to_string(type) << "\n";
  std::cout << "answer: " << (ans.answered ? ans.answer : "<none>") << "\n";
  if (a.trace) {
    const auto shown = std::min<std::size_t>(paths.size(), 3);
    for (std::size_t i = 0; i < shown; ++i) {
      std::printf("path %zu  logp %.4f%s\n", i + 1, paths[i].logp, static_cast<int>(i) == ans.path ? "  <- answer" : "");
      std::cout << format_trace(paths[i], sg);
    }
  }
  return 0;
}

template <typename S>
int run_params(const std::string& checkpoint) {
  auto ck = load_checkpoint<S>(checkpoint);
  std::size_t total = 0;
  for (const auto& [module, n] : ck.model->module_counts()) {
    std::printf("%-12s %12zu\n", module.c_str(), n);
    total += n;
  }
  std::printf("%-12s %12zu\n", "total", total);
  std::size_t on_disk = 0;
  for (const auto& [_, n] : checkpoint_tensor_sizes(checkpoint)) on_disk += n;
  std::printf("%-12s %12zu\n", "checkpoint", on_disk);
  if (on_disk != total) {
    std::fprintf(stderr, "error: module counts and checkpoint tensors disagree\n");
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-hop question answering over scene graphs with a policy-gradient walker"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a policy on a dataset directory");
  train_cmd->add_option("--data", ta.data, "directory with questions.jsonl and scene_graphs.json")->required();
  train_cmd->add_option("--vectors", ta.vectors, "word vectors, one word and its values per line")->required();
  train_cmd->add_option("--epochs", ta.cfg.epochs, "training epochs")->capture_default_str();
  train_cmd->add_option("--batch", ta.cfg.batch, "questions per optimizer step")->capture_default_str();
  train_cmd->add_option("--rollouts", ta.cfg.rollouts, "sampled walks per question")->capture_default_str();
  train_cmd->add_option("--lr", ta.cfg.learning_rate, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--gamma", ta.cfg.gamma, "reward discount")->capture_default_str();
  train_cmd->add_option("--entropy", ta.cfg.entropy, "initial entropy weight")->capture_default_str();
  train_cmd->add_option("--entropy-decay", ta.cfg.entropy_decay, "entropy weight decay per step")->capture_default_str();
  train_cmd->add_option("--baseline-decay", ta.cfg.baseline_decay, "moving-average baseline decay")
      ->capture_default_str();
  train_cmd->add_option("--steps-query", ta.cfg.steps_query, "episode length for open questions")->capture_default_str();
  train_cmd->add_option("--steps-binary", ta.cfg.steps_binary, "episode length for yes/no questions")
      ->capture_default_str();
  train_cmd->add_option("--reset", ta.cfg.reset, "return to the hub every this many steps (yes/no)")
      ->capture_default_str();
  train_cmd->add_option("--seed", ta.cfg.seed, "random seed")->capture_default_str();
  train_cmd->add_option("--out", ta.out, "output directory")->capture_default_str();
  train_cmd->add_option("--precision", ta.precision, "float or double")
      ->check(CLI::IsMember({"float", "double"}))
      ->capture_default_str();
  train_cmd->add_option("--dim", ta.dim, "word vector width (0: read from the file)")->capture_default_str();
  train_cmd->add_option("--hidden", ta.hidden, "LSTM hidden size")->capture_default_str();
  train_cmd->add_option("--classifier-epochs", ta.cfg.classifier_epochs, "question classifier pretraining epochs")
      ->capture_default_str();

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a dataset directory");
  eval_cmd->add_option("--checkpoint", ea.checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--data", ea.data, "dataset directory")->required();
  eval_cmd->add_option("--beam", ea.beam, "beam width")->capture_default_str();
  eval_cmd->add_option("--report", ea.report, "write the JSON report here");
  eval_cmd->add_flag("--traces", ea.traces, "include per-question path traces in the report");

  InferArgs ia;
  auto* infer_cmd = app.add_subcommand("infer", "answer one question about one scene graph");
  infer_cmd->add_option("--checkpoint", ia.checkpoint, "checkpoint file")->required();
  infer_cmd->add_option("--graph", ia.graph, "scene graph file (GQA layout)")->required();
  infer_cmd->add_option("--graph-id,--image", ia.graph_id, "graph key when the file holds several");
  infer_cmd->add_option("--question", ia.question, "question text")->required();
  infer_cmd->add_option("--beam", ia.beam, "beam width")->capture_default_str();
  infer_cmd->add_flag("--trace", ia.trace, "print the best paths step by step");

  std::uint64_t gc_seed = 0;
  double gc_tol = 1e-4;
  int gc_dim = 8, gc_hidden = 8;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every trainable tensor");
  gc_cmd->add_option("--seed", gc_seed, "random seed")->capture_default_str();
  gc_cmd->add_option("--tolerance", gc_tol, "largest accepted relative error")->capture_default_str();
  gc_cmd->add_option("--dim", gc_dim, "embedding width")->capture_default_str();
  gc_cmd->add_option("--hidden", gc_hidden, "LSTM hidden size")->capture_default_str();

  std::string synth_spec, synth_out = "synthetic";
  std::uint64_t synth_seed = 0;
  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_cmd->add_option("--spec", synth_spec, "JSON generator spec")->required();
  synth_cmd->add_option("--seed", synth_seed, "random seed")->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "output directory")->capture_default_str();

  std::string params_ck;
  auto* params_cmd = app.add_subcommand("params", "per-module trainable parameter counts");
  params_cmd->add_option("--checkpoint", params_ck, "checkpoint file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      ta.cfg.validate();
      return ta.precision == "double" ? run_train<double>(ta) : run_train<float>(ta);
    }
    if (*eval_cmd) {
      return checkpoint_scalar_size(ea.checkpoint) == 8 ? run_eval<double>(ea) : run_eval<float>(ea);
    }
    if (*infer_cmd) {
      return checkpoint_scalar_size(ia.checkpoint) == 8 ? run_infer<double>(ia) : run_infer<float>(ia);
    }
    if (*gc_cmd) {
      PipelineCheckOptions opt;
      opt.seed = gc_seed;
      opt.dim = gc_dim;
      opt.hidden = gc_hidden;
      const auto r = pipeline_gradcheck(opt);
      std::printf("checked %zu coordinates\n", r.coordinates);
      std::printf("max relative error %.3e (%s)\n", r.max_rel_error, r.worst.tensor.c_str());
      if (!r.kinks.empty()) std::printf("skipped %zu coordinates at non-differentiable points\n", r.kinks.size());
      if (!r.passed(gc_tol)) {
        std::printf("FAILED: tolerance %.1e\n", gc_tol);
        return 1;
      }
      std::printf("ok: below tolerance %.1e\n", gc_tol);
      return 0;
    }
    if (*synth_cmd) {
      std::ifstream in(synth_spec);
      if (!in) throw Error(Errc::io, "cannot open " + synth_spec);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::parse, synth_spec + ": " + e.what());
      }
      auto ds = generate_synthetic_tasks(synth_spec_from_json(j), synth_seed);
      write_synthetic(ds, synth_out);
      std::cout << ds.data.records.size() << " questions over " << ds.data.graphs.size() << " graphs in " << synth_out
                << "\n";
      return 0;
    }
    if (*params_cmd) {
      return checkpoint_scalar_size(params_ck) == 8 ? run_params<double>(params_ck) : run_params<float>(params_ck);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
