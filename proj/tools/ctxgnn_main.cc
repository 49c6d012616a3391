// ctxgnn command-line front end: ingest, synth, locality, train, eval, recommend.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "ctxgnn/dataset.h"
#include "ctxgnn/eval.h"
#include "ctxgnn/serving.h"
#include "ctxgnn/synth.h"
#include "ctxgnn/trainer.h"

namespace {

using namespace ctxgnn;

constexpr int kUsageError = 1;
constexpr int kDataError = 2;

struct DataArgs {
  std::string schema;
  std::string graph_cache;

  void Add(CLI::App* app) {
    app->add_option("--schema", schema, "dataset manifest (JSON)")->required()->check(CLI::ExistingFile);
    app->add_option("--graph", graph_cache, "prebuilt graph cache from `ingest`");
  }

  Dataset Load() const {
    return graph_cache.empty() ? LoadDataset(schema) : LoadDataset(schema, graph_cache);
  }
};

void WriteText(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path);
  out << text;
}

template <typename Real>
int RunEval(const Dataset& data, const std::string& checkpoint, Split split, bool csv) {
  auto [params, config] = LoadCheckpoint<Real>(checkpoint);
  const ContextGnn<Real> model(data.graph, config.model);
  model.CheckParams(params);
  const EvalReport report = EvaluateSplit(model, params, data.task, split, config.fanouts);
  std::cout << (csv ? FormatEvalCsv(report) : FormatEvalReport(report));
  return 0;
}

template <typename Real>
int RunRecommend(const Dataset& data, const std::string& checkpoint, NodeId user, Timestamp t,
                 std::size_t k) {
  auto [params, config] = LoadCheckpoint<Real>(checkpoint);
  const ContextGnn<Real> model(data.graph, config.model);
  std::cout << FormatRankingCsv(RecommendTopK(model, params, config.fanouts, user, t, k));
  return 0;
}

template <typename Real>
void RunTrain(const Dataset& data, const TrainConfig& config, const std::string& out,
              const std::string& report_path) {
  auto [params, report] = Fit<Real>(data.graph, data.task, config);
  SaveCheckpoint(params, config, out);
  const std::string text = FormatTrainReport(report);
  if (report_path.empty()) {
    std::cout << text;
  } else {
    WriteText(report_path, text);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ContextGNN recommender: data prep, training, evaluation and serving"};
  app.require_subcommand(1);

  DataArgs ingest_data;
  std::string ingest_out;
  auto* ingest = app.add_subcommand("ingest", "build the binary graph cache from tables");
  ingest_data.Add(ingest);
  ingest->add_option("--out", ingest_out, "graph cache path")->required();

  std::string synth_config, synth_out;
  std::optional<std::uint64_t> synth_seed;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset (manifest + CSV tables)");
  synth->add_option("--config", synth_config, "key=value generator settings")->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "override the generator seed");

  DataArgs loc_data;
  std::string loc_split = "test";
  std::optional<std::size_t> loc_k;
  auto* locality = app.add_subcommand("locality", "fraction of future items inside the k-hop past");
  loc_data.Add(locality);
  locality->add_option("--split", loc_split, "val or test")->check(CLI::IsMember({"val", "test"}));
  locality->add_option("--k", loc_k, "hop depth (default: 1, 2 and 3)")->check(CLI::Range(1, 3));

  DataArgs train_data;
  std::string train_config, train_out = "model.ckpt", train_report;
  std::optional<std::uint64_t> train_seed;
  bool train_pair_only = false, train_tower_only = false;
  auto* train = app.add_subcommand("train", "fit a model and write a checkpoint");
  train_data.Add(train);
  train->add_option("--config", train_config, "key=value training config")->check(CLI::ExistingFile);
  train->add_option("--seed", train_seed, "override the config seed");
  train->add_flag("--pair-only", train_pair_only, "ablation: local pair scores only");
  train->add_flag("--tower-only", train_tower_only, "ablation: tower scores only");
  train->add_option("--out", train_out, "checkpoint path");
  train->add_option("--report", train_report, "write the training report here instead of stdout");

  DataArgs eval_data;
  std::string eval_ckpt, eval_split = "test";
  bool eval_csv = false;
  auto* eval = app.add_subcommand("eval", "ranking metrics of a checkpoint on a split");
  eval_data.Add(eval);
  eval->add_option("--checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
  eval->add_option("--split", eval_split, "val or test")->check(CLI::IsMember({"val", "test"}));
  eval->add_flag("--csv", eval_csv, "metric,value rows instead of key=value");

  DataArgs rec_data;
  std::string rec_ckpt;
  NodeId rec_user = 0;
  std::optional<Timestamp> rec_time;
  std::size_t rec_k = 10;
  auto* recommend = app.add_subcommand("recommend", "top-k items for one user as CSV");
  rec_data.Add(recommend);
  recommend->add_option("--checkpoint", rec_ckpt)->required()->check(CLI::ExistingFile);
  recommend->add_option("--user", rec_user, "user id")->required();
  recommend->add_option("--time", rec_time, "seed time (default: test cutoff)");
  recommend->add_option("--k", rec_k, "list length")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (*ingest) {
      const Dataset data = ingest_data.Load();
      SaveGraphCache(data.graph, ingest_out);
      std::cout << "users=" << data.graph.num_users() << " items=" << data.graph.num_items()
                << "\n";
    } else if (*synth) {
      SynthConfig cfg = synth_config.empty() ? SynthConfig{} : LoadSynthConfig(synth_config);
      if (synth_seed) cfg.seed = *synth_seed;
      const SynthData data = GenerateSynthetic(cfg);
      std::filesystem::create_directories(synth_out);
      WriteManifest(synth_out, data.raw);
      std::string labels = "user_id,archetype\n";
      for (std::size_t u = 0; u < data.is_repeater.size(); ++u) {
        labels += std::to_string(u) + (data.is_repeater[u] ? ",repeater\n" : ",explorer\n");
      }
      WriteText((std::filesystem::path(synth_out) / "archetypes.csv").string(), labels);
      std::cout << (std::filesystem::path(synth_out) / "manifest.json").string() << "\n";
    } else if (*locality) {
      const Dataset data = loc_data.Load();
      const Split split = ParseSplit(loc_split);
      for (std::size_t k = 1; k <= 3; ++k) {
        if (loc_k && *loc_k != k) continue;
        std::printf("%s%.4f\n", loc_k ? "" : ("s_" + std::to_string(k) + "=").c_str(),
                    LocalityScore(data.graph, data.task, split, k));
      }
    } else if (*train) {
      TrainConfig config = train_config.empty() ? TrainConfig{} : LoadTrainConfig(train_config);
      if (train_seed) config.seed = *train_seed;
      if (train_pair_only) config.model.pair_only = true;
      if (train_tower_only) config.model.tower_only = true;
      config.Validate();
      const Dataset data = train_data.Load();
      if (config.model.precision == Precision::kFloat32) {
        RunTrain<float>(data, config, train_out, train_report);
      } else {
        RunTrain<double>(data, config, train_out, train_report);
      }
    } else if (*eval) {
      const Dataset data = eval_data.Load();
      const Split split = ParseSplit(eval_split);
      return CheckpointPrecision(eval_ckpt) == Precision::kFloat32
                 ? RunEval<float>(data, eval_ckpt, split, eval_csv)
                 : RunEval<double>(data, eval_ckpt, split, eval_csv);
    } else if (*recommend) {
      const Dataset data = rec_data.Load();
      const Timestamp t = rec_time.value_or(data.task.test_cutoff);
      return CheckpointPrecision(rec_ckpt) == Precision::kFloat32
                 ? RunRecommend<float>(data, rec_ckpt, rec_user, t, rec_k)
                 : RunRecommend<double>(data, rec_ckpt, rec_user, t, rec_k);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == ErrorKind::kInvalidConfig ? kUsageError : kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
  return 0;
}
