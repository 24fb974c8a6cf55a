#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "birdsong/app.hpp"
#include "birdsong/synth.hpp"

using namespace birdsong;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App cli{"Bird song identification pipeline"};
  cli.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  cli.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  cli.add_option("--seed", seed, "Base random seed");
  cli.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  std::string manifest, cache, out;

  auto* pre = cli.add_subcommand("preprocess", "Segment recordings into sound/noise masks");
  pre->add_option("--manifest", manifest, "Corpus manifest CSV");
  pre->add_option("--out", out, "Cache directory for mask files");

  std::optional<int> epochs;
  std::string resume, split = "0.9";
  auto* train = cli.add_subcommand("train", "Train the network from a preprocess cache");
  train->add_option("--manifest", manifest, "Corpus manifest CSV");
  train->add_option("--cache", cache, "Preprocess cache directory");
  train->add_option("--out", out, "Directory for checkpoints and train_log.csv");
  train->add_option("--epochs", epochs, "Total number of epochs")->check(CLI::NonNegativeNumber);
  train->add_option("--resume", resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  train->add_option("--train-split", split, "Training split: full or 0.9")->check(CLI::IsMember({"full", "0.9"}));

  std::vector<std::string> checkpoints;
  auto* predict = cli.add_subcommand("predict", "Predict species for every recording of a manifest");
  predict->add_option("--checkpoint", checkpoints, "Checkpoint file(s); several are ensembled")->required()->check(CLI::ExistingFile);
  predict->add_option("--manifest", manifest, "Manifest of recordings to predict");
  predict->add_option("--out", out, "Prediction CSV")->required();

  std::string predictions, judgments, mode = "main_only", ap_out;
  auto* evaluate = cli.add_subcommand("evaluate", "Score predictions with mean average precision");
  evaluate->add_option("--predictions", predictions, "Prediction CSV")->required()->check(CLI::ExistingFile);
  auto* judg = evaluate->add_option("--judgments", judgments, "Judgment CSV")->check(CLI::ExistingFile);
  evaluate->add_option("--manifest", manifest, "Take main-species judgments from a manifest")->excludes(judg);
  evaluate->add_option("--mode", mode, "main_only or with_background")->check(CLI::IsMember({"main_only", "with_background"}));
  evaluate->add_option("--out", ap_out, "Per-recording AP CSV");

  SynthConfig synth_cfg;
  auto* synth = cli.add_subcommand("synth", "Write a synthetic toy corpus");
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--species", synth_cfg.num_species, "Number of species")->check(CLI::PositiveNumber);
  synth->add_option("--per-species", synth_cfg.recordings_per_species, "Recordings per species")->check(CLI::PositiveNumber);
  synth->add_option("--duration", synth_cfg.duration_s, "Seconds per recording")->check(CLI::PositiveNumber);

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? app::kExitOk : app::kExitUsage;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (seed) cfg.seed = cfg.training.seed = *seed;
    if (threads) cfg.threads = cfg.training.threads = *threads;
    cfg.validate();
    auto pick = [](const std::string& flag, const std::string& from_config, const char* name) {
      const auto& v = flag.empty() ? from_config : flag;
      if (v.empty()) throw ConfigError(std::string("missing ") + name + " (flag or config paths)");
      return fs::path(v);
    };

    if (*pre) {
      app::cmd_preprocess(pick(manifest, cfg.manifest, "--manifest"), pick(out, cfg.cache_dir, "--out"), cfg, std::cerr);
    } else if (*train) {
      app::TrainOptions opts;
      opts.epochs = epochs;
      if (!resume.empty()) opts.resume = resume;
      opts.full_split = split == "full";
      app::cmd_train(pick(manifest, cfg.manifest, "--manifest"), pick(cache, cfg.cache_dir, "--cache"),
                     pick(out, cfg.output_dir, "--out"), cfg, opts, std::cerr);
    } else if (*predict) {
      std::vector<fs::path> paths(checkpoints.begin(), checkpoints.end());
      app::cmd_predict(paths, pick(manifest, cfg.manifest, "--manifest"), out, cfg, std::cerr);
    } else if (*evaluate) {
      std::vector<RelevanceJudgment> js;
      if (!judgments.empty()) js = app::load_judgments(judgments);
      else js = judgments_from_manifest(load_manifest(pick(manifest, cfg.manifest, "--judgments or --manifest")));
      const auto m = mode == "with_background" ? MapMode::WithBackground : MapMode::MainOnly;
      app::cmd_evaluate(predictions, js, m, ap_out.empty() ? std::nullopt : std::optional<fs::path>(ap_out), std::cout);
    } else if (*synth) {
      synth_cfg.seed = cfg.seed;
      synth_cfg.sample_rate = cfg.sample_rate;
      const auto path = write_synthetic_corpus(make_synthetic_corpus(synth_cfg), out);
      std::cerr << "wrote " << path.string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return app::exit_code_for(e);
  }
  return app::kExitOk;
}
