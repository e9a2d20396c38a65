#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dpvqa/config.hpp"
#include "dpvqa/gradcheck.hpp"
#include "dpvqa/synthetic.hpp"
#include "dpvqa/train.hpp"

using namespace dpvqa;

namespace {

RunConfig resolve_config(const std::string& path) {
  RunConfig config = path.empty() ? RunConfig{} : load_config(path);
  apply_env_overrides(config);
  return config;
}

Corpus load_corpus(const std::string& dir, std::size_t workers) {
  if (!std::filesystem::exists(std::filesystem::path(dir) / "manifest.json")) {
    throw FormatError("corpus directory '" + dir + "' has no manifest.json; run `dpvqa generate` first");
  }
  return read_corpus(dir, workers);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-process video QA: relation network + iterative reasoner"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "Build a synthetic corpus");
  std::uint64_t gen_seed = 7;
  std::size_t gen_items = 8000;
  std::size_t gen_per_scene = 8;
  std::string gen_out = "corpus";
  gen->add_option("--seed", gen_seed, "Generator seed")->capture_default_str();
  gen->add_option("--items", gen_items, "Number of QA items")->capture_default_str();
  gen->add_option("--per-scene", gen_per_scene, "Questions per scene")->capture_default_str();
  gen->add_option("--out", gen_out, "Output directory")->capture_default_str();

  auto* tr = app.add_subcommand("train", "Train one model variant");
  std::string tr_config, tr_corpus, tr_out;
  tr->add_option("--config", tr_config, "key=value config file");
  tr->add_option("--corpus", tr_corpus, "Corpus directory (overrides config)");
  tr->add_option("--out", tr_out, "Run directory (overrides config)");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string ev_checkpoint, ev_split = "test", ev_corpus;
  ev->add_option("--checkpoint", ev_checkpoint, "checkpoint.bin from a run")->required();
  ev->add_option("--split", ev_split, "train, val or test")->capture_default_str();
  ev->add_option("--corpus", ev_corpus, "Corpus directory (defaults to the run's)");

  auto* ab = app.add_subcommand("ablate", "Train all seven variants and compare");
  std::string ab_config, ab_corpus, ab_out;
  ab->add_option("--config", ab_config, "Base config file");
  ab->add_option("--corpus", ab_corpus, "Corpus directory (overrides config)");
  ab->add_option("--out", ab_out, "Output directory (overrides config)");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check at toy sizes");
  GradcheckOptions gc_options;
  gc->add_option("--probes", gc_options.probes, "Probes per module")->capture_default_str();
  gc->add_option("--seed", gc_options.seed, "Probe seed")->capture_default_str();
  gc->add_option("--steps", gc_options.steps, "Reasoning steps")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      CorpusConfig cc;
      cc.seed = gen_seed;
      cc.items = gen_items;
      cc.questions_per_scene = gen_per_scene;
      auto corpus = build_corpus(cc);
      write_corpus(gen_out, corpus);
      std::cout << "wrote " << corpus.items.size() << " items over " << corpus.scenes.size()
                << " scenes to " << gen_out << " (temporal majority accuracy "
                << temporal_majority_accuracy(corpus.items) << ")\n";
    } else if (*tr) {
      auto config = resolve_config(tr_config);
      if (!tr_corpus.empty()) config.corpus = tr_corpus;
      if (!tr_out.empty()) config.out = tr_out;
      auto corpus = load_corpus(config.corpus, config.reader_workers);
      auto result = train(config, corpus, [](const MetricsRecord& r) {
        std::cout << r.to_json() << '\n' << std::flush;
      });
      std::cout << "best epoch " << result.best_epoch << ", test accuracy "
                << result.test.accuracy << ", checkpoint " << config.out << "/checkpoint.bin\n";
    } else if (*ev) {
      auto run_dir = std::filesystem::path(ev_checkpoint).parent_path();
      auto config = load_config((run_dir / "config.txt").string());
      auto corpus = load_corpus(ev_corpus.empty() ? config.corpus : ev_corpus,
                                config.reader_workers);
      auto record = evaluate(ev_checkpoint, corpus, parse_split(ev_split));
      std::cout << record.to_json() << '\n';
    } else if (*ab) {
      auto config = resolve_config(ab_config);
      if (!ab_corpus.empty()) config.corpus = ab_corpus;
      if (!ab_out.empty()) config.out = ab_out;
      auto corpus = load_corpus(config.corpus, config.reader_workers);
      auto rows = ablate(config, corpus, &std::cerr);
      std::cout << ablation_table(rows);
    } else if (*gc) {
      auto report = gradcheck(gc_options);
      print_report(std::cout, report);
      return report.passed() ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
