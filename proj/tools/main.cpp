// mcrc: command line front end for corpus generation, both training stages,
// evaluation, baselines and single-document prediction.

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mcrc/bundle.hpp"
#include "mcrc/config.hpp"
#include "mcrc/corpus.hpp"
#include "mcrc/error.hpp"
#include "mcrc/evaluation.hpp"
#include "mcrc/trainer.hpp"

namespace fs = std::filesystem;
using namespace mcrc;

namespace {

struct ConfigFlags {
  std::string file;
  std::vector<std::string> settings;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--config", file, "key=value config file");
    cmd->add_option("--set", settings, "override one setting, key=value (repeatable)");
  }

  TrainConfig resolve(TrainConfig base = {}) const {
    TrainConfig c = file.empty() ? base : load_config(file, base);
    for (const auto& s : settings) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      apply_setting(c, s.substr(0, eq), s.substr(eq + 1));
    }
    c.validate();
    return c;
  }
};

std::vector<Instance> load_split(const fs::path& data, const std::string& split) {
  const fs::path dir = fs::is_directory(data / split) ? data / split : data;
  if (!fs::is_directory(dir)) throw DataError("no data directory at " + dir.string());
  auto out = load_race_directory(dir);
  if (out.empty()) throw DataError("no instances under " + dir.string());
  return out;
}

void write_report(const EvalReport& report, const std::string& path) {
  std::cout << report.to_table();
  if (path.empty()) return;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot write report " + path);
  f << report.to_json();
}

std::ofstream open_log(const fs::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot write log " + path.string());
  return f;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"generate-then-match multiple-choice reader"};
  app.require_subcommand(1);

  // gen-toy
  std::string toy_out;
  std::size_t toy_passages = 200;
  std::uint64_t toy_seed = 7;
  double toy_dev = 0.2, toy_test = 0.0;
  auto* gen = app.add_subcommand("gen-toy", "write the synthetic colour corpus in RACE layout");
  gen->add_option("--out", toy_out, "output directory")->required();
  gen->add_option("--passages", toy_passages, "number of passages");
  gen->add_option("--seed", toy_seed, "generator seed");
  gen->add_option("--dev-fraction", toy_dev, "share of passages for dev");
  gen->add_option("--test-fraction", toy_test, "share of passages for test");

  // train-synthesis
  std::string data, embeddings, out, checkpoint;
  ConfigFlags s1_flags;
  auto* s1 = app.add_subcommand("train-synthesis", "stage one: extraction and answer synthesis");
  s1->add_option("--data", data, "corpus root with train/ and dev/")->required();
  s1->add_option("--embeddings", embeddings, "pretrained word vectors (text)");
  s1->add_option("--out", out, "model directory to write")->required();
  s1_flags.add_to(s1);

  // train-selection
  ConfigFlags s2_flags;
  auto* s2 = app.add_subcommand("train-selection", "stage two: bilinear option selection");
  s2->add_option("--data", data, "corpus root with train/ and dev/")->required();
  s2->add_option("--checkpoint", checkpoint, "stage-one model directory")->required();
  s2->add_option("--embeddings", embeddings, "unused: vectors come from the stage-one model");
  s2->add_option("--out", out, "model directory to write")->required();
  s2_flags.add_to(s2);

  // eval
  std::string split = "test", report_path;
  std::size_t workers = 1;
  auto* ev = app.add_subcommand("eval", "evaluate a trained model");
  ev->add_option("--checkpoint", checkpoint, "model directory")->required();
  ev->add_option("--data", data, "corpus root or directory of documents")->required();
  ev->add_option("--split", split, "split under the corpus root");
  ev->add_option("--report", report_path, "write the JSON report here");
  ev->add_option("--workers", workers, "concurrent evaluation shards");

  // baseline
  std::string kind = "random";
  std::uint64_t baseline_seed = 1;
  std::size_t window = 10;
  auto* bl = app.add_subcommand("baseline", "random or sliding-window baseline");
  bl->add_option("--kind", kind, "random | sliding-window")->check(CLI::IsMember({"random", "sliding-window"}));
  bl->add_option("--data", data, "corpus root or directory of documents")->required();
  bl->add_option("--split", split, "split under the corpus root");
  bl->add_option("--seed", baseline_seed, "seed of the random baseline");
  bl->add_option("--window", window, "sliding window width");
  bl->add_option("--report", report_path, "write the JSON report here");

  // predict
  std::string input;
  auto* pr = app.add_subcommand("predict", "answer the questions of one RACE JSON document");
  pr->add_option("--checkpoint", checkpoint, "model directory")->required();
  pr->add_option("--input", input, "RACE JSON document")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      auto docs = generate_toy_corpus(toy_passages, toy_seed);
      write_toy_corpus(toy_out, docs, toy_dev, toy_test);
      std::cout << "wrote " << docs.size() << " passages to " << toy_out << '\n';
    } else if (*s1) {
      const TrainConfig config = s1_flags.resolve();
      std::optional<fs::path> vectors;
      if (!embeddings.empty()) vectors = embeddings;
      Experiment ex = prepare_experiment(load_splits(data), config, vectors);
      std::cout << "vocabulary " << ex.vocab.size() << ", train " << ex.train.size() << ", dev " << ex.dev.size()
                << '\n';
      if (ex.embeddings) std::cout << "embedding coverage " << ex.embeddings->coverage() << '\n';
      ReaderModel model(config.model(), ex.vocab, ex.chars, ex.embeddings ? &*ex.embeddings : nullptr, config.seed);
      fs::create_directories(out);
      auto log_file = open_log(fs::path(out) / "stage1_log.jsonl");
      TrainLog log = train_synthesis_stage(model, config, ex.train, ex.dev, {&log_file, std::nullopt});
      save_model(model, config, out);
      std::cout << "stage one: " << log.epochs.size() - 1 << " epochs, best " << log.best_epoch << ", exact generation "
                << exact_generation_rate(model, ex.train, config.batch_size) << " (train)\n";
    } else if (*s2) {
      if (!embeddings.empty()) std::cerr << "note: --embeddings ignored; the stage-one model carries its vectors\n";
      LoadedModel loaded = load_model(checkpoint);
      const TrainConfig config = s2_flags.resolve(loaded.config);
      if (config.model().hidden != loaded.config.hidden || config.embed_dim != loaded.config.embed_dim) {
        throw ConfigError("model dimensions cannot change between stages");
      }
      CorpusSplits splits = load_splits(data);
      const auto& vocab = loaded.model->vocabulary();
      Dataset train = make_dataset(std::move(splits.train), vocab, config.max_span);
      Dataset dev = make_dataset(std::move(splits.dev), vocab, config.max_span);
      fs::create_directories(out);
      auto log_file = open_log(fs::path(out) / "stage2_log.jsonl");
      TrainLog log = train_selection_stage(*loaded.model, config, train, dev, {&log_file, std::nullopt});
      save_model(*loaded.model, config, out);
      std::cout << "stage two: " << log.epochs.size() - 1 << " epochs, best " << log.best_epoch << ", dev accuracy "
                << log.epochs[log.best_epoch].dev_accuracy << '\n';
    } else if (*ev) {
      LoadedModel loaded = load_model(checkpoint);
      Dataset d = make_dataset(load_split(data, split), loaded.model->vocabulary(), loaded.config.max_span);
      write_report(evaluate(*loaded.model, d, loaded.config.batch_size, workers), report_path);
    } else if (*bl) {
      auto instances = load_split(data, split);
      write_report(kind == "random" ? random_baseline(instances, baseline_seed)
                                    : sliding_window_baseline(instances, window),
                   report_path);
    } else if (*pr) {
      LoadedModel loaded = load_model(checkpoint);
      std::ifstream f(input);
      if (!f) throw DataError("cannot read " + input);
      std::stringstream ss;
      ss << f.rdbuf();
      std::vector<Instance> instances = parse_race_record(ss.str());
      Dataset d = make_dataset(std::move(instances), loaded.model->vocabulary(), loaded.config.max_span);
      EvalReport r = evaluate(*loaded.model, d, loaded.config.batch_size);
      for (const auto& p : r.predictions) {
        std::cout << p.key << '\t' << kLetters[p.predicted] << '\t' << p.answer << '\n';
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
