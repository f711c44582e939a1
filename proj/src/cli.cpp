#include "purex/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "purex/evaluation.hpp"
#include "purex/synthetic.hpp"
#include "purex/trainer.hpp"

namespace purex {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* const kPathKeys[] = {"corpus", "relations", "embeddings", "output_dir"};

json read_json_file(const std::string& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw DataError(std::string("cannot open ") + what + " " + path);
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError(std::string(what) + " " + path + " is not valid JSON");
  return doc;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << text;
  if (!out) throw DataError("failed writing " + path);
}

std::string jsonl(const std::vector<json>& rows) {
  std::string text;
  for (const auto& r : rows) text += r.dump() + "\n";
  return text;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir + ": " + ec.message());
}

struct Globals {
  std::optional<std::uint64_t> seed;
  int precision = 32;
  bool quiet = false;
};

struct LoadedCorpus {
  std::vector<Bag> bags;
  LoadReport report;
};

LoadedCorpus read_bags(const std::string& path, const RelationInventory& relations, Vocabulary& vocab,
                       bool grow) {
  LoadOptions opts;
  opts.grow_vocabulary = grow;
  Corpus corpus = load_corpus(path, CorpusFormat::JsonLines, relations, vocab, opts);
  if (corpus.instances.empty()) throw DataError("corpus " + path + " has no usable sentences");
  return {build_bags(corpus.instances), corpus.report};
}

void report_load(std::ostream& out, const std::string& path, const LoadReport& r, std::size_t bags) {
  out << path << ": " << r.loaded << " sentences in " << bags << " bags";
  if (r.skipped) out << ", " << r.skipped << " lines skipped";
  if (r.unknown_relations) out << ", " << r.unknown_relations << " unknown relations mapped to NA";
  out << '\n';
}

// ---------------------------------------------------------------------------

int cmd_gen_synth(const Globals& g, const std::string& spec_path, const std::string& out_dir, std::ostream& out) {
  SyntheticSpec spec = spec_path.empty() ? SyntheticSpec{} : parse_synthetic_spec(read_json_file(spec_path, "spec"));
  if (g.seed) spec.seed = *g.seed;
  ensure_dir(out_dir);
  const SyntheticCorpus corpus = gen_synthetic(spec);
  const SyntheticFiles files = write_synthetic(corpus, out_dir);
  write_text((fs::path(out_dir) / "spec.json").string(), to_json(spec).dump(2) + "\n");
  if (!g.quiet) {
    std::size_t true_pos = 0;
    for (const auto& r : corpus.records) true_pos += r.is_true_positive ? 1 : 0;
    out << "relations: " << corpus.relations.size() << " (including NA)\n"
        << "bags: " << corpus.n_bags << '\n'
        << "sentences: " << corpus.records.size() << " (train " << files.train_lines << ", test "
        << files.test_lines << ")\n"
        << "true-positive rate: " << std::setprecision(4)
        << static_cast<double>(true_pos) / static_cast<double>(std::max<std::size_t>(1, corpus.records.size()))
        << '\n';
  }
  return 0;
}

template <typename Scalar>
int cmd_train(const Globals& g, const std::string& config_path, const std::string& out_override,
              const std::string& resume, int stop_after, std::ostream& out) {
  RunConfig rc = run_config_from_json(read_json_file(config_path, "config"));
  if (g.seed) rc.train.seed = *g.seed;
  if (!out_override.empty()) rc.output_dir = out_override;
  if (rc.output_dir.empty()) throw ConfigError("config: output_dir is required");
  if (rc.corpus.empty() || rc.relations.empty()) throw ConfigError("config: corpus and relations are required");
  ensure_dir(rc.output_dir);
  const fs::path dir(rc.output_dir);
  write_text((dir / "config.json").string(), to_json(rc).dump(2) + "\n");

  const RelationInventory relations = RelationInventory::load(rc.relations);
  Vocabulary vocab;
  LoadedCorpus data = read_bags(rc.corpus, relations, vocab, true);
  if (!g.quiet) report_load(out, rc.corpus, data.report, data.bags.size());

  std::optional<Trainer<Scalar>> trainer;
  if (!resume.empty()) {
    const Checkpoint ckpt = load_checkpoint(resume);
    if (checkpoint_vocabulary(ckpt).tokens() != vocab.tokens() ||
        checkpoint_relations(ckpt).names() != relations.names()) {
      throw DataError("checkpoint " + resume + " was trained on a different corpus or relation inventory");
    }
    trainer.emplace(Trainer<Scalar>::restore(ckpt, std::move(data.bags)));
  } else {
    EmbeddingLoadReport emb;
    Model<Scalar> model = build_model<Scalar>(rc.train, vocab, relations.size(), rc.embeddings, &emb);
    if (!g.quiet && !rc.embeddings.empty()) {
      out << rc.embeddings << ": " << emb.from_file << " vectors loaded, " << emb.random << " random\n";
    }
    trainer.emplace(rc.train, std::move(model), std::move(data.bags));
  }

  const std::string metrics_path = (dir / "metrics.jsonl").string();
  auto write_metrics = [&] {
    std::vector<json> rows;
    for (const auto& h : trainer->history()) rows.push_back(to_json(h));
    write_text(metrics_path, jsonl(rows));
  };
  write_metrics();
  while (!trainer->finished() && (stop_after < 0 || trainer->epoch() < stop_after)) {
    const EpochLog& log = trainer->run_epoch();
    write_metrics();
    if (!g.quiet) {
      out << "epoch " << log.epoch << " [" << log.phase << "] loss " << std::setprecision(5) << log.total
          << " val " << log.val_loss;
      if (log.phase == "joint" && trainer->config().uses_selector()) out << " reward " << log.mean_reward;
      out << (log.best ? " *" : "") << '\n';
    }
  }
  save_checkpoint(trainer->to_checkpoint(vocab, relations), (dir / "checkpoint.bin").string());
  if (!g.quiet) out << "checkpoint written to " << (dir / "checkpoint.bin").string() << '\n';
  return 0;
}

struct Evaluated {
  Checkpoint ckpt;
  RelationInventory relations;
  std::vector<Bag> bags;
};

Evaluated load_for_eval(const std::string& checkpoint, const std::string& corpus) {
  Evaluated e{load_checkpoint(checkpoint), {}, {}};
  e.relations = checkpoint_relations(e.ckpt);
  Vocabulary vocab = checkpoint_vocabulary(e.ckpt);
  e.bags = read_bags(corpus, e.relations, vocab, false).bags;
  return e;
}

template <typename Scalar>
int cmd_eval(const Globals& g, const std::string& checkpoint, const std::string& corpus,
             const std::string& predictions, const std::string& sidecar, const std::string& out_dir,
             std::ostream& out) {
  Evaluated e = load_for_eval(checkpoint, corpus);
  const Model<Scalar> model = checkpoint_model<Scalar>(e.ckpt);
  PredictionList preds;
  if (!predictions.empty()) {
    std::ifstream in(predictions);
    if (!in) throw DataError("cannot open predictions " + predictions);
    preds = read_prediction_dump(in, e.relations);
  } else {
    preds = tuple_predictions(predict_bags(model, e.bags));
  }
  const HeldOutMetrics m = held_out_metrics(preds, gold_from_bags(e.bags));
  json doc = to_json(m, to_string(model.config.ablation));
  if (!sidecar.empty()) {
    const SelectionStats s = selector_accuracy(e.bags, greedy_splits(model, e.bags), load_sidecar(sidecar));
    doc["selector"] = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1},
                       {"selected", s.selected}, {"gold", s.gold}, {"sentences", s.total}};
  }
  ensure_dir(out_dir);
  write_pr_csv(m.curve, (fs::path(out_dir) / "pr.csv").string());
  write_text((fs::path(out_dir) / "metrics.json").string(), doc.dump(2) + "\n");
  if (!g.quiet) out << doc.dump(2) << '\n';
  return 0;
}

void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
  } else {
    write_text(path, text);
  }
}

template <typename Scalar>
int cmd_predict(const std::string& checkpoint, const std::string& corpus, const std::string& out_path,
                std::ostream& out) {
  Evaluated e = load_for_eval(checkpoint, corpus);
  const Model<Scalar> model = checkpoint_model<Scalar>(e.ckpt);
  emit(out_path, jsonl(prediction_dump(predict_bags(model, e.bags), e.relations)), out);
  return 0;
}

template <typename Scalar>
int cmd_select(const std::string& checkpoint, const std::string& corpus, const std::string& relation,
               const std::string& out_path, std::ostream& out) {
  Evaluated e = load_for_eval(checkpoint, corpus);
  const Model<Scalar> model = checkpoint_model<Scalar>(e.ckpt);
  std::optional<int> query;
  if (!relation.empty()) {
    query = e.relations.id(relation);
    if (!query) throw ConfigError("unknown relation \"" + relation + "\"");
  }
  std::vector<json> rows;
  for (const Bag& bag : e.bags) {
    const int r = query.value_or(bag.distant_label);
    const auto xs = model.encode_bag(bag);
    auto row = [&](int sentence, Action a, const json& q) {
      rows.push_back(json{
          {"bag_key", {{"head", bag.key.head}, {"tail", bag.key.tail}, {"label", e.relations.name(bag.distant_label)}}},
          {"relation", e.relations.name(r)},
          {"sentence_index", sentence},
          {"action", to_string(a)},
          {"q_values", q},
      });
    };
    if (!model.selector) {
      for (std::size_t i = 0; i < xs.size(); ++i) row(static_cast<int>(i), Action::Positive, nullptr);
      continue;
    }
    const Episode<Scalar> ep = select_bag(xs, r, *model.selector, ActMode::greedy());
    for (const auto& d : ep.decisions) {
      row(d.sentence, d.action, json::array({static_cast<double>(d.q[0]), static_cast<double>(d.q[1])}));
    }
  }
  emit(out_path, jsonl(rows), out);
  return 0;
}

}  // namespace

RunConfig run_config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig rc;
  json train = doc;
  for (const char* key : kPathKeys) {
    if (!doc.contains(key)) continue;
    if (!doc[key].is_string()) throw ConfigError(std::string("config: key \"") + key + "\" must be a string");
    train.erase(key);
  }
  rc.train = train_config_from_json(train);
  rc.corpus = doc.value("corpus", "");
  rc.relations = doc.value("relations", "");
  rc.embeddings = doc.value("embeddings", "");
  rc.output_dir = doc.value("output_dir", "");
  return rc;
}

json to_json(const RunConfig& rc) {
  json doc = to_json(rc.train);
  doc["corpus"] = rc.corpus;
  doc["relations"] = rc.relations;
  doc["embeddings"] = rc.embeddings;
  doc["output_dir"] = rc.output_dir;
  return doc;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"purex: distant-supervision relation extraction with PU learning and an RL sentence selector"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "override the seed of the config or spec");
  app.add_option("--precision", g.precision, "floating-point width")->check(CLI::IsMember({32, 64}));
  app.add_flag("--quiet", g.quiet, "suppress progress output");

  std::string spec_path, out_dir, config_path, resume, checkpoint, corpus, predictions, sidecar, relation;
  int stop_after = -1;

  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic corpus with ground-truth sidecars");
  gen->add_option("spec", spec_path, "JSON spec (defaults when omitted)");
  gen->add_option("-o,--out", out_dir, "output directory")->required();

  auto* train = app.add_subcommand("train", "train a model from a run config");
  train->add_option("config", config_path, "run config JSON")->required();
  train->add_option("-o,--out", out_dir, "output directory (overrides output_dir)");
  train->add_option("--resume", resume, "continue from a checkpoint");
  train->add_option("--stop-after", stop_after, "stop once this many epochs are complete");

  auto* eval = app.add_subcommand("eval", "held-out PR curve and P@N");
  eval->add_option("checkpoint", checkpoint)->required();
  eval->add_option("corpus", corpus)->required();
  eval->add_option("-o,--out", out_dir, "output directory")->required();
  eval->add_option("--predictions", predictions, "rank a prediction dump instead of re-predicting");
  eval->add_option("--sidecar", sidecar, "ground-truth sidecar for selector accuracy");

  auto* predict = app.add_subcommand("predict", "score every bag and relation");
  predict->add_option("checkpoint", checkpoint)->required();
  predict->add_option("corpus", corpus)->required();
  predict->add_option("-o,--out", out_dir, "output file (stdout when omitted)");

  auto* select = app.add_subcommand("select", "dump per-sentence selector decisions");
  select->add_option("checkpoint", checkpoint)->required();
  select->add_option("corpus", corpus)->required();
  select->add_option("--relation", relation, "query relation (default: each bag's distant label)");
  select->add_option("-o,--out", out_dir, "output file (stdout when omitted)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  if (*seed_opt) g.seed = seed;

  try {
    const bool f32 = g.precision == 32;
    if (gen->parsed()) return cmd_gen_synth(g, spec_path, out_dir, out);
    if (train->parsed()) {
      return f32 ? cmd_train<float>(g, config_path, out_dir, resume, stop_after, out)
                 : cmd_train<double>(g, config_path, out_dir, resume, stop_after, out);
    }
    if (eval->parsed()) {
      return f32 ? cmd_eval<float>(g, checkpoint, corpus, predictions, sidecar, out_dir, out)
                 : cmd_eval<double>(g, checkpoint, corpus, predictions, sidecar, out_dir, out);
    }
    if (predict->parsed()) {
      return f32 ? cmd_predict<float>(checkpoint, corpus, out_dir, out)
                 : cmd_predict<double>(checkpoint, corpus, out_dir, out);
    }
    if (select->parsed()) {
      return f32 ? cmd_select<float>(checkpoint, corpus, relation, out_dir, out)
                 : cmd_select<double>(checkpoint, corpus, relation, out_dir, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return 4;
  } catch (const nlohmann::json::exception& e) {
    err << "data error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}

}  // namespace purex
