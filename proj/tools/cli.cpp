#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rdas/checkpoint.hpp"
#include "rdas/error.hpp"
#include "rdas/graphbuild.hpp"
#include "rdas/kbstore.hpp"

namespace rdas::cli {

namespace fs = std::filesystem;
using nlohmann::json;

harness::Dataset load_dataset(const RunConfig& config) {
  harness::Dataset data;
  const auto seed = config.get_u64("seed");
  const int hops = config.get_int("hops");
  if (config.has_value("synthetic")) {
    if (config.has_value("kb") || config.has_value("qa")) {
      throw UsageError("give either a synthetic spec or kb/qa files, not both");
    }
    auto task = kb::generate_synthetic(kb::load_synthetic_spec(config.get_path("synthetic")), seed);
    data.kb = std::move(task.kb);
    data.train = std::move(task.train);
    data.dev = std::move(task.dev);
  } else if (config.has_value("kb") && config.has_value("qa")) {
    data.kb = kb::load_kb(config.get_path("kb"));
    data.train = kb::load_qa(config.get_path("qa"), data.kb, hops);
    if (config.has_value("dev_qa")) data.dev = kb::load_qa(config.get_path("dev_qa"), data.kb, hops);
  } else {
    throw UsageError("no data: pass --synthetic SPEC or both --kb and --qa");
  }
  harness::ensure_dev_split(data, config.get_double("dev_fraction"), seed);
  return data;
}

namespace {

struct Flags {
  std::string config;
  std::optional<std::string> seed, out, kb, qa, synthetic, checkpoint, relation_node_mode, question, epochs;
  bool no_rn = false;
  bool no_direction = false;
  bool no_de = false;
  std::vector<std::string> sets;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "key=value config file");
  cmd->add_option("--seed", f.seed, "top-level random seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--kb", f.kb, "KB file (subject|relation|object lines)");
  cmd->add_option("--qa", f.qa, "question file (question<TAB>ans1|ans2)");
  cmd->add_option("--synthetic", f.synthetic, "synthetic task spec (key=value)");
  cmd->add_option("--checkpoint", f.checkpoint, "checkpoint file");
  cmd->add_flag("--no-rn", f.no_rn, "drop relation nodes");
  cmd->add_flag("--no-direction", f.no_direction, "keep inside-directed edges");
  cmd->add_flag("--no-de", f.no_de, "zero distance embeddings");
  cmd->add_option("--relation-node-mode", f.relation_node_mode, "instance or type")
      ->check(CLI::IsMember({"instance", "type"}));
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--set", f.sets, "override any config key (key=value)");
}

RunConfig resolve(const Flags& f) {
  RunConfig cfg;
  if (!f.config.empty()) cfg.merge_file(f.config);
  for (const auto& kv : f.sets) cfg.merge_text(kv, "--set");
  auto put = [&](const char* key, const std::optional<std::string>& v) {
    if (v) cfg.set(key, *v);
  };
  put("seed", f.seed);
  put("out", f.out);
  put("kb", f.kb);
  put("qa", f.qa);
  put("synthetic", f.synthetic);
  put("checkpoint", f.checkpoint);
  put("relation_node_mode", f.relation_node_mode);
  put("question", f.question);
  put("epochs", f.epochs);
  if (f.no_rn) cfg.set("relation_nodes", "false");
  if (f.no_direction) cfg.set("direction", "false");
  if (f.no_de) cfg.set("distance_embedding", "false");
  return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

std::optional<fs::path> output_dir(const RunConfig& cfg, bool required, std::string_view command) {
  if (!cfg.has_value("out")) {
    if (required) throw UsageError(std::string(command) + " needs --out");
    return std::nullopt;
  }
  fs::path dir = cfg.get_path("out");
  fs::create_directories(dir);
  return dir;
}

void write_config(const fs::path& dir, const RunConfig& cfg, std::string_view command,
                  const std::string& name = "config.txt") {
  write_file(dir / name, "# rdas " + std::string(command) + "\n" + cfg.format());
}

void warn_conflicts(const RunConfig& cfg, std::ostream& err) {
  if (!cfg.get_bool("relation_nodes") && cfg.get("relation_node_mode") == "type") {
    err << "warning: relation_node_mode=type has no effect without relation nodes\n";
  }
}

json split_summary(const kb::QASet& set) {
  std::map<std::string, std::size_t> hops;
  for (const auto& ex : set.examples) ++hops[std::to_string(ex.hops)];
  return {{"questions", set.size()},
          {"linked", set.examples.size()},
          {"unlinkable", set.unlinkable.size()},
          {"hops", hops}};
}

void print_metrics(std::ostream& out, const harness::MetricsReport& m) {
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %8s %8s %10s %11s\n", "variant", "Hits@1", "Full", "questions",
                "unlinkable");
  out << line;
  std::snprintf(line, sizeof line, "%-12s %8.4f %8.4f %10zu %11zu\n", m.variant.c_str(), m.hits_at_1, m.full,
                m.n_questions, m.n_unlinkable);
  out << line << m.to_json() << "\n";
}

int cmd_prepare(const RunConfig& cfg, std::ostream& out) {
  const auto dir = *output_dir(cfg, true, "prepare");
  write_config(dir, cfg, "prepare", "prepare_config.txt");
  const harness::Dataset data = load_dataset(cfg);

  write_file(dir / "kb.txt", kb::format_kb(data.kb));
  write_file(dir / "train.txt", kb::format_qa(data.train, data.kb));
  write_file(dir / "dev.txt", kb::format_qa(data.dev, data.kb));
  const auto vocab = harness::build_vocabulary(data.kb, data.train);
  std::string words;
  for (const auto& w : vocab.words()) words += w + "\n";
  write_file(dir / "vocab.txt", words);

  int hops = cfg.get_int("hops");
  if (cfg.has_value("synthetic")) hops = kb::load_synthetic_spec(cfg.get_path("synthetic")).hops;

  json unlinkable = json::array();
  auto list_unlinkable = [&](const char* split, const kb::QASet& set) {
    for (const auto& u : set.unlinkable) unlinkable.push_back({{"split", split}, {"line", u.line}, {"text", u.text}});
  };
  list_unlinkable("train", data.train);
  list_unlinkable("dev", data.dev);
  const json manifest{{"seed", cfg.get_u64("seed")},
                      {"hops", hops},
                      {"kb",
                       {{"entities", data.kb.entity_count()},
                        {"relations", data.kb.relation_count()},
                        {"triples", data.kb.triple_count()}}},
                      {"train", split_summary(data.train)},
                      {"dev", split_summary(data.dev)},
                      {"vocabulary", vocab.size()},
                      {"unlinkable", unlinkable}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");

  // A config that trains directly on the prepared files.
  RunConfig next = cfg;
  next.set("synthetic", "");
  next.set("kb", fs::absolute(dir / "kb.txt").string());
  next.set("qa", fs::absolute(dir / "train.txt").string());
  next.set("dev_qa", fs::absolute(dir / "dev.txt").string());
  next.set("hops", std::to_string(hops));
  write_config(dir, next, "prepare");

  out << "prepared " << data.train.size() << " train / " << data.dev.size() << " dev questions over "
      << data.kb.triple_count() << " triples in " << dir.string() << "\n";
  out << manifest.dump() << "\n";
  return kOk;
}

int cmd_inspect(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  warn_conflicts(cfg, err);
  const harness::Dataset data = load_dataset(cfg);
  const std::size_t index = cfg.get_size("question");
  const std::size_t n_train = data.train.examples.size();
  if (index >= n_train + data.dev.examples.size()) {
    throw UsageError("question index " + std::to_string(index) + " out of range (" +
                     std::to_string(n_train + data.dev.examples.size()) + " linked questions)");
  }
  const auto& ex = index < n_train ? data.train.examples[index] : data.dev.examples[index - n_train];
  const GraphSettings settings = cfg.graph_settings();
  const int hops = settings.hops > 0 ? settings.hops : std::max(1, ex.hops);
  const auto sub = kb::extract_subgraph(data.kb, ex.seeds, hops, settings.node_budget);
  const auto built = graph::build_reasoning_graph(data.kb, sub, settings.build);

  std::vector<std::string> answers;
  for (auto a : ex.answers) answers.push_back(data.kb.entity_name(a));
  const json dump{{"question", ex.text},
                  {"index", index},
                  {"answers", answers},
                  {"truncated", sub.truncated},
                  {"unpruned", json::parse(graph::to_json(built.unpruned))},
                  {"pruned", json::parse(graph::to_json(built.graph))}};
  out << dump.dump(2) << "\n";

  if (const auto dir = output_dir(cfg, false, "inspect")) {
    write_config(*dir, cfg, "inspect");
    write_file(*dir / "graph.json", dump.dump(2) + "\n");
    write_file(*dir / "unpruned.dot", graph::to_dot(built.unpruned, "unpruned"));
    write_file(*dir / "pruned.dot", graph::to_dot(built.graph, "pruned"));
  }
  return kOk;
}

int cmd_train(RunConfig cfg, std::ostream& out, std::ostream& err) {
  warn_conflicts(cfg, err);
  const auto dir = *output_dir(cfg, true, "train");
  const auto model_config = cfg.model_config();
  const auto settings = cfg.graph_settings();
  const auto train_config = cfg.train_config();
  const fs::path checkpoint_path = dir / "checkpoint.json";
  cfg.set("checkpoint", fs::absolute(checkpoint_path).string());
  write_config(dir, cfg, "train");

  const harness::Dataset data = load_dataset(cfg);
  std::ofstream history(dir / "history.jsonl", std::ios::binary);
  if (!history) throw DataError("cannot write " + (dir / "history.jsonl").string());

  char line[128];
  std::snprintf(line, sizeof line, "%5s %12s %12s %10s\n", "epoch", "train_loss", "dev_hits@1", "dev_full");
  out << line;
  auto result = harness::train(data, model_config, settings, train_config, [&](const harness::EpochRecord& r) {
    history << r.to_json() << "\n" << std::flush;
    std::snprintf(line, sizeof line, "%5zu %12.6f %12.4f %10.4f\n", r.epoch, r.train_loss, r.dev_hits_at_1,
                  r.dev_full);
    out << line << std::flush;
  });

  save_checkpoint(result.best, checkpoint_path);
  write_file(dir / "metrics.json", result.best_dev.to_json() + "\n");
  out << "best epoch " << result.best_epoch << "\n";
  print_metrics(out, result.best_dev);
  return kOk;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
  if (!cfg.has_value("checkpoint")) throw UsageError("eval needs --checkpoint");
  const Checkpoint ck = load_checkpoint(cfg.get_path("checkpoint"));
  harness::Dataset data = load_dataset(cfg);
  kb::QASet eval_set = std::move(data.dev);
  if (cfg.has_value("eval_qa")) eval_set = kb::load_qa(cfg.get_path("eval_qa"), data.kb, cfg.get_int("hops"));

  auto report = harness::evaluate(ck, data.kb, eval_set);
  print_metrics(out, report);
  if (ck.recorded_dev && !cfg.has_value("eval_qa")) {
    const bool same = ck.recorded_dev->hits_at_1 == report.hits_at_1 && ck.recorded_dev->full == report.full;
    out << (same ? "matches" : "differs from") << " recorded dev metrics (Hits@1 " << ck.recorded_dev->hits_at_1
        << ", Full " << ck.recorded_dev->full << ")\n";
  }
  if (const auto dir = output_dir(cfg, false, "eval")) {
    write_config(*dir, cfg, "eval", "eval_config.txt");
    write_file(*dir / "eval_metrics.json", report.to_json() + "\n");
  }
  return kOk;
}

int cmd_ablate(const RunConfig& cfg, std::ostream& out) {
  const auto model_config = cfg.model_config();
  const auto settings = cfg.graph_settings();
  const auto train_config = cfg.train_config();
  const auto dir = output_dir(cfg, false, "ablate");
  if (dir) write_config(*dir, cfg, "ablate");

  const harness::Dataset data = load_dataset(cfg);
  const auto table = harness::run_ablations(data, model_config, settings, train_config);
  out << table.to_text() << table.to_json() << "\n";
  if (dir) {
    write_file(*dir / "ablation.txt", table.to_text());
    write_file(*dir / "ablation.json", table.to_json() + "\n");
  }
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"rdas: question answering over knowledge-base subgraphs with relation nodes"};
  app.require_subcommand(1);
  Flags flags;
  std::map<std::string, CLI::App*> commands;
  for (const auto& [name, help] : std::vector<std::pair<std::string, std::string>>{
           {"prepare", "validate data and write vocab, splits and a manifest"},
           {"inspect", "dump the reasoning graph of one question"},
           {"train", "train a model and save the best checkpoint"},
           {"eval", "evaluate a checkpoint"},
           {"ablate", "train the full model and its three ablations"}}) {
    commands[name] = app.add_subcommand(name, help);
    add_flags(commands[name], flags);
  }
  commands["inspect"]->add_option("--question", flags.question, "question index (train, then dev)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    const RunConfig cfg = resolve(flags);
    if (commands["prepare"]->parsed()) return cmd_prepare(cfg, out);
    if (commands["inspect"]->parsed()) return cmd_inspect(cfg, out, err);
    if (commands["train"]->parsed()) return cmd_train(cfg, out, err);
    if (commands["eval"]->parsed()) return cmd_eval(cfg, out);
    return cmd_ablate(cfg, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kData;
  }
}

}  // namespace rdas::cli
