// iclr: robustness experiments for in-context learning.
//
//   iclr evaluate --config demo.ini --method ricl-bm25 --attack swap-labels
//   iclr dard     --config demo.ini --styles bugger,fooler
//   iclr index    --config demo.ini --kind bm25 --output pool.index.json
//   iclr report   runs/ --layout table1

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "iclr/config.hpp"
#include "iclr/error.hpp"
#include "iclr/evaluation.hpp"
#include "iclr/knn_icl.hpp"
#include "iclr/report.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::atomic<bool> g_cancel{false};

extern "C" void on_sigint(int) { g_cancel.store(true); }

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string method, attack, defense;
  std::optional<std::size_t> shots, workers;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "INI configuration file")->required();
  cmd->add_option("--set", c.overrides, "Override, e.g. --set run.shots=4");
  cmd->add_option("--method", c.method, "icl | knn-icl | ricl-bm25 | ricl-embed");
  cmd->add_option("--shots", c.shots, "Number of demonstrations");
  cmd->add_option("--seed", c.seed, "Global seed");
  cmd->add_option("--workers", c.workers, "Parallel workers");
  cmd->add_option("--out", c.out, "Output root directory");
}

iclr::ConfigFile load(const Common& c) {
  auto cfg = iclr::ConfigFile::load(c.config);
  for (const auto& o : c.overrides) cfg.apply_override(o);
  if (!c.method.empty()) cfg.set("run.method", c.method);
  if (!c.attack.empty()) cfg.set("attack.name", c.attack);
  if (!c.defense.empty()) cfg.set("defense.name", c.defense);
  if (c.shots) cfg.set("run.shots", std::to_string(*c.shots));
  if (c.workers) cfg.set("run.workers", std::to_string(*c.workers));
  if (c.seed) cfg.set("seed", std::to_string(*c.seed));
  if (!c.out.empty()) cfg.set("run.out", fs::absolute(c.out).string());
  return cfg;
}

void write_text(const fs::path& path, const std::string& body) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw iclr::RuntimeFailure("cli", "cannot write " + path.string());
  out << body;
}

fs::path run_dir(const iclr::ConfigFile& cfg, const iclr::RunConfig& rc, const std::string& leaf) {
  return cfg.path("run.out", "out") / rc.dataset / std::string(iclr::to_string(rc.method)) / leaf;
}

int cmd_evaluate(const Common& c) {
  const auto cfg = load(c);
  const auto rc = iclr::make_run_config(cfg);
  const auto report = iclr::run_attack(rc);

  std::string leaf(iclr::to_string(rc.attack));
  if (rc.defense != iclr::DefenseKind::none) leaf += "+" + std::string(iclr::to_string(rc.defense));
  const fs::path dir = run_dir(cfg, rc, leaf);
  const auto rendered = iclr::render_report(std::span(&report, 1), iclr::TableLayout::table1);
  fs::create_directories(dir);
  write_text(dir / "report.jsonl", rendered.jsonl);
  write_text(dir / "table.csv", rendered.csv);
  write_text(dir / "config.echo", cfg.echo());
  std::string samples;
  for (const auto& s : report.samples) samples += iclr::sample_row(s).dump() + "\n";
  write_text(dir / "samples.jsonl", samples);

  std::cout << rendered.text << "wrote " << dir.string() << "\n";
  return 0;
}

int cmd_dard(const Common& c, const std::string& styles, bool resume) {
  auto cfg = load(c);
  if (!styles.empty()) cfg.set("defense.styles", styles);
  cfg.set("defense.name", "none");
  const auto rc = iclr::make_run_config(cfg);
  if (rc.method != iclr::Method::ricl_bm25 && rc.method != iclr::Method::ricl_embed) {
    throw iclr::ConfigError("cli", "dard needs --method ricl-bm25 or ricl-embed");
  }
  const fs::path dir = run_dir(cfg, rc, "dard");
  fs::create_directories(dir);

  iclr::DardConfig dc;
  dc.k = rc.shots;
  dc.method = rc.method == iclr::Method::ricl_embed ? iclr::RetrievalMethod::embedding
                                                    : iclr::RetrievalMethod::bm25;
  dc.styles = rc.dard_styles;
  dc.budget = rc.test_budget;
  dc.seed = rc.seed;
  dc.workers = rc.workers;
  dc.checkpoint = rc.dard_checkpoint.value_or(dir / "variants.jsonl");
  dc.resume = resume;
  dc.cancel = &g_cancel;

  iclr::DemoPool pool(rc.train, rc.tokenizer);
  if (rc.method == iclr::Method::ricl_embed) pool = iclr::embed_pool(pool, rc.embedder);

  std::signal(SIGINT, on_sigint);
  const auto ap = iclr::dard_build(pool, rc.test, rc.task, dc, rc.generators, *rc.victim);
  std::signal(SIGINT, SIG_DFL);
  if (g_cancel.load()) {
    std::cerr << "interrupted; partial variants flushed to " << dc.checkpoint->string() << "\n";
    return kExitRuntime;
  }
  iclr::save_dataset(dir / "pool.jsonl", ap.merged.examples());
  write_text(dir / "config.echo", cfg.echo());
  std::cout << "selected " << ap.selected << "\n"
            << "variants " << ap.variants.size() << "\n"
            << "pool " << ap.merged.size() << "\n"
            << "wrote " << dir.string() << "\n";
  return 0;
}

int cmd_index(const Common& c, const std::string& kind, const std::string& output) {
  const auto cfg = load(c);
  const auto rc = iclr::make_run_config(cfg);
  fs::path out = output.empty() ? run_dir(cfg, rc, "index") / (kind + ".json") : fs::path(output);
  if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
  iclr::DemoPool pool(rc.train, rc.tokenizer);
  if (kind == "bm25") {
    iclr::save_index(out, pool);
    std::cout << "documents " << pool.size() << "\n";
  } else if (kind == "embeddings") {
    iclr::save_index(out, iclr::embed_pool(pool, rc.embedder));
    std::cout << "documents " << pool.size() << "\n";
  } else if (kind == "knn-datastore") {
    const auto anchors = iclr::choose_anchors(rc.train, rc.task.labels, rc.seed);
    const std::size_t m = rc.knn_m > 0 ? rc.knn_m : iclr::default_neighbors(rc.shots);
    const auto store =
        iclr::build_datastore(rc.train, anchors, rc.task, *rc.victim, m, rc.knn_alpha, rc.workers);
    iclr::save_datastore(out, store);
    std::cout << "entries " << store.size() << "\n";
  } else {
    throw iclr::ConfigError("cli", "unknown index kind '" + kind + "' (valid: bm25, embeddings, knn-datastore)");
  }
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& layout, const std::string& out) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::recursive_directory_iterator(in)) {
        if (e.is_regular_file() && e.path().filename() == "report.jsonl") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(in)) {
      files.emplace_back(in);
    } else {
      throw iclr::ConfigError("cli", "no such report: " + in);
    }
  }
  std::vector<iclr::RobustnessReport> reports;
  for (const auto& f : files) {
    auto rows = iclr::load_report_rows(f);
    reports.insert(reports.end(), rows.begin(), rows.end());
  }
  const auto rendered = iclr::render_report(reports, iclr::parse_layout(layout));
  if (!out.empty()) iclr::write_report(out, rendered);
  std::cout << rendered.text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial robustness experiments for in-context learning"};
  app.require_subcommand(1);

  Common eval_opts;
  auto* evaluate = app.add_subcommand("evaluate", "Clean and attacked accuracy, ASR");
  add_common(evaluate, eval_opts);
  evaluate->add_option("--attack", eval_opts.attack, "Attack name (none for a clean run)");
  evaluate->add_option("--defense", eval_opts.defense, "none | dard | random-addition | random-deletion");

  Common dard_opts;
  std::string styles;
  bool resume = false;
  auto* dard = app.add_subcommand("dard", "Build a DARD-augmented demonstration pool");
  add_common(dard, dard_opts);
  dard->add_option("--styles", styles, "Comma separated: bugger, fooler, masked");
  dard->add_flag("--resume", resume, "Continue from the checkpoint file");

  Common index_opts;
  std::string kind = "bm25", output;
  auto* index = app.add_subcommand("index", "Build and save a BM25 index, embeddings or kNN datastore");
  add_common(index, index_opts);
  index->add_option("--kind", kind, "bm25 | embeddings | knn-datastore");
  index->add_option("--output", output, "Output file");

  std::vector<std::string> inputs;
  std::string layout = "table1", report_out;
  auto* report = app.add_subcommand("report", "Render report.jsonl files as tables");
  report->add_option("inputs", inputs, "report.jsonl files or directories")->required();
  report->add_option("--layout", layout, "table1 | per-shot");
  report->add_option("--out", report_out, "Directory for report.jsonl, table.csv, table.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*evaluate) return cmd_evaluate(eval_opts);
    if (*dard) return cmd_dard(dard_opts, styles, resume);
    if (*index) return cmd_index(index_opts, kind, output);
    if (*report) return cmd_report(inputs, layout, report_out);
  } catch (const iclr::ConfigError& e) {
    std::cerr << "config error [" << e.module() << "] " << e.what() << "\n";
    return kExitConfig;
  } catch (const iclr::Error& e) {
    std::cerr << "runtime failure [" << e.module() << "] " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}
