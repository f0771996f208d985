#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dqos/attack.hpp"
#include "dqos/config.hpp"
#include "dqos/pipeline.hpp"
#include "dqos/predictor.hpp"
#include "dqos/telemetry.hpp"
#include "dqos/topology.hpp"

namespace fs = std::filesystem;
using namespace dqos;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir = "out";
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig load_config(const Globals& g) {
  ExperimentConfig cfg;
  if (!g.config_path.empty()) {
    const fs::path p(g.config_path);
    cfg = parse_config(read_file(g.config_path), p.parent_path().empty() ? "." : p.parent_path().string());
  }
  if (g.seed_set) cfg.set_seed(g.seed);
  cfg.validate();
  return cfg;
}

void write_out(const Globals& g, const std::string& name, const std::string& body) {
  fs::create_directories(g.out_dir);
  const auto path = fs::path(g.out_dir) / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << body;
  std::cout << "wrote " << path.string() << "\n";
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset '" + path + "'");
  return Dataset::read(in);
}

PredictorModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open model '" + path + "'");
  return PredictorModel::read(in);
}

std::string model_file(int id) { return "model_" + std::to_string(id) + ".txt"; }

std::string band_tag(double k) {
  std::string s = format_double(k);
  for (auto& c : s)
    if (c == '.') c = '_';
  return s;
}

int cmd_topology(const Globals& g, bool dump) {
  const auto cfg = load_config(g);
  const auto topo = cfg.build_topology();
  const std::string text = topo.dump();
  if (dump) std::cout << text;
  write_out(g, "topology.txt", text);
  return 0;
}

int cmd_baseline(const Globals& g) {
  const auto cfg = load_config(g);
  const auto r = run_baseline(cfg);
  const std::string head = file_header("baseline", cfg);
  write_out(g, "baseline_report.txt", head + r.report.to_text(r.node_names));
  write_out(g, "baseline_latency_hist.txt", head + latency_histogram(r.report.latencies));
  std::ostringstream fm;
  fm << head << "# columns: misses mean_latency_ms packets\n";
  for (const auto& f : r.forced) fm << f.misses << " " << format_double(f.mean_latency_ms) << " " << f.packets << "\n";
  write_out(g, "forced_miss.txt", fm.str());
  std::ostringstream sum;
  sum << head << "mean_latency_ms " << format_double(r.mean_latency_ms()) << "\nframes " << r.report.latencies.size()
      << "\ndummy_rate_pps " << format_double(r.dummy_rate) << "\n";
  write_out(g, "baseline_summary.txt", sum.str());
  std::cout << "mean latency " << format_double(r.mean_latency_ms()) << " ms\n";
  for (const auto& f : r.forced)
    std::cout << "forced misses " << f.misses << ": " << format_double(f.mean_latency_ms) << " ms\n";
  return 0;
}

int cmd_collect(const Globals& g, double duration) {
  auto cfg = load_config(g);
  if (duration > 0) cfg.collect_duration_s = duration;
  const auto ds = run_collect(cfg);
  std::ostringstream os;
  ds.write(os);
  write_out(g, "dataset.txt", os.str());
  std::cout << ds.snapshots.size() << " snapshots, dummy rate " << format_double(ds.header.dummy_rate) << " pps\n";
  return 0;
}

int cmd_train(const Globals& g, const std::string& dataset_path, const std::vector<int>& ids, bool noisy_test) {
  const auto cfg = load_config(g);
  const auto ds = load_dataset(dataset_path.empty() ? (fs::path(g.out_dir) / "dataset.txt").string() : dataset_path);
  const std::string head = file_header("model", cfg);
  std::ostringstream table;
  table << file_header("train", cfg)
        << "# columns: model_id epochs best_epoch final_train_loss best_val_loss test_rmse_pct baseline_rmse_pct "
           "test_rows\n";
  for (int id : ids) {
    const auto out = train_model(ds, id, cfg, noisy_test);
    std::ostringstream m;
    m << head;
    out.model.write(m);
    write_out(g, model_file(id), m.str());
    const auto& rep = out.report;
    table << id << " " << rep.stopped_at_epoch << " " << rep.best_epoch << " "
          << format_double(rep.epoch_losses.empty() ? 0.0 : rep.epoch_losses.back()) << " "
          << format_double(rep.best_val_loss) << " " << format_double(out.test.rmse) << " "
          << format_double(out.test.baseline_rmse) << " " << out.test.rows << "\n";
    std::cout << "model " << id << ": test rmse " << format_double(out.test.rmse) << " pp (baseline "
              << format_double(out.test.baseline_rmse) << ")\n";
  }
  write_out(g, "train_report.txt", table.str());
  return 0;
}

int cmd_eval(const Globals& g, const std::string& model_path, bool noisy) {
  const auto cfg = load_config(g);
  const auto model = load_model(model_path);
  const auto res = run_eval(model, cfg, noisy);
  const auto topo = cfg.build_topology();
  std::ostringstream os;
  os << file_header("eval", cfg) << "# model_id=" << model.model_id << "\n# noisy_inputs=" << (noisy ? 1 : 0)
     << "\n# columns: t_ms switch actual_pct predicted_pct\n";
  for (const auto& row : res.rows)
    for (std::size_t s = 0; s < row.actual.size(); ++s)
      os << row.t / kMicrosPerMilli << " " << topo.node(topo.switches()[s]).name << " "
         << format_double(row.actual[s]) << " " << format_double(row.predicted[s]) << "\n";
  write_out(g, "eval_trace_" + std::to_string(model.model_id) + ".txt", os.str());
  std::ostringstream sum;
  sum << file_header("eval", cfg) << "model_id " << model.model_id << "\nintervals " << res.rows.size()
      << "\nin_regime " << res.in_regime << "\ntarget_rmse_pct " << format_double(res.rmse)
      << "\nnull_rmse_pct " << format_double(res.null_rmse) << "\n";
  write_out(g, "eval_summary_" + std::to_string(model.model_id) + ".txt", sum.str());
  std::cout << "target rmse " << format_double(res.rmse) << " pp, null model " << format_double(res.null_rmse)
            << " pp\n";
  return 0;
}

int cmd_attack(const Globals& g, const std::string& model_path, std::vector<double> bands, double interval,
               double duration, bool no_attack) {
  auto cfg = load_config(g);
  if (!bands.empty()) cfg.attack_bands = bands;
  if (interval > 0) cfg.attack_interval_s = interval;
  if (duration > 0) cfg.attack_duration_s = duration;
  cfg.validate();
  const auto model = load_model(model_path);
  const std::string head = file_header("attack", cfg);
  if (no_attack) {
    const auto rep = run_attack_once(model, cfg, std::nullopt);
    write_out(g, "attack_none.txt", head + rep.to_text(model.k));
    std::cout << "no-attack mean latency " << format_double(rep.mean_latency_ms) << " ms\n";
    return 0;
  }
  const auto suite = run_attack_suite(model, cfg);
  write_out(g, "attack_none.txt", head + suite.no_attack.to_text(model.k));
  for (const auto& b : suite.bands)
    write_out(g, "attack_k" + band_tag(b.band_k) + ".txt", head + b.report.to_text(model.k));
  const std::string table = attack_summary_table(suite, cfg.attack_m);
  write_out(g, "attack_summary.txt", head + table);
  std::cout << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DNN-guided stealthy flow-table attack lab"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Experiment config file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", g.seed, "Seed for every random stream");
  app.add_option("--out", g.out_dir, "Output directory")->capture_default_str();

  auto* topo = app.add_subcommand("topology", "Build the topology and write its description");
  bool dump = false;
  topo->add_flag("--dump", dump, "Also print the topology to stdout");

  auto* baseline = app.add_subcommand("baseline", "No-attack run plus forced table-miss scenarios");

  auto* collect = app.add_subcommand("collect", "Collect the training dataset");
  double collect_duration = 0;
  collect->add_option("--duration", collect_duration, "Collection time in seconds");

  auto* train = app.add_subcommand("train", "Train predictor variants");
  std::string dataset_path;
  std::vector<int> ids;
  bool noisy_test = false;
  train->add_option("--dataset", dataset_path, "Dataset file (default <out>/dataset.txt)");
  train->add_option("--models", ids, "Model ids (default 1..10)")->check(CLI::Range(1, 10));
  train->add_flag("--noisy-test", noisy_test, "Score noisy variants on noisy held-out inputs");

  auto* eval = app.add_subcommand("eval", "Compare predictions with a fresh simulation");
  std::string eval_model;
  bool noisy = false;
  eval->add_option("--model", eval_model, "Model checkpoint")->required();
  eval->add_flag("--noisy", noisy, "Feed noisy state to noisy variants");

  auto* attack = app.add_subcommand("attack", "Run the model-guided attack");
  std::string attack_model;
  std::vector<double> bands;
  double interval = 0, duration = 0;
  bool no_attack = false;
  attack->add_option("--model", attack_model, "Model checkpoint")->required();
  attack->add_option("--band-k", bands, "Band widths k in percent (default from config)");
  attack->add_option("--interval", interval, "Rate adjustment interval in seconds");
  attack->add_option("--duration", duration, "Attack duration in seconds");
  attack->add_flag("--no-attack", no_attack, "Keep every attacker idle");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  g.seed_set = seed_opt->count() > 0;

  try {
    if (*topo) return cmd_topology(g, dump);
    if (*baseline) return cmd_baseline(g);
    if (*collect) return cmd_collect(g, collect_duration);
    if (*train) {
      if (ids.empty())
        for (int i = 1; i <= 10; ++i) ids.push_back(i);
      return cmd_train(g, dataset_path, ids, noisy_test);
    }
    if (*eval) return cmd_eval(g, eval_model, noisy);
    if (*attack) return cmd_attack(g, attack_model, bands, interval, duration, no_attack);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
