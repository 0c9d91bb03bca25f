// procuresim command line: validate scenario files, run task sets, execute
// sensitivity sweeps and compute metrics over completed runs.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "procuresim/metrics.hpp"
#include "procuresim/util.hpp"
#include "procuresim/workflow.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace procuresim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitIo = 2;

struct CliState {
  std::string config_path;
  std::string out_dir;
  int workers = 0;          // 0 = from config
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool verbose = false;
};

std::vector<SensitivityOverride> parse_override_list(const json& arr) {
  std::vector<SensitivityOverride> out;
  for (const auto& jo : arr) {
    SensitivityOverride ov;
    ov.target = override_target_from_string(jo.at("target").get<std::string>());
    ov.multiplier = jo.at("multiplier").get<double>();
    out.push_back(ov);
  }
  return out;
}

RunConfig load_run_config(const CliState& cli) {
  if (cli.config_path.empty())
    throw ScenarioError("this command requires --config");
  json j = json::parse(read_text_file(cli.config_path));

  RunConfig cfg;
  cfg.scenario_path = j.at("scenarios").get<std::string>();
  if (j.contains("batch_id")) cfg.batch_id = j["batch_id"].get<std::string>();
  if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
  if (j.contains("drugs")) cfg.drugs = j["drugs"].get<std::vector<std::string>>();
  if (j.contains("algorithms")) {
    for (const auto& a : j["algorithms"])
      cfg.algorithms.push_back(algorithm_from_string(a.get<std::string>()));
  }
  if (j.contains("episodes")) cfg.episodes = j["episodes"].get<int>();
  if (j.contains("llm_episodes")) cfg.llm_episodes = j["llm_episodes"].get<int>();
  if (j.contains("timesteps")) cfg.timesteps = j["timesteps"].get<int>();
  if (j.contains("seed")) cfg.base_seed = j["seed"].get<std::uint64_t>();
  if (j.contains("workers")) cfg.workers = j["workers"].get<int>();
  if (j.contains("record_trajectory"))
    cfg.options.record_trajectory = j["record_trajectory"].get<bool>();
  if (j.contains("write_checkpoints"))
    cfg.options.write_checkpoints = j["write_checkpoints"].get<bool>();
  if (j.contains("stochastic_eval"))
    cfg.options.stochastic_eval = j["stochastic_eval"].get<bool>();
  if (j.contains("settings")) {
    for (const auto& setting : j["settings"])
      cfg.settings.push_back(parse_override_list(setting));
  }
  if (j.contains("overrides"))
    cfg.settings.push_back(parse_override_list(j["overrides"]));

  if (j.contains("transport")) {
    const json& jt = j["transport"];
    auto& t = cfg.options.transport;
    if (jt.contains("kind")) t.kind = jt["kind"].get<std::string>();
    if (jt.contains("endpoint")) t.endpoint = jt["endpoint"].get<std::string>();
    if (jt.contains("path")) t.path = jt["path"].get<std::string>();
    if (jt.contains("model")) t.model = jt["model"].get<std::string>();
    if (jt.contains("api_key_env")) t.api_key_env = jt["api_key_env"].get<std::string>();
    if (jt.contains("temperature")) t.temperature = jt["temperature"].get<double>();
    if (jt.contains("max_tokens")) t.max_tokens = jt["max_tokens"].get<int>();
    if (jt.contains("timeout_seconds"))
      t.timeout_seconds = jt["timeout_seconds"].get<int>();
    if (jt.contains("max_retries")) t.max_retries = jt["max_retries"].get<int>();
    if (jt.contains("script")) t.script_path = jt["script"].get<std::string>();
  }
  if (j.contains("ppo")) {
    const json& jp = j["ppo"];
    auto& p = cfg.options.ppo;
    if (jp.contains("lr")) p.lr = jp["lr"].get<double>();
    if (jp.contains("gamma")) p.gamma = jp["gamma"].get<double>();
    if (jp.contains("lambda")) p.lambda = jp["lambda"].get<double>();
    if (jp.contains("clip")) p.clip = jp["clip"].get<double>();
    if (jp.contains("epochs")) p.epochs = jp["epochs"].get<int>();
    if (jp.contains("hidden")) p.hidden = jp["hidden"].get<int>();
    p.validate();
  }

  // flags override file values
  if (!cli.out_dir.empty()) cfg.out_dir = cli.out_dir;
  if (cli.workers > 0) cfg.workers = cli.workers;
  if (cli.seed_set) cfg.base_seed = cli.seed;
  if (cfg.workers < 1) cfg.workers = 1;
  if (cfg.algorithms.empty()) cfg.algorithms.push_back(Algorithm::Rule);
  return cfg;
}

int cmd_validate(const std::string& path, bool verbose) {
  std::vector<std::string> warnings;
  std::vector<DrugScenario> scenarios = load_scenarios(path, &warnings);
  for (const auto& w : warnings) std::cout << "warning: " << w << "\n";
  std::cout << path << ": " << scenarios.size() << " scenario(s) valid, "
            << warnings.size() << " warning(s)\n";
  if (verbose) {
    for (const auto& s : scenarios)
      std::cout << "  " << s.drug_id << ": " << s.firms.size() << " firms, x="
                << s.x << ", p_max=" << fmt_num(s.p_max) << "\n";
  }
  return kExitOk;
}

struct TaskOutcome {
  TaskSpec task;
  std::string setting;
  bool failed = false;
  std::string error;
  double wall_seconds = 0.0;
  int episodes = 0;
};

int cmd_run(const CliState& cli, bool flag_trajectory, bool flag_stochastic_eval,
            bool flag_checkpoints) {
  RunConfig cfg = load_run_config(cli);
  if (flag_trajectory) cfg.options.record_trajectory = true;
  if (flag_stochastic_eval) cfg.options.stochastic_eval = true;
  if (flag_checkpoints) cfg.options.write_checkpoints = true;
  std::vector<std::string> warnings;
  std::vector<DrugScenario> scenarios = load_scenarios(cfg.scenario_path, &warnings);
  if (cli.verbose)
    for (const auto& w : warnings) std::cout << "warning: " << w << "\n";

  std::vector<TaskSpec> tasks = build_task_set(cfg, scenarios);
  std::cout << "running " << tasks.size() << " task(s) with " << cfg.workers
            << " worker(s)\n";

  auto scenario_by_id = [&](const std::string& id) -> const DrugScenario& {
    for (const auto& s : scenarios)
      if (s.drug_id == id) return s;
    throw ScenarioError("unknown scenario reference '" + id + "'");
  };

  std::vector<TaskOutcome> outcomes(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex io_mu;
  auto started = std::chrono::steady_clock::now();

  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const TaskSpec& task = tasks[i];
      TaskOutcome& out = outcomes[i];
      out.task = task;
      out.setting = setting_label(task.overrides);
      RunOptions options = cfg.options;
      options.cost_seed =
          derive_cost_seed(cfg.base_seed, task.batch_id, task.scenario_ref);
      try {
        RunResult result = run_task(task, scenario_by_id(task.scenario_ref), options);
        export_run(result, cfg.out_dir);
        out.wall_seconds = result.wall_seconds;
        out.episodes = task.episodes;
        std::lock_guard<std::mutex> lock(io_mu);
        std::cout << "done  " << task.scenario_ref << " / "
                  << to_string(task.algorithm) << " / " << out.setting << " ("
                  << fmt_num(result.wall_seconds) << "s)\n";
      } catch (const std::exception& e) {
        out.failed = true;
        out.error = e.what();
        std::string dir = task_output_dir(cfg.out_dir, task, out.setting);
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (!ec) write_text_file(dir + "/FAILED", std::string(e.what()) + "\n");
        std::lock_guard<std::mutex> lock(io_mu);
        std::cout << "FAIL  " << task.scenario_ref << " / "
                  << to_string(task.algorithm) << " / " << out.setting << ": "
                  << e.what() << "\n";
      }
    }
  };

  std::vector<std::thread> pool;
  int width = std::min<int>(cfg.workers, static_cast<int>(tasks.size()));
  for (int w = 0; w < std::max(1, width); ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  double wall = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - started)
                    .count();
  long total_episodes = 0;
  int failures = 0;
  for (const auto& o : outcomes) {
    total_episodes += o.episodes;
    if (o.failed) ++failures;
  }
  std::cout << "summary: " << tasks.size() << " task(s), " << total_episodes
            << " training episode(s), " << failures << " failure(s), "
            << fmt_num(wall) << "s wall\n";
  return failures == 0 ? kExitOk : kExitDomain;
}

int cmd_sweep(const CliState& cli, const std::string& target_str,
              const std::string& multipliers_str, int num_seeds) {
  RunConfig cfg = load_run_config(cli);
  OverrideTarget target = override_target_from_string(target_str);

  std::vector<double> multipliers;
  std::stringstream ss(multipliers_str);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) multipliers.push_back(std::stod(tok));
  }
  if (multipliers.empty()) {
    std::cerr << "usage error: --multipliers must name at least one value\n";
    return kExitIo;
  }
  std::sort(multipliers.begin(), multipliers.end());

  std::vector<DrugScenario> scenarios = load_scenarios(cfg.scenario_path);

  struct Job {
    const DrugScenario* scenario;
    Algorithm algorithm;
  };
  std::vector<Job> jobs;
  for (const auto& s : scenarios) {
    if (!cfg.drugs.empty() &&
        std::find(cfg.drugs.begin(), cfg.drugs.end(), s.drug_id) ==
            cfg.drugs.end())
      continue;
    for (Algorithm algo : cfg.algorithms) jobs.push_back({&s, algo});
  }
  if (jobs.empty()) throw ScenarioError("sweep: no (drug, algorithm) pairs selected");

  std::atomic<std::size_t> next{0};
  std::atomic<int> failures{0};
  std::mutex io_mu;
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const Job& job = jobs[i];
      try {
        TaskSpec tmpl;
        tmpl.batch_id = cfg.batch_id;
        tmpl.scenario_ref = job.scenario->drug_id;
        tmpl.algorithm = job.algorithm;
        tmpl.episodes = job.algorithm == Algorithm::Llm ? cfg.llm_episodes
                                                        : cfg.episodes;
        tmpl.timesteps = cfg.timesteps;
        tmpl.seed = derive_task_seed(cfg.base_seed, cfg.batch_id,
                                     job.scenario->drug_id, job.algorithm,
                                     "sweep_" + std::string(to_string(target)));
        RunOptions options = cfg.options;
        options.cost_seed = derive_cost_seed(cfg.base_seed, cfg.batch_id,
                                             job.scenario->drug_id);
        std::vector<SweepPoint> points = sweep(
            *job.scenario, job.algorithm, target, multipliers, num_seeds, tmpl, options);

        fs::path dir(cfg.out_dir);
        dir /= sanitize_path_component(cfg.batch_id);
        dir /= sanitize_path_component(job.scenario->drug_id);
        dir /= to_string(job.algorithm);
        fs::create_directories(dir);
        std::string file =
            (dir / ("sweep_" + std::string(to_string(target)) + ".csv")).string();
        write_text_file(file, sweep_to_csv(points));
        std::lock_guard<std::mutex> lock(io_mu);
        std::cout << "sweep " << job.scenario->drug_id << " / "
                  << to_string(job.algorithm) << " -> " << file << "\n";
      } catch (const std::exception& e) {
        ++failures;
        std::lock_guard<std::mutex> lock(io_mu);
        std::cout << "FAIL  sweep " << job.scenario->drug_id << " / "
                  << to_string(job.algorithm) << ": " << e.what() << "\n";
      }
    }
  };
  std::vector<std::thread> pool;
  int width = std::min<int>(std::max(1, cfg.workers), static_cast<int>(jobs.size()));
  for (int w = 0; w < width; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return failures == 0 ? kExitOk : kExitDomain;
}

struct ReferenceRow {
  double actual_price = 0.0;
  int actual_winner = 0;
};

std::map<std::string, std::map<std::string, ReferenceRow>> load_reference(
    const std::string& path) {
  std::map<std::string, std::map<std::string, ReferenceRow>> ref;
  std::istringstream in(read_text_file(path));
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (header) {
      if (fields.size() < 4 || fields[0] != "drug_id" || fields[1] != "firm_id" ||
          fields[2] != "actual_price" || fields[3] != "actual_winner")
        throw ScenarioError(
            "reference file: expected header drug_id,firm_id,actual_price,"
            "actual_winner");
      header = false;
      continue;
    }
    if (fields.size() < 4)
      throw ScenarioError("reference file: short row '" + line + "'");
    ref[fields[0]][fields[1]] =
        ReferenceRow{std::stod(fields[2]), std::stoi(fields[3])};
  }
  if (ref.empty()) throw ScenarioError("reference file: no data rows");
  return ref;
}

struct TaskResultFiles {
  std::string drug_id;
  std::string algorithm;
  std::string setting;
  std::vector<std::pair<std::string, double>> firm_prices;  // in file order
  std::vector<double> firm_profits;
};

std::vector<TaskResultFiles> scan_run_dir(const std::string& run_dir,
                                          const std::string& setting_filter) {
  std::vector<TaskResultFiles> results;
  if (!fs::exists(run_dir)) throw IoError("run directory '" + run_dir + "' not found");
  for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
    if (!entry.is_regular_file() || entry.path().filename() != "run_meta.json")
      continue;
    json meta = json::parse(read_text_file(entry.path().string()));
    TaskResultFiles r;
    r.drug_id = meta.at("drug_id").get<std::string>();
    r.algorithm = meta.at("algorithm").get<std::string>();
    r.setting = meta.at("setting").get<std::string>();
    if (!setting_filter.empty() && r.setting != setting_filter) continue;
    fs::path strategy = entry.path().parent_path() / "final_strategy.csv";
    if (!fs::exists(strategy)) continue;
    std::istringstream in(read_text_file(strategy.string()));
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (header) {
        header = false;
        continue;
      }
      auto fields = split_csv_line(line);
      if (fields.size() < 4) continue;
      r.firm_prices.emplace_back(fields[0], std::stod(fields[1]));
      r.firm_profits.push_back(std::stod(fields[3]));
    }
    results.push_back(std::move(r));
  }
  std::sort(results.begin(), results.end(), [](const auto& a, const auto& b) {
    if (a.algorithm != b.algorithm) return a.algorithm < b.algorithm;
    return a.drug_id < b.drug_id;
  });
  return results;
}

int cmd_metrics(const std::string& run_dir, const std::string& reference_path,
                const std::string& out_file) {
  std::vector<TaskResultFiles> results = scan_run_dir(run_dir, "base");
  if (results.empty()) {
    // fall back to whatever settings exist when no base runs are present
    results = scan_run_dir(run_dir, "");
  }
  if (results.empty())
    throw ScenarioError("no task results found under '" + run_dir + "'");

  std::ostringstream os;
  if (reference_path.empty()) {
    os << "drug_id,algorithm,profit_mean,profit_q25,profit_q50,profit_q75\n";
    for (const auto& r : results) {
      ProfitSummary s = summarize_profits(r.firm_profits);
      os << csv_escape(r.drug_id) << "," << r.algorithm << "," << fmt_num(s.mean)
         << "," << fmt_num(s.q25) << "," << fmt_num(s.q50) << ","
         << fmt_num(s.q75) << "\n";
    }
  } else {
    auto ref = load_reference(reference_path);
    os << "drug_id,algorithm,spearman,p,r2,alignment\n";

    std::map<std::string, std::vector<const TaskResultFiles*>> by_algo;
    for (const auto& r : results) by_algo[r.algorithm].push_back(&r);

    for (const auto& [algo, runs] : by_algo) {
      std::vector<double> pooled_pred, pooled_actual;
      double matched_total = 0.0, slots_total = 0.0;
      std::vector<double> per_drug_rates;

      for (const TaskResultFiles* r : runs) {
        auto it = ref.find(r->drug_id);
        if (it == ref.end()) continue;
        std::vector<double> pred, actual;
        std::vector<int> winner_idx;
        int idx = 0;
        for (const auto& [firm, price] : r->firm_prices) {
          auto fit = it->second.find(firm);
          if (fit == it->second.end())
            throw ScenarioError("reference missing firm '" + firm +
                                "' for drug '" + r->drug_id + "'");
          pred.push_back(price);
          actual.push_back(fit->second.actual_price);
          if (fit->second.actual_winner != 0) winner_idx.push_back(idx);
          ++idx;
        }
        if (pred.empty()) continue;
        int x = static_cast<int>(winner_idx.size());

        std::string rho_s, p_s, r2_s, align_s;
        if (pred.size() >= 3) {
          SpearmanResult sp = spearman(pred, actual);
          if (sp.defined) {
            rho_s = fmt_num(sp.rho);
            p_s = fmt_num(sp.p_value);
          }
        }
        if (pred.size() >= 2) {
          std::vector<double> lp, la;
          for (double v : pred) lp.push_back(std::log(v));
          for (double v : actual) la.push_back(std::log(v));
          try {
            r2_s = fmt_num(r_squared(lp, la));
          } catch (const MetricsError&) {
          }
        }
        if (x >= 1) {
          double rate = winner_alignment(pred, winner_idx, x);
          align_s = fmt_num(rate);
          matched_total += rate * x;
          slots_total += x;
          per_drug_rates.push_back(rate);
        }
        os << csv_escape(r->drug_id) << "," << algo << "," << rho_s << "," << p_s
           << "," << r2_s << "," << align_s << "\n";

        for (double v : pred) pooled_pred.push_back(v);
        for (double v : actual) pooled_actual.push_back(v);
      }

      if (pooled_pred.size() >= 3) {
        SpearmanResult sp = spearman(pooled_pred, pooled_actual);
        std::vector<double> lp, la;
        for (double v : pooled_pred) lp.push_back(std::log(v));
        for (double v : pooled_actual) la.push_back(std::log(v));
        std::string r2_s;
        try {
          r2_s = fmt_num(r_squared(lp, la));
        } catch (const MetricsError&) {
        }
        os << "ALL," << algo << "," << (sp.defined ? fmt_num(sp.rho) : "") << ","
           << (sp.defined ? fmt_num(sp.p_value) : "") << "," << r2_s << ","
           << (slots_total > 0 ? fmt_num(matched_total / slots_total) : "")
           << "\n";
      }
      if (!per_drug_rates.empty()) {
        double macro = 0.0;
        for (double r : per_drug_rates) macro += r;
        macro /= static_cast<double>(per_drug_rates.size());
        os << "ALL_MACRO," << algo << ",,,," << fmt_num(macro) << "\n";
      }
    }
  }

  std::string target = out_file.empty()
                           ? (fs::path(run_dir) / "metrics.csv").string()
                           : out_file;
  write_text_file(target, os.str());
  std::cout << "wrote " << target << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"volume-based drug procurement bidding simulator"};
  app.require_subcommand(1);
  app.fallthrough();

  CliState cli;
  app.add_option("--config", cli.config_path, "JSON config file");
  app.add_option("--out", cli.out_dir, "output directory (overrides config)");
  app.add_option("--workers", cli.workers, "worker pool width");
  app.add_option("--seed", cli.seed, "base seed (overrides config)")
      ->each([&](const std::string&) { cli.seed_set = true; });
  app.add_flag("--verbose", cli.verbose, "verbose output");

  auto* validate_cmd = app.add_subcommand("validate", "validate a scenario file");
  std::string validate_path;
  validate_cmd->add_option("file", validate_path, "scenario JSON file")->required();

  auto* run_cmd = app.add_subcommand("run", "run the configured task set");
  bool flag_trajectory = false, flag_stochastic_eval = false;
  bool flag_checkpoints = false;
  run_cmd->add_flag("--trajectory", flag_trajectory, "write trajectory.csv");
  run_cmd->add_flag("--stochastic-eval", flag_stochastic_eval,
                    "sample (rather than exploit) during evaluation episodes");
  run_cmd->add_flag("--checkpoints", flag_checkpoints,
                    "write learned-parameter checkpoints.json per RL task");

  auto* sweep_cmd = app.add_subcommand("sweep", "run a sensitivity sweep");
  std::string sweep_target, sweep_multipliers;
  int sweep_seeds = 3;
  sweep_cmd->add_option("--target", sweep_target, "rho|p_max|q0|qe|cost")
      ->required();
  sweep_cmd->add_option("--multipliers", sweep_multipliers,
                        "comma-separated multipliers")
      ->required();
  sweep_cmd->add_option("--seeds", sweep_seeds, "seeds per point (default 3)");

  auto* metrics_cmd =
      app.add_subcommand("metrics", "compute metrics over a run directory");
  std::string metrics_run_dir, metrics_reference, metrics_out;
  metrics_cmd->add_option("--run-dir", metrics_run_dir, "run output directory")
      ->required();
  metrics_cmd->add_option("--reference", metrics_reference,
                          "reference CSV (drug_id,firm_id,actual_price,actual_winner)");
  metrics_cmd->add_option("--out-file", metrics_out, "metrics CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitIo;
  }

  try {
    if (validate_cmd->parsed()) return cmd_validate(validate_path, cli.verbose);
    if (run_cmd->parsed())
      return cmd_run(cli, flag_trajectory, flag_stochastic_eval, flag_checkpoints);
    if (sweep_cmd->parsed())
      return cmd_sweep(cli, sweep_target, sweep_multipliers, sweep_seeds);
    if (metrics_cmd->parsed())
      return cmd_metrics(metrics_run_dir, metrics_reference, metrics_out);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ScenarioError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const MetricsError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDomain;
  }
  return kExitOk;
}
