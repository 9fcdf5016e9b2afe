#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bucketreuse/bucketreuse.hpp"

namespace br = bucketreuse;
namespace fs = std::filesystem;
using br::Json;

namespace {

struct Output {
  std::string stdout_text;
  std::vector<std::pair<fs::path, std::string>> files;
  Json config = Json::object();
};

std::string iso_utc(std::chrono::system_clock::time_point tp) {
  const std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json run_meta(const std::string& command, const Json& config, std::uint64_t seed,
              std::chrono::system_clock::time_point started, std::chrono::steady_clock::duration wall) {
  return Json{{"tool", "bucketreuse"},
              {"version", br::kVersion},
              {"command", command},
              {"seed", seed},
              {"hash_function", std::string(br::kHashFunctionId)},
              {"config", config},
              {"sampling_vector_on_days_without_starts", "all-zero"},
              {"timing",
               {{"started_at", iso_utc(started)},
                {"finished_at", iso_utc(std::chrono::system_clock::now())},
                {"wall_time_seconds", std::chrono::duration<double>(wall).count()}}}};
}

std::string json_line(const Json& j) { return j.dump() + "\n"; }

std::vector<br::UnitId> read_ids(const std::string& path) {
  std::vector<br::UnitId> ids;
  std::istringstream in(br::read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.emplace_back(line);
  }
  return ids;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bucket reuse: hashing, exclusive programs, overlap probabilities, estimators and simulations"};
  app.set_version_flag("--version", br::kVersion);
  app.fallthrough();
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string meta_path;
  auto* seed_opt = app.add_option("--seed", seed, "Master seed for every random draw")->capture_default_str();
  app.add_option("--threads", threads, "Worker threads for simulations")->check(CLI::Range(1u, 1024u))->capture_default_str();
  app.add_option("--meta", meta_path, "Also write run metadata JSON to this path");

  // bucketize
  auto* bucketize = app.add_subcommand("bucketize", "Hash unit ids into buckets");
  std::string salt, id, ids_file;
  std::uint64_t buckets = 0;
  bucketize->add_option("--salt", salt, "Salt string")->required();
  bucketize->add_option("--buckets", buckets, "Number of buckets B")->required();
  auto* id_opt = bucketize->add_option("--id", id, "Single unit id");
  auto* file_opt = bucketize->add_option("--ids-file", ids_file, "File with one id per line");
  id_opt->excludes(file_opt);
  file_opt->excludes(id_opt);

  // coordinate
  auto* coordinate = app.add_subcommand("coordinate", "Replay a start/stop schedule for one exclusive program");
  std::string schedule_path, state_out, series_out;
  coordinate->add_option("--config", schedule_path, "Schedule JSON")->required()->check(CLI::ExistingFile);
  coordinate->add_option("--state-out", state_out, "Write the final state JSON here");
  coordinate->add_option("--series-out", series_out, "Write daily availability vectors (CSV) here");

  // prob
  auto* prob = app.add_subcommand("prob", "Hypergeometric design probabilities");
  prob->require_subcommand(1);
  auto* overlap = prob->add_subcommand("overlap", "Cross-program overlap within a margin");
  double frac1 = 0, frac2 = 0, margin_pp = 0;
  std::uint64_t overlap_buckets = 0;
  overlap->add_option("--buckets", overlap_buckets, "Number of buckets B")->required();
  overlap->add_option("--frac1", frac1, "Size of experiment 1")->required();
  overlap->add_option("--frac2", frac2, "Size of experiment 2")->required();
  overlap->add_option("--margin-pp", margin_pp, "Margin as a population fraction (0.001 = 0.1pp)")->required();
  auto* bad = prob->add_subcommand("bad-buckets", "Share of bad buckets in a draw within a window");
  std::uint64_t n_bad = 0, n_neutral = 0, draws = 0;
  double margin = 0;
  std::optional<double> center;
  bad->add_option("--bad", n_bad, "Bad buckets in the pool")->required();
  bad->add_option("--neutral", n_neutral, "Neutral buckets in the pool")->required();
  bad->add_option("--draws", draws, "Buckets drawn")->required();
  bad->add_option("--margin", margin, "Half-width of the share window")->required();
  bad->add_option("--center", center, "Window center (default: bad share of the pool)");

  // size
  auto* size = app.add_subcommand("size", "Bucket sizing");
  size->require_subcommand(1);
  auto* min_buckets = size->add_subcommand("min-buckets", "Buckets needed for the smallest experiment");
  double smallest = 0;
  min_buckets->add_option("--smallest", smallest, "Smallest relative experiment size")->required();

  // count
  auto* count = app.add_subcommand("count", "Combinatorial counts");
  count->require_subcommand(1);
  auto* samples = count->add_subcommand("samples", "Number of distinct bucket samples C(B, k)");
  std::uint64_t count_buckets = 0, sample_buckets = 0;
  samples->add_option("--buckets", count_buckets, "Number of buckets B")->required();
  samples->add_option("--sample-buckets", sample_buckets, "Buckets per sample k")->required();

  // estimate
  auto* estimate = app.add_subcommand("estimate", "Dependency estimators");
  estimate->require_subcommand(1);
  auto* delta = estimate->add_subcommand("delta", "Estimate the dependency length from availability vectors");
  std::string series_path;
  double tolerance = br::kDefaultDeltaTolerance;
  delta->add_option("--series", series_path, "CSV, one row of B bits per day")->required()->check(CLI::ExistingFile);
  delta->add_option("--tolerance", tolerance, "Zero tolerance for the mean correlation")->capture_default_str();

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo studies");
  simulate->require_subcommand(1);
  auto* sampling = simulate->add_subcommand("sampling-dist", "Bucket vs unit sampling distributions");
  std::string sim_config, out_dir;
  bool paper_scale = false;
  sampling->add_option("--config", sim_config, "Flat JSON config")->check(CLI::ExistingFile);
  sampling->add_option("--out", out_dir, "Directory for summary.json, samples.csv and run_meta.json");
  sampling->add_flag("--paper-scale", paper_scale, "100 populations x 100 samples x 100 assignments");
  auto* program = simulate->add_subcommand("program", "Dependency decay in a program of exclusive experiments");
  std::string setting;
  program->add_option("--setting", setting, "1..6, appendix-1..6 or custom")->required();
  program->add_option("--config", sim_config, "Flat JSON config overriding the setting")->check(CLI::ExistingFile);
  program->add_flag("--paper-scale", paper_scale, "50 starting points x 10000 replications");
  program->add_option("--out", out_dir, "Directory for metrics.csv and run_meta.json")->required();

  auto* selftest = app.add_subcommand("selftest", "Exact enumeration oracles and identity checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const auto started = std::chrono::system_clock::now();
  const auto t0 = std::chrono::steady_clock::now();
  const bool seed_given = seed_opt->count() > 0;
  Output out;
  std::string command;
  bool failed = false;

  try {
    if (bucketize->parsed()) {
      command = "bucketize";
      if (id.empty() && ids_file.empty()) {
        std::cerr << "bucketize: one of --id or --ids-file is required\n";
        return 2;
      }
      const br::BucketingConfig cfg{buckets, br::Salt{salt}};
      if (buckets == 0) throw br::InvalidParams("number of buckets must be >= 1");
      const auto ids = id.empty() ? read_ids(ids_file) : std::vector<br::UnitId>{br::UnitId(id)};
      out.stdout_text = "id,bucket\n";
      for (const auto& u : ids) out.stdout_text += u.value() + ',' + std::to_string(br::hash_to_bucket(u, cfg).index) + '\n';
      out.config = {{"salt", salt}, {"buckets", buckets}, {"ids", ids.size()}};
    } else if (coordinate->parsed()) {
      command = "coordinate";
      const Json j = br::parse_json(br::read_file(schedule_path), schedule_path);
      const auto schedule = br::schedule_from_json(j, schedule_path);
      const auto run = br::run_schedule(schedule, seed);
      out.stdout_text = run.csv;
      if (!state_out.empty()) out.files.emplace_back(state_out, json_line(br::state_to_json(run.final_state)));
      if (!series_out.empty()) out.files.emplace_back(series_out, br::series_csv(run.availability));
      out.config = j;
    } else if (overlap->parsed()) {
      command = "prob overlap";
      const double v = br::overlap_within_margin_prob(overlap_buckets, frac1, frac2, margin_pp);
      out.config = {{"buckets", overlap_buckets}, {"frac1", frac1}, {"frac2", frac2}, {"margin_pp", margin_pp}};
      Json j = out.config;
      j["value"] = v;
      out.stdout_text = json_line(j);
    } else if (bad->parsed()) {
      command = "prob bad-buckets";
      if (n_bad + n_neutral == 0) throw br::InvalidParams("pool must be non-empty");
      const double c = center.value_or(static_cast<double>(n_bad) / static_cast<double>(n_bad + n_neutral));
      const double v = br::bad_bucket_window_prob(n_bad, n_neutral, draws, c, margin);
      out.config = {{"bad", n_bad}, {"neutral", n_neutral}, {"draws", draws}, {"margin", margin}, {"center", c}};
      Json j = out.config;
      j["value"] = v;
      out.stdout_text = json_line(j);
    } else if (min_buckets->parsed()) {
      command = "size min-buckets";
      out.config = {{"smallest", smallest}};
      Json j = out.config;
      j["value"] = br::min_buckets_for_smallest_experiment(smallest);
      out.stdout_text = json_line(j);
    } else if (samples->parsed()) {
      command = "count samples";
      out.config = {{"buckets", count_buckets}, {"sample_buckets", sample_buckets}};
      Json j = out.config;
      j["value"] = br::num_bucket_samples(count_buckets, sample_buckets).str();
      if (sample_buckets >= 1) j["identity_holds"] = br::counting_identities_check(count_buckets, sample_buckets);
      out.stdout_text = json_line(j);
    } else if (delta->parsed()) {
      command = "estimate delta";
      const auto series = br::parse_series_csv(br::read_file(series_path));
      const auto est = br::delta_hat(series, tolerance);
      Json lags = Json::array();
      for (const auto& m : est.mean_cor) lags.push_back(br::optional_json(m));
      out.config = {{"series", series_path}, {"tolerance", tolerance}};
      Json j{{"tolerance", tolerance},
             {"days", series.size()},
             {"found", est.delta_hat.has_value()},
             {"delta_hat", est.delta_hat ? Json(*est.delta_hat) : Json(nullptr)},
             {"mean_cor_by_lag", lags}};
      out.stdout_text = json_line(j);
    } else if (sampling->parsed()) {
      command = "simulate sampling-dist";
      br::SamplingSimConfig cfg;
      if (!paper_scale) cfg = br::desk_scale(cfg);
      if (!sim_config.empty())
        cfg = br::sampling_config_from_json(br::parse_json(br::read_file(sim_config), sim_config), cfg, sim_config);
      if (seed_given || sim_config.empty()) cfg.seed = seed;
      seed = cfg.seed;
      const auto res = br::run_sampling_distribution_sim(cfg, threads);
      const auto u = br::mean_var(res.unit.estimates), b = br::mean_var(res.bucket.estimates);
      const auto ut = br::mean_var(res.unit.t_stats), bt = br::mean_var(res.bucket.t_stats);
      const Json summary{{"ks_t_stat", res.ks_t()},
                         {"ks_estimate", res.ks_estimate()},
                         {"variance_ratio_bucket_over_unit", res.variance_ratio()},
                         {"unit", {{"estimate_mean", u.mean}, {"estimate_variance", u.variance},
                                   {"t_mean", ut.mean}, {"t_variance", ut.variance}}},
                         {"bucket", {{"estimate_mean", b.mean}, {"estimate_variance", b.variance},
                                     {"t_mean", bt.mean}, {"t_variance", bt.variance}}},
                         {"draws_per_strategy", res.unit.estimates.size()}};
      out.stdout_text = json_line(summary);
      out.config = br::to_json(cfg);
      if (!out_dir.empty()) {
        std::string csv = "strategy,estimate,t_stat\n";
        for (const auto* s : {&res.unit, &res.bucket})
          for (std::size_t i = 0; i < s->estimates.size(); ++i)
            csv += std::string(s == &res.unit ? "unit" : "bucket") + ',' + br::format_number(s->estimates[i]) + ',' +
                   br::format_number(s->t_stats[i]) + '\n';
        out.files.emplace_back(fs::path(out_dir) / "summary.json", summary.dump(2) + "\n");
        out.files.emplace_back(fs::path(out_dir) / "samples.csv", csv);
      }
    } else if (program->parsed()) {
      command = "simulate program";
      br::ProgramSimConfig cfg = setting == "custom" ? br::ProgramSimConfig{} : br::setting_by_name(setting);
      if (paper_scale) cfg = br::with_paper_scale(cfg);
      if (!sim_config.empty())
        cfg = br::program_config_from_json(br::parse_json(br::read_file(sim_config), sim_config), cfg, sim_config);
      if (seed_given || sim_config.empty()) cfg.seed = seed;
      seed = cfg.seed;
      const auto metrics = br::run_program_sim(cfg, threads);
      out.config = br::to_json(cfg);
      out.files.emplace_back(fs::path(out_dir) / "metrics.csv", br::metrics_csv(metrics));
      out.stdout_text = json_line(Json{{"setting", cfg.name}, {"out", out_dir}, {"days", metrics.rows.size()}});
    } else if (selftest->parsed()) {
      command = "selftest";
      Json checks = Json::array();
      bool all = true;
      for (const auto& c : br::run_selftest(seed)) {
        checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
        all = all && c.passed;
      }
      out.stdout_text = json_line(Json{{"passed", all}, {"checks", checks}});
      failed = !all;
    }

    const auto wall = std::chrono::steady_clock::now() - t0;
    const bool simulation = sampling->parsed() || program->parsed();
    if (simulation && !out_dir.empty()) {
      fs::create_directories(out_dir);
      out.files.emplace_back(fs::path(out_dir) / "run_meta.json",
                             run_meta(command, out.config, seed, started, wall).dump(2) + "\n");
    }
    if (!meta_path.empty())
      out.files.emplace_back(meta_path, run_meta(command, out.config, seed, started, wall).dump(2) + "\n");
    for (const auto& [path, content] : out.files) br::write_file(path.string(), content);
    std::cout << out.stdout_text << std::flush;
  } catch (const br::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return failed ? 1 : 0;
}
