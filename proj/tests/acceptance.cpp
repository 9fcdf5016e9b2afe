// Acceptance suite: one PASS/FAIL line per criterion.
//
// usage: acceptance <path to bucketreuse_cli> <work dir>

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bucketreuse/bucketreuse.hpp"
#include "bucketreuse/io.hpp"
#include "bucketreuse/selftest.hpp"

namespace fs = std::filesystem;
using namespace bucketreuse;

namespace {

std::string g_cli;
fs::path g_work;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

/// Runs the CLI with the given argument string, returns stdout and sets the exit code.
std::string run_cli(const std::string& args, int* exit_code = nullptr) {
  const std::string cmd = quote(g_cli) + " " + args + " 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) throw std::runtime_error("popen failed");
  std::string out;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) out.append(buf.data(), n);
  const int status = pclose(p);
  if (exit_code) *exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return out;
}

double cli_value(const std::string& args) {
  int code = 0;
  const auto out = run_cli(args, &code);
  if (code != 0) throw std::runtime_error("cli exited with " + std::to_string(code) + ": " + args);
  return Json::parse(out).at("value").get<double>();
}

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome criterion1() {
  struct Cell {
    std::uint64_t B;
    double frac;
    double table;
  };
  const std::vector<Cell> cells = {{1000, 0.05, 0.23},   {1000, 0.10, 0.27},   {2000, 0.05, 0.34},
                                   {2000, 0.10, 0.37},   {10000, 0.05, 0.70},  {10000, 0.10, 0.73},
                                   {50000, 0.05, 0.98},  {50000, 0.10, 0.99},  {100000, 0.05, 1.00},
                                   {100000, 0.10, 1.00}};
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o{true, ""};
  std::size_t ok = 0;
  for (const auto& c : cells) {
    const double v = cli_value("prob overlap --buckets " + std::to_string(c.B) + " --frac1 " + fmt(c.frac) +
                               " --frac2 " + fmt(c.frac) + " --margin-pp 0.001");
    if (std::abs(v - c.table) <= 0.005)
      ++ok;
    else
      o.detail += "B=" + std::to_string(c.B) + "/" + fmt(c.frac) + " got " + fmt(v) + "; ";
  }
  const double secs = seconds_since(t0);
  o.pass = ok == cells.size() && secs < 5;
  o.detail += std::to_string(ok) + "/10 cells within 0.005, " + fmt(secs, 3) + "s";
  return o;
}

Outcome criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  // Share window (0.75, 1] picks the all-bad outcome for one and two draws.
  const double one = cli_value("prob bad-buckets --bad 1 --neutral 1 --draws 1 --center 1 --margin 0.25");
  const double two = cli_value("prob bad-buckets --bad 2 --neutral 2 --draws 2 --center 1 --margin 0.25");
  const double big = cli_value("prob bad-buckets --bad 1000 --neutral 1000 --draws 1000 --margin 0.03");
  const double secs = seconds_since(t0);
  const bool ok = std::abs(one - 0.5) < 1e-12 && std::abs(two - 1.0 / 6.0) <= 0.0005 && std::abs(big - 0.9927) <= 0.0001;
  return {ok && secs < 1,
          "single " + fmt(one) + ", two " + fmt(two) + ", 1000 " + fmt(big, 8) + ", " + fmt(secs, 3) + "s"};
}

Outcome criterion3() {
  const double a = cli_value("size min-buckets --smallest 0.001");
  const double b = cli_value("size min-buckets --smallest 0.0005");
  const bool lib = min_buckets_for_smallest_experiment(0.001) == 1'000'000 &&
                   min_buckets_for_smallest_experiment(0.0005) == 4'000'000;
  return {lib && a == 1e6 && b == 4e6, "0.001 -> " + fmt(a, 10) + ", 0.0005 -> " + fmt(b, 10)};
}

// Same battery for criteria 4 and 5.
std::vector<IntegerPopulation> tiny_battery() {
  std::vector<IntegerPopulation> out;
  for (std::uint64_t p = 0; p < 20; ++p) {
    Rng rng = derive_rng({2024, p});
    out.push_back(random_tiny_population(rng));
  }
  return out;
}

Outcome criterion4() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t cases = 0, exact = 0, populations = 0;
  for (const auto& pop : tiny_battery()) {
    std::size_t here = 0;
    for (std::size_t t = 0; t < pop.num_times(); ++t)
      for (auto k : even_sample_sizes(pop, pop.num_buckets())) {
        ++cases;
        ++here;
        if (enumerate_unbiasedness(pop, k, t).unbiased()) ++exact;
      }
    if (here > 0) ++populations;
  }
  const double secs = seconds_since(t0);
  return {populations == 20 && cases == exact && secs < 30,
          std::to_string(exact) + "/" + std::to_string(cases) + " exact over " + std::to_string(populations) +
              " populations, " + fmt(secs, 3) + "s"};
}

Outcome criterion5() {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t cases = 0, exact = 0, populations = 0;
  for (const auto& pop : tiny_battery()) {
    std::size_t here = 0;
    for (std::size_t t = 0; t < pop.num_times(); ++t)
      for (std::size_t m = 2; m <= pop.num_buckets(); ++m)
        for (auto k : even_sample_sizes(pop, m)) {
          ++cases;
          ++here;
          if (enumerate_restricted_unbiasedness(pop, m, k, t).unbiased()) ++exact;
        }
    if (here > 0) ++populations;
  }
  const double secs = seconds_since(t0);
  return {populations == 20 && cases == exact && secs < 120,
          std::to_string(exact) + "/" + std::to_string(cases) + " exact over " + std::to_string(populations) +
              " populations, " + fmt(secs, 3) + "s"};
}

Outcome criterion6() {
  const auto t0 = std::chrono::steady_clock::now();
  // Pascal's triangle as an independent oracle for C(B, k).
  std::vector<std::vector<BigInt>> pascal(31);
  for (std::size_t n = 0; n <= 30; ++n) {
    pascal[n].assign(n + 1, 1);
    for (std::size_t k = 1; k < n; ++k) pascal[n][k] = pascal[n - 1][k - 1] + pascal[n - 1][k];
  }
  std::size_t cases = 0, ok = 0;
  for (std::uint64_t B = 1; B <= 30; ++B)
    for (std::uint64_t k = 1; k <= B; ++k) {
      ++cases;
      const BigRational rhs = BigRational(BigInt(B), BigInt(k)) * BigRational(pascal[B - 1][k - 1]);
      if (counting_identities_check(B, k) && BigRational(num_bucket_samples(B, k)) == rhs &&
          num_bucket_samples(B, k) == pascal[B][k])
        ++ok;
    }
  const double secs = seconds_since(t0);
  return {ok == cases && secs < 1, std::to_string(ok) + "/" + std::to_string(cases) + " exact, " + fmt(secs, 3) + "s"};
}

Outcome criterion7() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cfg = desk_scale(SamplingSimConfig{});
  const auto res = run_sampling_distribution_sim(cfg, 1);
  const double secs = seconds_since(t0);
  const double ks = res.ks_t(), ratio = res.variance_ratio();
  const bool ok = ks < 0.1 && (ratio < 0.95 || ratio > 1.05) && secs < 300;
  return {ok, "KS(t) " + fmt(ks, 4) + ", variance ratio bucket/unit " + fmt(ratio, 4) + ", " +
                  std::to_string(res.unit.t_stats.size()) + " draws per strategy, " + fmt(secs, 3) + "s"};
}

MetricSeries desk_program(const std::string& setting, double* secs) {
  const auto t0 = std::chrono::steady_clock::now();
  auto cfg = setting_by_name(setting);
  cfg.num_starting_points = 10;
  cfg.replications_per_start = 1000;
  auto res = run_program_sim(cfg, 1);
  *secs = seconds_since(t0);
  return res;
}

MetricSeries g_setting1;

Outcome criterion8() {
  double s2_secs = 0, s1_secs = 0;
  const auto s2 = desk_program("2", &s2_secs);
  g_setting1 = desk_program("1", &s1_secs);
  const auto& d2 = s2.at(2);
  const auto& d28 = s2.at(28);
  const double bias2 = d2.ate1_bias_abs_mean.value_or(NAN);
  const double bias28 = d28.ate1_bias_abs_mean.value_or(NAN);
  const double av2 = std::abs(d28.availability_cor_mean.value_or(NAN));
  const double av1 = std::abs(g_setting1.at(28).availability_cor_mean.value_or(NAN));
  const bool decay = bias28 < 0.1 * bias2;
  const bool small = av2 < 0.02;
  const bool order = av1 > av2;
  const bool fast = s2_secs < 600 && s1_secs < 600;
  return {decay && small && order && fast,
          "setting 2 mean|bias| d=2 " + fmt(bias2, 4) + ", d=28 " + fmt(bias28, 4) + " (pooled |mean| " +
              fmt(std::abs(d2.ate1_bias_mean.value_or(NAN)), 4) + " -> " +
              fmt(std::abs(d28.ate1_bias_mean.value_or(NAN)), 4) + "); |av cor| d=28 setting 2 " + fmt(av2, 4) +
              " vs setting 1 " + fmt(av1, 4) + "; " + fmt(s2_secs, 3) + "s + " + fmt(s1_secs, 3) + "s"};
}

Outcome criterion9() {
  const auto t0 = std::chrono::steady_clock::now();
  auto cfg = setting_by_name("appendix-1");
  cfg.num_starting_points = 10;
  cfg.replications_per_start = 1000;
  const auto small = run_program_sim(cfg, 1);
  const double secs = seconds_since(t0);
  const auto& a = small.at(2);
  const auto& b = g_setting1.at(2);
  const double lo_small = *a.ate1_bias_abs_mean - 1.96 * *a.ate1_bias_abs_se;
  const double hi_large = *b.ate1_bias_abs_mean + 1.96 * *b.ate1_bias_abs_se;
  return {lo_small > hi_large && secs < 600,
          "d=2 mean|bias| B=100 " + fmt(*a.ate1_bias_abs_mean, 4) + " (95% lower " + fmt(lo_small, 4) +
              ") vs B=10000 " + fmt(*b.ate1_bias_abs_mean, 4) + " (95% upper " + fmt(hi_large, 4) + "), " +
              fmt(secs, 3) + "s"};
}

Outcome criterion10() {
  // Exactly one experiment: 10% of 1000 buckets, 30 days starting on day 1,
  // observed for 60 days so that every lag up to 30 has terms.
  ProgramState state(1000);
  Rng rng = derive_rng({10});
  state.start_experiment(0.10, 30, rng);
  std::vector<BitVector> series;
  for (int day = 1; day <= 60; ++day) {
    if (day > 1) state.advance_day();
    series.push_back(state.availability().bits);
  }
  const double tol = kDefaultDeltaTolerance;
  const auto est = delta_hat(series, tol);
  int first_small = 0;
  for (int lag = 1; lag <= 30; ++lag) {
    const auto& m = est.mean_cor[static_cast<std::size_t>(lag - 1)];
    if (!m || std::abs(*m) <= tol) {
      first_small = lag;
      break;
    }
  }
  const bool dependent = first_small == 0;
  const bool beyond = est.delta_hat && *est.delta_hat > 30;
  std::string detail = "tolerance " + fmt(tol) + ", mean cor* d=1 " + fmt(*est.mean_cor[0], 4) + ", d=29 " +
                       fmt(*est.mean_cor[28], 4) + ", d=30 " + fmt(*est.mean_cor[29], 4) + "; delta_hat " +
                       (est.delta_hat ? std::to_string(*est.delta_hat) : std::string("not found"));
  if (!dependent) detail += "; first lag within tolerance " + std::to_string(first_small);
  return {dependent && beyond, detail};
}

// --- criterion 11 -----------------------------------------------------------

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// File name -> comparable content; run metadata loses its wall-clock block.
std::map<std::string, std::string> snapshot_dir(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string content = read_bytes(e.path());
    if (e.path().filename() == "run_meta.json") {
      auto j = Json::parse(content);
      j.erase("timing");
      content = j.dump();
    }
    out[fs::relative(e.path(), dir).string()] = content;
  }
  return out;
}

struct RunCase {
  std::string name;
  std::string args;  // {out} is replaced by the run directory
};

std::string expand(std::string args, const fs::path& dir) {
  const std::string key = "{out}";
  for (auto pos = args.find(key); pos != std::string::npos; pos = args.find(key))
    args.replace(pos, key.size(), dir.string());
  return args;
}

/// Runs the case twice, clearing its directory in between; returns the files or an error.
bool run_twice(const RunCase& c, const fs::path& base, std::map<std::string, std::string>& files, std::string& why) {
  std::array<std::map<std::string, std::string>, 2> snaps;
  for (int i = 0; i < 2; ++i) {
    // Same directory both times so argv is identical.
    const fs::path dir = base / c.name / "out";
    fs::remove_all(dir);
    fs::create_directories(dir);
    int code = 0;
    const std::string out = run_cli(expand(c.args, dir), &code);
    if (code != 0) {
      why = c.name + " exited " + std::to_string(code);
      return false;
    }
    snaps[static_cast<std::size_t>(i)] = snapshot_dir(dir);
    snaps[static_cast<std::size_t>(i)]["<stdout>"] = out;
  }
  if (snaps[0] != snaps[1]) {
    for (const auto& [k, v] : snaps[0]) {
      auto it = snaps[1].find(k);
      if (it == snaps[1].end() || it->second != v) {
        why = c.name + ": " + k + " differs";
        return false;
      }
    }
    why = c.name + ": file sets differ";
    return false;
  }
  files = snaps[0];
  return true;
}

Outcome criterion11() {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path base = g_work / "determinism";
  fs::remove_all(base);
  fs::create_directories(base);

  write_file(base / "ids.txt", "alice\nbob\ncarol\ndave\n");
  write_file(base / "schedule.json",
             R"({"num_buckets": 200, "days": 25, "program": "home", "events": [)"
             R"({"day": 1, "action": "start", "id": "a", "fraction": 0.2, "length_days": 10},)"
             R"({"day": 1, "action": "start", "id": "b", "fraction": 0.1, "length_days": 20},)"
             R"({"day": 4, "action": "start", "id": "c", "fraction": 0.3, "length_days": 7},)"
             R"({"day": 8, "action": "stop", "id": "b"},)"
             R"({"day": 11, "action": "start", "id": "d", "fraction": 0.5, "length_days": 12}]})");
  write_file(base / "sampling.json",
             R"({"population_size": 2000, "num_buckets": 20, "bucket_size": 100, "sample_size": 400,)"
             R"( "replications": 4, "samples_per_population": 5, "assignments_per_sample": 6})");
  write_file(base / "program.json",
             R"({"num_buckets": 1000, "horizon_days": 30, "num_starting_points": 3, "replications_per_start": 250})");

  const std::string b = base.string();
  std::vector<RunCase> cases = {
      {"bucketize-id", "bucketize --salt s1 --buckets 1000 --id user-42"},
      {"bucketize-file", "bucketize --salt s1 --buckets 1000 --ids-file " + b + "/ids.txt"},
      {"coordinate", "--seed 5 coordinate --config " + b +
                         "/schedule.json --state-out {out}/state.json --series-out {out}/series.csv"},
      {"prob-overlap", "--meta {out}/run_meta.json prob overlap --buckets 10000 --frac1 0.05 --frac2 0.1 --margin-pp 0.001"},
      {"prob-bad-buckets", "prob bad-buckets --bad 300 --neutral 500 --draws 200 --margin 0.02"},
      {"size-min-buckets", "size min-buckets --smallest 0.0005"},
      {"count-samples", "count samples --buckets 30 --sample-buckets 15"},
      {"selftest", "--seed 3 selftest"},
      {"sampling-dist", "--seed 9 simulate sampling-dist --config " + b + "/sampling.json --out {out}"},
      {"sampling-dist-t4", "--seed 9 --threads 4 simulate sampling-dist --config " + b + "/sampling.json --out {out}"},
      {"program", "--seed 9 simulate program --setting 1 --config " + b + "/program.json --out {out}"},
      {"program-t4", "--seed 9 --threads 4 simulate program --setting 1 --config " + b + "/program.json --out {out}"},
  };

  std::size_t ok = 0;
  std::string why;
  std::map<std::string, std::map<std::string, std::string>> results;
  for (const auto& c : cases) {
    std::map<std::string, std::string> files;
    if (run_twice(c, base, files, why)) {
      ++ok;
      results[c.name] = files;
    }
  }
  // estimate delta reads the series the coordinate runs produced.
  if (results.count("coordinate")) write_file(base / "series.csv", results["coordinate"]["series.csv"]);
  const RunCase est{"estimate-delta",
                    "estimate delta --series " + (base / "series.csv").string() +
                        " --tolerance 0.05"};
  std::map<std::string, std::string> files;
  const bool est_ok = results.count("coordinate") && run_twice(est, base, files, why);
  if (est_ok) ++ok;
  const std::size_t total = cases.size() + 1;

  // Thread count must not change the science outputs either.
  bool threads_agree = true;
  for (const auto& [one, four] : {std::pair{"sampling-dist", "sampling-dist-t4"}, std::pair{"program", "program-t4"}}) {
    if (!results.count(one) || !results.count(four)) continue;
    for (const auto& name : {"metrics.csv", "summary.json", "samples.csv", "<stdout>"}) {
      auto a = results[one].find(name), z = results[four].find(name);
      if (a == results[one].end() && z == results[four].end()) continue;
      auto comparable = [&](const std::string& v) {
        if (std::string(name) != "<stdout>") return v;
        auto j = Json::parse(v);
        j.erase("out");  // each case writes to its own directory
        return j.dump();
      };
      if (a == results[one].end() || z == results[four].end() || comparable(a->second) != comparable(z->second)) {
        threads_agree = false;
        why = std::string(one) + " vs " + four + ": " + name + " differs";
      }
    }
  }
  const double secs = seconds_since(t0);
  std::string detail = std::to_string(ok) + "/" + std::to_string(total) + " reruns byte-identical";
  detail += threads_agree ? ", --threads 1 and 4 agree" : ", thread outputs differ";
  if (!why.empty()) detail += " (" + why + ")";
  return {ok == total && threads_agree, detail + ", " + fmt(secs, 3) + "s"};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::cerr << "usage: acceptance <bucketreuse_cli> <work dir>\n";
    return 2;
  }
  g_cli = fs::absolute(argv[1]).string();
  g_work = fs::absolute(argv[2]);
  fs::create_directories(g_work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"overlap probabilities on the B x size grid", criterion1},
      {"bad-bucket contamination values", criterion2},
      {"minimum bucket sizing", criterion3},
      {"unbiasedness by exact enumeration", criterion4},
      {"restricted unbiasedness by exact enumeration", criterion5},
      {"bucket sample counting identities", criterion6},
      {"bucket vs unit sampling distributions", criterion7},
      {"dependency decay in setting 2", criterion8},
      {"100 vs 10000 bucket contrast", criterion9},
      {"long experiment keeps availability dependent", criterion10},
      {"determinism of every subcommand", criterion11},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first << " -- "
              << o.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
