// gsppca command-line front end.
//
//   gsppca fit       --input x.csv --latent-dim 5 [--output report.json]
//   gsppca simulate  --scenario intro --output x.csv
//   gsppca benchmark --scenario snr --reps 30 --output reps.csv --summary summary.csv
//   gsppca evaluate  --predicted report.json --truth x.truth.json
//   gsppca enrich    --selection report.json --gmt sets.gmt --names genes.txt
//
// Exit codes: 0 success, 2 input or argument error, 3 numerical failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gsppca/gsppca.hpp"

using namespace gsppca;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

const std::map<std::string, NoiseEstimator> kEstimators{
    {"ml", NoiseEstimator::ml}, {"median", NoiseEstimator::median}, {"unbiased", NoiseEstimator::unbiased}};
const std::map<std::string, Scenario> kScenarios{
    {"intro", Scenario::intro}, {"snr", Scenario::snr}, {"blocks", Scenario::blocks}};
const std::map<std::string, NoiseKind> kNoise{{"gaussian", NoiseKind::gaussian}, {"laplace", NoiseKind::laplace}};

template <typename Map, typename Value>
std::string name_of(const Map& m, Value v) {
  for (const auto& [k, x] : m)
    if (x == v) return k;
  return "?";
}

// Options shared by fit and benchmark.
struct FitOptions {
  int latent_dim = 0;
  std::string estimator = "unbiased";
  std::vector<double> alpha_grid{0.1, 1.0, 10.0};
  int max_iter = 300;
  double rel_tol = 1e-7;
  std::uint64_t seed = 0;
  int threads = 0;
  std::optional<double> speedup;
  std::string svd = "exact";
  CLI::Option* estimator_opt = nullptr;

  void add_to(CLI::App& app, bool need_dim) {
    auto* d = app.add_option("--latent-dim,-d", latent_dim, "Latent dimension d")->check(CLI::PositiveNumber);
    if (need_dim) d->required();
    estimator_opt = app.add_option("--sigma-estimator", estimator, "Noise sd estimator for the evidence")
                        ->check(CLI::IsMember({"ml", "median", "unbiased"}))
                        ->capture_default_str();
    app.add_option("--alpha-grid", alpha_grid, "Initial alpha values tried by the VEM (comma separated)")
        ->delimiter(',')
        ->capture_default_str();
    app.add_option("--max-iter", max_iter, "VEM iteration cap")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--rel-tol", rel_tol, "Relative free-energy tolerance")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--seed", seed, "Random seed")->capture_default_str();
    app.add_option("--threads", threads, std::string("Thread count (default: $") + kThreadsEnv + ", else all cores)")
        ->check(CLI::PositiveNumber);
    app.add_option("--speedup-threshold", speedup, "Drop variables with u below this before the path (0 disables)")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--svd", svd, "SVD used for initialization: exact, randomized, or none (random init)")
        ->check(CLI::IsMember({"exact", "randomized", "none"}))
        ->capture_default_str();
  }

  SelectionConfig resolve(int resolved_threads) const {
    SelectionConfig cfg;
    cfg.vem.max_iter = max_iter;
    cfg.vem.rel_tol = rel_tol;
    cfg.vem.alpha_grid = alpha_grid;
    cfg.vem.seed = seed;
    cfg.vem.threads = resolved_threads;
    cfg.threads = resolved_threads;
    cfg.speedup_threshold = speedup;
    cfg.noise = kEstimators.at(estimator);
    if (svd == "none") {
      // the ml and unbiased estimators need the spectrum
      if (estimator_opt && estimator_opt->count() > 0 && estimator != "median")
        throw ArgumentError("--svd none requires --sigma-estimator median");
      cfg.noise = NoiseEstimator::median;
      cfg.vem.strategy = InitStrategy::random;
    } else {
      cfg.vem.svd = svd == "randomized" ? SvdMethod::randomized : SvdMethod::exact;
    }
    return cfg;
  }

  json echo(const SelectionConfig& cfg) const {
    json j;
    j["latent_dim"] = latent_dim;
    j["sigma_estimator"] = name_of(kEstimators, cfg.noise);
    j["alpha_grid"] = alpha_grid;
    j["max_iter"] = max_iter;
    j["rel_tol"] = rel_tol;
    j["seed"] = seed;
    j["threads"] = cfg.threads;
    j["speedup_threshold"] = speedup ? json(*speedup) : json(nullptr);
    j["svd"] = svd;
    return j;
  }
};

json mask_json(const SupportVector& v) {
  json a = json::array();
  for (auto m : v.mask()) a.push_back(static_cast<int>(m));
  return a;
}

json to_json(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
  return a;
}

void write_json(const std::string& path, const json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  auto out = detail::open_output(path);
  out << j.dump(2) << '\n';
  if (!out) throw InputError("cannot write '" + path + "'");
}

// ---------------------------------------------------------------- fit

struct FitCommand {
  FitOptions opt;
  std::string input, output = "-", loadings, scores;
  bool header = false, no_center = false, timing = false;

  void add_to(CLI::App& app) {
    app.add_option("--input,-i", input, "Data CSV, one row per observation")->required();
    app.add_option("--output,-o", output, "JSON report ('-' for stdout)")->capture_default_str();
    app.add_flag("--header", header, "First CSV row holds column names");
    app.add_flag("--no-center", no_center, "Use the data as given instead of centering columns");
    app.add_option("--loadings", loadings, "Write the p x d loadings to this CSV");
    app.add_option("--scores", scores, "Write the n x d scores to this CSV");
    app.add_flag("--timing", timing, "Include wall-clock time in the report");
    opt.add_to(app, true);
  }

  int run() const {
    const auto t0 = Clock::now();
    const auto table = read_csv(input, header);
    if (table.values.rows() < 2) throw InputError("need at least 2 observations, got " + std::to_string(table.values.rows()));
    if (opt.latent_dim > std::min(table.values.rows(), table.values.cols()))
      throw ArgumentError("--latent-dim exceeds min(n, p)");
    const auto x = no_center ? as_data(table.values) : center(table.values);
    const auto cfg = opt.resolve(resolve_threads(opt.threads));
    const auto res = select_support(x, opt.latent_dim, cfg);

    json j;
    j["version"] = kVersion;
    j["command"] = "fit";
    json c = opt.echo(cfg);
    c["input"] = input;
    c["header"] = header;
    c["center"] = !no_center;
    j["config"] = c;
    j["n"] = x.n();
    j["p"] = x.p();
    j["support"] = mask_json(res.support);
    j["selected"] = res.support.active();
    if (!table.header.empty()) {
      json names = json::array();
      for (Index k : res.support.active()) names.push_back(table.header[static_cast<std::size_t>(k)]);
      j["selected_names"] = names;
    }
    j["q_hat"] = res.q_hat;
    j["alpha_hat"] = std::isfinite(res.alpha_hat) ? json(res.alpha_hat) : json(nullptr);
    j["sigma1_hat"] = res.sigma1_hat;
    j["alpha0"] = res.alpha0;
    j["speedup_threshold"] = res.speedup_threshold;
    j["filtered"] = res.filtered;
    json path = json::array();
    for (const auto& pt : res.path)
      path.push_back({{"k", pt.k},
                      {"alpha_hat", std::isfinite(pt.alpha_hat) ? json(pt.alpha_hat) : json(nullptr)},
                      {"log_evidence", std::isfinite(pt.log_evidence) ? json(pt.log_evidence) : json(nullptr)},
                      {"boundary", pt.boundary},
                      {"valid", pt.valid}});
    j["path"] = path;
    j["ranking"] = res.ranking;
    j["u"] = std::vector<double>(res.relaxed.u.data(), res.relaxed.u.data() + res.relaxed.u.size());
    j["free_energy"] = {{"values", to_json(res.trace.values)},
                        {"converged", res.trace.converged},
                        {"iterations", res.trace.iterations}};
    j["component_variances"] =
        std::vector<double>(res.component_variances.data(), res.component_variances.data() + res.component_variances.size());

    if (!loadings.empty()) write_csv(loadings, res.loadings);
    if (!scores.empty()) write_csv(scores, res.scores);
    if (timing) j["seconds"] = seconds_since(t0);
    write_json(output, j);
    return 0;
  }
};

// ---------------------------------------------------------------- simulate

struct ScenarioOptions {
  std::string scenario = "intro", noise = "gaussian";
  std::optional<Index> n, p, q;
  std::optional<int> d;
  std::optional<double> sigma, snr, rho;
  std::uint64_t seed = 0;

  void add_to(CLI::App& app, bool with_sizes, bool with_seed = true) {
    app.add_option("--scenario", scenario, "intro, snr or blocks")
        ->check(CLI::IsMember({"intro", "snr", "blocks"}))
        ->capture_default_str();
    app.add_option("--noise", noise, "Noise law: gaussian or laplace")
        ->check(CLI::IsMember({"gaussian", "laplace"}))
        ->capture_default_str();
    if (with_seed) app.add_option("--seed", seed, "Random seed")->capture_default_str();
    if (!with_sizes) return;
    app.add_option("--n", n, "Observations");
    app.add_option("--p", p, "Variables");
    app.add_option("--latent-dim,-d", d, "Latent dimension");
    app.add_option("--q", q, "Active variables");
    app.add_option("--sigma", sigma, "Noise sd (intro, blocks)");
    app.add_option("--snr", snr, "Signal-to-noise ratio (snr)");
    app.add_option("--rho", rho, "Within-block correlation (blocks)");
  }

  ScenarioSpec spec() const {
    auto s = ScenarioSpec::defaults(kScenarios.at(scenario));
    if (n) s.n = *n;
    if (p) s.p = *p;
    if (d) s.d = *d;
    if (q) s.q = *q;
    if (sigma) s.sigma = *sigma;
    if (snr) s.snr = *snr;
    if (rho) s.rho = *rho;
    s.noise = kNoise.at(noise);
    s.seed = seed;
    s.validate();
    return s;
  }
};

json spec_json(const ScenarioSpec& s) {
  return {{"scenario", name_of(kScenarios, s.scenario)},
          {"n", s.n},
          {"p", s.p},
          {"latent_dim", s.d},
          {"q", s.q},
          {"sigma", s.sigma},
          {"snr", s.snr},
          {"rho", s.rho},
          {"block_diagonal", s.block_diagonal},
          {"noise", name_of(kNoise, s.noise)},
          {"seed", s.seed}};
}

struct SimulateCommand {
  ScenarioOptions opt;
  std::string output, truth;

  void add_to(CLI::App& app) {
    app.add_option("--output,-o", output, "Data CSV")->required();
    app.add_option("--truth", truth, "Truth JSON (default: <output>.truth.json)");
    opt.add_to(app, true);
  }

  int run() const {
    const auto spec = opt.spec();
    const auto sim = simulate(spec);
    write_csv(output, sim.x);
    json j;
    j["version"] = kVersion;
    j["command"] = "simulate";
    j["spec"] = spec_json(spec);
    j["sigma"] = sim.sigma;
    j["q"] = sim.truth.q();
    j["support"] = mask_json(sim.truth);
    write_json(truth.empty() ? output + ".truth.json" : truth, j);
    return 0;
  }
};

// ---------------------------------------------------------------- benchmark

struct Summary {
  double median, q1, q3, mean, sd;
};

double quantile(const std::vector<double>& sorted, double prob) {
  const double pos = prob * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

Summary summarize(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return {quantile(v, 0.5), quantile(v, 0.25), quantile(v, 0.75), mean, sd};
}

struct BenchmarkCommand {
  ScenarioOptions scen;
  FitOptions fit;
  int reps = 30, grid_points = 20;
  double snr_min = 0.1, snr_max = 3.0;
  std::string output, summary;
  bool timing = false;

  void add_to(CLI::App& app) {
    scen.scenario = "snr";
    // --seed comes from the fit options and is the base of the replicate seeds
    scen.add_to(app, false, false);
    app.add_option("--reps", reps, "Replicates per grid point")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--grid-points", grid_points, "SNR grid size (snr)")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--snr-min", snr_min, "Smallest SNR (snr)")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--snr-max", snr_max, "Largest SNR (snr)")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--rho", scen.rho, "Within-block correlation (blocks)");
    app.add_option("--output,-o", output, "Per-replicate CSV")->required();
    app.add_option("--summary", summary, "Per-grid-point summary CSV (default: <output>.summary.csv)");
    app.add_flag("--timing", timing, "Add a seconds column to the per-replicate CSV");
    fit.add_to(app, false);
  }

  int run() const {
    if (scen.scenario == "intro") throw ArgumentError("benchmark supports the snr and blocks scenarios");
    auto scenario = scen;
    scenario.seed = fit.seed;
    const auto base = scenario.spec();
    const int d = fit.latent_dim > 0 ? fit.latent_dim : base.d;
    // replicates run in parallel, each fit single-threaded
    const int threads = resolve_threads(fit.threads);
    auto cfg = fit.resolve(1);

    std::vector<ScenarioSpec> grid;
    if (base.scenario == Scenario::snr) {
      for (int g = 0; g < grid_points; ++g) {
        auto s = base;
        s.snr = grid_points == 1 ? snr_min : snr_min + (snr_max - snr_min) * g / (grid_points - 1);
        grid.push_back(s);
      }
    } else {
      for (Index n : {base.p / 5, base.p / 4, base.p / 3, base.p / 2, base.p}) {
        auto s = base;
        s.n = n;
        grid.push_back(s);
      }
    }

    const std::int64_t total = static_cast<std::int64_t>(grid.size()) * reps;
    std::vector<double> f(static_cast<std::size_t>(total)), secs(f.size());
    std::vector<Index> qhat(f.size());
    std::vector<std::uint64_t> seeds(f.size());
    for (std::int64_t i = 0; i < total; ++i)
      seeds[static_cast<std::size_t>(i)] = fit.seed + 1000003ULL * static_cast<std::uint64_t>(i / reps) + static_cast<std::uint64_t>(i % reps);
    parallel_for(total, threads, [&](std::int64_t i) {
      const auto slot = static_cast<std::size_t>(i);
      auto s = grid[static_cast<std::size_t>(i / reps)];
      s.seed = seeds[slot];
      const auto t0 = Clock::now();
      const auto sim = simulate(s);
      const auto res = select_support(center(sim.x), d, cfg);
      secs[slot] = seconds_since(t0);
      f[slot] = f_score(res.support, sim.truth);
      qhat[slot] = res.q_hat;
    });

    const bool is_snr = base.scenario == Scenario::snr;
    const std::string axis = is_snr ? "snr" : "n";
    std::vector<std::string> head{"grid_index", axis, "replicate", "seed", "f_score", "q_hat"};
    if (timing) head.push_back("seconds");
    Matrix rows(total, static_cast<Index>(head.size()));
    for (std::int64_t i = 0; i < total; ++i) {
      const auto slot = static_cast<std::size_t>(i);
      const auto& s = grid[static_cast<std::size_t>(i / reps)];
      rows(i, 0) = static_cast<double>(i / reps);
      rows(i, 1) = is_snr ? s.snr : static_cast<double>(s.n);
      rows(i, 2) = static_cast<double>(i % reps);
      rows(i, 3) = static_cast<double>(seeds[slot]);
      rows(i, 4) = f[slot];
      rows(i, 5) = static_cast<double>(qhat[slot]);
      if (timing) rows(i, 6) = secs[slot];
    }
    write_csv(output, rows, head);

    Matrix sum(static_cast<Index>(grid.size()), 7);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const auto st = summarize(std::vector<double>(f.begin() + static_cast<std::ptrdiff_t>(g * reps),
                                                    f.begin() + static_cast<std::ptrdiff_t>((g + 1) * reps)));
      sum.row(static_cast<Index>(g)) << static_cast<double>(g), is_snr ? grid[g].snr : static_cast<double>(grid[g].n),
          st.median, st.q1, st.q3, st.mean, st.sd;
    }
    write_csv(summary.empty() ? output + ".summary.csv" : summary, sum,
              {"grid_index", axis, "median", "q1", "q3", "mean", "sd"});
    return 0;
  }
};

// ---------------------------------------------------------------- evaluate

struct EvaluateCommand {
  std::string predicted, truth, output = "-";

  void add_to(CLI::App& app) {
    app.add_option("--predicted", predicted, "Predicted support (fit report JSON or 0/1 CSV)")->required();
    app.add_option("--truth", truth, "True support (truth JSON or 0/1 CSV)")->required();
    app.add_option("--output,-o", output, "JSON result ('-' for stdout)")->capture_default_str();
  }

  int run() const {
    const auto pred = read_mask(predicted), ref = read_mask(truth);
    if (pred.size() != ref.size())
      throw InputError("supports have different lengths (" + std::to_string(pred.size()) + " vs " +
                       std::to_string(ref.size()) + ")");
    Index tp = 0;
    for (Index j = 0; j < pred.size(); ++j) tp += pred[j] && ref[j] ? 1 : 0;
    json j;
    j["version"] = kVersion;
    j["command"] = "evaluate";
    j["config"] = {{"predicted", predicted}, {"truth", truth}};
    j["f_score"] = f_score(pred, ref);
    j["true_positives"] = tp;
    j["q_predicted"] = pred.q();
    j["q_truth"] = ref.q();
    write_json(output, j);
    return 0;
  }
};

// ---------------------------------------------------------------- enrich

struct EnrichCommand {
  std::string selection, gmt, names, output = "-";
  double threshold = 0.05;

  void add_to(CLI::App& app) {
    app.add_option("--selection", selection, "Selected variables (fit report JSON or 0/1 CSV)")->required();
    app.add_option("--gmt", gmt, "Gene sets in GMT format")->required();
    app.add_option("--names", names, "Variable names, one per line, in column order")->required();
    app.add_option("--threshold", threshold, "Adjusted p-value threshold")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    app.add_option("--output,-o", output, "JSON result ('-' for stdout)")->capture_default_str();
  }

  int run() const {
    const auto sel = read_mask(selection);
    const auto universe = read_names(names);
    if (static_cast<Index>(universe.size()) != sel.size())
      throw InputError("selection has " + std::to_string(sel.size()) + " entries but " + std::to_string(universe.size()) +
                       " names were given");
    auto in = detail::open_input(gmt);
    const auto sets = parse_gmt(in, universe);
    const auto r = pei(sel, sets, threshold);

    json j;
    j["version"] = kVersion;
    j["command"] = "enrich";
    j["config"] = {{"selection", selection}, {"gmt", gmt}, {"names", names}, {"threshold", threshold}};
    j["selected"] = sel.q();
    j["pei"] = r.pei;
    j["dropped_sets"] = sets.dropped_sets;
    json rows = json::array(), hits = json::array();
    for (const auto& s : r.sets) {
      rows.push_back({{"name", s.name},
                      {"size", s.size},
                      {"overlap", s.overlap},
                      {"pvalue", s.pvalue},
                      {"adjusted", s.adjusted},
                      {"enriched", s.enriched}});
      if (s.enriched) hits.push_back(s.name);
    }
    j["sets"] = rows;
    j["enriched"] = hits;
    write_json(output, j);
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Globally sparse probabilistic PCA"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  FitCommand fit;
  SimulateCommand sim;
  BenchmarkCommand bench;
  EvaluateCommand eval;
  EnrichCommand enrich;
  auto* fit_cmd = app.add_subcommand("fit", "Select the support of a data matrix");
  fit.add_to(*fit_cmd);
  auto* sim_cmd = app.add_subcommand("simulate", "Write a simulated data set and its truth");
  sim.add_to(*sim_cmd);
  auto* bench_cmd = app.add_subcommand("benchmark", "Replicated F-scores over an SNR or sample-size grid");
  bench.add_to(*bench_cmd);
  auto* eval_cmd = app.add_subcommand("evaluate", "F-score of a predicted support");
  eval.add_to(*eval_cmd);
  auto* enrich_cmd = app.add_subcommand("enrich", "Pathway enrichment index of a selection");
  enrich.add_to(*enrich_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInput;
  }

  try {
    if (*fit_cmd) return fit.run();
    if (*sim_cmd) return sim.run();
    if (*bench_cmd) return bench.run();
    if (*eval_cmd) return eval.run();
    return enrich.run();
  } catch (const NumericalError& e) {
    std::cerr << "gsppca: numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "gsppca: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "gsppca: " << e.what() << '\n';
    return kExitNumerical;
  }
}
