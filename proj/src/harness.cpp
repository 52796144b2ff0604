#include "mesa/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "mesa/baselines.hpp"
#include "mesa/errors.hpp"

namespace mesa::harness {
namespace {

constexpr double kSuccessThreshold = 0.01;  // max matched error, cycles
const double kNaN = std::numeric_limits<double>::quiet_NaN();

// Minimum-cost assignment (Hungarian algorithm with potentials), row i of
// `cost` matched to exactly one column.
std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> match(static_cast<std::size_t>(n) + 1, 0);
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<bool> used(static_cast<std::size_t>(n) + 1, false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const int i0 = match[static_cast<std::size_t>(j0)];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) -
                           u[static_cast<std::size_t>(i0)] -
                           v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(
              match[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] =
          match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j)
    if (match[static_cast<std::size_t>(j)] > 0)
      row_to_col[static_cast<std::size_t>(
          match[static_cast<std::size_t>(j)] - 1)] = j - 1;
  return row_to_col;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double snr_to_sigma(const SourceModel& model, double snr_db) {
  return model.powers.at(0) / std::pow(10.0, snr_db / 10.0);
}

struct MethodOutcome {
  std::vector<double> freqs;
  double nll = std::numeric_limits<double>::quiet_NaN();
  int mm_iters = 0;
  long admm_iters = 0;
  bool converged = true;
  std::vector<double> nll_trace;
};

MethodOutcome run_method(Method method, const Eigen::MatrixXcd& r_hat,
                         const ExperimentSpec& spec,
                         const ScenarioPoint& point) {
  MethodOutcome out;
  const int k = point.model.k();
  switch (method) {
    case Method::mesa:
    case Method::mesa1: {
      SolverConfig cfg = spec.solver;
      cfg.k = k;
      cfg.single_mm_iteration = (method == Method::mesa1);
      const SolveReport report =
          solve(r_hat, spec.snapshots, spec.geometry, cfg);
      out.freqs = report.estimate.freqs;
      out.nll = report.nll_trace.empty() ? kNaN : report.nll_trace.back();
      out.mm_iters = report.mm_iters;
      out.admm_iters = report.total_admm_iters;
      out.converged = report.converged;
      out.nll_trace = report.nll_trace;
      break;
    }
    case Method::ss_music:
      out.freqs = ss_music(r_hat, spec.geometry, k).freqs;
      break;
    case Method::rootmusic:
      out.freqs = rootmusic_direct(r_hat, k);
      break;
  }
  return out;
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::mesa: return "mesa";
    case Method::mesa1: return "mesa1";
    case Method::ss_music: return "ss_music";
    case Method::rootmusic: return "rootmusic";
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  if (name == "mesa") return Method::mesa;
  if (name == "mesa1") return Method::mesa1;
  if (name == "ss_music") return Method::ss_music;
  if (name == "rootmusic") return Method::rootmusic;
  throw std::invalid_argument("unknown method: " + name);
}

ScenarioPoint scenario_at(const ExperimentSpec& spec, double sweep_value) {
  ScenarioPoint point;
  point.model = spec.base_model;
  double snr_db = spec.snr_db;

  if (spec.sweep_variable == "snr_db") {
    snr_db = sweep_value;
  } else if (spec.sweep_variable == "k") {
    const int k = static_cast<int>(std::lround(sweep_value));
    if (k < 1 || std::abs(sweep_value - k) > 1e-9)
      throw std::invalid_argument("sweep k values must be positive integers");
    point.model.freqs.resize(static_cast<std::size_t>(k));
    point.model.powers.assign(static_cast<std::size_t>(k), 1.0);
    point.model.correlations.clear();
    for (int i = 0; i < k; ++i)
      point.model.freqs[static_cast<std::size_t>(i)] =
          -0.44 + 0.98 * i / static_cast<double>(k);
  } else if (spec.sweep_variable == "separation") {
    const std::size_t last = point.model.freqs.size() - 1;
    if (point.model.freqs.size() < 2)
      throw std::invalid_argument("separation sweep needs >= 2 sources");
    point.model.freqs[last] = point.model.freqs[last - 1] + sweep_value;
  } else if (spec.sweep_variable == "rho") {
    if (point.model.correlations.empty())
      throw std::invalid_argument("rho sweep needs a declared correlation");
    auto& corr = point.model.correlations.front();
    const double mod = std::abs(corr.c);
    if (mod <= 0.0)
      throw std::invalid_argument("rho sweep needs a nonzero base phase");
    corr.c *= sweep_value / mod;
  } else {
    throw std::invalid_argument("unknown sweep variable: " +
                                spec.sweep_variable);
  }
  point.sigma = snr_to_sigma(point.model, snr_db);
  return point;
}

MatchResult match_frequencies(const std::vector<double>& est,
                              const std::vector<double>& truth) {
  const int k = static_cast<int>(truth.size());
  const int e = static_cast<int>(est.size());
  if (k == 0) throw std::invalid_argument("match_frequencies: empty truth");
  if (e > k)
    throw std::invalid_argument("match_frequencies: more estimates than sources");
  Eigen::MatrixXd cost(k, k);
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const double d =
          j < e ? wrap_distance(truth[static_cast<std::size_t>(i)],
                                est[static_cast<std::size_t>(j)])
                : 0.5;  // missing estimate: maximum wrap distance
      cost(i, j) = d * d;
    }
  }
  const std::vector<int> assign = min_cost_assignment(cost);
  MatchResult out;
  double sumsq = 0.0;
  for (int i = 0; i < k; ++i) {
    const double err =
        std::sqrt(cost(i, assign[static_cast<std::size_t>(i)]));
    sumsq += err * err;
    out.max_error = std::max(out.max_error, err);
  }
  out.rmse = std::sqrt(sumsq / k);
  return out;
}

double rmse(const std::vector<double>& est, const std::vector<double>& truth) {
  return match_frequencies(est, truth).rmse;
}

RunSummary run(const ExperimentSpec& spec, int threads) {
  if (spec.n_runs < 1) throw std::invalid_argument("run: n_runs must be >= 1");
  if (spec.sweep_values.empty())
    throw std::invalid_argument("run: no sweep values");
  if (spec.methods.empty()) throw std::invalid_argument("run: no methods");
  for (Method m : spec.methods)
    if (m == Method::rootmusic && !spec.geometry.is_ula())
      throw std::invalid_argument("run: rootmusic requires a ULA geometry");

  const int n_points = static_cast<int>(spec.sweep_values.size());
  const int n_methods = static_cast<int>(spec.methods.size());
  const int n_runs = spec.n_runs;

  // Resolve every sweep point up front so scenario errors surface early.
  std::vector<ScenarioPoint> points;
  points.reserve(static_cast<std::size_t>(n_points));
  for (double v : spec.sweep_values) points.push_back(scenario_at(spec, v));

  RunSummary summary;
  summary.sweep_var = spec.sweep_variable;
  summary.records.resize(static_cast<std::size_t>(n_points) * n_runs *
                         n_methods);
  std::vector<double> wall_ms(summary.records.size(), 0.0);

  const auto record_index = [&](int pi, int ri, int mi) {
    return (static_cast<std::size_t>(pi) * n_runs + ri) * n_methods + mi;
  };

  const auto run_task = [&](int pi, int ri) {
    const ScenarioPoint& point = points[static_cast<std::size_t>(pi)];
    const std::uint64_t seed =
        spec.base_seed + static_cast<std::uint64_t>(pi) * n_runs +
        static_cast<std::uint64_t>(ri);
    for (int mi = 0; mi < n_methods; ++mi) {
      RunRecord& rec = summary.records[record_index(pi, ri, mi)];
      rec.sweep_value = spec.sweep_values[static_cast<std::size_t>(pi)];
      rec.method = spec.methods[static_cast<std::size_t>(mi)];
      rec.run = ri;
      rec.seed = seed;
      rec.nll = kNaN;
    }
    Eigen::MatrixXcd r_hat;
    try {
      Rng rng(seed);
      const SnapshotSet data =
          synthesize(point.model, point.sigma, spec.geometry, spec.snapshots,
                     rng);
      r_hat = sample_covariance(data);
    } catch (const std::exception& e) {
      for (int mi = 0; mi < n_methods; ++mi) {
        RunRecord& rec = summary.records[record_index(pi, ri, mi)];
        rec.excluded = true;
        rec.error = e.what();
      }
      return;
    }
    for (int mi = 0; mi < n_methods; ++mi) {
      RunRecord& rec = summary.records[record_index(pi, ri, mi)];
      const auto start = std::chrono::steady_clock::now();
      try {
        const MethodOutcome out =
            run_method(rec.method, r_hat, spec, point);
        const MatchResult match =
            match_frequencies(out.freqs, point.model.freqs);
        rec.freqs = out.freqs;
        rec.rmse = match.rmse;
        rec.success = match.max_error < kSuccessThreshold;
        rec.nll = out.nll;
        rec.mm_iters = out.mm_iters;
        rec.admm_iters = out.admm_iters;
        rec.converged = out.converged;
        rec.nll_trace = out.nll_trace;
      } catch (const std::exception& e) {
        rec.excluded = true;
        rec.error = e.what();
      }
      const auto stop = std::chrono::steady_clock::now();
      wall_ms[record_index(pi, ri, mi)] =
          std::chrono::duration<double, std::milli>(stop - start).count();
    }
  };

  // Independent tasks over a small pool; records are slot-addressed so the
  // result does not depend on scheduling.
  const int task_count = n_points * n_runs;
  int n_threads = threads > 0
                      ? threads
                      : static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::max(1, std::min(n_threads, task_count));
  std::atomic<int> next{0};
  const auto worker = [&]() {
    while (true) {
      const int idx = next.fetch_add(1);
      if (idx >= task_count) break;
      run_task(idx / n_runs, idx % n_runs);
    }
  };
  std::vector<std::thread> pool;
  for (int i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  // CRB per sweep point (independent of the draws).
  std::vector<double> crb_rmse_per_point(static_cast<std::size_t>(n_points),
                                         kNaN);
  for (int pi = 0; pi < n_points; ++pi) {
    try {
      const ScenarioPoint& point = points[static_cast<std::size_t>(pi)];
      CrbRequest req{point.model.freqs, point.model.powers,
                     point.model.correlations, point.sigma, spec.geometry,
                     spec.snapshots};
      const CrbResult crb = crb_freqs(req);
      crb_rmse_per_point[static_cast<std::size_t>(pi)] =
          std::sqrt(crb.freq_variances.mean());
    } catch (const std::exception&) {
      // leave NaN
    }
  }

  for (int pi = 0; pi < n_points; ++pi) {
    for (int mi = 0; mi < n_methods; ++mi) {
      SummaryRow row;
      row.sweep_value = spec.sweep_values[static_cast<std::size_t>(pi)];
      row.method = spec.methods[static_cast<std::size_t>(mi)];
      row.crb_rmse = crb_rmse_per_point[static_cast<std::size_t>(pi)];
      row.n_runs = n_runs;
      double sum_rmse = 0.0, sum_nll = 0.0, sum_mm = 0.0, sum_admm = 0.0,
             sum_wall = 0.0;
      int valid = 0, successes = 0, with_nll = 0;
      for (int ri = 0; ri < n_runs; ++ri) {
        const RunRecord& rec = summary.records[record_index(pi, ri, mi)];
        sum_wall += wall_ms[record_index(pi, ri, mi)];
        if (rec.excluded) {
          ++row.n_excluded;
          continue;
        }
        ++valid;
        sum_rmse += rec.rmse;
        sum_mm += rec.mm_iters;
        sum_admm += static_cast<double>(rec.admm_iters);
        if (rec.success) ++successes;
        if (std::isfinite(rec.nll)) {
          sum_nll += rec.nll;
          ++with_nll;
        }
      }
      row.rmse = valid > 0 ? sum_rmse / valid : kNaN;
      row.success_rate = static_cast<double>(successes) / n_runs;
      row.mean_nll = with_nll > 0 ? sum_nll / with_nll : kNaN;
      row.mean_mm_iters = valid > 0 ? sum_mm / valid : kNaN;
      row.mean_admm_iters = valid > 0 ? sum_admm / valid : kNaN;
      row.mean_wall_ms = sum_wall / n_runs;
      summary.rows.push_back(row);
    }
  }
  return summary;
}

std::string summary_table(const RunSummary& summary) {
  std::string out =
      "sweep_var,sweep_value,method,rmse,success_rate,mean_nll,"
      "mean_mm_iters,mean_admm_iters,crb_rmse,n_runs,n_excluded\n";
  for (const SummaryRow& row : summary.rows) {
    out += summary.sweep_var + ',' + fmt_double(row.sweep_value) + ',' +
           method_name(row.method) + ',' + fmt_double(row.rmse) + ',' +
           fmt_double(row.success_rate) + ',' + fmt_double(row.mean_nll) +
           ',' + fmt_double(row.mean_mm_iters) + ',' +
           fmt_double(row.mean_admm_iters) + ',' +
           fmt_double(row.crb_rmse) + ',' + std::to_string(row.n_runs) +
           ',' + std::to_string(row.n_excluded) + '\n';
  }
  return out;
}

std::string records_jsonl(const RunSummary& summary) {
  std::string out;
  for (const RunRecord& rec : summary.records) {
    nlohmann::json j;
    j["sweep_var"] = summary.sweep_var;
    j["sweep_value"] = rec.sweep_value;
    j["method"] = method_name(rec.method);
    j["run"] = rec.run;
    j["seed"] = rec.seed;
    j["excluded"] = rec.excluded;
    if (rec.excluded) {
      j["error"] = rec.error;
    } else {
      j["rmse"] = rec.rmse;
      j["success"] = rec.success;
      j["freqs"] = rec.freqs;
      if (!rec.nll_trace.empty()) {
        j["nll"] = rec.nll;
        j["mm_iters"] = rec.mm_iters;
        j["admm_iters"] = rec.admm_iters;
        j["converged"] = rec.converged;
        j["nll_trace"] = rec.nll_trace;
      }
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

ExperimentSpec spec_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config parse error: ") +
                                e.what());
  }
  static const std::vector<std::string> known{
      "name",     "geometry", "source_model", "snr_db", "sweep",
      "snapshots", "n_runs",   "methods",      "base_seed", "solver"};
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw std::invalid_argument("config: unknown key '" + key + "'");

  ExperimentSpec spec;
  spec.name = j.value("name", "custom");
  if (!j.contains("geometry"))
    throw std::invalid_argument("config: missing geometry");
  const auto& geo = j.at("geometry");
  if (geo.is_object() && geo.contains("ula"))
    spec.geometry = ula(geo.at("ula").get<int>());
  else if (geo.is_array())
    spec.geometry = from_indices(geo.get<std::vector<int>>());
  else
    throw std::invalid_argument(
        "config: geometry must be {\"ula\": N} or an index list");

  if (!j.contains("source_model"))
    throw std::invalid_argument("config: missing source_model");
  const auto& sm = j.at("source_model");
  spec.base_model.freqs = sm.at("freqs").get<std::vector<double>>();
  if (sm.contains("powers"))
    spec.base_model.powers = sm.at("powers").get<std::vector<double>>();
  else
    spec.base_model.powers.assign(spec.base_model.freqs.size(), 1.0);
  if (sm.contains("correlations")) {
    for (const auto& c : sm.at("correlations")) {
      Correlation corr;
      corr.i = c.at("i").get<int>();
      corr.j = c.at("j").get<int>();
      corr.c = {c.at("re").get<double>(), c.at("im").get<double>()};
      spec.base_model.correlations.push_back(corr);
    }
  }

  spec.snr_db = j.value("snr_db", 10.0);
  if (!j.contains("sweep"))
    throw std::invalid_argument("config: missing sweep");
  spec.sweep_variable = j.at("sweep").at("variable").get<std::string>();
  spec.sweep_values = j.at("sweep").at("values").get<std::vector<double>>();
  spec.snapshots = j.value("snapshots", 100);
  spec.n_runs = j.value("n_runs", 200);
  if (j.contains("methods"))
    for (const auto& name : j.at("methods"))
      spec.methods.push_back(method_from_name(name.get<std::string>()));
  else
    spec.methods = {Method::mesa};
  spec.base_seed = j.value("base_seed", std::uint64_t{1});

  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    spec.solver.mu = s.value("mu", spec.solver.mu);
    spec.solver.mm_tol = s.value("mm_tol", spec.solver.mm_tol);
    spec.solver.mm_max_iters = s.value("mm_max_iters", spec.solver.mm_max_iters);
    spec.solver.admm_abs_tol = s.value("admm_abs_tol", spec.solver.admm_abs_tol);
    spec.solver.admm_rel_tol = s.value("admm_rel_tol", spec.solver.admm_rel_tol);
    spec.solver.admm_max_iters =
        s.value("admm_max_iters", spec.solver.admm_max_iters);
    spec.solver.init_eig_ratio_threshold =
        s.value("init_eig_ratio_threshold",
                spec.solver.init_eig_ratio_threshold);
    spec.solver.adapt_mu = s.value("adapt_mu", spec.solver.adapt_mu);
  }
  return spec;
}

std::vector<ExperimentSpec> presets() {
  std::vector<ExperimentSpec> out;
  const ArrayGeometry mra = from_indices({1, 2, 7, 10, 12, 14});
  const ArrayGeometry nested = from_indices({1, 2, 3, 4, 5, 10, 15, 20});
  const std::vector<double> exp2_freqs{-0.43, -0.28, -0.21, -0.05,
                                       0.1,   0.26,  0.42};

  {
    // Convergence run: three sources on a 10-element ULA, fixed SNR.
    ExperimentSpec s;
    s.name = "exp1";
    s.geometry = ula(10);
    s.base_model.freqs = {-0.5 + 4.0 / 19.0, -0.5 + 6.0 / 19.0,
                          -0.5 + 17.0 / 19.0};
    s.base_model.powers = {1.0, 1.0, 1.0};
    s.snr_db = 10.0;
    s.sweep_variable = "snr_db";
    s.sweep_values = {10.0};
    s.snapshots = 100;
    s.methods = {Method::mesa};
    out.push_back(s);
  }
  {
    // K = 7 > M uncorrelated sources on the MRA, SNR sweep.
    ExperimentSpec s;
    s.name = "exp2";
    s.geometry = mra;
    s.base_model.freqs = exp2_freqs;
    s.base_model.powers.assign(7, 1.0);
    s.sweep_variable = "snr_db";
    s.sweep_values = {-10, -5, 0, 5, 10, 15, 20};
    s.snapshots = 200;
    s.methods = {Method::mesa, Method::mesa1, Method::ss_music};
    out.push_back(s);
  }
  {
    // Source-count sweep on the MRA.
    ExperimentSpec s;
    s.name = "exp3";
    s.geometry = mra;
    s.base_model.freqs = {-0.44, 0.05};
    s.base_model.powers = {1.0, 1.0};
    s.snr_db = 10.0;
    s.sweep_variable = "k";
    s.sweep_values = {2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13};
    s.snapshots = 100;
    s.methods = {Method::mesa, Method::mesa1, Method::ss_music};
    out.push_back(s);
  }
  {
    // Resolution sweep: two of three sources separated by delta.
    ExperimentSpec s;
    s.name = "exp4";
    s.geometry = mra;
    s.base_model.freqs = {-0.2, 0.1, 0.1 + 0.001};
    s.base_model.powers = {1.0, 1.0, 1.0};
    s.snr_db = 10.0;
    s.sweep_variable = "separation";
    for (int i = 0; i < 15; ++i) s.sweep_values.push_back(0.001 + 0.002 * i);
    s.snapshots = 100;
    s.methods = {Method::mesa, Method::mesa1, Method::ss_music};
    out.push_back(s);
  }
  {
    // Coherent pair on the nested array, SNR sweep.
    ExperimentSpec s;
    s.name = "exp5";
    s.geometry = nested;
    s.base_model.freqs = {-0.2, -0.1, 0.2};
    s.base_model.powers = {1.0, 1.0, 1.0};
    s.base_model.correlations = {
        {1, 2, std::polar(1.0, std::numbers::pi / 3.0)}};
    s.sweep_variable = "snr_db";
    s.sweep_values = {-10, -5, 0, 5, 10, 15, 20};
    s.snapshots = 100;
    s.methods = {Method::mesa, Method::mesa1, Method::ss_music};
    out.push_back(s);
  }
  {
    // Same coherent pair on the MRA.
    ExperimentSpec s;
    s.name = "exp6";
    s.geometry = mra;
    s.base_model.freqs = {-0.2, -0.1, 0.2};
    s.base_model.powers = {1.0, 1.0, 1.0};
    s.base_model.correlations = {
        {1, 2, std::polar(1.0, std::numbers::pi / 3.0)}};
    s.sweep_variable = "snr_db";
    s.sweep_values = {-10, -5, 0, 5, 10, 15, 20};
    s.snapshots = 100;
    s.methods = {Method::mesa, Method::mesa1, Method::ss_music};
    out.push_back(s);
  }
  {
    // Correlation-modulus sweep between sources 1 and 4, K = 7 on the MRA.
    ExperimentSpec s;
    s.name = "exp7";
    s.geometry = mra;
    s.base_model.freqs = exp2_freqs;
    s.base_model.powers.assign(7, 1.0);
    s.base_model.correlations = {
        {1, 4, std::polar(1.0, std::numbers::pi / 4.0)}};
    s.snr_db = 10.0;
    s.sweep_variable = "rho";
    for (int i = 0; i <= 10; ++i) s.sweep_values.push_back(0.1 * i);
    s.snapshots = 200;
    s.methods = {Method::mesa, Method::mesa1, Method::ss_music};
    out.push_back(s);
  }
  return out;
}

}  // namespace mesa::harness
