#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mesa/crb.hpp"
#include "mesa/geometry.hpp"
#include "mesa/signal.hpp"
#include "mesa/solver.hpp"

namespace mesa::harness {

enum class Method { mesa, mesa1, ss_music, rootmusic };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

/// A Monte Carlo sweep: base scenario plus one swept variable.
/// Sweep semantics:
///  - "snr_db": noise power set to powers[0] / 10^(v/10);
///  - "k": v sources at f_i = -0.44 + 0.98 (i-1)/v (integer v);
///  - "separation": last frequency replaced by second-to-last + v;
///  - "rho": modulus of the first declared correlation set to v (phase kept).
struct ExperimentSpec {
  std::string name;
  ArrayGeometry geometry;
  SourceModel base_model;
  double snr_db = 10.0;  // fixed SNR when the sweep variable is not snr_db
  std::string sweep_variable;
  std::vector<double> sweep_values;
  int snapshots = 100;
  int n_runs = 200;
  std::vector<Method> methods;
  std::uint64_t base_seed = 1;
  SolverConfig solver;  // k is overwritten per sweep point
};

/// The fully resolved scenario at one sweep value.
struct ScenarioPoint {
  SourceModel model;
  double sigma = 0.0;
};
ScenarioPoint scenario_at(const ExperimentSpec& spec, double sweep_value);

/// Matched frequency errors under minimum-cost assignment (squared
/// wrap-around distance costs). Estimates may be fewer than the truth; each
/// missing source is charged the maximum wrap distance 0.5. More estimates
/// than truth throws std::invalid_argument.
struct MatchResult {
  double rmse = 0.0;
  double max_error = 0.0;
};
MatchResult match_frequencies(const std::vector<double>& est,
                              const std::vector<double>& truth);

/// sqrt((1/K) sum of squared matched errors).
double rmse(const std::vector<double>& est, const std::vector<double>& truth);

struct RunRecord {
  double sweep_value = 0.0;
  Method method = Method::mesa;
  int run = 0;
  std::uint64_t seed = 0;
  bool excluded = false;
  std::string error;
  double rmse = 0.0;
  bool success = false;
  double nll = 0.0;  // NaN for subspace baselines
  int mm_iters = 0;
  long admm_iters = 0;
  bool converged = false;
  std::vector<double> freqs;
  std::vector<double> nll_trace;
};

struct SummaryRow {
  double sweep_value = 0.0;
  Method method = Method::mesa;
  double rmse = 0.0;
  double success_rate = 0.0;
  double mean_nll = 0.0;
  double mean_mm_iters = 0.0;
  double mean_admm_iters = 0.0;
  double crb_rmse = 0.0;
  int n_runs = 0;
  int n_excluded = 0;
  double mean_wall_ms = 0.0;  // in-memory only, never serialized
};

struct RunSummary {
  std::string sweep_var;
  std::vector<SummaryRow> rows;
  std::vector<RunRecord> records;
};

/// Executes the sweep. Runs are independent tasks over a small worker pool
/// (threads = 0 picks the hardware concurrency); the result is bit-identical
/// regardless of the thread count. Per-run seed:
/// base_seed + sweep_index * n_runs + run_index.
RunSummary run(const ExperimentSpec& spec, int threads = 0);

/// The seven built-in experiment presets (exp1..exp7).
std::vector<ExperimentSpec> presets();

/// Aggregated results as a delimited table with header
/// sweep_var,sweep_value,method,rmse,success_rate,mean_nll,mean_mm_iters,
/// mean_admm_iters,crb_rmse,n_runs,n_excluded.
std::string summary_table(const RunSummary& summary);

/// Per-run records as JSON lines (one object per run and method).
std::string records_jsonl(const RunSummary& summary);

/// Parses an ExperimentSpec from a JSON document; unknown keys are rejected.
ExperimentSpec spec_from_json(const std::string& json_text);

}  // namespace mesa::harness
