// Command-line front end: estimation, simulation, CRB evaluation and Monte
// Carlo experiment reproduction on top of libmesa.
//
// Exit codes: 0 success (including honest non-convergence), 2 usage or input
// error, 3 numeric failure.

#include <CLI11.hpp>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mesa/baselines.hpp"
#include "mesa/crb.hpp"
#include "mesa/errors.hpp"
#include "mesa/geometry.hpp"
#include "mesa/harness.hpp"
#include "mesa/signal.hpp"
#include "mesa/snapshot_io.hpp"
#include "mesa/solver.hpp"
#include "mesa/toeplitz.hpp"

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string join(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += fmt(values[i]);
  }
  return out;
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    const double v = std::stod(item, &pos);
    if (pos != item.size())
      throw std::invalid_argument("bad number in list: " + item);
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("empty numeric list");
  return out;
}

mesa::ArrayGeometry parse_geometry(const std::string& text) {
  if (text.rfind("ula:", 0) == 0)
    return mesa::ula(std::stoi(text.substr(4)));
  const std::vector<double> values = parse_doubles(text);
  std::vector<int> indices;
  for (double v : values) {
    const int idx = static_cast<int>(std::lround(v));
    if (std::abs(v - idx) > 1e-9)
      throw std::invalid_argument("geometry indices must be integers");
    indices.push_back(idx);
  }
  return mesa::from_indices(indices);
}

mesa::Correlation parse_corr(const std::string& text) {
  const std::vector<double> v = parse_doubles(text);
  if (v.size() != 4)
    throw std::invalid_argument("--corr expects i,j,re,im");
  mesa::Correlation c;
  c.i = static_cast<int>(std::lround(v[0]));
  c.j = static_cast<int>(std::lround(v[1]));
  c.c = {v[2], v[3]};
  return c;
}

std::string geometry_string(const mesa::ArrayGeometry& g) {
  std::string out;
  for (std::size_t i = 0; i < g.indices.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(g.indices[i]);
  }
  return out;
}

void emit(const std::string& report, const std::string& out_path) {
  std::cout << report;
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw std::invalid_argument("cannot write: " + out_path);
    out << report;
  }
}

struct SimulateArgs {
  std::string geometry;
  std::string freqs;
  std::string powers;
  std::vector<std::string> corrs;
  double snr_db = 10.0;
  double sigma = -1.0;  // <0: derive from SNR
  int snapshots = 100;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_simulate(const SimulateArgs& args) {
  const mesa::ArrayGeometry g = parse_geometry(args.geometry);
  mesa::SourceModel model;
  model.freqs = parse_doubles(args.freqs);
  model.powers = args.powers.empty()
                     ? std::vector<double>(model.freqs.size(), 1.0)
                     : parse_doubles(args.powers);
  for (const std::string& text : args.corrs)
    model.correlations.push_back(parse_corr(text));
  const double sigma = args.sigma >= 0.0
                           ? args.sigma
                           : model.powers.at(0) /
                                 std::pow(10.0, args.snr_db / 10.0);
  mesa::Rng rng(args.seed);
  const mesa::SnapshotSet data =
      mesa::synthesize(model, sigma, g, args.snapshots, rng);
  mesa::write_snapshots(args.out, data);
  std::cerr << "wrote " << data.geometry.m << "x" << data.snapshots()
            << " snapshots to " << args.out << " (sigma=" << fmt(sigma)
            << ", seed=" << args.seed << ")\n";
  return 0;
}

struct EstimateArgs {
  std::string in;
  int k = 0;
  std::string method = "mesa";
  mesa::SolverConfig solver;
  std::string out;
};

int cmd_estimate(const EstimateArgs& args) {
  const mesa::SnapshotSet data = mesa::read_snapshots(args.in);
  const Eigen::MatrixXcd r_hat = mesa::sample_covariance(data);
  std::string report;
  report += "method = " + args.method + "\n";
  report += "geometry = " + geometry_string(data.geometry) + "\n";
  report += "k = " + std::to_string(args.k) + "\n";

  if (args.method == "mesa" || args.method == "mesa1") {
    mesa::SolverConfig cfg = args.solver;
    cfg.k = args.k;
    cfg.single_mm_iteration = (args.method == "mesa1");
    const mesa::SolveReport result =
        mesa::solve(r_hat, data.snapshots(), data.geometry, cfg);
    report += "freqs = " + join(result.estimate.freqs) + "\n";
    report += "powers = " + join(result.estimate.powers) + "\n";
    report += "sigma = " + fmt(result.estimate.sigma) + "\n";
    report += "nll = " + fmt(result.nll_trace.back()) + "\n";
    report += "nll_trace = " + join(result.nll_trace) + "\n";
    report += "mm_iters = " + std::to_string(result.mm_iters) + "\n";
    report += "admm_iters = " + std::to_string(result.total_admm_iters) + "\n";
    report += std::string("converged = ") +
              (result.converged ? "true" : "false") + "\n";
    report += "sources_found = " + std::to_string(result.sources_found) + "\n";
  } else if (args.method == "ss_music") {
    const mesa::SourceEstimate est =
        mesa::ss_music(r_hat, data.geometry, args.k);
    report += "freqs = " + join(est.freqs) + "\n";
  } else if (args.method == "rootmusic") {
    report += "freqs = " + join(mesa::rootmusic_direct(r_hat, args.k)) + "\n";
  } else {
    throw std::invalid_argument("unknown method: " + args.method);
  }
  emit(report, args.out);
  return 0;
}

struct DecomposeArgs {
  std::string in;
  int k = 0;
  std::string out;
};

int cmd_decompose(const DecomposeArgs& args) {
  const mesa::SnapshotSet data = mesa::read_snapshots(args.in);
  const Eigen::MatrixXcd r_hat = mesa::sample_covariance(data);
  const mesa::ToeplitzParam t =
      mesa::coarray_covariance(r_hat, data.geometry);
  const mesa::SourceEstimate est = mesa::vandermonde_decompose(t, args.k);
  std::string report;
  report += "geometry = " + geometry_string(data.geometry) + "\n";
  report += "coarray_len = " + std::to_string(t.n) + "\n";
  report += "freqs = " + join(est.freqs) + "\n";
  report += "powers = " + join(est.powers) + "\n";
  emit(report, args.out);
  return 0;
}

struct CrbArgs {
  std::string geometry;
  std::string freqs;
  std::string powers;
  std::vector<std::string> corrs;
  double snr_db = 10.0;
  double sigma = -1.0;
  int snapshots = 100;
  std::string out;
};

int cmd_crb(const CrbArgs& args) {
  mesa::CrbRequest req;
  req.geometry = parse_geometry(args.geometry);
  req.freqs = parse_doubles(args.freqs);
  req.powers = args.powers.empty()
                   ? std::vector<double>(req.freqs.size(), 1.0)
                   : parse_doubles(args.powers);
  for (const std::string& text : args.corrs)
    req.correlations.push_back(parse_corr(text));
  req.sigma = args.sigma >= 0.0 ? args.sigma
                                : req.powers.at(0) /
                                      std::pow(10.0, args.snr_db / 10.0);
  req.snapshots = args.snapshots;
  const mesa::CrbResult result = mesa::crb_freqs(req);
  std::string report;
  std::vector<double> variances(result.freq_variances.data(),
                                result.freq_variances.data() +
                                    result.freq_variances.size());
  report += "freq_variances = " + join(variances) + "\n";
  report += "crb_rmse = " + fmt(std::sqrt(result.freq_variances.mean())) + "\n";
  report += "fim_condition = " + fmt(result.fim_condition) + "\n";
  report += std::string("well_conditioned = ") +
            (result.well_conditioned ? "true" : "false") + "\n";
  emit(report, args.out);
  return 0;
}

struct ExperimentArgs {
  std::string preset;
  std::string config;
  int runs = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  std::string methods;
  std::string out = "experiment";
};

int cmd_experiment(const ExperimentArgs& args) {
  mesa::harness::ExperimentSpec spec;
  if (!args.config.empty()) {
    std::ifstream in(args.config);
    if (!in) throw std::invalid_argument("cannot open config: " + args.config);
    std::stringstream buffer;
    buffer << in.rdbuf();
    spec = mesa::harness::spec_from_json(buffer.str());
  } else {
    const std::vector<mesa::harness::ExperimentSpec> all =
        mesa::harness::presets();
    bool found = false;
    for (const auto& candidate : all)
      if (candidate.name == args.preset) {
        spec = candidate;
        found = true;
      }
    if (!found) {
      std::string names;
      for (const auto& candidate : all) names += " " + candidate.name;
      throw std::invalid_argument("unknown preset '" + args.preset +
                                  "'; available:" + names);
    }
  }
  if (args.runs > 0) spec.n_runs = args.runs;
  if (args.seed_set) spec.base_seed = args.seed;
  if (!args.methods.empty()) {
    spec.methods.clear();
    std::stringstream ss(args.methods);
    std::string name;
    while (std::getline(ss, name, ','))
      spec.methods.push_back(mesa::harness::method_from_name(name));
  }

  const mesa::harness::RunSummary summary =
      mesa::harness::run(spec, args.threads);
  const std::string table = mesa::harness::summary_table(summary);
  {
    std::ofstream out(args.out + ".csv");
    if (!out)
      throw std::invalid_argument("cannot write: " + args.out + ".csv");
    out << table;
  }
  {
    std::ofstream out(args.out + "_runs.jsonl");
    if (!out)
      throw std::invalid_argument("cannot write: " + args.out + "_runs.jsonl");
    out << mesa::harness::records_jsonl(summary);
  }
  std::cout << table;
  std::cerr << "wrote " << args.out << ".csv and " << args.out
            << "_runs.jsonl\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MESA: maximum-likelihood DOA estimation via sequential ADMM"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand(
      "simulate", "Synthesize array snapshots and write a snapshot file");
  simulate->add_option("--geometry", sim.geometry,
                       "ula:N or a comma-separated index list")->required();
  simulate->add_option("--freqs", sim.freqs, "source frequencies")->required();
  simulate->add_option("--powers", sim.powers, "source powers (default 1)");
  simulate->add_option("--corr", sim.corrs,
                       "correlation i,j,re,im (repeatable)");
  simulate->add_option("--snr-db", sim.snr_db, "SNR in dB (default 10)");
  simulate->add_option("--sigma", sim.sigma, "noise power (overrides SNR)");
  simulate->add_option("--snapshots", sim.snapshots, "snapshot count");
  simulate->add_option("--seed", sim.seed, "RNG seed");
  simulate->add_option("--out", sim.out, "output path")->required();

  EstimateArgs est;
  CLI::App* estimate = app.add_subcommand(
      "estimate", "Estimate frequencies/powers/noise from a snapshot file");
  estimate->add_option("--in", est.in, "snapshot file")->required();
  estimate->add_option("--k", est.k, "source count")->required();
  estimate->add_option("--method", est.method,
                       "mesa | mesa1 | ss_music | rootmusic");
  estimate->add_option("--mu", est.solver.mu, "ADMM penalty");
  estimate->add_option("--mm-max", est.solver.mm_max_iters,
                       "outer iteration budget");
  estimate->add_option("--admm-max", est.solver.admm_max_iters,
                       "inner iteration budget");
  estimate->add_flag("--adapt-mu", est.solver.adapt_mu,
                     "residual-balancing penalty adaptation");
  estimate->add_option("--out", est.out, "also write the report here");

  DecomposeArgs dec;
  CLI::App* decompose = app.add_subcommand(
      "decompose",
      "Coarray-average the sample covariance and retrieve sources");
  decompose->add_option("--in", dec.in, "snapshot file")->required();
  decompose->add_option("--k", dec.k, "source count")->required();
  decompose->add_option("--out", dec.out, "also write the report here");

  CrbArgs crb;
  CLI::App* crbcmd = app.add_subcommand(
      "crb", "Stochastic Cramer-Rao bounds for a source configuration");
  crbcmd->add_option("--geometry", crb.geometry,
                     "ula:N or a comma-separated index list")->required();
  crbcmd->add_option("--freqs", crb.freqs, "source frequencies")->required();
  crbcmd->add_option("--powers", crb.powers, "source powers (default 1)");
  crbcmd->add_option("--corr", crb.corrs,
                     "correlation i,j,re,im (repeatable)");
  crbcmd->add_option("--snr-db", crb.snr_db, "SNR in dB (default 10)");
  crbcmd->add_option("--sigma", crb.sigma, "noise power (overrides SNR)");
  crbcmd->add_option("--snapshots", crb.snapshots, "snapshot count");
  crbcmd->add_option("--out", crb.out, "also write the report here");

  ExperimentArgs exp;
  CLI::App* experiment = app.add_subcommand(
      "experiment", "Run a Monte Carlo experiment preset or config");
  experiment->add_option("preset", exp.preset, "preset name (exp1..exp7)");
  experiment->add_option("--config", exp.config, "JSON experiment config");
  experiment->add_option("--runs", exp.runs, "override the run count");
  auto* seed_opt = experiment->add_option("--seed", exp.seed,
                                          "override the base seed");
  experiment->add_option("--threads", exp.threads,
                         "worker threads (0 = hardware)");
  experiment->add_option("--methods", exp.methods,
                         "comma list overriding the preset methods");
  experiment->add_option("--out", exp.out, "output prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << e.what() << "\n";
    return 2;
  }
  exp.seed_set = seed_opt->count() > 0;

  try {
    if (simulate->parsed()) return cmd_simulate(sim);
    if (estimate->parsed()) {
      if (est.k < 1) {
        std::cerr << "estimate: --k must be >= 1\n";
        return 2;
      }
      return cmd_estimate(est);
    }
    if (decompose->parsed()) {
      if (dec.k < 1) {
        std::cerr << "decompose: --k must be >= 1\n";
        return 2;
      }
      return cmd_decompose(dec);
    }
    if (crbcmd->parsed()) return cmd_crb(crb);
    if (experiment->parsed()) {
      if (exp.preset.empty() && exp.config.empty()) {
        std::cerr << "experiment: give a preset name or --config\n";
        return 2;
      }
      return cmd_experiment(exp);
    }
  } catch (const mesa::numeric_failure& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const mesa::degenerate_spectrum& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const mesa::degenerate_coarray& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::domain_error& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
