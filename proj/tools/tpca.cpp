// Command-line front end: generate, recover, sweep, diagnose, cp.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "tpca/tpca.hpp"

namespace {

using namespace tpca;

struct InstanceFlags {
  std::size_t n = 50;
  std::vector<std::size_t> dims;
  std::size_t k = 3;
  double beta = 1.44;
  std::uint64_t seed = 0;
  std::size_t spikes = 1;
  bool plain_noise = false;
  std::string in;

  void add(CLI::App* app, bool allow_input) {
    app->add_option("--n", n, "Dimension of every axis")->check(CLI::PositiveNumber);
    app->add_option("--dims", dims, "Per-axis dimensions, e.g. 50,75,100")->delimiter(',');
    app->add_option("--k", k, "Tensor order")->check(CLI::IsMember({3, 4}));
    app->add_option("--beta", beta, "Signal-to-noise ratio")->check(CLI::NonNegativeNumber);
    app->add_option("--seed", seed, "Master seed");
    app->add_option("--spikes", spikes, "Number of planted spikes (orthogonal when > 1)")->check(CLI::PositiveNumber);
    app->add_flag("--plain-noise", plain_noise, "Use i.i.d. noise instead of symmetrized noise");
    if (allow_input) app->add_option("--in", in, "Read the instance from a tensor file instead of generating it");
  }

  DenseTensor::Dims tensor_dims() const {
    if (!dims.empty()) return dims;  // the order follows the number of entries
    return DenseTensor::Dims(k, n);
  }

  SpikedInstance generate() const {
    const auto d = tensor_dims();
    SpikeOptions so;
    const bool equal = std::all_of(d.begin(), d.end(), [&](std::size_t x) { return x == d[0]; });
    so.symmetric_noise = !plain_noise && equal;
    so.num_spikes = spikes;
    so.orthogonal_spikes = spikes > 1;
    return generate_spiked(d, beta, seed, so);
  }

  /// Instance from --in (ground truth optional) or freshly generated.
  SpikedInstance load_or_generate() const {
    if (in.empty()) return generate();
    TensorFile f = read_tensor(in);
    if (!f.truth) return SpikedInstance{f.tensor, f.tensor, {}, 0, false};
    DenseTensor z = f.noise();
    return SpikedInstance{std::move(f.tensor), std::move(z), f.truth->spikes, f.truth->seed, f.truth->symmetric_noise};
  }
};

struct IterFlags {
  std::size_t m_init = 0, m_iter = 0, lag = 0;
  double eps = 1e-6;

  void add(CLI::App* app) {
    app->add_option("--m-init", m_init, "Random initializations (default 10 n)");
    app->add_option("--m-iter", m_iter, "Iteration budget per initialization (default 10 n)");
    app->add_option("--lag", lag, "Lag of the stopping rule (default n)");
    app->add_option("--eps", eps, "Tolerance of the stopping rule")->check(CLI::Range(0.0, 1.0));
  }

  void apply(AlgorithmParams& p) const {
    p.m_init = m_init;
    p.m_iter = m_iter;
    p.lag = lag;
    p.eps = eps;
  }
};

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    tpca::detail::write_file(out, text);
  }
}

std::string csv_line(std::initializer_list<std::string> fields) {
  std::string s;
  for (const auto& f : fields) {
    if (!s.empty()) s += ',';
    s += f;
  }
  return s + '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tensor PCA recovery toolkit"};
  app.set_version_flag("--version", std::string(tpca::kVersion));
  app.require_subcommand(1);

  // generate -----------------------------------------------------------------
  InstanceFlags gen;
  std::string gen_out;
  auto* generate = app.add_subcommand("generate", "Write a spiked instance to a tensor file");
  gen.add(generate, false);
  generate->add_option("--out", gen_out, "Output tensor file")->required();

  // recover ------------------------------------------------------------------
  InstanceFlags rec_inst;
  IterFlags rec_iter;
  std::string rec_algo = "smpi", rec_out;
  auto* recover = app.add_subcommand("recover", "Run one algorithm on one instance; prints a CSV row");
  rec_inst.add(recover, true);
  rec_iter.add(recover);
  recover->add_option("--algo", rec_algo, "smpi, naive_pi, unfolding, asymmetric or cp");
  recover->add_option("--out", rec_out, "CSV output (default stdout)");

  // sweep --------------------------------------------------------------------
  SweepConfig sw;
  IterFlags sw_iter;
  std::vector<std::string> sw_algos{"smpi"};
  std::vector<std::size_t> sw_dims;
  std::string sw_out;
  bool sw_plain = false;
  auto* sweep = app.add_subcommand("sweep", "Paired sweep over n, beta and instances");
  sweep->add_option("--n", sw.n_list, "Dimensions, comma separated")->delimiter(',');
  sweep->add_option("--dims", sw_dims, "Fixed per-axis dimensions instead of --n")->delimiter(',');
  sweep->add_option("--k", sw.k, "Tensor order")->check(CLI::IsMember({3, 4}));
  sweep->add_option("--beta", sw.beta_list, "Signal-to-noise ratios, comma separated")->delimiter(',')->required();
  sweep->add_option("--algo", sw_algos, "Algorithms, comma separated")->delimiter(',');
  sweep->add_option("--instances", sw.instances, "Instances per (n, beta)")->check(CLI::PositiveNumber);
  sweep->add_option("--seed", sw.master_seed, "Master seed");
  sweep->add_option("--spikes", sw.num_spikes, "Planted spikes per instance")->check(CLI::PositiveNumber);
  sweep->add_option("--cp-rank", sw.params.cp_rank, "Target rank for cp")->check(CLI::PositiveNumber);
  sweep->add_option("--naive-n-init", sw.params.naive_n_init, "Initializations of naive_pi");
  sweep->add_option("--naive-max-iter", sw.params.naive_max_iter, "Iteration budget of naive_pi (default 5 ln n)");
  sweep->add_option("--success-corr", sw.success_corr, "Correlation counted as a success")->check(CLI::Range(0.0, 1.0));
  sweep->add_flag("--trajectory", sw.capture_trajectory, "Count escape events on the selected smpi trajectory");
  sweep->add_option("--threads", sw.threads, "Concurrent cells")->check(CLI::PositiveNumber);
  sweep->add_flag("--plain-noise", sw_plain, "Use i.i.d. noise instead of symmetrized noise");
  sweep->add_option("--out", sw_out, "CSV output; a .json sidecar is written next to it")->required();
  sw_iter.add(sweep);

  // diagnose -----------------------------------------------------------------
  InstanceFlags dg_inst;
  IterFlags dg_iter;
  EscapeOptions dg_escape;
  double dg_success = 0.9;
  bool dg_traj = false;
  std::string dg_out;
  auto* diagnose = app.add_subcommand("diagnose", "Per-trial SMPI diagnostics: plateau, escapes, success rate");
  dg_inst.add(diagnose, true);
  dg_iter.add(diagnose);
  diagnose->add_option("--success-corr", dg_success, "Correlation counted as a success")->check(CLI::Range(0.0, 1.0));
  diagnose->add_flag("--trajectory", dg_traj, "Record trajectories and count escape events");
  diagnose->add_option("--stagnation-tol", dg_escape.stagnation_tol, "Step length counted as stagnation");
  diagnose->add_option("--window", dg_escape.window, "Minimum stagnation window length");
  diagnose->add_option("--out", dg_out, "Per-trial CSV output (default stdout)");

  // cp -----------------------------------------------------------------------
  InstanceFlags cp_inst;
  IterFlags cp_iter;
  std::size_t cp_rank = 0;
  std::string cp_out;
  auto* cp = app.add_subcommand("cp", "Low-rank CP decomposition by deflation");
  cp_inst.add(cp, true);
  cp_iter.add(cp);
  cp->add_option("--rank", cp_rank, "Target rank (default: number of planted spikes)");
  cp->add_option("--out", cp_out, "CSV output (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*generate) {
      const SpikedInstance inst = gen.generate();
      write_instance(gen_out, inst);
      std::cerr << "wrote " << gen_out << " (hash " << content_hash(inst.tensor) << ")\n";
    } else if (*recover) {
      const SpikedInstance inst = rec_inst.load_or_generate();
      SweepConfig cfg;
      rec_iter.apply(cfg.params);
      cfg.params.cp_rank = std::max<std::size_t>(1, inst.spikes.size());
      const SweepRecord r = run_cell(parse_algorithm(rec_algo), inst, inst.spikes.empty() ? std::nan("") : inst.spikes.front().beta, cfg);
      if (!r.ok()) std::cerr << "recover failed: " << r.error << '\n';
      emit(rec_out, std::string(kCsvHeader) + '\n' + csv_row(r) + '\n');
      return r.ok() ? 0 : 1;
    } else if (*sweep) {
      sw.algorithms.clear();
      for (const auto& a : sw_algos) sw.algorithms.push_back(parse_algorithm(a));
      if (!sw_dims.empty()) {
        sw.dims = sw_dims;
        sw.k = sw_dims.size();
      }
      sw.symmetric_noise = !sw_plain;
      sw_iter.apply(sw.params);
      const SweepReport rep = run_sweep(sw);
      write_report(rep, sw_out);
      for (const auto& a : rep.aggregates)
        std::cerr << to_string(a.algo) << " n=" << a.n << " beta=" << a.beta << " mean_corr=" << a.mean_correlation
                  << " +/- " << a.ci_half_width << " (" << a.count << " ok, " << a.failures << " failed)\n";
    } else if (*diagnose) {
      const SpikedInstance inst = dg_inst.load_or_generate();
      const DenseTensor sym = inst.tensor.is_symmetric() ? inst.tensor : symmetrize(inst.tensor);
      const std::size_t n = sym.dim(0);
      AlgorithmParams p;
      dg_iter.apply(p);
      const IterationConfig cfg = tpca::detail::smpi_config(p, n, false);
      const std::size_t m_init = p.m_init ? p.m_init : 10 * n;
      const bool truth = !inst.spikes.empty();
      SmpiOptions so;
      if (truth) so.ground_truth = inst.planted();
      const LeaveOneKernel kernel(sym);
      const std::uint64_t seed = algorithm_seed(inst.seed, Algorithm::smpi);
      const std::vector<TrialResult> trials = run_trials(kernel, m_init, cfg, seed, so);

      std::string out = csv_line({"trial", "init_seed", "correlation", "objective", "iterations", "stop_reason",
                                  "escapes", "unstable_escapes", "plateau_stat", "plateau_predicted"});
      IterationConfig rec_cfg = cfg;
      rec_cfg.record_trajectory = true;
      for (const auto& t : trials) {
        if (!t.ok()) {
          out += csv_line({std::to_string(t.trial), std::to_string(t.init_seed), "nan", "nan", "0", "failed", "", "",
                           "", ""});
          continue;
        }
        std::string esc, unstable, plat, pred;
        if (dg_traj) {
          const Trajectory tr = run_iteration(kernel, trial_init(seed, t.trial, n), rec_cfg);
          const auto events = escape_analysis(sym, tr, dg_escape);
          esc = std::to_string(events.size());
          unstable = std::to_string(std::count_if(events.begin(), events.end(), [](const auto& e) { return e.unstable; }));
        }
        if (truth && sym.order() == 3) {
          plat = format_double(plateau_statistic(inst.noise, t.final_vector, inst.planted()));
          try {
            const double c = dot(t.final_vector, inst.planted());
            const double tn = norm(contract_power_leave_one(sym, t.final_vector, 0));
            pred = format_double(plateau_predicted(c, tn, inst.signal_scale()));
          } catch (const SingularCase&) {
            pred = "nan";
          }
        }
        out += csv_line({std::to_string(t.trial), std::to_string(t.init_seed),
                         format_double(t.correlation ? *t.correlation : std::nan("")), format_double(t.objective),
                         std::to_string(t.iterations_used), to_string(t.stop_reason), esc, unstable, plat, pred});
      }
      emit(dg_out, out);
      const RecoveryResult res = assemble_recovery(trials, m_init, cfg, seed);
      std::cerr << "selected trial " << res.selected_trial << " objective " << res.objective;
      if (truth) {
        const SuccessStats st = success_stats(res.per_trial, dg_success);
        std::cerr << " correlation " << dot(res.estimate, inst.planted()) << "; success fraction " << st.p
                  << " (corr >= " << dg_success << "), starts for 99%: " << st.m_for_rate(0.99);
      }
      std::cerr << '\n';
    } else if (*cp) {
      const SpikedInstance inst = cp_inst.load_or_generate();
      const std::size_t rank = cp_rank ? cp_rank : std::max<std::size_t>(1, inst.spikes.size());
      CpOptions co;
      co.m_init = cp_iter.m_init;
      co.m_iter = cp_iter.m_iter;
      co.lag = cp_iter.lag;
      co.eps = cp_iter.eps;
      const CpResult r = cp_decompose(inst.tensor, rank, algorithm_seed(inst.seed, Algorithm::cp), co);
      std::string out = csv_line({"component", "trial", "alpha", "beta_hat", "objective", "best_planted", "correlation"});
      for (std::size_t c = 0; c < r.spikes.size(); ++c) {
        const auto& comp = r.spikes[c];
        std::string best = "", corr = "nan";
        double bc = -1.0;
        for (std::size_t l = 0; l < inst.spikes.size(); ++l) {
          const double x = std::abs(dot(comp.vector, inst.spikes[l].vector()));
          if (x > bc) {
            bc = x;
            best = std::to_string(l);
            corr = format_double(x);
          }
        }
        out += csv_line({std::to_string(c), std::to_string(comp.trial), format_double(comp.alpha),
                         format_double(comp.beta_hat), format_double(comp.objective), best, corr});
      }
      emit(cp_out, out);
      std::cerr << "accepted " << r.accepted << ", merged " << r.merged << (r.shortfall ? ", shortfall" : "") << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
