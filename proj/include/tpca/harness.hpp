#pragma once

// Experiment sweeps over (algorithm, n, beta, instance) with paired
// instances, aggregation and CSV/JSON output.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "tpca/baselines.hpp"
#include "tpca/dense_tensor.hpp"
#include "tpca/diagnostics.hpp"
#include "tpca/error.hpp"
#include "tpca/rng.hpp"
#include "tpca/smpi.hpp"
#include "tpca/spiked_model.hpp"
#include "tpca/tensor_io.hpp"
#include "tpca/variants.hpp"
#include "tpca/version.hpp"

namespace tpca {

enum class Algorithm { smpi, naive_pi, unfolding, asymmetric, cp };

inline constexpr std::array<Algorithm, 5> kAllAlgorithms = {Algorithm::smpi, Algorithm::naive_pi, Algorithm::unfolding,
                                                            Algorithm::asymmetric, Algorithm::cp};

inline const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::smpi: return "smpi";
    case Algorithm::naive_pi: return "naive_pi";
    case Algorithm::unfolding: return "unfolding";
    case Algorithm::asymmetric: return "asymmetric";
    case Algorithm::cp: return "cp";
  }
  return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
  for (Algorithm a : kAllAlgorithms)
    if (s == to_string(a)) return a;
  throw InvalidArgument("unknown algorithm '" + s + "' (expected smpi, naive_pi, unfolding, asymmetric or cp)");
}

/// Per-algorithm knobs; zero means "derive from n".
struct AlgorithmParams {
  std::size_t m_init = 0;  ///< smpi, asymmetric, cp; default 10 n
  std::size_t m_iter = 0;  ///< smpi, asymmetric, cp; default 10 n
  std::size_t lag = 0;     ///< default n
  double eps = 1e-6;
  std::size_t naive_n_init = 5;
  std::size_t naive_max_iter = 0;  ///< default ceil(5 ln n)
  std::size_t cp_rank = 1;
  std::size_t batch_width = 16;
};

struct SweepConfig {
  std::vector<Algorithm> algorithms{Algorithm::smpi};
  std::size_t k = 3;
  std::vector<std::size_t> n_list;
  /// Explicit axis lengths; when set, n_list is ignored and n is reported as the rounded mean.
  std::optional<DenseTensor::Dims> dims;
  std::vector<double> beta_list;
  std::size_t instances = 1;
  std::uint64_t master_seed = 0;
  bool symmetric_noise = true;
  std::size_t num_spikes = 1;
  AlgorithmParams params;
  /// Record the selected SMPI trajectory and count escape events.
  bool capture_trajectory = false;
  EscapeOptions escape;
  double success_corr = 0.9;
  /// Cells run concurrently on this many threads; output does not depend on it.
  std::size_t threads = 1;

  void validate() const {
    detail::require(!algorithms.empty(), "SweepConfig: no algorithms");
    detail::require(dims.has_value() || !n_list.empty(), "SweepConfig: empty n list");
    detail::require(!beta_list.empty(), "SweepConfig: empty beta list");
    detail::require(instances >= 1, "SweepConfig: instances must be at least 1");
    detail::require(k >= 3, "SweepConfig: k must be at least 3");
    detail::require(!dims || dims->size() == k, "SweepConfig: dims length must equal k");
    detail::require(success_corr > 0.0 && success_corr < 1.0, "SweepConfig: success_corr must lie in (0, 1)");
  }
};

struct SweepRecord {
  Algorithm algo = Algorithm::smpi;
  std::size_t n = 0;
  std::size_t k = 3;
  double beta = 0.0;
  std::uint64_t instance_seed = 0;
  double correlation = std::nan("");
  double objective = std::nan("");
  std::size_t iterations = 0;
  std::string stop_reason;
  std::optional<std::size_t> escapes;
  std::optional<double> plateau_stat;
  double wall_ms = 0.0;
  std::uint64_t tensor_hash = 0;
  /// Non-empty for a failed cell.
  std::string error;

  bool ok() const noexcept { return error.empty(); }
};

struct CellAggregate {
  Algorithm algo = Algorithm::smpi;
  std::size_t n = 0;
  double beta = 0.0;
  std::size_t count = 0;
  std::size_t failures = 0;
  double mean_correlation = 0.0;
  double sd_correlation = 0.0;
  /// 1.96 * sd / sqrt(count).
  double ci_half_width = 0.0;
  double success_rate = 0.0;
  double mean_plateau = std::nan("");
};

struct SweepReport {
  SweepConfig config;
  std::vector<SweepRecord> records;
  std::vector<CellAggregate> aggregates;
};

/// Mean, sample standard deviation and 95% half-width of a sample.
struct SampleStats {
  double mean = 0.0, sd = 0.0, ci_half_width = 0.0;
  std::size_t count = 0;
};

inline SampleStats sample_stats(std::span<const double> xs) {
  SampleStats s;
  s.count = xs.size();
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    s.ci_half_width = 1.96 * s.sd / std::sqrt(static_cast<double>(xs.size()));
  }
  return s;
}

/// Seed of the instance for (n, beta index, instance index).
inline std::uint64_t instance_seed(std::uint64_t master_seed, std::size_t n, std::size_t beta_index,
                                   std::size_t instance) {
  return derive_seed(derive_seed(master_seed, n, beta_index), instance);
}

/// Seed an algorithm uses on a given instance.
inline std::uint64_t algorithm_seed(std::uint64_t inst_seed, Algorithm a) {
  return derive_seed(inst_seed, 0xA150000u + static_cast<std::uint64_t>(a));
}

namespace detail {

inline std::size_t or_default(std::size_t v, std::size_t fallback) { return v ? v : fallback; }

inline IterationConfig smpi_config(const AlgorithmParams& p, std::size_t n, bool record) {
  IterationConfig c;
  c.m_iter = or_default(p.m_iter, 10 * n);
  c.lag = or_default(p.lag, n);
  c.eps = p.eps;
  c.record_trajectory = record;
  return c;
}

}  // namespace detail

/// Runs one algorithm on one instance and fills a record (errors are captured).
inline SweepRecord run_cell(Algorithm algo, const SpikedInstance& inst, double beta, const SweepConfig& cfg) {
  SweepRecord rec;
  rec.algo = algo;
  rec.k = inst.tensor.order();
  rec.beta = beta;
  rec.instance_seed = inst.seed;
  rec.tensor_hash = content_hash(inst.tensor);
  const auto& dims = inst.tensor.dims();
  std::size_t total = 0;
  for (std::size_t d : dims) total += d;
  const std::size_t n = (total + dims.size() / 2) / dims.size();
  rec.n = n;
  const AlgorithmParams& p = cfg.params;
  const std::uint64_t seed = algorithm_seed(inst.seed, algo);
  // Without ground truth the correlation stays NaN and no plateau statistic is computed.
  const bool truth = !inst.spikes.empty();
  const Vector empty;
  const Vector& v0 = truth ? inst.planted() : empty;
  auto corr = [&](const Vector& v) { return truth ? dot(v, v0) : std::nan(""); };
  auto plateau = [&](const Vector& v) {
    if (!truth) return;
    try {
      rec.plateau_stat = plateau_statistic(inst.noise, v, v0);
    } catch (const Error&) {
      rec.plateau_stat.reset();
    }
  };

  const auto t0 = std::chrono::steady_clock::now();
  try {
    switch (algo) {
      case Algorithm::smpi: {
        const IterationConfig ic = detail::smpi_config(p, n, false);
        SmpiOptions so;
        so.batch_width = p.batch_width;
        const RecoveryResult r = smpi_recover(inst.tensor, detail::or_default(p.m_init, 10 * n), ic, seed, so);
        rec.correlation = corr(r.estimate);
        rec.objective = r.objective;
        const TrialResult& best = r.per_trial[r.selected_trial];
        rec.iterations = best.iterations_used;
        rec.stop_reason = to_string(best.stop_reason);
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        plateau(r.estimate);
        if (cfg.capture_trajectory && rec.k == 3) {
          // Replaying the selected trial alone reproduces it bitwise.
          const DenseTensor sym = inst.tensor.is_symmetric() ? inst.tensor : symmetrize(inst.tensor);
          const LeaveOneKernel kernel(sym);
          const Trajectory tr =
              run_iteration(kernel, trial_init(seed, r.selected_trial, n), detail::smpi_config(p, n, true));
          rec.escapes = escape_analysis(sym, tr, cfg.escape).size();
        }
        return rec;
      }
      case Algorithm::naive_pi: {
        NaivePiOptions no;
        no.n_init = p.naive_n_init;
        no.max_iter = p.naive_max_iter;
        no.eps = p.eps;
        const RecoveryResult r = naive_pi_recover(inst.tensor, seed, no);
        rec.correlation = corr(r.estimate);
        rec.objective = r.objective;
        rec.iterations = r.per_trial[r.selected_trial].iterations_used;
        rec.stop_reason = r.per_trial[r.selected_trial].stop_reason == StopReason::lag_converged ? "converged"
                                                                                                 : "budget_exhausted";
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        plateau(r.estimate);
        return rec;
      }
      case Algorithm::unfolding: {
        const UnfoldingResult r = unfolding_recover(inst.tensor);
        rec.correlation = corr(r.estimate);
        rec.objective = contract_power(inst.tensor, r.estimate);
        rec.iterations = r.iterations;
        rec.stop_reason = r.converged ? "converged" : "budget_exhausted";
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        plateau(r.estimate);
        return rec;
      }
      case Algorithm::asymmetric: {
        AsymmetricOptions ao;
        ao.m_init = p.m_init;
        ao.m_iter = p.m_iter;
        ao.lag = p.lag;
        ao.eps = p.eps;
        const AsymmetricRecovery r = asymmetric_recover(inst.tensor, seed, ao);
        if (truth) {
          const Spike& sp = inst.spikes.front();
          double c = 0.0;
          for (std::size_t a = 0; a < 3; ++a) c += std::abs(dot(r.axes[a], sp.axes[a]));
          rec.correlation = c / 3.0;
        }
        rec.objective = r.objective;
        rec.iterations = r.per_trial[r.selected_trial].sweeps;
        rec.stop_reason = to_string(r.per_trial[r.selected_trial].stop_reason);
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        return rec;
      }
      case Algorithm::cp: {
        CpOptions co;
        co.m_init = p.m_init;
        co.m_iter = p.m_iter;
        co.lag = p.lag;
        co.eps = p.eps;
        const CpResult r = cp_decompose(inst.tensor, p.cp_rank, seed, co);
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        if (r.spikes.empty()) throw DegenerateDirection("cp: no component accepted");
        // Component best matching the first planted spike (the top one without truth).
        const CpComponent* best = &r.spikes.front();
        if (truth)
          for (const auto& c : r.spikes)
            if (std::abs(dot(c.vector, v0)) > std::abs(dot(best->vector, v0))) best = &c;
        rec.correlation = corr(best->vector);
        rec.objective = best->objective;
        rec.iterations = r.accepted;
        rec.stop_reason = r.shortfall ? "shortfall" : "complete";
        plateau(best->vector);
        return rec;
      }
    }
  } catch (const Error& e) {
    rec.error = e.what();
    rec.stop_reason = "failed";
  }
  rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

inline std::vector<CellAggregate> aggregate(std::span<const SweepRecord> records, double success_corr) {
  std::map<std::tuple<int, std::size_t, double>, std::vector<const SweepRecord*>> cells;
  std::vector<std::tuple<int, std::size_t, double>> order;
  for (const auto& r : records) {
    const auto key = std::make_tuple(static_cast<int>(r.algo), r.n, r.beta);
    auto [it, inserted] = cells.try_emplace(key);
    if (inserted) order.push_back(key);
    it->second.push_back(&r);
  }
  std::vector<CellAggregate> out;
  for (const auto& key : order) {
    const auto& rs = cells[key];
    CellAggregate a;
    a.algo = static_cast<Algorithm>(std::get<0>(key));
    a.n = std::get<1>(key);
    a.beta = std::get<2>(key);
    std::vector<double> corr, plat;
    std::size_t succ = 0;
    for (const SweepRecord* r : rs) {
      if (!r->ok()) {
        ++a.failures;
        continue;
      }
      corr.push_back(r->correlation);
      if (std::abs(r->correlation) >= success_corr) ++succ;
      if (r->plateau_stat) plat.push_back(*r->plateau_stat);
    }
    const SampleStats s = sample_stats(corr);
    a.count = s.count;
    a.mean_correlation = s.mean;
    a.sd_correlation = s.sd;
    a.ci_half_width = s.ci_half_width;
    a.success_rate = s.count ? static_cast<double>(succ) / static_cast<double>(s.count) : 0.0;
    if (!plat.empty()) a.mean_plateau = sample_stats(plat).mean;
    out.push_back(a);
  }
  return out;
}

/// One instance per (n, beta, instance); every algorithm sees the same tensor.
/// Records are ordered by (n, beta, instance, algorithm) regardless of threads.
inline SweepReport run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  struct Cell {
    std::size_t n_index, beta_index, instance;
  };
  const std::vector<std::size_t> ns = cfg.dims ? std::vector<std::size_t>{0} : cfg.n_list;
  std::vector<Cell> cells;
  for (std::size_t ni = 0; ni < ns.size(); ++ni)
    for (std::size_t bi = 0; bi < cfg.beta_list.size(); ++bi)
      for (std::size_t i = 0; i < cfg.instances; ++i) cells.push_back({ni, bi, i});

  std::vector<std::vector<SweepRecord>> per_cell(cells.size());
  auto work = [&](std::size_t c) {
    const Cell& cell = cells[c];
    const DenseTensor::Dims dims = cfg.dims ? *cfg.dims : DenseTensor::Dims(cfg.k, ns[cell.n_index]);
    std::size_t key_n = 0;
    for (std::size_t d : dims) key_n = key_n * 1000003u + d;
    const double beta = cfg.beta_list[cell.beta_index];
    const std::uint64_t seed = instance_seed(cfg.master_seed, key_n, cell.beta_index, cell.instance);
    SpikeOptions so;
    const bool equal = std::all_of(dims.begin(), dims.end(), [&](std::size_t d) { return d == dims[0]; });
    so.symmetric_noise = cfg.symmetric_noise && equal;
    so.num_spikes = cfg.num_spikes;
    so.orthogonal_spikes = cfg.num_spikes > 1;
    std::optional<SpikedInstance> inst;
    std::string gen_error;
    try {
      inst.emplace(generate_spiked(dims, beta, seed, so));
    } catch (const Error& e) {
      gen_error = e.what();
    }
    for (Algorithm a : cfg.algorithms) {
      if (inst) {
        per_cell[c].push_back(run_cell(a, *inst, beta, cfg));
      } else {
        SweepRecord r;
        r.algo = a;
        r.n = dims[0];
        r.k = dims.size();
        r.beta = beta;
        r.instance_seed = seed;
        r.stop_reason = "failed";
        r.error = gen_error;
        per_cell[c].push_back(std::move(r));
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.threads, cells.size()));
  if (workers == 1) {
    for (std::size_t c = 0; c < cells.size(); ++c) work(c);
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (;;) {
          std::size_t c;
          {
            std::lock_guard lock(mu);
            if (next >= cells.size()) return;
            c = next++;
          }
          work(c);
        }
      });
  }
  SweepReport rep;
  rep.config = cfg;
  for (auto& v : per_cell)
    for (auto& r : v) rep.records.push_back(std::move(r));
  rep.aggregates = aggregate(rep.records, cfg.success_corr);
  return rep;
}

// ---------------------------------------------------------------------------
// Output

inline constexpr const char* kCsvHeader =
    "algo,n,k,beta,instance_seed,correlation,objective,iterations,stop_reason,escapes,plateau_stat,wall_ms";

/// Shortest round-trip decimal form; "nan" for NaN.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::string csv_row(const SweepRecord& r) {
  std::string s;
  s += to_string(r.algo);
  s += ',' + std::to_string(r.n);
  s += ',' + std::to_string(r.k);
  s += ',' + format_double(r.beta);
  s += ',' + std::to_string(r.instance_seed);
  s += ',' + format_double(r.correlation);
  s += ',' + format_double(r.objective);
  s += ',' + std::to_string(r.iterations);
  s += ',' + r.stop_reason;
  s += ',' + (r.escapes ? std::to_string(*r.escapes) : std::string());
  s += ',' + (r.plateau_stat ? format_double(*r.plateau_stat) : std::string());
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, r.wall_ms, std::chars_format::fixed, 3);
  s += ',' + std::string(buf, res.ptr);
  return s;
}

inline std::string report_csv(const SweepReport& rep) {
  std::string out = std::string(kCsvHeader) + '\n';
  for (const auto& r : rep.records) out += csv_row(r) + '\n';
  return out;
}

inline nlohmann::json config_json(const SweepConfig& c) {
  nlohmann::json j;
  std::vector<std::string> algos;
  for (Algorithm a : c.algorithms) algos.emplace_back(to_string(a));
  j["algorithms"] = algos;
  j["k"] = c.k;
  if (c.dims) j["dims"] = *c.dims;
  else j["n"] = c.n_list;
  j["beta"] = c.beta_list;
  j["instances"] = c.instances;
  j["master_seed"] = c.master_seed;
  j["symmetric_noise"] = c.symmetric_noise;
  j["num_spikes"] = c.num_spikes;
  j["params"] = {{"m_init", c.params.m_init},       {"m_iter", c.params.m_iter},
                 {"lag", c.params.lag},             {"eps", c.params.eps},
                 {"naive_n_init", c.params.naive_n_init}, {"naive_max_iter", c.params.naive_max_iter},
                 {"cp_rank", c.params.cp_rank}};
  j["capture_trajectory"] = c.capture_trajectory;
  j["escape"] = {{"stagnation_tol", c.escape.stagnation_tol}, {"window", c.escape.window}};
  j["success_corr"] = c.success_corr;
  return j;
}

inline nlohmann::json report_json(const SweepReport& rep) {
  nlohmann::json j;
  j["software"] = {{"name", "tpca"}, {"version", kVersion}};
  j["config"] = config_json(rep.config);
  j["records"] = rep.records.size();
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& r : rep.records)
    if (!r.ok())
      failures.push_back({{"algo", to_string(r.algo)}, {"n", r.n}, {"beta", r.beta}, {"instance_seed", r.instance_seed},
                          {"reason", r.error}});
  j["failures"] = failures;
  nlohmann::json aggs = nlohmann::json::array();
  for (const auto& a : rep.aggregates) {
    nlohmann::json x = {{"algo", to_string(a.algo)},
                        {"n", a.n},
                        {"beta", a.beta},
                        {"count", a.count},
                        {"failures", a.failures},
                        {"mean_correlation", a.mean_correlation},
                        {"sd_correlation", a.sd_correlation},
                        {"ci95_half_width", a.ci_half_width},
                        {"success_rate", a.success_rate}};
    if (!std::isnan(a.mean_plateau)) x["mean_plateau_stat"] = a.mean_plateau;
    aggs.push_back(std::move(x));
  }
  j["aggregates"] = aggs;
  // Pairing evidence: one tensor hash per instance seed.
  std::map<std::uint64_t, std::uint64_t> hashes;
  for (const auto& r : rep.records)
    if (r.ok()) hashes.emplace(r.instance_seed, r.tensor_hash);
  nlohmann::json h = nlohmann::json::object();
  for (const auto& [s, hv] : hashes) h[std::to_string(s)] = hv;
  j["tensor_hashes"] = h;
  return j;
}

/// Writes `path` (CSV) and `path + ".json"` (config echo, aggregates, version).
inline void write_report(const SweepReport& rep, const std::string& path) {
  detail::write_file(path, report_csv(rep));
  detail::write_file(path + ".json", report_json(rep).dump(2) + '\n');
}

/// Parses a CSV produced by write_report back into records (algo through wall_ms).
inline std::vector<SweepRecord> parse_report_csv(const std::string& text) {
  std::vector<SweepRecord> out;
  std::size_t pos = 0, lineno = 0;
  auto num = [](const std::string& s) { return s == "nan" ? std::nan("") : std::stod(s); };
  while (pos < text.size()) {
    const std::size_t eol = text.find('\n', pos);
    const std::string line = text.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
    pos = eol == std::string::npos ? text.size() : eol + 1;
    if (lineno++ == 0) {
      if (line != kCsvHeader) throw IoError("report csv: unexpected header");
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t a = 0;
    for (;;) {
      const std::size_t b = line.find(',', a);
      f.push_back(line.substr(a, b == std::string::npos ? std::string::npos : b - a));
      if (b == std::string::npos) break;
      a = b + 1;
    }
    if (f.size() != 12) throw IoError("report csv: line " + std::to_string(lineno) + " has " +
                                      std::to_string(f.size()) + " fields");
    SweepRecord r;
    r.algo = parse_algorithm(f[0]);
    r.n = std::stoull(f[1]);
    r.k = std::stoull(f[2]);
    r.beta = num(f[3]);
    r.instance_seed = std::stoull(f[4]);
    r.correlation = num(f[5]);
    r.objective = num(f[6]);
    r.iterations = std::stoull(f[7]);
    r.stop_reason = f[8];
    if (!f[9].empty()) r.escapes = std::stoull(f[9]);
    if (!f[10].empty()) r.plateau_stat = num(f[10]);
    r.wall_ms = num(f[11]);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace tpca
