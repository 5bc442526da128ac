#include "snewton/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace snewton {

namespace {

// Seed scheme: every run is addressed by (base_seed, replicate, role) so
// results do not depend on scheduling order or the number of jobs.
std::uint64_t stream_seed(std::uint64_t base, int replicate) {
  return mix_seed(mix_seed(base, static_cast<std::uint64_t>(replicate)), 0xA);
}
std::uint64_t init_seed(std::uint64_t base, int replicate) {
  return mix_seed(mix_seed(base, static_cast<std::uint64_t>(replicate)), 0xB);
}
std::uint64_t engine_seed(std::uint64_t base, int replicate, std::size_t algo) {
  return mix_seed(mix_seed(base, static_cast<std::uint64_t>(replicate)),
                  0xC00 + static_cast<std::uint64_t>(algo));
}

void parallel_for(int jobs, int count, const std::function<void(int)>& body) {
  jobs = std::max(1, std::min(jobs, count));
  if (jobs <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(jobs));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(jobs));
  for (int t = 0; t < jobs; ++t) {
    pool.emplace_back([&, t] {
      try {
        int i;
        while ((i = next.fetch_add(1)) < count) body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (std::thread& th : pool) th.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string format_g12(double v) {
  if (!std::isfinite(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

std::vector<std::int64_t> log_probe_grid(std::int64_t horizon, int points, std::int64_t lo) {
  if (horizon < 1) throw std::invalid_argument("log_probe_grid: horizon must be >= 1");
  if (points < 1) throw std::invalid_argument("log_probe_grid: points must be >= 1");
  if (lo < 1) throw std::invalid_argument("log_probe_grid: lo must be >= 1");
  lo = std::min(lo, horizon);
  std::vector<std::int64_t> grid;
  const double la = std::log(static_cast<double>(lo));
  const double lb = std::log(static_cast<double>(horizon));
  for (int i = 0; i < points; ++i) {
    const double f = points == 1 ? 1.0 : static_cast<double>(i) / (points - 1);
    const auto v = static_cast<std::int64_t>(std::llround(std::exp(la + f * (lb - la))));
    const std::int64_t clamped = std::min(std::max(v, lo), horizon);
    if (grid.empty() || clamped > grid.back()) grid.push_back(clamped);
  }
  if (grid.back() != horizon) grid.push_back(horizon);
  return grid;
}

CurveTable mse_curve(const ExperimentConfig& cfg) {
  if (cfg.roster.empty()) throw std::invalid_argument("mse_curve: empty algorithm roster");
  if (cfg.replicates < 1) throw std::invalid_argument("mse_curve: replicates must be >= 1");
  const std::vector<std::int64_t> probes =
      cfg.probes.empty() ? log_probe_grid(cfg.horizon) : cfg.probes;

  const RiskModel& model = cfg.generator.model();
  const Eigen::VectorXd& truth = cfg.generator.theta_true();
  const std::size_t n_algos = cfg.roster.size();
  const int n_reps = cfg.replicates;

  std::vector<std::vector<RunRecord>> recs(n_algos,
                                           std::vector<RunRecord>(static_cast<std::size_t>(n_reps)));
  RunOptions opts;
  opts.probes = probes;
  opts.record_spectra = true;

  parallel_for(cfg.jobs, n_reps, [&](int r) {
    Rng init_rng(init_seed(cfg.base_seed, r));
    const Eigen::VectorXd theta0 = initial_point(truth, cfg.r0, init_rng);
    for (std::size_t a = 0; a < n_algos; ++a) {
      GeneratorStream stream(cfg.generator, stream_seed(cfg.base_seed, r));
      auto opt =
          make_optimizer(cfg.roster[a], model, theta0, engine_seed(cfg.base_seed, r, a));
      recs[a][static_cast<std::size_t>(r)] = run(*opt, stream, opts);
    }
  });

  // Fairness: within one replicate every algorithm must have consumed the
  // identical stream. A mismatch is an internal bug, not user error.
  for (int r = 0; r < n_reps; ++r) {
    const std::uint64_t h0 = recs[0][static_cast<std::size_t>(r)].stream_hash;
    for (std::size_t a = 1; a < n_algos; ++a)
      if (recs[a][static_cast<std::size_t>(r)].stream_hash != h0)
        throw std::logic_error("mse_curve: replicate " + std::to_string(r) +
                               " fed different streams to different algorithms");
  }

  CurveTable table;
  table.experiment_id = cfg.generator.id();
  table.probes = probes;
  for (const AlgorithmConfig& algo : cfg.roster) table.algos.push_back(algo.id);

  for (std::size_t a = 0; a < n_algos; ++a) {
    const bool avg = cfg.roster[a].averaged();
    for (std::size_t p = 0; p < probes.size(); ++p) {
      CurveRow row;
      row.algo = cfg.roster[a].id;
      row.n = probes[p];
      double sum = 0.0, sumsq = 0.0, lsum = 0.0;
      int count = 0, lcount = 0;
      for (int r = 0; r < n_reps; ++r) {
        const RunRecord& rec = recs[a][static_cast<std::size_t>(r)];
        if (rec.probes.size() <= p) continue;
        const ProbeSnapshot& snap = rec.probes[p];
        const double err = ((avg ? snap.theta_avg : snap.theta) - truth).squaredNorm();
        sum += err;
        sumsq += err * err;
        ++count;
        if (std::isfinite(snap.lambda_min_scaled) && snap.lambda_min_scaled > 0.0) {
          lsum += 1.0 / snap.lambda_min_scaled;
          ++lcount;
        }
      }
      row.replicates = count;
      const double nan = std::numeric_limits<double>::quiet_NaN();
      row.mse_mean = count > 0 ? sum / count : nan;
      row.mse_stderr =
          count > 1
              ? std::sqrt(std::max(0.0, (sumsq - sum * sum / count) / (count - 1)) / count)
              : nan;
      row.lambda_max_inv_mean = lcount > 0 ? lsum / lcount : nan;
      table.rows.push_back(std::move(row));
    }
  }

  for (std::size_t a = 0; a < n_algos; ++a)
    for (int r = 0; r < n_reps; ++r) {
      const RunFailure& f = recs[a][static_cast<std::size_t>(r)].failure;
      if (f.failed())
        table.failures.push_back("algo " + cfg.roster[a].id + ", replicate " +
                                 std::to_string(r) + ", step " + std::to_string(f.at_step) +
                                 ": " + f.message);
    }
  return table;
}

CltReport clt_covariance(const ExperimentConfig& cfg, std::int64_t n_star, int replicates,
                         const MomentOracle& oracle) {
  if (cfg.roster.size() != 1)
    throw std::invalid_argument("clt_covariance: exactly one algorithm required");
  if (replicates < 100)
    throw std::invalid_argument("clt_covariance: need at least 100 replicates");
  if (n_star < 1) throw std::invalid_argument("clt_covariance: n_star must be >= 1");

  const AlgorithmConfig& algo = cfg.roster[0];
  double factor;
  if (algo.is_newton()) {
    factor = variance_factor(algo.newton().weights);
  } else if (algo.baseline().kind == BaselineKind::AveragedSgd) {
    factor = 1.0;
  } else {
    throw Unsupported("clt_covariance: no covariance theory for '" + algo.id + "'");
  }

  const RiskModel& model = cfg.generator.model();
  const Eigen::VectorXd& truth = cfg.generator.theta_true();
  const Eigen::Index p = model.param_dim();
  const bool avg = algo.averaged();

  Eigen::MatrixXd deviations(p, replicates);
  RunOptions opts;
  opts.probes = {n_star};

  parallel_for(cfg.jobs, replicates, [&](int r) {
    Rng init_rng(init_seed(cfg.base_seed, r));
    const Eigen::VectorXd theta0 = initial_point(truth, cfg.r0, init_rng);
    GeneratorStream stream(cfg.generator, stream_seed(cfg.base_seed, r));
    auto opt = make_optimizer(algo, model, theta0, engine_seed(cfg.base_seed, r, 0));
    const RunRecord rec = run(*opt, stream, opts);
    if (rec.failure.failed())
      throw std::runtime_error("clt_covariance: replicate " + std::to_string(r) +
                               " failed at step " + std::to_string(rec.failure.at_step) + ": " +
                               rec.failure.message);
    const ProbeSnapshot& snap = rec.probes.at(0);
    deviations.col(r) = std::sqrt(static_cast<double>(n_star)) *
                        ((avg ? snap.theta_avg : snap.theta) - truth);
  });

  const Eigen::VectorXd mean = deviations.rowwise().mean();
  const Eigen::MatrixXd centered = deviations.colwise() - mean;
  Eigen::MatrixXd empirical =
      centered * centered.transpose() / static_cast<double>(replicates - 1);
  empirical = 0.5 * (empirical + empirical.transpose()).eval();

  CltReport report;
  report.empirical = empirical;
  report.theoretical = oracle.sandwich(factor);
  report.trace_empirical = empirical.trace();
  report.trace_theoretical = report.theoretical.trace();
  report.trace_ratio = report.trace_empirical / report.trace_theoretical;
  const SpectralBounds dev = spectral_bounds(Eigen::MatrixXd(empirical - report.theoretical));
  const SpectralBounds ref = spectral_bounds(report.theoretical);
  const double dev_norm = std::max(std::abs(dev.lambda_min), std::abs(dev.lambda_max));
  const double ref_norm = std::max(std::abs(ref.lambda_min), std::abs(ref.lambda_max));
  report.rel_opnorm_dev = dev_norm / ref_norm;
  report.n_star = n_star;
  report.replicates = replicates;
  return report;
}

LineFit fit_loglog(const std::vector<double>& n, const std::vector<double>& v) {
  if (n.size() != v.size()) throw std::invalid_argument("fit_loglog: length mismatch");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (!(n[i] > 0.0) || !(v[i] > 0.0) || !std::isfinite(v[i])) continue;
    const double x = std::log(n[i]);
    const double y = std::log(v[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++count;
  }
  if (count < 2) throw std::invalid_argument("fit_loglog: need at least 2 usable points");
  const double denom = count * sxx - sx * sx;
  if (denom == 0.0) throw std::invalid_argument("fit_loglog: degenerate abscissae");
  LineFit fit;
  fit.slope = (count * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / count;
  fit.points = count;
  return fit;
}

HessianRateReport hessian_rate(const std::vector<RunRecord>& records,
                               const SymPosMatrix& hessian, double beta) {
  std::vector<double> ns, errs;
  for (const RunRecord& rec : records)
    for (const ProbeSnapshot& p : rec.probes) {
      if (p.scaled_sum.size() == 0) continue;
      if (p.scaled_sum.rows() != hessian.dim())
        throw DimensionMismatch("hessian_rate: snapshot matrix dim " +
                                std::to_string(p.scaled_sum.rows()) + " vs oracle dim " +
                                std::to_string(hessian.dim()));
      ns.push_back(static_cast<double>(p.n));
      errs.push_back((p.scaled_sum - hessian.mat()).squaredNorm());
    }
  HessianRateReport report;
  report.fit = fit_loglog(ns, errs);
  report.bound = -2.0 * beta + 0.5;
  report.flagged = report.fit.slope > report.bound;
  return report;
}

ConfusionResult confusion_matrix(const RiskModel& model, const Eigen::VectorXd& theta,
                                 const LabeledImages& test) {
  if (test.size() == 0) throw std::invalid_argument("confusion_matrix: empty test set");
  const int k = std::max(model.num_classes(), test.num_classes());
  ConfusionResult result;
  result.counts = Eigen::MatrixXi::Zero(k, k);
  for (Eigen::Index i = 0; i < test.size(); ++i) {
    const Eigen::VectorXd x = test.images.row(i).transpose();
    const int pred = static_cast<int>(predict(model, theta, x));
    result.counts(test.labels[static_cast<std::size_t>(i)], pred) += 1;
  }
  result.accuracy =
      static_cast<double>(result.counts.trace()) / static_cast<double>(test.size());
  return result;
}

ImageFitResult fit_images(const LabeledImages& train, const LabeledImages& test,
                          const AlgorithmConfig& algo, std::uint64_t seed, bool shuffle) {
  if (train.size() == 0) throw std::invalid_argument("fit_images: empty training set");
  const int classes = std::max({train.num_classes(), test.num_classes(), 2});
  const RiskModel model = RiskModel::softmax(train.feature_dim(), classes);

  DatasetStream stream(train, shuffle, Rng(mix_seed(seed, 0xD5)));
  auto opt = make_optimizer(algo, model, Eigen::VectorXd::Zero(model.param_dim()),
                            mix_seed(seed, 0xE7));
  const auto t0 = std::chrono::steady_clock::now();
  const RunRecord rec = run(*opt, stream, RunOptions{});
  const auto t1 = std::chrono::steady_clock::now();
  if (rec.failure.failed())
    throw std::runtime_error("fit_images: run failed at step " +
                             std::to_string(rec.failure.at_step) + ": " + rec.failure.message);

  ImageFitResult result;
  result.theta = algo.averaged() ? rec.final_state.theta_avg : rec.final_state.theta;
  result.steps = rec.steps;
  result.seconds = std::chrono::duration<double>(t1 - t0).count();
  result.confusion = confusion_matrix(model, result.theta, test);
  return result;
}

void write_curve_csv(std::ostream& out, const CurveTable& table) {
  out << "experiment,algo,n,replicates,mse_mean,mse_stderr,lambda_max_inv_mean\n";
  for (const CurveRow& row : table.rows)
    out << table.experiment_id << ',' << row.algo << ',' << row.n << ',' << row.replicates
        << ',' << format_g12(row.mse_mean) << ',' << format_g12(row.mse_stderr) << ','
        << format_g12(row.lambda_max_inv_mean) << '\n';
}

std::string curve_csv(const CurveTable& table) {
  std::ostringstream out;
  write_curve_csv(out, table);
  return out.str();
}

void write_clt_csv(std::ostream& out, const CltReport& report) {
  out << "metric,value\n";
  out << "n_star," << report.n_star << '\n';
  out << "replicates," << report.replicates << '\n';
  out << "trace_empirical," << format_g12(report.trace_empirical) << '\n';
  out << "trace_theoretical," << format_g12(report.trace_theoretical) << '\n';
  out << "trace_ratio," << format_g12(report.trace_ratio) << '\n';
  out << "rel_opnorm_dev," << format_g12(report.rel_opnorm_dev) << '\n';
  out << '\n';
  out << "matrix,i,j,empirical,theoretical\n";
  for (Eigen::Index i = 0; i < report.empirical.rows(); ++i)
    for (Eigen::Index j = 0; j < report.empirical.cols(); ++j)
      out << "cov," << i << ',' << j << ',' << format_g12(report.empirical(i, j)) << ','
          << format_g12(report.theoretical(i, j)) << '\n';
}

void write_confusion_csv(std::ostream& out, const ConfusionResult& result) {
  out << "true_class,predicted_class,count\n";
  for (Eigen::Index i = 0; i < result.counts.rows(); ++i)
    for (Eigen::Index j = 0; j < result.counts.cols(); ++j)
      out << i << ',' << j << ',' << result.counts(i, j) << '\n';
}

void write_curve_svg(std::ostream& out, const CurveTable& table) {
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                   "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f"};
  struct Series {
    std::string name;
    std::vector<std::pair<double, double>> pts;  // (log10 n, log10 mse)
  };
  std::vector<Series> series;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const std::string& algo : table.algos) {
    Series s;
    s.name = algo;
    for (const CurveRow& row : table.rows) {
      if (row.algo != algo || !(row.mse_mean > 0.0) || !std::isfinite(row.mse_mean)) continue;
      const double x = std::log10(static_cast<double>(row.n));
      const double y = std::log10(row.mse_mean);
      s.pts.emplace_back(x, y);
      xmin = std::min(xmin, x), xmax = std::max(xmax, x);
      ymin = std::min(ymin, y), ymax = std::max(ymax, y);
    }
    if (!s.pts.empty()) series.push_back(std::move(s));
  }

  const int width = 780, height = 500;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  if (series.empty()) {
    out << "<text x=\"20\" y=\"40\" font-family=\"sans-serif\">no positive data to plot</text>\n";
    out << "</svg>\n";
    return;
  }
  if (xmax - xmin < 1e-12) xmax = xmin + 1.0;
  if (ymax - ymin < 1e-12) ymax = ymin + 1.0;
  const double ml = 70, mr = 170, mt = 30, mb = 55;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr); };
  auto py = [&](double y) { return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb); };

  out << "<g font-family=\"sans-serif\" font-size=\"12\" fill=\"#333\">\n";
  // axes
  out << "<line x1=\"" << px(xmin) << "\" y1=\"" << py(ymin) << "\" x2=\"" << px(xmax)
      << "\" y2=\"" << py(ymin) << "\" stroke=\"#333\"/>\n";
  out << "<line x1=\"" << px(xmin) << "\" y1=\"" << py(ymin) << "\" x2=\"" << px(xmin)
      << "\" y2=\"" << py(ymax) << "\" stroke=\"#333\"/>\n";
  for (int e = static_cast<int>(std::ceil(xmin)); e <= static_cast<int>(std::floor(xmax)); ++e) {
    out << "<line x1=\"" << px(e) << "\" y1=\"" << py(ymin) << "\" x2=\"" << px(e) << "\" y2=\""
        << py(ymin) + 5 << "\" stroke=\"#333\"/>\n";
    out << "<text x=\"" << px(e) << "\" y=\"" << py(ymin) + 20
        << "\" text-anchor=\"middle\">1e" << e << "</text>\n";
  }
  for (int e = static_cast<int>(std::ceil(ymin)); e <= static_cast<int>(std::floor(ymax)); ++e) {
    out << "<line x1=\"" << px(xmin) - 5 << "\" y1=\"" << py(e) << "\" x2=\"" << px(xmin)
        << "\" y2=\"" << py(e) << "\" stroke=\"#333\"/>\n";
    out << "<text x=\"" << px(xmin) - 8 << "\" y=\"" << py(e) + 4
        << "\" text-anchor=\"end\">1e" << e << "</text>\n";
  }
  out << "<text x=\"" << (ml + (width - mr)) / 2 << "\" y=\"" << height - 12
      << "\" text-anchor=\"middle\">n (steps)</text>\n";
  out << "<text x=\"16\" y=\"" << (mt + height - mb) / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (mt + height - mb) / 2
      << ")\">mean squared error</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % (sizeof kPalette / sizeof kPalette[0])];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : series[s].pts) out << px(x) << ',' << py(y) << ' ';
    out << "\"/>\n";
    const double ly = mt + 16 + 18 * static_cast<double>(s);
    out << "<line x1=\"" << width - mr + 12 << "\" y1=\"" << ly - 4 << "\" x2=\""
        << width - mr + 36 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color
        << "\" stroke-width=\"1.5\"/>\n";
    out << "<text x=\"" << width - mr + 42 << "\" y=\"" << ly << "\">" << series[s].name
        << "</text>\n";
  }
  out << "</g>\n</svg>\n";
}

std::string experiment_sidecar_json(const ExperimentConfig& cfg, const CurveTable& table) {
  nlohmann::json j;
  j["experiment"] = table.experiment_id;
  j["generator"] = cfg.generator.id();
  j["model"] = cfg.generator.model().id();
  j["theta_true"] = std::vector<double>(cfg.generator.theta_true().begin(),
                                        cfg.generator.theta_true().end());
  j["algorithms"] = table.algos;
  j["replicates"] = cfg.replicates;
  j["horizon"] = cfg.horizon;
  j["r0"] = cfg.r0;
  j["base_seed"] = cfg.base_seed;
  j["jobs"] = cfg.jobs;
  j["probes"] = table.probes;
  j["failures"] = table.failures;
  j["seed_scheme"] =
      "stream=mix(mix(base,rep),0xA) init=mix(mix(base,rep),0xB) "
      "engine=mix(mix(base,rep),0xC00+algo_index)";
  return j.dump(2) + "\n";
}

}  // namespace snewton
