#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <doctest.h>
#include <Eigen/Dense>
#include <json.hpp>

#include "snewton/experiments.hpp"

using namespace snewton;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg{GeneratorSpec::linear_diag(3)};
  cfg.roster = {parse_algorithm("sna"), parse_algorithm("sgd")};
  cfg.r0 = 0.5;
  cfg.replicates = 3;
  cfg.horizon = 50;
  cfg.probes = {1, 10, 50};
  cfg.base_seed = 11;
  return cfg;
}

}  // namespace

TEST_SUITE("experiments") {

TEST_CASE("log probe grids are increasing, bounded and end at the horizon") {
  const auto grid = log_probe_grid(10000, 30);
  REQUIRE(!grid.empty());
  CHECK(grid.front() == 10);
  CHECK(grid.back() == 10000);
  CHECK(grid.size() <= 30);
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);

  CHECK(log_probe_grid(5, 30) == std::vector<std::int64_t>{5});  // lo clamps to the horizon
  CHECK(log_probe_grid(10000, 1) == std::vector<std::int64_t>{10000});
  CHECK(log_probe_grid(100, 4, 1).front() == 1);
  CHECK_THROWS_AS(log_probe_grid(0, 10), std::invalid_argument);
  CHECK_THROWS_AS(log_probe_grid(100, 0), std::invalid_argument);
}

TEST_CASE("mse curves aggregate every algorithm at every probe") {
  const auto cfg = small_config();
  const CurveTable table = mse_curve(cfg);
  CHECK(table.experiment_id == "linear-diag-d3");
  REQUIRE(table.rows.size() == 6);  // 2 algorithms x 3 probes
  // Rows are grouped by algorithm with probes ascending.
  CHECK(table.rows[0].algo == "sna");
  CHECK(table.rows[0].n == 1);
  CHECK(table.rows[2].n == 50);
  CHECK(table.rows[3].algo == "sgd");
  for (const CurveRow& row : table.rows) {
    CHECK(row.replicates == 3);
    CHECK(std::isfinite(row.mse_mean));
    CHECK(row.mse_mean >= 0.0);
    CHECK(std::isfinite(row.mse_stderr));
    if (row.algo == "sna")
      CHECK(std::isfinite(row.lambda_max_inv_mean));  // curvature spectra recorded
    else
      CHECK(!std::isfinite(row.lambda_max_inv_mean));  // baselines have none
  }
  CHECK(table.failures.empty());
}

TEST_CASE("experiment results are independent of the job count") {
  auto cfg = small_config();
  cfg.replicates = 5;
  cfg.jobs = 1;
  const std::string serial = curve_csv(mse_curve(cfg));
  cfg.jobs = 4;
  const std::string parallel = curve_csv(mse_curve(cfg));
  CHECK(serial == parallel);
  // And fully reproducible run to run.
  CHECK(curve_csv(mse_curve(cfg)) == parallel);
  // A different base seed gives different data.
  cfg.base_seed = 12;
  CHECK(curve_csv(mse_curve(cfg)) != parallel);
}

TEST_CASE("a noiseless stream started at the truth never moves") {
  ExperimentConfig cfg{GeneratorSpec::linear_diag(3, 0.0)};
  cfg.roster = {parse_algorithm("sna"), parse_algorithm("wasna-log:2"), parse_algorithm("sgd")};
  cfg.r0 = 0.0;
  cfg.replicates = 2;
  cfg.horizon = 30;
  cfg.probes = {1, 30};
  const CurveTable table = mse_curve(cfg);
  for (const CurveRow& row : table.rows) {
    CHECK(row.mse_mean == 0.0);
    CHECK(row.mse_stderr == 0.0);
  }
}

TEST_CASE("standard errors shrink like one over the square root of replicates") {
  auto cfg = small_config();
  cfg.probes = {10, 30, 50};
  cfg.roster = {parse_algorithm("wasna-uniform")};
  cfg.replicates = 20;
  double se20 = 0.0, se80 = 0.0;
  for (const CurveRow& row : mse_curve(cfg).rows) se20 += row.mse_stderr;
  cfg.replicates = 80;
  for (const CurveRow& row : mse_curve(cfg).rows) se80 += row.mse_stderr;
  const double ratio = se80 / se20;
  CHECK(ratio > 0.3);
  CHECK(ratio < 0.8);  // ideal value 0.5
}

TEST_CASE("probe validation errors propagate out of the harness") {
  auto cfg = small_config();
  cfg.probes = {5, 5};
  CHECK_THROWS_AS(mse_curve(cfg), std::invalid_argument);
  cfg.probes = {0};
  CHECK_THROWS_AS(mse_curve(cfg), std::invalid_argument);
  cfg.probes = {10};
  cfg.roster.clear();
  CHECK_THROWS_AS(mse_curve(cfg), std::invalid_argument);
}

TEST_CASE("covariance check against the exact linear theory") {
  ExperimentConfig cfg{GeneratorSpec::linear_diag(2)};
  cfg.roster = {parse_algorithm("wasna-uniform")};
  cfg.r0 = 1.0;
  cfg.base_seed = 5;
  cfg.jobs = 2;
  Rng rng(3);
  const MomentOracle oracle = oracle_for(cfg.generator, 10000, rng);
  const CltReport report = clt_covariance(cfg, 2000, 120, oracle);

  // Theoretical target for uniform weights: sigma^2 E[XX']^{-1} = diag(4, 1).
  CHECK(report.theoretical(0, 0) == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(report.theoretical(1, 1) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(report.trace_theoretical == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(report.n_star == 2000);
  CHECK(report.replicates == 120);

  // The empirical covariance is symmetric PSD and in the right ballpark.
  CHECK((report.empirical - report.empirical.transpose()).norm() == 0.0);
  CHECK(spectral_bounds(report.empirical).lambda_min > -1e-9);
  CHECK(report.trace_ratio > 0.5);
  CHECK(report.trace_ratio < 2.0);
  CHECK(report.rel_opnorm_dev < 1.5);
}

TEST_CASE("covariance check validates its inputs") {
  ExperimentConfig cfg{GeneratorSpec::linear_diag(2)};
  cfg.roster = {parse_algorithm("wasna-uniform")};
  Rng rng(3);
  const MomentOracle oracle = oracle_for(cfg.generator, 10000, rng);
  CHECK_THROWS_AS(clt_covariance(cfg, 100, 50, oracle), std::invalid_argument);
  CHECK_THROWS_AS(clt_covariance(cfg, 0, 120, oracle), std::invalid_argument);
  auto two = cfg;
  two.roster.push_back(parse_algorithm("sna"));
  CHECK_THROWS_AS(clt_covariance(two, 100, 120, oracle), std::invalid_argument);
  auto sgd = cfg;
  sgd.roster = {parse_algorithm("sgd")};
  CHECK_THROWS_AS(clt_covariance(sgd, 100, 120, oracle), Unsupported);
  auto adagrad = cfg;
  adagrad.roster = {parse_algorithm("avg-adagrad")};
  CHECK_THROWS_AS(clt_covariance(adagrad, 100, 120, oracle), Unsupported);
}

TEST_CASE("log-log fits recover exact power laws and skip unusable points") {
  const std::vector<double> n{10.0, 100.0, 1000.0};
  std::vector<double> v(3);
  for (int i = 0; i < 3; ++i) v[i] = 7.0 * std::pow(n[i], -1.5);
  const LineFit fit = fit_loglog(n, v);
  CHECK(fit.slope == doctest::Approx(-1.5).epsilon(1e-12));
  CHECK(fit.intercept == doctest::Approx(std::log(7.0)).epsilon(1e-12));
  CHECK(fit.points == 3);

  // Zero, negative and non-finite values are skipped, not fitted.
  const std::vector<double> n2{10.0, 20.0, 100.0, 1000.0, 5000.0};
  const std::vector<double> v2{7.0 * std::pow(10.0, -1.5), 0.0, 7.0 * std::pow(100.0, -1.5),
                               7.0 * std::pow(1000.0, -1.5),
                               std::numeric_limits<double>::quiet_NaN()};
  const LineFit fit2 = fit_loglog(n2, v2);
  CHECK(fit2.points == 3);
  CHECK(fit2.slope == doctest::Approx(-1.5).epsilon(1e-12));

  CHECK_THROWS_AS(fit_loglog({1.0}, {2.0}), std::invalid_argument);
  CHECK_THROWS_AS(fit_loglog({1.0, 2.0}, {2.0}), std::invalid_argument);
  CHECK_THROWS_AS(fit_loglog({10.0, 10.0}, {1.0, 2.0}), std::invalid_argument);
}

TEST_CASE("curvature decay rates from synthetic probe matrices") {
  const Eigen::MatrixXd h = Eigen::Vector2d(2.0, 1.0).asDiagonal();
  Eigen::MatrixXd e(2, 2);
  e << 1.0, 0.5, 0.5, 1.0;
  auto make_records = [&](double exponent) {
    RunRecord rec;
    for (const std::int64_t n : {10L, 100L, 1000L, 10000L}) {
      ProbeSnapshot p;
      p.n = n;
      p.scaled_sum = h + std::pow(static_cast<double>(n), exponent) * e;
      rec.probes.push_back(p);
    }
    return std::vector<RunRecord>{rec};
  };

  // Deviation ~ n^{-1/2} per entry: squared Frobenius distance decays like
  // n^{-1}, comfortably inside the allowed envelope for beta = 0.125.
  const auto good = hessian_rate(make_records(-0.5), SymPosMatrix(h), 0.125);
  CHECK(good.fit.slope == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(good.bound == doctest::Approx(0.25).epsilon(1e-15));
  CHECK_FALSE(good.flagged);

  // A growing deviation (slope 0.4 > 0.25) is flagged.
  const auto bad = hessian_rate(make_records(0.2), SymPosMatrix(h), 0.125);
  CHECK(bad.fit.slope == doctest::Approx(0.4).epsilon(1e-9));
  CHECK(bad.flagged);

  // Probes without recorded matrices are not usable.
  CHECK_THROWS_AS(hessian_rate({RunRecord{}}, SymPosMatrix(h), 0.125), std::invalid_argument);
  auto wrong = make_records(-0.5);
  wrong[0].probes[0].scaled_sum = Eigen::MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(hessian_rate(wrong, SymPosMatrix(h), 0.125), DimensionMismatch);
}

TEST_CASE("confusion matrices count hard-label predictions") {
  const auto model = RiskModel::softmax(2, 3);
  Eigen::VectorXd theta(6);
  theta << 10.0, 0.0, 0.0, 10.0, -10.0, -10.0;
  LabeledImages test;
  test.images.resize(3, 2);
  test.images << 1.0, 0.0,  // scores (10, 0, -10): predicted 0, true 0
      0.0, 1.0,             // scores (0, 10, -10): predicted 1, true 1
      1.0, 1.0;             // scores (10, 10, -20): tie, predicted 0, true 1
  test.labels = {0, 1, 1};
  test.rows = 1;
  test.cols = 2;
  const ConfusionResult result = confusion_matrix(model, theta, test);
  CHECK(result.counts(0, 0) == 1);
  CHECK(result.counts(1, 1) == 1);
  CHECK(result.counts(1, 0) == 1);
  CHECK(result.counts.sum() == 3);
  CHECK(result.accuracy == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  CHECK_THROWS_AS(confusion_matrix(model, theta, LabeledImages{}), std::invalid_argument);
}

TEST_CASE("one-pass image fits separate a toy dataset") {
  auto make_images = [](int count) {
    LabeledImages data;
    data.images.resize(count, 4);
    data.labels.resize(count);
    data.rows = 2;
    data.cols = 2;
    for (int i = 0; i < count; ++i) {
      const int label = i % 4;
      data.labels[i] = label;
      for (int p = 0; p < 4; ++p) data.images(i, p) = p == label ? 1.0 : 0.1;
    }
    return data;
  };
  const LabeledImages train = make_images(80);
  const LabeledImages test = make_images(12);
  const ImageFitResult result = fit_images(train, test, parse_algorithm("wasna-log:2"), 7);
  CHECK(result.steps == 80);
  CHECK(result.theta.size() == 16);
  CHECK(result.seconds >= 0.0);
  CHECK(result.confusion.counts.sum() == 12);
  CHECK(result.confusion.accuracy >= 0.9);
  // Deterministic in the seed.
  const ImageFitResult again = fit_images(train, test, parse_algorithm("wasna-log:2"), 7);
  CHECK((again.theta - result.theta).norm() == 0.0);
  CHECK_THROWS_AS(fit_images(LabeledImages{}, test, parse_algorithm("wasna-log:2"), 7),
                  std::invalid_argument);
}

TEST_CASE("curve CSV golden output") {
  CurveTable table;
  table.experiment_id = "exp";
  table.algos = {"sna"};
  table.probes = {10};
  CurveRow row;
  row.algo = "sna";
  row.n = 10;
  row.replicates = 3;
  row.mse_mean = 0.125;
  row.mse_stderr = 0.0625;
  row.lambda_max_inv_mean = std::numeric_limits<double>::quiet_NaN();
  table.rows = {row};
  CHECK(curve_csv(table) ==
        "experiment,algo,n,replicates,mse_mean,mse_stderr,lambda_max_inv_mean\n"
        "exp,sna,10,3,0.125,0.0625,\n");
}

TEST_CASE("covariance CSV golden output") {
  CltReport report;
  report.empirical = Eigen::MatrixXd::Constant(1, 1, 2.0);
  report.theoretical = Eigen::MatrixXd::Constant(1, 1, 4.0);
  report.trace_empirical = 2.0;
  report.trace_theoretical = 4.0;
  report.trace_ratio = 0.5;
  report.rel_opnorm_dev = 0.5;
  report.n_star = 50;
  report.replicates = 100;
  std::ostringstream out;
  write_clt_csv(out, report);
  CHECK(out.str() ==
        "metric,value\n"
        "n_star,50\n"
        "replicates,100\n"
        "trace_empirical,2\n"
        "trace_theoretical,4\n"
        "trace_ratio,0.5\n"
        "rel_opnorm_dev,0.5\n"
        "\n"
        "matrix,i,j,empirical,theoretical\n"
        "cov,0,0,2,4\n");
}

TEST_CASE("confusion CSV golden output") {
  ConfusionResult result;
  result.counts.resize(2, 2);
  result.counts << 2, 0, 1, 1;
  result.accuracy = 0.75;
  std::ostringstream out;
  write_confusion_csv(out, result);
  CHECK(out.str() ==
        "true_class,predicted_class,count\n"
        "0,0,2\n"
        "0,1,0\n"
        "1,0,1\n"
        "1,1,1\n");
}

TEST_CASE("SVG charts contain one polyline per algorithm") {
  const auto cfg = small_config();
  const CurveTable table = mse_curve(cfg);
  std::ostringstream out;
  write_curve_svg(out, table);
  const std::string svg = out.str();
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("sna") != std::string::npos);
  CHECK(svg.find("sgd") != std::string::npos);
  std::size_t polylines = 0;
  for (std::size_t pos = 0; (pos = svg.find("<polyline", pos)) != std::string::npos; ++pos)
    ++polylines;
  CHECK(polylines == 2);

  CurveTable empty;
  empty.experiment_id = "none";
  std::ostringstream out2;
  write_curve_svg(out2, empty);
  CHECK(out2.str().find("no positive data") != std::string::npos);
}

TEST_CASE("experiment sidecar JSON round-trips through a parser") {
  const auto cfg = small_config();
  const CurveTable table = mse_curve(cfg);
  const auto j = nlohmann::json::parse(experiment_sidecar_json(cfg, table));
  CHECK(j["experiment"] == "linear-diag-d3");
  CHECK(j["model"] == "linear:3");
  CHECK(j["replicates"] == 3);
  CHECK(j["base_seed"] == 11);
  CHECK(j["algorithms"].size() == 2);
  CHECK(j["probes"].size() == 3);
  CHECK(j["theta_true"].size() == 3);
  CHECK(j["failures"].empty());
  CHECK(j.contains("seed_scheme"));
}

}  // TEST_SUITE
