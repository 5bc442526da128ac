#include "snewton/data.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>

#include <zlib.h>

#include "snewton/matcore.hpp"

namespace snewton {

namespace {

Eigen::MatrixXd diag_scales(int d) {
  Eigen::VectorXd s(d);
  for (int i = 0; i < d; ++i) s[i] = static_cast<double>(i + 1) / static_cast<double>(d);
  return s.asDiagonal();
}

Eigen::VectorXd default_linear_theta(int d) {
  if (d == 10) {
    Eigen::VectorXd t(10);
    t << -4, -3, 2, 1, 0, 1, 2, 3, 4, 5;
    return t;
  }
  return Eigen::VectorXd::Ones(d);
}

}  // namespace

GeneratorSpec::GeneratorSpec(GeneratorFamily family, RiskModel model, Eigen::VectorXd theta,
                             Eigen::MatrixXd transform, bool intercept, double sigma)
    : family_(family),
      model_(model),
      theta_(std::move(theta)),
      transform_(std::move(transform)),
      intercept_(intercept),
      sigma_(sigma) {
  if (theta_.size() != model_.param_dim())
    throw DimensionMismatch("generator: theta has size " + std::to_string(theta_.size()) +
                            ", expected " + std::to_string(model_.param_dim()));
}

GeneratorSpec GeneratorSpec::linear_diag(int d, double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("generator: sigma must be >= 0");
  return GeneratorSpec(GeneratorFamily::LinearDiag, RiskModel::linear(d),
                       default_linear_theta(d), diag_scales(d), false, sigma);
}

GeneratorSpec GeneratorSpec::linear_corr(int d, double sigma, std::uint64_t mix_seed) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("generator: sigma must be >= 0");
  Rng rng(mix_seed);
  return GeneratorSpec(GeneratorFamily::LinearCorr, RiskModel::linear(d),
                       default_linear_theta(d), random_orthogonal(d, rng) * diag_scales(d),
                       false, sigma);
}

GeneratorSpec GeneratorSpec::logistic_std() {
  Eigen::VectorXd theta(11);
  theta << 9, 0, 3, 9, 4, 9, 15, 0, 7, 1, 0;
  return GeneratorSpec(GeneratorFamily::LogisticStd, RiskModel::logistic(11), theta,
                       Eigen::MatrixXd::Identity(10, 10), true, 0.0);
}

GeneratorSpec GeneratorSpec::logistic_corr(int d, std::uint64_t mix_seed) {
  Rng rng(mix_seed);
  return GeneratorSpec(GeneratorFamily::LogisticCorr, RiskModel::logistic(d),
                       Eigen::VectorXd::Ones(d), random_orthogonal(d, rng) * diag_scales(d),
                       false, 0.0);
}

GeneratorSpec GeneratorSpec::logistic_iso(int d) {
  return GeneratorSpec(GeneratorFamily::LogisticIso, RiskModel::logistic(d),
                       Eigen::VectorXd::Ones(d) / std::sqrt(static_cast<double>(d)),
                       Eigen::MatrixXd::Identity(d, d), false, 0.0);
}

GeneratorSpec GeneratorSpec::softmax_diag(int d, int classes, std::uint64_t theta_seed) {
  RiskModel model = RiskModel::softmax(d, classes);
  Rng rng(theta_seed);
  return GeneratorSpec(GeneratorFamily::SoftmaxDiag, model,
                       sample_unit_sphere(model.param_dim(), rng), diag_scales(d), false, 0.0);
}

GeneratorSpec GeneratorSpec::softmax_corr(int d, int classes, std::uint64_t mix_seed,
                                          std::uint64_t theta_seed) {
  RiskModel model = RiskModel::softmax(d, classes);
  Rng theta_rng(theta_seed);
  Rng rot_rng(mix_seed);
  return GeneratorSpec(GeneratorFamily::SoftmaxCorr, model,
                       sample_unit_sphere(model.param_dim(), theta_rng),
                       random_orthogonal(d, rot_rng) * diag_scales(d), false, 0.0);
}

Eigen::MatrixXd GeneratorSpec::feature_second_moment() const {
  if (!intercept_) return transform_ * transform_.transpose();
  const Eigen::Index d = model_.feature_dim();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d, d);
  m(0, 0) = 1.0;
  m.bottomRightCorner(d - 1, d - 1) = transform_ * transform_.transpose();
  return m;
}

std::string GeneratorSpec::id() const {
  char buf[32];
  auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof buf, "%g", v);
    return std::string(buf);
  };
  const std::string d = std::to_string(model_.feature_dim());
  const std::string sigma_part = sigma_ == 1.0 ? "" : "-s" + fmt(sigma_);
  switch (family_) {
    case GeneratorFamily::LinearDiag:
      return "linear-diag-d" + d + sigma_part;
    case GeneratorFamily::LinearCorr:
      return "linear-corr-d" + d + sigma_part;
    case GeneratorFamily::LogisticStd:
      return "logistic-std";
    case GeneratorFamily::LogisticCorr:
      return "logistic-corr-d" + d;
    case GeneratorFamily::LogisticIso:
      return "logistic-iso-d" + d;
    case GeneratorFamily::SoftmaxDiag:
      return "softmax-diag-d" + d + "-k" + std::to_string(model_.num_classes());
    case GeneratorFamily::SoftmaxCorr:
      return "softmax-corr-d" + d + "-k" + std::to_string(model_.num_classes());
  }
  return "";
}

GeneratorSpec GeneratorSpec::with_theta(Eigen::VectorXd theta) const {
  GeneratorSpec out = *this;
  if (theta.size() != model_.param_dim())
    throw DimensionMismatch("generator: theta has size " + std::to_string(theta.size()) +
                            ", expected " + std::to_string(model_.param_dim()));
  out.theta_ = std::move(theta);
  return out;
}

Observation draw_observation(const GeneratorSpec& spec, Rng& rng) {
  Observation obs;
  const int d = spec.model_.feature_dim();
  if (spec.intercept_) {
    obs.x.resize(d);
    obs.x[0] = 1.0;
    obs.x.tail(d - 1) = spec.transform_ * rng.gaussian_vector(d - 1);
  } else {
    obs.x = spec.transform_ * rng.gaussian_vector(d);
  }
  switch (spec.model_.kind()) {
    case RiskModel::Kind::Linear:
      obs.y = spec.theta_.dot(obs.x) + spec.sigma_ * rng.gaussian();
      break;
    case RiskModel::Kind::Logistic:
      obs.y = rng.uniform() < sigmoid(spec.theta_.dot(obs.x)) ? 1.0 : 0.0;
      break;
    case RiskModel::Kind::Softmax: {
      const Eigen::VectorXd p = class_probabilities(spec.model_, spec.theta_, obs.x);
      const double u = rng.uniform();
      double cum = 0.0;
      int k = 0;
      for (; k + 1 < p.size(); ++k) {
        cum += p[k];
        if (u < cum) break;
      }
      obs.y = static_cast<double>(k);
      break;
    }
  }
  return obs;
}

GeneratorStream::GeneratorStream(GeneratorSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), rng_(seed) {}

bool GeneratorStream::next(Observation& out) {
  out = draw_observation(spec_, rng_);
  return true;
}

Eigen::VectorXd initial_point(const Eigen::VectorXd& theta_true, double r0, Rng& rng) {
  if (!(r0 >= 0.0)) throw std::invalid_argument("initial_point: r0 must be >= 0");
  if (r0 == 0.0) return theta_true;
  return theta_true + r0 * sample_unit_sphere(theta_true.size(), rng);
}

namespace {

std::vector<std::string> split_args(const std::string& text) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = text.find(',', start);
    if (comma == std::string::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, comma - start));
    start = comma + 1;
  }
}

int arg_int(const std::string& text, const std::string& spec) {
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(text, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != text.size())
    throw std::invalid_argument("generator: cannot parse integer '" + text + "' in '" + spec +
                                "'");
  return v;
}

double arg_double(const std::string& text, const std::string& spec) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != text.size())
    throw std::invalid_argument("generator: cannot parse number '" + text + "' in '" + spec +
                                "'");
  return v;
}

}  // namespace

GeneratorSpec parse_generator(const std::string& spec) {
  const std::size_t colon = spec.find(':');
  const std::string family = spec.substr(0, colon);
  std::vector<std::string> args;
  if (colon != std::string::npos) args = split_args(spec.substr(colon + 1));
  const std::size_t argc = args.size();

  auto expect = [&](std::size_t lo, std::size_t hi) {
    if (argc < lo || argc > hi)
      throw std::invalid_argument("generator: wrong number of arguments in '" + spec + "'");
  };

  if (family == "linear-diag" || family == "linear-corr") {
    expect(0, 2);
    const int d = argc >= 1 ? arg_int(args[0], spec) : 10;
    const double sigma = argc >= 2 ? arg_double(args[1], spec) : 1.0;
    return family == "linear-diag" ? GeneratorSpec::linear_diag(d, sigma)
                                   : GeneratorSpec::linear_corr(d, sigma);
  }
  if (family == "logistic-std") {
    expect(0, 0);
    return GeneratorSpec::logistic_std();
  }
  if (family == "logistic-corr") {
    expect(0, 1);
    return GeneratorSpec::logistic_corr(argc >= 1 ? arg_int(args[0], spec) : 10);
  }
  if (family == "logistic-iso") {
    expect(0, 1);
    return GeneratorSpec::logistic_iso(argc >= 1 ? arg_int(args[0], spec) : 3);
  }
  if (family == "softmax-diag" || family == "softmax-corr") {
    expect(0, 2);
    const int d = argc >= 1 ? arg_int(args[0], spec) : 3;
    const int k = argc >= 2 ? arg_int(args[1], spec) : 3;
    return family == "softmax-diag" ? GeneratorSpec::softmax_diag(d, k)
                                    : GeneratorSpec::softmax_corr(d, k);
  }
  throw std::invalid_argument(
      "generator: expected linear-diag | linear-corr | logistic-std | logistic-corr | "
      "logistic-iso | softmax-diag | softmax-corr (with optional :<args>), got '" +
      spec + "'");
}

MomentOracle oracle_for(const GeneratorSpec& spec, long mc_samples, Rng& rng) {
  if (spec.model().kind() == RiskModel::Kind::Linear)
    return analytic_linear_moments(spec.feature_second_moment(), spec.noise_sigma());
  const GeneratorSpec copy = spec;
  return estimate_moments(
      spec.model(), [copy](Rng& r) { return draw_observation(copy, r); }, spec.theta_true(),
      mc_samples, rng);
}

int LabeledImages::num_classes() const {
  int top = 0;
  for (int label : labels) top = std::max(top, label);
  return labels.empty() ? 0 : top + 1;
}

LabeledImages LabeledImages::head(Eigen::Index n) const {
  if (n > size())
    throw SizeExceeded("head: requested " + std::to_string(n) + " samples, dataset has " +
                       std::to_string(size()));
  LabeledImages out;
  out.images = images.topRows(n);
  out.labels.assign(labels.begin(), labels.begin() + n);
  out.rows = rows;
  out.cols = cols;
  return out;
}

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(path + ": cannot open");
  return std::vector<unsigned char>((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
}

std::vector<unsigned char> gunzip(const std::string& path,
                                  const std::vector<unsigned char>& in) {
  z_stream zs;
  std::memset(&zs, 0, sizeof zs);
  if (inflateInit2(&zs, 15 + 16) != Z_OK) throw IdxError(path + ": inflateInit failed");
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = static_cast<uInt>(in.size());
  std::vector<unsigned char> out;
  std::vector<unsigned char> buf(1 << 16);
  int ret = Z_OK;
  while (ret != Z_STREAM_END) {
    zs.next_out = buf.data();
    zs.avail_out = static_cast<uInt>(buf.size());
    ret = inflate(&zs, Z_NO_FLUSH);
    if (ret != Z_OK && ret != Z_STREAM_END) {
      inflateEnd(&zs);
      throw IdxError(path + ": gzip inflate failed (zlib code " + std::to_string(ret) + ")");
    }
    out.insert(out.end(), buf.data(), buf.data() + (buf.size() - zs.avail_out));
    if (ret == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw Truncated(path + ": gzip stream ended prematurely at compressed offset " +
                      std::to_string(in.size()));
    }
  }
  inflateEnd(&zs);
  return out;
}

std::vector<unsigned char> load_maybe_gz(const std::string& path) {
  std::vector<unsigned char> bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) return gunzip(path, bytes);
  return bytes;
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off,
                   const std::string& path) {
  if (off + 4 > b.size())
    throw Truncated(path + ": truncated at offset " + std::to_string(off) + " (file has " +
                    std::to_string(b.size()) + " bytes)");
  return (static_cast<std::uint32_t>(b[off]) << 24) |
         (static_cast<std::uint32_t>(b[off + 1]) << 16) |
         (static_cast<std::uint32_t>(b[off + 2]) << 8) | static_cast<std::uint32_t>(b[off + 3]);
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

}  // namespace

LabeledImages read_idx(const std::string& images_path, const std::string& labels_path) {
  const std::vector<unsigned char> img = load_maybe_gz(images_path);
  const std::vector<unsigned char> lab = load_maybe_gz(labels_path);

  const std::uint32_t img_magic = be32(img, 0, images_path);
  if (img_magic != 0x00000803u)
    throw BadMagic(images_path + ": magic " + hex32(img_magic) +
                   " at offset 0, expected 0x00000803");
  const std::uint32_t count = be32(img, 4, images_path);
  const std::uint32_t rows = be32(img, 8, images_path);
  const std::uint32_t cols = be32(img, 12, images_path);
  const std::size_t img_need =
      16 + static_cast<std::size_t>(count) * rows * cols;
  if (img.size() < img_need)
    throw Truncated(images_path + ": file has " + std::to_string(img.size()) +
                    " bytes, header promises " + std::to_string(img_need) +
                    " (missing from offset " + std::to_string(img.size()) + ")");

  const std::uint32_t lab_magic = be32(lab, 0, labels_path);
  if (lab_magic != 0x00000801u)
    throw BadMagic(labels_path + ": magic " + hex32(lab_magic) +
                   " at offset 0, expected 0x00000801");
  const std::uint32_t lab_count = be32(lab, 4, labels_path);
  const std::size_t lab_need = 8 + static_cast<std::size_t>(lab_count);
  if (lab.size() < lab_need)
    throw Truncated(labels_path + ": file has " + std::to_string(lab.size()) +
                    " bytes, header promises " + std::to_string(lab_need) +
                    " (missing from offset " + std::to_string(lab.size()) + ")");

  if (count != lab_count)
    throw CountMismatch(images_path + " has " + std::to_string(count) + " items but " +
                        labels_path + " has " + std::to_string(lab_count));

  LabeledImages data;
  data.rows = static_cast<int>(rows);
  data.cols = static_cast<int>(cols);
  const Eigen::Index pixels = static_cast<Eigen::Index>(rows) * cols;
  data.images.resize(count, pixels);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(count); ++i)
    for (Eigen::Index j = 0; j < pixels; ++j)
      data.images(i, j) = static_cast<double>(img[16 + i * pixels + j]) / 255.0;
  data.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) data.labels[i] = lab[8 + i];
  return data;
}

namespace {

std::vector<Eigen::Index> shuffled_indices(Eigen::Index n, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const auto j =
        static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  return idx;
}

LabeledImages take_rows(const LabeledImages& data, const std::vector<Eigen::Index>& rows,
                        std::size_t begin, std::size_t end) {
  LabeledImages out;
  out.rows = data.rows;
  out.cols = data.cols;
  out.images.resize(static_cast<Eigen::Index>(end - begin), data.images.cols());
  out.labels.resize(end - begin);
  for (std::size_t i = begin; i < end; ++i) {
    out.images.row(static_cast<Eigen::Index>(i - begin)) = data.images.row(rows[i]);
    out.labels[i - begin] = data.labels[static_cast<std::size_t>(rows[i])];
  }
  return out;
}

}  // namespace

std::pair<LabeledImages, LabeledImages> train_test_split(const LabeledImages& data,
                                                         Eigen::Index test_count, Rng& rng) {
  if (test_count < 0 || test_count > data.size())
    throw SizeExceeded("train_test_split: requested test size " + std::to_string(test_count) +
                       ", dataset has " + std::to_string(data.size()));
  const std::vector<Eigen::Index> perm = shuffled_indices(data.size(), rng);
  LabeledImages test = take_rows(data, perm, 0, static_cast<std::size_t>(test_count));
  LabeledImages train =
      take_rows(data, perm, static_cast<std::size_t>(test_count), perm.size());
  return {std::move(train), std::move(test)};
}

DatasetStream::DatasetStream(const LabeledImages& data, bool shuffle, Rng rng) : data_(&data) {
  if (shuffle) {
    order_ = shuffled_indices(data.size(), rng);
  } else {
    order_.resize(static_cast<std::size_t>(data.size()));
    std::iota(order_.begin(), order_.end(), Eigen::Index{0});
  }
}

bool DatasetStream::next(Observation& out) {
  if (pos_ >= order_.size()) return false;
  const Eigen::Index i = order_[pos_++];
  out.x = data_->images.row(i).transpose();
  out.y = static_cast<double>(data_->labels[static_cast<std::size_t>(i)]);
  return true;
}

}  // namespace snewton
