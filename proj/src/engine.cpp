#include "tcl/engine.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "tcl/kernels.hpp"
#include "tcl/numerics.hpp"
#include "tcl/persist.hpp"

namespace tcl {

using nlohmann::json;

namespace {

constexpr double kLeakySlope = 0.01;
constexpr double kNormEps = 1e-5;

double leaky(double z) { return z > 0.0 ? z : kLeakySlope * z; }
double leaky_grad(double z) { return z > 0.0 ? 1.0 : kLeakySlope; }

struct EncoderCache {
  Matrix input;
  Matrix pre;     // input * W + b
  Matrix normed;  // (act - mean) / sd, per row
  Vector inv_sd;
  Matrix norm_out;
  Matrix out;
};

struct DecoderCache {
  Matrix input;
  Matrix pre;
  Matrix act;
  Matrix out;
};

Matrix dense(const Matrix& x, const Dense& layer) {
  return kernels::add_bias(kernels::matmul(x, layer.weight), layer.bias);
}

EncoderCache encoder_forward(const TclParams& p, const Matrix& x) {
  EncoderCache c;
  c.input = x;
  c.pre = dense(x, p.enc_in);
  const Matrix act = kernels::elementwise_apply(c.pre, leaky);
  const std::size_t n = act.rows(), h = act.cols();
  c.normed = Matrix(n, h);
  c.norm_out = Matrix(n, h);
  c.inv_sd.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = act.row(i);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(h);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(h);
    const double inv = 1.0 / std::sqrt(var + kNormEps);
    c.inv_sd[i] = inv;
    for (std::size_t j = 0; j < h; ++j) {
      const double z = (row[j] - mean) * inv;
      c.normed(i, j) = z;
      c.norm_out(i, j) = z * p.norm_gain[j] + p.norm_bias[j];
    }
  }
  c.out = dense(c.norm_out, p.enc_out);
  return c;
}

DecoderCache decoder_forward(const TclParams& p, const Matrix& e) {
  DecoderCache c;
  c.input = e;
  c.pre = dense(e, p.dec_in);
  c.act = kernels::elementwise_apply(c.pre, leaky);
  c.out = dense(c.act, p.dec_out);
  return c;
}

void check_finite(const Matrix& m, const char* layer) {
  if (!all_finite(m.data())) {
    throw NumericError(std::string("non-finite values in ") + layer);
  }
}

void accumulate(std::span<double> into, std::span<const double> from) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += from[i];
}

void dense_backward(const Matrix& input, const Matrix& dout, Dense& grad) {
  accumulate(grad.weight.data(), kernels::matmul_tn(input, dout).data());
  accumulate(grad.bias, kernels::column_sums(dout));
}

// Returns d loss / d(decoder input).
Matrix decoder_backward(const TclParams& p, const DecoderCache& c, const Matrix& dout,
                        TclParams& g) {
  dense_backward(c.act, dout, g.dec_out);
  Matrix dpre = kernels::matmul_nt(dout, p.dec_out.weight);
  for (std::size_t i = 0; i < dpre.size(); ++i) dpre.data()[i] *= leaky_grad(c.pre.data()[i]);
  check_finite(dpre, "decoder hidden layer");
  dense_backward(c.input, dpre, g.dec_in);
  return kernels::matmul_nt(dpre, p.dec_in.weight);
}

void encoder_backward(const TclParams& p, const EncoderCache& c, const Matrix& dout,
                      TclParams& g) {
  dense_backward(c.norm_out, dout, g.enc_out);
  const Matrix dnorm_out = kernels::matmul_nt(dout, p.enc_out.weight);
  const std::size_t n = dnorm_out.rows(), h = dnorm_out.cols();
  Matrix dpre(n, h);
  Vector dz(h);
  for (std::size_t i = 0; i < n; ++i) {
    double mean_dz = 0.0, mean_dz_z = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      g.norm_gain[j] += dnorm_out(i, j) * c.normed(i, j);
      g.norm_bias[j] += dnorm_out(i, j);
      dz[j] = dnorm_out(i, j) * p.norm_gain[j];
      mean_dz += dz[j];
      mean_dz_z += dz[j] * c.normed(i, j);
    }
    mean_dz /= static_cast<double>(h);
    mean_dz_z /= static_cast<double>(h);
    for (std::size_t j = 0; j < h; ++j) {
      const double dact = c.inv_sd[i] * (dz[j] - mean_dz - c.normed(i, j) * mean_dz_z);
      dpre(i, j) = dact * leaky_grad(c.pre(i, j));
    }
  }
  check_finite(dpre, "encoder normalisation layer");
  dense_backward(c.input, dpre, g.enc_in);
}

void check_views(const TclModel& m, const Views& v) {
  const std::size_t d = m.config.input_dim;
  if (v.clean.cols() != d || !v.clean.same_shape(v.first) || !v.clean.same_shape(v.second)) {
    throw ArgumentError("views must all be n x " + std::to_string(d));
  }
  if (v.clean.rows() == 0) throw ArgumentError("empty batch");
}

Dense glorot(std::size_t in, std::size_t out, RngStream& rng) {
  Dense l{Matrix(in, out), Vector(out, 0.0)};
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& w : l.weight.data()) w = a * (2.0 * rng.uniform() - 1.0);
  return l;
}

json matrix_json(std::size_t rows, std::size_t cols, std::span<const double> data) {
  return {{"rows", rows}, {"cols", cols}, {"data", std::vector<double>(data.begin(), data.end())}};
}

}  // namespace

const char* to_string(NoiseMode m) { return m == NoiseMode::Gaussian ? "gaussian" : "mask"; }

NoiseMode parse_noise_mode(const std::string& s) {
  if (s == "gaussian") return NoiseMode::Gaussian;
  if (s == "mask") return NoiseMode::Mask;
  throw ConfigError("unknown noise mode '" + s + "' (expected gaussian or mask)");
}

const char* to_string(StopReason r) {
  return r == StopReason::Stabilized ? "stabilized" : "max-epochs";
}

TclConfig TclConfig::resolved(std::size_t d) const {
  TclConfig c = *this;
  c.input_dim = d;
  if (c.hidden == 0) c.hidden = std::clamp<std::size_t>(2 * d, 16, 256);
  if (c.latent == 0) c.latent = std::clamp<std::size_t>(d, 8, 128);
  return c;
}

void TclConfig::validate() const {
  if (input_dim == 0 || hidden == 0 || latent == 0) {
    throw ConfigError("tcl config: input, hidden and latent widths must be >= 1");
  }
  if (!(temperature > 0.0)) throw ConfigError("tcl config: temperature must be > 0");
  if (batch_size < 2) throw ConfigError("tcl config: batch size must be >= 2");
  if (!(sigma >= 0.0)) throw ConfigError("tcl config: sigma must be >= 0");
  if (!(mask_p >= 0.0 && mask_p <= 1.0)) throw ConfigError("tcl config: mask_p must lie in [0, 1]");
  if (!(learning_rate > 0.0)) throw ConfigError("tcl config: learning rate must be > 0");
  if (!(tolerance >= 0.0)) throw ConfigError("tcl config: tolerance must be >= 0");
  if (max_epochs == 0) throw ConfigError("tcl config: max_epochs must be >= 1");
}

json to_json(const TclConfig& c) {
  return {{"input_dim", c.input_dim}, {"hidden", c.hidden},
          {"latent", c.latent},       {"noise", to_string(c.noise)},
          {"sigma", c.sigma},         {"mask_p", c.mask_p},
          {"temperature", c.temperature}, {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},   {"tolerance", c.tolerance},
          {"learning_rate", c.learning_rate}, {"seed", c.seed}};
}

TclConfig tcl_config_from_json(const json& j) {
  static const std::vector<std::string> known = {
      "input_dim", "hidden", "latent", "noise", "sigma", "mask_p", "temperature",
      "batch_size", "max_epochs", "tolerance", "learning_rate", "seed"};
  TclConfig c;
  try {
    for (const auto& [key, _] : j.items()) {
      if (std::find(known.begin(), known.end(), key) == known.end()) {
        throw ConfigError("tcl config: unknown key '" + key + "'");
      }
    }
    c.input_dim = j.value("input_dim", c.input_dim);
    c.hidden = j.value("hidden", c.hidden);
    c.latent = j.value("latent", c.latent);
    if (j.contains("noise")) c.noise = parse_noise_mode(j["noise"].get<std::string>());
    c.sigma = j.value("sigma", c.sigma);
    c.mask_p = j.value("mask_p", c.mask_p);
    c.temperature = j.value("temperature", c.temperature);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.tolerance = j.value("tolerance", c.tolerance);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("tcl config: ") + e.what());
  }
  return c;
}

TclParams TclParams::zeros(std::size_t d, std::size_t h, std::size_t k) {
  TclParams p;
  p.enc_in = {Matrix(d, h), Vector(h, 0.0)};
  p.norm_gain.assign(h, 0.0);
  p.norm_bias.assign(h, 0.0);
  p.enc_out = {Matrix(h, k), Vector(k, 0.0)};
  p.dec_in = {Matrix(k, h), Vector(h, 0.0)};
  p.dec_out = {Matrix(h, d), Vector(d, 0.0)};
  return p;
}

std::size_t TclParams::count() const {
  std::size_t n = 0;
  for_each([&](const char*, std::span<const double> s) { n += s.size(); });
  return n;
}

Vector TclParams::flatten() const {
  Vector out;
  out.reserve(count());
  for_each([&](const char*, std::span<const double> s) { out.insert(out.end(), s.begin(), s.end()); });
  return out;
}

void TclParams::assign(std::span<const double> flat) {
  if (flat.size() != count()) throw ArgumentError("TclParams::assign: size mismatch");
  std::size_t off = 0;
  for_each([&](const char*, std::span<double> s) {
    std::copy_n(flat.begin() + off, s.size(), s.begin());
    off += s.size();
  });
}

TclModel TclModel::initialize(const TclConfig& config, RngStream& rng) {
  config.validate();
  const std::size_t d = config.input_dim, h = config.hidden, k = config.latent;
  TclModel m;
  m.config = config;
  m.params.enc_in = glorot(d, h, rng);
  m.params.norm_gain.assign(h, 1.0);
  m.params.norm_bias.assign(h, 0.0);
  m.params.enc_out = glorot(h, k, rng);
  m.params.dec_in = glorot(k, h, rng);
  m.params.dec_out = glorot(h, d, rng);
  return m;
}

std::pair<Matrix, Matrix> augment(const Matrix& batch, const TclConfig& config, RngStream& rng) {
  if (batch.rows() == 0 || batch.cols() == 0) throw ArgumentError("augment: empty batch");
  std::pair<Matrix, Matrix> views{batch, batch};
  for (Matrix* v : {&views.first, &views.second}) {
    if (config.noise == NoiseMode::Gaussian) {
      const Matrix noise = gaussian_noise(batch.rows(), batch.cols(), config.sigma, rng);
      for (std::size_t i = 0; i < v->size(); ++i) v->data()[i] += noise.data()[i];
    } else {
      const Matrix mask = keep_mask(batch.rows(), batch.cols(), config.mask_p, rng);
      for (std::size_t i = 0; i < v->size(); ++i) v->data()[i] *= mask.data()[i];
    }
  }
  return views;
}

Matrix encode(const TclModel& model, const Matrix& x) {
  if (x.cols() != model.config.input_dim) {
    throw ArgumentError("encode: expected " + std::to_string(model.config.input_dim) +
                        " columns, got " + std::to_string(x.cols()));
  }
  Matrix e = encoder_forward(model.params, x).out;
  check_finite(e, "encoder output");
  return e;
}

Matrix decode(const TclModel& model, const Matrix& e) {
  if (e.cols() != model.config.latent) {
    throw ArgumentError("decode: expected " + std::to_string(model.config.latent) +
                        " columns, got " + std::to_string(e.cols()));
  }
  Matrix x = decoder_forward(model.params, e).out;
  check_finite(x, "decoder output");
  return x;
}

Matrix embed(const TclModel& model, const Matrix& x) { return encode(model, x); }

double loss_reconstruction(const Matrix& xhat1, const Matrix& xhat2, const Matrix& clean) {
  return 0.5 * (mse(xhat1, clean) + mse(xhat2, clean));
}

double loss_distance(const Matrix& e1, const Matrix& e2) { return mse(e1, e2); }

double loss_contrastive(const Matrix& e1, const Matrix& e2, double temperature) {
  if (!(temperature > 0.0)) throw ArgumentError("loss_contrastive: temperature must be > 0");
  if (!e1.same_shape(e2)) throw ArgumentError("loss_contrastive: shape mismatch");
  if (e1.rows() == 0) throw ArgumentError("loss_contrastive: empty input");
  const Vector dots = kernels::row_dots(e1, e2);
  double s = 0.0;
  for (double v : dots) s += v * v;
  return (s / static_cast<double>(dots.size())) / temperature;
}

Views draw_views(const Matrix& batch, const TclConfig& config, RngStream& rng) {
  auto [a, b] = augment(batch, config, rng);
  return {batch, std::move(a), std::move(b)};
}

namespace {

LossBreakdown combine(double r, double c, double d) {
  return {r, c, d, r + c + d};
}

}  // namespace

LossBreakdown loss_on_views(const TclModel& model, const Views& views) {
  check_views(model, views);
  const Matrix e1 = encode(model, views.first);
  const Matrix e2 = encode(model, views.second);
  const Matrix x1 = decode(model, e1);
  const Matrix x2 = decode(model, e2);
  return combine(loss_reconstruction(x1, x2, views.clean),
                 loss_contrastive(e1, e2, model.config.temperature), loss_distance(e1, e2));
}

LossBreakdown loss_total(const Matrix& batch, const TclModel& model, RngStream& rng) {
  return loss_on_views(model, draw_views(batch, model.config, rng));
}

Gradient grad_on_views(const TclModel& model, const Views& views, LossTerms terms) {
  check_views(model, views);
  const TclParams& p = model.params;
  const std::size_t n = views.clean.rows();
  const std::size_t d = model.config.input_dim, h = model.config.hidden, k = model.config.latent;
  const double temp = model.config.temperature;

  const EncoderCache enc1 = encoder_forward(p, views.first);
  const EncoderCache enc2 = encoder_forward(p, views.second);
  check_finite(enc1.out, "encoder output");
  check_finite(enc2.out, "encoder output");
  const DecoderCache dec1 = decoder_forward(p, enc1.out);
  const DecoderCache dec2 = decoder_forward(p, enc2.out);
  check_finite(dec1.out, "decoder output");
  check_finite(dec2.out, "decoder output");
  const Matrix& e1 = enc1.out;
  const Matrix& e2 = enc2.out;

  Gradient g;
  g.loss = combine(loss_reconstruction(dec1.out, dec2.out, views.clean),
                   loss_contrastive(e1, e2, temp), loss_distance(e1, e2));
  g.grad = TclParams::zeros(d, h, k);

  Matrix de1(n, k), de2(n, k);
  if (terms.distance) {
    const double s = 2.0 / static_cast<double>(n * k);
    for (std::size_t i = 0; i < n * k; ++i) {
      const double diff = s * (e1.data()[i] - e2.data()[i]);
      de1.data()[i] += diff;
      de2.data()[i] -= diff;
    }
  }
  if (terms.contrastive) {
    const Vector dots = kernels::row_dots(e1, e2);
    const double s = 2.0 / (static_cast<double>(n) * temp);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        de1(i, j) += s * dots[i] * e2(i, j);
        de2(i, j) += s * dots[i] * e1(i, j);
      }
  }
  if (terms.reconstruction) {
    // 0.5 * 2 / (n d) per view
    const double s = 1.0 / static_cast<double>(n * d);
    for (const auto* dc : {&dec1, &dec2}) {
      Matrix dout(n, d);
      for (std::size_t i = 0; i < n * d; ++i) {
        dout.data()[i] = s * (dc->out.data()[i] - views.clean.data()[i]);
      }
      const Matrix de = decoder_backward(p, *dc, dout, g.grad);
      accumulate((dc == &dec1 ? de1 : de2).data(), de.data());
    }
  }
  check_finite(de1, "latent layer");
  check_finite(de2, "latent layer");
  encoder_backward(p, enc1, de1, g.grad);
  encoder_backward(p, enc2, de2, g.grad);
  return g;
}

Gradient grad_loss(const TclModel& model, const Matrix& batch, RngStream& rng) {
  return grad_on_views(model, draw_views(batch, model.config, rng));
}

json to_json(const TrainTrace& t) {
  return {{"total", t.total},
          {"reconstruction", t.reconstruction},
          {"contrastive", t.contrastive},
          {"distance", t.distance},
          {"seconds", t.seconds},
          {"epochs", t.epochs},
          {"stop", to_string(t.stop)}};
}

namespace {

struct Adam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Vector m, v;
  std::size_t step = 0;

  void update(Vector& theta, const Vector& grad) {
    if (m.empty()) {
      m.assign(theta.size(), 0.0);
      v.assign(theta.size(), 0.0);
    }
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

}  // namespace

std::pair<TclModel, TrainTrace> train_tcl(const Matrix& data, const TclConfig& config_in) {
  const auto start = std::chrono::steady_clock::now();
  const TclConfig config = config_in.resolved(data.cols());
  config.validate();
  if (config_in.input_dim != 0 && config_in.input_dim != data.cols()) {
    throw ArgumentError("train_tcl: config input_dim " + std::to_string(config_in.input_dim) +
                        " does not match data width " + std::to_string(data.cols()));
  }
  const std::size_t n = data.rows();
  if (n < 2) throw ArgumentError("train_tcl: need at least 2 rows");
  const std::size_t batch = std::min(config.batch_size, n);

  const RngStream root(config.seed, 0x7C1);
  RngStream init_rng = root.fork(1);
  RngStream order_rng = root.fork(2);
  RngStream noise_rng = root.fork(3);

  TclModel model = TclModel::initialize(config, init_rng);
  Adam opt;
  opt.lr = config.learning_rate;
  Vector theta = model.params.flatten();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainTrace trace;
  double first_batch_loss = -1.0;
  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
    LossBreakdown sum;
    std::size_t batches = 0;
    for (std::size_t s = 0; s < n; s += batch) {
      const std::size_t len = std::min(batch, n - s);
      if (len < 2) continue;  // single leftover row
      const Matrix xb = data.select_rows(std::span(order).subspan(s, len));
      const Gradient g = grad_loss(model, xb, noise_rng);
      const double lt = g.loss.total;
      if (first_batch_loss < 0.0) first_batch_loss = lt;
      if (!std::isfinite(lt) || lt > 10.0 * first_batch_loss) {
        throw TrainingError("train_tcl: loss diverged (" + format_double(lt) + " vs initial " +
                            format_double(first_batch_loss) + "); reduce the learning rate");
      }
      opt.update(theta, g.grad.flatten());
      model.params.assign(theta);
      sum.reconstruction += g.loss.reconstruction;
      sum.contrastive += g.loss.contrastive;
      sum.distance += g.loss.distance;
      sum.total += lt;
      ++batches;
    }
    const double j = static_cast<double>(batches);
    trace.total.push_back(sum.total / j);
    trace.reconstruction.push_back(sum.reconstruction / j);
    trace.contrastive.push_back(sum.contrastive / j);
    trace.distance.push_back(sum.distance / j);
    trace.epochs = epoch + 1;

    const std::size_t e = trace.total.size();
    if (config.tolerance > 0.0 && e >= 4) {
      const double before = trace.total[e - 4];
      const double rel = (before - trace.total[e - 1]) / std::abs(before);
      if (rel < config.tolerance) {
        trace.stop = StopReason::Stabilized;
        break;
      }
    }
  }
  trace.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(model), std::move(trace)};
}

json to_json(const TclModel& m) {
  json params = json::array();
  const std::size_t d = m.config.input_dim, h = m.config.hidden, k = m.config.latent;
  const std::vector<std::pair<std::size_t, std::size_t>> shapes = {
      {d, h}, {1, h}, {1, h}, {1, h}, {h, k}, {1, k}, {k, h}, {1, h}, {h, d}, {1, d}};
  std::size_t idx = 0;
  m.params.for_each([&](const char* name, std::span<const double> s) {
    json t = matrix_json(shapes[idx].first, shapes[idx].second, s);
    t["name"] = name;
    params.push_back(std::move(t));
    ++idx;
  });
  return {{"format", "tcl-model"},
          {"version", kModelFormatVersion},
          {"config", to_json(m.config)},
          {"parameters", params}};
}

TclModel model_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "tcl-model" ||
        j.at("version").get<int>() != kModelFormatVersion) {
      throw FormatError("model file: unsupported format or version");
    }
    TclModel m;
    m.config = tcl_config_from_json(j.at("config"));
    m.config.validate();
    m.params = TclParams::zeros(m.config.input_dim, m.config.hidden, m.config.latent);
    const auto& arr = j.at("parameters");
    std::size_t idx = 0;
    m.params.for_each([&](const char* name, std::span<double> s) {
      if (idx >= arr.size()) throw FormatError("model file: missing parameter " + std::string(name));
      const auto& t = arr[idx++];
      if (t.at("name").get<std::string>() != name) {
        throw FormatError("model file: expected parameter " + std::string(name));
      }
      const auto data = t.at("data").get<std::vector<double>>();
      if (data.size() != s.size()) {
        throw FormatError("model file: parameter " + std::string(name) + " has wrong size");
      }
      std::copy(data.begin(), data.end(), s.begin());
    });
    if (idx != arr.size()) throw FormatError("model file: unexpected extra parameters");
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model file: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model file: ") + e.what());
  }
}

void save_model(const TclModel& model, const std::filesystem::path& path) {
  write_json(to_json(model), path);
}

TclModel load_model(const std::filesystem::path& path) { return model_from_json(read_json(path)); }

}  // namespace tcl
