#include "flowlab/nn.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>

#include "flowlab/error.hpp"

namespace flowlab {

namespace {

Mat act(const Mat& z, Activation a) {
  if (a == Activation::tanh) return z.array().tanh().matrix();
  return (z.array() / (1.0 + (-z.array()).exp())).matrix();
}

Mat dact(const Mat& z, Activation a) {
  if (a == Activation::tanh) {
    auto th = z.array().tanh();
    return (1.0 - th * th).matrix();
  }
  auto s = 1.0 / (1.0 + (-z.array()).exp());
  return (s * (1.0 + z.array() * (1.0 - s))).matrix();
}

Mat ddact(const Mat& z, Activation a) {
  if (a == Activation::tanh) {
    auto th = z.array().tanh();
    return (-2.0 * th * (1.0 - th * th)).matrix();
  }
  auto s = 1.0 / (1.0 + (-z.array()).exp());
  return (s * (1.0 - s) * (2.0 + z.array() * (1.0 - 2.0 * s))).matrix();
}

}  // namespace

std::size_t MlpArch::param_count() const {
  std::size_t n = 0;
  for (int l = 0; l < num_layers(); ++l)
    n += static_cast<std::size_t>(layer_in(l) + 1) * static_cast<std::size_t>(layer_out(l));
  return n;
}

Mlp::Mlp(MlpArch arch) : arch_(std::move(arch)) {
  require(arch_.dim >= 1 && arch_.cond_dim >= 0 && arch_.time_pairs >= 0, "Mlp: invalid architecture");
  for (int h : arch_.hidden) require(h >= 1, "Mlp: hidden widths must be positive");
  theta_ = Vec::Zero(static_cast<Eigen::Index>(arch_.param_count()));
  build_offsets();
}

Mlp::Mlp(MlpArch arch, Vec params) : Mlp(std::move(arch)) {
  require(params.size() == theta_.size(), "Mlp: parameter vector has the wrong length");
  require(params.allFinite(), "Mlp: non-finite parameters");
  theta_ = std::move(params);
}

void Mlp::build_offsets() {
  offsets_.clear();
  std::size_t off = 0;
  for (int l = 0; l < arch_.num_layers(); ++l) {
    offsets_.push_back(off);
    off += static_cast<std::size_t>(arch_.layer_in(l) + 1) * static_cast<std::size_t>(arch_.layer_out(l));
  }
}

Mlp Mlp::init(const MlpArch& arch, Rng& rng, bool zero_last) {
  Mlp net(arch);
  for (int l = 0; l < arch.num_layers(); ++l) {
    if (zero_last && l + 1 == arch.num_layers()) break;
    const double bound = 1.0 / std::sqrt(static_cast<double>(arch.layer_in(l)));
    auto w = net.weight(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-bound, bound);
    auto b = net.bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = rng.uniform(-bound, bound);
  }
  return net;
}

Eigen::Map<const Mat> Mlp::weight(int l) const {
  return {theta_.data() + offsets_[static_cast<std::size_t>(l)], arch_.layer_out(l), arch_.layer_in(l)};
}
Eigen::Map<const Vec> Mlp::bias(int l) const {
  return {theta_.data() + offsets_[static_cast<std::size_t>(l)] + static_cast<std::size_t>(arch_.layer_out(l)) * arch_.layer_in(l),
          arch_.layer_out(l)};
}
Eigen::Map<Mat> Mlp::weight(int l) {
  return {theta_.data() + offsets_[static_cast<std::size_t>(l)], arch_.layer_out(l), arch_.layer_in(l)};
}
Eigen::Map<Vec> Mlp::bias(int l) {
  return {theta_.data() + offsets_[static_cast<std::size_t>(l)] + static_cast<std::size_t>(arch_.layer_out(l)) * arch_.layer_in(l),
          arch_.layer_out(l)};
}

Vec Mlp::features(double t, const Vec& x, const Vec& w) const {
  require(x.size() == arch_.dim, "Mlp: state dimension mismatch");
  require(w.size() == arch_.cond_dim, "Mlp: condition dimension mismatch");
  Vec f(arch_.input_dim());
  f.head(arch_.dim) = x;
  f.segment(arch_.dim, arch_.cond_dim) = w;
  Eigen::Index k0 = arch_.dim + arch_.cond_dim;
  f[k0] = t;
  for (int k = 1; k <= arch_.time_pairs; ++k) {
    const double ang = 2.0 * std::numbers::pi * k * t;
    f[k0 + 2 * k - 1] = std::sin(ang);
    f[k0 + 2 * k] = std::cos(ang);
  }
  return f;
}

Mat Mlp::features_batch(const Vec& t, const Points& x, const Points& w) const {
  const Eigen::Index n = x.cols();
  require(x.rows() == arch_.dim, "Mlp: state dimension mismatch");
  require(t.size() == n || t.size() == 1, "Mlp: time vector length mismatch");
  if (arch_.cond_dim > 0)
    require(w.rows() == arch_.cond_dim && (w.cols() == n || w.cols() == 1), "Mlp: condition shape mismatch");
  Mat f(arch_.input_dim(), n);
  f.topRows(arch_.dim) = x;
  if (arch_.cond_dim > 0) {
    if (w.cols() == n)
      f.middleRows(arch_.dim, arch_.cond_dim) = w;
    else
      f.middleRows(arch_.dim, arch_.cond_dim) = w.col(0).replicate(1, n);
  }
  const Eigen::Index k0 = arch_.dim + arch_.cond_dim;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double tj = t.size() == 1 ? t[0] : t[j];
    f(k0, j) = tj;
    for (int k = 1; k <= arch_.time_pairs; ++k) {
      const double ang = 2.0 * std::numbers::pi * k * tj;
      f(k0 + 2 * k - 1, j) = std::sin(ang);
      f(k0 + 2 * k, j) = std::cos(ang);
    }
  }
  return f;
}

Mat Mlp::forward_features(const Mat& feats, MlpTape* tape) const {
  const int layers = arch_.num_layers();
  if (tape) {
    tape->a.clear();
    tape->z.clear();
    tape->a.push_back(feats);
  }
  Mat a = feats;
  for (int l = 0; l < layers; ++l) {
    Mat z = weight(l) * a;
    z.colwise() += bias(l);
    if (l + 1 == layers) {
      if (tape) tape->z.push_back(z);
      return z;
    }
    a = act(z, arch_.activation);
    if (tape) {
      tape->z.push_back(std::move(z));
      tape->a.push_back(a);
    }
  }
  return a;
}

Vec Mlp::backward(const MlpTape& tape, const Mat& cot_out, Mat* cot_features) const {
  Vec grad = Vec::Zero(theta_.size());
  const int layers = arch_.num_layers();
  Mat delta = cot_out;
  for (int l = layers - 1; l >= 0; --l) {
    const std::size_t off = offsets_[static_cast<std::size_t>(l)];
    const int out = arch_.layer_out(l), in = arch_.layer_in(l);
    Eigen::Map<Mat>(grad.data() + off, out, in).noalias() = delta * tape.a[static_cast<std::size_t>(l)].transpose();
    Eigen::Map<Vec>(grad.data() + off + static_cast<std::size_t>(out) * in, out) = delta.rowwise().sum();
    if (l > 0) {
      Mat up = weight(l).transpose() * delta;
      delta = up.cwiseProduct(dact(tape.z[static_cast<std::size_t>(l - 1)], arch_.activation));
    } else if (cot_features) {
      *cot_features = weight(0).transpose() * delta;
    }
  }
  return grad;
}

Vec Mlp::forward(double t, const Vec& x, const Vec& w) const { return forward_features(features(t, x, w)); }

Points Mlp::forward_batch(const Vec& t, const Points& x, const Points& w) const {
  return forward_features(features_batch(t, x, w));
}

Vec Mlp::vjp_params(double t, const Vec& x, const Vec& cot, const Vec& w) const {
  require(cot.size() == arch_.dim, "vjp_params: cotangent dimension mismatch");
  MlpTape tape;
  forward_features(features(t, x, w), &tape);
  return backward(tape, cot);
}

Vec Mlp::vjp_input(double t, const Vec& x, const Vec& cot, const Vec& w) const {
  require(cot.size() == arch_.dim, "vjp_input: cotangent dimension mismatch");
  MlpTape tape;
  forward_features(features(t, x, w), &tape);
  Mat cf;
  backward(tape, cot, &cf);
  return cf.col(0).head(arch_.dim);
}

namespace {

// Forward pass carrying tangent columns for the x-block of the input.
struct TangentPass {
  std::vector<Vec> a;   // primal layer inputs
  std::vector<Mat> ad;  // tangent layer inputs
  std::vector<Vec> z;   // primal pre-activations
  std::vector<Mat> zd;  // tangent pre-activations
};

TangentPass tangent_forward(const Mlp& net, const Vec& feats, const Mat& dx) {
  const auto& arch = net.arch();
  TangentPass tp;
  Mat a0d = Mat::Zero(arch.input_dim(), dx.cols());
  a0d.topRows(arch.dim) = dx;
  tp.a.push_back(feats);
  tp.ad.push_back(std::move(a0d));
  for (int l = 0; l < arch.num_layers(); ++l) {
    Vec z = net.weight(l) * tp.a.back() + net.bias(l);
    Mat zd = net.weight(l) * tp.ad.back();
    if (l + 1 < arch.num_layers()) {
      const Mat s1 = dact(z, arch.activation);
      tp.a.push_back(act(z, arch.activation));
      tp.ad.push_back(zd.array().colwise() * s1.col(0).array());
    }
    tp.z.push_back(std::move(z));
    tp.zd.push_back(std::move(zd));
  }
  return tp;
}

}  // namespace

Vec Mlp::jvp_input(double t, const Vec& x, const Vec& u, const Vec& w) const {
  require(u.size() == arch_.dim, "jvp_input: tangent dimension mismatch");
  return tangent_forward(*this, features(t, x, w), u).zd.back().col(0);
}

Mat Mlp::jacobian_x(double t, const Vec& x, const Vec& w) const {
  return tangent_forward(*this, features(t, x, w), Mat::Identity(arch_.dim, arch_.dim)).zd.back();
}

double Mlp::divergence(double t, const Vec& x, const Vec& w) const {
  require(arch_.dim <= kMaxExactDivergenceDim, "divergence: dimension above exact regime (d <= 16)");
  return jacobian_x(t, x, w).trace();
}

Mlp::DivGrad Mlp::value_div_grad(double t, const Vec& x, const Vec& cot_v, double cot_div, const Vec& w) const {
  require(arch_.dim <= kMaxExactDivergenceDim, "divergence: dimension above exact regime (d <= 16)");
  require(cot_v.size() == arch_.dim, "value_div_grad: cotangent dimension mismatch");
  const int d = arch_.dim;
  const int layers = arch_.num_layers();
  const TangentPass tp = tangent_forward(*this, features(t, x, w), Mat::Identity(d, d));

  DivGrad out;
  out.value = tp.z.back();
  out.div = tp.zd.back().trace();
  out.grad_theta = Vec::Zero(theta_.size());

  Vec zbar = cot_v;
  Mat zdbar = cot_div * Mat::Identity(d, d);
  for (int l = layers - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    const std::size_t off = offsets_[li];
    const int o = arch_.layer_out(l), in = arch_.layer_in(l);
    Eigen::Map<Mat> gw(out.grad_theta.data() + off, o, in);
    gw.noalias() = zbar * tp.a[li].transpose();
    gw.noalias() += zdbar * tp.ad[li].transpose();
    Eigen::Map<Vec>(out.grad_theta.data() + off + static_cast<std::size_t>(o) * in, o) = zbar;
    const Vec abar = weight(l).transpose() * zbar;
    const Mat adbar = weight(l).transpose() * zdbar;
    if (l > 0) {
      const Vec& zp = tp.z[li - 1];
      const Vec s1 = dact(zp, arch_.activation);
      const Vec s2 = ddact(zp, arch_.activation);
      const Vec mix = tp.zd[li - 1].cwiseProduct(adbar).rowwise().sum();
      zbar = s1.cwiseProduct(abar) + s2.cwiseProduct(mix);
      zdbar = adbar.array().colwise() * s1.array();
    } else {
      out.grad_x = abar.head(d);
    }
  }
  return out;
}

void adam_step(AdamState& state, Vec& theta, const Vec& grad) {
  require(grad.size() == theta.size() && state.m.size() == theta.size(), "adam_step: size mismatch");
  if (!grad.allFinite()) throw NumericalError("diverged");
  const auto& c = state.config;
  state.step += 1;
  state.m = c.beta1 * state.m + (1.0 - c.beta1) * grad;
  state.v = c.beta2 * state.v + (1.0 - c.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    const double mh = state.m[i] / bc1;
    const double vh = state.v[i] / bc2;
    theta[i] -= c.lr * mh / (std::sqrt(vh) + c.eps);
  }
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[7] = {'F', 'L', 'O', 'W', 'N', 'N', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 8);
}
void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(b, 4);
}
std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  require(in.gcount() == 8, "checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}
std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  require(in.gcount() == 4, "checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

void save_checkpoint(std::ostream& out, const Mlp& net) {
  const auto& a = net.arch();
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, static_cast<std::uint32_t>(a.dim));
  put_u32(out, static_cast<std::uint32_t>(a.cond_dim));
  put_u32(out, static_cast<std::uint32_t>(a.time_pairs));
  put_u32(out, static_cast<std::uint32_t>(a.activation));
  put_u32(out, static_cast<std::uint32_t>(a.role));
  put_u32(out, static_cast<std::uint32_t>(a.hidden.size()));
  for (int h : a.hidden) put_u32(out, static_cast<std::uint32_t>(h));
  put_u64(out, net.param_count());
  for (Eigen::Index i = 0; i < net.params().size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(net.params()[i]));
}

Mlp load_checkpoint(std::istream& in) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  require(in.gcount() == static_cast<std::streamsize>(sizeof(magic)) && std::equal(magic, magic + sizeof(magic), kMagic),
          "checkpoint: bad magic (expected FLOWNN1)");
  MlpArch a;
  a.dim = static_cast<int>(get_u32(in));
  a.cond_dim = static_cast<int>(get_u32(in));
  a.time_pairs = static_cast<int>(get_u32(in));
  const std::uint32_t act_id = get_u32(in);
  require(act_id <= 1, "checkpoint: unknown activation id");
  a.activation = static_cast<Activation>(act_id);
  const std::uint32_t role = get_u32(in);
  require(role <= 2, "checkpoint: unknown network role");
  a.role = static_cast<NetRole>(role);
  const std::uint32_t nh = get_u32(in);
  require(nh <= 64, "checkpoint: implausible layer count");
  a.hidden.assign(nh, 0);
  for (auto& h : a.hidden) h = static_cast<int>(get_u32(in));
  require(a.dim >= 1 && a.dim <= 4096 && a.cond_dim <= 4096 && a.time_pairs <= 1024, "checkpoint: implausible header");
  for (int h : a.hidden) require(h >= 1 && h <= 1 << 16, "checkpoint: implausible layer width");
  const std::uint64_t count = get_u64(in);
  require(count == a.param_count(), "checkpoint: parameter count does not match architecture");
  Vec p(static_cast<Eigen::Index>(count));
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = std::bit_cast<double>(get_u64(in));
  return Mlp(a, std::move(p));
}

void save_checkpoint(const std::string& path, const Mlp& net) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), "cannot open '" + path + "' for writing");
  save_checkpoint(f, net);
  require(f.good(), "write failed for '" + path + "'");
}

Mlp load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "cannot open '" + path + "'");
  return load_checkpoint(f);
}

}  // namespace flowlab
