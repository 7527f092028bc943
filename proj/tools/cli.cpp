#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>

#include "flowlab/bayes.hpp"
#include "flowlab/config.hpp"
#include "flowlab/datasets.hpp"
#include "flowlab/diffusion.hpp"
#include "flowlab/error.hpp"
#include "flowlab/fields.hpp"
#include "flowlab/nn.hpp"
#include "flowlab/odeint.hpp"
#include "flowlab/plan_io.hpp"
#include "flowlab/training.hpp"
#include "flowlab/transport.hpp"

namespace fs = std::filesystem;

namespace flowlab::cli {

namespace {

// ------------------------------------------------------------------ helpers

Vec parse_vec(const std::string& text, const std::string& what) {
  const auto fields = split_csv_line(text);
  Vec v(static_cast<Eigen::Index>(fields.size()));
  for (std::size_t i = 0; i < fields.size(); ++i) {
    try {
      v[static_cast<Eigen::Index>(i)] = parse_double(fields[i]);
    } catch (const ValidationError&) {
      throw ValidationError(what + ": expected comma-separated numbers, got '" + text + "'");
    }
  }
  return v;
}

/// Writes through `fn` to `path`, or to `out` when path is "-".
void emit(const std::string& path, std::ostream& out, const std::function<void(std::ostream&)>& fn) {
  if (path == "-") {
    fn(out);
    return;
  }
  if (const fs::path parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write '" + path + "'");
  fn(f);
  if (!f) throw ValidationError("write failed for '" + path + "'");
}

std::string join_path(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

std::vector<std::string> coord_names(const std::string& prefix, Eigen::Index d) {
  std::vector<std::string> names;
  for (Eigen::Index i = 1; i <= d; ++i) names.push_back(prefix + std::to_string(i));
  return names;
}

OdeMethod parse_method(const std::string& s) {
  if (s == "rk4") return OdeMethod::rk4;
  if (s == "euler") return OdeMethod::euler;
  throw ValidationError("unknown ODE method '" + s + "' (expected rk4 or euler)");
}

/// key=value pairs from repeated --set flags.
KeyValueConfig parse_overrides(const std::vector<std::string>& sets) {
  KeyValueConfig kv;
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError("--set expects key=value, got '" + s + "'");
    kv.set(s.substr(0, eq), s.substr(eq + 1));
  }
  return kv;
}

DiscreteMeasure load_discrete(const std::string& path) {
  std::istringstream in(load_text(path));
  return read_discrete_csv(in);
}

Points load_points(const std::string& path) {
  std::istringstream in(load_text(path));
  return read_points_csv(in);
}

std::shared_ptr<const Mlp> load_net(const std::string& path) {
  return std::make_shared<const Mlp>(load_checkpoint(path));
}

Points replicate(const Vec& w, Eigen::Index n) { return w.replicate(1, n); }

/// Points sampled from a velocity checkpoint; conditional nets get `cond` in every column.
Points sample_checkpoint(const std::shared_ptr<const Mlp>& net, const Vec& cond, Eigen::Index n,
                         const SolverSpec& spec, Seed seed, double eps) {
  if (net->arch().role == NetRole::score)
    throw ValidationError("checkpoint holds a score network; use `flowlab diffusion sample`");
  if (net->cond_dim() > 0) {
    require(cond.size() == net->cond_dim(),
            "checkpoint is conditional with " + std::to_string(net->cond_dim()) + " condition coordinates; pass --cond");
    return sample_conditional(*net, replicate(cond, n), spec, seed, eps);
  }
  require(cond.size() == 0, "checkpoint is unconditional; drop --cond");
  return sample_flow(VelocityField(NeuralField{net, Vec()}), net->dim(), n, spec, seed, eps);
}

// -------------------------------------------------------------------- train

struct TrainArgs {
  std::string config_file;
  std::string name;
  std::string runs_dir = "runs";
  std::string out_dir;
  std::vector<std::string> sets;
  std::string target, coupling, hidden, activation;
  double lipman = 0.0, wbeta = 0.0, lr = 0.0, eps = 0.0;
  std::uint64_t seed = 0;
  int epochs = 0, samples = 0, batch = 0, ot_batch = 0, time_pairs = 0;
  int n_samples = 512;
  int ode_steps = 100;
  CLI::Option* o_target = nullptr;
  CLI::Option* o_coupling = nullptr;
  CLI::Option* o_lipman = nullptr;
  CLI::Option* o_wbeta = nullptr;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_epochs = nullptr;
  CLI::Option* o_samples = nullptr;
  CLI::Option* o_batch = nullptr;
  CLI::Option* o_ot_batch = nullptr;
  CLI::Option* o_lr = nullptr;
  CLI::Option* o_eps = nullptr;
  CLI::Option* o_hidden = nullptr;
  CLI::Option* o_activation = nullptr;
  CLI::Option* o_time_pairs = nullptr;
};

void add_run_dir_options(CLI::App* sub, std::string& config_file, std::string& name, std::string& runs_dir,
                         std::string& out_dir, std::vector<std::string>& sets) {
  sub->add_option("--config", config_file, "key = value config file")->check(CLI::ExistingFile);
  sub->add_option("--name", name, "run name; outputs go to <runs-dir>/<name>");
  sub->add_option("--runs-dir", runs_dir, "parent directory of run folders")->capture_default_str();
  sub->add_option("--out-dir", out_dir, "explicit output directory (overrides --runs-dir/--name)");
  sub->add_option("--set", sets, "config override key=value (repeatable)");
}

void setup_train(CLI::App* sub, TrainArgs& a) {
  add_run_dir_options(sub, a.config_file, a.name, a.runs_dir, a.out_dir, a.sets);
  a.o_target = sub->add_option("--target", a.target, "gmm8 | moons | spirals | bayes5d | labels2");
  a.o_coupling = sub->add_option("--coupling", a.coupling,
                                 "independent | minibatch_ot | lipman | bayes_product | bayes_wbeta");
  a.o_lipman = sub->add_option("--lipman", a.lipman, "shorthand for --coupling lipman with r");
  a.o_wbeta = sub->add_option("--wbeta", a.wbeta, "shorthand for --coupling bayes_wbeta with beta");
  a.o_coupling->excludes(a.o_lipman)->excludes(a.o_wbeta);
  a.o_lipman->excludes(a.o_wbeta);
  a.o_seed = sub->add_option("--seed", a.seed, "master seed");
  a.o_epochs = sub->add_option("--epochs", a.epochs);
  a.o_samples = sub->add_option("--samples", a.samples, "target samples drawn per run");
  a.o_batch = sub->add_option("--batch", a.batch);
  a.o_ot_batch = sub->add_option("--ot-batch", a.ot_batch);
  a.o_lr = sub->add_option("--lr", a.lr);
  a.o_eps = sub->add_option("--eps", a.eps, "time clip");
  a.o_hidden = sub->add_option("--hidden", a.hidden, "hidden widths, e.g. 128,128,128");
  a.o_activation = sub->add_option("--activation", a.activation, "silu | tanh");
  a.o_time_pairs = sub->add_option("--time-pairs", a.time_pairs, "Fourier time pairs K");
  sub->add_option("--n-samples", a.n_samples, "rows of samples.csv (0 skips it)")->capture_default_str();
  sub->add_option("--ode-steps", a.ode_steps, "RK4 steps for samples.csv")->capture_default_str();
}

std::string resolve_run_dir(const std::string& out_dir, const std::string& runs_dir, const std::string& name) {
  if (!out_dir.empty()) return out_dir;
  return join_path(runs_dir, name);
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  KeyValueConfig kv = to_key_values(TrainConfig{});
  if (!a.config_file.empty()) kv.merge(KeyValueConfig::load(a.config_file));
  kv.merge(parse_overrides(a.sets));
  auto flag = [&](CLI::Option* o, const std::string& key, const std::string& value) {
    if (o->count() > 0) kv.set(key, value);
  };
  flag(a.o_target, "target", a.target);
  flag(a.o_coupling, "coupling", a.coupling);
  if (a.o_lipman->count() > 0) {
    kv.set("coupling", "lipman");
    kv.set("lipman_r", format_double(a.lipman));
  }
  if (a.o_wbeta->count() > 0) {
    kv.set("coupling", "bayes_wbeta");
    kv.set("beta", format_double(a.wbeta));
  }
  flag(a.o_seed, "seed", std::to_string(a.seed));
  flag(a.o_epochs, "epochs", std::to_string(a.epochs));
  flag(a.o_samples, "samples", std::to_string(a.samples));
  flag(a.o_batch, "batch", std::to_string(a.batch));
  flag(a.o_ot_batch, "ot_batch", std::to_string(a.ot_batch));
  flag(a.o_lr, "lr", format_double(a.lr));
  flag(a.o_eps, "eps", format_double(a.eps));
  flag(a.o_hidden, "hidden", a.hidden);
  flag(a.o_activation, "activation", a.activation);
  flag(a.o_time_pairs, "time_pairs", std::to_string(a.time_pairs));
  require(a.n_samples >= 0, "--n-samples must be nonnegative");
  require(a.ode_steps >= 1, "--ode-steps must be positive");

  const TrainConfig config = train_config_from(kv);
  const std::string name =
      a.name.empty() ? config.target + "-" + to_string(config.coupling) + "-seed" + std::to_string(config.seed) : a.name;
  const std::string dir = resolve_run_dir(a.out_dir, a.runs_dir, name);
  fs::create_directories(dir);
  save_text(join_path(dir, "config.resolved"), to_key_values(config).dump());

  const TrainResult result = train(config);
  save_checkpoint(join_path(dir, "model.bin"), result.net);
  emit(join_path(dir, "loss.csv"), out, [&](std::ostream& o) { write_loss_csv(o, result.report); });

  if (a.n_samples > 0) {
    SolverSpec spec;
    spec.steps = a.ode_steps;
    const Seed seed{config.seed};
    Points samples;
    std::vector<std::string> names;
    if (config.conditional()) {
      // Conditions are drawn from the training joint so the file shows the learned joint law.
      Rng rng(seed, "eval_y");
      const Points joint = conditional_sampler(config)(a.n_samples, rng);
      const Points w = joint.topRows(config.cond_dim());
      const Points x = sample_conditional(result.net, w, spec, seed, config.eps);
      samples.resize(w.rows() + x.rows(), w.cols());
      samples << w, x;
      names = coord_names("w_", w.rows());
      for (const auto& s : coord_names("x_", x.rows())) names.push_back(s);
    } else {
      auto net = std::make_shared<const Mlp>(result.net);
      samples = sample_flow(VelocityField(NeuralField{net, Vec()}), net->dim(), a.n_samples, spec, seed, config.eps);
    }
    emit(join_path(dir, "samples.csv"), out, [&](std::ostream& o) { write_points_csv(o, samples, names); });
  }
  out << "run " << dir << ": " << result.report.steps << " steps, final running loss "
      << format_double(result.report.running_mean.empty() ? 0.0 : result.report.running_mean.back()) << "\n";
  return 0;
}

// ------------------------------------------------------------------- sample

struct SampleArgs {
  std::string ckpt, out = "-", cond, method = "rk4", trajectory;
  int n = 512, steps = 100, index = 0;
  std::uint64_t seed = 0;
  double eps = kDefaultTimeClip;
};

void setup_sample(CLI::App* sub, SampleArgs& a) {
  sub->add_option("--ckpt", a.ckpt, "velocity checkpoint")->required()->check(CLI::ExistingFile);
  sub->add_option("--n", a.n, "number of samples")->capture_default_str();
  sub->add_option("--out", a.out, "output CSV ('-' for stdout)")->capture_default_str();
  sub->add_option("--seed", a.seed)->capture_default_str();
  sub->add_option("--steps", a.steps, "ODE steps")->capture_default_str();
  sub->add_option("--method", a.method, "rk4 | euler")->capture_default_str();
  sub->add_option("--eps", a.eps, "time clip")->capture_default_str();
  sub->add_option("--cond", a.cond, "condition w for conditional nets, comma-separated");
  sub->add_option("--trajectory", a.trajectory, "also write the path of sample --index as t,x_1..x_d");
  sub->add_option("--index", a.index, "sample whose trajectory is written")->capture_default_str();
}

int cmd_sample(const SampleArgs& a, std::ostream& out) {
  require(a.n >= 1, "--n must be positive");
  SolverSpec spec;
  spec.steps = a.steps;
  spec.method = parse_method(a.method);
  const auto net = load_net(a.ckpt);
  const Vec cond = a.cond.empty() ? Vec() : parse_vec(a.cond, "--cond");
  const Seed seed{a.seed};
  const Points x = sample_checkpoint(net, cond, a.n, spec, seed, a.eps);
  emit(a.out, out, [&](std::ostream& o) { write_points_csv(o, x); });
  if (!a.trajectory.empty()) {
    require(a.index >= 0 && a.index < a.n, "--index out of range");
    Rng rng(seed, "sample_flow");
    const Points z = rng.normal_matrix(net->dim(), a.n);
    const VelocityField field(NeuralField{net, cond});
    const Trajectory traj = integrate(field, z.col(a.index), a.eps, 1.0 - a.eps, spec);
    emit(a.trajectory, out, [&](std::ostream& o) { write_trajectory_csv(o, traj); });
  }
  return 0;
}

// --------------------------------------------------------------- likelihood

struct LikelihoodArgs {
  std::string ckpt, data, out = "-", cond, method = "rk4", trajectory;
  int steps = 200, index = 0;
};

void setup_likelihood(CLI::App* sub, LikelihoodArgs& a) {
  sub->add_option("--ckpt", a.ckpt, "velocity checkpoint (latent at t=0, data at t=1)")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--data", a.data, "points CSV")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", a.out, "per-point log densities ('-' for stdout)")->capture_default_str();
  sub->add_option("--steps", a.steps, "ODE steps")->capture_default_str();
  sub->add_option("--method", a.method, "rk4 | euler")->capture_default_str();
  sub->add_option("--cond", a.cond, "condition w for conditional nets");
  sub->add_option("--trajectory", a.trajectory, "write t,x_1..x_d,l for data row --index");
  sub->add_option("--index", a.index)->capture_default_str();
}

int cmd_likelihood(const LikelihoodArgs& a, std::ostream& out, std::ostream& err) {
  SolverSpec spec;
  spec.steps = a.steps;
  spec.method = parse_method(a.method);
  const auto net = load_net(a.ckpt);
  require(net->arch().role != NetRole::score, "likelihood needs a velocity checkpoint");
  const Vec cond = a.cond.empty() ? Vec() : parse_vec(a.cond, "--cond");
  require(cond.size() == net->cond_dim(), "--cond must have " + std::to_string(net->cond_dim()) + " entries");
  const Points data = load_points(a.data);
  require(data.rows() == net->dim(), "data dimension does not match the checkpoint");
  const VelocityField cnf =
      convert_convention(VelocityField(NeuralField{net, cond}), TimeConvention::fm, TimeConvention::cnf);
  const double log2pi = std::log(2.0 * M_PI);
  Vec logp(data.cols());
  for (Eigen::Index j = 0; j < data.cols(); ++j) {
    Trajectory traj;
    const bool keep = !a.trajectory.empty() && j == a.index;
    const LogDensityResult r = logdensity_flow(cnf, data.col(j), 0.0, 1.0, spec, keep ? &traj : nullptr);
    const double latent = -0.5 * (static_cast<double>(r.endpoint.size()) * log2pi + r.endpoint.squaredNorm());
    logp[j] = latent - r.l;
    if (keep) emit(a.trajectory, out, [&](std::ostream& o) { write_trajectory_csv(o, traj); });
  }
  emit(a.out, out, [&](std::ostream& o) {
    o << "index,log_density\n";
    for (Eigen::Index j = 0; j < logp.size(); ++j) o << j << "," << format_double(logp[j]) << "\n";
  });
  err << "mean nll " << format_double(-logp.mean()) << " over " << logp.size() << " points\n";
  return 0;
}

// --------------------------------------------------------------------- eval

struct EvalOtArgs {
  std::string instance = "counterexample", mu, nu, betas = "1,10,100,1000,1000000", out = "-";
  int n = 3, cond_dim = 1;
};

void setup_eval_ot(CLI::App* sub, EvalOtArgs& a) {
  sub->add_option("--instance", a.instance, "counterexample (built in) or files (with --mu/--nu)")
      ->capture_default_str();
  sub->add_option("--n", a.n, "counterexample size")->capture_default_str();
  sub->add_option("--mu", a.mu, "discrete measure CSV")->check(CLI::ExistingFile);
  sub->add_option("--nu", a.nu, "discrete measure CSV")->check(CLI::ExistingFile);
  sub->add_option("--cond-dim", a.cond_dim, "size m of the condition block")->capture_default_str();
  sub->add_option("--betas", a.betas, "comma-separated beta values")->capture_default_str();
  sub->add_option("--out", a.out)->capture_default_str();
}

/// eta = (d_0 + d_1)/2, mu_n = (d_(0,n) + d_(1,0))/2, nu_n = (d_(0,0) + d_(1,n))/2.
std::pair<DiscreteMeasure, DiscreteMeasure> counterexample(double n) {
  Points mu(2, 2), nu(2, 2);
  mu << 0.0, 1.0, n, 0.0;
  nu << 0.0, 1.0, 0.0, n;
  const Vec w = Vec::Constant(2, 0.5);
  return {DiscreteMeasure(mu, w), DiscreteMeasure(nu, w)};
}

int cmd_eval_ot(const EvalOtArgs& a, std::ostream& out) {
  std::string label;
  DiscreteMeasure mu = DiscreteMeasure::dirac(Vec::Zero(1));
  DiscreteMeasure nu = mu;
  if (!a.mu.empty() || !a.nu.empty()) {
    require(!a.mu.empty() && !a.nu.empty(), "eval ot: pass both --mu and --nu");
    mu = load_discrete(a.mu);
    nu = load_discrete(a.nu);
    label = "files";
  } else {
    require(a.instance == "counterexample", "eval ot: unknown instance '" + a.instance + "'");
    require(a.n >= 1, "eval ot: --n must be positive");
    std::tie(mu, nu) = counterexample(a.n);
    label = "counterexample-" + std::to_string(a.n);
  }
  require(a.cond_dim >= 0 && a.cond_dim <= mu.dim(), "eval ot: --cond-dim out of range");
  const Vec betas = parse_vec(a.betas, "--betas");
  emit(a.out, out, [&](std::ostream& o) {
    o << "instance,beta,cost,w_mass\n";
    for (Eigen::Index i = 0; i < betas.size(); ++i) {
      const WBetaResult r = w_beta(mu, nu, a.cond_dim, betas[i]);
      o << label << "," << format_double(betas[i]) << "," << format_double(r.cost) << ","
        << format_double(r.w_mass) << "\n";
    }
    if (a.cond_dim > 0) {
      // beta = inf row: the conditional distance, when both first marginals agree.
      Points w = mu.points().topRows(a.cond_dim);
      const DiscreteMeasure eta = DiscreteMeasure(w, mu.weights()).merged();
      try {
        const double c = cond_w2(mu, nu, eta);
        o << label << ",inf," << format_double(c * c) << ",0\n";
      } catch (const ValidationError&) {
        // Marginals differ: W_{2,eta} is infinite; no row.
      }
    }
  });
  return 0;
}

struct EvalFieldArgs {
  std::string field = "gaussian_latent", target = "gmm8", ckpt, times = "0.1,0.5,0.9", out = "-";
  double r = 0.99, lo = -4.0, hi = 4.0, h = 1e-4;
  int nx = 41;
};

void setup_eval_field(CLI::App* sub, EvalFieldArgs& a) {
  sub->add_option("--field", a.field, "gaussian_latent | lipman | checkpoint")->capture_default_str();
  sub->add_option("--target", a.target, "gmm8 or a discrete measure CSV")->capture_default_str();
  sub->add_option("--ckpt", a.ckpt, "velocity checkpoint for --field checkpoint");
  sub->add_option("--r", a.r, "Lipman kernel parameter")->capture_default_str();
  sub->add_option("--times", a.times, "comma-separated t values")->capture_default_str();
  sub->add_option("--lo", a.lo, "grid lower bound per coordinate")->capture_default_str();
  sub->add_option("--hi", a.hi, "grid upper bound per coordinate")->capture_default_str();
  sub->add_option("--nx", a.nx, "grid points per coordinate")->capture_default_str();
  sub->add_option("--fd-step", a.h, "finite-difference step of the continuity residual")->capture_default_str();
  sub->add_option("--out", a.out)->capture_default_str();
}

int cmd_eval_field(const EvalFieldArgs& a, std::ostream& out) {
  require(a.nx >= 2 && a.hi > a.lo, "eval field: need --nx >= 2 and --hi > --lo");
  std::optional<VelocityField> field;
  DensityFn density;
  Eigen::Index d = 0;
  if (a.field == "checkpoint") {
    require(!a.ckpt.empty(), "eval field: --field checkpoint needs --ckpt");
    auto net = load_net(a.ckpt);
    require(net->cond_dim() == 0 && net->arch().role == NetRole::velocity,
            "eval field: checkpoint must hold an unconditional velocity net");
    d = net->dim();
    field.emplace(NeuralField{net, Vec()});
  } else {
    std::optional<LatentTarget> target;
    if (a.target == "gmm8") target.emplace(gmm8());
    else target.emplace(load_discrete(a.target));
    d = std::visit([](const auto& m) { return m.dim(); }, *target);
    if (a.field == "gaussian_latent") {
      field.emplace(GaussianLatentField{*target});
      density = [target](double t, const Vec& x) { return gaussian_latent_density(*target, t, x).density; };
    } else if (a.field == "lipman") {
      const auto* disc = std::get_if<DiscreteMeasure>(&*target);
      require(disc != nullptr, "eval field: lipman needs a discrete target CSV");
      field.emplace(LipmanField{a.r, *disc});
      const DiscreteMeasure m = *disc;
      const double r = a.r;
      density = [m, r](double t, const Vec& x) { return lipman_marginal_density(m, r, t, x).density; };
    } else {
      throw ValidationError("eval field: unknown field '" + a.field + "'");
    }
  }
  require(d == 1 || d == 2, "eval field: grids are written for d = 1 or 2 only");
  const Vec times = parse_vec(a.times, "--times");
  const Vec axis = Vec::LinSpaced(a.nx, a.lo, a.hi);
  emit(a.out, out, [&](std::ostream& o) {
    o << "t";
    for (const auto& s : coord_names("x_", d)) o << "," << s;
    for (const auto& s : coord_names("v_", d)) o << "," << s;
    o << ",p,residual\n";
    const Eigen::Index rows = d == 1 ? 1 : a.nx;
    for (Eigen::Index k = 0; k < times.size(); ++k) {
      const double t = times[k];
      for (Eigen::Index iy = 0; iy < rows; ++iy) {
        for (Eigen::Index ix = 0; ix < a.nx; ++ix) {
          Vec x(d);
          x[0] = axis[ix];
          if (d == 2) x[1] = axis[iy];
          const Vec v = field->eval(t, x);
          o << format_double(t);
          for (Eigen::Index i = 0; i < d; ++i) o << "," << format_double(x[i]);
          for (Eigen::Index i = 0; i < d; ++i) o << "," << format_double(v[i]);
          if (density) {
            o << "," << format_double(density(t, x)) << ","
              << format_double(continuity_residual(*field, density, t, x, a.h)) << "\n";
          } else {
            o << ",nan,nan\n";
          }
        }
      }
    }
  });
  return 0;
}

// -------------------------------------------------------------------- bayes

struct BayesArgs {
  std::string out = "-", y, ckpt, hist;
  int n = 1000, y_id = -1, steps = 100, bins = 40;
  std::uint64_t seed = 0, prior_seed = kDefaultPriorSeed;
  bool no_pairwise = false;
};

void setup_bayes(CLI::App* sub, BayesArgs& a) {
  auto* sim = sub->add_subcommand("simulate", "draw (y, x) pairs from the inverse problem");
  auto* post = sub->add_subcommand("posterior", "sample the analytic posterior for one observation");
  auto* ev = sub->add_subcommand("eval", "compare a conditional checkpoint against analytic posteriors");
  for (auto* s : {sim, post, ev}) {
    s->add_option("--seed", a.seed)->capture_default_str();
    s->add_option("--prior-seed", a.prior_seed, "seed of the prior means")->capture_default_str();
    s->add_option("--out", a.out)->capture_default_str();
  }
  sim->add_option("--n", a.n)->capture_default_str();
  post->add_option("--n", a.n)->capture_default_str();
  auto* oy = post->add_option("--y", a.y, "observation, comma-separated");
  auto* oid = post->add_option("--y-id", a.y_id, "index into the held-out evaluation observations");
  oy->excludes(oid);
  ev->add_option("--ckpt", a.ckpt, "conditional velocity checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--n", a.n, "samples per observation")->capture_default_str();
  ev->add_option("--steps", a.steps, "ODE steps")->capture_default_str();
  ev->add_flag("--no-pairwise", a.no_pairwise, "skip the 2-D pairwise W2 rows");
  ev->add_option("--hist", a.hist, "histogram CSV for all observations");
  ev->add_option("--bins", a.bins)->capture_default_str();
  sub->require_subcommand(1);
}

int cmd_bayes(CLI::App* sub, const BayesArgs& a, std::ostream& out, std::ostream& err) {
  const LinearInverseProblem problem = default_inverse_problem(a.prior_seed);
  const Seed seed{a.seed};
  require(a.n >= 1, "--n must be positive");
  if (sub->got_subcommand("simulate")) {
    const Observations o = simulate(problem, a.n, seed);
    Points joint(o.y.rows() + o.x.rows(), o.y.cols());
    joint << o.y, o.x;
    auto names = coord_names("y_", o.y.rows());
    for (const auto& s : coord_names("x_", o.x.rows())) names.push_back(s);
    emit(a.out, out, [&](std::ostream& s) { write_points_csv(s, joint, names); });
    return 0;
  }
  if (sub->got_subcommand("posterior")) {
    Vec y;
    if (!a.y.empty()) {
      y = parse_vec(a.y, "--y");
    } else {
      require(a.y_id >= 0, "bayes posterior: pass --y or --y-id");
      const Points ys = evaluation_observations(problem, seed);
      require(a.y_id < ys.cols(), "--y-id out of range");
      y = ys.col(a.y_id);
    }
    require(y.size() == problem.m(), "observation must have " + std::to_string(problem.m()) + " entries");
    const Points x = sample(Measure(analytic_posterior(problem, y)), a.n, seed);
    emit(a.out, out, [&](std::ostream& s) { write_points_csv(s, x); });
    return 0;
  }
  const auto net = load_net(a.ckpt);
  require(net->cond_dim() == problem.m() && net->dim() == problem.d(),
          "bayes eval: checkpoint dimensions do not match the inverse problem");
  SolverSpec spec;
  spec.steps = a.steps;
  PosteriorSampler sampler = [&](const Vec& y, Eigen::Index n, Seed s) {
    return sample_conditional(*net, replicate(y, n), spec, s);
  };
  const Points ys = evaluation_observations(problem, seed);
  const PosteriorFitReport report = eval_posterior_fit(sampler, problem, ys, a.n, seed, !a.no_pairwise);
  emit(a.out, out, [&](std::ostream& s) { write_report_csv(s, report); });
  if (!a.hist.empty()) {
    emit(a.hist, out, [&](std::ostream& s) {
      for (Eigen::Index k = 0; k < ys.cols(); ++k) {
        Rng rng(seed, "bayes_hist");
        const Points flow = sampler(ys.col(k), a.n, Seed{seed.value + static_cast<std::uint64_t>(k)});
        const Points oracle = sample(Measure(analytic_posterior(problem, ys.col(k))), a.n, rng);
        std::ostringstream block;
        write_histograms_csv(block, static_cast<int>(k), flow, oracle, a.bins);
        std::string text = block.str();
        if (k > 0) text.erase(0, text.find('\n') + 1);
        s << text;
      }
    });
  }
  err << report.passing(3.0) << " of " << ys.cols() << " observations within 3x the resampling floor\n";
  return 0;
}

// ---------------------------------------------------------------- diffusion

struct DiffusionArgs {
  std::string config_file, name, runs_dir = "runs", out_dir;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  int train_steps = 0;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_steps = nullptr;
  int n_samples = 512;
  // sample
  std::string ckpt, sample_config, sampler = "sde", out = "-";
  bool analytic = false;
  int n = 512, steps = 1000;
  std::uint64_t sample_seed = 0;
};

void setup_diffusion(CLI::App* sub, DiffusionArgs& a) {
  auto* tr = sub->add_subcommand("train", "denoising score matching on the 1-D two-mode toy prior");
  add_run_dir_options(tr, a.config_file, a.name, a.runs_dir, a.out_dir, a.sets);
  a.o_seed = tr->add_option("--seed", a.seed);
  a.o_steps = tr->add_option("--steps", a.train_steps, "optimizer steps");
  tr->add_option("--n-samples", a.n_samples, "rows of samples.csv (0 skips it)")->capture_default_str();
  auto* sa = sub->add_subcommand("sample", "reverse-SDE or probability-flow samples");
  auto* oc = sa->add_option("--ckpt", a.ckpt, "score checkpoint")->check(CLI::ExistingFile);
  auto* oa = sa->add_flag("--analytic", a.analytic, "use the exact score of the toy prior");
  oc->excludes(oa);
  sa->add_option("--config", a.sample_config, "config.resolved of the training run (schedule, scaling)")
      ->check(CLI::ExistingFile);
  sa->add_option("--sampler", a.sampler, "sde | ode")->capture_default_str();
  sa->add_option("--n", a.n)->capture_default_str();
  sa->add_option("--steps", a.steps, "time steps")->capture_default_str();
  sa->add_option("--seed", a.sample_seed)->capture_default_str();
  sa->add_option("--out", a.out)->capture_default_str();
  sub->require_subcommand(1);
}

int cmd_diffusion(CLI::App* sub, const DiffusionArgs& a, std::ostream& out) {
  if (sub->got_subcommand("train")) {
    KeyValueConfig kv = to_key_values(DiffusionConfig{});
    if (!a.config_file.empty()) kv.merge(KeyValueConfig::load(a.config_file));
    kv.merge(parse_overrides(a.sets));
    if (a.o_seed->count() > 0) kv.set("seed", std::to_string(a.seed));
    if (a.o_steps->count() > 0) kv.set("steps", std::to_string(a.train_steps));
    const DiffusionConfig config = diffusion_config_from(kv);
    const std::string name = a.name.empty() ? "diffusion-seed" + std::to_string(config.seed) : a.name;
    const std::string dir = resolve_run_dir(a.out_dir, a.runs_dir, name);
    fs::create_directories(dir);
    save_text(join_path(dir, "config.resolved"), to_key_values(config).dump());
    const TrainResult result = train_score(config);
    save_checkpoint(join_path(dir, "model.bin"), result.net);
    emit(join_path(dir, "loss.csv"), out, [&](std::ostream& o) { write_loss_csv(o, result.report); });
    if (a.n_samples > 0) {
      const ScoreSource src = NeuralScore{std::make_shared<const Mlp>(result.net), config.scaled};
      const Points x = reverse_sde_sample(src, config.schedule, 1, a.n_samples, 1000, Seed{config.seed}, config.t_min);
      emit(join_path(dir, "samples.csv"), out, [&](std::ostream& o) { write_points_csv(o, x); });
    }
    out << "run " << dir << ": " << result.report.steps << " steps, final running loss "
        << format_double(result.report.running_mean.empty() ? 0.0 : result.report.running_mean.back()) << "\n";
    return 0;
  }
  DiffusionConfig config;
  if (!a.sample_config.empty()) config = diffusion_config_from(KeyValueConfig::load(a.sample_config));
  std::optional<ScoreSource> src;
  if (a.analytic) {
    src.emplace(AnalyticGmmScore{config.prior});
  } else {
    require(!a.ckpt.empty(), "diffusion sample: pass --ckpt or --analytic");
    auto net = load_net(a.ckpt);
    require(net->arch().role == NetRole::score && net->dim() == 1, "diffusion sample: expected a 1-D score checkpoint");
    src.emplace(NeuralScore{net, config.scaled});
  }
  require(a.n >= 1 && a.steps >= 1, "diffusion sample: --n and --steps must be positive");
  Points x;
  if (a.sampler == "sde") {
    x = reverse_sde_sample(*src, config.schedule, 1, a.n, a.steps, Seed{a.sample_seed}, config.t_min);
  } else if (a.sampler == "ode") {
    SolverSpec spec;
    spec.steps = a.steps;
    x = prob_flow_sample(*src, config.schedule, 1, a.n, spec, Seed{a.sample_seed}, config.t_min);
  } else {
    throw ValidationError("diffusion sample: unknown sampler '" + a.sampler + "' (expected sde or ode)");
  }
  emit(a.out, out, [&](std::ostream& o) { write_points_csv(o, x); });
  return 0;
}

}  // namespace

// ----------------------------------------------------------------- selftest

int selftest(bool quick, std::ostream& out) {
  int failures = 0;
  auto check = [&](const std::string& name, const std::function<bool()>& fn) {
    bool ok = false;
    std::string why;
    try {
      ok = fn();
    } catch (const std::exception& e) {
      why = std::string(" (") + e.what() + ")";
    }
    out << (ok ? "PASS " : "FAIL ") << name << why << "\n";
    if (!ok) ++failures;
  };

  check("rng streams are reproducible", [] {
    Rng a(Seed{7}, "x"), b(Seed{7}, "x"), c(Seed{7}, "y");
    const double u = a.normal();
    return u == b.normal() && u != c.normal();
  });
  check("assignment of a permuted copy is the permutation", [] {
    Rng rng(Seed{1}, "selftest");
    const Points x = rng.normal_matrix(2, 12);
    const std::vector<int> p = rng.permutation(12);
    Points y(2, 12);
    for (int i = 0; i < 12; ++i) y.col(p[static_cast<std::size_t>(i)]) = x.col(i);
    const Assignment a = solve_assignment(x, y);
    return a.perm == p && a.cost == 0.0;
  });
  check("transportation simplex matches assignment on uniform weights", [] {
    Rng rng(Seed{2}, "selftest");
    const Points x = rng.normal_matrix(2, 9), y = rng.normal_matrix(2, 9);
    const double a = solve_assignment(x, y).cost;
    const double b = solve_discrete_ot(DiscreteMeasure::uniform(x), DiscreteMeasure::uniform(y)).cost;
    return std::abs(a - b) < 1e-12;
  });
  check("velocity towards a point mass is x/(t-1)", [] {
    const LatentTarget dirac = DiscreteMeasure::dirac(Vec::Zero(1));
    for (double t : {0.1, 0.5, 0.9}) {
      Vec x(1);
      x << 1.7;
      if (std::abs(gaussian_latent_velocity(dirac, t, x)[0] - x[0] / (t - 1.0)) > 1e-12) return false;
    }
    return true;
  });
  check("counterexample distances", [] {
    const auto [mu, nu] = counterexample(3.0);
    Points w(1, 2);
    w << 0.0, 1.0;
    const double plain = w2(mu, nu);
    const double cond = cond_w2(mu, nu, DiscreteMeasure::uniform(w));
    return std::abs(plain - 1.0) < 1e-12 && std::abs(cond - 3.0) < 1e-12;
  });
  check("checkpoint round trip is bitwise", [] {
    MlpArch arch;
    arch.hidden = {8, 8};
    arch.time_pairs = 2;
    Rng rng(Seed{3}, "init");
    const Mlp net = Mlp::init(arch, rng, false);
    std::stringstream s;
    save_checkpoint(s, net);
    const Mlp back = load_checkpoint(s);
    Vec x(2);
    x << 0.3, -0.4;
    return back.params() == net.params() && back.forward(0.4, x) == net.forward(0.4, x);
  });
  check("config dump parses back to itself", [] {
    const KeyValueConfig kv = to_key_values(TrainConfig{});
    return KeyValueConfig::parse(kv.dump()).dump() == kv.dump();
  });
  if (!quick) {
    check("exact divergence matches finite differences", [] {
      MlpArch arch;
      arch.hidden = {16, 16};
      arch.time_pairs = 2;
      Rng rng(Seed{4}, "init");
      const Mlp net = Mlp::init(arch, rng, false);
      Vec x(2);
      x << 0.2, 0.7;
      const double h = 1e-5;
      double fd = 0.0;
      for (int i = 0; i < 2; ++i) {
        Vec xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        fd += (net.forward(0.3, xp)[i] - net.forward(0.3, xm)[i]) / (2 * h);
      }
      return std::abs(fd - net.divergence(0.3, x)) < 1e-7;
    });
    check("RK4 follows the point-mass field", [] {
      const VelocityField f(GaussianLatentField{DiscreteMeasure::dirac(Vec::Zero(1))});
      Vec x0(1);
      x0 << 1.3;
      SolverSpec spec;
      const Trajectory tr = integrate(f, x0, 0.0, 0.9, spec);
      return std::abs(tr.states.back()[0] - 0.1 * 1.3) < 1e-6;
    });
  }
  out << (failures == 0 ? "selftest passed\n" : "selftest failed\n");
  return failures;
}

// ---------------------------------------------------------------------- run

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"flowlab: flow matching, optimal transport and diffusion toolkit"};
  app.name("flowlab");
  app.require_subcommand(1);

  TrainArgs train_args;
  setup_train(app.add_subcommand("train", "train a velocity network"), train_args);
  SampleArgs sample_args;
  setup_sample(app.add_subcommand("sample", "sample from a velocity checkpoint"), sample_args);
  LikelihoodArgs lik_args;
  setup_likelihood(app.add_subcommand("likelihood", "log densities through the flow"), lik_args);

  auto* eval = app.add_subcommand("eval", "evaluation tables");
  eval->require_subcommand(1);
  EvalOtArgs ot_args;
  setup_eval_ot(eval->add_subcommand("ot", "W_beta cost table"), ot_args);
  EvalFieldArgs field_args;
  setup_eval_field(eval->add_subcommand("field", "velocity, density and residual grids"), field_args);
  EvalOtArgs ot_args2;
  auto* eval_ot_alias = app.add_subcommand("eval-ot", "same as `eval ot`");
  setup_eval_ot(eval_ot_alias, ot_args2);
  EvalFieldArgs field_args2;
  auto* eval_field_alias = app.add_subcommand("eval-field", "same as `eval field`");
  setup_eval_field(eval_field_alias, field_args2);

  BayesArgs bayes_args;
  auto* bayes = app.add_subcommand("bayes", "linear Gaussian-mixture inverse problem");
  setup_bayes(bayes, bayes_args);
  DiffusionArgs diff_args;
  auto* diffusion = app.add_subcommand("diffusion", "VP diffusion toy");
  setup_diffusion(diffusion, diff_args);
  bool quick = false;
  auto* self = app.add_subcommand("selftest", "invariant checks");
  self->add_flag("--quick", quick, "fast subset");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand("train")) return cmd_train(train_args, out);
    if (app.got_subcommand("sample")) return cmd_sample(sample_args, out);
    if (app.got_subcommand("likelihood")) return cmd_likelihood(lik_args, out, err);
    if (eval->parsed()) {
      if (eval->got_subcommand("ot")) return cmd_eval_ot(ot_args, out);
      return cmd_eval_field(field_args, out);
    }
    if (eval_ot_alias->parsed()) return cmd_eval_ot(ot_args2, out);
    if (eval_field_alias->parsed()) return cmd_eval_field(field_args2, out);
    if (bayes->parsed()) return cmd_bayes(bayes, bayes_args, out, err);
    if (diffusion->parsed()) return cmd_diffusion(diffusion, diff_args, out);
    if (self->parsed()) return selftest(quick, out) == 0 ? 0 : 2;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace flowlab::cli
