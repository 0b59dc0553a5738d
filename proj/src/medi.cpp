#include "qsmlab/medi.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

namespace qsmlab {
using nlohmann::json;

void MediConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be >= 0");
  if (!(tv_epsilon > 0.0)) throw ConfigError("tv_epsilon must be > 0");
  if (max_outer < 1 || max_cg < 1) throw ConfigError("iteration counts must be >= 1");
  if (!(cg_tol > 0.0) || !(outer_tol >= 0.0)) throw ConfigError("tolerances must be positive");
  if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw ConfigError("armijo_c must lie in (0, 1)");
  if (!(backtrack > 0.0 && backtrack < 1.0)) throw ConfigError("backtrack must lie in (0, 1)");
  if (edge_weight && edge_weight->role() != MaskRole::EdgeWeight &&
      edge_weight->role() != MaskRole::Tissue) {
    throw ConfigError("edge weight mask must carry the edge-weight role");
  }
}

double tv_energy(const Volume3D& chi, const Mask& M, double lambda) {
  require_same_grid(chi, M.values(), "tv_energy");
  if (lambda == 0.0) return 0.0;
  const Gradient3D g = grad(chi);
  double acc = 0.0;
  for (int a = 0; a < 3; ++a)
    for (std::size_t i = 0; i < chi.size(); ++i) acc += M[i] * std::abs(g[a][i]);
  return lambda * acc;
}

double smoothed_tv(const Volume3D& chi, const Volume3D& M, double eps) {
  require_same_grid(chi, M, "smoothed_tv");
  const Gradient3D g = grad(chi);
  const double e2 = eps * eps;
  double acc = 0.0;
  for (int a = 0; a < 3; ++a)
    for (std::size_t i = 0; i < chi.size(); ++i) acc += M[i] * std::sqrt(g[a][i] * g[a][i] + e2);
  return acc;
}

MediProblem::MediProblem(Volume3D b, Volume3D W, DipoleKernel kernel, MediConfig config)
    : b_(std::move(b)), W_(std::move(W)), kernel_(std::move(kernel)), config_(std::move(config)) {
  config_.validate();
  require_same_grid(b_, W_, "medi: field vs weight");
  require_same_grid(b_, kernel_.D, "medi: field vs kernel");
  if (!b_.all_finite()) throw NumericalError("medi: field contains non-finite values");
  for (double w : W_.data()) {
    if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("medi: weights must be positive");
  }
  W2_ = hadamard(W_, W_);
  if (config_.edge_weight) {
    require_same_grid(b_, config_.edge_weight->values(), "medi: field vs edge weight");
    M_ = config_.edge_weight->values();
  } else {
    M_ = Volume3D(b_.dims(), b_.voxel_size(), 1.0);
  }
}

MediTerms MediProblem::evaluate(const Volume3D& chi) const {
  require_same_grid(chi, b_, "medi objective");
  const Volume3D r = forward_field(chi, kernel_) - b_;
  MediTerms t;
  for (std::size_t i = 0; i < r.size(); ++i) t.fidelity += W2_[i] * r[i] * r[i];
  t.tv = config_.lambda == 0.0 ? 0.0 : config_.lambda * smoothed_tv(chi, M_, config_.tv_epsilon);
  return t;
}

Volume3D MediProblem::gradient(const Volume3D& chi) const {
  Volume3D r = forward_field(chi, kernel_) - b_;
  for (std::size_t i = 0; i < r.size(); ++i) r[i] *= 2.0 * W2_[i];
  Volume3D g = forward_field(r, kernel_);  // A is self-adjoint
  if (config_.lambda == 0.0) return g;
  Gradient3D dg = grad(chi);
  const double e2 = config_.tv_epsilon * config_.tv_epsilon;
  for (int a = 0; a < 3; ++a)
    for (std::size_t i = 0; i < chi.size(); ++i)
      dg[a][i] = M_[i] * dg[a][i] / std::sqrt(dg[a][i] * dg[a][i] + e2);
  const Volume3D d = div(dg);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] -= config_.lambda * d[i];
  return g;
}

MediProblem::NormalOperator MediProblem::linearize(const Volume3D& chi) const {
  NormalOperator op;
  op.problem_ = this;
  op.diffusivity_ = grad(chi);
  const double e2 = config_.tv_epsilon * config_.tv_epsilon;
  for (int a = 0; a < 3; ++a)
    for (std::size_t i = 0; i < chi.size(); ++i) {
      const double g = op.diffusivity_[a][i];
      op.diffusivity_[a][i] = M_[i] / std::sqrt(g * g + e2);
    }
  return op;
}

Volume3D MediProblem::NormalOperator::apply(const Volume3D& v) const {
  const MediProblem& p = *problem_;
  Volume3D Av = forward_field(v, p.kernel_);
  for (std::size_t i = 0; i < Av.size(); ++i) Av[i] *= 2.0 * p.W2_[i];
  Volume3D out = forward_field(Av, p.kernel_);
  if (p.config_.lambda == 0.0) return out;
  Gradient3D g = grad(v);
  for (int a = 0; a < 3; ++a)
    for (std::size_t i = 0; i < v.size(); ++i) g[a][i] *= diffusivity_[a][i];
  const Volume3D d = div(g);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= p.config_.lambda * d[i];
  return out;
}

namespace {

void remove_mean(Volume3D& v) {
  const double m = sum(v) / static_cast<double>(v.size());
  for (double& x : v.data()) x -= m;
}

}  // namespace

MediResult medi_solve(const Volume3D& b, const Volume3D& W, const DipoleKernel& kernel,
                      const MediConfig& config, const std::optional<Volume3D>& init) {
  const MediProblem problem(b, W, kernel, config);
  MediResult res;
  res.chi = init ? *init : Volume3D(b.dims(), b.voxel_size());
  require_same_grid(res.chi, b, "medi init");

  auto checked = [](const MediTerms& t) {
    if (!std::isfinite(t.total())) throw NumericalError("medi: non-finite objective");
    return t;
  };
  MediTerms current = checked(problem.evaluate(res.chi));
  res.trace.push_back({0, current.total(), current.fidelity, current.tv, 0.0, 0});

  for (int it = 1; it <= config.max_outer; ++it) {
    const Volume3D g = problem.gradient(res.chi);
    if (norm2(g) == 0.0) {
      res.converged = true;
      break;
    }
    // Constants are an exact null direction of both terms (D(0) = 0, TV is
    // shift invariant). CG runs on the zero-mean subspace so rounding cannot
    // grow an arbitrary offset.
    const auto op = problem.linearize(res.chi);
    Volume3D neg_g = g;
    neg_g *= -1.0;
    remove_mean(neg_g);
    CgResult cg = conjugate_gradient(
        [&](const Volume3D& v) {
          Volume3D out = op.apply(v);
          remove_mean(out);
          return out;
        },
        neg_g, config.max_cg, config.cg_tol);
    Volume3D direction = std::move(cg.x);
    if (cg.breakdown) res.cg_breakdown = true;
    double slope = dot(g, direction);
    if (!(slope < 0.0)) {
      // Not a descent direction (breakdown); fall back to steepest descent.
      res.cg_breakdown = true;
      direction = neg_g;
      slope = dot(g, direction);
    }
    double step = 1.0;
    bool accepted = false;
    Volume3D candidate;
    MediTerms trial;
    for (int k = 0; k <= config.max_backtracks; ++k) {
      candidate = res.chi;
      for (std::size_t i = 0; i < candidate.size(); ++i) candidate[i] += step * direction[i];
      trial = checked(problem.evaluate(candidate));
      if (trial.total() <= current.total() + config.armijo_c * step * slope) {
        accepted = true;
        break;
      }
      step *= config.backtrack;
    }
    if (!accepted) {
      res.converged = true;  // no further decrease available at this precision
      break;
    }
    const double update = step * norm2(direction);
    const double scale = norm2(candidate);
    res.chi = std::move(candidate);
    current = trial;
    res.trace.push_back({it, current.total(), current.fidelity, current.tv, step, cg.iterations});
    if (update <= config.outer_tol * std::max(scale, 1e-300)) {
      res.converged = true;
      break;
    }
  }
  return res;
}

void to_json(json& j, const MediConfig& c) {
  j = json{{"lambda", c.lambda},         {"tv_epsilon", c.tv_epsilon}, {"max_outer", c.max_outer},
           {"max_cg", c.max_cg},         {"cg_tol", c.cg_tol},         {"outer_tol", c.outer_tol},
           {"armijo_c", c.armijo_c},     {"backtrack", c.backtrack},
           {"max_backtracks", c.max_backtracks}};
}

void from_json(const json& j, MediConfig& c) {
  c.lambda = j.value("lambda", c.lambda);
  c.tv_epsilon = j.value("tv_epsilon", c.tv_epsilon);
  c.max_outer = j.value("max_outer", c.max_outer);
  c.max_cg = j.value("max_cg", c.max_cg);
  c.cg_tol = j.value("cg_tol", c.cg_tol);
  c.outer_tol = j.value("outer_tol", c.outer_tol);
  c.armijo_c = j.value("armijo_c", c.armijo_c);
  c.backtrack = j.value("backtrack", c.backtrack);
  c.max_backtracks = j.value("max_backtracks", c.max_backtracks);
  c.validate();
}

}  // namespace qsmlab
