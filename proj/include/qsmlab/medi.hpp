#pragma once

#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <vector>

#include "qsmlab/dipole.hpp"
#include "qsmlab/volume.hpp"

namespace qsmlab {

/// Settings of the weighted-TV MAP reconstruction.
struct MediConfig {
  double lambda = 1e-3;
  std::optional<Mask> edge_weight;  // all ones when absent
  double tv_epsilon = 1e-6;         // ppm
  int max_outer = 10;
  int max_cg = 50;
  double cg_tol = 1e-2;
  double outer_tol = 1e-2;
  double armijo_c = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 40;

  void validate() const;
};

// lambda * sum_axes sum_voxels M |grad chi|, exact absolute value.
double tv_energy(const Volume3D& chi, const Mask& M, double lambda);

// sum_axes sum_voxels M sqrt(g^2 + eps^2), without lambda.
double smoothed_tv(const Volume3D& chi, const Volume3D& M, double eps);

struct MediTerms {
  double fidelity = 0.0;  // ||W (A chi - b)||^2
  double tv = 0.0;        // lambda * smoothed TV
  double total() const { return fidelity + tv; }
};

/// Fixed data of one reconstruction problem: field, weights, kernel, prior.
class MediProblem {
 public:
  MediProblem(Volume3D b, Volume3D W, DipoleKernel kernel, MediConfig config);

  const Volume3D& field() const { return b_; }
  const Volume3D& weight() const { return W_; }
  const Volume3D& edge_weight() const { return M_; }
  const DipoleKernel& kernel() const { return kernel_; }
  const MediConfig& config() const { return config_; }

  MediTerms evaluate(const Volume3D& chi) const;
  double objective(const Volume3D& chi) const { return evaluate(chi).total(); }
  Volume3D gradient(const Volume3D& chi) const;

  // Gauss-Newton normal operator linearised at `chi`:
  // 2 A W^2 A + lambda grad^T diag(M / sqrt(g^2 + eps^2)) grad.
  class NormalOperator {
   public:
    Volume3D apply(const Volume3D& v) const;

   private:
    friend class MediProblem;
    const MediProblem* problem_ = nullptr;
    Gradient3D diffusivity_;
  };
  NormalOperator linearize(const Volume3D& chi) const;

 private:
  Volume3D b_;
  Volume3D W_;
  Volume3D W2_;
  Volume3D M_;
  DipoleKernel kernel_;
  MediConfig config_;
};

struct MediTraceRow {
  int iteration = 0;
  double objective = 0.0;
  double fidelity = 0.0;
  double tv = 0.0;
  double step = 0.0;
  int cg_iterations = 0;
};

struct MediResult {
  Volume3D chi;
  std::vector<MediTraceRow> trace;
  bool converged = false;
  bool cg_breakdown = false;
};

struct CgResult {
  Volume3D x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool breakdown = false;
};

// Conjugate gradient on an SPD operator, starting from zero.
template <class Op>
CgResult conjugate_gradient(const Op& apply, const Volume3D& rhs, int max_iter, double tol);

MediResult medi_solve(const Volume3D& b, const Volume3D& W, const DipoleKernel& kernel,
                      const MediConfig& config, const std::optional<Volume3D>& init = std::nullopt);

void to_json(nlohmann::json& j, const MediConfig& c);
// edge_weight is loaded separately (it is a volume, not a scalar setting).
void from_json(const nlohmann::json& j, MediConfig& c);

// ---------------------------------------------------------------------------

template <class Op>
CgResult conjugate_gradient(const Op& apply, const Volume3D& rhs, int max_iter, double tol) {
  CgResult res{Volume3D(rhs.dims(), rhs.voxel_size()), 0, 0.0, false};
  Volume3D r = rhs;
  Volume3D p = r;
  double rr = dot(r, r);
  const double rhs_norm = std::sqrt(rr);
  if (rhs_norm == 0.0) return res;
  for (int k = 0; k < max_iter; ++k) {
    const Volume3D Ap = apply(p);
    const double pAp = dot(p, Ap);
    if (!(pAp > 0.0)) {
      res.breakdown = true;
      break;
    }
    const double alpha = rr / pAp;
    for (std::size_t i = 0; i < r.size(); ++i) {
      res.x[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
    }
    const double rr_new = dot(r, r);
    res.iterations = k + 1;
    res.relative_residual = std::sqrt(rr_new) / rhs_norm;
    if (res.relative_residual <= tol) break;
    const double beta = rr_new / rr;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
    rr = rr_new;
  }
  return res;
}

}  // namespace qsmlab
