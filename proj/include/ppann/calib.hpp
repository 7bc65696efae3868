#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ppann/matgen.hpp"
#include "ppann/pann.hpp"
#include "ppann/text_io.hpp"

namespace ppann {

enum class Study { I, II, Vector };
enum class OptimizerKind { Adam, QuasiNewton };

/// How tuples are weighted in the stress loss.
///  Group:      1 / mean ||P|| of the (load path, t) group
///  Norm:       1 / (||P|| + 1) per tuple
///  Unweighted: 1
enum class Weighting { Group, Norm, Unweighted };

inline std::string to_string(Study s) {
  switch (s) {
    case Study::I: return "I";
    case Study::II: return "II";
    case Study::Vector: return "vector";
  }
  return "?";
}

inline Study parse_study(std::string_view s) {
  if (s == "I" || s == "1" || s == "i") return Study::I;
  if (s == "II" || s == "2" || s == "ii") return Study::II;
  if (s == "vector" || s == "V" || s == "v") return Study::Vector;
  throw std::invalid_argument("unknown study '" + std::string(s) + "'");
}

inline std::string to_string(OptimizerKind o) { return o == OptimizerKind::Adam ? "adam" : "quasi-newton"; }

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "adam" || s == "Adam") return OptimizerKind::Adam;
  if (s == "quasi-newton" || s == "lbfgs" || s == "QuasiNewton") return OptimizerKind::QuasiNewton;
  throw std::invalid_argument("unknown optimizer '" + std::string(s) + "'");
}

inline Weighting default_weighting(Study s) { return s == Study::Vector ? Weighting::Norm : Weighting::Group; }

/// Per-tuple loss weights c_i (the loss is (1/(9N)) sum_i c_i ||dP_i||^2).
/// Data stresses are divided by `scale` first. Zero-stress groups fall back
/// to weight one and add a warning.
inline std::vector<double> tuple_weights(const Dataset& d, Weighting w, double scale = 1.0,
                                         std::vector<std::string>* warnings = nullptr) {
  std::vector<double> c(d.size(), 1.0);
  if (w == Weighting::Unweighted) return c;
  if (w == Weighting::Norm) {
    for (std::size_t i = 0; i < d.size(); ++i) c[i] = 1.0 / (d.tuples[i].P.norm() / scale + 1.0);
    return c;
  }
  std::map<std::pair<int, int>, std::pair<double, int>> groups;
  for (const auto& t : d.tuples) {
    auto& g = groups[{t.load_path, t.t_id}];
    g.first += t.P.norm() / scale;
    g.second += 1;
  }
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& g = groups[{d.tuples[i].load_path, d.tuples[i].t_id}];
    const double wij = g.first / g.second;
    if (wij > 0.0) {
      c[i] = 1.0 / wij;
    } else {
      c[i] = 1.0;
    }
  }
  if (warnings) {
    for (const auto& [key, g] : groups)
      if (!(g.first > 0.0))
        warnings->push_back("zero-stress group (load path " + std::to_string(key.first) + ", t_id " +
                            std::to_string(key.second) + "): weight set to 1");
  }
  return c;
}

/// Mean Frobenius norm of the data stresses; the vector study divides stresses by it.
inline double mean_stress_norm(const Dataset& d) {
  double s = 0.0;
  for (const auto& t : d.tuples) s += t.P.norm();
  return d.size() ? s / static_cast<double>(d.size()) : 1.0;
}

inline double log10_or_sentinel(double mse) {
  return mse > 0.0 ? std::log10(mse) : -std::numeric_limits<double>::infinity();
}

/// Runs body(i) for i in [0, n) on `workers` threads; results must be written to slot i.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& body) {
  const std::size_t w = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(w);
  for (std::size_t k = 0; k < w; ++k) {
    pool.emplace_back([&, k] {
      try {
        for (std::size_t i = k; i < n; i += w) body(i);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Stress-only (Sobolev) loss of a PANN over a dataset, as a function of the
/// network parameters, with its exact gradient.
///
/// Everything is in normalised stress units: data stresses are divided by the
/// model's stress_scale and the network stress is used unscaled.
class SobolevObjective {
 public:
  SobolevObjective(const PannModel& prototype, const Dataset& data, std::vector<double> weights, int workers = 1)
      : layout_(prototype.net.config()),
        normalisation_(prototype.normalisation),
        growth_(prototype.growth),
        workers_(workers) {
    if (weights.size() != data.size()) throw std::invalid_argument("objective: one weight per tuple required");
    if (data.size() == 0) throw std::invalid_argument("objective: empty dataset");
    if (data.t_dim != layout_.y_dim()) throw std::invalid_argument("objective: parameter dimension mismatch");
    const double inv_scale = 1.0 / prototype.stress_scale;
    const double norm = 1.0 / (9.0 * static_cast<double>(data.size()));

    std::map<std::vector<double>, int> group_of;
    tuples_.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto& d = data.tuples[i];
      const DeformationGradient F(d.F);
      Tuple t;
      t.x = invariants(F).as_array();
      const auto g = invariant_gradients(F);
      for (int a = 0; a < 4; ++a) t.G[a] = g[a];
      t.cof = cofactor(d.F);
      t.fixed = growth_ ? Tensor2(growth_term_dJ(F.det()) * t.cof) : Tensor2(Tensor2::Zero());
      t.target = d.P * inv_scale;
      t.coef = weights[i] * norm;
      auto [it, fresh] = group_of.emplace(d.t, static_cast<int>(ts_.size()));
      if (fresh) ts_.push_back(d.t);
      t.group = it->second;
      tuples_.push_back(t);
    }
    // Blocks never straddle a parameter group so each block needs one parameter-stage pass.
    std::vector<std::vector<int>> members(ts_.size());
    for (std::size_t i = 0; i < tuples_.size(); ++i) members[tuples_[i].group].push_back(static_cast<int>(i));
    for (std::size_t g = 0; g < members.size(); ++g) {
      for (std::size_t s = 0; s < members[g].size(); s += kBlock) {
        Block b;
        b.group = static_cast<int>(g);
        b.tuples.assign(members[g].begin() + s, members[g].begin() + std::min(members[g].size(), s + kBlock));
        blocks_.push_back(std::move(b));
      }
    }
  }

  std::size_t num_tuples() const { return tuples_.size(); }
  std::size_t num_groups() const { return ts_.size(); }
  std::size_t num_params() const { return layout_.size(); }

  double value(std::span<const double> theta) const { return run(theta, nullptr); }

  double value_and_gradient(std::span<const double> theta, std::vector<double>& grad) const {
    grad.assign(layout_.size(), 0.0);
    return run(theta, &grad);
  }

  /// Per-tuple squared stress error ||dP||^2 (unweighted, normalised units).
  std::vector<double> squared_errors(std::span<const double> theta) const {
    std::vector<double> out(tuples_.size());
    const auto n = offsets(theta);
    parallel_for(blocks_.size(), workers_, [&](std::size_t b) {
      const Block& blk = blocks_[b];
      YCache<double> yc(layout_);
      XCache<double> xc(layout_);
      YAdjoint<double> ya(layout_);
      XScratch<double> s(layout_);
      parameter_stage<double>(layout_, theta, std::span<const double>(ts_[blk.group]), yc);
      for (int i : blk.tuples) out[i] = (stress(theta, yc, xc, ya, s, tuples_[i], n[blk.group]) - tuples_[i].target).squaredNorm();
    });
    return out;
  }

 private:
  static constexpr std::size_t kBlock = 64;

  struct Tuple {
    std::array<double, 4> x{};
    std::array<Tensor2, 4> G;
    Tensor2 cof, fixed, target;
    double coef = 0.0;
    int group = 0;
  };

  struct Block {
    int group = 0;
    std::vector<int> tuples;
  };

  struct BlockResult {
    double loss = 0.0;
    double beta = 0.0;
    std::vector<double> grad;
  };

  // n(t) per parameter group.
  std::vector<double> offsets(std::span<const double> theta) const {
    std::vector<double> n(ts_.size(), 0.0);
    if (!normalisation_) return n;
    parallel_for(ts_.size(), workers_, [&](std::size_t g) {
      YCache<double> yc(layout_);
      XCache<double> xc(layout_);
      YAdjoint<double> ya(layout_);
      XScratch<double> s(layout_);
      parameter_stage<double>(layout_, theta, std::span<const double>(ts_[g]), yc);
      convex_stage<double>(layout_, theta, yc, kReferenceInvariants, xc);
      std::array<double, 4> gx{};
      convex_reverse<double>(layout_, theta, yc, xc, 1.0, {}, ya, gx, s);
      for (int a = 0; a < 4; ++a) n[g] += kNormalisationWeights[a] * gx[a];
    });
    return n;
  }

  Tensor2 stress(std::span<const double> theta, const YCache<double>& yc, XCache<double>& xc, YAdjoint<double>& ya,
                 XScratch<double>& s, const Tuple& t, double n) const {
    convex_stage<double>(layout_, theta, yc, t.x, xc);
    std::array<double, 4> gx{};
    convex_reverse<double>(layout_, theta, yc, xc, 1.0, {}, ya, gx, s);
    Tensor2 P = t.fixed - n * t.cof;
    for (int a = 0; a < 4; ++a) P += gx[a] * t.G[a];
    return P;
  }

  double run(std::span<const double> theta, std::vector<double>* grad) const {
    if (theta.size() != layout_.size()) throw std::invalid_argument("objective: parameter count mismatch");
    const auto n = offsets(theta);
    std::vector<BlockResult> results(blocks_.size());
    parallel_for(blocks_.size(), workers_, [&](std::size_t b) { results[b] = run_block(theta, blocks_[b], n[blocks_[b].group], grad != nullptr); });

    double loss = 0.0;
    std::vector<double> beta(ts_.size(), 0.0);
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      loss += results[b].loss;
      if (!grad) continue;
      beta[blocks_[b].group] += results[b].beta;
      for (std::size_t i = 0; i < grad->size(); ++i) (*grad)[i] += results[b].grad[i];
    }
    if (grad && normalisation_) {
      // dP/dtheta carries -cof * dn/dtheta; dn/dtheta is a directional mixed derivative at F = I.
      std::vector<std::vector<double>> gn(ts_.size());
      parallel_for(ts_.size(), workers_, [&](std::size_t g) {
        gn[g].assign(layout_.size(), 0.0);
        if (beta[g] == 0.0) return;
        std::array<Dual, 4> xr;
        for (int a = 0; a < 4; ++a) xr[a] = Dual(kReferenceInvariants[a], beta[g] * kNormalisationWeights[a]);
        std::vector<Dual> yd(ts_[g].begin(), ts_[g].end());
        YCache<Dual> yc(layout_);
        XCache<Dual> xc(layout_);
        YAdjoint<Dual> ya(layout_);
        XScratch<Dual> s(layout_);
        std::vector<Dual> gt(layout_.size());
        parameter_stage<Dual>(layout_, theta, yd, yc);
        convex_stage<Dual>(layout_, theta, yc, xr, xc);
        convex_reverse<Dual>(layout_, theta, yc, xc, Dual(1.0), gt, ya, {}, s);
        parameter_reverse<Dual>(layout_, theta, yc, ya, gt, {});
        for (std::size_t i = 0; i < gt.size(); ++i) gn[g][i] = gt[i].d;
      });
      for (const auto& v : gn)
        for (std::size_t i = 0; i < v.size(); ++i) (*grad)[i] += v[i];
    }
    return loss;
  }

  BlockResult run_block(std::span<const double> theta, const Block& blk, double n, bool want_grad) const {
    BlockResult r;
    const auto& t_val = ts_[blk.group];
    YCache<double> yc(layout_);
    XCache<double> xc(layout_);
    YAdjoint<double> ya(layout_);
    XScratch<double> s(layout_);
    parameter_stage<double>(layout_, theta, std::span<const double>(t_val), yc);

    std::vector<std::array<double, 4>> dirs;
    if (want_grad) dirs.resize(blk.tuples.size());
    for (std::size_t k = 0; k < blk.tuples.size(); ++k) {
      const Tuple& t = tuples_[blk.tuples[k]];
      const Tensor2 R = stress(theta, yc, xc, ya, s, t, n) - t.target;
      r.loss += t.coef * R.squaredNorm();
      if (!want_grad) continue;
      const double c2 = 2.0 * t.coef;
      for (int a = 0; a < 4; ++a) dirs[k][a] = c2 * (R.cwiseProduct(t.G[a])).sum();
      r.beta -= c2 * (R.cwiseProduct(t.cof)).sum();
    }
    if (!want_grad) return r;

    std::vector<Dual> yd(t_val.begin(), t_val.end());
    YCache<Dual> ycd(layout_);
    XCache<Dual> xcd(layout_);
    YAdjoint<Dual> yad(layout_);
    XScratch<Dual> sd(layout_);
    std::vector<Dual> gt(layout_.size());
    parameter_stage<Dual>(layout_, theta, yd, ycd);
    std::array<Dual, 4> xd;
    for (std::size_t k = 0; k < blk.tuples.size(); ++k) {
      const Tuple& t = tuples_[blk.tuples[k]];
      for (int a = 0; a < 4; ++a) xd[a] = Dual(t.x[a], dirs[k][a]);
      convex_stage<Dual>(layout_, theta, ycd, xd, xcd);
      convex_reverse<Dual>(layout_, theta, ycd, xcd, Dual(1.0), gt, yad, {}, sd);
    }
    parameter_reverse<Dual>(layout_, theta, ycd, yad, gt, {});
    r.grad.resize(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) r.grad[i] = gt[i].d;
    return r;
  }

  PicnnLayout layout_;
  bool normalisation_;
  bool growth_;
  int workers_;
  std::vector<Tuple> tuples_;
  std::vector<std::vector<double>> ts_;
  std::vector<Block> blocks_;
};

/// (1/(9N)) sum_i c_i ||P_model - P_data||^2 in normalised units.
inline double weighted_mse(const PannModel& m, const Dataset& d, Weighting w, int workers = 1) {
  const SobolevObjective obj(m, d, tuple_weights(d, w, m.stress_scale), workers);
  return obj.value(m.net.theta());
}

inline double weighted_mse_study1(const PannModel& m, const Dataset& d) { return weighted_mse(m, d, Weighting::Group); }
inline double weighted_mse_vector(const PannModel& m, const Dataset& d) { return weighted_mse(m, d, Weighting::Norm); }

inline double unweighted_log10_mse(const PannModel& m, const Dataset& d, int workers = 1) {
  return log10_or_sentinel(weighted_mse(m, d, Weighting::Unweighted, workers));
}

struct PerTMse {
  int t_id = 0;
  std::vector<double> t;
  double mse = 0.0;
};

/// Unweighted MSE per parameter sample, in order of first appearance.
inline std::vector<PerTMse> per_t_mse(const PannModel& m, const Dataset& d, int workers = 1) {
  const SobolevObjective obj(m, d, std::vector<double>(d.size(), 1.0), workers);
  const auto err = obj.squared_errors(m.net.theta());
  std::vector<PerTMse> out;
  std::map<int, std::size_t> index;
  std::vector<int> counts;
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto [it, fresh] = index.emplace(d.tuples[i].t_id, out.size());
    if (fresh) {
      out.push_back({d.tuples[i].t_id, d.tuples[i].t, 0.0});
      counts.push_back(0);
    }
    out[it->second].mse += err[i];
    counts[it->second] += 1;
  }
  for (std::size_t k = 0; k < out.size(); ++k) out[k].mse /= 9.0 * counts[k];
  return out;
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

struct AdamSettings {
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
};

struct AdamState {
  std::vector<double> m, v;
  long long step = 0;
};

/// One Adam update followed by projection onto the feasible set.
inline void adam_step(PicnnParams& p, std::span<const double> grad, AdamState& st, const AdamSettings& s = {}) {
  if (grad.size() != p.size()) throw std::invalid_argument("adam_step: gradient size mismatch");
  if (st.m.size() != p.size()) {
    st.m.assign(p.size(), 0.0);
    st.v.assign(p.size(), 0.0);
    st.step = 0;
  }
  ++st.step;
  const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < p.size(); ++i) {
    st.m[i] = s.beta1 * st.m[i] + (1.0 - s.beta1) * grad[i];
    st.v[i] = s.beta2 * st.v[i] + (1.0 - s.beta2) * grad[i] * grad[i];
    const double mh = st.m[i] / bc1;
    const double vh = st.v[i] / bc2;
    p.values[i] -= s.lr * mh / (std::sqrt(vh) + s.eps);
  }
  project_nonneg_inplace(p);
}

/// Bound-constrained limited-memory BFGS: variables flagged non-negative are
/// kept >= 0 by an active set and projected backtracking.
class ProjectedLbfgs {
 public:
  explicit ProjectedLbfgs(int memory = 10) : memory_(memory) {}

  struct Step {
    double f = 0.0;
    bool line_search_failed = false;
  };

  /// One iteration from (p, f, g); on success p, f, g hold the new iterate.
  /// A failed search along the quasi-Newton direction is retried once along
  /// the projected gradient with the curvature memory cleared.
  template <class Eval>
  Step iterate(PicnnParams& p, double& f, std::vector<double>& g, Eval&& eval) {
    const std::size_t n = p.size();
    std::vector<char> active(n, 0);
    for (std::size_t i = 0; i < n; ++i) active[i] = p.nonneg[i] && p.values[i] <= 0.0 && g[i] > 0.0;

    for (int attempt = 0; attempt < 2; ++attempt) {
      std::vector<double> d = two_loop(g, active);
      if (!(dot(g, d) < 0.0)) {
        clear();
        d = two_loop(g, active);
        if (!(dot(g, d) < 0.0)) return {f, true};  // projected gradient vanishes
      }
      double alpha = 1.0;
      if (s_.empty()) alpha = std::min(1.0, 1.0 / std::max(std::sqrt(dot(d, d)), 1e-300));
      if (search(p, f, g, d, alpha, eval)) return {f, false};
      if (s_.empty()) break;
      clear();
    }
    return {f, true};
  }

 private:
  void clear() {
    s_.clear();
    y_.clear();
    rho_.clear();
  }

  // Projected Armijo backtracking along d; updates the memory on success.
  template <class Eval>
  bool search(PicnnParams& p, double& f, std::vector<double>& g, const std::vector<double>& d, double alpha,
              Eval& eval) {
    const std::size_t n = p.size();
    PicnnParams trial = p;
    std::vector<double> g_new;
    for (int k = 0; k < 40; ++k, alpha *= 0.5) {
      for (std::size_t i = 0; i < n; ++i) trial.values[i] = p.values[i] + alpha * d[i];
      project_nonneg_inplace(trial);
      double decrease = 0.0;
      for (std::size_t i = 0; i < n; ++i) decrease += g[i] * (trial.values[i] - p.values[i]);
      if (!(decrease < 0.0)) continue;
      const double f_new = eval(trial, g_new);
      if (!(std::isfinite(f_new) && f_new <= f + 1e-4 * decrease)) continue;
      std::vector<double> s(n), y(n);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = trial.values[i] - p.values[i];
        y[i] = g_new[i] - g[i];
      }
      const double sy = dot(s, y);
      if (sy > 1e-10 * std::sqrt(dot(s, s) * dot(y, y))) {
        s_.push_back(std::move(s));
        y_.push_back(std::move(y));
        rho_.push_back(1.0 / sy);
        if (static_cast<int>(s_.size()) > memory_) {
          s_.pop_front();
          y_.pop_front();
          rho_.pop_front();
        }
      }
      p = std::move(trial);
      f = f_new;
      g = std::move(g_new);
      return true;
    }
    return false;
  }

  static double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  }

  std::vector<double> two_loop(const std::vector<double>& g, const std::vector<char>& active) const {
    const std::size_t n = g.size();
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = active[i] ? 0.0 : g[i];
    const std::size_t m = s_.size();
    std::vector<double> alpha(m);
    auto free_dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        if (!active[i]) s += a[i] * b[i];
      return s;
    };
    for (std::size_t k = m; k-- > 0;) {
      alpha[k] = rho_[k] * free_dot(s_[k], q);
      for (std::size_t i = 0; i < n; ++i)
        if (!active[i]) q[i] -= alpha[k] * y_[k][i];
    }
    double gamma = 1.0;
    if (m > 0) gamma = dot(s_.back(), y_.back()) / dot(y_.back(), y_.back());
    for (std::size_t i = 0; i < n; ++i) q[i] *= gamma;
    for (std::size_t k = 0; k < m; ++k) {
      const double b = rho_[k] * free_dot(y_[k], q);
      for (std::size_t i = 0; i < n; ++i)
        if (!active[i]) q[i] += (alpha[k] - b) * s_[k][i];
    }
    for (double& v : q) v = -v;
    for (std::size_t i = 0; i < n; ++i)
      if (active[i]) q[i] = 0.0;
    return q;
  }

  int memory_;
  std::deque<std::vector<double>> s_, y_;
  std::deque<double> rho_;
};

// ---------------------------------------------------------------------------
// Calibration loop
// ---------------------------------------------------------------------------

struct TrainConfig {
  Study study = Study::I;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double learning_rate = 0.002;
  int epochs = 7000;
  std::uint64_t seed = 42;
  int restarts = 5;
  bool normalize_stress = false;
  bool normalisation = true;  // false: ablated model without the stress-normalisation term
  InitScheme init = InitScheme::GlorotClamp;
  int workers = 1;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
    if (epochs < 1) throw std::invalid_argument("train: epochs must be at least 1");
    if (restarts < 1) throw std::invalid_argument("train: restarts must be at least 1");
  }
};

inline TrainConfig default_train_config(Study s) {
  TrainConfig c;
  c.study = s;
  if (s == Study::Vector) {
    c.optimizer = OptimizerKind::QuasiNewton;
    c.normalize_stress = true;
  }
  return c;
}

struct RestartResult {
  int index = 0;
  std::uint64_t seed = 0;
  std::string optimizer;
  bool aborted = false;
  bool excluded = false;
  std::string note;
  double weighted_loss = 0.0;
  double calib_log10 = 0.0;
  double test_log10 = 0.0;
  std::vector<double> history;
  PannModel model;
};

struct TrainReport {
  TrainConfig config;
  std::string architecture;
  std::size_t num_params = 0;
  std::size_t calib_size = 0;
  std::size_t test_size = 0;
  double stress_scale = 1.0;
  std::vector<RestartResult> runs;
  std::vector<std::string> warnings;
  double wall_seconds = 0.0;

  /// Index of the lowest test loss among non-aborted runs.
  int best() const {
    int b = -1;
    for (const auto& r : runs)
      if (!r.aborted && (b < 0 || r.test_log10 < runs[b].test_log10)) b = r.index;
    return b;
  }

  /// Averages over runs not flagged as excluded.
  double average_calib_log10() const { return average([](const RestartResult& r) { return r.calib_log10; }); }
  double average_test_log10() const { return average([](const RestartResult& r) { return r.test_log10; }); }

  /// Key-value report, one metric per line. Wall time is deliberately left out
  /// so that reports of identical runs are byte-identical.
  std::string to_text() const {
    std::ostringstream os;
    os << "study=" << to_string(config.study) << "\n";
    os << "architecture=" << architecture << "\n";
    os << "parameters=" << num_params << "\n";
    os << "optimizer=" << to_string(config.optimizer) << "\n";
    os << "learning_rate=" << format_double(config.learning_rate) << "\n";
    os << "epochs=" << config.epochs << "\n";
    os << "seed=" << config.seed << "\n";
    os << "restarts=" << config.restarts << "\n";
    os << "init=" << to_string(config.init) << "\n";
    os << "normalisation_term=" << (config.normalisation ? 1 : 0) << "\n";
    os << "normalize_stress=" << (config.normalize_stress ? 1 : 0) << "\n";
    os << "stress_scale=" << format_double(stress_scale) << "\n";
    os << "calibration_tuples=" << calib_size << "\n";
    os << "test_tuples=" << test_size << "\n";
    for (const auto& r : runs) {
      const std::string p = "restart." + std::to_string(r.index) + ".";
      os << p << "seed=" << r.seed << "\n";
      os << p << "optimizer=" << r.optimizer << "\n";
      os << p << "aborted=" << (r.aborted ? 1 : 0) << "\n";
      os << p << "excluded=" << (r.excluded ? 1 : 0) << "\n";
      os << p << "weighted_calibration_loss=" << format_double(r.weighted_loss) << "\n";
      os << p << "calibration_log10_mse=" << format_double(r.calib_log10) << "\n";
      os << p << "test_log10_mse=" << format_double(r.test_log10) << "\n";
      if (!r.note.empty()) os << p << "note=" << r.note << "\n";
    }
    os << "average.calibration_log10_mse=" << format_double(average_calib_log10()) << "\n";
    os << "average.test_log10_mse=" << format_double(average_test_log10()) << "\n";
    os << "best_restart=" << best() << "\n";
    for (const auto& w : warnings) os << "warning=" << w << "\n";
    return os.str();
  }

  /// epoch, loss of restart 0, loss of restart 1, ...
  std::string history_csv() const {
    std::ostringstream os;
    os << "epoch";
    for (const auto& r : runs) os << ",restart" << r.index;
    os << "\n";
    std::size_t len = 0;
    for (const auto& r : runs) len = std::max(len, r.history.size());
    for (std::size_t e = 0; e < len; ++e) {
      os << e + 1;
      for (const auto& r : runs) os << "," << (e < r.history.size() ? format_double(r.history[e]) : std::string());
      os << "\n";
    }
    return os.str();
  }

 private:
  template <class Get>
  double average(Get get) const {
    double s = 0.0;
    int n = 0;
    for (const auto& r : runs)
      if (!r.excluded && !r.aborted) {
        s += get(r);
        ++n;
      }
    return n ? s / n : std::numeric_limits<double>::quiet_NaN();
  }
};

/// Progress callback: (restart, epoch, loss).
using ProgressFn = std::function<void(int, int, double)>;

namespace detail {

inline void run_adam(const SobolevObjective& obj, PicnnParams& p, int epochs, double lr, RestartResult& r) {
  AdamSettings s;
  s.lr = lr;
  AdamState st;
  std::vector<double> g;
  for (int e = 0; e < epochs; ++e) {
    const double f = obj.value_and_gradient(p.values, g);
    if (!std::isfinite(f)) throw NumericalError("non-finite loss at epoch " + std::to_string(e + 1));
    adam_step(p, g, st, s);
    r.history.push_back(f);
  }
}

inline void run_quasi_newton(const SobolevObjective& obj, PicnnParams& p, int iterations, double lr,
                             RestartResult& r) {
  ProjectedLbfgs opt;
  std::vector<double> g;
  double f = obj.value_and_gradient(p.values, g);
  if (!std::isfinite(f)) throw NumericalError("non-finite initial loss");
  auto eval = [&](const PicnnParams& q, std::vector<double>& gq) { return obj.value_and_gradient(q.values, gq); };
  for (int it = 0; it < iterations; ++it) {
    const auto step = opt.iterate(p, f, g, eval);
    if (step.line_search_failed) {
      r.note = "line search failed at iteration " + std::to_string(it + 1) + "; Adam for the remaining " +
               std::to_string(iterations - it) + " epochs";
      r.optimizer = "quasi-newton+adam";
      run_adam(obj, p, iterations - it, lr, r);
      return;
    }
    r.history.push_back(f);
  }
}

}  // namespace detail

/// Full-batch calibration with `restarts` independent seeds (seed + restart index).
/// The run with the worst test loss is flagged as excluded from the averages.
inline TrainReport train(const TrainConfig& cfg, const Dataset& calib, const Dataset& test, const PicnnConfig& net_cfg,
                         const ProgressFn& progress = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  TrainReport rep;
  rep.config = cfg;
  rep.architecture = to_string(net_cfg.kind);
  rep.num_params = count_params(net_cfg);
  rep.calib_size = calib.size();
  rep.test_size = test.size();
  rep.stress_scale = cfg.normalize_stress ? mean_stress_norm(calib) : 1.0;

  const Weighting weighting = default_weighting(cfg.study);
  PannModel proto(Picnn(net_cfg), rep.stress_scale);
  proto.normalisation = cfg.normalisation;
  const SobolevObjective loss(proto, calib, tuple_weights(calib, weighting, rep.stress_scale, &rep.warnings), cfg.workers);
  const SobolevObjective calib_mse(proto, calib, std::vector<double>(calib.size(), 1.0), cfg.workers);
  const SobolevObjective test_mse(proto, test, std::vector<double>(test.size(), 1.0), cfg.workers);

  for (int k = 0; k < cfg.restarts; ++k) {
    RestartResult r;
    r.index = k;
    r.seed = cfg.seed + static_cast<std::uint64_t>(k);
    r.optimizer = to_string(cfg.optimizer);
    PicnnParams p = init_params(net_cfg, r.seed, cfg.init);
    try {
      if (cfg.optimizer == OptimizerKind::Adam) {
        detail::run_adam(loss, p, cfg.epochs, cfg.learning_rate, r);
      } else {
        detail::run_quasi_newton(loss, p, cfg.epochs, cfg.learning_rate, r);
      }
      r.weighted_loss = loss.value(p.values);
      r.calib_log10 = log10_or_sentinel(calib_mse.value(p.values));
      r.test_log10 = log10_or_sentinel(test_mse.value(p.values));
      if (!std::isfinite(r.weighted_loss) || std::isnan(r.test_log10))
        throw NumericalError("non-finite loss after training");
    } catch (const NumericalError& e) {
      r.aborted = true;
      r.note = e.what();
      r.weighted_loss = std::numeric_limits<double>::infinity();
      r.calib_log10 = std::numeric_limits<double>::infinity();
      r.test_log10 = std::numeric_limits<double>::infinity();
    }
    r.model = PannModel(Picnn(net_cfg, std::move(p)), rep.stress_scale);
    r.model.normalisation = cfg.normalisation;
    if (progress) progress(k, static_cast<int>(r.history.size()), r.weighted_loss);
    rep.runs.push_back(std::move(r));
  }
  if (rep.runs.size() > 1) {
    // Aborted runs carry +inf losses, so they rank as worst.
    int worst = 0;
    for (const auto& r : rep.runs)
      if (r.test_log10 > rep.runs[worst].test_log10) worst = r.index;
    rep.runs[worst].excluded = true;
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace ppann
