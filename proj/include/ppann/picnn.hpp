#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "ppann/dual.hpp"
#include "ppann/errors.hpp"

namespace ppann {

/// The four partially input-convex architectures.
enum class Architecture { Type1, Type2, Type3, Type1M };

enum class Activation { Softplus, Sigmoid, Linear };

inline std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::Type1: return "Type1";
    case Architecture::Type2: return "Type2";
    case Architecture::Type3: return "Type3";
    case Architecture::Type1M: return "Type1M";
  }
  return "?";
}

inline Architecture parse_architecture(std::string_view s) {
  if (s == "Type1" || s == "type1" || s == "1") return Architecture::Type1;
  if (s == "Type2" || s == "type2" || s == "2") return Architecture::Type2;
  if (s == "Type3" || s == "type3" || s == "3") return Architecture::Type3;
  if (s == "Type1M" || s == "type1m" || s == "1M" || s == "1m") return Architecture::Type1M;
  throw std::invalid_argument("unknown architecture '" + std::string(s) + "'");
}

struct PicnnConfig {
  Architecture kind = Architecture::Type1;
  int x_dim = 4;
  int y_dim = 1;
  std::vector<int> x_widths{8, 8};  // hidden widths of the convex trunk
  std::vector<int> y_widths{8, 8};  // hidden widths of the parameter trunk

  bool operator==(const PicnnConfig&) const = default;
};

/// Canonical widths; these reproduce 272 / 516 / 580 / 280 trainable parameters.
inline PicnnConfig default_config(Architecture kind, int y_dim) {
  if (y_dim != 1 && y_dim != 2) {
    throw std::invalid_argument("default_config: y_dim must be 1 or 2");
  }
  PicnnConfig c;
  c.kind = kind;
  c.y_dim = y_dim;
  c.y_widths = {8, 8};
  c.x_widths = kind == Architecture::Type2 ? std::vector<int>{8, 8, 8} : std::vector<int>{8, 8};
  return c;
}

/// A contiguous slice of the flat parameter vector holding one matrix (row-major) or bias vector.
struct Block {
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
  bool nonneg = false;

  bool present() const { return rows > 0 && cols > 0; }
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

struct YLayer {
  int in = 0;
  int out = 0;
  Block W;
  Block b;
  Activation act = Activation::Softplus;
};

/// One layer of the convex trunk:
///   z = W_xx (x_h * gate) + W_xx0 (x_0 * gate0) + W_xy y_src + b,  x_{h+1} = act(z)
/// with gate = relu(W_gate y_src + b_gate) on gated (Type 3) layers and 1 otherwise.
struct XLayer {
  int in = 0;
  int out = 0;
  int y_src = -1;
  bool gated = false;
  Block W_xx, W_xx0, W_xy, W_gate, W_gate0;
  Block b, b_gate, b_gate0;
  Activation act = Activation::Softplus;
};

class PicnnLayout {
 public:
  PicnnLayout() : PicnnLayout(PicnnConfig{}) {}

  explicit PicnnLayout(const PicnnConfig& config) : config_(config) {
    validate();
    build();
  }

  const PicnnConfig& config() const { return config_; }
  const std::vector<YLayer>& y_layers() const { return y_layers_; }
  const std::vector<XLayer>& x_layers() const { return x_layers_; }
  std::size_t size() const { return size_; }
  int x_dim() const { return config_.x_dim; }
  int y_dim() const { return config_.y_dim; }

  int y_state_width(int k) const { return k == 0 ? config_.y_dim : y_layers_[k - 1].out; }

  /// Blocks in canonical order, each tagged as weight, bias or gate bias.
  enum class Role { Weight, Bias, GateBias };
  struct Entry {
    Block block;
    Role role;
  };
  const std::vector<Entry>& blocks() const { return blocks_; }

 private:
  void validate() const {
    const auto& c = config_;
    if (c.x_dim < 1 || c.y_dim < 1) throw std::invalid_argument("picnn: input dimensions must be positive");
    if (c.x_widths.empty()) throw std::invalid_argument("picnn: at least one hidden convex layer is required");
    for (int w : c.x_widths)
      if (w < 1) throw std::invalid_argument("picnn: layer widths must be positive");
    for (int w : c.y_widths)
      if (w < 1) throw std::invalid_argument("picnn: layer widths must be positive");
    if (c.kind == Architecture::Type2 && c.y_widths.size() + 1 != c.x_widths.size()) {
      throw std::invalid_argument("picnn: Type2 needs one parameter layer fewer than convex layers");
    }
    if (c.kind == Architecture::Type3 && c.y_widths.size() != c.x_widths.size()) {
      throw std::invalid_argument("picnn: Type3 needs as many parameter layers as convex layers");
    }
  }

  Block take(int rows, int cols, bool nonneg) {
    Block b{size_, rows, cols, nonneg};
    size_ += b.size();
    return b;
  }

  void build() {
    const auto& c = config_;
    const bool mono = c.kind == Architecture::Type1M;

    for (std::size_t k = 0; k < c.y_widths.size(); ++k) {
      YLayer L;
      L.in = k == 0 ? c.y_dim : c.y_widths[k - 1];
      L.out = c.y_widths[k];
      L.act = (mono && k == 0) ? Activation::Sigmoid : Activation::Softplus;
      L.W = take(L.out, L.in, mono);
      L.b = take(L.out, 1, false);
      blocks_.push_back({L.W, Role::Weight});
      blocks_.push_back({L.b, Role::Bias});
      y_layers_.push_back(L);
    }

    const int n_hidden = static_cast<int>(c.x_widths.size());
    for (int h = 0; h <= n_hidden; ++h) {
      const bool output = h == n_hidden;
      XLayer L;
      L.in = h == 0 ? c.x_dim : c.x_widths[h - 1];
      L.out = output ? 1 : c.x_widths[h];
      L.act = output ? Activation::Linear : Activation::Softplus;
      const std::size_t layer_start = size_;
      L.W_xx = take(L.out, L.in, true);

      switch (c.kind) {
        case Architecture::Type1:
        case Architecture::Type1M:
          if (h == 0) {
            L.y_src = static_cast<int>(c.y_widths.size());
            L.W_xy = take(L.out, y_state_width(L.y_src), mono);
          }
          break;
        case Architecture::Type2:
          L.W_xx0 = take(L.out, c.x_dim, true);
          if (!output) {
            L.y_src = h;
            L.W_xy = take(L.out, y_state_width(h), false);
          }
          break;
        case Architecture::Type3: {
          L.gated = true;
          L.y_src = h;
          const int yw = y_state_width(h);
          L.W_xx0 = take(L.out, c.x_dim, true);
          if (!output) L.W_xy = take(L.out, yw, false);
          L.W_gate = take(L.in, yw, false);
          L.W_gate0 = take(c.x_dim, yw, false);
          break;
        }
      }
      // Output layers carry no bias: terms independent of the invariants do not affect stress.
      if (!output) L.b = take(L.out, 1, false);
      if (L.gated) {
        L.b_gate = take(L.in, 1, false);
        L.b_gate0 = take(c.x_dim, 1, false);
      }
      // take() hands out offsets in call order; reassign them so weights precede biases within the layer.
      std::size_t off = layer_start;
      auto place = [&](Block& blk) {
        blk.offset = off;
        off += blk.size();
      };
      for (Block* blk : {&L.W_xx, &L.W_xx0, &L.W_xy, &L.W_gate, &L.W_gate0, &L.b, &L.b_gate, &L.b_gate0}) {
        if (blk->present()) place(*blk);
      }
      for (const Block& blk : {L.W_xx, L.W_xx0, L.W_xy, L.W_gate, L.W_gate0})
        if (blk.present()) blocks_.push_back({blk, Role::Weight});
      if (L.b.present()) blocks_.push_back({L.b, Role::Bias});
      if (L.b_gate.present()) blocks_.push_back({L.b_gate, Role::GateBias});
      if (L.b_gate0.present()) blocks_.push_back({L.b_gate0, Role::GateBias});
      x_layers_.push_back(L);
    }
  }

  PicnnConfig config_;
  std::vector<YLayer> y_layers_;
  std::vector<XLayer> x_layers_;
  std::vector<Entry> blocks_;
  std::size_t size_ = 0;
};

inline std::size_t count_params(const PicnnConfig& config) { return PicnnLayout(config).size(); }

/// Flat trainable parameters in canonical order with a per-scalar non-negativity flag.
struct PicnnParams {
  std::vector<double> values;
  std::vector<std::uint8_t> nonneg;

  std::size_t size() const { return values.size(); }
  bool operator==(const PicnnParams&) const = default;
};

inline PicnnParams zero_params(const PicnnLayout& layout) {
  PicnnParams p;
  p.values.assign(layout.size(), 0.0);
  p.nonneg.assign(layout.size(), 0);
  for (const auto& e : layout.blocks()) {
    for (std::size_t i = 0; i < e.block.size(); ++i) p.nonneg[e.block.offset + i] = e.block.nonneg ? 1 : 0;
  }
  return p;
}

enum class InitScheme {
  GlorotClamp,  // U(+-sqrt(6 / (fan_in + fan_out))), constrained entries clamped at 0
  FanInAbs,     // U(+-1 / sqrt(fan_in)), absolute value on constrained entries
};

inline std::string to_string(InitScheme s) { return s == InitScheme::GlorotClamp ? "glorot-clamp" : "fan-in-abs"; }

inline InitScheme parse_init_scheme(std::string_view s) {
  if (s == "glorot-clamp") return InitScheme::GlorotClamp;
  if (s == "fan-in-abs") return InitScheme::FanInAbs;
  throw std::invalid_argument("unknown init scheme '" + std::string(s) + "'");
}

/// Random weights, zero biases. Gate biases start at one so every ReLU gate is
/// open at initialization.
inline PicnnParams init_params(const PicnnLayout& layout, std::uint64_t seed,
                               InitScheme scheme = InitScheme::GlorotClamp) {
  PicnnParams p = zero_params(layout);
  std::mt19937_64 rng(seed);
  for (const auto& e : layout.blocks()) {
    const Block& b = e.block;
    if (e.role == PicnnLayout::Role::Weight) {
      const double a = scheme == InitScheme::GlorotClamp ? std::sqrt(6.0 / static_cast<double>(b.rows + b.cols))
                                                         : 1.0 / std::sqrt(static_cast<double>(b.cols));
      std::uniform_real_distribution<double> unif(-a, a);
      for (std::size_t i = 0; i < b.size(); ++i) {
        double w = unif(rng);
        if (b.nonneg) w = scheme == InitScheme::GlorotClamp ? std::max(w, 0.0) : std::abs(w);
        p.values[b.offset + i] = w;
      }
    } else if (e.role == PicnnLayout::Role::GateBias) {
      for (std::size_t i = 0; i < b.size(); ++i) p.values[b.offset + i] = 1.0;
    }
  }
  return p;
}

inline PicnnParams init_params(const PicnnConfig& config, std::uint64_t seed,
                               InitScheme scheme = InitScheme::GlorotClamp) {
  return init_params(PicnnLayout(config), seed, scheme);
}

/// Clamp every constrained entry at zero; free entries are untouched.
inline void project_nonneg_inplace(PicnnParams& p) {
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    if (p.nonneg[i] && p.values[i] < 0.0) p.values[i] = 0.0;
  }
}

inline PicnnParams project_nonneg(PicnnParams p) {
  project_nonneg_inplace(p);
  return p;
}

inline bool is_feasible(const PicnnParams& p) {
  for (std::size_t i = 0; i < p.values.size(); ++i)
    if (p.nonneg[i] && p.values[i] < 0.0) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Evaluation engine
//
// Evaluation is split into a parameter stage (everything that depends on y
// only) and a convex stage (per x). Reverse passes mirror the split: the
// convex-stage reverse accumulates y-side adjoints, which the parameter-stage
// reverse turns into gradients. Tuples sharing the same y therefore share a
// single parameter-stage evaluation. Every routine is templated on the scalar
// so that running it on Dual numbers yields directional second derivatives.
// ---------------------------------------------------------------------------
namespace detail {

template <class T>
inline void activate(Activation a, const T& z, T& value, T& prime) {
  switch (a) {
    case Activation::Softplus:
      value = softplus(z);
      prime = sigmoid(z);
      return;
    case Activation::Sigmoid:
      value = sigmoid(z);
      prime = sigmoid_prime(z);
      return;
    case Activation::Linear:
      value = z;
      prime = T(1.0);
      return;
  }
}

inline double w_at(std::span<const double> theta, const Block& b, int r, int c) {
  return theta[b.offset + static_cast<std::size_t>(r) * b.cols + c];
}

}  // namespace detail

template <class T>
struct YCache {
  std::vector<std::vector<T>> ys;     // ys[0] is the parameter input
  std::vector<std::vector<T>> dact_y;  // activation derivative per parameter layer
  std::vector<std::vector<T>> z_const;  // W_xy y_src + b per convex layer
  std::vector<std::vector<T>> gate, gate_pre, gate0, gate0_pre;

  explicit YCache(const PicnnLayout& L) {
    ys.resize(L.y_layers().size() + 1);
    ys[0].resize(L.y_dim());
    for (std::size_t k = 0; k < L.y_layers().size(); ++k) {
      ys[k + 1].resize(L.y_layers()[k].out);
      dact_y.emplace_back(L.y_layers()[k].out);
    }
    for (const auto& X : L.x_layers()) {
      z_const.emplace_back(X.out);
      gate.emplace_back(X.gated ? X.in : 0);
      gate_pre.emplace_back(X.gated ? X.in : 0);
      gate0.emplace_back(X.gated ? L.x_dim() : 0);
      gate0_pre.emplace_back(X.gated ? L.x_dim() : 0);
    }
  }
};

template <class T>
struct XCache {
  std::vector<std::vector<T>> xs;    // xs[0] is the convex input
  std::vector<std::vector<T>> dact;  // activation derivative per convex layer

  explicit XCache(const PicnnLayout& L) {
    xs.resize(L.x_layers().size() + 1);
    xs[0].resize(L.x_dim());
    for (std::size_t h = 0; h < L.x_layers().size(); ++h) {
      xs[h + 1].resize(L.x_layers()[h].out);
      dact.emplace_back(L.x_layers()[h].out);
    }
  }
};

/// Adjoints flowing from the convex stage into the parameter stage, summed over tuples.
template <class T>
struct YAdjoint {
  std::vector<std::vector<T>> dz, dgate, dgate0;
  std::vector<std::vector<T>> dys;  // scratch for the parameter-stage reverse

  explicit YAdjoint(const PicnnLayout& L) {
    for (const auto& X : L.x_layers()) {
      dz.emplace_back(X.out);
      dgate.emplace_back(X.gated ? X.in : 0);
      dgate0.emplace_back(X.gated ? L.x_dim() : 0);
    }
    dys.resize(L.y_layers().size() + 1);
    for (std::size_t k = 0; k <= L.y_layers().size(); ++k) dys[k].resize(L.y_state_width(static_cast<int>(k)));
  }

  void clear() {
    for (auto* group : {&dz, &dgate, &dgate0})
      for (auto& v : *group) std::fill(v.begin(), v.end(), T{});
  }
};

/// Scratch space for the convex-stage reverse pass.
template <class T>
struct XScratch {
  std::vector<T> dnext, dz, din, din0, dx0, dcur;

  explicit XScratch(const PicnnLayout& L) {
    std::size_t w = static_cast<std::size_t>(L.x_dim());
    for (const auto& X : L.x_layers()) w = std::max({w, static_cast<std::size_t>(X.in), static_cast<std::size_t>(X.out)});
    for (auto* v : {&dnext, &dz, &din, &din0, &dx0, &dcur}) v->resize(w);
  }
};

template <class T>
void parameter_stage(const PicnnLayout& L, std::span<const double> theta, std::span<const T> y, YCache<T>& c) {
  using detail::w_at;
  for (int i = 0; i < L.y_dim(); ++i) c.ys[0][i] = y[i];
  const auto& Y = L.y_layers();
  for (std::size_t k = 0; k < Y.size(); ++k) {
    const YLayer& Ly = Y[k];
    const auto& in = c.ys[k];
    for (int r = 0; r < Ly.out; ++r) {
      T z = theta[Ly.b.offset + r];
      for (int q = 0; q < Ly.in; ++q) z += w_at(theta, Ly.W, r, q) * in[q];
      detail::activate(Ly.act, z, c.ys[k + 1][r], c.dact_y[k][r]);
    }
  }
  const auto& X = L.x_layers();
  for (std::size_t h = 0; h < X.size(); ++h) {
    const XLayer& Lx = X[h];
    auto& zc = c.z_const[h];
    for (int r = 0; r < Lx.out; ++r) zc[r] = Lx.b.present() ? T(theta[Lx.b.offset + r]) : T{};
    if (Lx.y_src < 0) continue;
    const auto& ysrc = c.ys[Lx.y_src];
    const int yw = static_cast<int>(ysrc.size());
    if (Lx.W_xy.present()) {
      for (int r = 0; r < Lx.out; ++r)
        for (int q = 0; q < yw; ++q) zc[r] += w_at(theta, Lx.W_xy, r, q) * ysrc[q];
    }
    if (Lx.gated) {
      for (int r = 0; r < Lx.in; ++r) {
        T p = theta[Lx.b_gate.offset + r];
        for (int q = 0; q < yw; ++q) p += w_at(theta, Lx.W_gate, r, q) * ysrc[q];
        c.gate_pre[h][r] = p;
        c.gate[h][r] = relu(p);
      }
      for (int r = 0; r < L.x_dim(); ++r) {
        T p = theta[Lx.b_gate0.offset + r];
        for (int q = 0; q < yw; ++q) p += w_at(theta, Lx.W_gate0, r, q) * ysrc[q];
        c.gate0_pre[h][r] = p;
        c.gate0[h][r] = relu(p);
      }
    }
  }
}

template <class T>
T convex_stage(const PicnnLayout& L, std::span<const double> theta, const YCache<T>& yc, std::span<const T> x,
               XCache<T>& c) {
  using detail::w_at;
  const int nx = L.x_dim();
  for (int i = 0; i < nx; ++i) c.xs[0][i] = x[i];
  const auto& x0 = c.xs[0];
  const auto& X = L.x_layers();
  for (std::size_t h = 0; h < X.size(); ++h) {
    const XLayer& Lx = X[h];
    const auto& in = c.xs[h];
    for (int r = 0; r < Lx.out; ++r) {
      T z = yc.z_const[h][r];
      if (Lx.gated) {
        for (int q = 0; q < Lx.in; ++q) z += w_at(theta, Lx.W_xx, r, q) * (in[q] * yc.gate[h][q]);
        for (int q = 0; q < nx; ++q) z += w_at(theta, Lx.W_xx0, r, q) * (x0[q] * yc.gate0[h][q]);
      } else {
        for (int q = 0; q < Lx.in; ++q) z += w_at(theta, Lx.W_xx, r, q) * in[q];
        if (Lx.W_xx0.present())
          for (int q = 0; q < nx; ++q) z += w_at(theta, Lx.W_xx0, r, q) * x0[q];
      }
      detail::activate(Lx.act, z, c.xs[h + 1][r], c.dact[h][r]);
    }
  }
  return c.xs.back()[0];
}

/// Reverse pass through the convex stage, seeded with d(output) = seed.
/// Accumulates parameter gradients of the convex-side blocks into grad_theta
/// (if non-empty), y-side adjoints into yadj, and writes d/dx into grad_x
/// (if non-empty).
template <class T>
void convex_reverse(const PicnnLayout& L, std::span<const double> theta, const YCache<T>& yc, const XCache<T>& c,
                    const T& seed, std::span<T> grad_theta, YAdjoint<T>& yadj, std::span<T> grad_x,
                    XScratch<T>& s) {
  using detail::w_at;
  const int nx = L.x_dim();
  const auto& X = L.x_layers();
  const auto& x0 = c.xs[0];
  const bool want_theta = !grad_theta.empty();
  for (int q = 0; q < nx; ++q) s.dx0[q] = T{};
  s.dnext[0] = seed;

  for (int h = static_cast<int>(X.size()) - 1; h >= 0; --h) {
    const XLayer& Lx = X[h];
    const auto& in = c.xs[h];
    for (int r = 0; r < Lx.out; ++r) {
      s.dz[r] = s.dnext[r] * c.dact[h][r];
      yadj.dz[h][r] += s.dz[r];
    }
    for (int q = 0; q < Lx.in; ++q) s.din[q] = T{};
    for (int q = 0; q < nx; ++q) s.din0[q] = T{};

    for (int r = 0; r < Lx.out; ++r) {
      const T& dzr = s.dz[r];
      const std::size_t row = Lx.W_xx.offset + static_cast<std::size_t>(r) * Lx.W_xx.cols;
      for (int q = 0; q < Lx.in; ++q) {
        s.din[q] += theta[row + q] * dzr;
        if (want_theta) grad_theta[row + q] += dzr * (Lx.gated ? in[q] * yc.gate[h][q] : in[q]);
      }
      if (Lx.W_xx0.present()) {
        const std::size_t row0 = Lx.W_xx0.offset + static_cast<std::size_t>(r) * Lx.W_xx0.cols;
        for (int q = 0; q < nx; ++q) {
          s.din0[q] += theta[row0 + q] * dzr;
          if (want_theta) grad_theta[row0 + q] += dzr * (Lx.gated ? x0[q] * yc.gate0[h][q] : x0[q]);
        }
      }
    }

    if (Lx.gated) {
      for (int q = 0; q < Lx.in; ++q) {
        s.dcur[q] = s.din[q] * yc.gate[h][q];
        yadj.dgate[h][q] += s.din[q] * in[q] * relu_step(yc.gate_pre[h][q]);
      }
      for (int q = 0; q < nx; ++q) {
        s.dx0[q] += s.din0[q] * yc.gate0[h][q];
        yadj.dgate0[h][q] += s.din0[q] * x0[q] * relu_step(yc.gate0_pre[h][q]);
      }
    } else {
      for (int q = 0; q < Lx.in; ++q) s.dcur[q] = s.din[q];
      if (Lx.W_xx0.present())
        for (int q = 0; q < nx; ++q) s.dx0[q] += s.din0[q];
    }

    if (h == 0) {
      for (int q = 0; q < nx; ++q) s.dx0[q] += s.dcur[q];
    } else {
      for (int q = 0; q < Lx.in; ++q) s.dnext[q] = s.dcur[q];
    }
  }
  if (!grad_x.empty())
    for (int q = 0; q < nx; ++q) grad_x[q] = s.dx0[q];
}

/// Reverse pass through the parameter stage using the summed adjoints in yadj.
template <class T>
void parameter_reverse(const PicnnLayout& L, std::span<const double> theta, const YCache<T>& yc, YAdjoint<T>& yadj,
                       std::span<T> grad_theta, std::span<T> grad_y) {
  using detail::w_at;
  const bool want_theta = !grad_theta.empty();
  for (auto& v : yadj.dys) std::fill(v.begin(), v.end(), T{});
  const auto& X = L.x_layers();
  const int nx = L.x_dim();
  for (std::size_t h = 0; h < X.size(); ++h) {
    const XLayer& Lx = X[h];
    const auto& dz = yadj.dz[h];
    if (Lx.b.present() && want_theta)
      for (int r = 0; r < Lx.out; ++r) grad_theta[Lx.b.offset + r] += dz[r];
    if (Lx.y_src < 0) continue;
    const auto& ysrc = yc.ys[Lx.y_src];
    auto& dys = yadj.dys[Lx.y_src];
    const int yw = static_cast<int>(ysrc.size());
    if (Lx.W_xy.present()) {
      for (int r = 0; r < Lx.out; ++r)
        for (int q = 0; q < yw; ++q) {
          const std::size_t i = Lx.W_xy.offset + static_cast<std::size_t>(r) * yw + q;
          if (want_theta) grad_theta[i] += dz[r] * ysrc[q];
          dys[q] += theta[i] * dz[r];
        }
    }
    if (Lx.gated) {
      auto gate_block = [&](const Block& W, const Block& b, const std::vector<T>& dpre, int rows) {
        for (int r = 0; r < rows; ++r) {
          if (want_theta) grad_theta[b.offset + r] += dpre[r];
          for (int q = 0; q < yw; ++q) {
            const std::size_t i = W.offset + static_cast<std::size_t>(r) * yw + q;
            if (want_theta) grad_theta[i] += dpre[r] * ysrc[q];
            dys[q] += theta[i] * dpre[r];
          }
        }
      };
      gate_block(Lx.W_gate, Lx.b_gate, yadj.dgate[h], Lx.in);
      gate_block(Lx.W_gate0, Lx.b_gate0, yadj.dgate0[h], nx);
    }
  }
  const auto& Y = L.y_layers();
  for (int k = static_cast<int>(Y.size()) - 1; k >= 0; --k) {
    const YLayer& Ly = Y[k];
    const auto& in = yc.ys[k];
    auto& dout = yadj.dys[k + 1];
    auto& din = yadj.dys[k];
    for (int r = 0; r < Ly.out; ++r) {
      const T dpre = dout[r] * yc.dact_y[k][r];
      if (want_theta) grad_theta[Ly.b.offset + r] += dpre;
      for (int q = 0; q < Ly.in; ++q) {
        const std::size_t i = Ly.W.offset + static_cast<std::size_t>(r) * Ly.in + q;
        if (want_theta) grad_theta[i] += dpre * in[q];
        din[q] += theta[i] * dpre;
      }
    }
  }
  if (!grad_y.empty())
    for (int q = 0; q < L.y_dim(); ++q) grad_y[q] = yadj.dys[0][q];
}

/// Value and first derivatives of the network at one point.
struct EvalResult {
  double value = 0.0;
  std::vector<double> grad_x;
  std::vector<double> grad_y;
};

/// A partially input-convex network: layout plus parameters.
class Picnn {
 public:
  Picnn() : Picnn(default_config(Architecture::Type1, 1)) {}

  explicit Picnn(const PicnnConfig& config) : layout_(config), params_(zero_params(layout_)) {}

  Picnn(const PicnnConfig& config, PicnnParams params) : layout_(config), params_(std::move(params)) {
    if (params_.size() != layout_.size()) throw std::invalid_argument("picnn: parameter count does not match config");
  }

  static Picnn initialized(const PicnnConfig& config, std::uint64_t seed,
                           InitScheme scheme = InitScheme::GlorotClamp) {
    PicnnLayout L(config);
    return Picnn(config, init_params(L, seed, scheme));
  }

  const PicnnConfig& config() const { return layout_.config(); }
  const PicnnLayout& layout() const { return layout_; }
  const PicnnParams& params() const { return params_; }
  PicnnParams& params() { return params_; }
  std::size_t num_params() const { return params_.size(); }
  std::span<const double> theta() const { return params_.values; }

  double forward(std::span<const double> x, std::span<const double> y) const {
    check_dims(x, y);
    YCache<double> yc(layout_);
    XCache<double> xc(layout_);
    parameter_stage<double>(layout_, theta(), y, yc);
    return convex_stage<double>(layout_, theta(), yc, x, xc);
  }

  EvalResult evaluate(std::span<const double> x, std::span<const double> y) const {
    EvalResult r;
    r.grad_x.resize(layout_.x_dim());
    r.grad_y.resize(layout_.y_dim());
    run<double>(x, y, nullptr, nullptr, r.value, {}, r.grad_x, r.grad_y);
    return r;
  }

  std::vector<double> grad_x(std::span<const double> x, std::span<const double> y) const {
    return evaluate(x, y).grad_x;
  }

  /// d(value)/d(theta) for every trainable scalar.
  std::vector<double> grad_params_value(std::span<const double> x, std::span<const double> y) const {
    std::vector<double> g(num_params(), 0.0);
    double v = 0.0;
    run<double>(x, y, nullptr, nullptr, v, g, {}, {});
    return g;
  }

  /// d/d(theta) of (dir . grad_x) by forward-over-reverse: a tangent `dir` in x
  /// is pushed through the reverse parameter-gradient pass.
  std::vector<double> grad_params_of_grad_x_dir(std::span<const double> x, std::span<const double> y,
                                                std::span<const double> dir) const {
    std::vector<Dual> g(num_params());
    Dual v;
    run<Dual>(x, y, dir.data(), nullptr, v, g, {}, {});
    std::vector<double> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i].d;
    return out;
  }

  /// Mixed derivatives d^2 value / (dx_a dtheta), one vector per invariant slot a.
  std::vector<std::vector<double>> grad_params_of_grad_x(std::span<const double> x,
                                                         std::span<const double> y) const {
    std::vector<std::vector<double>> out;
    std::vector<double> dir(layout_.x_dim(), 0.0);
    for (int a = 0; a < layout_.x_dim(); ++a) {
      std::fill(dir.begin(), dir.end(), 0.0);
      dir[a] = 1.0;
      out.push_back(grad_params_of_grad_x_dir(x, y, dir));
    }
    return out;
  }

  /// d/dy_i of grad_x: row i holds d(grad_x)/dy_i.
  std::vector<std::vector<double>> grad_x_dy(std::span<const double> x, std::span<const double> y) const {
    std::vector<std::vector<double>> out;
    std::vector<double> ydir(layout_.y_dim(), 0.0);
    for (int i = 0; i < layout_.y_dim(); ++i) {
      std::fill(ydir.begin(), ydir.end(), 0.0);
      ydir[i] = 1.0;
      std::vector<Dual> gx(layout_.x_dim());
      Dual v;
      run<Dual>(x, y, nullptr, ydir.data(), v, {}, gx, {});
      std::vector<double> row(gx.size());
      for (std::size_t a = 0; a < gx.size(); ++a) row[a] = gx[a].d;
      out.push_back(std::move(row));
    }
    return out;
  }

 private:
  template <class T>
  void run(std::span<const double> x, std::span<const double> y, const double* x_tangent, const double* y_tangent,
           T& value, std::span<T> grad_theta, std::span<T> grad_x, std::span<T> grad_y) const {
    check_dims(x, y);
    std::vector<T> xt(x.size()), yt(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) xt[i] = make<T>(x[i], x_tangent ? x_tangent[i] : 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) yt[i] = make<T>(y[i], y_tangent ? y_tangent[i] : 0.0);
    YCache<T> yc(layout_);
    XCache<T> xc(layout_);
    YAdjoint<T> ya(layout_);
    XScratch<T> s(layout_);
    parameter_stage<T>(layout_, theta(), yt, yc);
    value = convex_stage<T>(layout_, theta(), yc, xt, xc);
    std::vector<T> gx(x.size());
    convex_reverse<T>(layout_, theta(), yc, xc, T(1.0), grad_theta, ya, gx, s);
    if (!grad_x.empty()) std::copy(gx.begin(), gx.end(), grad_x.begin());
    if (!grad_theta.empty() || !grad_y.empty()) parameter_reverse<T>(layout_, theta(), yc, ya, grad_theta, grad_y);
  }

  void check_dims(std::span<const double> x, std::span<const double> y) const {
    if (static_cast<int>(x.size()) != layout_.x_dim() || static_cast<int>(y.size()) != layout_.y_dim()) {
      throw std::invalid_argument("picnn: input dimension mismatch");
    }
  }

  template <class T>
  static T make(double v, double d) {
    if constexpr (std::is_same_v<T, Dual>) {
      return Dual{v, d};
    } else {
      (void)d;
      return v;
    }
  }

  PicnnLayout layout_;
  PicnnParams params_;
};

}  // namespace ppann
