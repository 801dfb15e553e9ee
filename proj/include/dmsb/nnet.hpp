#pragma once

// Residual MLP policy z(t, m) with a sinusoidal time embedding, hand-written
// reverse-mode parameter gradients, AdamW and a parameter EMA.
//
// Layer list (W = hidden_width, E = time_embed_dim, d = state_dim):
//   input   : [m (2d) | embed(t) (E)]  -> Linear(2d + E, W)
//   block j : h <- h + Linear(W, W)(silu(Linear(W, W)(silu(h))))
//   output  : Linear(W, d)(silu(h)), zero-initialized
//
// Batches are row-major: one sample per row.

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dmsb/errors.hpp"
#include "dmsb/random.hpp"

namespace dmsb {

template <class Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { silu };
enum class Direction { forward, backward };

inline const char* to_string(Direction d) { return d == Direction::forward ? "forward" : "backward"; }

struct ArchConfig {
  int state_dim = 2;
  int hidden_width = 128;
  int num_residual_blocks = 2;
  int time_embed_dim = 64;
  Activation activation = Activation::silu;
  std::uint64_t param_init_seed = 0;

  int input_dim() const { return 2 * state_dim; }
  int output_dim() const { return state_dim; }

  void validate() const {
    if (state_dim < 1) throw ConfigError("state_dim must be >= 1");
    if (hidden_width < 1) throw ConfigError("hidden_width must be >= 1");
    if (num_residual_blocks < 1) throw ConfigError("num_residual_blocks must be >= 1");
    if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
      throw ConfigError("time_embed_dim must be even and >= 2");
  }

  std::size_t param_count() const {
    const std::size_t w = hidden_width, in = input_dim() + time_embed_dim, out = output_dim();
    return (in * w + w) + num_residual_blocks * 2 * (w * w + w) + (w * out + out);
  }

  bool operator==(const ArchConfig&) const = default;
};

/// Offsets of every tensor inside the flat parameter vector.
struct ParamLayout {
  struct Linear {
    std::size_t weight, bias, rows, cols;  // weight is rows x cols, row-major
  };
  Linear input;
  std::vector<Linear> inner, outer;  // per residual block
  Linear output;
  std::size_t total = 0;

  explicit ParamLayout(const ArchConfig& a) {
    auto add = [this](std::size_t rows, std::size_t cols) {
      Linear l{total, total + rows * cols, rows, cols};
      total += rows * cols + rows;
      return l;
    };
    const std::size_t w = a.hidden_width;
    input = add(w, a.input_dim() + a.time_embed_dim);
    for (int b = 0; b < a.num_residual_blocks; ++b) {
      inner.push_back(add(w, w));
      outer.push_back(add(w, w));
    }
    output = add(a.output_dim(), w);
  }
};

struct AdamWConfig {
  double lr = 2e-4;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Parameter-sized buffers. Eigen's vectorized kernels peel differently depending
// on the runtime alignment of their operands, so maps into these buffers need a
// fixed alignment for bit-reproducible results.
template <class Scalar>
using ParamVector = std::vector<Scalar, Eigen::aligned_allocator<Scalar>>;

template <class Scalar>
struct AdamWState {
  ParamVector<Scalar> first_moment;
  ParamVector<Scalar> second_moment;
  std::int64_t step = 0;
};

template <class Scalar>
bool all_finite(std::span<const Scalar> xs) {
  for (Scalar x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

/// Decoupled-weight-decay Adam update in place. Throws on a non-finite gradient
/// before touching any state.
template <class Scalar>
void adamw_update(std::span<Scalar> params, std::span<const Scalar> grad, AdamWState<Scalar>& st,
                  const AdamWConfig& hp) {
  if (grad.size() != params.size() || st.first_moment.size() != params.size() ||
      st.second_moment.size() != params.size())
    throw DimensionError("adamw_update: parameter, gradient and moment sizes differ");
  if (!all_finite(grad)) throw NonFiniteError("adamw_update: non-finite gradient");

  ++st.step;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double p = params[i];
    const double g = grad[i];
    p -= hp.lr * hp.weight_decay * p;
    const double m = hp.beta1 * st.first_moment[i] + (1.0 - hp.beta1) * g;
    const double v = hp.beta2 * st.second_moment[i] + (1.0 - hp.beta2) * g * g;
    st.first_moment[i] = static_cast<Scalar>(m);
    st.second_moment[i] = static_cast<Scalar>(v);
    p -= hp.lr * (m / bc1) / (std::sqrt(v / bc2) + hp.eps);
    params[i] = static_cast<Scalar>(p);
  }
}

/// ema <- decay * ema + (1 - decay) * params
template <class Scalar>
void ema_update(std::span<Scalar> ema, std::span<const Scalar> params, double decay) {
  for (std::size_t i = 0; i < ema.size(); ++i)
    ema[i] = static_cast<Scalar>(decay * ema[i] + (1.0 - decay) * params[i]);
}

namespace detail {

template <class Derived>
auto silu(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.unaryExpr([](S v) { return v / (S(1) + std::exp(-v)); });
}

template <class Derived>
auto silu_grad(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.unaryExpr([](S v) {
    const S s = S(1) / (S(1) + std::exp(-v));
    return s * (S(1) + v * (S(1) - s));
  });
}

inline constexpr double kMinTimeFrequency = 0.5;
inline constexpr double kMaxTimeFrequency = 64.0;

}  // namespace detail

/// Anything that maps (per-row times, phase batch) to a control batch.
template <class P, class Scalar>
concept ControlPolicy = requires(const P& p, std::span<const Scalar> t, const RowMatrix<Scalar>& m,
                                 bool use_ema) {
  { p.eval(t, m, use_ema) } -> std::convertible_to<RowMatrix<Scalar>>;
};

template <class Scalar>
class PolicyNet {
 public:
  using Matrix = RowMatrix<Scalar>;

  PolicyNet(const ArchConfig& arch, Direction direction, double ema_decay = 0.999)
      : arch_(arch), layout_((arch.validate(), arch)), direction_(direction), ema_decay_(ema_decay) {
    if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw ConfigError("ema_decay must lie in (0, 1)");
    params_.assign(layout_.total, Scalar(0));
    Rng rng = Rng(arch.param_init_seed).split("param-init");
    auto fill = [&](const ParamLayout::Linear& l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(l.cols));
      for (std::size_t i = 0; i < l.rows * l.cols + l.rows; ++i)
        params_[l.weight + i] = static_cast<Scalar>((2.0 * rng.uniform() - 1.0) * bound);
    };
    fill(layout_.input);
    for (std::size_t b = 0; b < layout_.inner.size(); ++b) {
      fill(layout_.inner[b]);
      fill(layout_.outer[b]);
    }
    // output layer stays zero: the initial policy is z == 0
    ema_params_ = params_;
    opt_.first_moment.assign(layout_.total, Scalar(0));
    opt_.second_moment.assign(layout_.total, Scalar(0));
  }

  const ArchConfig& arch() const { return arch_; }
  const ParamLayout& layout() const { return layout_; }
  Direction direction() const { return direction_; }
  double ema_decay() const { return ema_decay_; }
  std::size_t param_count() const { return params_.size(); }

  std::span<const Scalar> params() const { return params_; }
  std::span<Scalar> mutable_params() { return params_; }
  std::span<const Scalar> ema_params() const { return ema_params_; }
  std::span<Scalar> mutable_ema_params() { return ema_params_; }
  const AdamWState<Scalar>& opt_state() const { return opt_; }
  AdamWState<Scalar>& mutable_opt_state() { return opt_; }

  Matrix eval(std::span<const Scalar> t, const Matrix& m, bool use_ema = false) const {
    return run(use_ema ? ema_params_ : params_, t, m, nullptr);
  }

  /// Gradient of sum(upstream .* eval(t, m)) with respect to the raw parameters.
  ParamVector<Scalar> backprop(std::span<const Scalar> t, const Matrix& m, const Matrix& upstream) const {
    Trace tr;
    run(params_, t, m, &tr);
    return backward(tr, upstream);
  }

  /// Evaluates the raw parameters and returns the gradient for `upstream_fn(output)`.
  template <class UpstreamFn>
  ParamVector<Scalar> eval_and_backprop(std::span<const Scalar> t, const Matrix& m, Matrix& out,
                                        UpstreamFn&& upstream_fn) const {
    Trace tr;
    out = run(params_, t, m, &tr);
    const Matrix upstream = upstream_fn(static_cast<const Matrix&>(out));
    return backward(tr, upstream);
  }

  void adamw_step(std::span<const Scalar> grad, const AdamWConfig& hp) {
    adamw_update<Scalar>(params_, grad, opt_, hp);
    ema_update<Scalar>(ema_params_, params_, ema_decay_);
  }

  template <class Other>
  PolicyNet<Other> cast() const {
    PolicyNet<Other> out(arch_, direction_, ema_decay_);
    auto copy = [](std::span<const Scalar> src, std::span<Other> dst) {
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<Other>(src[i]);
    };
    copy(params_, out.mutable_params());
    copy(ema_params_, out.mutable_ema_params());
    auto& o = out.mutable_opt_state();
    copy(opt_.first_moment, o.first_moment);
    copy(opt_.second_moment, o.second_moment);
    o.step = opt_.step;
    return out;
  }

 private:
  struct Trace {
    Matrix input;
    std::vector<Matrix> hidden;  // residual stream before each block, plus the final one
    std::vector<Matrix> inner;   // pre-activation inside each block
  };

  using ConstMap = Eigen::Map<const Matrix>;
  using ConstRow = Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>;
  using Map = Eigen::Map<Matrix>;
  using Row = Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>;

  static ConstMap weight(std::span<const Scalar> p, const ParamLayout::Linear& l) {
    return ConstMap(p.data() + l.weight, l.rows, l.cols);
  }
  static ConstRow bias(std::span<const Scalar> p, const ParamLayout::Linear& l) {
    return ConstRow(p.data() + l.bias, l.rows);
  }

  Matrix embed_input(std::span<const Scalar> t, const Matrix& m) const {
    const Eigen::Index batch = m.rows();
    const int half = arch_.time_embed_dim / 2;
    Matrix a(batch, arch_.input_dim() + arch_.time_embed_dim);
    a.leftCols(arch_.input_dim()) = m;
    const double ratio = detail::kMaxTimeFrequency / detail::kMinTimeFrequency;
    for (int k = 0; k < half; ++k) {
      const double w = detail::kMinTimeFrequency *
                       (half > 1 ? std::pow(ratio, static_cast<double>(k) / (half - 1)) : 1.0);
      for (Eigen::Index i = 0; i < batch; ++i) {
        const double arg = w * static_cast<double>(t[i]);
        a(i, arch_.input_dim() + k) = static_cast<Scalar>(std::sin(arg));
        a(i, arch_.input_dim() + half + k) = static_cast<Scalar>(std::cos(arg));
      }
    }
    return a;
  }

  Matrix run(std::span<const Scalar> p, std::span<const Scalar> t, const Matrix& m, Trace* tr) const {
    if (m.cols() != arch_.input_dim())
      throw DimensionError("policy input has " + std::to_string(m.cols()) + " columns, expected " +
                           std::to_string(arch_.input_dim()));
    if (static_cast<Eigen::Index>(t.size()) != m.rows())
      throw DimensionError("time batch size differs from state batch size");

    Matrix a = embed_input(t, m);
    Matrix h = a * weight(p, layout_.input).transpose();
    h.rowwise() += bias(p, layout_.input);
    if (tr) {
      tr->input = std::move(a);
      tr->hidden.clear();
      tr->inner.clear();
    }
    for (std::size_t b = 0; b < layout_.inner.size(); ++b) {
      Matrix u = detail::silu(h) * weight(p, layout_.inner[b]).transpose();
      u.rowwise() += bias(p, layout_.inner[b]);
      Matrix y = detail::silu(u) * weight(p, layout_.outer[b]).transpose();
      y.rowwise() += bias(p, layout_.outer[b]);
      if (tr) {
        tr->hidden.push_back(h);
        tr->inner.push_back(std::move(u));
      }
      h += y;
    }
    Matrix out = detail::silu(h) * weight(p, layout_.output).transpose();
    out.rowwise() += bias(p, layout_.output);
    if (tr) tr->hidden.push_back(std::move(h));
    return out;
  }

  ParamVector<Scalar> backward(const Trace& tr, const Matrix& upstream) const {
    const Eigen::Index batch = tr.input.rows();
    if (upstream.rows() != batch || upstream.cols() != arch_.output_dim())
      throw DimensionError("upstream gradient shape does not match the policy output");
    if (!all_finite(std::span<const Scalar>(upstream.data(), static_cast<std::size_t>(upstream.size()))))
      throw NonFiniteError("backprop: non-finite upstream gradient");

    ParamVector<Scalar> grad(layout_.total, Scalar(0));
    auto gw = [&](const ParamLayout::Linear& l) { return Map(grad.data() + l.weight, l.rows, l.cols); };
    auto gb = [&](const ParamLayout::Linear& l) { return Row(grad.data() + l.bias, l.rows); };
    std::span<const Scalar> p = params_;

    const Matrix& top = tr.hidden.back();
    gw(layout_.output).noalias() = upstream.transpose() * detail::silu(top);
    gb(layout_.output) = upstream.colwise().sum();
    Matrix dh = (upstream * weight(p, layout_.output)).cwiseProduct(detail::silu_grad(top));

    for (std::size_t b = layout_.inner.size(); b-- > 0;) {
      const Matrix& h = tr.hidden[b];
      const Matrix& u = tr.inner[b];
      gw(layout_.outer[b]).noalias() = dh.transpose() * detail::silu(u);
      gb(layout_.outer[b]) = dh.colwise().sum();
      Matrix du = (dh * weight(p, layout_.outer[b])).cwiseProduct(detail::silu_grad(u));
      gw(layout_.inner[b]).noalias() = du.transpose() * detail::silu(h);
      gb(layout_.inner[b]) = du.colwise().sum();
      dh += (du * weight(p, layout_.inner[b])).cwiseProduct(detail::silu_grad(h));
    }
    gw(layout_.input).noalias() = dh.transpose() * tr.input;
    gb(layout_.input) = dh.colwise().sum();
    return grad;
  }

  ArchConfig arch_;
  ParamLayout layout_;
  Direction direction_;
  double ema_decay_;
  ParamVector<Scalar> params_;
  ParamVector<Scalar> ema_params_;
  AdamWState<Scalar> opt_;
};

/// Deterministic initialization from `arch.param_init_seed`.
template <class Scalar = float>
PolicyNet<Scalar> net_init(const ArchConfig& arch, Direction direction, double ema_decay = 0.999) {
  return PolicyNet<Scalar>(arch, direction, ema_decay);
}

}  // namespace dmsb
