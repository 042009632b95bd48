#pragma once

#include <Eigen/Core>
#include <Eigen/QR>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "scnav/nn/params.hpp"
#include "scnav/random.hpp"

namespace scnav::nn {

/// Orthogonal(-ish) weight init: QR of a Gaussian matrix with column signs
/// fixed by the R diagonal, scaled by `gain`.
inline Eigen::MatrixXd orthogonal_init(int rows, int cols, double gain, RngStream& rng) {
  const int n = std::max(rows, cols);
  const int m = std::min(rows, cols);
  Eigen::MatrixXd a(n, m);
  for (int j = 0; j < m; ++j) {
    for (int i = 0; i < n; ++i) a(i, j) = rng.gaussian();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, m);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(m);
  for (int j = 0; j < m; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  if (rows < cols) return gain * q.transpose();
  return gain * q;
}

inline Eigen::ArrayXd sigmoid(const Eigen::ArrayXd& x) {
  return 1.0 / (1.0 + (-x).exp());
}

/// Per-step activation record of the policy network; enough to replay the
/// exact reverse-mode and forward-mode passes.
struct StepTrace {
  Eigen::VectorXd input;
  std::vector<Eigen::VectorXd> feat;  // post-tanh feature activations
  Eigen::VectorXd gate_i, gate_f, gate_g, gate_o;
  Eigen::VectorXd c, tanh_c, h;
  Eigen::Vector2d mu;
};

/// Stochastic recurrent policy: an MLP feature network (tanh) feeding an LSTM
/// whose output maps affinely to the mean of a 2-D Gaussian over actions. The
/// covariance sigma^2 I is externally scheduled and not part of the
/// parameters.
class GaussianPolicy {
 public:
  static constexpr int kActionDim = 2;

  GaussianPolicy(int obs_dim, std::vector<int> feature_units, int lstm_units)
      : obs_dim_(obs_dim), lstm_units_(lstm_units), feature_units_(std::move(feature_units)) {
    if (obs_dim <= 0 || lstm_units <= 0 || feature_units_.empty()) {
      throw std::invalid_argument("GaussianPolicy: invalid architecture");
    }
    int prev = obs_dim_;
    for (std::size_t l = 0; l < feature_units_.size(); ++l) {
      const int units = feature_units_[l];
      if (units <= 0) throw std::invalid_argument("GaussianPolicy: invalid layer width");
      feat_w_.push_back(pack_.add("policy/feature" + std::to_string(l) + "/w", units, prev));
      feat_b_.push_back(pack_.add("policy/feature" + std::to_string(l) + "/b", units, 1));
      prev = units;
    }
    const int h = lstm_units_;
    wx_ = pack_.add("policy/lstm/w_x", 4 * h, prev);
    wh_ = pack_.add("policy/lstm/w_h", 4 * h, h);
    b_ = pack_.add("policy/lstm/b", 4 * h, 1);
    wy_ = pack_.add("policy/out/w", kActionDim, h);
    by_ = pack_.add("policy/out/b", kActionDim, 1);
    pack_.finalize();
  }

  int obs_dim() const { return obs_dim_; }
  int lstm_units() const { return lstm_units_; }
  const std::vector<int>& feature_units() const { return feature_units_; }
  Eigen::Index param_count() const { return pack_.total(); }

  ParamPack& params() { return pack_; }
  const ParamPack& params() const { return pack_; }
  Eigen::VectorXd& flat() { return pack_.flat(); }
  const Eigen::VectorXd& flat() const { return pack_.flat(); }

  /// Orthogonal feature and recurrent weights, zero biases, and a small-gain
  /// output map so the initial action mean stays near zero.
  void init_weights(RngStream& rng, double output_gain = 0.01) {
    int prev = obs_dim_;
    for (std::size_t l = 0; l < feature_units_.size(); ++l) {
      pack_.mat(feat_w_[l]) = orthogonal_init(feature_units_[l], prev, 1.0, rng);
      pack_.vec(feat_b_[l]).setZero();
      prev = feature_units_[l];
    }
    const int h = lstm_units_;
    for (int gate = 0; gate < 4; ++gate) {
      pack_.mat(wx_).middleRows(gate * h, h) = orthogonal_init(h, prev, 1.0, rng);
      pack_.mat(wh_).middleRows(gate * h, h) = orthogonal_init(h, h, 1.0, rng);
    }
    pack_.vec(b_).setZero();
    pack_.mat(wy_) = orthogonal_init(kActionDim, h, output_gain, rng);
    pack_.vec(by_).setZero();
  }

  struct RecurrentState {
    Eigen::VectorXd h;
    Eigen::VectorXd c;
  };

  /// Hidden and cell vectors are zeroed at every episode start.
  RecurrentState initial_state() const {
    return {Eigen::VectorXd::Zero(lstm_units_), Eigen::VectorXd::Zero(lstm_units_)};
  }

  /// Single rollout step: advances the recurrent state and returns the action
  /// mean. Fails fast on non-finite output.
  Eigen::Vector2d step(const Eigen::VectorXd& input, RecurrentState& state) const {
    StepTrace t;
    forward_step(input, state.h, state.c, t);
    state.h = t.h;
    state.c = t.c;
    if (!t.mu.allFinite()) {
      throw std::runtime_error("GaussianPolicy: non-finite action mean");
    }
    return t.mu;
  }

  /// Whole-episode forward pass recording every intermediate activation.
  std::vector<StepTrace> forward_trace(const std::vector<Eigen::VectorXd>& inputs) const {
    std::vector<StepTrace> trace(inputs.size());
    Eigen::VectorXd h = Eigen::VectorXd::Zero(lstm_units_);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(lstm_units_);
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      forward_step(inputs[t], h, c, trace[t]);
      h = trace[t].h;
      c = trace[t].c;
    }
    return trace;
  }

  /// Whole-episode forward pass keeping only the action means.
  std::vector<Eigen::Vector2d> forward_mu(const std::vector<Eigen::VectorXd>& inputs) const {
    std::vector<Eigen::Vector2d> mu(inputs.size());
    RecurrentState state = initial_state();
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      mu[t] = step(inputs[t], state);
    }
    return mu;
  }

  /// Backpropagation through the full episode; accumulates parameter
  /// gradients into `grad` (layout of flat()).
  void backward(const std::vector<StepTrace>& trace,
                const std::vector<Eigen::Vector2d>& dmu, Eigen::VectorXd& grad) const {
    if (trace.size() != dmu.size()) {
      throw std::invalid_argument("GaussianPolicy::backward: cotangent count mismatch");
    }
    MutablePackView g(pack_, grad);
    const int hdim = lstm_units_;
    const auto w_x = pack_.mat(wx_);
    const auto w_h = pack_.mat(wh_);
    const auto w_y = pack_.mat(wy_);

    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(hdim);
    Eigen::VectorXd dh = Eigen::VectorXd::Zero(hdim);
    Eigen::VectorXd dc = Eigen::VectorXd::Zero(hdim);
    for (int t = static_cast<int>(trace.size()) - 1; t >= 0; --t) {
      const StepTrace& s = trace[static_cast<std::size_t>(t)];
      const bool first = (t == 0);
      const Eigen::VectorXd& h_prev = first ? zero : trace[static_cast<std::size_t>(t - 1)].h;
      const Eigen::VectorXd& c_prev = first ? zero : trace[static_cast<std::size_t>(t - 1)].c;

      // output map
      g.mat(wy_) += dmu[static_cast<std::size_t>(t)] * s.h.transpose();
      g.vec(by_) += dmu[static_cast<std::size_t>(t)];
      dh += w_y.transpose() * dmu[static_cast<std::size_t>(t)];

      // LSTM cell
      const Eigen::ArrayXd do_ = dh.array() * s.tanh_c.array();
      dc.array() += dh.array() * s.gate_o.array() * (1.0 - s.tanh_c.array().square());
      const Eigen::ArrayXd di = dc.array() * s.gate_g.array();
      const Eigen::ArrayXd df = dc.array() * c_prev.array();
      const Eigen::ArrayXd dg = dc.array() * s.gate_i.array();
      Eigen::VectorXd dgates(4 * hdim);
      dgates.segment(0, hdim) = di * s.gate_i.array() * (1.0 - s.gate_i.array());
      dgates.segment(hdim, hdim) = df * s.gate_f.array() * (1.0 - s.gate_f.array());
      dgates.segment(2 * hdim, hdim) = dg * (1.0 - s.gate_g.array().square());
      dgates.segment(3 * hdim, hdim) = do_ * s.gate_o.array() * (1.0 - s.gate_o.array());

      const Eigen::VectorXd& x_lstm = s.feat.back();
      g.mat(wx_) += dgates * x_lstm.transpose();
      g.mat(wh_) += dgates * h_prev.transpose();
      g.vec(b_) += dgates;

      Eigen::VectorXd da = w_x.transpose() * dgates;
      dc = (dc.array() * s.gate_f.array()).matrix();
      dh = w_h.transpose() * dgates;

      // feature MLP
      for (int l = static_cast<int>(feature_units_.size()) - 1; l >= 0; --l) {
        const Eigen::VectorXd& act = s.feat[static_cast<std::size_t>(l)];
        const Eigen::VectorXd& below = (l == 0) ? s.input : s.feat[static_cast<std::size_t>(l - 1)];
        const Eigen::VectorXd dz = (da.array() * (1.0 - act.array().square())).matrix();
        g.mat(feat_w_[static_cast<std::size_t>(l)]) += dz * below.transpose();
        g.vec(feat_b_[static_cast<std::size_t>(l)]) += dz;
        da = pack_.mat(feat_w_[static_cast<std::size_t>(l)]).transpose() * dz;
      }
    }
  }

  /// Forward-mode directional derivative: tangent of every action mean along
  /// the parameter direction `tangent`.
  std::vector<Eigen::Vector2d> jvp(const std::vector<StepTrace>& trace,
                                   const Eigen::VectorXd& tangent) const {
    PackView v(pack_, tangent);
    const int hdim = lstm_units_;
    const auto w_x = pack_.mat(wx_);
    const auto w_h = pack_.mat(wh_);
    const auto w_y = pack_.mat(wy_);

    std::vector<Eigen::Vector2d> out(trace.size());
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(hdim);
    Eigen::VectorXd th = Eigen::VectorXd::Zero(hdim);  // tangent of h
    Eigen::VectorXd tc = Eigen::VectorXd::Zero(hdim);  // tangent of c
    for (std::size_t t = 0; t < trace.size(); ++t) {
      const StepTrace& s = trace[t];
      const bool first = (t == 0);
      const Eigen::VectorXd& h_prev = first ? zero : trace[t - 1].h;
      const Eigen::VectorXd& c_prev = first ? zero : trace[t - 1].c;

      // feature MLP tangents (input tangent is zero)
      Eigen::VectorXd ta = Eigen::VectorXd::Zero(s.input.size());
      for (std::size_t l = 0; l < feature_units_.size(); ++l) {
        const Eigen::VectorXd& below = (l == 0) ? s.input : s.feat[l - 1];
        Eigen::VectorXd tz = v.mat(feat_w_[l]) * below + v.vec(feat_b_[l]);
        tz += pack_.mat(feat_w_[l]) * ta;
        ta = (tz.array() * (1.0 - s.feat[l].array().square())).matrix();
      }

      Eigen::VectorXd tgates = v.mat(wx_) * s.feat.back() + w_x * ta +
                               v.mat(wh_) * h_prev + w_h * th + v.vec(b_);
      const Eigen::ArrayXd ti =
          s.gate_i.array() * (1.0 - s.gate_i.array()) * tgates.segment(0, hdim).array();
      const Eigen::ArrayXd tf =
          s.gate_f.array() * (1.0 - s.gate_f.array()) * tgates.segment(hdim, hdim).array();
      const Eigen::ArrayXd tg =
          (1.0 - s.gate_g.array().square()) * tgates.segment(2 * hdim, hdim).array();
      const Eigen::ArrayXd to =
          s.gate_o.array() * (1.0 - s.gate_o.array()) * tgates.segment(3 * hdim, hdim).array();

      tc = (tf * c_prev.array() + s.gate_f.array() * tc.array() + ti * s.gate_g.array() +
            s.gate_i.array() * tg)
               .matrix();
      th = (to * s.tanh_c.array() +
            s.gate_o.array() * (1.0 - s.tanh_c.array().square()) * tc.array())
               .matrix();

      out[t] = v.mat(wy_) * s.h + w_y * th + v.vec(by_);
    }
    return out;
  }

 private:
  void forward_step(const Eigen::VectorXd& input, const Eigen::VectorXd& h_prev,
                    const Eigen::VectorXd& c_prev, StepTrace& t) const {
    if (input.size() != obs_dim_) {
      throw std::invalid_argument("GaussianPolicy: input dimension mismatch");
    }
    t.input = input;
    t.feat.clear();
    t.feat.reserve(feature_units_.size());
    const Eigen::VectorXd* below = &t.input;
    for (std::size_t l = 0; l < feature_units_.size(); ++l) {
      t.feat.emplace_back(
          (pack_.mat(feat_w_[l]) * (*below) + pack_.vec(feat_b_[l])).array().tanh().matrix());
      below = &t.feat.back();
    }
    const int hdim = lstm_units_;
    const Eigen::VectorXd gates = pack_.mat(wx_) * (*below) + pack_.mat(wh_) * h_prev + pack_.vec(b_);
    t.gate_i = sigmoid(gates.segment(0, hdim).array()).matrix();
    t.gate_f = sigmoid(gates.segment(hdim, hdim).array()).matrix();
    t.gate_g = gates.segment(2 * hdim, hdim).array().tanh().matrix();
    t.gate_o = sigmoid(gates.segment(3 * hdim, hdim).array()).matrix();
    t.c = (t.gate_f.array() * c_prev.array() + t.gate_i.array() * t.gate_g.array()).matrix();
    t.tanh_c = t.c.array().tanh().matrix();
    t.h = (t.gate_o.array() * t.tanh_c.array()).matrix();
    t.mu = pack_.mat(wy_) * t.h + pack_.vec(by_);
  }

  int obs_dim_;
  int lstm_units_;
  std::vector<int> feature_units_;
  std::vector<int> feat_w_, feat_b_;
  int wx_ = -1, wh_ = -1, b_ = -1, wy_ = -1, by_ = -1;
  ParamPack pack_;
};

/// Feedforward value estimator: tanh MLP from the (scaled) state to a scalar.
class ValueNet {
 public:
  ValueNet(int state_dim, std::vector<int> units)
      : state_dim_(state_dim), units_(std::move(units)) {
    if (state_dim <= 0 || units_.empty()) {
      throw std::invalid_argument("ValueNet: invalid architecture");
    }
    int prev = state_dim_;
    for (std::size_t l = 0; l < units_.size(); ++l) {
      if (units_[l] <= 0) throw std::invalid_argument("ValueNet: invalid layer width");
      w_.push_back(pack_.add("value/layer" + std::to_string(l) + "/w", units_[l], prev));
      b_.push_back(pack_.add("value/layer" + std::to_string(l) + "/b", units_[l], 1));
      prev = units_[l];
    }
    wy_ = pack_.add("value/out/w", 1, prev);
    by_ = pack_.add("value/out/b", 1, 1);
    pack_.finalize();
  }

  int state_dim() const { return state_dim_; }
  Eigen::Index param_count() const { return pack_.total(); }
  ParamPack& params() { return pack_; }
  const ParamPack& params() const { return pack_; }
  Eigen::VectorXd& flat() { return pack_.flat(); }
  const Eigen::VectorXd& flat() const { return pack_.flat(); }

  void init_weights(RngStream& rng) {
    int prev = state_dim_;
    for (std::size_t l = 0; l < units_.size(); ++l) {
      pack_.mat(w_[l]) = orthogonal_init(units_[l], prev, 1.0, rng);
      pack_.vec(b_[l]).setZero();
      prev = units_[l];
    }
    pack_.mat(wy_) = orthogonal_init(1, prev, 1.0, rng);
    pack_.vec(by_).setZero();
  }

  struct Trace {
    Eigen::VectorXd input;
    std::vector<Eigen::VectorXd> acts;
    double out = 0.0;
  };

  double forward(const Eigen::VectorXd& input, Trace* trace) const {
    if (input.size() != state_dim_) {
      throw std::invalid_argument("ValueNet: input dimension mismatch");
    }
    Eigen::VectorXd a = input;
    if (trace) {
      trace->input = input;
      trace->acts.clear();
    }
    for (std::size_t l = 0; l < units_.size(); ++l) {
      a = (pack_.mat(w_[l]) * a + pack_.vec(b_[l])).array().tanh().matrix();
      if (trace) trace->acts.push_back(a);
    }
    const double out = (pack_.mat(wy_) * a)(0) + pack_.vec(by_)(0);
    if (trace) trace->out = out;
    if (!std::isfinite(out)) throw std::runtime_error("ValueNet: non-finite output");
    return out;
  }

  double value(const Eigen::VectorXd& input) const { return forward(input, nullptr); }

  void backward(const Trace& trace, double dout, Eigen::VectorXd& grad) const {
    MutablePackView g(pack_, grad);
    g.mat(wy_) += dout * trace.acts.back().transpose();
    g.vec(by_)(0) += dout;
    Eigen::VectorXd da = pack_.mat(wy_).transpose() * Eigen::VectorXd::Constant(1, dout);
    for (int l = static_cast<int>(units_.size()) - 1; l >= 0; --l) {
      const Eigen::VectorXd& act = trace.acts[static_cast<std::size_t>(l)];
      const Eigen::VectorXd& below =
          (l == 0) ? trace.input : trace.acts[static_cast<std::size_t>(l - 1)];
      const Eigen::VectorXd dz = (da.array() * (1.0 - act.array().square())).matrix();
      g.mat(w_[static_cast<std::size_t>(l)]) += dz * below.transpose();
      g.vec(b_[static_cast<std::size_t>(l)]) += dz;
      da = pack_.mat(w_[static_cast<std::size_t>(l)]).transpose() * dz;
    }
  }

 private:
  int state_dim_;
  std::vector<int> units_;
  std::vector<int> w_, b_;
  int wy_ = -1, by_ = -1;
  ParamPack pack_;
};

}  // namespace scnav::nn
