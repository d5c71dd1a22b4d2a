#pragma once

// Decoder-only transformer (pre-norm GPT-2 layout) with hand-written
// backpropagation. Parameters live in one flat buffer so the optimizer,
// checkpointing and gradient checking can treat them uniformly.

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

// <resolv.h> defines _res as a macro, which collides with Eigen internals.
#pragma push_macro("_res")
#undef _res
#include <Eigen/Dense>
#pragma pop_macro("_res")
#include <json.hpp>

#include "trackfill/error.hpp"
#include "trackfill/predictor.hpp"
#include "trackfill/vocab.hpp"

namespace trackfill {

struct ModelConfig {
  int layers = 2;
  int heads = 4;
  int embed_dim = 128;
  int window = 512;
  int ff_dim = 512;
  double learning_rate = 3e-3;
  int batch = 8;
  int steps = 2000;
  std::uint64_t seed = 0;
  double grad_clip = 1.0;
  /// Stop once the mean loss over the whole dataset falls below this value
  /// (checked every `eval_every` steps). Zero disables early stopping.
  double target_loss = 0.0;
  int eval_every = 50;

  /// The published large configuration; accepted but never trained here.
  static ModelConfig large() {
    ModelConfig c;
    c.layers = 6;
    c.heads = 8;
    c.embed_dim = 512;
    c.window = 2048;
    c.ff_dim = 2048;
    return c;
  }

  void check() const {
    if (layers <= 0 || heads <= 0 || embed_dim <= 0 || window <= 0 || ff_dim <= 0) {
      throw Error(ErrorCode::InvalidConfig, "model dimensions must be positive");
    }
    if (embed_dim % heads != 0) throw Error(ErrorCode::InvalidConfig, "embed_dim must be divisible by heads");
    if (learning_rate < 0.0) throw Error(ErrorCode::InvalidConfig, "learning_rate must be nonnegative");
    if (batch <= 0 || steps < 0) throw Error(ErrorCode::InvalidConfig, "batch must be positive, steps nonnegative");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"layers", c.layers},       {"heads", c.heads},
          {"embed_dim", c.embed_dim}, {"window", c.window},
          {"ff_dim", c.ff_dim},       {"learning_rate", c.learning_rate},
          {"batch", c.batch},         {"steps", c.steps},
          {"seed", c.seed},           {"grad_clip", c.grad_clip},
          {"target_loss", c.target_loss}, {"eval_every", c.eval_every}};
}

/// Missing keys keep their defaults so a config file may list only overrides.
inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.window = j.value("window", c.window);
  c.ff_dim = j.value("ff_dim", c.ff_dim);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch = j.value("batch", c.batch);
  c.steps = j.value("steps", c.steps);
  c.seed = j.value("seed", c.seed);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.target_loss = j.value("target_loss", c.target_loss);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.check();
  return c;
}

template <typename T>
class Transformer final : public SequencePredictor {
 public:
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
  using MatMap = Eigen::Map<Mat>;
  using ConstMatMap = Eigen::Map<const Mat>;
  using VecMap = Eigen::Map<RowVec>;
  using ConstVecMap = Eigen::Map<const RowVec>;

  struct TensorInfo {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t size() const { return rows * cols; }
  };

  explicit Transformer(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.check();
    layout();
    params_.assign(total_, T(0));
    std::mt19937_64 rng(cfg_.seed);
    std::normal_distribution<double> normal(0.0, 0.02);
    for (const auto& t : tensors_) {
      auto p = tensor(t);
      const bool gain = t.name.ends_with("_g");
      const bool weight = t.name.starts_with("wte") || t.name.starts_with("wpe") || t.name.ends_with(".wqkv") ||
                          t.name.ends_with(".wo") || t.name.ends_with(".w1") || t.name.ends_with(".w2");
      for (auto& v : p) v = gain ? T(1) : weight ? static_cast<T>(normal(rng)) : T(0);
    }
    // wout and bout stay zero: the untrained model predicts the uniform distribution.
  }

  const ModelConfig& config() const { return cfg_; }
  std::span<T> parameters() { return params_; }
  std::span<const T> parameters() const { return params_; }
  std::size_t parameter_count() const { return total_; }
  const std::vector<TensorInfo>& tensors() const { return tensors_; }

  std::span<T> tensor(const TensorInfo& t) { return std::span<T>(params_).subspan(t.offset, t.size()); }

  /// Re-draws every parameter from N(0, std^2), gains around 1.
  template <typename Rng>
  void randomize(Rng& rng, double std) {
    std::normal_distribution<double> normal(0.0, std);
    for (const auto& t : tensors_) {
      const bool gain = t.name.ends_with("_g");
      for (auto& v : tensor(t)) v = static_cast<T>((gain ? 1.0 : 0.0) + normal(rng));
    }
  }

  std::size_t window() const override { return static_cast<std::size_t>(cfg_.window); }
  std::string name() const override {
    return "transformer-" + std::to_string(cfg_.layers) + "x" + std::to_string(cfg_.embed_dim);
  }

  /// Logits for every position of `ids`: row i scores the token after ids[0..i].
  Mat logits(std::span<const TokenId> ids) const {
    check_context(ids, window());
    Cache cache;
    forward(ids, cache);
    return std::move(cache.logits);
  }

  std::vector<float> predict(std::span<const TokenId> context) const override {
    if (context.empty()) return std::vector<float>(vocab::kSize, 0.0f);
    Mat l = logits(context);
    std::vector<float> out(vocab::kSize);
    for (int i = 0; i < vocab::kSize; ++i) out[i] = static_cast<float>(l(l.rows() - 1, i));
    return out;
  }

  std::unique_ptr<PredictorSession> session() const override;

  /// Summed next-token negative log-likelihood over positions 1..L-1.
  T sequence_loss(std::span<const TokenId> seq) const {
    if (seq.size() < 2) return T(0);
    Cache cache;
    forward(seq.first(seq.size() - 1), cache);
    return nll(cache, seq.subspan(1), nullptr);
  }

  /// Adds scale * d(summed NLL)/d(params) to `grads`; returns the summed NLL.
  T accumulate_gradient(std::span<const TokenId> seq, std::span<T> grads, T scale) const {
    if (grads.size() != total_) throw Error(ErrorCode::InvalidConfig, "gradient buffer size mismatch");
    if (seq.size() < 2) return T(0);
    auto inputs = seq.first(seq.size() - 1);
    check_context(inputs, window());
    Cache cache;
    forward(inputs, cache);
    Mat dlogits;
    T loss = nll(cache, seq.subspan(1), &dlogits);
    dlogits *= scale;
    backward(inputs, cache, dlogits, grads);
    return loss;
  }

 private:
  struct LayerIndex {
    std::size_t ln1_g, ln1_b, wqkv, bqkv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };

  struct LayerCache {
    Mat x_in, ln1, qkv, att, x_mid, ln2, ff_pre, ff_act;
    RowVec ln1_mean, ln1_rstd, ln2_mean, ln2_rstd;
    std::vector<Mat> probs;  // per head, L x L
  };

  struct Cache {
    std::vector<LayerCache> layers;
    Mat x_final, lnf, logits;
    RowVec lnf_mean, lnf_rstd;
  };

  static constexpr T kEps = T(1e-5);

  std::size_t add_tensor(const std::string& name, std::size_t rows, std::size_t cols) {
    tensors_.push_back({name, total_, rows, cols});
    total_ += rows * cols;
    return tensors_.size() - 1;
  }

  void layout() {
    const std::size_t d = cfg_.embed_dim;
    const std::size_t f = cfg_.ff_dim;
    wte_ = add_tensor("wte", vocab::kSize, d);
    wpe_ = add_tensor("wpe", cfg_.window, d);
    for (int l = 0; l < cfg_.layers; ++l) {
      const std::string p = "h" + std::to_string(l);
      LayerIndex li{};
      li.ln1_g = add_tensor(p + ".ln1_g", 1, d);
      li.ln1_b = add_tensor(p + ".ln1_b", 1, d);
      li.wqkv = add_tensor(p + ".wqkv", d, 3 * d);
      li.bqkv = add_tensor(p + ".bqkv", 1, 3 * d);
      li.wo = add_tensor(p + ".wo", d, d);
      li.bo = add_tensor(p + ".bo", 1, d);
      li.ln2_g = add_tensor(p + ".ln2_g", 1, d);
      li.ln2_b = add_tensor(p + ".ln2_b", 1, d);
      li.w1 = add_tensor(p + ".w1", d, f);
      li.b1 = add_tensor(p + ".b1", 1, f);
      li.w2 = add_tensor(p + ".w2", f, d);
      li.b2 = add_tensor(p + ".b2", 1, d);
      layer_index_.push_back(li);
    }
    lnf_g_ = add_tensor("lnf_g", 1, d);
    lnf_b_ = add_tensor("lnf_b", 1, d);
    wout_ = add_tensor("wout", d, vocab::kSize);
    bout_ = add_tensor("bout", 1, vocab::kSize);
  }

  ConstMatMap W(std::size_t i) const {
    const auto& t = tensors_[i];
    return ConstMatMap(params_.data() + t.offset, static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols));
  }
  ConstVecMap V(std::size_t i) const {
    const auto& t = tensors_[i];
    return ConstVecMap(params_.data() + t.offset, static_cast<Eigen::Index>(t.size()));
  }
  MatMap GW(std::span<T> g, std::size_t i) const {
    const auto& t = tensors_[i];
    return MatMap(g.data() + t.offset, static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols));
  }
  VecMap GV(std::span<T> g, std::size_t i) const {
    const auto& t = tensors_[i];
    return VecMap(g.data() + t.offset, static_cast<Eigen::Index>(t.size()));
  }

  static void layer_norm(const Mat& x, const ConstVecMap& g, const ConstVecMap& b, Mat& y, RowVec& mean,
                         RowVec& rstd) {
    const auto n = x.rows();
    const T d = static_cast<T>(x.cols());
    y.resize(n, x.cols());
    mean.resize(n);
    rstd.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      T m = x.row(i).sum() / d;
      T var = (x.row(i).array() - m).square().sum() / d;
      T r = T(1) / std::sqrt(var + kEps);
      mean(i) = m;
      rstd(i) = r;
      y.row(i) = ((x.row(i).array() - m) * r * g.array() + b.array()).matrix();
    }
  }

  /// Returns dx; accumulates dg, db.
  static Mat layer_norm_backward(const Mat& dy, const Mat& x, const RowVec& mean, const RowVec& rstd,
                                 const ConstVecMap& g, VecMap dg, VecMap db) {
    const auto n = x.rows();
    const T d = static_cast<T>(x.cols());
    Mat dx(n, x.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      RowVec xhat = ((x.row(i).array() - mean(i)) * rstd(i)).matrix();
      dg.array() += dy.row(i).array() * xhat.array();
      db += dy.row(i);
      RowVec dxhat = (dy.row(i).array() * g.array()).matrix();
      T mean_dxhat = dxhat.sum() / d;
      T mean_dxhat_xhat = (dxhat.array() * xhat.array()).sum() / d;
      dx.row(i) = (rstd(i) * (dxhat.array() - mean_dxhat - xhat.array() * mean_dxhat_xhat)).matrix();
    }
    return dx;
  }

  static constexpr T kGeluC = T(0.7978845608028654);  // sqrt(2/pi)
  static T gelu(T x) { return T(0.5) * x * (T(1) + std::tanh(kGeluC * (x + T(0.044715) * x * x * x))); }
  static T gelu_grad(T x) {
    T t = std::tanh(kGeluC * (x + T(0.044715) * x * x * x));
    return T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * kGeluC * (T(1) + T(3) * T(0.044715) * x * x);
  }

  void forward(std::span<const TokenId> ids, Cache& c) const {
    const auto L = static_cast<Eigen::Index>(ids.size());
    const Eigen::Index d = cfg_.embed_dim;
    const Eigen::Index hd = d / cfg_.heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(hd));
    auto wte = W(wte_);
    auto wpe = W(wpe_);

    Mat x(L, d);
    for (Eigen::Index i = 0; i < L; ++i) {
      if (!vocab::in_range(ids[i])) throw Error(ErrorCode::InvalidSequence, "token id outside vocabulary");
      x.row(i) = wte.row(ids[i]) + wpe.row(i);
    }

    c.layers.resize(layer_index_.size());
    for (std::size_t l = 0; l < layer_index_.size(); ++l) {
      const auto& li = layer_index_[l];
      auto& lc = c.layers[l];
      lc.x_in = x;
      layer_norm(x, V(li.ln1_g), V(li.ln1_b), lc.ln1, lc.ln1_mean, lc.ln1_rstd);
      lc.qkv.noalias() = lc.ln1 * W(li.wqkv);
      lc.qkv.rowwise() += V(li.bqkv);

      lc.att.setZero(L, d);
      lc.probs.resize(cfg_.heads);
      for (int h = 0; h < cfg_.heads; ++h) {
        auto q = lc.qkv.block(0, h * hd, L, hd);
        auto k = lc.qkv.block(0, d + h * hd, L, hd);
        auto v = lc.qkv.block(0, 2 * d + h * hd, L, hd);
        Mat& p = lc.probs[h];
        p.noalias() = (q * k.transpose()) * scale;
        for (Eigen::Index i = 0; i < L; ++i) {
          T mx = p.row(i).head(i + 1).maxCoeff();
          T sum = 0;
          for (Eigen::Index j = 0; j <= i; ++j) {
            p(i, j) = std::exp(p(i, j) - mx);
            sum += p(i, j);
          }
          p.row(i).head(i + 1) /= sum;
          p.row(i).tail(L - i - 1).setZero();
        }
        lc.att.block(0, h * hd, L, hd).noalias() = p * v;
      }
      lc.x_mid = x;
      lc.x_mid.noalias() += lc.att * W(li.wo);
      lc.x_mid.rowwise() += V(li.bo);

      layer_norm(lc.x_mid, V(li.ln2_g), V(li.ln2_b), lc.ln2, lc.ln2_mean, lc.ln2_rstd);
      lc.ff_pre.noalias() = lc.ln2 * W(li.w1);
      lc.ff_pre.rowwise() += V(li.b1);
      lc.ff_act = lc.ff_pre.unaryExpr([](T v) { return gelu(v); });
      x = lc.x_mid;
      x.noalias() += lc.ff_act * W(li.w2);
      x.rowwise() += V(li.b2);
    }
    c.x_final = x;
    layer_norm(x, V(lnf_g_), V(lnf_b_), c.lnf, c.lnf_mean, c.lnf_rstd);
    c.logits.noalias() = c.lnf * W(wout_);
    c.logits.rowwise() += V(bout_);
  }

  /// Summed NLL of `targets` under cached logits; optionally d(loss)/d(logits).
  static T nll(const Cache& c, std::span<const TokenId> targets, Mat* dlogits) {
    const auto L = c.logits.rows();
    if (dlogits) dlogits->resize(L, c.logits.cols());
    T loss = 0;
    for (Eigen::Index i = 0; i < L; ++i) {
      T mx = c.logits.row(i).maxCoeff();
      auto e = (c.logits.row(i).array() - mx).exp();
      T sum = e.sum();
      loss += std::log(sum) + mx - c.logits(i, targets[i]);
      if (dlogits) {
        dlogits->row(i) = (e / sum).matrix();
        (*dlogits)(i, targets[i]) -= T(1);
      }
    }
    return loss;
  }

  void backward(std::span<const TokenId> ids, const Cache& c, const Mat& dlogits, std::span<T> g) const {
    const auto L = static_cast<Eigen::Index>(ids.size());
    const Eigen::Index d = cfg_.embed_dim;
    const Eigen::Index hd = d / cfg_.heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(hd));

    GW(g, wout_).noalias() += c.lnf.transpose() * dlogits;
    GV(g, bout_) += dlogits.colwise().sum();
    Mat dlnf = dlogits * W(wout_).transpose();
    Mat dx = layer_norm_backward(dlnf, c.x_final, c.lnf_mean, c.lnf_rstd, V(lnf_g_), GV(g, lnf_g_), GV(g, lnf_b_));

    for (std::size_t l = layer_index_.size(); l-- > 0;) {
      const auto& li = layer_index_[l];
      const auto& lc = c.layers[l];

      // feed-forward block
      GW(g, li.w2).noalias() += lc.ff_act.transpose() * dx;
      GV(g, li.b2) += dx.colwise().sum();
      Mat dff = dx * W(li.w2).transpose();
      dff.array() *= lc.ff_pre.unaryExpr([](T v) { return gelu_grad(v); }).array();
      GW(g, li.w1).noalias() += lc.ln2.transpose() * dff;
      GV(g, li.b1) += dff.colwise().sum();
      Mat dln2 = dff * W(li.w1).transpose();
      Mat dx_mid = dx + layer_norm_backward(dln2, lc.x_mid, lc.ln2_mean, lc.ln2_rstd, V(li.ln2_g), GV(g, li.ln2_g),
                                            GV(g, li.ln2_b));

      // attention block
      GW(g, li.wo).noalias() += lc.att.transpose() * dx_mid;
      GV(g, li.bo) += dx_mid.colwise().sum();
      Mat datt = dx_mid * W(li.wo).transpose();
      Mat dqkv(L, 3 * d);
      for (int h = 0; h < cfg_.heads; ++h) {
        auto q = lc.qkv.block(0, h * hd, L, hd);
        auto k = lc.qkv.block(0, d + h * hd, L, hd);
        auto v = lc.qkv.block(0, 2 * d + h * hd, L, hd);
        const Mat& p = lc.probs[h];
        auto dout = datt.block(0, h * hd, L, hd);
        Mat dp = dout * v.transpose();
        dqkv.block(0, 2 * d + h * hd, L, hd).noalias() = p.transpose() * dout;
        Mat ds = p.cwiseProduct(dp);
        Eigen::Matrix<T, Eigen::Dynamic, 1> rowdot = ds.rowwise().sum();
        ds -= (p.array().colwise() * rowdot.array()).matrix();
        ds *= scale;
        dqkv.block(0, h * hd, L, hd).noalias() = ds * k;
        dqkv.block(0, d + h * hd, L, hd).noalias() = ds.transpose() * q;
      }
      GW(g, li.wqkv).noalias() += lc.ln1.transpose() * dqkv;
      GV(g, li.bqkv) += dqkv.colwise().sum();
      Mat dln1 = dqkv * W(li.wqkv).transpose();
      dx = dx_mid + layer_norm_backward(dln1, lc.x_in, lc.ln1_mean, lc.ln1_rstd, V(li.ln1_g), GV(g, li.ln1_g),
                                        GV(g, li.ln1_b));
    }

    auto gte = GW(g, wte_);
    auto gpe = GW(g, wpe_);
    for (Eigen::Index i = 0; i < L; ++i) {
      gte.row(ids[i]) += dx.row(i);
      gpe.row(i) += dx.row(i);
    }
  }

  class KvSession;

  ModelConfig cfg_;
  std::vector<TensorInfo> tensors_;
  std::vector<LayerIndex> layer_index_;
  std::size_t wte_ = 0, wpe_ = 0, lnf_g_ = 0, lnf_b_ = 0, wout_ = 0, bout_ = 0;
  std::size_t total_ = 0;
  std::vector<T> params_;
};

/// Keeps per-layer keys and values so each pushed token costs one row of work.
template <typename T>
class Transformer<T>::KvSession final : public PredictorSession {
 public:
  explicit KvSession(const Transformer& m) : m_(m) {
    const Eigen::Index d = m.cfg_.embed_dim;
    keys_.assign(m.layer_index_.size(), Mat(m.cfg_.window, d));
    values_.assign(m.layer_index_.size(), Mat(m.cfg_.window, d));
  }

  void push(TokenId token) override {
    if (n_ >= m_.cfg_.window) {
      throw Error(ErrorCode::ContextTooLong, "context exceeds window " + std::to_string(m_.cfg_.window));
    }
    if (!vocab::in_range(token)) throw Error(ErrorCode::InvalidSequence, "token id outside vocabulary");
    const Eigen::Index d = m_.cfg_.embed_dim;
    const Eigen::Index hd = d / m_.cfg_.heads;
    const T scale = T(1) / std::sqrt(static_cast<T>(hd));

    Mat x = m_.W(m_.wte_).row(token) + m_.W(m_.wpe_).row(n_);
    Mat h;
    RowVec mean, rstd;
    for (std::size_t l = 0; l < m_.layer_index_.size(); ++l) {
      const auto& li = m_.layer_index_[l];
      layer_norm(x, m_.V(li.ln1_g), m_.V(li.ln1_b), h, mean, rstd);
      Mat qkv = h * m_.W(li.wqkv);
      qkv += m_.V(li.bqkv);
      keys_[l].row(n_) = qkv.block(0, d, 1, d);
      values_[l].row(n_) = qkv.block(0, 2 * d, 1, d);
      Mat att(1, d);
      for (int hh = 0; hh < m_.cfg_.heads; ++hh) {
        auto q = qkv.block(0, hh * hd, 1, hd);
        auto k = keys_[l].block(0, hh * hd, n_ + 1, hd);
        auto v = values_[l].block(0, hh * hd, n_ + 1, hd);
        RowVec s = (q * k.transpose()) * scale;
        s = (s.array() - s.maxCoeff()).exp().matrix();
        s /= s.sum();
        att.block(0, hh * hd, 1, hd).noalias() = s * v;
      }
      x.noalias() += att * m_.W(li.wo);
      x += m_.V(li.bo);
      layer_norm(x, m_.V(li.ln2_g), m_.V(li.ln2_b), h, mean, rstd);
      Mat ff = h * m_.W(li.w1);
      ff += m_.V(li.b1);
      ff = ff.unaryExpr([](T v) { return gelu(v); });
      x.noalias() += ff * m_.W(li.w2);
      x += m_.V(li.b2);
    }
    layer_norm(x, m_.V(m_.lnf_g_), m_.V(m_.lnf_b_), h, mean, rstd);
    last_ = h * m_.W(m_.wout_);
    last_ += m_.V(m_.bout_);
    ++n_;
  }

  std::vector<float> scores() override {
    std::vector<float> out(vocab::kSize, 0.0f);
    if (n_ == 0) return out;
    for (int i = 0; i < vocab::kSize; ++i) out[i] = static_cast<float>(last_(0, i));
    return out;
  }

 private:
  const Transformer& m_;
  std::vector<Mat> keys_, values_;
  Mat last_;
  Eigen::Index n_ = 0;
};

template <typename T>
std::unique_ptr<PredictorSession> Transformer<T>::session() const {
  return std::make_unique<KvSession>(*this);
}

}  // namespace trackfill
