#pragma once

#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "trackfill/error.hpp"
#include "trackfill/vocab.hpp"

namespace trackfill {

/// Incremental view over one growing context. Implementations may cache
/// per-position state so that extending the context is cheaper than
/// re-running the whole prefix.
class PredictorSession {
 public:
  virtual ~PredictorSession() = default;
  virtual void push(TokenId token) = 0;
  /// Unnormalized log-probabilities for the token after the pushed prefix.
  virtual std::vector<float> scores() = 0;
};

/// Next-token distribution over the vocabulary given a prefix.
class SequencePredictor {
 public:
  virtual ~SequencePredictor() = default;

  /// Scores (unnormalized log-probabilities, one per vocabulary id) for the
  /// token following `context`. Deterministic for fixed weights and context.
  virtual std::vector<float> predict(std::span<const TokenId> context) const = 0;

  /// Longest context the predictor accepts.
  virtual std::size_t window() const = 0;

  virtual std::string name() const = 0;

  virtual std::unique_ptr<PredictorSession> session() const;
};

namespace predictor_detail {

class RecomputeSession : public PredictorSession {
 public:
  explicit RecomputeSession(const SequencePredictor& p) : predictor_(p) {}
  void push(TokenId token) override { context_.push_back(token); }
  std::vector<float> scores() override { return predictor_.predict(context_); }

 private:
  const SequencePredictor& predictor_;
  std::vector<TokenId> context_;
};

}  // namespace predictor_detail

inline std::unique_ptr<PredictorSession> SequencePredictor::session() const {
  return std::make_unique<predictor_detail::RecomputeSession>(*this);
}

inline void check_context(std::span<const TokenId> context, std::size_t window) {
  if (context.size() > window) {
    throw Error(ErrorCode::ContextTooLong,
                "context of " + std::to_string(context.size()) + " tokens exceeds window " + std::to_string(window));
  }
}

/// Equal scores for every token.
class UniformPredictor : public SequencePredictor {
 public:
  explicit UniformPredictor(std::size_t window = std::numeric_limits<std::size_t>::max()) : window_(window) {}

  std::vector<float> predict(std::span<const TokenId> context) const override {
    check_context(context, window_);
    return std::vector<float>(vocab::kSize, 0.0f);
  }
  std::size_t window() const override { return window_; }
  std::string name() const override { return "uniform"; }

 private:
  std::size_t window_;
};

}  // namespace trackfill
