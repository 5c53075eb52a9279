#pragma once

// Tiny autoregressive policies over a small vocabulary.
//
// Two backends share one interface:
//  - bigram: a vocab x vocab logit table; p(next | prev) = softmax(row prev).
//    fit_bigram() initializes rows to log((count + 1) / (row_total + V)).
//  - attention: token + learned position embeddings, one single-head causal
//    self-attention block, one SiLU feed-forward block (both residual), and an
//    output projection. No biases, no normalization.
//
// Conditioning: the first response token is predicted from the full context
// (or BOS when the context is empty), token i from context + response[<i].

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "leanpo/grad.hpp"
#include "leanpo/vocab.hpp"

namespace leanpo {

enum class Backend { bigram, attention };

std::string to_string(Backend b);
Backend parse_backend(const std::string& s);

struct AttentionConfig {
  std::size_t width = 32;
  std::size_t hidden = 64;
  std::size_t context_window = 64;
  double init_scale = 1.0;

  bool operator==(const AttentionConfig&) const = default;
};

class PolicyModel {
 public:
  // Bigram with an all-zero count table: every conditional is 1 / V.
  static PolicyModel uniform_bigram(const Vocab& vocab);
  static PolicyModel bigram_from_counts(const Vocab& vocab, std::vector<std::uint64_t> counts);
  static PolicyModel attention(const Vocab& vocab, const AttentionConfig& cfg, std::uint64_t seed);
  // Used by checkpoint loading; validates names and shapes against the backend.
  static PolicyModel from_parts(Backend backend, const Vocab& vocab, const AttentionConfig& cfg,
                                std::vector<Parameter> params, std::vector<std::uint64_t> counts);

  Backend backend() const { return backend_; }
  const Vocab& vocab() const { return vocab_; }
  const AttentionConfig& attention_config() const { return attn_; }
  // Row-major vocab x vocab pair counts the bigram was fitted from (empty for attention).
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  std::vector<Parameter*> parameters();
  std::span<const Parameter> parameter_list() const { return params_; }
  std::size_t parameter_count() const;
  void zero_grad();

  // Longest context + response this model accepts (unbounded for bigram).
  std::size_t max_length() const;

 private:
  PolicyModel() = default;

  Backend backend_ = Backend::bigram;
  Vocab vocab_;
  AttentionConfig attn_;
  std::vector<Parameter> params_;
  std::vector<std::uint64_t> counts_;

  friend class PolicyGraph;
};

// Binds a model's parameters into a tape. With a mutable model the bound
// values are trainable leaves; with a const model they are constants.
class PolicyGraph {
 public:
  PolicyGraph(Tape& tape, PolicyModel& model);
  PolicyGraph(Tape& tape, const PolicyModel& model);

  // n x V matrix of next-token log-probabilities, row i predicting response[i].
  Value response_log_softmax(const TokenSeq& context, const TokenSeq& response);
  // Scalar node: sum_i log p(response[i] | context, response[<i]).
  Value sequence_logprob(const TokenSeq& context, const TokenSeq& response);

 private:
  Value attention_hidden(const TokenSeq& input);
  void check_inputs(const TokenSeq& context, const TokenSeq& response) const;

  Tape& tape_;
  const PolicyModel& model_;
  std::vector<Value> bound_;
};

// One log-probability per response token, each <= 0.
std::vector<double> token_logprobs(const PolicyModel& model, const TokenSeq& context,
                                   const TokenSeq& response);
double sequence_logprob(const PolicyModel& model, const TokenSeq& context, const TokenSeq& response);

// Log-distribution over the token following `prefix` (BOS when prefix is empty).
std::vector<double> next_token_logprobs(const PolicyModel& model, const TokenSeq& prefix);

// Ancestral sampling; stops at EOS (not included in the output) or max_len.
TokenSeq sample(const PolicyModel& model, const TokenSeq& context, std::size_t max_len,
                double temperature, std::uint64_t seed);

// Immutable snapshot used as the reference policy.
class FrozenReference {
 public:
  explicit FrozenReference(PolicyModel model) : model_(std::move(model)) {}
  const PolicyModel& model() const { return model_; }

 private:
  PolicyModel model_;
};

FrozenReference freeze_reference(const PolicyModel& model);

// Exact adjacent-pair counts over the corpus (no implicit BOS pairs).
PolicyModel fit_bigram(const Vocab& vocab, const std::vector<TokenSeq>& corpus);

}  // namespace leanpo
