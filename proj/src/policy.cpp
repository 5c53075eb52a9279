#include "leanpo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "leanpo/rng.hpp"

namespace leanpo {

void Vocab::validate() const {
  if (size == 0) throw InvalidInput("vocab: size must be positive");
  if (!control_tokens) return;
  const Token ids[] = {bos, eos, sep, hint_open, hint_close};
  for (std::size_t i = 0; i < 5; ++i) {
    if (ids[i] >= size) throw InvalidInput("vocab: reserved id " + std::to_string(ids[i]) + " >= size " + std::to_string(size));
    for (std::size_t j = i + 1; j < 5; ++j) {
      if (ids[i] == ids[j]) throw InvalidInput("vocab: reserved ids collide at " + std::to_string(ids[i]));
    }
  }
}

void Vocab::check(const TokenSeq& seq, const std::string& what) const {
  for (Token t : seq) {
    if (t >= size) {
      throw InvalidInput(what + ": token " + std::to_string(t) + " outside vocabulary of size " +
                         std::to_string(size));
    }
  }
}

TokenSeq concat(std::initializer_list<const TokenSeq*> parts) {
  TokenSeq out;
  for (const TokenSeq* p : parts) out.insert(out.end(), p->begin(), p->end());
  return out;
}

TokenSeq strip_reserved(const Vocab& vocab, const TokenSeq& seq) {
  TokenSeq out;
  out.reserve(seq.size());
  for (Token t : seq) {
    if (!vocab.is_reserved(t)) out.push_back(t);
  }
  return out;
}

std::string to_string(const TokenSeq& seq) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < seq.size(); ++i) os << (i ? "," : "") << seq[i];
  os << ']';
  return os.str();
}

std::string to_string(Backend b) { return b == Backend::bigram ? "bigram" : "attention"; }

Backend parse_backend(const std::string& s) {
  if (s == "bigram") return Backend::bigram;
  if (s == "attention") return Backend::attention;
  throw InvalidInput("unknown backend '" + s + "' (valid: bigram, attention)");
}

namespace {

// Parameter layout of the attention backend, in binding order.
enum AttnSlot : std::size_t { kTokEmb, kPosEmb, kWq, kWk, kWv, kWo, kFf1, kFf2, kOut, kSlots };

struct SlotSpec {
  const char* name;
  std::size_t rows;
  std::size_t cols;
  double stddev;
};

std::vector<SlotSpec> attention_layout(const Vocab& v, const AttentionConfig& c) {
  const double d = static_cast<double>(c.width);
  const double h = static_cast<double>(c.hidden);
  const double s = c.init_scale;
  return {
      {"tok_emb", v.size, c.width, 0.5 * s},
      {"pos_emb", c.context_window, c.width, 0.5 * s},
      {"w_q", c.width, c.width, s / std::sqrt(d)},
      {"w_k", c.width, c.width, s / std::sqrt(d)},
      {"w_v", c.width, c.width, s / std::sqrt(d)},
      {"w_o", c.width, c.width, 0.5 * s / std::sqrt(d)},
      {"w_ff1", c.width, c.hidden, s / std::sqrt(d)},
      {"w_ff2", c.hidden, c.width, 0.5 * s / std::sqrt(h)},
      {"w_out", c.width, v.size, s / std::sqrt(d)},
  };
}

Token start_token(const Vocab& v) { return v.control_tokens ? v.bos : 0; }

Tensor bigram_logits(const Vocab& vocab, const std::vector<std::uint64_t>& counts) {
  const std::size_t n = vocab.size;
  Tensor t(Shape::matrix(n, n));
  for (std::size_t prev = 0; prev < n; ++prev) {
    std::uint64_t total = 0;
    for (std::size_t next = 0; next < n; ++next) total += counts[prev * n + next];
    const double denom = static_cast<double>(total + n);
    for (std::size_t next = 0; next < n; ++next) {
      t(prev, next) = std::log(static_cast<double>(counts[prev * n + next] + 1) / denom);
    }
  }
  return t;
}

}  // namespace

PolicyModel PolicyModel::uniform_bigram(const Vocab& vocab) {
  return bigram_from_counts(vocab, std::vector<std::uint64_t>(vocab.size * vocab.size, 0));
}

PolicyModel PolicyModel::bigram_from_counts(const Vocab& vocab, std::vector<std::uint64_t> counts) {
  vocab.validate();
  if (counts.size() != vocab.size * vocab.size) throw InvalidInput("bigram: count table must be vocab x vocab");
  PolicyModel m;
  m.backend_ = Backend::bigram;
  m.vocab_ = vocab;
  m.params_.emplace_back("logits", bigram_logits(vocab, counts));
  m.counts_ = std::move(counts);
  return m;
}

PolicyModel PolicyModel::attention(const Vocab& vocab, const AttentionConfig& cfg, std::uint64_t seed) {
  vocab.validate();
  if (cfg.width == 0 || cfg.hidden == 0 || cfg.context_window < 2) {
    throw InvalidInput("attention: width, hidden must be positive and context window >= 2");
  }
  PolicyModel m;
  m.backend_ = Backend::attention;
  m.vocab_ = vocab;
  m.attn_ = cfg;
  Rng rng(seed);
  for (const auto& spec : attention_layout(vocab, cfg)) {
    Tensor t(Shape::matrix(spec.rows, spec.cols));
    for (double& v : t.data) v = spec.stddev * rng.normal();
    m.params_.emplace_back(spec.name, std::move(t));
  }
  return m;
}

PolicyModel PolicyModel::from_parts(Backend backend, const Vocab& vocab, const AttentionConfig& cfg,
                                    std::vector<Parameter> params, std::vector<std::uint64_t> counts) {
  vocab.validate();
  PolicyModel m;
  m.backend_ = backend;
  m.vocab_ = vocab;
  m.attn_ = cfg;
  std::vector<std::pair<std::string, Shape>> expect;
  if (backend == Backend::bigram) {
    expect.emplace_back("logits", Shape::matrix(vocab.size, vocab.size));
    if (!counts.empty() && counts.size() != vocab.size * vocab.size) {
      throw InvalidInput("bigram: count table must be vocab x vocab");
    }
  } else {
    for (const auto& s : attention_layout(vocab, cfg)) expect.emplace_back(s.name, Shape::matrix(s.rows, s.cols));
  }
  if (params.size() != expect.size()) {
    throw InvalidInput("model: expected " + std::to_string(expect.size()) + " parameter arrays, got " +
                       std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != expect[i].first || params[i].value.shape != expect[i].second) {
      throw InvalidInput("model: parameter " + std::to_string(i) + " is " + params[i].name + " " +
                         params[i].value.shape.str() + ", expected " + expect[i].first + " " +
                         expect[i].second.str());
    }
    params[i].zero_grad();
  }
  m.params_ = std::move(params);
  m.counts_ = std::move(counts);
  return m;
}

std::vector<Parameter*> PolicyModel::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t PolicyModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void PolicyModel::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::size_t PolicyModel::max_length() const {
  return backend_ == Backend::attention ? attn_.context_window : std::numeric_limits<std::size_t>::max();
}

PolicyGraph::PolicyGraph(Tape& tape, PolicyModel& model) : tape_(tape), model_(model) {
  for (auto& p : model.params_) bound_.push_back(tape.parameter(p));
}

PolicyGraph::PolicyGraph(Tape& tape, const PolicyModel& model) : tape_(tape), model_(model) {
  for (const auto& p : model.params_) bound_.push_back(tape.constant(p.value));
}

void PolicyGraph::check_inputs(const TokenSeq& context, const TokenSeq& response) const {
  if (response.empty()) throw InvalidInput("token_logprobs: response must be non-empty");
  model_.vocab_.check(context, "context");
  model_.vocab_.check(response, "response");
  const std::size_t total = std::max<std::size_t>(context.size(), 1) + response.size();
  if (total > model_.max_length()) {
    throw InvalidInput("token_logprobs: context + response length " + std::to_string(total) +
                       " exceeds the context window of " + std::to_string(model_.max_length()));
  }
}

Value PolicyGraph::attention_hidden(const TokenSeq& input) {
  const std::size_t t = input.size();
  const std::size_t d = model_.attn_.width;
  std::vector<std::size_t> ids(input.begin(), input.end());
  std::vector<std::size_t> pos(t);
  for (std::size_t i = 0; i < t; ++i) pos[i] = i;

  Value x = add(gather_rows(bound_[kTokEmb], ids), gather_rows(bound_[kPosEmb], pos));

  Value q = matmul(x, bound_[kWq]);
  Value k = matmul(x, bound_[kWk]);
  Value v = matmul(x, bound_[kWv]);
  Tensor mask(Shape::matrix(t, t));
  for (std::size_t r = 0; r < t; ++r)
    for (std::size_t c = r + 1; c < t; ++c) mask(r, c) = -std::numeric_limits<double>::infinity();
  Value scores = add(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d))),
                     tape_.constant(std::move(mask)));
  Value attn = matmul(matmul(softmax_rows(scores), v), bound_[kWo]);
  Value h = add(x, attn);

  Value u = matmul(h, bound_[kFf1]);
  Value ff = matmul(mul(u, sigmoid(u)), bound_[kFf2]);
  return add(h, ff);
}

Value PolicyGraph::response_log_softmax(const TokenSeq& context, const TokenSeq& response) {
  check_inputs(context, response);
  const Vocab& vocab = model_.vocab_;
  const std::size_t n = response.size();

  if (model_.backend_ == Backend::bigram) {
    std::vector<std::size_t> prev(n);
    prev[0] = context.empty() ? start_token(vocab) : context.back();
    for (std::size_t i = 1; i < n; ++i) prev[i] = response[i - 1];
    return log_softmax_rows(gather_rows(bound_[0], prev));
  }

  TokenSeq input = context.empty() ? TokenSeq{start_token(vocab)} : context;
  const std::size_t c = input.size();
  input.insert(input.end(), response.begin(), response.end() - 1);
  Value hidden = attention_hidden(input);
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = c - 1 + i;
  return log_softmax_rows(matmul(gather_rows(hidden, rows), bound_[kOut]));
}

Value PolicyGraph::sequence_logprob(const TokenSeq& context, const TokenSeq& response) {
  Value lsm = response_log_softmax(context, response);
  Tensor onehot(lsm.shape());
  for (std::size_t i = 0; i < response.size(); ++i) onehot(i, response[i]) = 1.0;
  return sum(mul(lsm, tape_.constant(std::move(onehot))));
}

std::vector<double> token_logprobs(const PolicyModel& model, const TokenSeq& context,
                                   const TokenSeq& response) {
  Tape tape;
  PolicyGraph g(tape, model);
  Value lsm = g.response_log_softmax(context, response);
  std::vector<double> out(response.size());
  for (std::size_t i = 0; i < response.size(); ++i) out[i] = lsm.data()(i, response[i]);
  return out;
}

double sequence_logprob(const PolicyModel& model, const TokenSeq& context, const TokenSeq& response) {
  double s = 0.0;
  for (double v : token_logprobs(model, context, response)) s += v;
  return s;
}

std::vector<double> next_token_logprobs(const PolicyModel& model, const TokenSeq& prefix) {
  // Score a placeholder token; row 0 is the full next-token distribution.
  Tape tape;
  PolicyGraph g(tape, model);
  Value lsm = g.response_log_softmax(prefix, TokenSeq{0});
  const auto& d = lsm.data().data;
  return std::vector<double>(d.begin(), d.end());
}

TokenSeq sample(const PolicyModel& model, const TokenSeq& context, std::size_t max_len,
                double temperature, std::uint64_t seed) {
  if (!(temperature > 0.0)) throw InvalidInput("sample: temperature must be positive");
  if (max_len < 1) throw InvalidInput("sample: max-len must be >= 1");
  const std::size_t ctx_len = std::max<std::size_t>(context.size(), 1);
  if (ctx_len + 1 > model.max_length()) {
    throw InvalidInput("sample: context of length " + std::to_string(context.size()) +
                       " leaves no room in the context window of " + std::to_string(model.max_length()));
  }
  const std::size_t limit = std::min(max_len, model.max_length() - ctx_len);
  Rng rng(seed);
  TokenSeq prefix = context;
  TokenSeq out;
  std::vector<double> probs(model.vocab().size);
  while (out.size() < limit) {
    const auto lp = next_token_logprobs(model, prefix);
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : lp) mx = std::max(mx, v / temperature);
    double total = 0.0;
    for (std::size_t i = 0; i < lp.size(); ++i) {
      probs[i] = std::exp(lp[i] / temperature - mx);
      total += probs[i];
    }
    const double u = rng.uniform() * total;
    double acc = 0.0;
    Token next = static_cast<Token>(lp.size() - 1);
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) {
        next = static_cast<Token>(i);
        break;
      }
    }
    if (model.vocab().control_tokens && next == model.vocab().eos) break;
    out.push_back(next);
    prefix.push_back(next);
  }
  return out;
}

FrozenReference freeze_reference(const PolicyModel& model) {
  PolicyModel copy = model;
  copy.zero_grad();
  return FrozenReference(std::move(copy));
}

PolicyModel fit_bigram(const Vocab& vocab, const std::vector<TokenSeq>& corpus) {
  if (corpus.empty()) throw InvalidInput("fit_bigram: corpus must be non-empty");
  vocab.validate();
  const std::size_t n = vocab.size;
  std::vector<std::uint64_t> counts(n * n, 0);
  for (const auto& seq : corpus) {
    vocab.check(seq, "fit_bigram corpus");
    for (std::size_t i = 1; i < seq.size(); ++i) ++counts[seq[i - 1] * n + seq[i]];
  }
  return PolicyModel::bigram_from_counts(vocab, std::move(counts));
}

}  // namespace leanpo
