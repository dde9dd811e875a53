#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "weakpair/corpus.hpp"
#include "weakpair/encoder.hpp"
#include "weakpair/errors.hpp"
#include "weakpair/losses.hpp"
#include "weakpair/parallel.hpp"
#include "weakpair/rng.hpp"

namespace weakpair {

enum class LossKind { triplet, multiple_negatives };

inline std::string_view to_string(LossKind k) {
  return k == LossKind::triplet ? "Triplet" : "MultipleNegatives";
}

inline std::string_view to_string(Similarity s) { return s == Similarity::cosine ? "cosine" : "dot"; }

/// Training hyperparameters plus the encoder shape used when a fresh model
/// is created for a run.
struct TrainConfig {
  LossKind loss = LossKind::multiple_negatives;
  double margin = 1.0;
  double scale = 20.0;
  Similarity similarity = Similarity::cosine;
  std::size_t batch_size = 50;
  // fine-tuning rates are far too small for an encoder trained from scratch
  // in a single epoch
  double learning_rate = 1e-2;
  double warmup_fraction = 0.10;
  std::size_t epochs = 1;
  double weight_decay = 0.01;
  std::uint64_t seed = 42;

  std::size_t dim = 64;
  bool use_block = true;
  bool normalize_output = false;
  std::size_t max_len = 64;
  std::size_t vocab_size = 20000;

  EncoderConfig encoder() const { return {dim, use_block, normalize_output, max_len}; }

  /// Every violated constraint, not just the first.
  std::vector<std::string> validate() const {
    std::vector<std::string> errors;
    if (batch_size < 1) errors.emplace_back("batch_size must be >= 1");
    if (loss == LossKind::multiple_negatives && batch_size < 2)
      errors.emplace_back("batch_size must be >= 2 for MultipleNegatives");
    if (loss == LossKind::triplet && batch_size < 2)
      errors.emplace_back("batch_size must be >= 2 for Triplet (in-batch negatives)");
    if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0))
      errors.emplace_back("warmup_fraction must be in [0, 1]");
    if (!(margin >= 0.0)) errors.emplace_back("margin must be >= 0");
    if (!(scale > 0.0)) errors.emplace_back("scale must be > 0");
    if (!(learning_rate > 0.0)) errors.emplace_back("learning_rate must be > 0");
    if (!(weight_decay >= 0.0)) errors.emplace_back("weight_decay must be >= 0");
    if (epochs < 1) errors.emplace_back("epochs must be >= 1");
    if (dim < 2) errors.emplace_back("dim must be >= 2");
    if (max_len < 1) errors.emplace_back("max_len must be >= 1");
    if (vocab_size < 2) errors.emplace_back("vocab_size must be >= 2");
    return errors;
  }

  nlohmann::json to_json() const {
    return {{"loss", to_string(loss)},
            {"margin", margin},
            {"scale", scale},
            {"similarity", to_string(similarity)},
            {"batch_size", batch_size},
            {"learning_rate", learning_rate},
            {"warmup_fraction", warmup_fraction},
            {"epochs", epochs},
            {"weight_decay", weight_decay},
            {"seed", seed},
            {"dim", dim},
            {"use_block", use_block},
            {"normalize_output", normalize_output},
            {"max_len", max_len},
            {"vocab_size", vocab_size}};
  }
};

/// Parses flat `key = value` text. Blank lines and `#` comments are ignored.
inline std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(lineno) + ": expected key = value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

/// Applies overrides to `cfg`; unknown keys and unparsable values are all
/// reported together in one UsageError, followed by validate().
inline void apply_overrides(TrainConfig& cfg, const std::map<std::string, std::string>& kv) {
  std::vector<std::string> errors;
  auto num = [&](const std::string& key, const std::string& v, auto& field) {
    using T = std::remove_reference_t<decltype(field)>;
    T parsed{};
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, parsed);
    if (ec != std::errc{} || ptr != end) {
      errors.push_back(key + ": not a number: '" + v + "'");
      return;
    }
    field = parsed;
  };
  auto flag = [&](const std::string& key, const std::string& v, bool& field) {
    if (v == "true" || v == "1" || v == "on") field = true;
    else if (v == "false" || v == "0" || v == "off") field = false;
    else errors.push_back(key + ": expected true/false, got '" + v + "'");
  };
  for (const auto& [key, v] : kv) {
    if (key == "loss") {
      if (v == "Triplet" || v == "TLoss") cfg.loss = LossKind::triplet;
      else if (v == "MultipleNegatives" || v == "MNLoss") cfg.loss = LossKind::multiple_negatives;
      else errors.push_back("loss: '" + v + "' is not one of Triplet, MultipleNegatives");
    } else if (key == "similarity") {
      if (v == "cosine") cfg.similarity = Similarity::cosine;
      else if (v == "dot") cfg.similarity = Similarity::dot;
      else errors.push_back("similarity: '" + v + "' is not one of cosine, dot");
    } else if (key == "margin") num(key, v, cfg.margin);
    else if (key == "scale") num(key, v, cfg.scale);
    else if (key == "batch_size") num(key, v, cfg.batch_size);
    else if (key == "learning_rate") num(key, v, cfg.learning_rate);
    else if (key == "warmup_fraction") num(key, v, cfg.warmup_fraction);
    else if (key == "epochs") num(key, v, cfg.epochs);
    else if (key == "weight_decay") num(key, v, cfg.weight_decay);
    else if (key == "seed") num(key, v, cfg.seed);
    else if (key == "dim") num(key, v, cfg.dim);
    else if (key == "max_len") num(key, v, cfg.max_len);
    else if (key == "vocab_size") num(key, v, cfg.vocab_size);
    else if (key == "use_block") flag(key, v, cfg.use_block);
    else if (key == "normalize_output") flag(key, v, cfg.normalize_output);
    else errors.push_back("unknown config key '" + key + "'");
  }
  for (auto& e : cfg.validate()) errors.push_back(std::move(e));
  if (!errors.empty()) {
    std::string msg = "invalid training config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw UsageError(msg);
  }
}

/// Linear warm-up from 0 to base_lr over the first ceil(warmup_fraction *
/// total_steps) steps, then linear decay to 0 at total_steps.
inline double lr_at(std::size_t step, std::size_t total_steps, double base_lr, double warmup_fraction) {
  if (total_steps < 1) throw UsageError("lr_at: total_steps must be >= 1");
  if (step > total_steps) throw UsageError("lr_at: step beyond total_steps");
  const auto warmup = static_cast<std::size_t>(
      std::ceil(warmup_fraction * static_cast<double>(total_steps) - 1e-9));
  if (step < warmup) return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
  const auto decay = std::max<std::size_t>(1, total_steps - warmup);
  return base_lr * static_cast<double>(total_steps - step) / static_cast<double>(decay);
}

struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Matrix> m, v;
};

/// One decoupled-weight-decay Adam update over matching tensor lists.
inline void adamw_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
                       OptimizerState& state, double lr, double weight_decay) {
  if (params.size() != grads.size()) throw UsageError("adamw_step: tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i]->rows() || params[i]->cols() != grads[i]->cols())
      throw UsageError("adamw_step: gradient shape mismatch");
    if (!grads[i]->allFinite()) throw NumericError("adamw_step: non-finite gradient");
  }
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.push_back(Matrix::Zero(p->rows(), p->cols()));
      state.v.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (state.m.size() != params.size()) throw UsageError("adamw_step: optimizer state shape mismatch");

  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    const Matrix& g = *grads[i];
    p *= 1.0 - lr * weight_decay;
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g.cwiseAbs2();
    p.array() -= lr * (state.m[i].array() / bc1) / ((state.v[i].array() / bc2).sqrt() + state.eps);
    if (!p.allFinite()) throw NumericError("adamw_step: parameters became non-finite");
  }
}

/// AdamW step on an encoder; the PAD row receives neither gradient nor decay.
inline void adamw_step(EncoderModel& model, const EncoderGradients& grads, OptimizerState& state,
                       double lr, double weight_decay) {
  auto dense = grads.densify(model.params());
  dense.embedding.row(Vocabulary::pad_id).setZero();
  auto& params = model.mutable_params();
  std::vector<Matrix*> p;
  std::vector<const Matrix*> g;
  for (auto& [name, t] : params.tensors()) p.push_back(t);
  for (auto& [name, t] : std::as_const(dense).tensors()) g.push_back(t);
  const RowVector pad = params.embedding.row(Vocabulary::pad_id);
  adamw_step(p, g, state, lr, weight_decay);
  params.embedding.row(Vocabulary::pad_id) = pad;
}

struct BatchRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainLog {
  std::vector<BatchRecord> batches;

  /// Mean loss of the first (or last, when `from_end`) k batches.
  double mean_loss(std::size_t k, bool from_end = false) const {
    k = std::min(k, batches.size());
    if (k == 0) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += batches[from_end ? batches.size() - 1 - i : i].loss;
    return sum / static_cast<double>(k);
  }

  std::string to_jsonl() const {
    std::string out;
    for (const auto& b : batches)
      out += nlohmann::json{{"step", b.step}, {"lr", b.lr}, {"loss", b.loss}}.dump() + "\n";
    return out;
  }
};

/// Batch loss and gradients w.r.t. the 2n sentence embeddings.
struct BatchLoss {
  double loss = 0.0;
  std::vector<Vector> grad_anchors, grad_positives;
};

/// Triplet loss averaged over the batch; the negative of pair i is the
/// positive of another pair j != i drawn uniformly.
inline BatchLoss batch_triplet_loss(std::span<const Vector> anchors, std::span<const Vector> positives,
                                    double margin, Rng& rng) {
  const auto n = anchors.size();
  if (n < 2) throw UsageError("triplet batches need at least 2 pairs");
  BatchLoss out;
  out.grad_anchors.assign(n, Vector::Zero(anchors[0].size()));
  out.grad_positives.assign(n, Vector::Zero(anchors[0].size()));
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto j = static_cast<std::size_t>(uniform_index(rng, n - 1));
    if (j >= i) ++j;
    const auto r = triplet_loss(anchors[i], positives[i], positives[j], margin);
    out.loss += r.loss * inv_n;
    out.grad_anchors[i] += r.grad_anchor * inv_n;
    out.grad_positives[i] += r.grad_positive * inv_n;
    out.grad_positives[j] += r.grad_negative * inv_n;
  }
  return out;
}

/// Runs one epoch: seeded shuffle, full batches only, AdamW with the warm-up
/// schedule evaluated at the global step. Gradients are reduced in pair
/// order, so the result does not depend on `threads`.
inline std::vector<BatchRecord> train_epoch(EncoderModel& model, std::span<const PairExample> pairs,
                                            const TrainConfig& cfg, OptimizerState& state,
                                            std::size_t epoch, std::size_t total_steps,
                                            std::size_t threads = 1) {
  const auto n = cfg.batch_size;
  if (n == 0 || pairs.size() < n)
    throw UsageError("need at least batch_size=" + std::to_string(n) + " pairs, have " +
                     std::to_string(pairs.size()));
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle/" + std::to_string(epoch)));
  shuffle_in_place(order, shuffle_rng);
  Rng negative_rng(derive_seed(cfg.seed, "negatives/" + std::to_string(epoch)));

  const std::size_t batches = pairs.size() / n;
  std::vector<BatchRecord> log;
  log.reserve(batches);
  std::vector<ForwardTrace> traces(2 * n);
  std::vector<EncoderGradients> grads(2 * n);
  for (std::size_t b = 0; b < batches; ++b) {
    parallel_for(2 * n, threads, [&](std::size_t k) {
      const auto& p = pairs[order[b * n + k / 2]];
      traces[k] = model.encode_with_trace(model.token_ids(k % 2 == 0 ? p.anchor_text : p.positive_text));
    });
    std::vector<Vector> anchors(n), positives(n);
    for (std::size_t i = 0; i < n; ++i) {
      anchors[i] = traces[2 * i].embedding;
      positives[i] = traces[2 * i + 1].embedding;
    }

    BatchLoss loss;
    if (cfg.loss == LossKind::multiple_negatives) {
      auto r = mn_loss(anchors, positives, cfg.scale, cfg.similarity);
      loss = {r.loss, std::move(r.grad_anchors), std::move(r.grad_positives)};
    } else {
      loss = batch_triplet_loss(anchors, positives, cfg.margin, negative_rng);
    }
    if (!std::isfinite(loss.loss)) throw NumericError("non-finite loss at step " + std::to_string(state.step));

    parallel_for(2 * n, threads, [&](std::size_t k) {
      grads[k] = model.backprop(traces[k], k % 2 == 0 ? loss.grad_anchors[k / 2] : loss.grad_positives[k / 2]);
    });
    EncoderGradients total;
    for (const auto& g : grads) total += g;

    const auto step = static_cast<std::size_t>(state.step);
    const double lr = lr_at(std::min(step, total_steps), total_steps, cfg.learning_rate, cfg.warmup_fraction);
    adamw_step(model, total, state, lr, cfg.weight_decay);
    log.push_back({step, lr, loss.loss});
  }
  return log;
}

/// cfg.epochs epochs sharing one optimizer and one schedule.
inline TrainLog train(EncoderModel& model, std::span<const PairExample> pairs, const TrainConfig& cfg,
                      std::size_t threads = 1) {
  if (auto errors = cfg.validate(); !errors.empty()) throw UsageError(errors.front());
  const std::size_t per_epoch = cfg.batch_size == 0 ? 0 : pairs.size() / cfg.batch_size;
  if (per_epoch == 0)
    throw UsageError("need at least batch_size=" + std::to_string(cfg.batch_size) + " pairs, have " +
                     std::to_string(pairs.size()));
  OptimizerState state;
  TrainLog log;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    auto part = train_epoch(model, pairs, cfg, state, e, per_epoch * cfg.epochs, threads);
    log.batches.insert(log.batches.end(), part.begin(), part.end());
  }
  return log;
}

}  // namespace weakpair
