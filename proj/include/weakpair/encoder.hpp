#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <type_traits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "weakpair/errors.hpp"
#include "weakpair/io.hpp"
#include "weakpair/rng.hpp"
#include "weakpair/textproc.hpp"

namespace weakpair {

using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Matrix = Eigen::MatrixXd;

struct EncoderConfig {
  std::size_t dim = 64;
  bool use_block = true;
  bool normalize_output = false;
  std::size_t max_len = 64;
};

/// Trainable tensors. Block matrices are empty when the block is disabled.
struct EncoderParameters {
  Matrix embedding;  // |vocab| x dim
  Matrix wq, wk, wv;  // dim x dim
  Matrix w1;          // dim x 2 dim
  Matrix w2;          // 2 dim x dim

  /// (name, tensor) in checkpoint order; skips empty block tensors.
  template <class Self>
  static auto named(Self& self) {
    using M = std::conditional_t<std::is_const_v<Self>, const Matrix, Matrix>;
    std::vector<std::pair<std::string_view, M*>> out{{"embedding", &self.embedding}};
    if (self.wq.size() != 0) {
      out.insert(out.end(), {{"wq", &self.wq}, {"wk", &self.wk}, {"wv", &self.wv},
                             {"w1", &self.w1}, {"w2", &self.w2}});
    }
    return out;
  }
  auto tensors() { return named(*this); }
  auto tensors() const { return named(*this); }

  bool all_finite() const {
    for (const auto& [name, m] : tensors())
      if (!m->allFinite()) return false;
    return true;
  }

  bool operator==(const EncoderParameters& o) const {
    const auto a = tensors();
    const auto b = o.tensors();
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].second->rows() != b[i].second->rows() || a[i].second->cols() != b[i].second->cols() ||
          *a[i].second != *b[i].second)
        return false;
    }
    return true;
  }
};

/// Gradient of a scalar w.r.t. the encoder parameters. Embedding rows are
/// kept sparse and ordered by token id.
struct EncoderGradients {
  std::map<TokenId, RowVector> embedding_rows;
  Matrix wq, wk, wv, w1, w2;

  EncoderGradients& operator+=(const EncoderGradients& o) {
    for (const auto& [id, row] : o.embedding_rows) {
      auto [it, inserted] = embedding_rows.try_emplace(id, row);
      if (!inserted) it->second += row;
    }
    auto acc = [](Matrix& a, const Matrix& b) {
      if (b.size() == 0) return;
      if (a.size() == 0) a = b;
      else a += b;
    };
    acc(wq, o.wq);
    acc(wk, o.wk);
    acc(wv, o.wv);
    acc(w1, o.w1);
    acc(w2, o.w2);
    return *this;
  }

  /// Dense copy laid out like `like`.
  EncoderParameters densify(const EncoderParameters& like) const {
    EncoderParameters d;
    d.embedding = Matrix::Zero(like.embedding.rows(), like.embedding.cols());
    for (const auto& [id, row] : embedding_rows) d.embedding.row(id) = row;
    auto fill = [](const Matrix& g, const Matrix& shape) {
      return g.size() != 0 ? g : Matrix(Matrix::Zero(shape.rows(), shape.cols()));
    };
    if (like.wq.size() != 0) {
      d.wq = fill(wq, like.wq);
      d.wk = fill(wk, like.wk);
      d.wv = fill(wv, like.wv);
      d.w1 = fill(w1, like.w1);
      d.w2 = fill(w2, like.w2);
    }
    return d;
  }
};

/// Activations of one forward pass, enough to backpropagate exactly.
struct ForwardTrace {
  std::vector<TokenId> ids;
  Matrix x;                 // token vectors, L x dim
  Matrix q, k, v, attn, h;  // block only
  Matrix z;                 // pre-ReLU feed-forward, L x 2dim
  RowVector pooled;
  Vector embedding;
  double norm = 0.0;
  bool degenerate = false;  // zero pooled vector under normalize_output
  std::uint64_t version = 0;
};

class EncoderModel {
 public:
  static constexpr double init_range = 0.05;

  /// Parameters i.i.d. uniform in [-0.05, 0.05] (seeded); the PAD row is
  /// zero and stays frozen.
  static EncoderModel init(Vocabulary vocab, EncoderConfig config, std::uint64_t seed) {
    if (config.dim < 2) throw UsageError("encoder dim must be >= 2");
    if (config.max_len < 1) throw UsageError("encoder max_len must be >= 1");
    EncoderModel m(std::move(vocab), config);
    const auto d = static_cast<Eigen::Index>(config.dim);
    const auto v = static_cast<Eigen::Index>(m.vocab_.size());
    m.params_.embedding.resize(v, d);
    if (config.use_block) {
      m.params_.wq.resize(d, d);
      m.params_.wk.resize(d, d);
      m.params_.wv.resize(d, d);
      m.params_.w1.resize(d, 2 * d);
      m.params_.w2.resize(2 * d, d);
    }
    Rng rng(seed);
    for (auto& [name, t] : m.params_.tensors()) {
      for (Eigen::Index r = 0; r < t->rows(); ++r)
        for (Eigen::Index c = 0; c < t->cols(); ++c) (*t)(r, c) = uniform_real(rng, -init_range, init_range);
    }
    m.params_.embedding.row(Vocabulary::pad_id).setZero();
    return m;
  }

  /// Builds a model around explicit parameters (checkpoint loading, tests).
  static EncoderModel from_parameters(Vocabulary vocab, EncoderConfig config, EncoderParameters params) {
    EncoderModel m(std::move(vocab), config);
    const auto d = static_cast<Eigen::Index>(config.dim);
    if (params.embedding.rows() != static_cast<Eigen::Index>(m.vocab_.size()) ||
        params.embedding.cols() != d)
      throw DataError("embedding table shape does not match vocabulary and dim");
    if (config.use_block != (params.wq.size() != 0))
      throw DataError("block parameters do not match use_block");
    if (config.use_block &&
        (params.wq.rows() != d || params.wq.cols() != d || params.wk.rows() != d ||
         params.wk.cols() != d || params.wv.rows() != d || params.wv.cols() != d ||
         params.w1.rows() != d || params.w1.cols() != 2 * d || params.w2.rows() != 2 * d ||
         params.w2.cols() != d))
      throw DataError("block parameter shapes do not match dim");
    m.params_ = std::move(params);
    return m;
  }

  const Vocabulary& vocab() const { return vocab_; }
  const EncoderConfig& config() const { return config_; }
  std::size_t dim() const { return config_.dim; }
  const EncoderParameters& params() const { return params_; }

  /// Mutable access; invalidates every outstanding trace.
  EncoderParameters& mutable_params() {
    ++version_;
    return params_;
  }
  std::uint64_t version() const { return version_; }

  std::vector<TokenId> token_ids(std::string_view cleaned) const {
    return encode_ids(vocab_, cleaned, config_.max_len);
  }

  Vector encode(std::span<const TokenId> ids) const { return encode_with_trace(ids).embedding; }

  Vector encode_text(std::string_view cleaned) const { return encode(token_ids(cleaned)); }

  ForwardTrace encode_with_trace(std::span<const TokenId> ids) const {
    if (ids.empty()) throw UsageError("cannot encode an empty token sequence");
    const auto n = static_cast<Eigen::Index>(ids.size());
    const auto d = static_cast<Eigen::Index>(config_.dim);
    ForwardTrace t;
    t.version = version_;
    t.ids.assign(ids.begin(), ids.end());
    t.x.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto id = ids[static_cast<std::size_t>(i)];
      if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size())
        throw UsageError("token id " + std::to_string(id) + " outside vocabulary");
      t.x.row(i) = params_.embedding.row(id);
    }

    const Matrix* top = &t.x;
    Matrix y;
    if (config_.use_block) {
      const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
      t.q = t.x * params_.wq;
      t.k = t.x * params_.wk;
      t.v = t.x * params_.wv;
      Matrix scores = (t.q * t.k.transpose()) * inv_sqrt_d;
      t.attn.resize(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double mx = scores.row(i).maxCoeff();
        t.attn.row(i) = (scores.row(i).array() - mx).exp().matrix();
        t.attn.row(i) /= t.attn.row(i).sum();
      }
      t.h = t.x + t.attn * t.v;
      t.z = t.h * params_.w1;
      y = t.h + t.z.cwiseMax(0.0) * params_.w2;
      top = &y;
    }

    t.pooled = top->colwise().mean();
    t.embedding = t.pooled.transpose();
    if (config_.normalize_output) {
      t.norm = t.embedding.norm();
      if (t.norm > 0.0) {
        t.embedding /= t.norm;
      } else {
        t.degenerate = true;
        t.embedding.setZero();
      }
    }
    return t;
  }

  /// Exact gradient of <grad_out, embedding> w.r.t. every parameter the
  /// traced input touched.
  EncoderGradients backprop(const ForwardTrace& t, const Vector& grad_out) const {
    if (t.version != version_) throw UsageError("stale forward trace: parameters changed since encode");
    const auto d = static_cast<Eigen::Index>(config_.dim);
    if (grad_out.size() != d) throw UsageError("grad_out dimension mismatch");
    const auto n = static_cast<Eigen::Index>(t.ids.size());

    RowVector g_pooled;
    if (config_.normalize_output) {
      if (t.degenerate) {
        g_pooled = RowVector::Zero(d);
      } else {
        g_pooled = ((grad_out - t.embedding * t.embedding.dot(grad_out)) / t.norm).transpose();
      }
    } else {
      g_pooled = grad_out.transpose();
    }
    const Matrix g_top = Matrix::Ones(n, 1) * (g_pooled / static_cast<double>(n));

    EncoderGradients g;
    Matrix g_x;
    if (config_.use_block) {
      const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
      const Matrix relu = t.z.cwiseMax(0.0);
      g.w2 = relu.transpose() * g_top;
      const Matrix g_z = (g_top * params_.w2.transpose()).cwiseProduct(
          (t.z.array() > 0.0).cast<double>().matrix());
      g.w1 = t.h.transpose() * g_z;
      const Matrix g_h = g_top + g_z * params_.w1.transpose();

      const Matrix g_attn = g_h * t.v.transpose();
      const Matrix g_v = t.attn.transpose() * g_h;
      const Eigen::VectorXd row_dot = g_attn.cwiseProduct(t.attn).rowwise().sum();
      const Matrix g_scores =
          t.attn.cwiseProduct(g_attn - row_dot * Eigen::RowVectorXd::Ones(n)) * inv_sqrt_d;
      const Matrix g_q = g_scores * t.k;
      const Matrix g_k = g_scores.transpose() * t.q;
      g.wq = t.x.transpose() * g_q;
      g.wk = t.x.transpose() * g_k;
      g.wv = t.x.transpose() * g_v;
      g_x = g_h + g_q * params_.wq.transpose() + g_k * params_.wk.transpose() +
            g_v * params_.wv.transpose();
    } else {
      g_x = g_top;
    }

    for (Eigen::Index i = 0; i < n; ++i) {
      const auto id = t.ids[static_cast<std::size_t>(i)];
      if (id == Vocabulary::pad_id) continue;
      auto [it, inserted] = g.embedding_rows.try_emplace(id, g_x.row(i));
      if (!inserted) it->second += g_x.row(i);
    }
    return g;
  }

 private:
  EncoderModel(Vocabulary vocab, EncoderConfig config) : vocab_(std::move(vocab)), config_(config) {}

  Vocabulary vocab_;
  EncoderConfig config_;
  EncoderParameters params_;
  std::uint64_t version_ = 0;
};

// ---- checkpoint: one JSON header line, then little-endian float64 payload ----

inline constexpr std::string_view checkpoint_format = "weakpair-encoder";
inline constexpr int checkpoint_version = 1;

inline void save_checkpoint(const std::filesystem::path& path, const EncoderModel& model) {
  nlohmann::json shapes = nlohmann::json::array();
  std::size_t count = 0;
  for (const auto& [name, t] : model.params().tensors()) {
    shapes.push_back({{"name", name}, {"shape", {t->rows(), t->cols()}}});
    count += static_cast<std::size_t>(t->size());
  }
  const auto& cfg = model.config();
  const nlohmann::json header = {{"format", checkpoint_format},
                                 {"format_version", checkpoint_version},
                                 {"dim", cfg.dim},
                                 {"use_block", cfg.use_block},
                                 {"normalize_output", cfg.normalize_output},
                                 {"max_len", cfg.max_len},
                                 {"vocab", model.vocab().to_json()},
                                 {"parameters", shapes},
                                 {"payload_bytes", count * 8}};
  std::string payload;
  payload.reserve(count * 8);
  for (const auto& [name, t] : model.params().tensors()) {
    for (Eigen::Index r = 0; r < t->rows(); ++r) {
      for (Eigen::Index c = 0; c < t->cols(); ++c) {
        auto bits = std::bit_cast<std::uint64_t>((*t)(r, c));
        for (int b = 0; b < 8; ++b, bits >>= 8) payload.push_back(static_cast<char>(bits & 0xff));
      }
    }
  }
  auto out = io::open_output(path);
  out << header.dump() << '\n';
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

inline EncoderModel load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  const auto newline = bytes.find('\n');
  const auto header = nlohmann::json::parse(bytes.substr(0, newline), nullptr, false);
  if (newline == std::string::npos || header.is_discarded() || !header.is_object() ||
      header.value("format", "") != checkpoint_format)
    throw DataError(path.string() + ": not an encoder checkpoint (missing format header)");
  if (header.value("format_version", -1) != checkpoint_version)
    throw DataError(path.string() + ": unsupported checkpoint format_version " +
                    header.value("format_version", nlohmann::json(nullptr)).dump());
  try {
    EncoderConfig cfg{header.at("dim").get<std::size_t>(), header.at("use_block").get<bool>(),
                      header.at("normalize_output").get<bool>(), header.at("max_len").get<std::size_t>()};
    auto vocab = Vocabulary::from_json(header.at("vocab"));
    const auto payload = std::string_view(bytes).substr(newline + 1);
    if (payload.size() != header.at("payload_bytes").get<std::size_t>())
      throw DataError(path.string() + ": truncated checkpoint payload");

    EncoderParameters params;
    std::map<std::string, Matrix*> slots{{"embedding", &params.embedding}, {"wq", &params.wq},
                                         {"wk", &params.wk},               {"wv", &params.wv},
                                         {"w1", &params.w1},               {"w2", &params.w2}};
    std::size_t offset = 0;
    for (const auto& entry : header.at("parameters")) {
      const auto name = entry.at("name").get<std::string>();
      const auto it = slots.find(name);
      if (it == slots.end()) throw DataError(path.string() + ": unknown parameter " + name);
      const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
      const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
      if (offset + static_cast<std::size_t>(rows * cols) * 8 > payload.size())
        throw DataError(path.string() + ": payload shorter than declared shapes");
      Matrix& m = *it->second;
      m.resize(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c, offset += 8) {
          std::uint64_t bits = 0;
          for (int b = 7; b >= 0; --b)
            bits = (bits << 8) | static_cast<unsigned char>(payload[offset + static_cast<std::size_t>(b)]);
          m(r, c) = std::bit_cast<double>(bits);
        }
      }
    }
    if (offset != payload.size()) throw DataError(path.string() + ": payload size mismatch");
    return EncoderModel::from_parameters(std::move(vocab), cfg, std::move(params));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": bad checkpoint header: " + e.what());
  }
}

}  // namespace weakpair
