#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "soda/core/image.hpp"
#include "soda/error.hpp"
#include "soda/ingestion/vocab.hpp"
#include "soda/nn/layers.hpp"

namespace soda::nn {

struct EncoderConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 2;
  int ffn_dim = 128;
  double dropout = 0.1;
  int max_len = 64;
  int patch_size = 8;
  int image_size = 64;
  std::vector<int> categorical_vocab_sizes;
  int n_continuous = 0;
  int text_vocab_size = 3;

  int grid() const { return image_size / patch_size; }
  int n_patches() const { return grid() * grid(); }
  int patch_dim() const { return patch_size * patch_size * 3; }
  int n_categorical() const { return static_cast<int>(categorical_vocab_sizes.size()); }

  void validate() const {
    require(d_model > 0 && n_heads > 0 && d_model % n_heads == 0, ErrorCode::InvalidArgument,
            "d_model must be divisible by n_heads");
    require(patch_size > 0 && image_size > 0 && image_size % patch_size == 0,
            ErrorCode::InvalidArgument, "image_size must be divisible by patch_size");
    require(n_layers >= 0 && ffn_dim > 0 && max_len >= 1 && text_vocab_size >= 3,
            ErrorCode::InvalidArgument, "invalid encoder dimensions");
    require(dropout >= 0.0 && dropout < 1.0, ErrorCode::InvalidArgument, "dropout must be in [0,1)");
  }

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

inline void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"d_model", c.d_model},     {"n_layers", c.n_layers},
       {"n_heads", c.n_heads},     {"ffn_dim", c.ffn_dim},
       {"dropout", c.dropout},     {"max_len", c.max_len},
       {"patch_size", c.patch_size}, {"image_size", c.image_size},
       {"categorical_vocab_sizes", c.categorical_vocab_sizes},
       {"n_continuous", c.n_continuous}, {"text_vocab_size", c.text_vocab_size}};
}

inline void from_json(const nlohmann::json& j, EncoderConfig& c) {
  j.at("d_model").get_to(c.d_model);
  j.at("n_layers").get_to(c.n_layers);
  j.at("n_heads").get_to(c.n_heads);
  j.at("ffn_dim").get_to(c.ffn_dim);
  j.at("dropout").get_to(c.dropout);
  j.at("max_len").get_to(c.max_len);
  j.at("patch_size").get_to(c.patch_size);
  j.at("image_size").get_to(c.image_size);
  j.at("categorical_vocab_sizes").get_to(c.categorical_vocab_sizes);
  j.at("n_continuous").get_to(c.n_continuous);
  j.at("text_vocab_size").get_to(c.text_vocab_size);
}

/// Non-overlapping patches in row-major order, each flattened (row, col,
/// channel) and scaled to [0,1].
template <class T = float>
Mat<T> patchify(const ImageBuffer& image, int patch_size) {
  require(patch_size > 0 && image.height() % patch_size == 0 && image.width() % patch_size == 0,
          ErrorCode::DimensionMismatch,
          "image " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
              " not divisible into patches of " + std::to_string(patch_size));
  const int gy = image.height() / patch_size;
  const int gx = image.width() / patch_size;
  Mat<T> out(gy * gx, patch_size * patch_size * 3);
  const T inv = static_cast<T>(1.0 / 255.0);
  for (int py = 0; py < gy; ++py) {
    for (int px = 0; px < gx; ++px) {
      const int row = py * gx + px;
      int col = 0;
      for (int y = 0; y < patch_size; ++y) {
        for (int x = 0; x < patch_size; ++x) {
          for (int c = 0; c < 3; ++c) {
            out(row, col++) = static_cast<T>(image.at(py * patch_size + y, px * patch_size + x, c)) * inv;
          }
        }
      }
    }
  }
  return out;
}

template <class T>
std::vector<TransformerBlock<T>> make_blocks(const EncoderConfig& cfg) {
  return std::vector<TransformerBlock<T>>(static_cast<std::size_t>(cfg.n_layers),
                                          TransformerBlock<T>(cfg.d_model, cfg.n_heads, cfg.ffn_dim));
}

template <class T, class F>
void for_each_block(std::vector<TransformerBlock<T>>& blocks, const std::string& prefix, F&& f) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].for_each(prefix + "blocks." + std::to_string(i) + ".", f);
  }
}

/// Runs the block stack; fills caches and per-layer attention when requested.
template <class T>
Mat<T> run_blocks(const std::vector<TransformerBlock<T>>& blocks, Mat<T> x,
                  const std::vector<bool>* mask, double dropout, Rng* rng,
                  std::vector<typename TransformerBlock<T>::Cache>* caches,
                  std::vector<std::vector<Mat<T>>>* attention) {
  if (caches) caches->resize(blocks.size());
  if (attention) attention->resize(blocks.size());
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    x = blocks[i].forward(x, mask, dropout, rng, caches ? &(*caches)[i] : nullptr,
                          attention ? &(*attention)[i] : nullptr);
  }
  return x;
}

template <class T>
Mat<T> backprop_blocks(const std::vector<TransformerBlock<T>>& blocks,
                       std::vector<TransformerBlock<T>>& grads,
                       const std::vector<typename TransformerBlock<T>::Cache>& caches, Mat<T> dx) {
  for (std::size_t i = blocks.size(); i-- > 0;) dx = blocks[i].backward(grads[i], caches[i], dx);
  return dx;
}

// ---------------------------------------------------------------- Tabular

/// Categorical ids -> per-field embeddings + column embeddings, contextualized
/// by self-attention; continuous features layer-normalized and concatenated
/// with the flattened contextual embeddings; two-layer projection to d_model.
template <class T>
struct TabularEncoder {
  using Scalar = T;
  std::vector<Mat<T>> embeddings;  // per field: vocab x d
  Mat<T> column;                   // fields x d
  std::vector<TransformerBlock<T>> blocks;
  LayerNorm<T> cont_norm;
  Linear<T> ff_in;
  Linear<T> ff_out;

  struct Cache {
    std::vector<int> ids;
    std::vector<typename TransformerBlock<T>::Cache> blocks;
    typename LayerNorm<T>::Cache cont;
    Mat<T> u, z;
  };

  TabularEncoder() = default;
  explicit TabularEncoder(const EncoderConfig& cfg)
      : column(Mat<T>::Zero(cfg.n_categorical(), cfg.d_model)),
        blocks(cfg.n_categorical() > 0 ? make_blocks<T>(cfg) : std::vector<TransformerBlock<T>>{}),
        cont_norm(cfg.n_continuous),
        ff_in(cfg.n_categorical() * cfg.d_model + cfg.n_continuous, cfg.ffn_dim),
        ff_out(cfg.ffn_dim, cfg.d_model) {
    for (int v : cfg.categorical_vocab_sizes) embeddings.push_back(Mat<T>::Zero(v, cfg.d_model));
  }

  void init(Rng& rng) {
    for (auto& e : embeddings) init_uniform(e, rng, 1.0);
    init_uniform(column, rng, 1.0);
    for (auto& b : blocks) b.init(rng);
    cont_norm.init(rng);
    ff_in.init(rng);
    ff_out.init(rng);
  }

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
      f(prefix + "embedding." + std::to_string(i), embeddings[i]);
    }
    f(prefix + "column", column);
    for_each_block(blocks, prefix, f);
    cont_norm.for_each(prefix + "cont_norm.", f);
    ff_in.for_each(prefix + "ff_in.", f);
    ff_out.for_each(prefix + "ff_out.", f);
  }

  void check(const std::vector<T>& continuous, const std::vector<int>& ids) const {
    require(continuous.size() == static_cast<std::size_t>(cont_norm.gamma.cols()),
            ErrorCode::ShapeMismatch, "continuous feature count mismatch");
    require(ids.size() == embeddings.size(), ErrorCode::ShapeMismatch, "categorical field count mismatch");
    for (std::size_t f = 0; f < ids.size(); ++f) {
      require(ids[f] >= 0 && ids[f] < embeddings[f].rows(), ErrorCode::IdOutOfRange,
              "categorical id " + std::to_string(ids[f]) + " out of range for field " + std::to_string(f));
    }
  }

  Mat<T> forward(const std::vector<T>& continuous, const std::vector<int>& ids, double dropout,
                 Rng* rng, Cache* cache) const {
    check(continuous, ids);
    const auto n_fields = static_cast<Eigen::Index>(ids.size());
    const auto d = column.cols();
    const auto n_cont = static_cast<Eigen::Index>(continuous.size());
    Mat<T> u(1, n_fields * d + n_cont);
    if (n_fields > 0) {
      Mat<T> x(n_fields, d);
      for (Eigen::Index f = 0; f < n_fields; ++f) {
        x.row(f) = embeddings[static_cast<std::size_t>(f)].row(ids[static_cast<std::size_t>(f)]) + column.row(f);
      }
      Mat<T> ctx = run_blocks<T>(blocks, std::move(x), nullptr, dropout, rng,
                              cache ? &cache->blocks : nullptr, nullptr);
      for (Eigen::Index f = 0; f < n_fields; ++f) u.block(0, f * d, 1, d) = ctx.row(f);
    }
    if (n_cont > 0) {
      Mat<T> c(1, n_cont);
      for (Eigen::Index i = 0; i < n_cont; ++i) c(0, i) = continuous[static_cast<std::size_t>(i)];
      u.rightCols(n_cont) = cont_norm.forward(c, cache ? &cache->cont : nullptr);
    }
    Mat<T> z = ff_in.forward(u);
    Mat<T> out = ff_out.forward(gelu(z));
    if (cache) {
      cache->ids = ids;
      cache->u = std::move(u);
      cache->z = std::move(z);
    }
    return out;
  }

  void backward(TabularEncoder& grad, const Cache& c, const Mat<T>& dout) const {
    Mat<T> dg = ff_out.backward(grad.ff_out, gelu(c.z), dout);
    Mat<T> du = ff_in.backward(grad.ff_in, c.u, gelu_backward(c.z, dg));
    const auto n_fields = static_cast<Eigen::Index>(c.ids.size());
    const auto d = column.cols();
    const auto n_cont = du.cols() - n_fields * d;
    if (n_cont > 0) cont_norm.backward(grad.cont_norm, c.cont, du.rightCols(n_cont));
    if (n_fields > 0) {
      Mat<T> dctx(n_fields, d);
      for (Eigen::Index f = 0; f < n_fields; ++f) dctx.row(f) = du.block(0, f * d, 1, d);
      Mat<T> dx = backprop_blocks(blocks, grad.blocks, c.blocks, std::move(dctx));
      for (Eigen::Index f = 0; f < n_fields; ++f) {
        grad.embeddings[static_cast<std::size_t>(f)].row(c.ids[static_cast<std::size_t>(f)]) += dx.row(f);
        grad.column.row(f) += dx.row(f);
      }
    }
  }
};

// ---------------------------------------------------------------- Text

/// Token + learned position embeddings, masked self-attention (PAD keys are
/// excluded), final layer norm; the CLS position is the branch embedding.
template <class T>
struct TextEncoder {
  using Scalar = T;
  Mat<T> token;     // vocab x d
  Mat<T> position;  // max_len x d
  std::vector<TransformerBlock<T>> blocks;
  LayerNorm<T> norm;

  struct Cache {
    std::vector<int> ids;  // active prefix
    std::vector<typename TransformerBlock<T>::Cache> blocks;
    typename LayerNorm<T>::Cache norm;
  };

  TextEncoder() = default;
  explicit TextEncoder(const EncoderConfig& cfg)
      : token(Mat<T>::Zero(cfg.text_vocab_size, cfg.d_model)),
        position(Mat<T>::Zero(cfg.max_len, cfg.d_model)),
        blocks(make_blocks<T>(cfg)),
        norm(cfg.d_model) {}

  void init(Rng& rng) {
    init_uniform(token, rng, 1.0);
    init_uniform(position, rng, 1.0);
    for (auto& b : blocks) b.init(rng);
    norm.init(rng);
  }

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + "token", token);
    f(prefix + "position", position);
    for_each_block(blocks, prefix, f);
    norm.for_each(prefix + "norm.", f);
  }

  Mat<T> forward(const std::vector<int>& ids, double dropout, Rng* rng, Cache* cache) const {
    require(!ids.empty() && ids.size() <= static_cast<std::size_t>(position.rows()),
            ErrorCode::ShapeMismatch, "token sequence length mismatch");
    for (int id : ids) {
      require(id >= 0 && id < token.rows(), ErrorCode::IdOutOfRange,
              "token id " + std::to_string(id) + " out of range");
    }
    // Trailing PAD positions can neither be attended to nor influence the CLS
    // row, so the sequence is cut after the last non-PAD token.
    std::size_t len = ids.size();
    while (len > 1 && ids[len - 1] == Vocabulary::kPad) --len;
    std::vector<int> active(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(len));
    std::vector<bool> mask(len);
    bool any_pad = false;
    for (std::size_t i = 0; i < len; ++i) {
      mask[i] = active[i] != Vocabulary::kPad;
      any_pad = any_pad || !mask[i];
    }
    if (!mask[0]) mask[0] = true;  // a leading PAD would leave the CLS row empty

    Mat<T> x(static_cast<Eigen::Index>(len), token.cols());
    for (std::size_t i = 0; i < len; ++i) {
      x.row(static_cast<Eigen::Index>(i)) = token.row(active[i]) + position.row(static_cast<Eigen::Index>(i));
    }
    Mat<T> h = run_blocks<T>(blocks, std::move(x), any_pad ? &mask : nullptr, dropout, rng,
                          cache ? &cache->blocks : nullptr, nullptr);
    Mat<T> out = norm.forward(h.topRows(1), cache ? &cache->norm : nullptr);
    if (cache) cache->ids = std::move(active);
    return out;
  }

  void backward(TextEncoder& grad, const Cache& c, const Mat<T>& dout) const {
    const auto len = static_cast<Eigen::Index>(c.ids.size());
    Mat<T> dh = Mat<T>::Zero(len, token.cols());
    dh.topRows(1) = norm.backward(grad.norm, c.norm, dout);
    Mat<T> dx = backprop_blocks(blocks, grad.blocks, c.blocks, std::move(dh));
    for (Eigen::Index i = 0; i < len; ++i) {
      grad.token.row(c.ids[static_cast<std::size_t>(i)]) += dx.row(i);
      grad.position.row(i) += dx.row(i);
    }
  }
};

// ---------------------------------------------------------------- Image

/// Linear patch embedding, class token, learned positions, transformer stack,
/// final layer norm on the class token.
template <class T>
struct ImageEncoder {
  using Scalar = T;
  Linear<T> patch;
  Mat<T> cls;       // 1 x d
  Mat<T> position;  // (patches + 1) x d
  std::vector<TransformerBlock<T>> blocks;
  LayerNorm<T> norm;

  struct Cache {
    Mat<T> patches;
    std::vector<typename TransformerBlock<T>::Cache> blocks;
    typename LayerNorm<T>::Cache norm;
  };

  ImageEncoder() = default;
  explicit ImageEncoder(const EncoderConfig& cfg)
      : patch(cfg.patch_dim(), cfg.d_model),
        cls(Mat<T>::Zero(1, cfg.d_model)),
        position(Mat<T>::Zero(cfg.n_patches() + 1, cfg.d_model)),
        blocks(make_blocks<T>(cfg)),
        norm(cfg.d_model) {}

  void init(Rng& rng) {
    patch.init(rng);
    init_uniform(cls, rng, 1.0);
    init_uniform(position, rng, 1.0);
    for (auto& b : blocks) b.init(rng);
    norm.init(rng);
  }

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    patch.for_each(prefix + "patch.", f);
    f(prefix + "cls", cls);
    f(prefix + "position", position);
    for_each_block(blocks, prefix, f);
    norm.for_each(prefix + "norm.", f);
  }

  /// patches: (n_patches x patch_dim), already standardized.
  Mat<T> forward(const Mat<T>& patches, double dropout, Rng* rng, Cache* cache,
                 std::vector<std::vector<Mat<T>>>* attention = nullptr) const {
    require(patches.rows() + 1 == position.rows() && patches.cols() == patch.in(),
            ErrorCode::DimensionMismatch, "patch sequence does not match encoder configuration");
    Mat<T> x(position.rows(), position.cols());
    x.topRows(1) = cls;
    x.bottomRows(patches.rows()) = patch.forward(patches);
    x += position;
    Mat<T> h = run_blocks<T>(blocks, std::move(x), nullptr, dropout, rng,
                          cache ? &cache->blocks : nullptr, attention);
    Mat<T> out = norm.forward(h.topRows(1), cache ? &cache->norm : nullptr);
    if (cache) cache->patches = patches;
    return out;
  }

  void backward(ImageEncoder& grad, const Cache& c, const Mat<T>& dout) const {
    Mat<T> dh = Mat<T>::Zero(position.rows(), position.cols());
    dh.topRows(1) = norm.backward(grad.norm, c.norm, dout);
    Mat<T> dx = backprop_blocks(blocks, grad.blocks, c.blocks, std::move(dh));
    grad.position += dx;
    grad.cls += dx.topRows(1);
    patch.backward(grad.patch, c.patches, dx.bottomRows(dx.rows() - 1));
  }
};

}  // namespace soda::nn
