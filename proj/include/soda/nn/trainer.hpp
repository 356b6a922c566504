#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "soda/error.hpp"
#include "soda/nn/tensor.hpp"
#include "soda/rng.hpp"

namespace soda::nn {

struct TrainConfig {
  double learning_rate = 0.05;
  int epochs = 100;
  int batch_size = 32;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const {
    require(learning_rate > 0.0, ErrorCode::InvalidArgument, "learning_rate must be positive");
    require(epochs >= 1, ErrorCode::InvalidArgument, "epochs must be >= 1");
    require(batch_size >= 1, ErrorCode::InvalidArgument, "batch_size must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"seed", c.seed},
       {"shuffle", c.shuffle}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("epochs").get_to(c.epochs);
  j.at("batch_size").get_to(c.batch_size);
  j.at("seed").get_to(c.seed);
  j.at("shuffle").get_to(c.shuffle);
}

/// Plain mini-batch SGD (no momentum, no weight decay). batch_loss(params,
/// indices, grad, dropout_rng) returns the batch-mean loss and accumulates its
/// gradient into grad (zeroed before each call). Returns the per-epoch mean
/// training loss.
template <class P, class BatchLoss>
std::vector<double> sgd_train(P& params, std::size_t n_rows, const TrainConfig& cfg, BatchLoss&& batch_loss) {
  cfg.validate();
  require(n_rows > 0, ErrorCode::EmptyDataset, "no training rows");
  Rng order_rng(mix_seed(cfg.seed, 1));
  Rng dropout_rng(mix_seed(cfg.seed, 2));
  std::vector<std::size_t> order(n_rows);
  std::iota(order.begin(), order.end(), std::size_t{0});

  P grad = zeros_like(params);
  auto param_list = tensors(params);
  auto grad_list = tensors(grad);
  using T = typename P::Scalar;
  const T lr = static_cast<T>(cfg.learning_rate);

  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) order_rng.shuffle(order);
    double total = 0;
    for (std::size_t start = 0; start < n_rows; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(n_rows, start + static_cast<std::size_t>(cfg.batch_size));
      for (auto& g : grad_list) g.value->setZero();
      const double loss = batch_loss(static_cast<const P&>(params),
                                     std::span<const std::size_t>(order.data() + start, end - start), grad,
                                     dropout_rng);
      if (!std::isfinite(loss)) {
        fail(ErrorCode::DivergenceError, "non-finite loss at epoch " + std::to_string(epoch + 1));
      }
      for (std::size_t i = 0; i < param_list.size(); ++i) {
        param_list[i].value->noalias() -= lr * *grad_list[i].value;
      }
      total += loss * static_cast<double>(end - start);
    }
    history.push_back(total / static_cast<double>(n_rows));
  }
  if (!all_finite(params)) fail(ErrorCode::DivergenceError, "parameters became non-finite");
  return history;
}

}  // namespace soda::nn
