// Copyright 2026 The leakgym Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef LEAKGYM_AGENT_MLP_HPP_
#define LEAKGYM_AGENT_MLP_HPP_

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "leakgym/rng.hpp"

namespace leakgym::nn {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Shape of a fully connected tanh network with a linear output layer.
//
// Parameters live in one flat vector. For each layer l = 0 .. L-1 in order
// it holds W_l (out_l x in_l, column-major) immediately followed by b_l
// (out_l), so layer l starts at offset sum_{k<l} out_k * (in_k + 1).
// Gradients use the same layout.
class MlpLayout {
 public:
  MlpLayout() = default;
  explicit MlpLayout(std::vector<Eigen::Index> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("MLP needs >= 2 sizes");
    offsets_.push_back(0);
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      if (sizes_[l] < 1 || sizes_[l + 1] < 1) {
        throw std::invalid_argument("MLP layer sizes must be positive");
      }
      offsets_.push_back(offsets_.back() + sizes_[l + 1] * (sizes_[l] + 1));
    }
  }

  Eigen::Index num_layers() const { return static_cast<Eigen::Index>(sizes_.size()) - 1; }
  Eigen::Index input_dim() const { return sizes_.front(); }
  Eigen::Index output_dim() const { return sizes_.back(); }
  Eigen::Index num_params() const { return offsets_.back(); }
  Eigen::Index in(Eigen::Index l) const { return sizes_[l]; }
  Eigen::Index out(Eigen::Index l) const { return sizes_[l + 1]; }
  Eigen::Index weight_offset(Eigen::Index l) const { return offsets_[l]; }
  Eigen::Index bias_offset(Eigen::Index l) const { return offsets_[l] + out(l) * in(l); }
  const std::vector<Eigen::Index>& sizes() const { return sizes_; }

 private:
  std::vector<Eigen::Index> sizes_;
  std::vector<Eigen::Index> offsets_;
};

template <typename Scalar>
Eigen::Map<const Matrix<Scalar>> weights(const MlpLayout& layout,
                                         const Vector<Scalar>& params,
                                         Eigen::Index l) {
  return {params.data() + layout.weight_offset(l), layout.out(l), layout.in(l)};
}

template <typename Scalar>
Eigen::Map<const Vector<Scalar>> bias(const MlpLayout& layout,
                                      const Vector<Scalar>& params,
                                      Eigen::Index l) {
  return {params.data() + layout.bias_offset(l), layout.out(l)};
}

// Activations kept for the backward pass: act[0] is the input batch,
// act[l] the tanh output of hidden layer l.
template <typename Scalar>
struct MlpTape {
  std::vector<Matrix<Scalar>> act;
};

// x is input_dim x batch; returns output_dim x batch.
template <typename Scalar>
Matrix<Scalar> mlp_forward(const MlpLayout& layout, const Vector<Scalar>& params,
                           const Matrix<Scalar>& x, MlpTape<Scalar>* tape = nullptr) {
  if (x.rows() != layout.input_dim()) {
    throw std::invalid_argument("MLP input has wrong dimension");
  }
  const Eigen::Index L = layout.num_layers();
  if (tape) {
    tape->act.resize(static_cast<std::size_t>(L));
    tape->act[0] = x;
  }
  Matrix<Scalar> h = x;
  for (Eigen::Index l = 0; l < L; ++l) {
    Matrix<Scalar> z = weights(layout, params, l) * h;
    z.colwise() += bias(layout, params, l);
    if (l + 1 == L) return z;
    h = z.array().tanh().matrix();
    if (tape) tape->act[static_cast<std::size_t>(l + 1)] = h;
  }
  return h;
}

// Accumulates d(loss)/d(params) into grad given d(loss)/d(output).
template <typename Scalar>
void mlp_backward(const MlpLayout& layout, const Vector<Scalar>& params,
                  const MlpTape<Scalar>& tape, Matrix<Scalar> delta,
                  Vector<Scalar>& grad) {
  for (Eigen::Index l = layout.num_layers() - 1; l >= 0; --l) {
    const Matrix<Scalar>& a = tape.act[static_cast<std::size_t>(l)];
    Eigen::Map<Matrix<Scalar>> gw(grad.data() + layout.weight_offset(l),
                                  layout.out(l), layout.in(l));
    Eigen::Map<Vector<Scalar>> gb(grad.data() + layout.bias_offset(l), layout.out(l));
    gw.noalias() += delta * a.transpose();
    gb += delta.rowwise().sum();
    if (l > 0) {
      Matrix<Scalar> back = weights(layout, params, l).transpose() * delta;
      delta = (back.array() * (Scalar(1) - a.array().square())).matrix();
    }
  }
}

// Uniform(-g*sqrt(6/(in+out)), +) weights, zero biases. The last layer is
// scaled by last_gain; last_gain = 0 gives an all-zero output layer.
template <typename Scalar>
Vector<Scalar> mlp_init(const MlpLayout& layout, Rng& rng, Scalar last_gain = Scalar(1)) {
  Vector<Scalar> params = Vector<Scalar>::Zero(layout.num_params());
  for (Eigen::Index l = 0; l < layout.num_layers(); ++l) {
    const Scalar gain = l + 1 == layout.num_layers() ? last_gain : Scalar(1);
    if (gain == Scalar(0)) continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(layout.in(l) + layout.out(l)));
    const Eigen::Index n = layout.out(l) * layout.in(l);
    for (Eigen::Index k = 0; k < n; ++k) {
      params[layout.weight_offset(l) + k] =
          gain * static_cast<Scalar>(rng.uniform(-limit, limit));
    }
  }
  return params;
}

// Column-wise log-softmax of a logits matrix.
template <typename Scalar>
Matrix<Scalar> log_softmax(const Matrix<Scalar>& logits) {
  Matrix<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const Scalar m = logits.col(c).maxCoeff();
    const Scalar lse = m + std::log((logits.col(c).array() - m).exp().sum());
    out.col(c) = logits.col(c).array() - lse;
  }
  return out;
}

}  // namespace leakgym::nn

#endif  // LEAKGYM_AGENT_MLP_HPP_
