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

// Loop-based reference implementations used as test oracles. Deliberately
// written without Eigen expressions or shared code from the library.
#ifndef LEAKGYM_TESTS_SUPPORT_ORACLES_HPP_
#define LEAKGYM_TESTS_SUPPORT_ORACLES_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

// Fully connected net, tanh on hidden layers, identity on the output. The
// flat parameter layout is: per layer, W (out x in, column-major) then b.
inline std::vector<double> mlp(const std::vector<long>& sizes, const double* params,
                               std::vector<double> x) {
  std::size_t at = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t in = sizes[l];
    const std::size_t out = sizes[l + 1];
    std::vector<double> y(out, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      double s = params[at + in * out + o];
      for (std::size_t i = 0; i < in; ++i) s += params[at + i * out + o] * x[i];
      y[o] = l + 2 < sizes.size() ? std::tanh(s) : s;
    }
    at += out * (in + 1);
    x = std::move(y);
  }
  return x;
}

struct Sample {
  std::vector<double> obs;
  std::size_t action;
  double old_log_prob;
  double advantage;
  double ret;
};

// Mean over samples of  -min(rA, clip(r)A) + cv (V - R)^2 - ce H.
inline double ppo_loss(const std::vector<long>& psizes, const double* pparams,
                       const std::vector<long>& vsizes, const double* vparams,
                       const std::vector<Sample>& batch, double clip, double cv,
                       double ce) {
  double total = 0.0;
  for (const Sample& s : batch) {
    const std::vector<double> z = mlp(psizes, pparams, s.obs);
    const double zmax = *std::max_element(z.begin(), z.end());
    double norm = 0.0;
    for (double v : z) norm += std::exp(v - zmax);
    const double log_norm = zmax + std::log(norm);
    double entropy = 0.0;
    for (double v : z) entropy -= std::exp(v - log_norm) * (v - log_norm);
    const double ratio = std::exp(z[s.action] - log_norm - s.old_log_prob);
    const double clipped = std::min(std::max(ratio, 1.0 - clip), 1.0 + clip);
    const double surr = std::min(ratio * s.advantage, clipped * s.advantage);
    const double v = mlp(vsizes, vparams, s.obs)[0];
    total += -surr + cv * (v - s.ret) * (v - s.ret) - ce * entropy;
  }
  return total / static_cast<double>(batch.size());
}

// A_t = sum_l (gamma lambda)^l delta_{t+l} within one terminated episode.
inline std::vector<double> gae_direct(const std::vector<double>& rewards,
                                      const std::vector<double>& values, double gamma,
                                      double lambda) {
  const std::size_t n = rewards.size();
  std::vector<double> adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double w = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      const double next = k + 1 < n ? values[k + 1] : 0.0;
      adv[t] += w * (rewards[k] + gamma * next - values[k]);
      w *= gamma * lambda;
    }
  }
  return adv;
}

}  // namespace oracle

#endif  // LEAKGYM_TESTS_SUPPORT_ORACLES_HPP_
