#pragma once

#include "pdm/types.hpp"

#include <random>
#include <string>

namespace pdm {

enum class Act { None, Relu, Sigmoid };

struct DenseLayer {
  Mat W;  // out x in
  Vec b;  // out
  Act act = Act::None;
};

struct DenseCache {
  Mat x;    // input
  Mat pre;  // pre-activation
  double min_abs_pre = std::numeric_limits<double>::infinity();  // relu kink gap
};

struct DenseGrads {
  Mat gW;
  Vec gb;
};

// activation(x * W^T + b); x is B x in.
Mat dense_forward(const DenseLayer& layer, const Mat& x, DenseCache* cache = nullptr);

// Exact reverse-mode gradients of dense_forward. Any output pointer may be
// null to skip that gradient.
void dense_backward(const DenseLayer& layer, const DenseCache& cache,
                    const Mat& upstream, Mat* grad_x, DenseGrads* grads);

// Glorot-uniform init in +-sqrt(6/(in+out)).
DenseLayer make_dense(int in, int out, Act act, std::mt19937_64& rng);

// A plain layer stack. Hidden layers are relu unless the final activation
// overrides everything via `last_act`.
struct Mlp {
  std::vector<DenseLayer> layers;

  Mat forward(const Mat& x, std::vector<DenseCache>* caches = nullptr) const;
  // Returns grad wrt the input; accumulates parameter grads into `grads`
  // (resized/zeroed by the caller via ensure_grads).
  Mat backward(const std::vector<DenseCache>& caches, const Mat& upstream,
               std::vector<DenseGrads>* grads) const;
  double min_abs_pre(const std::vector<DenseCache>& caches) const;
};

Mlp make_mlp(int in, const std::vector<int>& hidden, int out, Act last_act,
             std::mt19937_64& rng);
void ensure_grads(const Mlp& mlp, std::vector<DenseGrads>* grads);

double sigmoid(double x);
double softplus(double x);

}  // namespace pdm
