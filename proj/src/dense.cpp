#include "pdm/dense.hpp"

namespace pdm {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double softplus(double x) {
  // log1p(exp(x)) without overflow for large x
  return x > 30.0 ? x : std::log1p(std::exp(x));
}

Mat dense_forward(const DenseLayer& layer, const Mat& x, DenseCache* cache) {
  if (x.cols() != layer.W.cols())
    throw std::invalid_argument("dense_forward: input width mismatch");
  Mat pre = (x * layer.W.transpose()).rowwise() + layer.b.transpose();
  if (cache) {
    cache->x = x;
    cache->pre = pre;
    cache->min_abs_pre = layer.act == Act::Relu && pre.size() > 0
                             ? pre.array().abs().minCoeff()
                             : std::numeric_limits<double>::infinity();
  }
  switch (layer.act) {
    case Act::None:
      return pre;
    case Act::Relu:
      return pre.cwiseMax(0.0);
    case Act::Sigmoid:
      return pre.unaryExpr([](double v) { return sigmoid(v); });
  }
  throw std::logic_error("unreachable");
}

void dense_backward(const DenseLayer& layer, const DenseCache& cache,
                    const Mat& upstream, Mat* grad_x, DenseGrads* grads) {
  if (upstream.rows() != cache.pre.rows() || upstream.cols() != cache.pre.cols())
    throw std::invalid_argument("dense_backward: upstream shape mismatch");
  Mat dpre;
  switch (layer.act) {
    case Act::None:
      dpre = upstream;
      break;
    case Act::Relu:
      dpre = (cache.pre.array() > 0.0).cast<double>() * upstream.array();
      break;
    case Act::Sigmoid: {
      Mat s = cache.pre.unaryExpr([](double v) { return sigmoid(v); });
      dpre = upstream.array() * s.array() * (1.0 - s.array());
      break;
    }
  }
  if (grad_x) *grad_x = dpre * layer.W;
  if (grads) {
    grads->gW += dpre.transpose() * cache.x;
    grads->gb += dpre.colwise().sum().transpose();
  }
}

DenseLayer make_dense(int in, int out, Act act, std::mt19937_64& rng) {
  double bound = std::sqrt(6.0 / (in + out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  DenseLayer l;
  l.W = Mat::NullaryExpr(out, in, [&]() { return dist(rng); });
  l.b = Vec::Zero(out);
  l.act = act;
  return l;
}

Mat Mlp::forward(const Mat& x, std::vector<DenseCache>* caches) const {
  if (caches) caches->assign(layers.size(), DenseCache{});
  Mat h = x;
  for (size_t i = 0; i < layers.size(); ++i)
    h = dense_forward(layers[i], h, caches ? &(*caches)[i] : nullptr);
  return h;
}

Mat Mlp::backward(const std::vector<DenseCache>& caches, const Mat& upstream,
                  std::vector<DenseGrads>* grads) const {
  Mat up = upstream;
  for (size_t i = layers.size(); i-- > 0;) {
    Mat gx;
    dense_backward(layers[i], caches[i], up, &gx, grads ? &(*grads)[i] : nullptr);
    up = std::move(gx);
  }
  return up;
}

double Mlp::min_abs_pre(const std::vector<DenseCache>& caches) const {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& c : caches) m = std::min(m, c.min_abs_pre);
  return m;
}

Mlp make_mlp(int in, const std::vector<int>& hidden, int out, Act last_act,
             std::mt19937_64& rng) {
  Mlp mlp;
  int prev = in;
  for (int h : hidden) {
    mlp.layers.push_back(make_dense(prev, h, Act::Relu, rng));
    prev = h;
  }
  mlp.layers.push_back(make_dense(prev, out, last_act, rng));
  return mlp;
}

void ensure_grads(const Mlp& mlp, std::vector<DenseGrads>* grads) {
  grads->resize(mlp.layers.size());
  for (size_t i = 0; i < mlp.layers.size(); ++i) {
    (*grads)[i].gW = Mat::Zero(mlp.layers[i].W.rows(), mlp.layers[i].W.cols());
    (*grads)[i].gb = Vec::Zero(mlp.layers[i].b.size());
  }
}

}  // namespace pdm
