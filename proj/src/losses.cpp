#include "pdm/losses.hpp"

namespace pdm {

std::map<std::string, double> LossBreakdown::parts() const {
  return {{"sample", sample},       {"vote", vote},     {"cls", cls},
          {"loc", loc},             {"size", size},     {"angle_bin", angle_bin},
          {"angle_res", angle_res}, {"corner", corner}, {"heatmap", heatmap},
          {"l2", l2}};
}

double bce(double prob, double target) {
  double p = std::clamp(prob, kProbEps, 1.0 - kProbEps);
  return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

double bce_dprob(double prob, double target) {
  double p = std::clamp(prob, kProbEps, 1.0 - kProbEps);
  return (p - target) / (p * (1.0 - p));
}

double smooth_l1(double err) {
  double a = std::abs(err);
  return a < 1.0 ? 0.5 * err * err : a - 0.5;
}

double smooth_l1_grad(double err) {
  return std::abs(err) < 1.0 ? err : (err > 0 ? 1.0 : -1.0);
}

double sampling_loss(const Mat& scores, const SceneSample& scene,
                     const std::vector<int>& point_ids, Mat* dscores) {
  const Eigen::Index n = scores.rows();
  if (static_cast<Eigen::Index>(point_ids.size()) != n)
    throw std::invalid_argument("sampling_loss: id/score row mismatch");
  if (dscores) *dscores = Mat::Zero(n, scores.cols());
  if (n == 0) return 0.0;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int pid = point_ids[static_cast<size_t>(i)];
    const int owner = scene.box_of_point[static_cast<size_t>(pid)];
    const Vec3 p = scene.cloud.coords.row(pid).transpose();
    for (Eigen::Index c = 0; c < scores.cols(); ++c) {
      double weight = 1.0, target = 0.0;
      if (owner >= 0 && scene.gt[static_cast<size_t>(owner)].label == c) {
        target = 1.0;
        weight = centrality_mask(scene.gt[static_cast<size_t>(owner)], p);
      }
      loss += weight * bce(scores(i, c), target);
      if (dscores) (*dscores)(i, c) = weight * bce_dprob(scores(i, c), target) / n;
    }
  }
  return loss / n;
}

double vote_loss(const Mat& positions, const std::vector<int>& owner,
                 const std::vector<Box3D>& gt, Mat* dpositions) {
  if (dpositions) *dpositions = Mat::Zero(positions.rows(), 3);
  int n_fg = 0;
  for (int o : owner) n_fg += o >= 0;
  if (n_fg == 0) return 0.0;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < positions.rows(); ++i) {
    const int o = owner[static_cast<size_t>(i)];
    if (o < 0) continue;
    Vec3 err = positions.row(i).transpose() - gt[static_cast<size_t>(o)].center;
    for (int a = 0; a < 3; ++a) {
      loss += smooth_l1(err[a]);
      if (dpositions) (*dpositions)(i, a) = smooth_l1_grad(err[a]) / n_fg;
    }
  }
  return loss / n_fg;
}

double cls_loss(const Mat& cls_probs, const std::vector<int>& owner,
                const std::vector<Box3D>& gt, const Mat& seed_positions,
                bool soft_targets, Mat* dprobs) {
  const Eigen::Index n = cls_probs.rows();
  if (dprobs) *dprobs = Mat::Zero(n, cls_probs.cols());
  if (n == 0) return 0.0;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int o = owner[static_cast<size_t>(i)];
    for (Eigen::Index c = 0; c < cls_probs.cols(); ++c) {
      double target = 0.0;
      if (o >= 0 && gt[static_cast<size_t>(o)].label == c) {
        target = soft_targets
                     ? centrality_mask(gt[static_cast<size_t>(o)],
                                       seed_positions.row(i).transpose())
                     : 1.0;
      }
      loss += bce(cls_probs(i, c), target);
      if (dprobs) (*dprobs)(i, c) = bce_dprob(cls_probs(i, c), target) / n;
    }
  }
  return loss / n;
}

RegLossParts reg_loss(const Mat& reg_out, const Mat& seed_positions,
                      const std::vector<int>& owner, const std::vector<Box3D>& gt,
                      int angle_bins, Mat* dreg) {
  RegLossParts parts;
  if (dreg) *dreg = Mat::Zero(reg_out.rows(), reg_out.cols());
  int n_fg = 0;
  for (int o : owner) n_fg += o >= 0;
  if (n_fg == 0) return parts;
  const double half_bin = M_PI / angle_bins;
  const double inv = 1.0 / n_fg;

  for (Eigen::Index i = 0; i < reg_out.rows(); ++i) {
    const int o = owner[static_cast<size_t>(i)];
    if (o < 0) continue;
    const Box3D& box = gt[static_cast<size_t>(o)];

    // location
    Vec3 center = seed_positions.row(i).transpose() + reg_out.row(i).head(3).transpose();
    for (int a = 0; a < 3; ++a) {
      double err = center[a] - box.center[a];
      parts.loc += inv * smooth_l1(err);
      if (dreg) (*dreg)(i, a) += inv * smooth_l1_grad(err);
    }

    // size via softplus
    Vec3 size, dsize_dlogit;
    for (int a = 0; a < 3; ++a) {
      double logit = reg_out(i, 3 + a);
      size[a] = softplus(logit);
      dsize_dlogit[a] = sigmoid(logit);
      double err = size[a] - box.size[a];
      parts.size += inv * smooth_l1(err);
      if (dreg) (*dreg)(i, 3 + a) += inv * smooth_l1_grad(err) * dsize_dlogit[a];
    }

    // angle bin: softmax cross entropy against the true bin
    const int tbin = yaw_to_bin(box.yaw, angle_bins);
    Vec logits = reg_out.row(i).segment(6, angle_bins).transpose();
    Vec sm = (logits.array() - logits.maxCoeff()).exp();
    sm /= sm.sum();
    parts.angle_bin -= inv * std::log(std::max(sm[tbin], kProbEps));
    if (dreg) {
      for (int b = 0; b < angle_bins; ++b)
        (*dreg)(i, 6 + b) += inv * (sm[b] - (b == tbin ? 1.0 : 0.0));
    }

    // angle residual, normalized by half the bin width
    const double res_target = wrap_angle(box.yaw - bin_center(tbin, angle_bins)) / half_bin;
    const double res_pred = reg_out(i, 6 + angle_bins + tbin);
    parts.angle_res += inv * smooth_l1(res_pred - res_target);
    if (dreg)
      (*dreg)(i, 6 + angle_bins + tbin) += inv * smooth_l1_grad(res_pred - res_target);

    // corner loss; pred yaw decoded with the GT bin, min over yaw vs yaw+pi
    const double yaw_pred = bin_center(tbin, angle_bins) + res_pred * half_bin;
    Box3D pred_box(center, size.cwiseMax(1e-9), yaw_pred, box.label, 1.0);
    auto pc = pred_box.corners();
    auto gc0 = box.corners();
    Box3D flipped(box.center, box.size, box.yaw + M_PI, box.label, 1.0);
    auto gc1 = flipped.corners();
    double loss0 = (pc - gc0).cwiseAbs().sum() / 8.0;
    double loss1 = (pc - gc1).cwiseAbs().sum() / 8.0;
    const auto& gc = loss0 <= loss1 ? gc0 : gc1;
    parts.corner += inv * std::min(loss0, loss1);
    if (dreg) {
      const double cy = std::cos(yaw_pred), sy = std::sin(yaw_pred);
      int r = 0;
      for (int sx : {-1, 1})
        for (int syn : {-1, 1})
          for (int sz : {-1, 1}) {
            Vec3 sign((pc(r, 0) > gc(r, 0)) - (pc(r, 0) < gc(r, 0)),
                      (pc(r, 1) > gc(r, 1)) - (pc(r, 1) < gc(r, 1)),
                      (pc(r, 2) > gc(r, 2)) - (pc(r, 2) < gc(r, 2)));
            sign *= inv / 8.0;
            // d corner / d center = I
            for (int a = 0; a < 3; ++a) (*dreg)(i, a) += sign[a];
            // d corner / d size (through the local corner offset)
            const double lx = sx * 0.5, ly = syn * 0.5, lz = sz * 0.5;
            (*dreg)(i, 3) += (sign[0] * cy * lx + sign[1] * sy * lx) * dsize_dlogit[0];
            (*dreg)(i, 4) += (-sign[0] * sy * ly + sign[1] * cy * ly) * dsize_dlogit[1];
            (*dreg)(i, 5) += sign[2] * lz * dsize_dlogit[2];
            // d corner / d yaw
            const double px = lx * size[0], py = ly * size[1];
            double dyaw = sign[0] * (-sy * px - cy * py) + sign[1] * (cy * px - sy * py);
            (*dreg)(i, 6 + angle_bins + tbin) += dyaw * half_bin;
            ++r;
          }
    }
  }
  return parts;
}

double heatmap_loss(const Heatmap& pred, const Heatmap& target, Heatmap* dpred) {
  if (pred.planes.size() != target.planes.size())
    throw std::invalid_argument("heatmap_loss: class-count mismatch");
  if (dpred) *dpred = Heatmap::zeros(pred.spec, static_cast<int>(pred.planes.size()));
  double loss = 0.0;
  int n_pos = 0;
  for (size_t c = 0; c < pred.planes.size(); ++c) {
    const Mat& p = pred.planes[c];
    const Mat& t = target.planes[c];
    if (p.rows() != t.rows() || p.cols() != t.cols())
      throw std::invalid_argument("heatmap_loss: shape mismatch");
    for (Eigen::Index y = 0; y < p.rows(); ++y)
      for (Eigen::Index x = 0; x < p.cols(); ++x) {
        double pv = std::clamp(p(y, x), kProbEps, 1.0 - kProbEps);
        double tv = t(y, x);
        double g = 0.0;
        if (tv >= 1.0) {
          ++n_pos;
          loss -= (1.0 - pv) * (1.0 - pv) * std::log(pv);
          g = (1.0 - pv) * (2.0 * std::log(pv) - (1.0 - pv) / pv);
        } else {
          double w = std::pow(1.0 - tv, 4.0);
          loss -= w * pv * pv * std::log(1.0 - pv);
          g = w * pv * (pv / (1.0 - pv) - 2.0 * std::log(1.0 - pv));
        }
        if (dpred) dpred->planes[c](y, x) = g;
      }
  }
  const double norm = std::max(1, n_pos);
  if (dpred)
    for (auto& plane : dpred->planes) plane /= norm;
  return loss / norm;
}

double total_loss(LossBreakdown& parts, const std::map<std::string, double>& weights,
                  double l2_lambda, double param_sq_sum) {
  auto w = [&](const char* name) {
    auto it = weights.find(name);
    return it == weights.end() ? 1.0 : it->second;
  };
  parts.l2 = l2_lambda * param_sq_sum;
  parts.total = w("sample") * parts.sample + w("vote") * parts.vote +
                w("cls") * parts.cls + w("loc") * parts.loc + w("size") * parts.size +
                w("angle_bin") * parts.angle_bin + w("angle_res") * parts.angle_res +
                w("corner") * parts.corner + w("heatmap") * parts.heatmap + parts.l2;
  return parts.total;
}

}  // namespace pdm
