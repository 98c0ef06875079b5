#include "pointdet/mil.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pointdet/softmax.hpp"

namespace pointdet {

namespace {

double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

}  // namespace

std::vector<int> derive_image_labels(std::span<const PointAnnotation> points, int num_classes) {
  if (num_classes <= 0) throw std::invalid_argument("derive_image_labels: num_classes <= 0");
  std::vector<int> y(static_cast<std::size_t>(num_classes), 0);
  for (const auto& pt : points) {
    if (pt.label < 0 || pt.label >= num_classes)
      throw std::invalid_argument("derive_image_labels: point label out of range");
    y[static_cast<std::size_t>(pt.label)] = 1;
  }
  return y;
}

std::vector<double> image_class_scores(const ProposalSet& ps) {
  ps.validate();
  if (ps.size() == 0) return {};
  const Mat sm = softmax_rows(ps.s);
  const Mat smI = softmax_cols(ps.s_I);
  const int c = ps.num_classes();
  std::vector<double> phi(static_cast<std::size_t>(c), 0.0);
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (int k = 0; k < c; ++k) phi[static_cast<std::size_t>(k)] += sm(i, k) * smI(i, k);
  return phi;
}

ImageMILResult image_mil_loss(const ProposalSet& ps, std::span<const int> image_labels) {
  ps.validate();
  const std::size_t n = ps.size();
  if (n > 0 && static_cast<int>(image_labels.size()) != ps.num_classes())
    throw std::invalid_argument("image_mil_loss: label vector size disagrees with classes");
  const std::size_t c = image_labels.size();

  ImageMILResult out;
  out.phi.assign(c, 0.0);
  out.d_s = Mat(n, n > 0 ? ps.s.cols() : 0);
  out.d_s_I = Mat(n, n > 0 ? ps.s_I.cols() : 0);

  Mat sm, smI;
  if (n > 0) {
    sm = softmax_rows(ps.s);
    smI = softmax_cols(ps.s_I);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < c; ++k) out.phi[k] += sm(i, k) * smI(i, k);
  }

  // Binary cross-entropy per class on the clamped scores, plus the
  // per-class upstream gradient g = dL/dphi.
  std::vector<double> g(c, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    const double p = clamp_prob(out.phi[k]);
    if (image_labels[k] != 0) {
      out.value -= std::log(p);
      g[k] = -1.0 / p;
    } else {
      out.value -= std::log1p(-p);
      g[k] = 1.0 / (1.0 - p);
    }
  }
  if (n == 0) return out;

  // d phi_c / d s(i,k): the row softmax couples every column of a row;
  // t_i collects the row's total phi-sensitivity so the background column
  // (and every other column) picks up its -sm * t share.
  for (std::size_t i = 0; i < n; ++i) {
    double t = 0.0;
    for (std::size_t k = 0; k < c; ++k) t += g[k] * smI(i, k) * sm(i, k);
    for (std::size_t k = 0; k < ps.s.cols(); ++k) {
      double direct = k < c ? g[k] * smI(i, k) * sm(i, k) : 0.0;
      out.d_s(i, k) = direct - sm(i, k) * t;
    }
  }
  // d phi_c / d s_I(i,c): the column softmax couples rows within a class;
  // phi_c itself reappears because sum_j smI(j,c) * sm(j,c) = phi_c.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k)
      out.d_s_I(i, k) = g[k] * smI(i, k) * (sm(i, k) - out.phi[k]);
  return out;
}

std::vector<std::vector<int>> build_bags(std::span<const PointAnnotation> points,
                                         const ProposalSet& ps,
                                         std::span<const int> det_labels) {
  ps.validate();
  if (det_labels.size() != ps.size())
    throw std::invalid_argument("build_bags: label count disagrees with proposals");
  std::vector<std::vector<int>> bags(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = 0; j < ps.size(); ++j)
      if (det_labels[j] == points[i].label && contains(ps.boxes[j], points[i].p))
        bags[i].push_back(static_cast<int>(j));
  return bags;
}

namespace {

// Shared forward pass for one bag: member log-scores L_k and the bag's
// log phi. a_k enters as a constant (no gradient path through s).
struct BagForward {
  std::vector<double> member_l;
  double log_phi = 0.0;
};

BagForward bag_forward(const Mat& lsm, const Mat& lsmP, std::span<const int> bag, int label) {
  BagForward f;
  double t = 0.0;
  for (int j : bag) t += lsmP(static_cast<std::size_t>(j), 0);
  f.member_l.reserve(bag.size());
  for (int j : bag) {
    const auto r = static_cast<std::size_t>(j);
    f.member_l.push_back(lsm(r, static_cast<std::size_t>(label)) + lsmP(r, 1) - lsmP(r, 0) + t);
  }
  f.log_phi = log_sum_exp(f.member_l);
  return f;
}

void check_bag(const ProposalSet& ps, std::span<const int> bag, int label) {
  if (label < 0 || label >= ps.num_classes())
    throw std::invalid_argument("point bag: label out of range");
  for (int j : bag)
    if (j < 0 || static_cast<std::size_t>(j) >= ps.size())
      throw std::invalid_argument("point bag: member index out of range");
}

}  // namespace

std::optional<double> point_bag_score(const ProposalSet& ps,
                                      std::span<const int> bag,
                                      int bag_label) {
  ps.validate();
  if (bag.empty()) return std::nullopt;
  check_bag(ps, bag, bag_label);
  const Mat lsm = log_softmax_rows(ps.s);
  const Mat lsmP = log_softmax_rows(ps.s_P);
  return std::exp(bag_forward(lsm, lsmP, bag, bag_label).log_phi);
}

PointMILResult point_mil_loss(const ProposalSet& ps,
                              const std::vector<std::vector<int>>& bags,
                              std::span<const int> bag_labels) {
  ps.validate();
  if (bags.size() != bag_labels.size())
    throw std::invalid_argument("point_mil_loss: bag/label count mismatch");
  PointMILResult out;
  out.bag_scores.assign(bags.size(), std::nullopt);
  out.d_s_P = Mat(ps.size(), ps.size() > 0 ? 2 : 0);
  if (bags.empty()) return out;

  const Mat lsm = log_softmax_rows(ps.s);
  const Mat lsmP = log_softmax_rows(ps.s_P);

  double total = 0.0;
  for (std::size_t b = 0; b < bags.size(); ++b) {
    if (bags[b].empty()) continue;
    check_bag(ps, bags[b], bag_labels[b]);
    const BagForward f = bag_forward(lsm, lsmP, bags[b], bag_labels[b]);
    out.bag_scores[b] = std::exp(f.log_phi);
    total += -f.log_phi;
    ++out.active_bags;

    // d(-log phi)/d s_P(j,1) = p_j - w_j where w_j = exp(L_j - log phi) is
    // the posterior that member j is the bag's positive. Column 0 is the
    // exact negation because the two-way softmax ties them.
    for (std::size_t k = 0; k < bags[b].size(); ++k) {
      const auto j = static_cast<std::size_t>(bags[b][k]);
      const double w = std::exp(f.member_l[k] - f.log_phi);
      const double p = std::exp(lsmP(j, 1));
      out.d_s_P(j, 1) += p - w;
      out.d_s_P(j, 0) += w - p;
    }
  }
  if (out.active_bags == 0) return out;

  const double inv = 1.0 / static_cast<double>(out.active_bags);
  out.value = total * inv;
  for (double& v : out.d_s_P.data()) v *= inv;
  return out;
}

TotalLossResult total_loss(double l_det,
                           const ImageMILResult& image,
                           const PointMILResult& point,
                           const LossWeights& w) {
  if (image.d_s.rows() != point.d_s_P.rows())
    throw std::invalid_argument("total_loss: gradient row counts disagree");
  TotalLossResult out;
  out.l_det = l_det;
  out.l_img = image.value;
  out.l_pt = point.value;
  out.value = l_det + w.lambda1 * image.value + w.lambda2 * point.value;
  out.d_s = image.d_s;
  for (double& v : out.d_s.data()) v *= w.lambda1;
  out.d_s_I = image.d_s_I;
  for (double& v : out.d_s_I.data()) v *= w.lambda1;
  out.d_s_P = point.d_s_P;
  for (double& v : out.d_s_P.data()) v *= w.lambda2;
  return out;
}

}  // namespace pointdet
