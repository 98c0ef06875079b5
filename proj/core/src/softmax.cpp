#include "pointdet/softmax.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pointdet {

std::vector<double> softmax(std::span<const double> x) {
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

std::vector<double> log_softmax(std::span<const double> x) {
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  const double lse = log_sum_exp(x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
  return out;
}

double log_sum_exp(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("log_sum_exp: empty input");
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

Mat softmax_rows(const Mat& m) {
  Mat out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto s = softmax(m.row(r));
    std::copy(s.begin(), s.end(), out.row(r).begin());
  }
  return out;
}

Mat log_softmax_rows(const Mat& m) {
  Mat out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto s = log_softmax(m.row(r));
    std::copy(s.begin(), s.end(), out.row(r).begin());
  }
  return out;
}

namespace {

// Applies fn to each column of m gathered as a contiguous vector, writing the
// result back column-wise.
template <typename Fn>
Mat per_column(const Mat& m, Fn fn) {
  Mat out(m.rows(), m.cols());
  std::vector<double> col(m.rows());
  for (std::size_t c = 0; c < m.cols(); ++c) {
    for (std::size_t r = 0; r < m.rows(); ++r) col[r] = m(r, c);
    const std::vector<double> res = fn(std::span<const double>(col));
    for (std::size_t r = 0; r < m.rows(); ++r) out(r, c) = res[r];
  }
  return out;
}

}  // namespace

Mat softmax_cols(const Mat& m) {
  return per_column(m, [](std::span<const double> v) { return softmax(v); });
}

Mat log_softmax_cols(const Mat& m) {
  return per_column(m, [](std::span<const double> v) { return log_softmax(v); });
}

}  // namespace pointdet
