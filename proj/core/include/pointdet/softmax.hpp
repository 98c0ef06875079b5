#pragma once

#include <span>
#include <vector>

#include "pointdet/mat.hpp"

namespace pointdet {

// All softmax variants are max-shifted so they stay finite for any finite
// input. Row variants normalise across each row; column variants across each
// column. An empty matrix maps to an empty matrix.

std::vector<double> softmax(std::span<const double> x);
std::vector<double> log_softmax(std::span<const double> x);

// log(sum_i exp(x_i)), max-shifted. Requires a non-empty input.
double log_sum_exp(std::span<const double> x);

Mat softmax_rows(const Mat& m);
Mat softmax_cols(const Mat& m);
Mat log_softmax_rows(const Mat& m);
Mat log_softmax_cols(const Mat& m);

}  // namespace pointdet
