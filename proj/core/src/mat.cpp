// SPDX-License-Identifier: Apache-2.0
#include "slu/mat.hpp"

#include <algorithm>
#include <cmath>

namespace slu {

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("Mat: " + std::to_string(data_.size()) +
                         " values do not fill shape " + shape_string(rows, cols));
  }
}

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("Mat: ragged initializer list");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

void Mat::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Mat::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

void Mat::append_rows(const Mat& extra) {
  if (extra.rows() == 0) return;
  if (rows_ != 0 && extra.cols() != cols_) {
    throw DimensionError("append_rows: " + shape_string(*this) + " vs " + shape_string(extra));
  }
  if (rows_ == 0) cols_ = extra.cols();
  data_.insert(data_.end(), extra.data_.begin(), extra.data_.end());
  rows_ += extra.rows();
}

std::string shape_string(std::size_t rows, std::size_t cols) {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

std::string shape_string(const Mat& m) { return shape_string(m.rows(), m.cols()); }

}  // namespace slu
