// SPDX-License-Identifier: Apache-2.0
#include "slu/params.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace slu {

Param& ParamStore::add(std::string name, Mat init) {
  if (params_.contains(name)) throw std::invalid_argument("duplicate parameter: " + name);
  Mat grad(init.rows(), init.cols());
  auto [it, ok] = params_.emplace(std::move(name), Param{std::move(init), std::move(grad)});
  return it->second;
}

Param& ParamStore::reset(std::string_view name, Mat value) {
  Param& p = at(name);
  p.grad = Mat(value.rows(), value.cols());
  p.value = std::move(value);
  return p;
}

Param& ParamStore::at(std::string_view name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return it->second;
}

const Param& ParamStore::at(std::string_view name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return it->second;
}

bool ParamStore::contains(std::string_view name) const { return params_.find(name) != params_.end(); }

std::size_t ParamStore::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.grad.set_zero();
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& [_, p] : params_)
    for (double g : p.grad.flat()) s += g * g;
  return std::sqrt(s);
}

bool ParamStore::all_finite() const {
  for (const auto& [_, p] : params_)
    if (!p.value.all_finite()) return false;
  return true;
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  auto a = params_.begin();
  auto b = other.params_.begin();
  for (; a != params_.end(); ++a, ++b)
    if (a->first != b->first || !(a->second.value == b->second.value)) return false;
  return true;
}

Mat xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-a, a);
  Mat m(rows, cols);
  for (double& v : m.flat()) v = dist(rng);
  return m;
}

void write_params(std::ostream& out, const ParamStore& store) {
  out << "params " << store.size() << '\n';
  char buf[32];
  for (const auto& [name, p] : store) {
    out << name << ' ' << p.value.rows() << ' ' << p.value.cols() << '\n';
    bool first = true;
    for (double v : p.value.flat()) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      if (!first) out << ' ';
      out << buf;
      first = false;
    }
    out << '\n';
  }
}

ParamStore read_params(std::istream& in) {
  std::string tag;
  std::size_t n = 0;
  if (!(in >> tag >> n) || tag != "params") throw std::runtime_error("checkpoint: expected 'params <n>'");
  ParamStore store;
  for (std::size_t i = 0; i < n; ++i) {
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols)) throw std::runtime_error("checkpoint: truncated parameter header");
    std::vector<double> data(rows * cols);
    for (double& v : data) {
      // operator>> rejects "inf"/"nan"; checkpoints only ever hold finite values.
      if (!(in >> v)) throw std::runtime_error("checkpoint: truncated values for " + name);
    }
    store.add(name, Mat(rows, cols, std::move(data)));
  }
  return store;
}

}  // namespace slu
