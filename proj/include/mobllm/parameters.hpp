#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "mobllm/error.hpp"

namespace mobllm {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

// A named trainable tensor. Addresses are stable for the lifetime of the store.
struct Parameter {
  std::size_t id = 0;
  std::string name;
  Matrix value;
  bool trainable = true;

  Eigen::Index size() const { return value.size(); }
};

class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter& add(std::string name, Matrix init, bool trainable = true) {
    if (find(name) != nullptr) throw ConfigError("duplicate parameter name: " + name);
    Parameter& p = params_.emplace_back();
    p.id = params_.size() - 1;
    p.name = std::move(name);
    p.value = std::move(init);
    p.trainable = trainable;
    return p;
  }

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  Parameter* find(std::string_view name) {
    for (auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }
  const Parameter* find(std::string_view name) const {
    for (const auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  // Scalar count of trainable entries.
  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (p.trainable) n += static_cast<std::size_t>(p.size());
    return n;
  }

  std::vector<Matrix> snapshot() const {
    std::vector<Matrix> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(p.value);
    return out;
  }

  void restore(const std::vector<Matrix>& values) {
    if (values.size() != params_.size()) throw ConfigError("snapshot does not match parameter store");
    for (std::size_t i = 0; i < values.size(); ++i) params_[i].value = values[i];
  }

 private:
  std::deque<Parameter> params_;
};

// Dense gradient accumulator indexed by parameter id. Entries are allocated on
// first touch and keep their storage across zero() calls.
class GradBuffer {
 public:
  Matrix& at(const Parameter& p) {
    if (grads_.size() <= p.id) grads_.resize(p.id + 1);
    Matrix& g = grads_[p.id];
    if (g.rows() != p.value.rows() || g.cols() != p.value.cols()) {
      g = Matrix::Zero(p.value.rows(), p.value.cols());
    }
    return g;
  }

  const Matrix* find(const Parameter& p) const {
    if (p.id >= grads_.size() || grads_[p.id].size() == 0) return nullptr;
    return &grads_[p.id];
  }

  void zero() {
    for (auto& g : grads_) g.setZero();
  }

  void scale(double factor) {
    for (auto& g : grads_) g *= factor;
  }

 private:
  std::vector<Matrix> grads_;
};

// Binary parameter file: magic line, then per tensor its name, shape and
// raw doubles in column-major order.
inline constexpr std::string_view kParamsMagic = "MOBLLM-PARAMS/1\n";

inline void save_parameters(std::ostream& out, const ParameterStore& store) {
  auto put_u64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); };
  out.write(kParamsMagic.data(), static_cast<std::streamsize>(kParamsMagic.size()));
  put_u64(store.size());
  for (const auto& p : store) {
    put_u64(p.name.size());
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u64(static_cast<std::uint64_t>(p.value.rows()));
    put_u64(static_cast<std::uint64_t>(p.value.cols()));
    out.write(reinterpret_cast<const char*>(p.value.data()), static_cast<std::streamsize>(sizeof(double) * p.value.size()));
  }
  if (!out) throw DataError("failed writing parameters");
}

// Names and order must match the store; shapes may differ only for tables
// that grow during data preparation.
inline void load_parameters(std::istream& in, ParameterStore& store) {
  auto get_u64 = [&] {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw DataError("truncated parameter file");
    return v;
  };
  std::string magic(kParamsMagic.size(), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!in || magic != kParamsMagic) throw DataError("not a parameter file");
  if (get_u64() != store.size()) throw DataError("parameter file does not match the model");
  for (auto& p : store) {
    std::string name(get_u64(), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    if (!in || name != p.name) throw DataError("parameter file does not match the model at " + p.name);
    const auto rows = static_cast<Eigen::Index>(get_u64());
    const auto cols = static_cast<Eigen::Index>(get_u64());
    if (rows != p.value.rows() || cols != p.value.cols()) throw DataError("shape mismatch for " + p.name);
    in.read(reinterpret_cast<char*>(p.value.data()), static_cast<std::streamsize>(sizeof(double) * p.value.size()));
    if (!in) throw DataError("truncated parameter file");
  }
}

}  // namespace mobllm
