#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "framediff/autodiff.hpp"
#include "framediff/tensor.hpp"

namespace framediff {

// Flat store of named parameter tensors plus their gradient buffers and
// AdamW moments. Entry order is creation order and fixed for a given
// configuration, which makes checkpoints and optimizer sweeps
// deterministic.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;
  };

  int add(const std::string& name, std::int64_t rows, std::int64_t cols) {
    Entry e;
    e.name = name;
    e.value = Tensor(rows, cols);
    e.grad = Tensor(rows, cols);
    e.m = Tensor(rows, cols);
    e.v = Tensor(rows, cols);
    entries_.push_back(std::move(e));
    return static_cast<int>(entries_.size()) - 1;
  }

  Entry& at(int id) { return entries_[id]; }
  const Entry& at(int id) const { return entries_[id]; }
  int find(const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].name == name) return static_cast<int>(i);
    return -1;
  }

  std::size_t count() const { return entries_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.grad.fill(0.0);
  }

  // Flat addressing across all entries, in entry order.
  double get_flat(std::size_t idx) const {
    for (const auto& e : entries_) {
      if (idx < e.value.size()) return e.value.data()[idx];
      idx -= e.value.size();
    }
    return 0.0;
  }
  void add_flat(std::size_t idx, double delta) {
    for (auto& e : entries_) {
      if (idx < e.value.size()) {
        e.value.data()[idx] += delta;
        return;
      }
      idx -= e.value.size();
    }
  }
  double grad_flat(std::size_t idx) const {
    for (const auto& e : entries_) {
      if (idx < e.grad.size()) return e.grad.data()[idx];
      idx -= e.grad.size();
    }
    return 0.0;
  }

  double grad_norm() const {
    double s = 0.0;
    for (const auto& e : entries_)
      for (std::size_t i = 0; i < e.grad.size(); ++i)
        s += e.grad.data()[i] * e.grad.data()[i];
    return std::sqrt(s);
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  std::vector<Entry> entries_;
};

// Binds store entries to tape leaves, one leaf per entry per tape build.
class ParamBinder {
 public:
  ParamBinder(ad::Tape& tape, ParamStore& store)
      : tape_(&tape), store_(&store) {
    cache_.assign(store.count(), ad::Var{});
  }

  ad::Var operator()(int id) {
    if (!cache_[id].valid()) {
      auto& e = store_->at(id);
      cache_[id] = tape_->param(e.value, e.grad.data());
    }
    return cache_[id];
  }

 private:
  ad::Tape* tape_;
  ParamStore* store_;
  std::vector<ad::Var> cache_;
};

struct AdamW {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  std::int64_t step_count = 0;

  void step(ParamStore& store) {
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (auto& e : store.entries()) {
      double* w = e.value.data();
      const double* g = e.grad.data();
      double* m = e.m.data();
      double* v = e.v.data();
      for (std::size_t i = 0; i < e.value.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        w[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * w[i]);
      }
    }
  }
};

// Gaussian fill helpers used by the network initializers.
inline void fill_normal(Tensor& t, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, stddev);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = gauss(rng);
}

}  // namespace framediff
