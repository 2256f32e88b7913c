#include "mmt/tensor.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace mmt {

int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape) : impl_(std::make_shared<TensorImpl>()) {
  impl_->shape = std::move(shape);
  impl_->data.assign(static_cast<size_t>(mmt::numel(impl_->shape)), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : impl_(std::make_shared<TensorImpl>()) {
  if (mmt::numel(shape) != static_cast<int64_t>(data.size()))
    throw ValidationError("tensor data size " + std::to_string(data.size()) +
                          " does not match shape " + shape_str(shape));
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = value;
  return t;
}

int64_t Tensor::dim(int i) const {
  if (i < 0) i += ndim();
  if (i < 0 || i >= ndim()) throw ValidationError("dim index out of range");
  return impl_->shape[static_cast<size_t>(i)];
}

double Tensor::item() const {
  if (numel() != 1) throw ValidationError("item() on tensor with numel " + std::to_string(numel()));
  return impl_->data[0];
}

std::vector<double>& Tensor::grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
}

Tensor Tensor::detach() const {
  Tensor t;
  t.impl_->shape = impl_->shape;
  t.impl_->data = impl_->data;
  return t;
}

namespace {
thread_local Tape* g_current_tape = nullptr;
}

Tape::Tape() : prev_(g_current_tape) { g_current_tape = this; }

Tape::~Tape() { g_current_tape = prev_; }

Tape* Tape::current() { return g_current_tape; }

void Tape::backward(Tensor& root) {
  if (used_) throw ValidationError("backward() called twice on the same tape");
  if (root.numel() != 1) throw ValidationError("backward root must be a scalar");
  used_ = true;
  root.grad()[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

double Rng::uniform(double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(engine_);
}

double Rng::normal(double mean, double stddev) {
  std::normal_distribution<double> dist(mean, stddev);
  return dist(engine_);
}

int64_t Rng::randint(int64_t n) {
  std::uniform_int_distribution<int64_t> dist(0, n - 1);
  return dist(engine_);
}

std::string Rng::save_state() const {
  std::ostringstream oss;
  oss << engine_;
  return oss.str();
}

void Rng::load_state(const std::string& state) {
  std::istringstream iss(state);
  iss >> engine_;
  if (iss.fail()) throw ValidationError("bad RNG state string");
}

bool all_finite(const Tensor& t) {
  for (double v : t.data())
    if (!std::isfinite(v)) return false;
  return true;
}

namespace flops {
namespace {
std::atomic<uint64_t> g_count{0};
thread_local int g_depth = 0;
}  // namespace

void reset() { g_count.store(0); }
uint64_t count() { return g_count.load(); }
CountingScope::CountingScope() { ++g_depth; }
CountingScope::~CountingScope() { --g_depth; }
bool counting_active() { return g_depth > 0; }
void add(uint64_t n) {
  if (g_depth > 0) g_count.fetch_add(n, std::memory_order_relaxed);
}
}  // namespace flops

}  // namespace mmt
