#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmt {

using Shape = std::vector<int64_t>;

/// Raised for caller errors: bad shapes, bad config, bad files. CLI maps to exit 2.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Raised for non-recoverable mid-run failures (NaN loss etc). CLI maps to exit 3.
struct RuntimeAbort : std::runtime_error {
  explicit RuntimeAbort(const std::string& msg) : std::runtime_error(msg) {}
};

int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
};

/// Dense float64 tensor, row-major. Value-semantics handle to shared storage;
/// ops on tensors record their backward rules on the active Tape (if any).
class Tensor {
 public:
  Tensor() : impl_(std::make_shared<TensorImpl>()) {}
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  const Shape& shape() const { return impl_->shape; }
  int64_t dim(int i) const;
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  std::vector<double>& data() { return impl_->data; }
  const std::vector<double>& data() const { return impl_->data; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool v) { impl_->requires_grad = v; return *this; }

  std::vector<double>& grad();              // allocates zeros on first use
  const std::vector<double>& grad() const { return impl_->grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  void zero_grad();

  /// Copy of the values with no graph history.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Records forward ops in order; backward replays them in exact reverse.
/// Installed as the current tape for the constructing thread; nesting is
/// allowed and restores the previous tape on destruction. A tape can be
/// consumed by backward() exactly once; a second call is rejected.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  void record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }
  void backward(Tensor& root);

  size_t size() const { return ops_.size(); }

 private:
  std::vector<std::function<void()>> ops_;
  bool used_ = false;
  Tape* prev_;
};

/// Deterministic RNG for the whole artifact. State round-trips through text
/// so checkpoints can resume bit-exactly.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  double uniform(double lo, double hi);
  double normal(double mean, double stddev);
  int64_t randint(int64_t n);  // uniform in [0, n)
  uint64_t raw() { return engine_(); }

  std::string save_state() const;
  void load_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

bool all_finite(const Tensor& t);

namespace flops {
/// Multiply counter scoped to attention cores (QK^T and weights*V products).
void reset();
uint64_t count();
struct CountingScope {
  CountingScope();
  ~CountingScope();
};
bool counting_active();
void add(uint64_t n);
}  // namespace flops

}  // namespace mmt
