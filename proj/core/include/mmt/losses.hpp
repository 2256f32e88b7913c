// Training objectives: L1 terms on synthesized and reconstructed images, and
// a least-squares adversarial pair driven by a per-contrast patch
// discriminator with smoothed labels.
#pragma once

#include <vector>

#include "mmt/params.hpp"
#include "mmt/tensor.hpp"

namespace mmt {

struct LossWeights {
  double lambda_r = 5.0;    // reconstruction of available contrasts
  double lambda_s = 20.0;   // synthesis of missing contrasts
  double lambda_adv = 0.1;  // adversarial term; 0 disables the discriminator
};

/// Mean absolute error averaged over (output, target) pairs. Both loss terms
/// share the form; they differ only in which contrasts feed them.
Tensor synthesis_loss(const std::vector<Tensor>& outputs, const std::vector<Tensor>& targets);
Tensor reconstruction_loss(const std::vector<Tensor>& outputs, const std::vector<Tensor>& targets);

/// lambda_r * L_r + lambda_s * L_s + lambda_adv * L_adv. Pass an empty tensor
/// for l_adv when the adversarial term is disabled.
Tensor generator_loss(const Tensor& l_r, const Tensor& l_s, const Tensor& l_adv,
                      const LossWeights& w);

struct DiscriminatorConfig {
  int64_t n_contrasts = 0;
  int64_t base_channels = 16;
  void validate() const;
};

/// One small strided CNN per contrast mapping [1,H,W] to a patch map of
/// realness scores. Four 4x4 stride-2 convolutions with LeakyReLU(0.2)
/// between, then a 1x1 projection to one channel.
class Discriminator {
 public:
  Discriminator(DiscriminatorConfig cfg, uint64_t seed);

  /// img is [1,H,W]; contrast selects the per-contrast tower (0-based).
  Tensor forward(const Tensor& img, int64_t contrast) const;

  const DiscriminatorConfig& config() const { return cfg_; }
  ParamRegistry& params() { return params_; }
  const ParamRegistry& params() const { return params_; }
  int64_t expected_param_count() const;

 private:
  DiscriminatorConfig cfg_;
  ParamRegistry params_;
};

/// Smoothed LSGAN target values, redrawn per batch: fake ~ U(0, 0.1),
/// real ~ U(0.9, 1).
struct LabelPair {
  double fake = 0.0;
  double real = 1.0;
};
LabelPair sample_labels(Rng& rng);

/// Discriminator objective: mean over images of
///   MSE(D(real), real_label) + MSE(D(fake), fake_label).
/// Fakes should be detached by the caller before this.
Tensor discriminator_loss(const Discriminator& d, const std::vector<Tensor>& fakes,
                          const std::vector<Tensor>& reals,
                          const std::vector<int64_t>& contrasts, LabelPair labels);

/// Generator-side adversarial term: mean over images of MSE(D(fake), real_label).
/// Fakes stay attached so gradients reach the generator.
Tensor adversarial_loss(const Discriminator& d, const std::vector<Tensor>& fakes,
                        const std::vector<int64_t>& contrasts, LabelPair labels);

}  // namespace mmt
