#include "mmt/losses.hpp"

#include "mmt/ops.hpp"

namespace mmt {

namespace {

Tensor pairwise_l1(const std::vector<Tensor>& outputs, const std::vector<Tensor>& targets,
                   const char* what) {
  if (outputs.size() != targets.size() || outputs.empty())
    throw ValidationError(std::string(what) + ": need equal, non-empty output/target lists");
  Tensor acc = ops::l1_loss(outputs[0], targets[0]);
  for (size_t i = 1; i < outputs.size(); ++i)
    acc = ops::add(acc, ops::l1_loss(outputs[i], targets[i]));
  return ops::scale(acc, 1.0 / static_cast<double>(outputs.size()));
}

}  // namespace

Tensor synthesis_loss(const std::vector<Tensor>& outputs, const std::vector<Tensor>& targets) {
  return pairwise_l1(outputs, targets, "synthesis_loss");
}

Tensor reconstruction_loss(const std::vector<Tensor>& outputs, const std::vector<Tensor>& targets) {
  return pairwise_l1(outputs, targets, "reconstruction_loss");
}

Tensor generator_loss(const Tensor& l_r, const Tensor& l_s, const Tensor& l_adv,
                      const LossWeights& w) {
  Tensor total = ops::add(ops::scale(l_r, w.lambda_r), ops::scale(l_s, w.lambda_s));
  if (l_adv.numel() > 0) total = ops::add(total, ops::scale(l_adv, w.lambda_adv));
  return total;
}

void DiscriminatorConfig::validate() const {
  if (n_contrasts < 1) throw ValidationError("discriminator: n_contrasts must be >= 1");
  if (base_channels < 1) throw ValidationError("discriminator: base_channels must be >= 1");
}

Discriminator::Discriminator(DiscriminatorConfig cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int64_t b = cfg_.base_channels;
  for (int64_t p = 0; p < cfg_.n_contrasts; ++p) {
    std::string pre = "disc" + std::to_string(p) + ".";
    int64_t ci = 1;
    for (int layer = 0; layer < 4; ++layer) {
      int64_t co = b << layer;
      std::string ls = std::to_string(layer);
      params_.add(pre + "w" + ls, {co, ci, 4, 4}, Init::XavierUniform, rng);
      params_.add(pre + "b" + ls, {co}, Init::Zero, rng);
      ci = co;
    }
    params_.add(pre + "w_out", {1, ci, 1, 1}, Init::XavierUniform, rng);
    params_.add(pre + "b_out", {1}, Init::Zero, rng);
  }
  if (params_.total_params() != expected_param_count())
    throw RuntimeAbort("discriminator parameter count mismatch");
}

int64_t Discriminator::expected_param_count() const {
  const int64_t b = cfg_.base_channels;
  int64_t per = 0;
  int64_t ci = 1;
  for (int layer = 0; layer < 4; ++layer) {
    int64_t co = b << layer;
    per += co * ci * 16 + co;
    ci = co;
  }
  per += ci + 1;  // 1x1 output projection + bias
  return per * cfg_.n_contrasts;
}

Tensor Discriminator::forward(const Tensor& img, int64_t contrast) const {
  if (img.ndim() != 3 || img.dim(0) != 1)
    throw ValidationError("discriminator input must be [1,H,W], got " + shape_str(img.shape()));
  if (contrast < 0 || contrast >= cfg_.n_contrasts)
    throw ValidationError("discriminator contrast index out of range");
  if (img.dim(1) < 16 || img.dim(2) < 16)
    throw ValidationError("discriminator needs images of at least 16x16");
  std::string pre = "disc" + std::to_string(contrast) + ".";
  Tensor x = ops::reshape(img, {1, 1, img.dim(1), img.dim(2)});
  for (int layer = 0; layer < 4; ++layer) {
    std::string ls = std::to_string(layer);
    x = ops::conv2d(x, params_.at(pre + "w" + ls), params_.at(pre + "b" + ls), 2, 1);
    x = ops::leaky_relu(x, 0.2);
  }
  x = ops::conv2d(x, params_.at(pre + "w_out"), params_.at(pre + "b_out"), 1, 0);
  return ops::reshape(x, {x.dim(2), x.dim(3)});
}

LabelPair sample_labels(Rng& rng) {
  LabelPair l;
  l.fake = rng.uniform(0.0, 0.1);
  l.real = rng.uniform(0.9, 1.0);
  return l;
}

namespace {

Tensor mse_to_label(const Tensor& score_map, double label) {
  return ops::mse_loss(score_map, Tensor::full(score_map.shape(), label));
}

}  // namespace

Tensor discriminator_loss(const Discriminator& d, const std::vector<Tensor>& fakes,
                          const std::vector<Tensor>& reals,
                          const std::vector<int64_t>& contrasts, LabelPair labels) {
  if (fakes.size() != reals.size() || fakes.size() != contrasts.size() || fakes.empty())
    throw ValidationError("discriminator_loss: need equal, non-empty fake/real/contrast lists");
  Tensor acc;
  for (size_t i = 0; i < fakes.size(); ++i) {
    Tensor term = ops::add(mse_to_label(d.forward(reals[i], contrasts[i]), labels.real),
                           mse_to_label(d.forward(fakes[i], contrasts[i]), labels.fake));
    acc = (i == 0) ? term : ops::add(acc, term);
  }
  return ops::scale(acc, 1.0 / static_cast<double>(fakes.size()));
}

Tensor adversarial_loss(const Discriminator& d, const std::vector<Tensor>& fakes,
                        const std::vector<int64_t>& contrasts, LabelPair labels) {
  if (fakes.size() != contrasts.size() || fakes.empty())
    throw ValidationError("adversarial_loss: need equal, non-empty fake/contrast lists");
  Tensor acc;
  for (size_t i = 0; i < fakes.size(); ++i) {
    Tensor term = mse_to_label(d.forward(fakes[i], contrasts[i]), labels.real);
    acc = (i == 0) ? term : ops::add(acc, term);
  }
  return ops::scale(acc, 1.0 / static_cast<double>(fakes.size()));
}

}  // namespace mmt
