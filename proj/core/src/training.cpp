#include "mmt/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mmt/checkpoint.hpp"
#include "mmt/metrics.hpp"
#include "mmt/ops.hpp"

namespace mmt {

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("train: epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
  if (lr_g <= 0 || lr_d <= 0) throw ValidationError("train: learning rates must be > 0");
  if (weight_decay < 0) throw ValidationError("train: weight_decay must be >= 0");
  if (log_every < 1) throw ValidationError("train: log_every must be >= 1");
  if (weights.lambda_adv < 0 || weights.lambda_r < 0 || weights.lambda_s < 0)
    throw ValidationError("train: loss weights must be >= 0");
}

double cosine_lr(int64_t step, int64_t total_steps, double lr0) {
  if (total_steps < 1 || step < 0 || step > total_steps)
    throw ValidationError("cosine_lr: need 0 <= step <= total_steps, total_steps >= 1");
  return lr0 * 0.5 * (1.0 + std::cos(3.141592653589793 * static_cast<double>(step) /
                                     static_cast<double>(total_steps)));
}

AdamW::AdamW(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamW::ensure_buffers(const ParamRegistry& params) {
  if (!m_.empty()) {
    if (m_.size() != params.size()) throw RuntimeAbort("optimizer state does not match registry");
    return;
  }
  for (const auto& [name, t] : params.items()) {
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

void AdamW::step(ParamRegistry& params, double lr, double weight_decay) {
  ensure_buffers(params);
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  size_t idx = 0;
  for (const auto& [name, unused] : params.items()) {
    Tensor& p = params.at(name);
    std::vector<double>& m = m_[idx];
    std::vector<double>& v = v_[idx];
    ++idx;
    const bool has_grad = p.has_grad();
    for (int64_t i = 0; i < p.numel(); ++i) {
      double g = has_grad ? p.grad()[i] : 0.0;
      if (!std::isfinite(g))
        throw RuntimeAbort("non-finite gradient in parameter '" + name + "'");
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p.data()[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay * p.data()[i]);
    }
  }
}

void AdamW::save_state(const ParamRegistry& params, const std::string& prefix,
                       std::vector<std::pair<std::string, Tensor>>& out) const {
  size_t idx = 0;
  for (const auto& [name, t] : params.items()) {
    Tensor m(t.shape()), v(t.shape());
    if (idx < m_.size()) {
      m.data() = m_[idx];
      v.data() = v_[idx];
    }
    out.emplace_back(prefix + "m." + name, std::move(m));
    out.emplace_back(prefix + "v." + name, std::move(v));
    ++idx;
  }
}

void AdamW::load_state(const ParamRegistry& params, const std::string& prefix,
                       const Checkpoint& ckpt, int64_t t) {
  m_.clear();
  v_.clear();
  for (const auto& [name, p] : params.items()) {
    const Tensor* m = ckpt.find(prefix + "m." + name);
    const Tensor* v = ckpt.find(prefix + "v." + name);
    if (!m || !v || m->numel() != p.numel() || v->numel() != p.numel())
      throw ValidationError("checkpoint is missing optimizer state for '" + name + "'");
    m_.push_back(m->data());
    v_.push_back(v->data());
  }
  t_ = t;
}

double clip_gradients(ParamRegistry& params, double clip) {
  double sq = 0.0;
  for (const auto& [name, t] : params.items())
    if (t.has_grad())
      for (double g : t.grad()) sq += g * g;
  double norm = std::sqrt(sq);
  if (clip > 0.0 && norm > clip) {
    double s = clip / norm;
    for (const auto& [name, t] : params.items())
      if (t.has_grad())
        for (double& g : params.at(name).grad()) g *= s;
  }
  return norm;
}

namespace {

struct Sample {
  int64_t vol;
  int64_t slice;
};

double held_out_psnr(const MmtModel& model, const MultiContrastVolume& vol, int64_t slice) {
  // Fixed probe: synthesize contrast 0 from all others.
  std::vector<int64_t> avail;
  for (int64_t c = 1; c < vol.P; ++c) avail.push_back(c);
  std::vector<Tensor> inputs;
  for (int64_t c : avail) inputs.push_back(vol.slice_tensor(c, slice));
  ForwardResult out = model.forward(inputs, avail, {0});
  Tensor truth = vol.slice_tensor(0, slice);
  return psnr(out.images[0], truth, data_range(truth));
}

}  // namespace

TrainResult train(const std::vector<MultiContrastVolume>& dataset, MmtModel& model,
                  Discriminator& disc, const TrainConfig& cfg, const std::string& out_dir,
                  const std::string& resume_path) {
  cfg.validate();
  if (dataset.empty()) throw ValidationError("train: empty dataset");
  const int64_t P = model.config().n_contrasts;
  for (const auto& vol : dataset) {
    vol.validate();
    if (vol.P != P) throw ValidationError("train: dataset contrast count differs from model");
    if (vol.H != model.config().img_h || vol.W != model.config().img_w)
      throw ValidationError("train: dataset image size differs from model config");
  }
  if (disc.config().n_contrasts != P)
    throw ValidationError("train: discriminator contrast count differs from model");

  std::filesystem::create_directories(out_dir);
  const std::string ckpt_path = (std::filesystem::path(out_dir) / "ckpt.mmtc").string();
  const std::string log_path = (std::filesystem::path(out_dir) / "train_log.csv").string();

  std::vector<Sample> samples;
  for (size_t v = 0; v < dataset.size(); ++v)
    for (int64_t d = 0; d < dataset[v].D; ++d)
      samples.push_back({static_cast<int64_t>(v), d});
  const int64_t n = static_cast<int64_t>(samples.size());
  const int64_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  // The LR schedule always spans the full configured run; max_steps only stops
  // early, so an interrupted run sees the same per-step LR as an uninterrupted one.
  const int64_t schedule_steps = cfg.epochs * steps_per_epoch;
  int64_t total_steps = schedule_steps;
  if (cfg.max_steps > 0) total_steps = std::min(total_steps, cfg.max_steps);

  // Held-out probe: first slice of the last subject (fixed for the whole run).
  const MultiContrastVolume& held_vol = dataset.back();

  Rng rng(cfg.seed);
  AdamW adam_g, adam_d;
  int64_t start_epoch = 0;
  int64_t step = 0;
  const bool adversarial = cfg.weights.lambda_adv > 0.0;

  if (!resume_path.empty()) {
    Checkpoint ckpt = load_checkpoint(resume_path);
    load_into_registry(model.params(), ckpt, "model.");
    load_into_registry(disc.params(), ckpt, "disc.");
    adam_g.load_state(model.params(), "adam_g.", ckpt, std::stoll(ckpt.aux.at("adam_g.t")));
    adam_d.load_state(disc.params(), "adam_d.", ckpt, std::stoll(ckpt.aux.at("adam_d.t")));
    rng.load_state(ckpt.aux.at("rng"));
    start_epoch = std::stoll(ckpt.aux.at("epoch"));
    step = std::stoll(ckpt.aux.at("step"));
  }

  std::ofstream log;
  if (resume_path.empty()) {
    log.open(log_path, std::ios::trunc);
    log << "step,lr,L_s,L_r,L_adv,L_D,psnr_val,scenario\n";
  } else {
    log.open(log_path, std::ios::app);
  }
  if (!log) throw ValidationError("train: cannot open log file " + log_path);
  log.precision(10);

  auto save = [&](int64_t epoch_done) {
    Checkpoint ckpt;
    ckpt.config = model.config();
    for (const auto& [name, t] : model.params().items())
      ckpt.tensors.emplace_back("model." + name, t.detach());
    for (const auto& [name, t] : disc.params().items())
      ckpt.tensors.emplace_back("disc." + name, t.detach());
    adam_g.save_state(model.params(), "adam_g.", ckpt.tensors);
    adam_d.save_state(disc.params(), "adam_d.", ckpt.tensors);
    ckpt.aux["adam_g.t"] = std::to_string(adam_g.t());
    ckpt.aux["adam_d.t"] = std::to_string(adam_d.t());
    ckpt.aux["epoch"] = std::to_string(epoch_done);
    ckpt.aux["step"] = std::to_string(step);
    ckpt.aux["rng"] = rng.save_state();
    save_checkpoint(ckpt_path, ckpt);
  };

  bool done = step >= total_steps;
  int64_t epoch = start_epoch;
  while (epoch < cfg.epochs && !done) {
    // Deterministic Fisher-Yates shuffle from the training stream.
    std::vector<int64_t> order(samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
    for (int64_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.randint(i + 1)]);

    int64_t b = 0;
    for (; b < n && !done; b += cfg.batch_size) {
      const int64_t b_end = std::min(n, b + cfg.batch_size);
      ContrastScenario sc = sample_scenario(P, rng, cfg.mode);
      LabelPair labels;
      if (adversarial) labels = sample_labels(rng);
      const double lr_g_t = cosine_lr(std::min(step, schedule_steps), schedule_steps, cfg.lr_g);
      const double lr_d_t = cosine_lr(std::min(step, schedule_steps), schedule_steps, cfg.lr_d);

      double l_s_val = 0, l_r_val = 0, l_adv_val = 0, l_d_val = 0;
      std::vector<Tensor> fakes_detached, reals;
      std::vector<int64_t> fake_contrasts;

      {
        Tape tape;
        std::vector<Tensor> syn_out, syn_truth, rec_out, rec_truth, fakes;
        std::vector<int64_t> targets = sc.missing;
        targets.insert(targets.end(), sc.available.begin(), sc.available.end());
        for (int64_t i = b; i < b_end; ++i) {
          const MultiContrastVolume& vol = dataset[samples[order[i]].vol];
          const int64_t d = samples[order[i]].slice;
          std::vector<Tensor> inputs;
          for (int64_t c : sc.available) inputs.push_back(vol.slice_tensor(c, d));
          ForwardResult out = model.forward(inputs, sc.available, targets);
          for (size_t t = 0; t < sc.missing.size(); ++t) {
            syn_out.push_back(out.images[t]);
            syn_truth.push_back(vol.slice_tensor(sc.missing[t], d));
            if (adversarial) {
              fakes.push_back(out.images[t]);
              fakes_detached.push_back(out.images[t].detach());
              reals.push_back(syn_truth.back());
              fake_contrasts.push_back(sc.missing[t]);
            }
          }
          for (size_t t = 0; t < sc.available.size(); ++t) {
            rec_out.push_back(out.images[sc.missing.size() + t]);
            rec_truth.push_back(vol.slice_tensor(sc.available[t], d));
          }
        }
        Tensor l_s = synthesis_loss(syn_out, syn_truth);
        Tensor l_r = reconstruction_loss(rec_out, rec_truth);
        Tensor l_adv;
        if (adversarial) l_adv = adversarial_loss(disc, fakes, fake_contrasts, labels);
        Tensor l_g = generator_loss(l_r, l_s, l_adv, cfg.weights);
        l_s_val = l_s.item();
        l_r_val = l_r.item();
        if (adversarial) l_adv_val = l_adv.item();
        if (!std::isfinite(l_g.item()))
          throw RuntimeAbort("non-finite generator loss at step " + std::to_string(step));
        tape.backward(l_g);
      }
      double gnorm = clip_gradients(model.params(), cfg.clip_norm);
      if (cfg.clip_norm > 0.0 && gnorm > cfg.clip_norm)
        std::cerr << "step " << step << ": generator grad norm " << gnorm << " clipped to "
                  << cfg.clip_norm << "\n";
      adam_g.step(model.params(), lr_g_t, cfg.weight_decay);
      model.params().zero_grad();
      if (adversarial) disc.params().zero_grad();

      if (adversarial) {
        {
          Tape tape;
          Tensor l_d = discriminator_loss(disc, fakes_detached, reals, fake_contrasts, labels);
          l_d_val = l_d.item();
          if (!std::isfinite(l_d_val))
            throw RuntimeAbort("non-finite discriminator loss at step " + std::to_string(step));
          tape.backward(l_d);
        }
        double dnorm = clip_gradients(disc.params(), cfg.clip_norm);
        if (cfg.clip_norm > 0.0 && dnorm > cfg.clip_norm)
          std::cerr << "step " << step << ": discriminator grad norm " << dnorm << " clipped to "
                    << cfg.clip_norm << "\n";
        adam_d.step(disc.params(), lr_d_t, cfg.weight_decay);
        disc.params().zero_grad();
      }

      if (step % cfg.log_every == 0 || step + 1 == total_steps) {
        double pv = held_out_psnr(model, held_vol, 0);
        log << step << "," << lr_g_t << "," << l_s_val << "," << l_r_val << "," << l_adv_val
            << "," << l_d_val << "," << metric_str(pv) << "," << sc.bitstring() << "\n";
        log.flush();
      }

      ++step;
      if (step >= total_steps) done = true;
    }
    // The epoch counts as finished if every batch ran, even when the stop
    // condition triggered on the epoch's final step.
    if (b >= n) {
      ++epoch;
      if (cfg.checkpoint_every_epochs > 0 && epoch % cfg.checkpoint_every_epochs == 0)
        save(epoch);
    }
  }
  save(epoch);

  TrainResult result;
  result.checkpoint_path = ckpt_path;
  result.log_path = log_path;
  result.steps = step;
  return result;
}

}  // namespace mmt
