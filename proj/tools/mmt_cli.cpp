// Command-line entry point: dataset generation, training, imputation, and
// scenario evaluation. Contrast indices are 1-based on this boundary and
// converted to the library's 0-based convention immediately.
#include <CLI11.hpp>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mmt/checkpoint.hpp"
#include "mmt/data.hpp"
#include "mmt/losses.hpp"
#include "mmt/metrics.hpp"
#include "mmt/model.hpp"
#include "mmt/training.hpp"

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "mmt 1.0.0";

std::string timestamp() {
  auto now = std::chrono::system_clock::now();
  auto t = std::chrono::system_clock::to_time_t(now);
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

/// Full invocation record; written into the output directory before the
/// command does its work so a run is reproducible from it alone.
void write_manifest(const std::string& dir, int argc, char** argv, uint64_t seed,
                    const std::vector<std::string>& outputs, const std::string& stamp_start) {
  fs::create_directories(dir);
  std::ofstream f(fs::path(dir) / "run_manifest.txt");
  if (!f) throw mmt::ValidationError("cannot write run manifest in " + dir);
  f << "version: " << kVersion << "\n";
  f << "started: " << stamp_start << "\n";
  f << "seed: " << seed << "\n";
  f << "command:";
  for (int i = 0; i < argc; ++i) f << " " << argv[i];
  f << "\n";
  for (const auto& o : outputs) f << "output: " << o << "\n";
}

void finish_manifest(const std::string& dir) {
  std::ofstream f(fs::path(dir) / "run_manifest.txt", std::ios::app);
  f << "finished: " << timestamp() << "\n";
}

uint64_t resolve_seed(CLI::Option* seed_opt, uint64_t seed_flag) {
  if (seed_opt->count() > 0) return seed_flag;
  if (const char* env = std::getenv("MMT_SEED")) return std::strtoull(env, nullptr, 10);
  return seed_flag;
}

std::vector<int64_t> to_zero_based(const std::vector<int64_t>& one_based, int64_t p,
                                   const char* what) {
  std::vector<int64_t> out;
  for (int64_t c : one_based) {
    if (c < 1 || c > p)
      throw mmt::ValidationError(std::string(what) + ": contrast index " + std::to_string(c) +
                                 " out of range 1.." + std::to_string(p));
    out.push_back(c - 1);
  }
  return out;
}

int run(int argc, char** argv) {
  CLI::App app{"Multi-contrast transformer for missing-contrast image imputation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Plain-text key=value config file; flags override it");

  // ---- gen-data ----
  auto* gen = app.add_subcommand("gen-data", "Generate a procedural phantom dataset");
  std::string gen_out;
  mmt::PhantomConfig pcfg;
  std::vector<int64_t> gen_size{64, 64};
  std::vector<int64_t> lesion_contrasts;
  uint64_t gen_seed = 0;
  bool gen_force = false;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--subjects", pcfg.n_subjects, "Number of subjects");
  gen->add_option("--contrasts", pcfg.n_contrasts, "Number of contrasts P");
  gen->add_option("--size", gen_size, "Image size: H W")->expected(2);
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "RNG seed");
  gen->add_option("--lesion-contrasts", lesion_contrasts,
                  "1-based contrasts in which the lesion is visible");
  gen->add_option("--lesion-prob", pcfg.lesion_prob, "Lesion probability per subject");
  gen->add_option("--noise-sigma", pcfg.noise_sigma, "Additive Gaussian noise sigma");
  gen->add_option("--edge-softness", pcfg.edge_softness,
                  "Gaussian sigma (pixels) smoothing tissue edges before noise");
  gen->add_flag("--force", gen_force, "Allow writing into a non-empty directory");

  // ---- train ----
  auto* tr = app.add_subcommand("train", "Train a model on a dataset directory");
  std::string tr_data, tr_out, tr_mode = "random", tr_resume;
  mmt::TrainConfig tcfg;
  int64_t tr_base_dim = 6, tr_scales = 4, tr_patch = 4;
  std::vector<int64_t> tr_window{8, 8};
  uint64_t tr_seed = 0;
  tr->add_option("--data", tr_data, "Dataset directory (manifest.txt)")->required();
  tr->add_option("--out", tr_out, "Output directory for checkpoint and logs")->required();
  tr->add_option("--mode", tr_mode, "Scenario sampling: single or random")
      ->check(CLI::IsMember({"single", "random"}));
  tr->add_option("--epochs", tcfg.epochs, "Training epochs");
  tr->add_option("--batch-size", tcfg.batch_size, "Slices per step");
  tr->add_option("--lr-g", tcfg.lr_g, "Generator initial learning rate");
  tr->add_option("--lr-d", tcfg.lr_d, "Discriminator initial learning rate");
  tr->add_option("--weight-decay", tcfg.weight_decay, "Decoupled weight decay");
  tr->add_option("--clip-norm", tcfg.clip_norm, "Global gradient-norm clip (<=0 disables)");
  tr->add_option("--lambda-r", tcfg.weights.lambda_r, "Reconstruction loss weight");
  tr->add_option("--lambda-s", tcfg.weights.lambda_s, "Synthesis loss weight");
  tr->add_option("--lambda-adv", tcfg.weights.lambda_adv, "Adversarial loss weight");
  tr->add_option("--max-steps", tcfg.max_steps, "Stop after this many steps (0 = no cap)");
  tr->add_option("--log-every", tcfg.log_every, "CSV logging cadence in steps");
  tr->add_option("--ckpt-every", tcfg.checkpoint_every_epochs, "Checkpoint cadence in epochs");
  auto* tr_seed_opt = tr->add_option("--seed", tr_seed, "RNG seed");
  tr->add_option("--base-dim", tr_base_dim, "Base channel count C");
  tr->add_option("--scales", tr_scales, "Number of scales S");
  tr->add_option("--window", tr_window, "Attention window: H W")->expected(2);
  tr->add_option("--patch", tr_patch, "Patch size");
  tr->add_option("--resume", tr_resume, "Checkpoint to resume from");

  // ---- impute ----
  auto* im = app.add_subcommand("impute", "Synthesize missing contrasts for one volume");
  std::string im_ckpt, im_in, im_out;
  std::vector<int64_t> im_avail, im_targets;
  bool im_attention = false, im_quiet_overlap = false;
  im->add_option("--ckpt", im_ckpt, "Checkpoint file")->required();
  im->add_option("--in", im_in, "Input .mcv volume")->required();
  im->add_option("--available", im_avail, "1-based available contrast indices")->required();
  im->add_option("--targets", im_targets, "1-based target contrast indices")->required();
  im->add_option("--out", im_out, "Output directory")->required();
  im->add_flag("--attention", im_attention, "Also export heatmaps and contribution report");
  im->add_flag("--quiet-overlap", im_quiet_overlap,
               "Silence the warning when targets overlap available (reconstruction)");

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "Sweep scenarios over a dataset and report PSNR/SSIM");
  std::string ev_ckpt, ev_data, ev_scenarios = "all", ev_out;
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint file")->required();
  ev->add_option("--data", ev_data, "Dataset directory")->required();
  ev->add_option("--scenarios", ev_scenarios, "Scenario set: all or single")
      ->check(CLI::IsMember({"all", "single"}));
  ev->add_option("--out", ev_out, "Report CSV path")->required();

  CLI11_PARSE(app, argc, argv);
  std::string started = timestamp();

  if (*gen) {
    uint64_t seed = resolve_seed(gen_seed_opt, gen_seed);
    if (fs::exists(gen_out) && !fs::is_empty(gen_out) && !gen_force)
      throw mmt::ValidationError("output directory " + gen_out +
                                 " is not empty (use --force to overwrite)");
    pcfg.height = gen_size[0];
    pcfg.width = gen_size[1];
    pcfg.seed = seed;
    pcfg.lesion_contrasts = to_zero_based(lesion_contrasts, pcfg.n_contrasts, "gen-data");
    write_manifest(gen_out, argc, argv, seed, {gen_out + "/manifest.txt"}, started);
    auto vols = mmt::generate_phantoms(pcfg);
    for (auto& v : vols) mmt::mean_normalize(v);
    mmt::write_dataset(gen_out, vols);
    finish_manifest(gen_out);
    std::cout << "wrote " << vols.size() << " volumes to " << gen_out << "\n";
    return 0;
  }

  if (*tr) {
    tcfg.seed = resolve_seed(tr_seed_opt, tr_seed);
    tcfg.mode = tr_mode == "single" ? mmt::ScenarioMode::Single : mmt::ScenarioMode::Random;
    auto dataset = mmt::read_dataset(tr_data);
    mmt::MmtConfig mcfg;
    mcfg.n_contrasts = dataset.front().P;
    mcfg.base_dim = tr_base_dim;
    mcfg.n_scales = tr_scales;
    mcfg.img_h = dataset.front().H;
    mcfg.img_w = dataset.front().W;
    mcfg.window_h = tr_window[0];
    mcfg.window_w = tr_window[1];
    mcfg.patch = tr_patch;
    write_manifest(tr_out, argc, argv, tcfg.seed,
                   {tr_out + "/ckpt.mmtc", tr_out + "/train_log.csv"}, started);
    mmt::MmtModel model(mcfg, tcfg.seed);
    mmt::Discriminator disc({mcfg.n_contrasts, 16}, tcfg.seed + 1);
    mmt::TrainResult res = mmt::train(dataset, model, disc, tcfg, tr_out, tr_resume);
    finish_manifest(tr_out);
    std::cout << "trained " << res.steps << " steps; checkpoint at " << res.checkpoint_path
              << "\n";
    return 0;
  }

  if (*im) {
    mmt::Checkpoint ckpt = mmt::load_checkpoint(im_ckpt);
    mmt::MmtModel model = mmt::load_model(ckpt);
    const int64_t p = model.config().n_contrasts;
    std::vector<int64_t> avail = to_zero_based(im_avail, p, "impute --available");
    std::vector<int64_t> targets = to_zero_based(im_targets, p, "impute --targets");
    for (int64_t t : targets)
      if (std::find(avail.begin(), avail.end(), t) != avail.end() && !im_quiet_overlap)
        std::cerr << "warning: target contrast " << (t + 1)
                  << " is also available; output is a reconstruction\n";
    mmt::MultiContrastVolume vol = mmt::read_volume(im_in);
    if (vol.P != p) throw mmt::ValidationError("impute: volume has wrong contrast count");
    write_manifest(im_out, argc, argv, 0, {}, started);
    std::vector<std::string> outputs;
    for (int64_t d = 0; d < vol.D; ++d) {
      std::vector<mmt::Tensor> inputs;
      for (int64_t c : avail) inputs.push_back(vol.slice_tensor(c, d));
      mmt::ForwardResult out = model.forward(inputs, avail, targets, im_attention);
      for (size_t t = 0; t < targets.size(); ++t) {
        mmt::MultiContrastVolume ov;
        ov.P = 1;
        ov.D = 1;
        ov.H = vol.H;
        ov.W = vol.W;
        ov.data = out.images[t].data();
        ov.subject_id =
            vol.subject_id + "_c" + std::to_string(targets[t] + 1) + "_d" + std::to_string(d);
        std::string path = (fs::path(im_out) / (ov.subject_id + ".mcv")).string();
        mmt::write_volume(path, ov);
        outputs.push_back(path);
        if (im_attention) {
          mmt::ContrastScenario sc = mmt::ContrastScenario::from_available(avail, p);
          mmt::ContributionReport rep = mmt::contribution_percentages(out.records[t], sc);
          std::ofstream crep(fs::path(im_out) /
                             ("contrib_c" + std::to_string(targets[t] + 1) + ".csv"));
          crep << "input,percent\n";
          crep.precision(10);
          for (size_t i = 0; i < rep.inputs.size(); ++i)
            crep << (rep.inputs[i] + 1) << "," << rep.percentages[i] << "\n";
          for (size_t e = 0; e < out.records[t].size(); ++e) {
            for (size_t mi = 0; mi < avail.size(); ++mi) {
              mmt::Tensor heat = mmt::attention_heatmap(out.records[t][e], mi);
              std::string base = "heat_c" + std::to_string(targets[t] + 1) + "_block" +
                                 std::to_string(e) + "_in" + std::to_string(avail[mi] + 1);
              mmt::write_pgm((fs::path(im_out) / (base + ".pgm")).string(), heat);
              mmt::write_matrix_csv((fs::path(im_out) / (base + ".csv")).string(), heat);
            }
          }
        }
      }
    }
    finish_manifest(im_out);
    std::cout << "wrote " << outputs.size() << " volumes to " << im_out << "\n";
    return 0;
  }

  if (*ev) {
    mmt::Checkpoint ckpt = mmt::load_checkpoint(ev_ckpt);
    mmt::MmtModel model = mmt::load_model(ckpt);
    auto dataset = mmt::read_dataset(ev_data);
    auto scenarios = ev_scenarios == "all"
                         ? mmt::all_scenarios(model.config().n_contrasts)
                         : mmt::single_missing_scenarios(model.config().n_contrasts);
    auto rows = mmt::evaluate_scenarios(model, dataset, scenarios);
    mmt::write_report_csv(ev_out, rows);
    std::cout << "wrote " << rows.size() << " rows to " << ev_out << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const mmt::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mmt::RuntimeAbort& e) {
    std::cerr << "abort: " << e.what() << "\n";
    return 3;
  }
}
