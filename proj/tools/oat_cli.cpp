#include <malloc.h>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "oat/acoustic/noise.hpp"
#include "oat/core/error.hpp"
#include "oat/core/hash.hpp"
#include "oat/core/parallel.hpp"
#include "oat/io/arrays.hpp"
#include "oat/nn/checkpoint.hpp"
#include "oat/phantom/ingest.hpp"
#include "oat/phantom/phantom.hpp"
#include "oat/pipeline/pipeline.hpp"

namespace fs = std::filesystem;
using namespace oat;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kPrerequisite = 3, kNumerical = 4 };

struct Global {
  std::string profile = "desk";
  std::string config_file;
  std::vector<std::string> overrides;
  std::string run_dir;
  bool deterministic = false;
  std::string log_level = "info";
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

double parse_snr(const std::string& s) {
  if (s == "inf") return acoustic::kCleanSnr;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("bad SNR value '" + s + "'");
}

std::size_t parse_count(const std::string& s) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("bad count '" + s + "'");
}

// An existing run directory remembers its configuration, so later stages only
// need --set for what changes.
pipeline::PipelineConfig resolve(const Global& g, std::vector<std::string> extra = {}) {
  auto overrides = g.overrides;
  overrides.insert(overrides.end(), extra.begin(), extra.end());
  if (!g.run_dir.empty()) overrides.push_back("paths.run_dir=\"" + g.run_dir + "\"");
  auto cfg = pipeline::load_config(g.profile, g.config_file, overrides);
  const auto saved = fs::path(cfg.run_dir) / "config.json";
  if (g.config_file.empty() && fs::exists(saved)) cfg = pipeline::load_config(g.profile, saved.string(), overrides);
  spdlog::info("config hash {} (run dir {})", cfg.hash(), cfg.run_dir);
  return cfg;
}

pipeline::Pipeline open_run(const pipeline::PipelineConfig& cfg) {
  pipeline::Pipeline p(cfg);
  fs::create_directories(p.layout().root);
  nn::write_json(p.layout().config_file(), nlohmann::json(cfg));
  return p;
}

Image load_input_image(const std::string& path, std::size_t nx, std::size_t ny) {
  return phantom::ingest_image(path, nx, ny, false).image;
}

void log_losses(const std::string& stage, const nn::TrainResult& r) {
  if (!r.epoch_loss.empty())
    spdlog::info("{}: {} epochs, final loss {:.6g}", stage, r.epoch_loss.size(), r.epoch_loss.back());
}

}  // namespace

int main(int argc, char** argv) {
  // The autodiff tape allocates and frees large buffers every step; keeping
  // them on the heap avoids repeated mmap/munmap and page faults.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"Optoacoustic tomography reconstruction with diffusion-assisted refinement"};
  app.require_subcommand(1);
  Global g;
  app.add_option("--profile", g.profile, "Base configuration profile")->check(CLI::IsMember({"desk", "paper"}));
  app.add_option("--config", g.config_file, "JSON file merged over the profile")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "Override a config key, e.g. training.cip.epochs=5");
  app.add_option("--run-dir", g.run_dir, "Run directory (overrides paths.run_dir)");
  app.add_flag("--deterministic", g.deterministic, "Single-threaded, fixed reduction order");
  app.add_option("--log-level", g.log_level, "trace, debug, info, warn, error")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error"}));

  // phantom
  auto* phantom_cmd = app.add_subcommand("phantom", "Generate one procedural vessel phantom");
  std::uint64_t phantom_seed = 0;
  std::string phantom_out;
  phantom_cmd->add_option("--seed", phantom_seed, "Phantom seed");
  phantom_cmd->add_option("-o,--output", phantom_out, "Output image (.oatd or .pgm)")->required();

  // operator
  auto* operator_cmd = app.add_subcommand("operator", "Build and cache the forward operators of the run");
  std::string operator_out;
  std::string placement = "both";
  operator_cmd->add_option("--placement", placement, "nominal, jittered or both")
      ->check(CLI::IsMember({"nominal", "jittered", "both"}));
  operator_cmd->add_option("-o,--output", operator_out, "Also save to this directory (single placement only)");

  // simulate
  auto* simulate_cmd = app.add_subcommand("simulate", "Forward-simulate a sinogram from an image");
  std::string sim_in, sim_out, sim_snr = "inf";
  std::uint64_t sim_seed = 0;
  simulate_cmd->add_option("-i,--input", sim_in, "Input image (.oatd or .pgm)")->required()->check(CLI::ExistingFile);
  simulate_cmd->add_option("-o,--output", sim_out, "Output sinogram (.oatd)")->required();
  simulate_cmd->add_option("--snr", sim_snr, "Noise level in dB, or inf");
  simulate_cmd->add_option("--seed", sim_seed, "Noise seed");

  // dataset
  auto* dataset_cmd = app.add_subcommand("dataset", "Build or validate the run's dataset");
  dataset_cmd->require_subcommand(1);
  auto* dataset_build = dataset_cmd->add_subcommand("build", "Generate phantoms, sinograms and LBP images");
  std::string ds_count, ds_val, ds_test, ds_seed;
  dataset_build->add_option("--count", ds_count, "Training entries");
  dataset_build->add_option("--val-count", ds_val, "Validation entries");
  dataset_build->add_option("--test-count", ds_test, "Test entries");
  dataset_build->add_option("--seed", ds_seed, "Master seed");
  auto* dataset_validate = dataset_cmd->add_subcommand("validate", "Check every file in the manifest");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one network stage");
  std::string train_stage, train_cond = "fdunet";
  train_cmd->add_option("stage", train_stage, "fdunet, cip or diffusion")
      ->required()
      ->check(CLI::IsMember({"fdunet", "cip", "diffusion"}));
  train_cmd->add_option("--condition-on", train_cond, "Conditioning image for cip/diffusion")
      ->check(CLI::IsMember({"fdunet", "lbp"}));

  // reconstruct
  auto* recon_cmd = app.add_subcommand("reconstruct", "Reconstruct one sinogram");
  std::string recon_method, recon_in, recon_out, recon_cond = "fdunet";
  std::optional<std::size_t> recon_nis;
  std::optional<double> recon_eta;
  std::optional<std::uint64_t> recon_seed;
  std::uint64_t recon_image_id = 0;
  recon_cmd->add_option("method", recon_method, "lbp, tikhonov, fdunet or dar")
      ->required()
      ->check(CLI::IsMember({"lbp", "tikhonov", "fdunet", "dar"}));
  recon_cmd->add_option("-i,--input", recon_in, "Sinogram (.oatd)")->required()->check(CLI::ExistingFile);
  recon_cmd->add_option("-o,--output", recon_out, "Output image (.oatd or .pgm)")->required();
  recon_cmd->add_option("--nis", recon_nis, "Inference steps (dar)");
  recon_cmd->add_option("--eta", recon_eta, "Sampler stochasticity in [0, 1] (dar)");
  recon_cmd->add_option("--seed", recon_seed, "Sampler seed (dar)");
  recon_cmd->add_option("--image-id", recon_image_id, "Image id mixed into per-patch seeds (dar)");
  recon_cmd->add_option("--condition-on", recon_cond, "Initial reconstruction feeding the CIP (dar)")
      ->check(CLI::IsMember({"fdunet", "lbp"}));

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score methods on the test split");
  std::string eval_methods, eval_nis, eval_snr, eval_cond = "fdunet";
  std::optional<std::size_t> eval_max;
  bool eval_dump = false;
  eval_cmd->add_option("--methods", eval_methods, "Comma list of lbp, tikhonov, fdunet, dar, dar_lbp");
  eval_cmd->add_option("--nis", eval_nis, "Comma list of inference steps for dar methods");
  eval_cmd->add_option("--snr", eval_snr, "Comma list of SNRs (dB or inf) to re-simulate the test set at");
  eval_cmd->add_option("--max-images", eval_max, "Score only the first N test images");
  eval_cmd->add_flag("--dump-images", eval_dump, "Write every reconstruction as a 16-bit PGM");
  eval_cmd->add_option("--condition-on", eval_cond, "Which trained DAR variant 'dar' refers to")
      ->check(CLI::IsMember({"fdunet", "lbp"}));

  // run
  auto* run_cmd = app.add_subcommand("run", "Every stage from dataset to eval");
  bool run_ablation = false;
  run_cmd->add_flag("--with-lbp-ablation", run_ablation, "Also train and score the LBP-conditioned DAR");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  spdlog::set_level(spdlog::level::from_str(g.log_level));
  set_deterministic(g.deterministic);
  if (g.deterministic) spdlog::info("deterministic mode: 1 worker");

  try {
    if (*phantom_cmd) {
      const auto cfg = resolve(g);
      auto params = cfg.dataset.phantom;
      params.seed = phantom_seed;
      const auto& geo = cfg.dataset.geometry;
      const auto result = phantom::generate_phantom(params, geo.grid_nx, geo.grid_ny);
      pipeline::export_image(result.image, phantom_out, pipeline::format_for_path(phantom_out));
      spdlog::info("phantom seed {}: fill fraction {:.3f}", phantom_seed, result.fill_fraction);
    } else if (*operator_cmd) {
      auto p = open_run(resolve(g));
      std::vector<acoustic::Placement> which;
      if (placement != "jittered") which.push_back(acoustic::Placement::nominal);
      if (placement != "nominal") which.push_back(acoustic::Placement::jittered);
      if (!operator_out.empty() && which.size() != 1)
        throw ConfigError("--output needs a single --placement");
      for (auto pl : which) {
        const auto& op = p.forward_operator(pl);
        spdlog::info("operator {}: {}x{}, {} nonzeros, cached at {}", pl == acoustic::Placement::jittered ? "jittered" : "nominal",
                     op.rows(), op.cols(), op.system_matrix().nnz(), p.layout().operator_dir(pl).string());
        if (!operator_out.empty()) acoustic::save_operator(op, operator_out);
      }
    } else if (*simulate_cmd) {
      auto p = open_run(resolve(g));
      const auto& geo = p.config().dataset.geometry;
      const auto img = load_input_image(sim_in, geo.grid_nx, geo.grid_ny);
      const auto clean = acoustic::apply_forward(p.forward_operator(acoustic::Placement::jittered), img);
      const double snr = parse_snr(sim_snr);
      const auto sino = std::isinf(snr) && snr > 0 ? clean : acoustic::add_noise(clean, snr, sim_seed);
      io::write_sinogram(sim_out, sino);
      spdlog::info("sinogram {}x{} written to {}", sino.detectors, sino.samples, sim_out);
    } else if (*dataset_cmd) {
      std::vector<std::string> extra;
      if (!ds_count.empty()) extra.push_back("dataset.train_count=" + std::to_string(parse_count(ds_count)));
      if (!ds_val.empty()) extra.push_back("dataset.val_count=" + std::to_string(parse_count(ds_val)));
      if (!ds_test.empty()) extra.push_back("dataset.test_count=" + std::to_string(parse_count(ds_test)));
      if (!ds_seed.empty()) extra.push_back("dataset.master_seed=" + std::to_string(parse_count(ds_seed)));
      auto p = open_run(resolve(g, extra));
      if (*dataset_build) {
        const auto m = p.build_dataset();
        spdlog::info("dataset: {} entries under {} (config {})", m.entries.size(), m.root, m.config_hash);
      } else if (*dataset_validate) {
        const auto m = p.manifest();
        phantom::validate_manifest(m);
        spdlog::info("dataset: {} entries valid", m.entries.size());
      }
    } else if (*train_cmd) {
      auto p = open_run(resolve(g));
      const auto cond = pipeline::parse_condition(train_cond);
      if (train_stage == "fdunet") log_losses("train fdunet", p.train_fdunet());
      else if (train_stage == "cip") log_losses("train cip", p.train_cip(cond));
      else log_losses("train diffusion", p.train_diffusion(cond));
    } else if (*recon_cmd) {
      auto p = open_run(resolve(g));
      const auto& op = p.forward_operator(acoustic::Placement::nominal);
      const auto sino = io::read_sinogram(recon_in);
      Image img;
      if (recon_method == "lbp") img = pipeline::reconstruct_lbp(op, sino);
      else if (recon_method == "tikhonov")
        img = pipeline::reconstruct_tikhonov(op, sino, p.tikhonov_lambda(), p.config().tikhonov);
      else if (recon_method == "fdunet") img = pipeline::reconstruct_fdunet(op, *p.load_fdunet(), sino);
      else {
        const auto& inf = p.config().inference;
        pipeline::DarOptions opts{recon_nis.value_or(inf.nis), recon_eta.value_or(inf.eta),
                                  recon_seed.value_or(inf.seed), recon_image_id, inf.clip_x0};
        if (opts.nis < 1 || opts.nis > p.config().schedule.steps())
          throw ConfigError("--nis must lie in [1, T]");
        if (opts.eta < 0.0 || opts.eta > 1.0) throw ConfigError("--eta must lie in [0, 1]");
        auto models = p.load_dar_models(pipeline::parse_condition(recon_cond));
        img = pipeline::reconstruct_dar(op, models, sino, p.patch_grid(), p.config().schedule, opts);
      }
      pipeline::export_image(img, recon_out, pipeline::format_for_path(recon_out));
      spdlog::info("{} reconstruction written to {}", recon_method, recon_out);
    } else if (*eval_cmd) {
      auto p = open_run(resolve(g));
      auto ev = p.config().eval;
      if (!eval_methods.empty()) ev.methods = split_list(eval_methods);
      if (eval_cond == "lbp")
        for (auto& m : ev.methods)
          if (m == "dar") m = "dar_lbp";
      if (!eval_nis.empty()) {
        ev.nis.clear();
        for (const auto& s : split_list(eval_nis)) ev.nis.push_back(parse_count(s));
      }
      if (!eval_snr.empty()) {
        ev.snr_db.clear();
        for (const auto& s : split_list(eval_snr)) ev.snr_db.push_back(parse_snr(s));
      }
      if (eval_max) ev.max_images = *eval_max;
      if (eval_dump) ev.dump_images = true;
      const auto report = p.run_eval(ev);
      std::cout << eval::summary_table(report);
    } else if (*run_cmd) {
      auto p = open_run(resolve(g));
      auto ev = p.config().eval;
      const bool ablation =
          run_ablation || std::find(ev.methods.begin(), ev.methods.end(), "dar_lbp") != ev.methods.end();
      if (run_ablation && std::find(ev.methods.begin(), ev.methods.end(), "dar_lbp") == ev.methods.end())
        ev.methods.push_back("dar_lbp");
      p.build_dataset();
      log_losses("train fdunet", p.train_fdunet());
      for (auto cond : {pipeline::ConditionOn::fdunet, pipeline::ConditionOn::lbp}) {
        if (cond == pipeline::ConditionOn::lbp && !ablation) continue;
        log_losses("train cip", p.train_cip(cond));
        log_losses("train diffusion", p.train_diffusion(cond));
      }
      const auto report = p.run_eval(ev);
      std::cout << eval::summary_table(report);
    }
  } catch (const PrerequisiteError& e) {
    spdlog::error("{}", e.what());
    return kPrerequisite;
  } catch (const ConfigError& e) {
    spdlog::error("config: {}", e.what());
    return kConfig;
  } catch (const ShapeError& e) {
    spdlog::error("shape: {}", e.what());
    return kConfig;
  } catch (const NumericalError& e) {
    spdlog::error("numerical: {}", e.what());
    return kNumerical;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kFailure;
  }
  return kOk;
}
