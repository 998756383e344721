#include "oat/pipeline/config.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <sstream>

#include "oat/core/error.hpp"
#include "oat/core/hash.hpp"

namespace oat::pipeline {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

template <typename F>
void read_object(const nlohmann::json& j, const std::string& section, F&& handle) {
  if (!j.is_object()) throw ConfigError(section + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    try {
      known = handle(key, value);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(section + "." + key + ": " + e.what());
    }
    if (!known) throw ConfigError(section + ": unknown key '" + key + "'");
  }
}

// Recursive merge that refuses keys the base does not have.
void merge_strict(nlohmann::json& base, const nlohmann::json& patch, const std::string& path) {
  if (!patch.is_object() || !base.is_object()) {
    base = patch;
    return;
  }
  for (const auto& [key, value] : patch.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + where + "'");
    merge_strict(base[key], value, where);
  }
}

nn::TrainConfig train_config(double lr, std::size_t epochs, std::size_t batch, std::uint64_t seed) {
  nn::TrainConfig c;
  c.optimizer.learning_rate = lr;
  c.epochs = epochs;
  c.batch = batch;
  c.seed = seed;
  return c;
}

const std::vector<std::string> kMethods{"lbp", "tikhonov", "fdunet", "dar", "dar_lbp"};

}  // namespace

std::string_view condition_name(ConditionOn c) noexcept { return c == ConditionOn::lbp ? "lbp" : "fdunet"; }

ConditionOn parse_condition(std::string_view s) {
  if (s == "fdunet") return ConditionOn::fdunet;
  if (s == "lbp") return ConditionOn::lbp;
  throw ConfigError("condition must be 'fdunet' or 'lbp', got '" + std::string(s) + "'");
}

PipelineConfig PipelineConfig::desk() {
  PipelineConfig c;
  c.dataset = phantom::DatasetConfig{};
  // T = 200 with the paper's betas would leave alpha_bar(T) near 0.14, so the
  // betas are scaled by 1000 / T to keep x_T close to pure noise.
  c.schedule = diffusion::make_linear_schedule(200, 5e-4, 0.1);
  c.patch_size = 16;
  c.fd_unet = nn::FDUNetConfig{};
  c.cip = nn::CIPConfig{{256, 224, 192, 128}};
  c.denoiser = nn::DenoiserConfig{};
  c.denoiser.image_size = 16;
  c.denoiser.query_positions = true;
  c.training.fd_unet = train_config(1e-3, 20, 16, 11);
  c.training.cip = train_config(1e-3, 20, 16, 12);
  c.training.diffusion = train_config(1e-3, 20, 16, 13);
  c.tikhonov.max_iters = 200;
  c.run_dir = "runs/desk";
  return c;
}

PipelineConfig PipelineConfig::paper() {
  PipelineConfig c;
  c.dataset.geometry = acoustic::ImagingGeometry::full_scale();
  c.dataset.phantom = phantom::PhantomParams{};
  c.dataset.train_count = 64000;
  c.dataset.val_count = 10000;
  c.dataset.test_count = 100;
  c.schedule = diffusion::make_linear_schedule(1000, 1e-4, 0.02);
  c.patch_size = 64;
  c.fd_unet.image_size = 128;
  c.fd_unet.widths = {32, 64, 128, 256};
  c.cip.layer_dims = {4096, 3072, 2048, 1024};
  c.denoiser.image_size = 64;
  c.denoiser.channels = {128, 256, 512, 1024};
  c.denoiser.attention_heads = 8;
  c.denoiser.norm_groups = 32;
  c.denoiser.cond_dim = 1024;
  c.denoiser.cond_tokens = 16;
  c.denoiser.time_sinusoid_dim = 128;
  c.denoiser.time_embed_dim = 512;
  c.training.fd_unet = train_config(1e-4, 200, 16, 11);
  c.training.cip = train_config(1e-4, 200, 16, 12);
  c.training.diffusion = train_config(1e-4, 200, 16, 13);
  c.run_dir = "runs/paper";
  return c;
}

void PipelineConfig::validate() const {
  dataset.validate();
  fd_unet.validate();
  cip.validate();
  denoiser.validate();
  training.fd_unet.validate();
  training.cip.validate();
  training.diffusion.validate();

  const auto& g = dataset.geometry;
  require(g.grid_nx == g.grid_ny, "geometry: the learned stages need a square grid");
  require(fd_unet.image_size == g.grid_nx, "fd_unet.image_size must equal the geometry grid size");
  require(patch_size > 0 && g.grid_nx % patch_size == 0, "patch_size must divide the grid size");
  require(denoiser.image_size == patch_size, "denoiser.image_size must equal patch_size");
  require(cip.input_dim() == patch_size * patch_size, "cip.layer_dims must start at patch_size^2");
  require(cip.code_dim() == denoiser.cond_dim, "cip.layer_dims must end at denoiser.cond_dim");

  const std::size_t T = schedule.steps();
  require(inference.nis >= 1 && inference.nis <= T, "inference.nis must lie in [1, T]");
  require(inference.eta >= 0.0 && inference.eta <= 1.0, "inference.eta must lie in [0, 1]");
  require(tikhonov.lambda_rel > 0.0 && std::isfinite(tikhonov.lambda_rel), "tikhonov.lambda_rel must be positive");
  require(tikhonov.max_iters > 0 && tikhonov.tol > 0.0, "tikhonov: max_iters and tol must be positive");

  require(!eval.methods.empty(), "eval.methods must be nonempty");
  for (const auto& m : eval.methods)
    require(std::find(kMethods.begin(), kMethods.end(), m) != kMethods.end(), "eval: unknown method '" + m + "'");
  for (auto n : eval.nis) require(n >= 1 && n <= T, "eval.nis entries must lie in [1, T]");
  for (auto s : eval.snr_db) require(!std::isnan(s) && s > -1e300, "eval.snr_db entries must be numbers or inf");
  require(!run_dir.empty(), "paths.run_dir must be nonempty");
}

std::string PipelineConfig::hash() const {
  nlohmann::json j = *this;
  j.erase("paths");
  return hex64(fnv1a(j.dump()));
}

namespace {

nlohmann::json snr_list_json(const std::vector<double>& v) {
  auto a = nlohmann::json::array();
  for (double s : v) a.push_back(std::isinf(s) ? nlohmann::json("inf") : nlohmann::json(s));
  return a;
}

std::vector<double> snr_list_from(const nlohmann::json& a) {
  if (!a.is_array()) throw ConfigError("eval.snr_db must be an array");
  std::vector<double> out;
  for (const auto& v : a) {
    if (v.is_string() && v.get<std::string>() == "inf") out.push_back(std::numeric_limits<double>::infinity());
    else if (v.is_number()) out.push_back(v.get<double>());
    else throw ConfigError("eval.snr_db entries must be numbers or \"inf\"");
  }
  return out;
}

}  // namespace

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  nlohmann::json ds = c.dataset;
  const nlohmann::json geometry = ds["geometry"];
  const nlohmann::json phantom = ds["phantom"];
  ds.erase("geometry");
  ds.erase("phantom");
  j = nlohmann::json{
      {"geometry", geometry},
      {"phantom", phantom},
      {"dataset", ds},
      {"schedule", c.schedule},
      {"patch_size", c.patch_size},
      {"fd_unet", c.fd_unet},
      {"cip", c.cip},
      {"denoiser", c.denoiser},
      {"training", {{"fd_unet", c.training.fd_unet}, {"cip", c.training.cip}, {"diffusion", c.training.diffusion}}},
      {"inference", {{"nis", c.inference.nis}, {"eta", c.inference.eta}, {"seed", c.inference.seed}, {"clip_x0", c.inference.clip_x0}}},
      {"tikhonov",
       {{"lambda_rel", c.tikhonov.lambda_rel}, {"max_iters", c.tikhonov.max_iters}, {"tol", c.tikhonov.tol}}},
      {"eval",
       {{"methods", c.eval.methods},
        {"nis", c.eval.nis},
        {"snr_db", snr_list_json(c.eval.snr_db)},
        {"max_images", c.eval.max_images},
        {"dump_images", c.eval.dump_images}}},
      {"paths", {{"run_dir", c.run_dir}}}};
}

void from_json(const nlohmann::json& j, PipelineConfig& c) {
  nlohmann::json ds = c.dataset;
  read_object(j, "config", [&](const std::string& k, const nlohmann::json& v) {
    if (k == "geometry") ds["geometry"] = v;
    else if (k == "phantom") ds["phantom"] = v;
    else if (k == "dataset") {
      if (!v.is_object()) throw ConfigError("dataset must be an object");
      for (const auto& [dk, dv] : v.items()) {
        if (dk == "geometry" || dk == "phantom") throw ConfigError("dataset: unknown key '" + dk + "'");
        ds[dk] = dv;
      }
    } else if (k == "schedule") c.schedule = v.get<diffusion::NoiseSchedule>();
    else if (k == "patch_size") c.patch_size = v.get<std::size_t>();
    else if (k == "fd_unet") c.fd_unet = v.get<nn::FDUNetConfig>();
    else if (k == "cip") c.cip = v.get<nn::CIPConfig>();
    else if (k == "denoiser") c.denoiser = v.get<nn::DenoiserConfig>();
    else if (k == "training") {
      read_object(v, "training", [&](const std::string& tk, const nlohmann::json& tv) {
        if (tk == "fd_unet") c.training.fd_unet = tv.get<nn::TrainConfig>();
        else if (tk == "cip") c.training.cip = tv.get<nn::TrainConfig>();
        else if (tk == "diffusion") c.training.diffusion = tv.get<nn::TrainConfig>();
        else return false;
        return true;
      });
    } else if (k == "inference") {
      read_object(v, "inference", [&](const std::string& ik, const nlohmann::json& iv) {
        if (ik == "nis") c.inference.nis = iv.get<std::size_t>();
        else if (ik == "eta") c.inference.eta = iv.get<double>();
        else if (ik == "seed") c.inference.seed = iv.get<std::uint64_t>();
        else if (ik == "clip_x0") c.inference.clip_x0 = iv.get<bool>();
        else return false;
        return true;
      });
    } else if (k == "tikhonov") {
      read_object(v, "tikhonov", [&](const std::string& tk, const nlohmann::json& tv) {
        if (tk == "lambda_rel") c.tikhonov.lambda_rel = tv.get<double>();
        else if (tk == "max_iters") c.tikhonov.max_iters = tv.get<std::size_t>();
        else if (tk == "tol") c.tikhonov.tol = tv.get<double>();
        else return false;
        return true;
      });
    } else if (k == "eval") {
      read_object(v, "eval", [&](const std::string& ek, const nlohmann::json& ev) {
        if (ek == "methods") c.eval.methods = ev.get<std::vector<std::string>>();
        else if (ek == "nis") c.eval.nis = ev.get<std::vector<std::size_t>>();
        else if (ek == "snr_db") c.eval.snr_db = snr_list_from(ev);
        else if (ek == "max_images") c.eval.max_images = ev.get<std::size_t>();
        else if (ek == "dump_images") c.eval.dump_images = ev.get<bool>();
        else return false;
        return true;
      });
    } else if (k == "paths") {
      read_object(v, "paths", [&](const std::string& pk, const nlohmann::json& pv) {
        if (pk != "run_dir") return false;
        c.run_dir = pv.get<std::string>();
        return true;
      });
    } else return false;
    return true;
  });
  c.dataset = ds.get<phantom::DatasetConfig>();
}

void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key.path=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);

  nlohmann::json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) throw ConfigError("override: unknown key '" + path + "'");
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  auto value = nlohmann::json::parse(text, nullptr, false);
  *node = value.is_discarded() ? nlohmann::json(text) : value;
}

PipelineConfig load_config(const std::string& profile, const std::string& path,
                           const std::vector<std::string>& overrides) {
  PipelineConfig base;
  if (profile == "desk") base = PipelineConfig::desk();
  else if (profile == "paper") base = PipelineConfig::paper();
  else throw ConfigError("unknown profile '" + profile + "' (expected desk or paper)");

  nlohmann::json j = base;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    auto file = nlohmann::json::parse(ss.str(), nullptr, false);
    if (file.is_discarded()) throw ConfigError("config file " + path + " is not valid JSON");
    merge_strict(j, file, "");
  }
  for (const auto& o : overrides) apply_override(j, o);

  PipelineConfig c = base;
  from_json(j, c);
  c.validate();
  return c;
}

}  // namespace oat::pipeline
