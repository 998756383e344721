#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "oat/core/error.hpp"
#include "oat/core/hash.hpp"
#include "oat/io/arrays.hpp"
#include "oat/io/pgm.hpp"
#include "oat/io/tensor_file.hpp"
#include "oat/pipeline/pipeline.hpp"

using namespace oat;
using namespace oat::pipeline;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("oat_unit_pipeline_" + name);
  fs::remove_all(dir);
  return dir;
}

// Desk geometry with tiny networks and a 2x2 patch grid; trains in seconds.
PipelineConfig tiny_config(const fs::path& run_dir) {
  auto c = PipelineConfig::desk();
  c.dataset.train_count = 8;
  c.dataset.val_count = 1;
  c.dataset.test_count = 2;
  c.dataset.master_seed = 7;
  c.schedule = diffusion::make_linear_schedule(50, 1e-3, 0.2);
  c.patch_size = 16;
  c.fd_unet.widths = {4, 8};
  c.fd_unet.growth = 4;
  c.fd_unet.layers_per_block = 2;
  c.cip.layer_dims = {256, 32, 16};
  c.denoiser.image_size = 16;
  c.denoiser.channels = {8, 16};
  c.denoiser.resblocks_per_scale = 1;
  c.denoiser.attention_heads = 2;
  c.denoiser.norm_groups = 4;
  c.denoiser.cond_dim = 16;
  c.denoiser.cond_tokens = 2;
  c.denoiser.time_sinusoid_dim = 8;
  c.denoiser.time_embed_dim = 16;
  for (auto* t : {&c.training.fd_unet, &c.training.cip, &c.training.diffusion}) {
    t->epochs = 1;
    t->batch = 4;
  }
  c.tikhonov.max_iters = 20;
  c.run_dir = run_dir.string();
  return c;
}

std::map<std::string, std::uint64_t> tree_hashes(const fs::path& root) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = file_content_hash(e.path().string());
  return out;
}

Image random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(w, h);
  for (auto& v : img.pixels) v = u(rng);
  return img;
}

}  // namespace

TEST_CASE("profiles validate and describe the intended scales") {
  const auto desk = PipelineConfig::desk();
  const auto paper = PipelineConfig::paper();
  CHECK_NOTHROW(desk.validate());
  CHECK_NOTHROW(paper.validate());
  CHECK(desk.dataset.geometry.grid_nx == 32);
  CHECK(desk.dataset.geometry.detector_count == 16);
  CHECK(desk.dataset.geometry.time_samples == 256);
  CHECK(desk.schedule.steps() == 200);
  CHECK(desk.denoiser.channels == std::vector<std::size_t>{16, 32, 64});
  CHECK(desk.patch_size == 16);
  CHECK(desk.cip.code_dim() == desk.denoiser.cond_dim);
  CHECK(desk.denoiser.query_positions);
  CHECK_FALSE(paper.denoiser.query_positions);
  CHECK(desk.dataset.train_count == 2000);
  CHECK(paper.dataset.geometry.grid_nx == 128);
  CHECK(paper.patch_size == 64);
  CHECK(paper.schedule.steps() == 1000);
  CHECK(paper.schedule.beta1() == 1e-4);
  CHECK(paper.schedule.beta_t() == 0.02);
  CHECK(paper.training.diffusion.optimizer.learning_rate == 1e-4);
  CHECK(paper.training.diffusion.epochs == 200);
  CHECK(paper.training.diffusion.batch == 16);
  CHECK(paper.cip.code_dim() == 1024);
  // alpha_bar(T) must be small enough that x_T is effectively pure noise.
  CHECK(desk.schedule.alpha_bar(200) < 1e-4);
}

TEST_CASE("config json round trip preserves the hash") {
  for (const auto& c : {PipelineConfig::desk(), PipelineConfig::paper()}) {
    const nlohmann::json j = c;
    PipelineConfig back = PipelineConfig::desk();
    from_json(nlohmann::json::parse(j.dump()), back);
    CHECK(back.hash() == c.hash());
    CHECK(nlohmann::json(back) == j);
  }
}

TEST_CASE("config hash ignores the run directory and tracks every other field") {
  auto a = PipelineConfig::desk();
  auto b = a;
  b.run_dir = "elsewhere";
  CHECK(a.hash() == b.hash());
  b.inference.seed = 1;
  CHECK(a.hash() != b.hash());
  b = a;
  b.training.cip.optimizer.learning_rate = 2e-3;
  CHECK(a.hash() != b.hash());
}

TEST_CASE("unknown keys are rejected from files and overrides") {
  const auto dir = scratch("keys");
  fs::create_directories(dir);
  const auto file = (dir / "cfg.json").string();
  std::ofstream(file) << R"({"training": {"cip": {"epochs": 3}}, "inference": {"nis": 10}})";
  const auto c = load_config("desk", file, {});
  CHECK(c.training.cip.epochs == 3);
  CHECK(c.inference.nis == 10);
  CHECK(c.training.fd_unet.epochs == 20);

  std::ofstream(file) << R"({"inference": {"steps": 10}})";
  CHECK_THROWS_AS(load_config("desk", file, {}), ConfigError);
  std::ofstream(file) << R"({"extra": 1})";
  CHECK_THROWS_AS(load_config("desk", file, {}), ConfigError);
  CHECK_THROWS_AS(load_config("desk", "", {"inference.steps=3"}), ConfigError);
  CHECK_THROWS_AS(load_config("desk", "", {"noequals"}), ConfigError);
  CHECK_THROWS_AS(load_config("laptop", "", {}), ConfigError);
}

TEST_CASE("overrides parse values as json") {
  const auto c = load_config("desk", "",
                             {"training.diffusion.optimizer.learning_rate=5e-4", "eval.methods=[\"lbp\"]",
                              "paths.run_dir=somewhere", "eval.snr_db=[20, \"inf\"]"});
  CHECK(c.training.diffusion.optimizer.learning_rate == 5e-4);
  CHECK(c.eval.methods == std::vector<std::string>{"lbp"});
  CHECK(c.run_dir == "somewhere");
  REQUIRE(c.eval.snr_db.size() == 2);
  CHECK(std::isinf(c.eval.snr_db[1]));
  CHECK_THROWS_AS(load_config("desk", "", {"inference.nis=\"many\""}), ConfigError);
}

TEST_CASE("inconsistent sections are config errors") {
  auto check_bad = [](auto mutate) {
    auto c = PipelineConfig::desk();
    mutate(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  check_bad([](PipelineConfig& c) { c.patch_size = 24; });
  check_bad([](PipelineConfig& c) { c.denoiser.image_size = 32; });
  check_bad([](PipelineConfig& c) { c.denoiser.channels = {18, 36, 72}; c.denoiser.norm_groups = 2; c.denoiser.attention_heads = 2; });
  check_bad([](PipelineConfig& c) { c.cip.layer_dims = {1024, 256, 64}; });
  check_bad([](PipelineConfig& c) { c.fd_unet.image_size = 64; });
  check_bad([](PipelineConfig& c) { c.inference.nis = 201; });
  check_bad([](PipelineConfig& c) { c.inference.eta = 1.5; });
  check_bad([](PipelineConfig& c) { c.eval.methods = {"lbp", "magic"}; });
  check_bad([](PipelineConfig& c) { c.eval.nis = {0}; });
}

TEST_CASE("export_image: tensorfile round trip is bit-identical") {
  const auto dir = scratch("export");
  fs::create_directories(dir);
  auto img = random_image(13, 7, 3);
  img.pixels[5] = -1e-300;
  img.pixels[6] = 1e300;
  const auto path = (dir / "img.oatd").string();
  export_image(img, path, format_for_path(path));
  const auto back = io::read_image(path);
  CHECK(back.width == 13);
  CHECK(back.height == 7);
  CHECK(back.pixels == img.pixels);
}

TEST_CASE("export_image: pgm of a constant image is uniform") {
  const auto dir = scratch("export_const");
  fs::create_directories(dir);
  const auto path = (dir / "c.pgm").string();
  export_image(Image(9, 5, 0.37), path, ImageFormat::pgm);
  const auto back = io::read_pgm(path);
  for (double v : back.pixels) CHECK(v == back.pixels[0]);
}

TEST_CASE("export_image: pgm of a ramp matches an independent quantizer") {
  const auto dir = scratch("export_ramp");
  fs::create_directories(dir);
  Image ramp(64, 3);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 64; ++x) ramp.at(x, y) = -2.0 + 0.37 * static_cast<double>(x) + 0.001 * y;
  const auto path = (dir / "r.pgm").string();
  export_image(ramp, path, ImageFormat::pgm);

  const auto bytes = io::read_file_bytes(path);
  // Header "P5\n64 3\n65535\n" then big-endian 16-bit samples.
  const std::string header = "P5\n64 3\n65535\n";
  REQUIRE(bytes.size() == header.size() + 64 * 3 * 2);
  const double lo = ramp.pixels.front(), hi = ramp.pixels.back();
  unsigned prev = 0;
  for (std::size_t i = 0; i < ramp.size(); ++i) {
    const auto b0 = std::to_integer<unsigned>(bytes[header.size() + 2 * i]);
    const auto b1 = std::to_integer<unsigned>(bytes[header.size() + 2 * i + 1]);
    const unsigned stored = (b0 << 8) | b1;
    const auto expected = static_cast<unsigned>(std::lround((ramp.pixels[i] - lo) / (hi - lo) * 65535.0));
    CHECK(stored == expected);
    if (i % 64 != 0) CHECK(stored > prev);
    prev = stored;
  }
}

TEST_CASE("export_image rejects non-finite pixels and unwritable paths") {
  Image img(4, 4, 0.5);
  img.pixels[3] = std::nan("");
  CHECK_THROWS_AS(export_image(img, "/tmp/never.oatd", ImageFormat::tensorfile), NumericalError);
  // A regular file where a directory should be cannot be written through.
  const auto dir = scratch("export_bad");
  fs::create_directories(dir);
  std::ofstream(dir / "blocker") << "x";
  CHECK_THROWS_AS(export_image(Image(4, 4, 0.5), (dir / "blocker" / "img.oatd").string(), ImageFormat::tensorfile),
                  IoError);
  CHECK_THROWS_AS(export_image(Image(4, 4, 0.5), (dir / "blocker" / "img.pgm").string(), ImageFormat::pgm), IoError);
  CHECK_THROWS_AS(format_for_path("img.png"), ConfigError);
}

TEST_CASE("dataset build is reproducible across run directories") {
  const auto a = scratch("ds_a"), b = scratch("ds_b");
  Pipeline pa(tiny_config(a)), pb(tiny_config(b));
  pa.build_dataset();
  pb.build_dataset();
  const auto ha = tree_hashes(a / "dataset"), hb = tree_hashes(b / "dataset");
  CHECK(ha.size() == 3 * 11 + 1);
  CHECK(ha == hb);
  pa.build_dataset();
  CHECK(tree_hashes(a / "dataset") == ha);
}

TEST_CASE("stages name their missing prerequisites") {
  const auto dir = scratch("prereq");
  Pipeline p(tiny_config(dir));
  try {
    p.train_fdunet();
    FAIL("expected a prerequisite error");
  } catch (const PrerequisiteError& e) {
    CHECK(e.stage() == "dataset");
  }
  p.build_dataset();
  try {
    p.train_diffusion(ConditionOn::fdunet);
    FAIL("expected a prerequisite error");
  } catch (const PrerequisiteError& e) {
    CHECK(e.stage() == "train fdunet");
  }
  try {
    p.train_diffusion(ConditionOn::lbp);
    FAIL("expected a prerequisite error");
  } catch (const PrerequisiteError& e) {
    CHECK(e.stage() == "train cip --condition-on lbp");
  }
  try {
    p.load_dar_models(ConditionOn::lbp);
    FAIL("expected a prerequisite error");
  } catch (const PrerequisiteError& e) {
    CHECK(e.stage() == "train diffusion --condition-on lbp");
  }
  CHECK_THROWS_AS(p.train_cip(ConditionOn::fdunet), PrerequisiteError);
}

TEST_CASE("tiny end-to-end pipeline") {
  const auto dir = scratch("e2e");
  Pipeline p(tiny_config(dir));
  p.build_dataset();
  p.train_fdunet();
  const auto m = p.manifest();
  for (const auto& e : m.entries) CHECK(e.has_fdunet());
  for (auto cond : {ConditionOn::fdunet, ConditionOn::lbp}) {
    p.train_cip(cond);
    p.train_diffusion(cond);
  }

  const auto& op = p.forward_operator(acoustic::Placement::nominal);
  const auto sino = io::read_sinogram(m.path(m.split(phantom::Split::test).front()->sino));
  const auto grid = p.patch_grid();
  CHECK(grid.count() == 4);

  SUBCASE("dar is deterministic for a fixed seed and shaped like the grid") {
    auto models = p.load_dar_models(ConditionOn::fdunet);
    const DarOptions opts{5, 0.0, 9, 3};
    const auto a = reconstruct_dar(op, models, sino, grid, p.config().schedule, opts);
    const auto b = reconstruct_dar(op, models, sino, grid, p.config().schedule, opts);
    CHECK(a.width == 32);
    CHECK(a.height == 32);
    CHECK(a.pixels == b.pixels);
    CHECK(*std::min_element(a.pixels.begin(), a.pixels.end()) == 0.0);
    CHECK(*std::max_element(a.pixels.begin(), a.pixels.end()) == 1.0);
    auto other = opts;
    other.image_id = 4;
    CHECK(reconstruct_dar(op, models, sino, grid, p.config().schedule, other).pixels != a.pixels);
    // eta = 1 is stochastic but still seeded.
    const DarOptions noisy{5, 1.0, 9, 3};
    CHECK(reconstruct_dar(op, models, sino, grid, p.config().schedule, noisy).pixels ==
          reconstruct_dar(op, models, sino, grid, p.config().schedule, noisy).pixels);
  }

  SUBCASE("lbp-conditioned models skip the fd-unet") {
    auto models = p.load_dar_models(ConditionOn::lbp);
    CHECK(models.fdunet == nullptr);
    const auto img = reconstruct_dar(op, models, sino, grid, p.config().schedule, {3, 0.0, 1, 0});
    CHECK(img.size() == 32 * 32);
  }

  SUBCASE("mismatched inputs are rejected") {
    auto models = p.load_dar_models(ConditionOn::fdunet);
    Sinogram wrong(3, 7);
    CHECK_THROWS_AS(reconstruct_dar(op, models, wrong, grid, p.config().schedule, {}), ShapeError);
    const auto big = phantom::PatchGrid::tiling(64, 64, 16, 16);
    CHECK_THROWS_AS(reconstruct_dar(op, models, sino, big, p.config().schedule, {}), ShapeError);
    const auto coarse = phantom::PatchGrid::tiling(32, 32, 32, 32);
    CHECK_THROWS_AS(reconstruct_dar(op, models, sino, coarse, p.config().schedule, {}), ShapeError);

    auto changed = tiny_config(dir);
    changed.fd_unet.growth = 6;
    CHECK_THROWS_AS(Pipeline(changed).load_fdunet(), ConfigError);
  }

  SUBCASE("eval with lbp only gives one record per test image") {
    EvalConfig ev;
    ev.methods = {"lbp"};
    const auto report = p.evaluate(ev);
    CHECK(report.records.size() == 2);
    CHECK(report.config_hash == p.config().hash());
  }

  SUBCASE("eval with lbp, fdunet and dar at two nis values gives four variants per image") {
    EvalConfig ev;
    ev.methods = {"lbp", "fdunet", "dar"};
    ev.nis = {5, 25};
    std::vector<eval::TimingRecord> timings;
    const auto report = p.evaluate(ev, &timings);
    CHECK(report.records.size() == 8);
    CHECK(timings.size() == 8);
    std::map<std::string, int> per_image;
    for (const auto& r : report.records) ++per_image[r.image_id];
    for (const auto& [id, n] : per_image) CHECK(n == 4);
    const auto aggs = report.aggregates();
    REQUIRE(aggs.size() == 4);
    CHECK(aggs[0].variant == "lbp");
    CHECK(aggs[1].variant == "fdunet");
    CHECK(aggs[2].variant == "dar-nis5");
    CHECK(aggs[3].variant == "dar-nis25");
  }

  SUBCASE("eval reports are identical across invocations and snr lists re-simulate") {
    EvalConfig ev;
    ev.methods = {"lbp", "tikhonov", "dar_lbp"};
    ev.nis = {3};
    p.run_eval(ev);
    const auto first = io::read_file_bytes((dir / "eval" / "report.tsv").string());
    p.run_eval(ev);
    CHECK(io::read_file_bytes((dir / "eval" / "report.tsv").string()) == first);
    CHECK(fs::exists(dir / "eval" / "summary.txt"));
    CHECK(fs::exists(dir / "eval" / "timings.tsv"));

    ev.methods = {"lbp"};
    ev.snr_db = {10.0, std::numeric_limits<double>::infinity()};
    const auto report = p.evaluate(ev);
    REQUIRE(report.records.size() == 4);
    CHECK(report.records[0].snr_db == 10.0);
    CHECK(std::isinf(report.records[3].snr_db));
    CHECK(report.records[0].psnr < report.records[2].psnr);
  }
}

TEST_CASE("dar merges four patches on a 128x128 grid") {
  Models models;
  models.condition = ConditionOn::lbp;
  nn::CIPConfig cc;
  cc.layer_dims = {4096, 32, 16};
  nn::DenoiserConfig dc;
  dc.image_size = 64;
  dc.channels = {4, 8};
  dc.resblocks_per_scale = 1;
  dc.attention_heads = 2;
  dc.norm_groups = 4;
  dc.cond_dim = 16;
  dc.cond_tokens = 2;
  dc.time_sinusoid_dim = 8;
  dc.time_embed_dim = 8;
  models.cip = std::make_unique<nn::CIPAutoencoder<float>>(cc, 1);
  models.denoiser = std::make_unique<nn::ConditionalDenoiser<float>>(dc, 2);
  const auto grid = phantom::PatchGrid::tiling(128, 128, 64, 64);
  const auto sched = diffusion::make_linear_schedule(20, 1e-3, 0.2);
  const auto cond = random_image(128, 128, 5);
  const auto img = dar_from_conditioning(models, cond, grid, sched, {2, 0.0, 4, 0});
  CHECK(img.width == 128);
  CHECK(img.height == 128);
  for (double v : img.pixels) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  // Each patch is sampled from its own seed, so no two patches coincide.
  const auto patches = phantom::split_patches(img, grid);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) CHECK(patches[i].pixels != patches[j].pixels);
}
