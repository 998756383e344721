#include "oat/phantom/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "oat/acoustic/noise.hpp"
#include "oat/core/error.hpp"
#include "oat/core/hash.hpp"
#include "oat/core/parallel.hpp"
#include "oat/io/arrays.hpp"
#include "oat/io/tensor_file.hpp"

namespace fs = std::filesystem;

namespace oat::phantom {

std::string_view split_name(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(s) + "'");
}

void DatasetConfig::validate() const {
  geometry.validate();
  phantom.validate();
  if (total() == 0) throw ConfigError("dataset: no entries requested");
  const bool clean = std::isinf(snr_db.lo) && snr_db.lo > 0 && std::isinf(snr_db.hi) && snr_db.hi > 0;
  if (!clean && !(std::isfinite(snr_db.lo) && std::isfinite(snr_db.hi) && snr_db.hi >= snr_db.lo))
    throw ConfigError("dataset: snr_db must be an ordered finite range or [inf, inf]");
}

std::string DatasetConfig::hash() const {
  nlohmann::json j = *this;
  return hex64(fnv1a(j.dump()));
}

namespace {

nlohmann::json snr_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double snr_from(const nlohmann::json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    throw ConfigError("snr value must be a number or \"inf\"");
  }
  return v.get<double>();
}

std::string format_snr(double v) { return std::isinf(v) ? (v > 0 ? "inf" : "-inf") : fmt::format("{:.17g}", v); }

}  // namespace

void to_json(nlohmann::json& j, const DatasetConfig& c) {
  j = nlohmann::json{{"geometry", c.geometry},
                     {"phantom", c.phantom},
                     {"train_count", c.train_count},
                     {"val_count", c.val_count},
                     {"test_count", c.test_count},
                     {"snr_db", nlohmann::json::array({snr_json(c.snr_db.lo), snr_json(c.snr_db.hi)})},
                     {"master_seed", c.master_seed}};
}

void from_json(const nlohmann::json& j, DatasetConfig& c) {
  if (!j.is_object()) throw ConfigError("dataset must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "geometry") c.geometry = value.get<acoustic::ImagingGeometry>();
      else if (key == "phantom") c.phantom = value.get<PhantomParams>();
      else if (key == "train_count") c.train_count = value.get<std::size_t>();
      else if (key == "val_count") c.val_count = value.get<std::size_t>();
      else if (key == "test_count") c.test_count = value.get<std::size_t>();
      else if (key == "snr_db") {
        if (!value.is_array() || value.size() != 2) throw ConfigError("dataset.snr_db: expected [lo, hi]");
        c.snr_db = {snr_from(value[0]), snr_from(value[1])};
      } else if (key == "master_seed") c.master_seed = value.get<std::uint64_t>();
      else throw ConfigError("dataset: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("dataset." + key + ": " + e.what());
    }
  }
}

std::string DatasetManifest::path(const std::string& relative) const { return (fs::path(root) / relative).string(); }

std::vector<const ManifestEntry*> DatasetManifest::split(Split s) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(&e);
  return out;
}

void write_manifest(const DatasetManifest& m) {
  std::ostringstream os;
  os << "# oat dataset manifest v1\n";
  os << "# config_hash=" << m.config_hash << "\n";
  os << "# master_seed=" << m.master_seed << "\n";
  os << "phantom\tsino\tlbp\tfdunet\tsplit\tseed\tsnr_db\n";
  for (const auto& e : m.entries)
    os << e.phantom << '\t' << e.sino << '\t' << e.lbp << '\t' << e.fdunet << '\t' << split_name(e.split) << '\t'
       << e.seed << '\t' << format_snr(e.snr_db) << '\n';
  const std::string text = os.str();
  io::write_file_bytes((fs::path(m.root) / kManifestName).string(), std::as_bytes(std::span(text)));
}

DatasetManifest read_manifest(const std::string& root) {
  const auto file = fs::path(root) / kManifestName;
  if (!fs::exists(file)) throw PrerequisiteError("dataset", "no manifest at " + file.string());
  std::ifstream in(file);
  DatasetManifest m;
  m.root = root;
  std::string line;
  bool header_seen = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.starts_with("# config_hash=")) {
      m.config_hash = line.substr(14);
      continue;
    }
    if (line.starts_with("# master_seed=")) {
      m.master_seed = std::stoull(line.substr(14));
      continue;
    }
    if (line.starts_with("#")) continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, '\t');) f.push_back(tok);
    if (f.size() != 7) throw IoError(fmt::format("{}:{}: expected 7 fields, got {}", file.string(), lineno, f.size()));
    ManifestEntry e;
    e.phantom = f[0];
    e.sino = f[1];
    e.lbp = f[2];
    e.fdunet = f[3];
    e.split = parse_split(f[4]);
    e.seed = std::stoull(f[5]);
    e.snr_db = f[6] == "inf" ? std::numeric_limits<double>::infinity() : std::stod(f[6]);
    m.entries.push_back(std::move(e));
  }
  return m;
}

void validate_manifest(const DatasetManifest& m) {
  std::set<std::string> seen;
  for (const auto& e : m.entries) {
    for (const auto* rel : {&e.phantom, &e.sino, &e.lbp, &e.fdunet}) {
      if (*rel == "-") continue;
      const auto full = m.path(*rel);
      if (!fs::exists(full)) throw IoError("manifest references missing file " + full);
      io::read_tensor(full);
      if (!seen.insert(*rel).second) throw IoError("file listed twice in manifest: " + *rel);
    }
  }
}

namespace {

bool entry_intact(const DatasetManifest& m, const ManifestEntry& e) {
  try {
    for (const auto* rel : {&e.phantom, &e.sino, &e.lbp}) io::read_tensor(m.path(*rel));
    return true;
  } catch (const Error&) {
    return false;
  }
}

}  // namespace

DatasetManifest build_dataset(const DatasetConfig& config, const std::string& root, DatasetOperators ops) {
  config.validate();
  const std::string hash = config.hash();

  std::optional<DatasetManifest> previous;
  if (fs::exists(fs::path(root) / kManifestName)) {
    previous = read_manifest(root);
    if (previous->config_hash != hash)
      throw ConfigError("dataset at " + root + " was built with config " + previous->config_hash +
                        ", current config hashes to " + hash);
  }

  std::optional<acoustic::ForwardOperator> sim_own, rec_own;
  if (!ops.simulation) {
    sim_own = acoustic::build_forward_operator(config.geometry, {acoustic::Placement::jittered});
    ops.simulation = &*sim_own;
  }
  if (!ops.reconstruction) {
    rec_own = acoustic::build_forward_operator(config.geometry, {acoustic::Placement::nominal});
    ops.reconstruction = &*rec_own;
  }

  for (const char* sub : {"phantom", "sino", "lbp"}) fs::create_directories(fs::path(root) / sub);

  DatasetManifest m;
  m.root = root;
  m.config_hash = hash;
  m.master_seed = config.master_seed;
  m.entries.resize(config.total());
  const auto& g = config.geometry;

  parallel_for(m.entries.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto& e = m.entries[i];
      const std::string stem = fmt::format("{:06d}.oatd", i);
      e.phantom = "phantom/" + stem;
      e.sino = "sino/" + stem;
      e.lbp = "lbp/" + stem;
      e.split = i < config.train_count ? Split::train
                : i < config.train_count + config.val_count ? Split::val
                                                            : Split::test;
      e.seed = mix_seed(config.master_seed, i);
      std::mt19937_64 snr_rng(mix_seed(e.seed, 1));
      e.snr_db = config.snr_db.lo == config.snr_db.hi
                     ? config.snr_db.lo
                     : std::uniform_real_distribution<double>(config.snr_db.lo, config.snr_db.hi)(snr_rng);

      if (previous && i < previous->entries.size() && previous->entries[i].phantom == e.phantom &&
          entry_intact(*previous, previous->entries[i])) {
        e.fdunet = previous->entries[i].fdunet;
        continue;
      }

      PhantomParams pp = config.phantom;
      pp.seed = e.seed;
      const auto ph = generate_phantom(pp, g.grid_nx, g.grid_ny);
      if (!ph.fill_in_range) spdlog::debug("entry {}: fill fraction {:.3f} outside target", i, ph.fill_fraction);
      const auto clean = acoustic::apply_forward(*ops.simulation, ph.image);
      const auto noisy = acoustic::add_noise(clean, e.snr_db, mix_seed(e.seed, 2));
      const auto lbp = acoustic::apply_adjoint(*ops.reconstruction, noisy);
      io::write_image(m.path(e.phantom), ph.image);
      io::write_sinogram(m.path(e.sino), noisy);
      io::write_image(m.path(e.lbp), lbp);
    }
  });

  write_manifest(m);
  return m;
}

}  // namespace oat::phantom
