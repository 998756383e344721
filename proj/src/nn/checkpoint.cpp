#include "oat/nn/checkpoint.hpp"

#include <fstream>

#include "oat/core/error.hpp"
#include "oat/io/tensor_file.hpp"

namespace oat::nn {

namespace fs = std::filesystem;

namespace {

template <typename T>
void write_array(const fs::path& path, const std::vector<T>& values, const Shape& shape) {
  const std::vector<std::uint64_t> dims(shape.begin(), shape.end());
  io::write_tensor(path.string(), std::span<const T>(values), dims);
}

template <typename T>
std::vector<T> read_array(const fs::path& path, const Shape& shape) {
  if (!fs::exists(path)) throw PrerequisiteError("checkpoint", "missing array " + path.string());
  const auto rec = io::read_tensor(path.string());
  const Shape stored(rec.dims.begin(), rec.dims.end());
  if (stored != shape)
    throw ShapeError("checkpoint array " + path.string() + " has shape " + shape_string(stored) + ", expected " +
                     shape_string(shape));
  if constexpr (std::is_same_v<T, float>) return rec.as_f32();
  else return rec.as_f64();
}

}  // namespace

template <typename T>
void write_param_set(const fs::path& dir, const ParamSet<T>& set) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < set.size(); ++i)
    write_array(dir / (set[i].name + ".oatd"), set[i].value.data, set[i].value.shape);
}

template <typename T>
void read_param_set(const fs::path& dir, ParamSet<T>& set) {
  for (std::size_t i = 0; i < set.size(); ++i)
    set[i].value.data = read_array<T>(dir / (set[i].name + ".oatd"), set[i].value.shape);
}

template <typename T>
void write_adam(const fs::path& dir, const AdamState<T>& state, std::span<Parameter<T>* const> params) {
  fs::create_directories(dir / "adam_m");
  fs::create_directories(dir / "adam_v");
  nlohmann::json j = {{"config", state.config}, {"step", state.step}};
  write_json(dir / "adam.json", j);
  if (state.m.empty()) return;
  for (std::size_t i = 0; i < params.size(); ++i) {
    write_array(dir / "adam_m" / (params[i]->name + ".oatd"), state.m[i], params[i]->value.shape);
    write_array(dir / "adam_v" / (params[i]->name + ".oatd"), state.v[i], params[i]->value.shape);
  }
}

template <typename T>
void read_adam(const fs::path& dir, AdamState<T>& state, std::span<Parameter<T>* const> params) {
  const auto j = read_json(dir / "adam.json");
  state.config = j.at("config").get<AdamConfig>();
  state.step = j.at("step").get<std::uint64_t>();
  state.m.clear();
  state.v.clear();
  if (state.step == 0) return;
  for (const auto* p : params) {
    state.m.push_back(read_array<T>(dir / "adam_m" / (p->name + ".oatd"), p->value.shape));
    state.v.push_back(read_array<T>(dir / "adam_v" / (p->name + ".oatd"), p->value.shape));
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  const std::string text = j.dump(2) + "\n";
  const auto* begin = reinterpret_cast<const std::byte*>(text.data());
  io::write_file_bytes(path.string(), std::span<const std::byte>(begin, text.size()));
}

nlohmann::json read_json(const fs::path& path) {
  if (!fs::exists(path)) throw PrerequisiteError(path.parent_path().filename().string(), "missing " + path.string());
  std::ifstream in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void commit_directory(const fs::path& staging, const fs::path& dir) {
  const fs::path old = dir.string() + ".old";
  fs::remove_all(old);
  if (fs::exists(dir)) fs::rename(dir, old);
  fs::rename(staging, dir);
  fs::remove_all(old);
}

template void write_param_set<float>(const fs::path&, const ParamSet<float>&);
template void write_param_set<double>(const fs::path&, const ParamSet<double>&);
template void read_param_set<float>(const fs::path&, ParamSet<float>&);
template void read_param_set<double>(const fs::path&, ParamSet<double>&);
template void write_adam<float>(const fs::path&, const AdamState<float>&, std::span<Parameter<float>* const>);
template void write_adam<double>(const fs::path&, const AdamState<double>&, std::span<Parameter<double>* const>);
template void read_adam<float>(const fs::path&, AdamState<float>&, std::span<Parameter<float>* const>);
template void read_adam<double>(const fs::path&, AdamState<double>&, std::span<Parameter<double>* const>);

}  // namespace oat::nn
