#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "oat/nn/adam.hpp"
#include "oat/nn/params.hpp"

namespace oat::nn {

// A checkpoint is a directory: meta.json plus one TensorFile per array under
// params/ and, for resumable training state, adam_m/ and adam_v/.

template <typename T>
void write_param_set(const std::filesystem::path& dir, const ParamSet<T>& set);

/// Fills an already-constructed set. Throws PrerequisiteError for missing
/// files and ShapeError when a stored array does not match the layout.
template <typename T>
void read_param_set(const std::filesystem::path& dir, ParamSet<T>& set);

/// Moments are stored under the names of the parameters they belong to.
template <typename T>
void write_adam(const std::filesystem::path& dir, const AdamState<T>& state, std::span<Parameter<T>* const> params);
template <typename T>
void read_adam(const std::filesystem::path& dir, AdamState<T>& state, std::span<Parameter<T>* const> params);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
/// Throws PrerequisiteError when the file is missing, IoError when malformed.
nlohmann::json read_json(const std::filesystem::path& path);

/// Replaces `dir` with the fully written `staging` directory.
void commit_directory(const std::filesystem::path& staging, const std::filesystem::path& dir);

}  // namespace oat::nn
