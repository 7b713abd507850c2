#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "m2gan/module.hpp"
#include "m2gan/tensor.hpp"

namespace m2gan {

// Versioned binary archive: magic, format version, a JSON manifest, then
// named double arrays keyed by stable layer paths. Writes are atomic
// (temp file in the target directory, then rename).
inline constexpr std::uint32_t kArchiveMagic = 0x4D32474Eu;
inline constexpr std::uint32_t kArchiveVersion = 1u;

using NamedArrays = std::vector<std::pair<std::string, Tensor>>;

struct Archive {
    nlohmann::json manifest;
    NamedArrays arrays;

    const Tensor* find(const std::string& name) const;
    const Tensor& at(const std::string& name) const;  // IoError if absent
};

void save_archive(const std::string& path, const nlohmann::json& manifest, const NamedArrays& arrays);
Archive load_archive(const std::string& path);

// Parameters and buffers of a module under a dotted prefix.
void append_module_arrays(Module& module, const std::string& prefix, NamedArrays& out);
// Restores every parameter and buffer; any missing name or shape mismatch
// raises IoError naming the offender.
void restore_module_arrays(Module& module, const Archive& archive, const std::string& prefix);

void save_module_params(const std::string& path, Module& module, const nlohmann::json& manifest);
void load_module_params(const std::string& path, Module& module);

}  // namespace m2gan
