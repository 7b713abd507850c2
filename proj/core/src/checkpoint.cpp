#include "m2gan/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "m2gan/common.hpp"

namespace m2gan {

namespace {

template <typename T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is, const std::string& path, const char* what) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw IoError(msg("archive '", path, "': truncated while reading ", what));
    return v;
}

void put_string(std::ostream& os, const std::string& s) {
    put<std::uint64_t>(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, const std::string& path, const char* what) {
    auto n = get<std::uint64_t>(is, path, what);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) throw IoError(msg("archive '", path, "': truncated while reading ", what));
    return s;
}

}  // namespace

const Tensor* Archive::find(const std::string& name) const {
    for (const auto& [n, t] : arrays) {
        if (n == name) return &t;
    }
    return nullptr;
}

const Tensor& Archive::at(const std::string& name) const {
    const Tensor* t = find(name);
    if (!t) throw IoError(msg("archive: missing array '", name, "'"));
    return *t;
}

void save_archive(const std::string& path, const nlohmann::json& manifest, const NamedArrays& arrays) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError(msg("cannot open '", tmp.string(), "' for writing"));
        put(os, kArchiveMagic);
        put(os, kArchiveVersion);
        put_string(os, manifest.dump());
        put<std::uint64_t>(os, arrays.size());
        for (const auto& [name, tensor] : arrays) {
            put_string(os, name);
            put<std::uint32_t>(os, static_cast<std::uint32_t>(tensor.rank()));
            for (int d = 0; d < tensor.rank(); ++d) put<std::int64_t>(os, tensor.dim(d));
            os.write(reinterpret_cast<const char*>(tensor.data()),
                     static_cast<std::streamsize>(tensor.size() * sizeof(double)));
        }
        if (!os) throw IoError(msg("write failure on '", tmp.string(), "'"));
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError(msg("cannot move '", tmp.string(), "' to '", path, "': ", ec.message()));
}

Archive load_archive(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError(msg("cannot open archive '", path, "'"));
    auto magic = get<std::uint32_t>(is, path, "magic");
    if (magic != kArchiveMagic) {
        throw IoError(msg("archive '", path, "': bad magic 0x", std::hex, magic, " (expected 0x", kArchiveMagic, ")"));
    }
    auto version = get<std::uint32_t>(is, path, "version");
    if (version != kArchiveVersion) {
        throw IoError(msg("archive '", path, "': format version ", version, " incompatible with supported version ",
                          kArchiveVersion));
    }
    Archive archive;
    std::string manifest = get_string(is, path, "manifest");
    try {
        archive.manifest = nlohmann::json::parse(manifest);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(msg("archive '", path, "': corrupt manifest: ", e.what()));
    }
    auto count = get<std::uint64_t>(is, path, "array count");
    archive.arrays.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        std::string name = get_string(is, path, "array name");
        auto rank = get<std::uint32_t>(is, path, "array rank");
        std::vector<int> shape;
        shape.reserve(rank);
        for (std::uint32_t d = 0; d < rank; ++d) {
            auto dim = get<std::int64_t>(is, path, "array dim");
            if (dim < 1) throw IoError(msg("archive '", path, "': array '", name, "' has invalid dim ", dim));
            shape.push_back(static_cast<int>(dim));
        }
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!is) throw IoError(msg("archive '", path, "': truncated while reading array '", name, "'"));
        archive.arrays.emplace_back(std::move(name), std::move(t));
    }
    return archive;
}

void append_module_arrays(Module& module, const std::string& prefix, NamedArrays& out) {
    for (const auto& p : module.named_parameters()) {
        out.emplace_back(prefix.empty() ? p.name : prefix + "." + p.name, p.var.value());
    }
    for (const auto& b : module.named_buffers()) {
        out.emplace_back(prefix.empty() ? b.name : prefix + "." + b.name, *b.tensor);
    }
}

void restore_module_arrays(Module& module, const Archive& archive, const std::string& prefix) {
    auto restore = [&](const std::string& name, Tensor& dst) {
        const std::string full = prefix.empty() ? name : prefix + "." + name;
        const Tensor* src = archive.find(full);
        if (!src) throw IoError(msg("archive: missing array '", full, "'"));
        if (!dst.same_shape(*src)) {
            throw IoError(msg("archive: array '", full, "' has shape ", src->shape_string(), ", expected ",
                              dst.shape_string()));
        }
        dst = *src;
    };
    for (auto& p : module.named_parameters()) {
        Var v = p.var;
        restore(p.name, v.mutable_value());
    }
    for (auto& b : module.named_buffers()) restore(b.name, *b.tensor);
}

void save_module_params(const std::string& path, Module& module, const nlohmann::json& manifest) {
    NamedArrays arrays;
    append_module_arrays(module, "", arrays);
    save_archive(path, manifest, arrays);
}

void load_module_params(const std::string& path, Module& module) {
    restore_module_arrays(module, load_archive(path), "");
}

}  // namespace m2gan
