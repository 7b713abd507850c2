#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "m2gan/checkpoint.hpp"
#include "m2gan/layers.hpp"
#include "test_util.hpp"

using namespace m2gan;
namespace fs = std::filesystem;

TEST_CASE("archive round-trips manifest and arrays bit-exactly") {
    const std::string dir = testutil::scratch_dir("archive_rt");
    Rng rng(1);
    NamedArrays arrays;
    Tensor a({3, 4, 2});
    rng.fill_normal(a, 0.0, 1.0);
    Tensor b({7});
    rng.fill_uniform(b, -5.0, 5.0);
    b[0] = 0.1 + 0.2;  // a value with no short decimal form
    arrays.emplace_back("net.layer.weight", a);
    arrays.emplace_back("net.layer.bias", b);

    nlohmann::json manifest;
    manifest["epoch"] = 3;
    manifest["note"] = "round trip";
    save_archive(dir + "/model.m2g", manifest, arrays);

    const Archive back = load_archive(dir + "/model.m2g");
    CHECK(back.manifest.at("epoch") == 3);
    CHECK(back.manifest.at("note") == "round trip");
    REQUIRE(back.arrays.size() == 2);
    CHECK(back.arrays[0].first == "net.layer.weight");
    const Tensor& ra = back.at("net.layer.weight");
    REQUIRE(ra.same_shape(a));
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(ra[i] == a[i]);
    const Tensor& rb = back.at("net.layer.bias");
    for (std::int64_t i = 0; i < b.size(); ++i) CHECK(rb[i] == b[i]);

    CHECK(back.find("missing") == nullptr);
    CHECK_THROWS_AS(back.at("missing"), IoError);
}

TEST_CASE("archive writes are atomic: no temp file remains") {
    const std::string dir = testutil::scratch_dir("archive_atomic");
    save_archive(dir + "/a.m2g", nlohmann::json::object(), {});
    int files = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        ++files;
        CHECK(e.path().extension() != ".tmp");
    }
    CHECK(files == 1);
}

TEST_CASE("bad magic and version are rejected with names") {
    const std::string dir = testutil::scratch_dir("archive_bad");
    {
        std::ofstream f(dir + "/junk.m2g", std::ios::binary);
        const std::uint32_t wrong = 0xDEADBEEFu;
        f.write(reinterpret_cast<const char*>(&wrong), sizeof wrong);
        f.write("xxxxxxxxxxxxxxxx", 16);
    }
    CHECK_THROWS_AS(load_archive(dir + "/junk.m2g"), IoError);

    // Flip the version field of a valid archive.
    save_archive(dir + "/ok.m2g", nlohmann::json::object(), {});
    {
        std::fstream f(dir + "/ok.m2g", std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(4);
        const std::uint32_t version = 999;
        f.write(reinterpret_cast<const char*>(&version), sizeof version);
    }
    try {
        load_archive(dir + "/ok.m2g");
        FAIL("expected IoError");
    } catch (const IoError& e) {
        const std::string what = e.what();
        CHECK(what.find("999") != std::string::npos);
        CHECK(what.find("1") != std::string::npos);
    }

    CHECK_THROWS_AS(load_archive(dir + "/absent.m2g"), IoError);

    // Truncated payload.
    {
        std::ofstream f(dir + "/short.m2g", std::ios::binary);
        const std::uint32_t magic = kArchiveMagic;
        f.write(reinterpret_cast<const char*>(&magic), sizeof magic);
    }
    CHECK_THROWS_AS(load_archive(dir + "/short.m2g"), IoError);
}

TEST_CASE("module parameters restore by dotted name with shape checks") {
    const std::string dir = testutil::scratch_dir("module_rt");
    Rng rng(3);
    Conv2d conv(2, 3, 3, Conv2dOptions{}, rng);
    save_module_params(dir + "/conv.m2g", conv, nlohmann::json{{"kind", "conv"}});

    Rng rng2(99);
    Conv2d twin(2, 3, 3, Conv2dOptions{}, rng2);
    load_module_params(dir + "/conv.m2g", twin);
    const Tensor& w1 = conv.weight().value();
    const Tensor& w2 = twin.weight().value();
    for (std::int64_t i = 0; i < w1.size(); ++i) CHECK(w1[i] == w2[i]);

    // Wrong-shape target names the offending array.
    Rng rng3(5);
    Conv2d other(2, 4, 3, Conv2dOptions{}, rng3);
    try {
        load_module_params(dir + "/conv.m2g", other);
        FAIL("expected IoError");
    } catch (const IoError& e) {
        CHECK(std::string(e.what()).find("weight") != std::string::npos);
    }

    // Missing-array path: archive without the module's parameters.
    save_archive(dir + "/empty.m2g", nlohmann::json::object(), {});
    CHECK_THROWS_AS(load_module_params(dir + "/empty.m2g", twin), IoError);
}

TEST_CASE("spectral-norm u vectors travel as buffers") {
    const std::string dir = testutil::scratch_dir("buffers_rt");
    Rng rng(7);
    Conv2dOptions opts;
    opts.spectral_norm = true;
    Conv2d conv(2, 3, 3, opts, rng);
    conv.refresh_effective_weight();  // advances u away from its seed value

    NamedArrays arrays;
    append_module_arrays(conv, "conv", arrays);
    bool has_u = false;
    for (const auto& [name, t] : arrays) has_u = has_u || name.find("sn_u") != std::string::npos;
    CHECK(has_u);

    save_archive(dir + "/conv.m2g", nlohmann::json::object(), arrays);
    Rng rng2(8);
    Conv2d twin(2, 3, 3, opts, rng2);
    restore_module_arrays(twin, load_archive(dir + "/conv.m2g"), "conv");
    const Tensor& u1 = conv.sn_state().u;
    const Tensor& u2 = twin.sn_state().u;
    REQUIRE(u1.same_shape(u2));
    for (std::int64_t i = 0; i < u1.size(); ++i) CHECK(u1[i] == u2[i]);
}

TEST_CASE("archives create parent directories") {
    const std::string dir = testutil::scratch_dir("mkdirs");
    const std::string nested = dir + "/a/b/c/model.m2g";
    CHECK_NOTHROW(save_archive(nested, nlohmann::json::object(), {}));
    CHECK(fs::exists(nested));
}
