#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "flowcouple/checkpoint.hpp"
#include "flowcouple/error.hpp"

using namespace flowcouple;
namespace fs = std::filesystem;

namespace {

struct Fixture {
    VelocityNet net{NetConfig{3, 4, {5, 2}}, 77};
    AdamState adam;

    Fixture()
    {
        adam = AdamState::for_parameters(net.parameters(), 2.5e-4, 0.8, 0.95, 1e-7);
        ParameterSet g = net.parameters();
        for (auto& a : g) {
            for (double& v : a) {
                v = 0.1 * v + 1e-3;
            }
        }
        adam_step(net.parameters(), g, adam);
        adam_step(net.parameters(), g, adam);
    }
};

std::string what_of(const std::vector<std::uint8_t>& bytes)
{
    try {
        decode_checkpoint(bytes);
    } catch (const ParseError& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST_CASE("round trip is bitwise")
{
    const Fixture f;
    const auto bytes = encode_checkpoint(f.net, f.adam);
    const auto ck = decode_checkpoint(bytes);
    CHECK(ck.net.config().state_dim == 3);
    CHECK(ck.net.config().context_dim == 4);
    CHECK(ck.net.config().hidden == std::vector<std::size_t>{5, 2});
    REQUIRE(ck.net.parameters().size() == f.net.parameters().size());
    for (std::size_t k = 0; k < f.net.parameters().size(); ++k) {
        const auto& a = f.net.parameters()[k];
        const auto& b = ck.net.parameters()[k];
        REQUIRE(a.size() == b.size());
        CHECK(std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0);
    }
    CHECK(ck.adam.step_count == 2);
    CHECK(ck.adam.beta1 == 0.8);
    CHECK(ck.adam.beta2 == 0.95);
    CHECK(ck.adam.epsilon == 1e-7);
    CHECK(ck.adam.learning_rate == 2.5e-4);
    CHECK(ck.adam.first_moment == f.adam.first_moment);
    CHECK(ck.adam.second_moment == f.adam.second_moment);
    CHECK(encode_checkpoint(ck.net, ck.adam) == bytes);
}

TEST_CASE("file round trip")
{
    const Fixture f;
    const fs::path p = fs::temp_directory_path() / "flowcouple_ck_test.fckp";
    save_checkpoint(p, f.net, f.adam);
    const auto ck = load_checkpoint(p);
    CHECK(encode_checkpoint(ck.net, ck.adam) == encode_checkpoint(f.net, f.adam));
    fs::remove(p);
    CHECK_THROWS(load_checkpoint(p));
}

TEST_CASE("corruption is reported with a byte offset")
{
    const Fixture f;
    const auto bytes = encode_checkpoint(f.net, f.adam);

    auto truncated = bytes;
    truncated.resize(bytes.size() - 5);
    const std::string t = what_of(truncated);
    CHECK(t.find("truncated") != std::string::npos);
    CHECK(t.find("byte offset") != std::string::npos);
    for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{7}, bytes.size() / 2}) {
        auto b = bytes;
        b.resize(cut);
        CHECK_THROWS_AS(decode_checkpoint(b), ParseError);
    }

    auto magic = bytes;
    magic[0] = 'X';
    CHECK(what_of(magic).find("bad magic at byte offset 0") != std::string::npos);

    auto version = bytes;
    version[4] = 9;
    CHECK(what_of(version).find("unsupported format version 9") != std::string::npos);

    auto trailing = bytes;
    trailing.push_back(0);
    try {
        decode_checkpoint(trailing);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.position() == bytes.size());
    }
}
