#include <catch_amalgamated.hpp>

#include <filesystem>
#include <string>

#include "ddessm/config.hpp"
#include "ddessm/error.hpp"

using namespace ddessm;
using Catch::Matchers::ContainsSubstring;

namespace {

std::string error_of(const std::string& text) {
    try {
        parse_config_text(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("defaults of a minimal config", "[config]") {
    const RunConfig c = parse_config_text(R"({"problem": {"kind": "duffing"}})");
    CHECK(c.problem.tau == 1.0);
    CHECK(c.problem.params.at("delta") == 0.2);
    CHECK(c.problem.params.at("alpha") == 2.0);
    CHECK(c.problem.params.at("beta") == -4.0);
    CHECK(c.N == 100);
    CHECK(c.ssm.order == 9);
    CHECK(c.ssm.resonance_tol == 1e-6);
    CHECK_FALSE(c.predict.has_value());
    CHECK(c.output.dir == "out");

    const RunConfig k = parse_config_text(R"({"problem": {"kind": "coupled"}})");
    CHECK(k.problem.tau == 0.5);
    CHECK(k.problem.params.at("beta1") == -0.3);
    const RunConfig h = parse_config_text(R"({"problem": {"kind": "hutchinson"}})");
    CHECK(build_system(h.problem).n() == 4);
}

TEST_CASE("unknown keys are reported with their path", "[config]") {
    CHECK_THAT(error_of(R"({"problem": {"kind": "duffing"}, "bogus": 1})"), ContainsSubstring("bogus"));
    CHECK_THAT(error_of(R"({"problem": {"kind": "duffing", "params": {"gamma": 1}}})"),
               ContainsSubstring("problem.params.gamma"));
    CHECK_THAT(error_of(R"({"problem": {"kind": "duffing"}, "predict": {"backbone": {"rho_max": 2, "npoints": 3}}})"),
               ContainsSubstring("predict.backbone.npoints"));
    CHECK_THAT(error_of(R"({"problem": {"kind": "duffing", "tau": "long"}})"), ContainsSubstring("problem.tau"));
    CHECK_THAT(error_of(R"({"problem": {"kind": "pendulum"}})"), ContainsSubstring("problem.kind"));
}

TEST_CASE("syntax errors carry line and column", "[config]") {
    const std::string msg = error_of("{\n  \"problem\": {\"kind\": \"duffing\",}\n}");
    CHECK_THAT(msg, ContainsSubstring("line 2"));
    CHECK_THAT(msg, ContainsSubstring("column"));
}

TEST_CASE("forcing blocks", "[config]") {
    const RunConfig c = parse_config_text(
        R"({"problem": {"kind": "duffing", "tau": 1.1, "forcing": {"epsilon": 0.01, "Omega": 1.6}}})");
    const DelaySystem d = build_system(c.problem);
    CHECK(d.forced());
    CHECK(d.epsilon() == 0.01);
    CHECK(d.Omega() == 1.6);

    CHECK_THROWS_AS(parse_config_text(R"({"problem": {"kind": "hutchinson", "forcing": {"epsilon": 0.01, "Omega": 1.6}}})"),
                    ConfigError);
}

TEST_CASE("custom linear system", "[config]") {
    const RunConfig c = parse_config_text(R"({"problem": {"kind": "custom", "n": 2,
        "A_now": [[0, 1], [-1, -0.1]], "A_delayed": [[0, 0], [-0.2, 0]],
        "terms": [{"row": 1, "coeff": -1.0, "factors": [[0, 3]]}]}})");
    const DelaySystem s = build_system(c.problem);
    CHECK(s.n() == 2);
    CHECK(s.terms().size() == 1);
    CHECK_THROWS_AS(parse_config_text(R"({"problem": {"kind": "custom", "n": 2, "A_now": [[0, 1]], "A_delayed": [[0, 0], [0, 0]]}})"),
                    ConfigError);
}

TEST_CASE("parameter sweeps rebuild the system", "[config]") {
    const RunConfig c = parse_config_text(R"({"problem": {"kind": "duffing"}})");
    CHECK(build_system_with(c.problem, "tau", 1.3).tau() == 1.3);
    CHECK_THROWS_AS(build_system_with(c.problem, "mu1", 1.0), ConfigError);
}

TEST_CASE("every shipped config parses", "[config]") {
    int count = 0;
    for (const auto& e : std::filesystem::directory_iterator(std::string(DDESSM_SOURCE_DIR) + "/configs")) {
        if (e.path().extension() != ".json") continue;
        INFO(e.path().string());
        const RunConfig c = load_config(e.path().string());
        CHECK_NOTHROW(build_system(c.problem));
        ++count;
    }
    CHECK(count >= 10);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}
