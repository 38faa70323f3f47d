#include <catch_amalgamated.hpp>

#include <lvv/validator.hpp>

using namespace lvv;

TEST_CASE("fractional kernels are accepted with the expected constants") {
    for (double d : {0.1, 0.25, 0.4}) {
        auto rep = validate_class_K(frac_kernel(d));
        INFO(rep.to_text());
        CHECK(rep.accepted);
        CHECK(std::abs(rep.gamma - (1.0 - d)) <= 0.05);
        CHECK(std::abs(rep.theta - (1.0 - d)) <= 0.05);
        CHECK(std::abs(rep.beta) <= 0.05);
        CHECK(rep.beta_boundary);
        CHECK(rep.q > 0.5 + 2.5 * rep.eta);
    }
}

TEST_CASE("indicator kernel is accepted with C0 = 0") {
    auto rep = validate_class_K(indicator_kernel());
    INFO(rep.to_text());
    CHECK(rep.accepted);
    CHECK(rep.C0 == 0.0);
    CHECK(rep.condition("v").passed);
}

TEST_CASE("crafted violators are rejected on the right condition") {
    auto r1 = validate_class_K(shifted_indicator_kernel());
    INFO(r1.to_text());
    CHECK_FALSE(r1.accepted);
    CHECK(r1.failed().front() == "i");
    // f(0,s) = 1 on [0,1] as well
    CHECK(r1.failed() == std::vector<std::string>{"i", "ii"});

    auto r4 = validate_class_K(zero_kernel());
    INFO(r4.to_text());
    CHECK_FALSE(r4.accepted);
    CHECK(r4.failed() == std::vector<std::string>{"iv"});

    auto r5 = validate_class_K(slow_decay_kernel());
    INFO(r5.to_text());
    CHECK_FALSE(r5.accepted);
    CHECK_FALSE(r5.condition("v").passed);
    CHECK(r5.failed().front() == "v");
}

TEST_CASE("report serialisation") {
    auto rep = validate_class_K(frac_kernel(0.25));
    auto j = rep.to_json();
    CHECK(j["accepted"] == true);
    CHECK(j["evidence_only"] == true);
    CHECK(j["conditions"].size() == 6);
    CHECK(j["constants"]["beta_boundary"] == true);
    CHECK(rep.to_text().find("ACCEPTED") != std::string::npos);
}

TEST_CASE("probe configuration is checked") {
    ProbeConfig pc;
    pc.n_s = 2;
    CHECK_THROWS_AS(validate_class_K(frac_kernel(0.25), pc), std::invalid_argument);
}
