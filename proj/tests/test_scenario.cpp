#include <doctest.h>

#include "isac/scenario.hpp"

#include <cmath>

using namespace isac;

TEST_CASE("paper preset carries the reference parameters") {
    const ScenarioConfig cfg = default_paper_scenario();
    CHECK(cfg.subcarriers == 4096);
    CHECK(cfg.delta_f == doctest::Approx(120e3));
    CHECK(cfg.bandwidth() == doctest::Approx(491.52e6));
    CHECK(cfg.bs_positions[2](0) == doctest::Approx(0.0));
    CHECK(cfg.bs_positions[2](1) == doctest::Approx(-50.0));
    CHECK(cfg.carrier_freqs[2] == doctest::Approx(30e9));
    CHECK(cfg.crlb_threshold == doctest::Approx(0.01));
    CHECK(cfg.power_budget[0] == doctest::Approx(10.0)); // 40 dBm
    CHECK(cfg.symbols_per_block == 256);
    CHECK(validate(cfg).empty());
}

TEST_CASE("desk preset is small and valid") {
    const ScenarioConfig cfg = desk_scale_scenario();
    CHECK(validate(cfg).empty());
    CHECK(cfg.subcarriers == 8);
    CHECK(cfg.symbols_per_block == 16);
    CHECK(cfg.n_tx == 4);
    CHECK(cfg.n_rx == 4);
    CHECK(cfg.num_bs() == 3);
    // bands pairwise disjoint
    const double b = cfg.bandwidth();
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j)
            CHECK(std::abs(cfg.carrier_freqs[i] - cfg.carrier_freqs[j]) >= b);
}

TEST_CASE("validate reports named violations") {
    ScenarioConfig cfg = desk_scale_scenario();
    cfg.penalty_params.xi = 1.0;
    auto errs = validate(cfg);
    REQUIRE(errs.size() == 1);
    CHECK(errs[0] == "penalty step size out of range");

    cfg = desk_scale_scenario();
    cfg.carrier_freqs[1] = cfg.carrier_freqs[0];
    errs = validate(cfg);
    REQUIRE(errs.size() == 1);
    CHECK(errs[0] == "overlapping frequency bands");

    cfg = desk_scale_scenario();
    cfg.power_budget[1] = -1.0;
    errs = validate(cfg);
    REQUIRE(errs.size() == 1);
    CHECK(errs[0] == "nonpositive power budget");
}

TEST_CASE("dbm conversion is exact at the reference point") {
    CHECK(std::abs(dbm_to_watts(-80.0) - 1e-11) <= 1e-15 * 1e-11);
    CHECK(dbm_to_watts(40.0) == doctest::Approx(10.0).epsilon(1e-14));
}

TEST_CASE("config json round trip is identical") {
    const ScenarioConfig cfg = desk_scale_scenario();
    const std::string first = to_json(cfg);
    const ScenarioConfig loaded = config_from_json(first);
    CHECK(to_json(loaded) == first);

    // dbm-suffixed keys are accepted on load
    const ScenarioConfig viadbm = config_from_json(R"({
        "bs_positions": [[-50, 0], [50, 0]],
        "carrier_freqs": [28e9, 30e9],
        "n_tx": 4, "n_rx": 4,
        "subcarriers": 8, "symbols_per_block": 16,
        "delta_f": 61.44e6, "t_elem": 1.6276e-8, "t_cp": 1.15e-9,
        "power_budget_dbm": [40.0, 40.0],
        "crlb_threshold": 0.01, "serving_bs": 1,
        "tts_duration": 0.02, "horizon": 4.0,
        "pathloss_ref_gain": 1e-3, "pathloss_exp": 2,
        "rx_noise_power_dbm": -80.0, "comm_noise_power_dbm": -80.0,
        "meas_noise": [
          {"sigma_tau": 1e-9, "sigma_mu": 50.0, "sigma_theta2": 1e-15},
          {"sigma_tau": 1e-9, "sigma_mu": 50.0, "sigma_theta2": 1e-15}]
    })");
    CHECK(viadbm.power_budget[0] == doctest::Approx(10.0));
    CHECK(viadbm.rx_noise_power == doctest::Approx(1e-11));
}

TEST_CASE("preset lookup by name") {
    CHECK(preset_by_name("paper").subcarriers == 4096);
    CHECK(preset_by_name("desk").subcarriers == 8);
    CHECK_THROWS(preset_by_name("nope"));
}

TEST_CASE("motion model matches the state evolution") {
    const ScenarioConfig cfg = desk_scale_scenario();
    const MotionModel model = make_motion_model(cfg);

    Vec4 d;
    d << 40.0, -3.0, 20.0, 1.5;
    const Vec4 out = model.apply(d);
    CHECK(out(0) == d(0) + cfg.tts_duration * d(2)); // exact
    CHECK(out(1) == d(1) + cfg.tts_duration * d(3));
    CHECK(out(2) == d(2));
    CHECK(out(3) == d(3));

    const Vec4 via_matrix = model.transition * d;
    CHECK((via_matrix - out).cwiseAbs().maxCoeff() < 1e-12);

    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (i != j) CHECK(model.process_cov(i, j) == 0.0);
    CHECK(model.process_cov(0, 0) == doctest::Approx(0.02 * 0.02));
    CHECK(model.process_cov(2, 2) == doctest::Approx(0.01 * 0.01));
}
