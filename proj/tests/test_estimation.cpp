// SPDX-License-Identifier: Apache-2.0
//
// rischan - RIS channel modelling toolkit
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------


#include "rischan/estimation.hpp"
#include "rischan/random.hpp"
#include "rischan/units.hpp"

#include <Eigen/Dense>
#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace rischan;
using namespace rischan::estimation;

namespace
{
    const ObservationGrid grid0{};
    const EstimatorConfig cfg0 = default_estimator_config(grid0);

    // Plain (non-RIS) path placed exactly on the search grids
    Mpc on_grid(std::size_t delay_bin, double aoa_deg, double aod_deg, std::size_t doppler_bin,
                std::complex<double> amplitude = {1.0, 0.0})
    {
        Mpc m;
        m.amplitude = amplitude;
        m.delay = cfg0.delay.at(delay_bin);
        m.aoa = wrap_two_pi(deg_to_rad(aoa_deg));
        m.aod = wrap_two_pi(deg_to_rad(aod_deg));
        m.doppler = cfg0.doppler.at(doppler_bin);
        return m;
    }

    std::vector<TransmissionMode> default_modes(std::size_t k)
    {
        return make_transmission_modes(k, 4, 0.5, deg_to_rad(20.0), deg_to_rad(-60.0), deg_to_rad(60.0));
    }

    // Estimated path closest in delay to the given truth
    const Mpc &nearest(const std::vector<Mpc> &est, const Mpc &truth)
    {
        return *std::min_element(est.begin(), est.end(), [&](const Mpc &a, const Mpc &b)
                                 { return std::abs(a.delay - truth.delay) < std::abs(b.delay - truth.delay); });
    }

    bool within_one_step(const Mpc &e, const Mpc &t)
    {
        return std::abs(e.delay - t.delay) <= cfg0.delay.step() && std::abs(wrap_pi(e.aoa - t.aoa)) <= cfg0.angle.step() &&
               std::abs(wrap_pi(e.aod - t.aod)) <= cfg0.angle.step() && std::abs(e.doppler - t.doppler) <= cfg0.doppler.step();
    }

    void check_exact(const Mpc &e, const Mpc &t)
    {
        CHECK(e.delay == doctest::Approx(t.delay).epsilon(1e-9));
        CHECK(std::abs(wrap_pi(e.aoa - t.aoa)) < 1e-9);
        CHECK(std::abs(wrap_pi(e.aod - t.aod)) < 1e-9);
        CHECK(std::abs(e.doppler - t.doppler) < 1e-6);
        CHECK(std::abs(e.amplitude - t.amplitude) < 1e-9);
    }
}

TEST_SUITE("estimation")
{
    TEST_CASE("transmission modes are distinct, bounded and steer as designed")
    {
        const double inc = deg_to_rad(20.0);
        const auto modes = default_modes(6);
        for (std::size_t a = 0; a < modes.size(); ++a)
        {
            const double psi = deg_to_rad(-60.0 + 24.0 * static_cast<double>(a));
            CHECK(std::abs(modes[a].response(inc, psi) - 1.0) < 1e-12);
            for (std::size_t b = a + 1; b < modes.size(); ++b)
                CHECK(modes[a].phases != modes[b].phases);
        }
        Rng rng(1);
        for (int i = 0; i < 500; ++i)
        {
            const double ti = rng.uniform(-0.5 * pi, 0.5 * pi), tr = rng.uniform(-0.5 * pi, 0.5 * pi);
            for (const auto &m : modes)
                CHECK(std::abs(m.response(ti, tr)) <= 1.0 + 1e-12);
        }
        CHECK_THROWS_AS(make_transmission_modes(0, 4, 0.5, 0.0, -1.0, 1.0), std::invalid_argument);
        CHECK_THROWS_AS(make_transmission_modes(2, 4, 0.5, 0.0, -2.0, 1.0), std::invalid_argument);
    }

    TEST_CASE("synthesis: plain paths look the same under every mode")
    {
        const std::vector<Mpc> truth{on_grid(10, 5.0, -12.0, 30), on_grid(40, -30.0, 25.0, 20, {0.3, 0.4})};
        const auto modes = default_modes(3);
        const Observation obs = synthesize_observations(truth, modes, grid0, std::numeric_limits<double>::infinity(), 1);
        const std::size_t n = grid0.samples_per_mode();
        for (std::size_t i = 0; i < n; ++i)
        {
            CHECK(std::abs(obs.data[i] - obs.data[n + i]) < 1e-12);
            CHECK(std::abs(obs.data[i] - obs.data[2 * n + i]) < 1e-12);
        }
        CHECK(obs.warnings.empty());
        CHECK(obs.noise_variance == 0.0);
    }

    TEST_CASE("synthesis: a RIS path scales by the ratio of mode responses")
    {
        Mpc m = on_grid(20, 10.0, 0.0, 31);
        m.ris_interacting = true;
        m.ris_incident_angle = deg_to_rad(20.0);
        m.ris_reflect_angle = deg_to_rad(15.0);
        const auto modes = default_modes(2);
        const std::complex<double> c = modes[1].response(deg_to_rad(20.0), deg_to_rad(15.0)) /
                                       modes[0].response(deg_to_rad(20.0), deg_to_rad(15.0));
        const Observation obs = synthesize_observations(std::vector<Mpc>{m}, modes, grid0,
                                                        std::numeric_limits<double>::infinity(), 1);
        const std::size_t n = grid0.samples_per_mode();
        for (std::size_t i = 0; i < n; i += 97)
            CHECK(std::abs(obs.data[n + i] / obs.data[i] - c) < 1e-9);
    }

    TEST_CASE("synthesis: one noiseless path is a separable phasor grid")
    {
        ObservationGrid g = grid0;
        g.subcarriers = 16;
        const Mpc m = on_grid(3, 17.0, -41.0, 12, {0.5, -0.2});
        const Observation obs = synthesize_observations(std::vector<Mpc>{m}, default_modes(1), g,
                                                        std::numeric_limits<double>::infinity(), 1);
        // unfold (s) x (p, u, v): rank one with unit-modulus entries scaled by |alpha|
        const auto rows = static_cast<Eigen::Index>(g.subcarriers);
        const auto cols = static_cast<Eigen::Index>(g.samples_per_mode() / g.subcarriers);
        Eigen::MatrixXcd y(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c)
                y(r, c) = obs.data[static_cast<std::size_t>(r * cols + c)];
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(y);
        CHECK(svd.singularValues()[1] < 1e-9 * svd.singularValues()[0]);
        for (const auto &v : obs.data)
            CHECK(std::abs(v) == doctest::Approx(std::abs(m.amplitude)));
        // delay and Doppler phase steps along their axes
        const double step_s = std::arg(y(1, 0) / y(0, 0));
        CHECK(std::abs(wrap_pi(step_s + two_pi * g.subcarrier_spacing * m.delay)) < 1e-9);
    }

    TEST_CASE("synthesis: noise level and per-mode noise streams")
    {
        const std::vector<Mpc> truth{on_grid(10, 5.0, -12.0, 30)};
        const auto modes3 = default_modes(3);
        const Observation clean = synthesize_observations(truth, modes3, grid0, std::numeric_limits<double>::infinity(), 5);
        const Observation noisy = synthesize_observations(truth, modes3, grid0, 10.0, 5);
        CHECK(noisy.noise_variance == doctest::Approx(0.1));
        double e = 0.0;
        for (std::size_t i = 0; i < clean.data.size(); ++i)
            e += std::norm(noisy.data[i] - clean.data[i]);
        CHECK(e / static_cast<double>(clean.data.size()) == doctest::Approx(0.1).epsilon(0.03));

        const auto modes2 = std::vector<TransmissionMode>(modes3.begin(), modes3.begin() + 2);
        const Observation fewer = synthesize_observations(truth, modes2, grid0, 10.0, 5);
        for (std::size_t i = 0; i < fewer.data.size(); i += 101)
            CHECK(fewer.data[i] == noisy.data[i]);
    }

    TEST_CASE("synthesis: duplicate modes warn, bad paths throw")
    {
        auto modes = default_modes(3);
        modes[2].phases = modes[0].phases;
        const std::vector<Mpc> truth{on_grid(10, 5.0, -12.0, 30)};
        const Observation obs = synthesize_observations(truth, modes, grid0, 20.0, 1);
        REQUIRE(obs.warnings.size() == 1);
        CHECK(obs.warnings[0].find("identical") != std::string::npos);

        Mpc bad = truth[0];
        bad.delay = -1e-9;
        CHECK_THROWS_AS(synthesize_observations(std::vector<Mpc>{bad}, modes, grid0, 20.0, 1), std::invalid_argument);
        bad = truth[0];
        bad.ris_interacting = true;
        CHECK_THROWS_AS(synthesize_observations(std::vector<Mpc>{bad}, modes, grid0, 20.0, 1), std::invalid_argument);
        bad = truth[0];
        bad.aoa = -0.1;
        CHECK_THROWS_AS(synthesize_observations(std::vector<Mpc>{bad}, modes, grid0, 20.0, 1), std::invalid_argument);
        CHECK_THROWS_AS(synthesize_observations(truth, std::vector<TransmissionMode>{}, grid0, 20.0, 1), std::invalid_argument);
    }

    TEST_CASE("noiseless on-grid single path is recovered exactly")
    {
        const auto modes = default_modes(4);
        const Mpc m = on_grid(37, -23.0, 48.0, 41, std::polar(0.7, 1.1));
        const Observation obs = synthesize_observations(std::vector<Mpc>{m}, modes, grid0,
                                                        std::numeric_limits<double>::infinity(), 1);
        const EstimationResult r = estimate_mpc_parameters(obs, 1, modes, cfg0);
        REQUIRE(r.paths.size() == 1);
        check_exact(r.paths[0].mpc, m);
        CHECK_FALSE(r.paths[0].mpc.ris_interacting);
        CHECK(rmsee(r.mpcs(), std::vector<Mpc>{m}, ParameterSpans::from_config(cfg0)).aggregate < 1e-9);
    }

    TEST_CASE("noiseless on-grid round trip for up to three paths")
    {
        const auto modes = default_modes(4);
        const std::vector<Mpc> all{on_grid(12, -40.0, 10.0, 25), on_grid(30, 5.0, -35.0, 40, std::polar(0.8, 2.0)),
                                   on_grid(55, 33.0, 44.0, 12, std::polar(0.8, -0.7))};
        for (std::size_t l = 1; l <= 3; ++l)
        {
            const std::vector<Mpc> truth(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(l));
            const Observation obs = synthesize_observations(truth, modes, grid0, std::numeric_limits<double>::infinity(), 1);
            const auto est = estimate_mpc_parameters(obs, l, modes, cfg0).mpcs();
            REQUIRE(est.size() == l);
            for (const Mpc &t : truth)
                check_exact(nearest(est, t), t);
        }
    }

    TEST_CASE("delay equivariance: shifting every path by one bin shifts every estimate by one bin")
    {
        const auto modes = default_modes(4);
        const std::vector<Mpc> truth{on_grid(12, -40.0, 10.0, 25), on_grid(30, 5.0, -35.0, 40, std::polar(0.8, 2.0))};
        std::vector<Mpc> shifted = truth;
        for (Mpc &m : shifted)
            m.delay += cfg0.delay.step();
        const double inf = std::numeric_limits<double>::infinity();
        const auto a = estimate_mpc_parameters(synthesize_observations(truth, modes, grid0, inf, 1), 2, modes, cfg0).mpcs();
        const auto b = estimate_mpc_parameters(synthesize_observations(shifted, modes, grid0, inf, 1), 2, modes, cfg0).mpcs();
        for (const Mpc &t : truth)
        {
            const Mpc &ea = nearest(a, t);
            Mpc ts = t;
            ts.delay += cfg0.delay.step();
            const Mpc &eb = nearest(b, ts);
            CHECK(eb.delay - ea.delay == doctest::Approx(cfg0.delay.step()).epsilon(1e-9));
        }
    }

    TEST_CASE("residual energy never increases across outer iterations")
    {
        StudyConfig sc;
        const auto modes = default_modes(5);
        for (std::uint64_t seed = 0; seed < 5; ++seed)
        {
            const auto truth = random_truth(sc, cfg0, seed);
            EstimatorConfig cfg = cfg0;
            cfg.known_incident_angle = sc.incident_angle;
            cfg.tolerance = 0.0;
            cfg.max_iterations = 6;
            const Observation obs = synthesize_observations(truth, modes, grid0, 5.0, seed);
            const EstimationResult r = estimate_mpc_parameters(obs, 3, modes, cfg);
            CHECK(r.paths.size() == 3);
            CHECK(r.residual_energy.size() == r.iterations + 1);
            for (std::size_t i = 1; i < r.residual_energy.size(); ++i)
                CHECK(r.residual_energy[i] <= r.residual_energy[i - 1] * (1.0 + 1e-12));
        }
    }

    TEST_CASE("two separated paths at 20 dB land within one grid step")
    {
        const auto modes = default_modes(4);
        int hits = 0;
        const int seeds = 100;
        for (int s = 0; s < seeds; ++s)
        {
            Rng rng(derive_seed(2024, static_cast<std::uint64_t>(s)));
            // two grid bins apart at minimum, off-grid positions
            const double d0 = rng.uniform(5.0, 60.0);
            const double a0 = rng.uniform(-60.0, 60.0), b0 = rng.uniform(-60.0, 60.0);
            const double sd = 2.0 + rng.uniform(0.0, 40.0);
            const double sa = (2.0 + rng.uniform(0.0, 40.0)) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
            const double sb = (2.0 + rng.uniform(0.0, 40.0)) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
            std::vector<Mpc> truth(2);
            truth[0].delay = d0 * cfg0.delay.step();
            truth[0].aoa = wrap_two_pi(deg_to_rad(a0));
            truth[0].aod = wrap_two_pi(deg_to_rad(b0));
            truth[0].doppler = rng.uniform(-300.0, 300.0);
            truth[0].amplitude = std::polar(1.0, two_pi * rng.uniform());
            truth[1].delay = (d0 + sd) * cfg0.delay.step();
            truth[1].aoa = wrap_two_pi(deg_to_rad(std::clamp(a0 + sa, -80.0, 80.0)));
            truth[1].aod = wrap_two_pi(deg_to_rad(std::clamp(b0 + sb, -80.0, 80.0)));
            truth[1].doppler = rng.uniform(-300.0, 300.0);
            truth[1].amplitude = std::polar(0.8, two_pi * rng.uniform());
            if (std::abs(wrap_pi(truth[1].aoa - truth[0].aoa)) < 2.0 * cfg0.angle.step() ||
                std::abs(wrap_pi(truth[1].aod - truth[0].aod)) < 2.0 * cfg0.angle.step())
                truth[1].aoa = wrap_two_pi(truth[0].aoa + 3.0 * cfg0.angle.step());

            const Observation obs = synthesize_observations(truth, modes, grid0, 20.0, static_cast<std::uint64_t>(s));
            const auto est = estimate_mpc_parameters(obs, 2, modes, cfg0).mpcs();
            if (within_one_step(nearest(est, truth[0]), truth[0]) && within_one_step(nearest(est, truth[1]), truth[1]))
                ++hits;
        }
        CHECK(hits >= 95);
    }

    TEST_CASE("classification examples")
    {
        const auto modes = default_modes(2);
        const std::vector<std::complex<double>> flat{{0.5, 0.5}, {0.5, 0.5}};
        CHECK(mode_variation(flat) == 0.0);
        CHECK_FALSE(classify_ris_paths(flat, modes));
        const std::vector<std::complex<double>> ris{{1.0, 0.0}, {0.0, 0.1}};
        // mean 0.55, population variance 0.2025: 0.669
        CHECK(mode_variation(ris) == doctest::Approx(0.2025 / 0.3025));
        CHECK(classify_ris_paths(ris, modes));
        CHECK_THROWS_AS(classify_ris_paths(flat, default_modes(1)), std::invalid_argument);
        CHECK_THROWS_AS(classify_ris_paths(std::vector<std::complex<double>>{{1.0, 0.0}}, modes), std::invalid_argument);
    }

    TEST_CASE("false-flag rate of plain paths at 10 dB and a monotone ROC")
    {
        const ObservationGrid &g = grid0;
        const EstimatorConfig &cfg = cfg0;
        const auto modes = default_modes(4);
        const int trials = 1000;
        std::vector<double> variation(trials);
        int flagged = 0;
        for (int t = 0; t < trials; ++t)
        {
            Rng rng(derive_seed(77, static_cast<std::uint64_t>(t)));
            Mpc m;
            m.delay = rng.uniform(0.05, 0.8) / g.subcarrier_spacing;
            m.aoa = wrap_two_pi(deg_to_rad(rng.uniform(-60.0, 60.0)));
            m.aod = wrap_two_pi(deg_to_rad(rng.uniform(-60.0, 60.0)));
            m.doppler = rng.uniform(-150.0, 150.0);
            m.amplitude = std::polar(1.0, two_pi * rng.uniform());
            const Observation obs = synthesize_observations(std::vector<Mpc>{m}, modes, g, 10.0, static_cast<std::uint64_t>(t));
            const EstimationResult r = estimate_mpc_parameters(obs, 1, modes, cfg);
            flagged += r.paths[0].mpc.ris_interacting ? 1 : 0;
            variation[t] = r.paths[0].mode_variation;
        }
        CHECK(static_cast<double>(flagged) / trials < 0.05);

        double previous = 1.0;
        for (double eps = 0.0; eps <= 0.1; eps += 0.005)
        {
            const auto rate = static_cast<double>(std::count_if(variation.begin(), variation.end(),
                                                                [&](double v) { return v > eps; })) / trials;
            CHECK(rate <= previous);
            previous = rate;
        }
    }

    TEST_CASE("RIS path: flagged, reflect angle recovered with a known incidence")
    {
        const auto modes = default_modes(5);
        Mpc m = on_grid(40, 12.0, -20.0, 33);
        m.ris_interacting = true;
        m.ris_incident_angle = deg_to_rad(20.0);
        m.ris_reflect_angle = wrap_two_pi(deg_to_rad(-17.3));
        const Mpc plain = on_grid(10, -45.0, 30.0, 20);
        EstimatorConfig cfg = cfg0;
        cfg.known_incident_angle = deg_to_rad(20.0);
        const Observation obs = synthesize_observations(std::vector<Mpc>{plain, m}, modes, grid0, 20.0, 3);
        const EstimationResult r = estimate_mpc_parameters(obs, 2, modes, cfg);
        const auto est = r.mpcs();
        const Mpc &e = nearest(est, m);
        REQUIRE(e.ris_interacting);
        REQUIRE(e.ris_reflect_angle.has_value());
        CHECK(std::abs(wrap_pi(*e.ris_reflect_angle - *m.ris_reflect_angle)) < deg_to_rad(1.0));
        CHECK(std::abs(wrap_pi(*e.ris_incident_angle - deg_to_rad(20.0))) < 1e-12);
        CHECK_FALSE(nearest(est, plain).ris_interacting);
        CHECK(std::abs(e.amplitude - m.amplitude) < 0.1);
    }

    TEST_CASE("RIS path: without a known incidence the angle pair lies on a ridge")
    {
        const auto modes = default_modes(5);
        Mpc m = on_grid(40, 12.0, -20.0, 33);
        m.ris_interacting = true;
        m.ris_incident_angle = deg_to_rad(20.0);
        m.ris_reflect_angle = wrap_two_pi(deg_to_rad(-30.0));
        const Observation obs = synthesize_observations(std::vector<Mpc>{m}, modes, grid0,
                                                        std::numeric_limits<double>::infinity(), 3);
        const EstimationResult r = estimate_mpc_parameters(obs, 1, modes, cfg0);
        const EstimatedPath &p = r.paths[0];
        REQUIRE(p.mpc.ris_interacting);
        CHECK(p.ris_ridge);
        // the pair found reproduces the sum of sines of the truth
        const double s = std::sin(wrap_pi(*p.mpc.ris_incident_angle)) + std::sin(wrap_pi(*p.mpc.ris_reflect_angle));
        CHECK(s == doctest::Approx(std::sin(deg_to_rad(20.0)) + std::sin(deg_to_rad(-30.0))).epsilon(0.02));
    }

    TEST_CASE("model order errors")
    {
        const auto modes = default_modes(2);
        ObservationGrid g = grid0;
        g.rx_elements = 2;
        const Observation obs = synthesize_observations(std::vector<Mpc>{on_grid(10, 0.0, 0.0, 30)}, modes, g, 20.0, 1);
        CHECK_THROWS_AS(estimate_mpc_parameters(obs, 3, modes, cfg0), std::invalid_argument);
        CHECK_THROWS_AS(estimate_mpc_parameters(obs, 0, modes, cfg0), std::invalid_argument);
        CHECK_THROWS_AS(estimate_mpc_parameters(obs, 1, default_modes(3), cfg0), std::invalid_argument);
        CHECK_NOTHROW(estimate_mpc_parameters(obs, 2, modes, cfg0));
    }

    TEST_CASE("RMSEE examples")
    {
        const ParameterSpans spans = ParameterSpans::from_config(cfg0);
        const std::vector<Mpc> truth{on_grid(10, 5.0, -12.0, 30), on_grid(40, -30.0, 25.0, 20)};
        CHECK(rmsee(truth, truth, spans).aggregate == 0.0);
        const std::vector<Mpc> swapped{truth[1], truth[0]};
        CHECK(rmsee(swapped, truth, spans).aggregate == 0.0);

        std::vector<Mpc> off{truth[0]};
        off[0].delay += cfg0.delay.step();
        const RmseeReport r = rmsee(off, std::vector<Mpc>{truth[0]}, spans);
        CHECK(r.delay == doctest::Approx(cfg0.delay.step()));
        CHECK(r.aoa == 0.0);
        CHECK(r.aggregate == doctest::Approx(std::sqrt(std::pow(cfg0.delay.step() / spans.delay, 2) / 4.0)));

        // an unflagged RIS path is charged half the RIS angle span
        Mpc ris = truth[0];
        ris.ris_interacting = true;
        ris.ris_incident_angle = 0.3;
        ris.ris_reflect_angle = 0.2;
        const RmseeReport miss = rmsee(std::vector<Mpc>{truth[0]}, std::vector<Mpc>{ris}, spans);
        CHECK(miss.ris_reflect == doctest::Approx(0.5 * spans.ris_angle));

        CHECK_THROWS_AS(rmsee(std::vector<Mpc>{}, truth, spans), std::invalid_argument);
        CHECK_THROWS_AS(rmsee(off, truth, spans), std::invalid_argument);
    }

    TEST_CASE("random truth respects its separations")
    {
        StudyConfig sc;
        for (std::uint64_t s = 0; s < 50; ++s)
        {
            const auto t = random_truth(sc, cfg0, s);
            REQUIRE(t.size() == 3);
            CHECK(t[1].ris_interacting);
            CHECK_FALSE(t[0].ris_interacting);
            for (std::size_t a = 0; a < 3; ++a)
                for (std::size_t b = a + 1; b < 3; ++b)
                {
                    CHECK(std::abs(t[a].delay - t[b].delay) >= 4.0 * cfg0.delay.step());
                    CHECK(std::abs(wrap_pi(t[a].aoa - t[b].aoa)) >= deg_to_rad(10.0));
                }
        }
        CHECK(random_truth(sc, cfg0, 3)[2].delay == random_truth(sc, cfg0, 3)[2].delay);
    }
}
