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


// Acceptance runner: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include "rischan/estimation.hpp"
#include "rischan/experiment.hpp"
#include "rischan/pathloss.hpp"
#include "rischan/random.hpp"
#include "rischan/scene.hpp"
#include "rischan/smallscale.hpp"
#include "rischan/units.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

using namespace rischan;
namespace ex = rischan::experiment;
namespace fs = std::filesystem;

namespace
{
    // Collects the individual checks of one criterion
    struct Verdict
    {
        bool ok = true;
        std::vector<std::string> notes;

        void require(bool cond, const std::string &what)
        {
            if (!cond)
                ok = false;
            notes.push_back(std::string(cond ? "" : "FAILED ") + what);
        }
    };

    std::string fmt(const char *f, double v)
    {
        char buf[64];
        std::snprintf(buf, sizeof buf, f, v);
        return buf;
    }

    std::string slurp(const fs::path &p)
    {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    fs::path config_path(const std::string &name) { return fs::path(RISCHAN_SOURCE_DIR) / "configs" / name; }
    ex::ExperimentConfig load(const std::string &name) { return ex::parse_config(slurp(config_path(name))); }

    Scene xz_scene(const RisPanel &panel, double f, double d1, double theta_t, double d2, double theta_r, double gt = 1.0,
                   double gr = 1.0)
    {
        const Point3 tx{-d1 * std::sin(theta_t), 0.0, d1 * std::cos(theta_t)};
        const Point3 rx{d2 * std::sin(theta_r), 0.0, d2 * std::cos(theta_r)};
        return build_scene({tx, gt}, {rx, gr}, panel, RisPose{}, f);
    }

    RisPanel fig5_panel()
    {
        const double lambda = wavelength(5.4e9);
        return RisPanel::uniform(60, 60, 0.33 * lambda, 0.33 * lambda);
    }

    Scene fig5_scene(const RisPanel &panel) { return xz_scene(panel, 5.4e9, 20.0, deg_to_rad(60.0), 20.0, deg_to_rad(45.0)); }

    // ---- criteria -------------------------------------------------------------------

    Verdict free_space_anchor()
    {
        Verdict v;
        const double pl = pathloss::free_space_path_loss_db(400.0, 10.5e9);
        v.require(std::abs(pl - 104.9) <= 0.1, "FSPL(400 m, 10.5 GHz) = " + fmt("%.4f dB", pl));
        return v;
    }

    Verdict rayleigh_anchor()
    {
        Verdict v;
        const RisPanel panel = RisPanel::uniform(102, 100, 0.01, 0.01);
        const double r = rayleigh_distance(panel, 10.5e9);
        v.require(std::abs(r - 142.9) <= 1.0, "Rayleigh distance = " + fmt("%.2f m", r));
        return v;
    }

    Verdict ellipse_sweep()
    {
        Verdict v;
        ex::ExperimentConfig c = load("sweep_ellipse.json");
        const ex::ResultTable full = ex::run_experiment(c);
        const std::string col = "path_loss_db_TANG_NEAR_BF";
        const std::size_t n = full.rows.size();
        v.require(n == 61, "61 sweep points (" + std::to_string(n) + ")");
        bool monotone = true;
        for (std::size_t i = 1; i < n; ++i)
            monotone = monotone && full.number(i, col) < full.number(i - 1, col);
        v.require(monotone, "monotone decrease over d1");
        const double first = full.number(0, col), last = full.number(n - 1, col);
        v.require(std::abs((first - last) - 4.0) <= 1.0, "total decrease " + fmt("%.3f dB", first - last));
        v.require(std::abs(first - 73.0) <= 3.0, "level at d1 = 140 m " + fmt("%.3f dB", first));
        v.require(std::abs(last - 69.0) <= 3.0, "level at d1 = 200 m " + fmt("%.3f dB", last));

        c.panel->m = 51;
        c.panel->n = 50;
        const ex::ResultTable half = ex::run_experiment(c);
        for (std::size_t i : {std::size_t{0}, n / 2, n - 1})
        {
            const double rise = half.number(i, col) - full.number(i, col);
            v.require(rise >= 9.5 && rise <= 12.5,
                      "51x50 grid at d1 = " + fmt("%.0f m", full.number(i, "d1_m")) + " raises loss " + fmt("%.3f dB", rise));
        }
        return v;
    }

    Verdict phase_control()
    {
        Verdict v;
        const ex::ResultTable t = ex::run_experiment(load("phase_gain.json"));
        double uniform = NAN, best = -INFINITY;
        for (std::size_t i = 0; i < t.rows.size(); ++i)
        {
            const std::string &label = std::get<std::string>(t.rows[i][0]);
            const double p = t.number(i, "received_power_dbm");
            if (label == "UNIFORM")
                uniform = p;
            else if (label == "FAR_FIELD_BEAM" || label == "NEAR_FIELD_FOCUS")
            {
                best = std::max(best, p);
                v.require(p - uniform >= 15.0, label + " gain over UNIFORM " + fmt("%.2f dB", p - uniform));
            }
        }
        v.require(std::isfinite(uniform) && std::isfinite(best), "UNIFORM and designed rows present");
        return v;
    }

    Verdict closed_forms()
    {
        using namespace pathloss;
        Verdict v;
        Rng rng(5);
        double worst = 0.0;
        for (int i = 0; i < 100; ++i)
        {
            PoFarFieldParams p;
            p.d1 = rng.uniform(1.0, 500.0);
            p.d2 = rng.uniform(1.0, 500.0);
            p.a = rng.uniform(0.01, 2.0);
            p.b = rng.uniform(0.01, 2.0);
            p.theta_i = rng.uniform(0.0, 1.5);
            p.theta_r = p.theta_s = rng.uniform(0.0, 1.5);
            p.gt = rng.uniform(1.0, 100.0);
            p.gr = rng.uniform(1.0, 100.0);
            p.frequency = rng.uniform(1e9, 100e9);
            worst = std::max(worst, std::abs(po_far_field_path_loss_db(p) - po_design_angle_path_loss_db(p)));
        }
        v.require(worst <= 1e-12, "PO general at the design angle equals the simplified form, max diff " + fmt("%.1e dB", worst));

        const RisPanel bc = RisPanel::uniform(30, 20, 0.01, 0.01);
        const Scene sbc = xz_scene(bc, 28e9, 17.0, 0.2, 23.0, 0.9, 4.0, 2.5);
        const double d7 = tang_case_path_loss(TangCase::near_broadcasting, bc, sbc).path_loss_db -
                          free_space_path_loss_db(sbc.d1 + sbc.d2, 28e9, 4.0, 2.5);
        v.require(std::abs(d7) <= 1e-12, "near-field broadcasting minus FSPL(d1 + d2) " + fmt("%.1e dB", d7));

        const RisPanel a = RisPanel::uniform(10, 8, 0.01, 0.01), b = RisPanel::uniform(20, 16, 0.01, 0.01);
        const double d5 = tang_case_path_loss(TangCase::far_beamforming, b, xz_scene(b, 10e9, 300.0, 0.4, 400.0, 0.3)).path_loss_db -
                          tang_case_path_loss(TangCase::far_beamforming, a, xz_scene(a, 10e9, 300.0, 0.4, 400.0, 0.3)).path_loss_db;
        v.require(std::abs(d5 + 20.0 * std::log10(4.0)) <= 1e-12, "far-field beamforming (2M, 2N) change " + fmt("%.6f dB", d5));

        RisPanel panel = RisPanel::uniform(7, 6, 0.012, 0.01);
        const Scene s = xz_scene(panel, 10e9, 6.0, 0.2, 9.0, 0.7, 3.0, 7.0);
        PhaseProfileSpec spec;
        spec.kind = PhaseProfileSpec::Kind::random;
        spec.seed = 5;
        panel.phase = design_phase_profile(spec, panel, s);
        for (Model m : all_models())
        {
            ModelSpec ms;
            ms.model = m;
            ms.tile_response = {0.02, 0.01};
            const auto r = smallscale::reciprocity_check(
                [&](const RisPanel &p, const Scene &sc) { return evaluate(ms, p, sc).path_loss_db; }, s, panel);
            if (m != Model::po_far_field)
                v.require(r.max_abs_diff <= 1e-9, std::string(to_string(m)) + " swap diff " + fmt("%.1e dB", r.max_abs_diff));
        }
        return v;
    }

    Verdict quantization()
    {
        using namespace pathloss;
        Verdict v;
        RisPanel panel = fig5_panel();
        const Scene s = fig5_scene(panel);
        PhaseProfileSpec spec;
        spec.kind = PhaseProfileSpec::Kind::near_field_focus;
        const std::vector<double> design = design_phase_profile(spec, panel, s);

        // Each draw shifts the co-phasing target by a random common phase, which
        // leaves the continuous power unchanged but moves every quantization error.
        const int draws = 1000;
        Rng rng(2718);
        CompensatedSum<double> loss1, loss3;
        for (int d = 0; d < draws; ++d)
        {
            const double offset = rng.uniform(0.0, two_pi);
            std::vector<double> target(design.size());
            for (std::size_t i = 0; i < design.size(); ++i)
                target[i] = wrap_two_pi(design[i] + offset);
            panel.phase = target;
            const double cont = tang_general_path_loss(panel, s).received_power_dbm;
            panel.phase = quantize_phase_profile(target, 1);
            loss1.add(cont - tang_general_path_loss(panel, s).received_power_dbm);
            panel.phase = quantize_phase_profile(target, 3);
            loss3.add(cont - tang_general_path_loss(panel, s).received_power_dbm);
        }
        const double l1 = loss1.value() / draws, l3 = loss3.value() / draws;
        v.require(l3 < 0.3, "3-bit mean loss " + fmt("%.3f dB", l3));
        v.require(std::abs(l1 - 3.9) <= 0.5, "1-bit mean loss " + fmt("%.3f dB", l1));
        return v;
    }

    Verdict temporal_correlation()
    {
        Verdict v;
        const ex::ExperimentConfig c = load("acf.json");
        v.require(c.fading->runs >= 200, "runs = " + std::to_string(c.fading->runs));
        const ex::ResultTable t = ex::run_experiment(c);
        double margin = INFINITY;
        for (std::size_t k = 1; k < t.rows.size(); ++k)
            margin = std::min(margin, t.number(k, "abs_acf_ris_on") - t.number(k, "abs_acf_ris_off"));
        v.require(t.rows.size() == c.fading->max_lag + 1 && margin > 0.0,
                  "|ACF_on| - |ACF_off| over lags 1.." + std::to_string(c.fading->max_lag) + " min " + fmt("%.4f", margin));

        const auto ring = smallscale::FadingScenario::isotropic_ring(64, 5.4e9, 3.0, 1e-3, 200, 500, 11);
        const auto acf = smallscale::temporal_acf(smallscale::simulate_time_varying_channel(ring), 50);
        double worst = 0.0;
        for (std::size_t k = 0; k < acf.size(); ++k)
        {
            const double j0 = std::cyl_bessel_j(0.0, two_pi * ring.max_doppler() * 1e-3 * static_cast<double>(k));
            worst = std::max(worst, std::abs(std::abs(acf[k]) - std::abs(j0)));
        }
        v.require(worst <= 0.05, "isotropic ring | |ACF| - |J0| | max " + fmt("%.4f", worst));
        return v;
    }

    Verdict hardening()
    {
        Verdict v;
        const ex::ResultTable t = ex::run_experiment(load("hardening.json"));
        std::vector<std::size_t> co, rnd;
        for (std::size_t i = 0; i < t.rows.size(); ++i)
            (std::get<std::string>(t.rows[i][0]) == "co_phased" ? co : rnd).push_back(i);
        auto row_q = [&](const std::vector<std::size_t> &rows, double q)
        {
            for (std::size_t i : rows)
                if (t.number(i, "Q") == q)
                    return i;
            throw std::runtime_error("missing Q row");
        };
        const double a = t.number(row_q(co, 256), "snr_over_q2"), b = t.number(row_q(co, 4096), "snr_over_q2");
        v.require(std::abs(a - b) / b < 0.05, "co-phased SNR/Q^2 256 vs 4096: " + fmt("%.4f", a) + " vs " + fmt("%.4f", b));
        bool decreasing = true;
        for (std::size_t i = 1; i < co.size(); ++i)
            decreasing = decreasing && t.number(co[i], "var_ratio") < t.number(co[i - 1], "var_ratio");
        v.require(decreasing, "co-phased variance ratio decreases with Q");

        double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
        for (std::size_t i : rnd)
        {
            const double x = std::log10(t.number(i, "Q")), y = std::log10(t.number(i, "mean_snr"));
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        const double n = static_cast<double>(rnd.size());
        const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        v.require(std::abs(slope - 1.0) <= 0.1, "random-phase log-log slope " + fmt("%.4f", slope));
        return v;
    }

    Verdict rank_improvement()
    {
        using smallscale::Matrix;
        Verdict v;
        Rng rng(9);
        auto cn = [&] { return rng.complex_normal(); };
        smallscale::Vector a(2), b(2), c(2), d(2);
        a << cn(), cn();
        b << cn(), cn();
        c << cn(), cn();
        d << cn(), cn();
        smallscale::SubChannels sub;
        sub.h_direct = a * b.transpose();
        sub.h_tx_ris = d.transpose();
        sub.h_ris_rx = c;
        sub.theta = smallscale::Vector::Constant(1, std::polar(1.0, 0.7));
        const auto with = smallscale::matrix_metrics(smallscale::cascaded_channel(sub));
        v.require(with.effective_rank == 2, "LOS + RIS dyad rank " + std::to_string(with.effective_rank));
        const auto without = smallscale::matrix_metrics(sub.h_direct);
        v.require(without.effective_rank == 1, "LOS only rank " + std::to_string(without.effective_rank));
        return v;
    }

    Verdict mode_aided_estimation()
    {
        using namespace estimation;
        Verdict v;
        const ex::ExperimentConfig c = load("estimate.json");
        v.require(c.estimation->trials >= 100, "trials per cell = " + std::to_string(c.estimation->trials));
        const ex::ResultTable t = ex::run_experiment(c);
        auto cell = [&](double k, double snr)
        {
            for (std::size_t i = 0; i < t.rows.size(); ++i)
                if (t.number(i, "K") == k && t.number(i, "snr_db") == snr)
                    return t.number(i, "rmsee");
            throw std::runtime_error("missing RMSEE cell");
        };
        const std::vector<double> ks{4, 5, 6}, snrs{0, 10, 20};
        for (double snr : snrs)
        {
            std::string line = "SNR " + fmt("%.0f dB:", snr);
            bool ok = true;
            for (std::size_t i = 0; i < ks.size(); ++i)
            {
                line += fmt(" K=%.0f ", ks[i]) + fmt("%.4e", cell(ks[i], snr));
                if (i > 0)
                    ok = ok && cell(ks[i], snr) <= cell(ks[i - 1], snr);
            }
            v.require(ok, line + " (non-increasing in K)");
        }
        for (double k : ks)
        {
            bool ok = true;
            for (std::size_t i = 1; i < snrs.size(); ++i)
                ok = ok && cell(k, snrs[i]) <= cell(k, snrs[i - 1]);
            v.require(ok, "K=" + fmt("%.0f", k) + " non-increasing in SNR");
        }

        const ObservationGrid grid;
        const EstimatorConfig cfg = default_estimator_config(grid);
        const auto modes = make_transmission_modes(4, 4, 0.5, deg_to_rad(20.0), deg_to_rad(-60.0), deg_to_rad(60.0));
        Mpc m;
        m.amplitude = std::polar(0.7, 1.1);
        m.delay = cfg.delay.at(37);
        m.aoa = wrap_two_pi(deg_to_rad(-23.0));
        m.aod = wrap_two_pi(deg_to_rad(48.0));
        m.doppler = cfg.doppler.at(41);
        const std::vector<Mpc> truth{m};
        const Observation obs = synthesize_observations(truth, modes, grid, std::numeric_limits<double>::infinity(), 1);
        const auto est = estimate_mpc_parameters(obs, 1, modes, cfg).mpcs();
        const double err = rmsee(est, truth, ParameterSpans::from_config(cfg)).aggregate;
        v.require(err < 1e-9 && std::abs(est[0].amplitude - m.amplitude) < 1e-9,
                  "noiseless on-grid single path RMSEE " + fmt("%.1e", err));
        return v;
    }

    Verdict determinism()
    {
        Verdict v;
        for (const char *name : {"pathloss_models.json", "sweep_ellipse.json", "phase_gain.json", "acf.json", "hardening.json",
                                 "estimate_quick.json", "metrics.json"})
        {
            const ex::ExperimentConfig c = load(name);
            const ex::ResultTable a = ex::run_experiment(c), b = ex::run_experiment(c);
            v.require(ex::to_csv(a) == ex::to_csv(b) && ex::to_json(a) == ex::to_json(b),
                      std::string(ex::to_string(c.kind)) + " (" + name + ") byte-identical");
        }

        const fs::path dir = fs::temp_directory_path() / ("rischan_accept_" + std::to_string(::getpid()));
        fs::create_directories(dir);
        bool same = true;
        for (const char *fmt_name : {"csv", "json"})
        {
            std::string outputs[2];
            for (int run = 0; run < 2; ++run)
            {
                const fs::path out = dir / (std::string("run") + std::to_string(run) + "." + fmt_name);
                const std::string cmd = std::string("\"") + RISCHAN_CLI + "\" phase-gain --config \"" +
                                        config_path("phase_gain.json").string() + "\" --seed 42 --format " + fmt_name +
                                        " --out \"" + out.string() + "\"";
                same = same && std::system(cmd.c_str()) == 0;
                outputs[run] = slurp(out);
            }
            same = same && !outputs[0].empty() && outputs[0] == outputs[1];
        }
        fs::remove_all(dir);
        v.require(same, "command-line runs byte-identical (csv, json)");
        return v;
    }
}

int main()
{
    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"free-space anchor", free_space_anchor},
        {"Rayleigh distance anchor", rayleigh_anchor},
        {"ellipse sweep", ellipse_sweep},
        {"phase control gain", phase_control},
        {"closed-form identities", closed_forms},
        {"phase quantization", quantization},
        {"temporal correlation with RIS tracking", temporal_correlation},
        {"channel hardening", hardening},
        {"rank improvement", rank_improvement},
        {"mode-aided estimation", mode_aided_estimation},
        {"determinism", determinism},
    };

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i)
    {
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try
        {
            v = criteria[i].second();
        }
        catch (const std::exception &e)
        {
            v.require(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failed += v.ok ? 0 : 1;
        std::printf("%s criterion %zu: %s (%.2f s)\n", v.ok ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), secs);
        for (const std::string &n : v.notes)
            std::printf("    %s\n", n.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria failed\n", failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
