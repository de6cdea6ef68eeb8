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
#include "rischan/parallel.hpp"
#include "rischan/random.hpp"
#include "rischan/units.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace rischan::estimation
{
    namespace
    {
        using cd = std::complex<double>;
        using CVec = std::vector<cd>;
        using RowMatrix = Eigen::Matrix<cd, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

        // Tensor axes of an observation
        enum Axis : std::size_t
        {
            mode_axis = 0,
            delay_axis = 1,
            doppler_axis = 2,
            aoa_axis = 3,
            aod_axis = 4
        };

        using Dims = std::array<std::size_t, 5>;

        Dims dims_of(const Observation &obs)
        {
            return {obs.modes, obs.grid.subcarriers, obs.grid.snapshots, obs.grid.rx_elements, obs.grid.tx_elements};
        }

        CVec delay_steer(const ObservationGrid &g, double tau)
        {
            CVec w(g.subcarriers);
            for (std::size_t s = 0; s < w.size(); ++s)
                w[s] = std::polar(1.0, -two_pi * static_cast<double>(s) * g.subcarrier_spacing * tau);
            return w;
        }

        CVec doppler_steer(const ObservationGrid &g, double nu)
        {
            CVec w(g.snapshots);
            for (std::size_t p = 0; p < w.size(); ++p)
                w[p] = std::polar(1.0, two_pi * nu * static_cast<double>(p) * g.snapshot_interval);
            return w;
        }

        CVec array_steer(std::size_t n, double pitch, double angle)
        {
            CVec w(n);
            const double sa = std::sin(angle);
            for (std::size_t u = 0; u < n; ++u)
                w[u] = std::polar(1.0, two_pi * pitch * static_cast<double>(u) * sa);
            return w;
        }

        CVec steer(const ObservationGrid &g, std::size_t axis, double value)
        {
            switch (axis)
            {
            case delay_axis:
                return delay_steer(g, value);
            case doppler_axis:
                return doppler_steer(g, value);
            case aoa_axis:
                return array_steer(g.rx_elements, g.rx_pitch, value);
            case aod_axis:
                return array_steer(g.tx_elements, g.tx_pitch, value);
            default:
                throw std::logic_error("no steering vector for the mode axis");
            }
        }

        // Contracts one axis against conj(w) and removes it from dims
        CVec contract_axis(const CVec &data, std::vector<std::size_t> &dims, std::size_t axis, const CVec &w)
        {
            std::size_t outer = 1, inner = 1;
            for (std::size_t a = 0; a < axis; ++a)
                outer *= dims[a];
            for (std::size_t a = axis + 1; a < dims.size(); ++a)
                inner *= dims[a];
            const std::size_t n = dims[axis];
            CVec out(outer * inner, cd{0.0, 0.0});
            CVec wc(n);
            for (std::size_t j = 0; j < n; ++j)
                wc[j] = std::conj(w[j]);
            for (std::size_t o = 0; o < outer; ++o)
            {
                cd *dst = out.data() + o * inner;
                const cd *src = data.data() + o * n * inner;
                for (std::size_t j = 0; j < n; ++j)
                {
                    const cd c = wc[j];
                    const cd *row = src + j * inner;
                    for (std::size_t i = 0; i < inner; ++i)
                        dst[i] += row[i] * c;
                }
            }
            dims.erase(dims.begin() + static_cast<std::ptrdiff_t>(axis));
            return out;
        }

        struct PathState
        {
            double tau = 0.0, nu = 0.0, aoa = 0.0, aod = 0.0; // angles signed
            CVec alpha;                                       // per mode
            double value(std::size_t axis) const
            {
                switch (axis)
                {
                case delay_axis:
                    return tau;
                case doppler_axis:
                    return nu;
                case aoa_axis:
                    return aoa;
                default:
                    return aod;
                }
            }
            void set(std::size_t axis, double v)
            {
                switch (axis)
                {
                case delay_axis:
                    tau = v;
                    break;
                case doppler_axis:
                    nu = v;
                    break;
                case aoa_axis:
                    aoa = v;
                    break;
                default:
                    aod = v;
                }
            }
        };

        // Result has shape K x dims[free_axis]
        CVec contract_all_but(const CVec &x, const Dims &dims, std::size_t free_axis, const std::array<CVec, 5> &w)
        {
            std::vector<std::size_t> d(dims.begin(), dims.end());
            CVec cur;
            bool first = true;
            for (std::size_t axis = 4; axis >= 1; --axis)
            {
                if (axis == free_axis)
                    continue;
                cur = contract_axis(first ? x : cur, d, axis, w[axis]);
                first = false;
            }
            return cur;
        }

        // sum_k |sum_i z[k, i] conj(w[i])|^2
        double coherent_objective(const CVec &z, std::size_t k_count, const CVec &w)
        {
            const std::size_t n = w.size();
            double total = 0.0;
            for (std::size_t k = 0; k < k_count; ++k)
            {
                cd s{0.0, 0.0};
                for (std::size_t i = 0; i < n; ++i)
                    s += z[k * n + i] * std::conj(w[i]);
                total += std::norm(s);
            }
            return total;
        }

        double parabolic_offset(double fm, double f0, double fp)
        {
            const double den = fm - 2.0 * f0 + fp;
            if (!(den < 0.0))
                return 0.0;
            return std::clamp(0.5 * (fm - fp) / den, -0.5, 0.5);
        }

        struct Searcher
        {
            const ObservationGrid &grid;
            const EstimatorConfig &config;
            Dims dims;
            std::array<const SearchGrid *, 5> grids{};
            std::array<std::vector<CVec>, 5> grid_steer; // per axis, per grid point

            Searcher(const ObservationGrid &g, const EstimatorConfig &c, Dims d) : grid(g), config(c), dims(d)
            {
                grids[delay_axis] = &c.delay;
                grids[doppler_axis] = &c.doppler;
                grids[aoa_axis] = &c.angle;
                grids[aod_axis] = &c.angle;
                for (std::size_t a = 1; a < 5; ++a)
                {
                    grid_steer[a].resize(grids[a]->points);
                    for (std::size_t i = 0; i < grids[a]->points; ++i)
                        grid_steer[a][i] = steer(grid, a, grids[a]->at(i));
                }
            }

            // Grid maximum of a per-point objective followed by one parabolic step.
            // objective(value) is re-evaluated at the refined point; the better of
            // the two is returned with its objective.
            template <typename GridObjective, typename PointObjective>
            std::pair<double, double> search(std::size_t axis, GridObjective &&on_grid, PointObjective &&at_value) const
            {
                const SearchGrid &g = *grids[axis];
                std::vector<double> f(g.points);
                for (std::size_t i = 0; i < g.points; ++i)
                    f[i] = on_grid(i);
                const auto best = static_cast<std::size_t>(std::max_element(f.begin(), f.end()) - f.begin());
                double value = g.at(best), obj = f[best];
                if (best > 0 && best + 1 < g.points)
                {
                    const double delta = parabolic_offset(f[best - 1], f[best], f[best + 1]);
                    if (delta != 0.0)
                    {
                        const double v = g.at(best) + delta * g.step();
                        const double o = at_value(v);
                        if (o > obj)
                        {
                            value = v;
                            obj = o;
                        }
                    }
                }
                return {value, obj};
            }

            std::array<CVec, 5> steering(const PathState &st) const
            {
                std::array<CVec, 5> w;
                for (std::size_t a = 1; a < 5; ++a)
                    w[a] = steer(grid, a, st.value(a));
                return w;
            }

            // Coordinate update along one axis; accepted only if the objective grows
            void update(const CVec &x, PathState &st, std::size_t axis) const
            {
                const std::array<CVec, 5> w = steering(st);
                const CVec z = contract_all_but(x, dims, axis, w);
                const std::size_t k = dims[mode_axis];
                const double current = coherent_objective(z, k, w[axis]);
                const auto [value, obj] = search(
                    axis, [&](std::size_t i) { return coherent_objective(z, k, grid_steer[axis][i]); },
                    [&](double v) { return coherent_objective(z, k, steer(grid, axis, v)); });
                if (obj > current)
                    st.set(axis, value);
            }

            void update_amplitudes(const CVec &x, PathState &st) const
            {
                const std::array<CVec, 5> w = steering(st);
                const CVec z = contract_all_but(x, dims, delay_axis, w);
                const std::size_t k = dims[mode_axis], n = dims[delay_axis];
                const double norm = static_cast<double>(dims[1] * dims[2] * dims[3] * dims[4]);
                st.alpha.assign(k, cd{0.0, 0.0});
                for (std::size_t kk = 0; kk < k; ++kk)
                {
                    cd s{0.0, 0.0};
                    for (std::size_t i = 0; i < n; ++i)
                        s += z[kk * n + i] * std::conj(w[delay_axis][i]);
                    st.alpha[kk] = s / norm;
                }
            }

            // Non-coherent initialization on a residual
            PathState initialize(const CVec &x) const
            {
                const std::size_t K = dims[0], S = dims[1], P = dims[2], U = dims[3], V = dims[4];
                PathState st;

                // Delay: sum over modes, a few snapshots and both arrays of |delay transform|^2
                const SearchGrid &dg = *grids[delay_axis];
                RowMatrix dconj(dg.points, S);
                for (std::size_t i = 0; i < dg.points; ++i)
                    for (std::size_t s = 0; s < S; ++s)
                        dconj(i, s) = std::conj(grid_steer[delay_axis][i][s]);
                Eigen::VectorXd delay_power = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dg.points));
                const std::size_t p_used = std::clamp<std::size_t>(config.init_snapshots, 1, P);
                for (std::size_t k = 0; k < K; ++k)
                    for (std::size_t p = 0; p < p_used; ++p)
                    {
                        const cd *base = x.data() + ((k * S) * P + p) * U * V;
                        Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>> block(
                            base, static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(U * V),
                            Eigen::OuterStride<>(static_cast<Eigen::Index>(P * U * V)));
                        const RowMatrix t = dconj * block;
                        delay_power += t.rowwise().squaredNorm();
                    }
                {
                    auto on_grid = [&](std::size_t i) { return delay_power(static_cast<Eigen::Index>(i)); };
                    // The parabolic point is scored with the same non-coherent sum
                    auto at_value = [&](double tau)
                    {
                        const CVec d = delay_steer(grid, tau);
                        double total = 0.0;
                        for (std::size_t k = 0; k < K; ++k)
                            for (std::size_t p = 0; p < p_used; ++p)
                                for (std::size_t j = 0; j < U * V; ++j)
                                {
                                    cd s{0.0, 0.0};
                                    for (std::size_t ss = 0; ss < S; ++ss)
                                        s += x[((k * S + ss) * P + p) * U * V + j] * std::conj(d[ss]);
                                    total += std::norm(s);
                                }
                        return total;
                    };
                    st.tau = search(delay_axis, on_grid, at_value).first;
                }

                // AoA: contract delay, non-coherent over modes, snapshots and Tx elements
                std::vector<std::size_t> d(dims.begin(), dims.end());
                const CVec xs = contract_axis(x, d, delay_axis, delay_steer(grid, st.tau)); // K x P x U x V
                auto aoa_power = [&](const CVec &r)
                {
                    double total = 0.0;
                    for (std::size_t kp = 0; kp < K * P; ++kp)
                        for (std::size_t v = 0; v < V; ++v)
                        {
                            cd s{0.0, 0.0};
                            for (std::size_t u = 0; u < U; ++u)
                                s += xs[(kp * U + u) * V + v] * std::conj(r[u]);
                            total += std::norm(s);
                        }
                    return total;
                };
                st.aoa = search(
                             aoa_axis, [&](std::size_t i) { return aoa_power(grid_steer[aoa_axis][i]); },
                             [&](double a) { return aoa_power(array_steer(U, grid.rx_pitch, a)); })
                             .first;

                // AoD: contract AoA, non-coherent over modes and snapshots
                std::vector<std::size_t> d2 = d;
                const CVec xu = contract_axis(xs, d2, 2, array_steer(U, grid.rx_pitch, st.aoa)); // K x P x V
                auto aod_power = [&](const CVec &t)
                {
                    double total = 0.0;
                    for (std::size_t kp = 0; kp < K * P; ++kp)
                    {
                        cd s{0.0, 0.0};
                        for (std::size_t v = 0; v < V; ++v)
                            s += xu[kp * V + v] * std::conj(t[v]);
                        total += std::norm(s);
                    }
                    return total;
                };
                st.aod = search(
                             aod_axis, [&](std::size_t i) { return aod_power(grid_steer[aod_axis][i]); },
                             [&](double a) { return aod_power(array_steer(V, grid.tx_pitch, a)); })
                             .first;

                // Doppler: coherent over snapshots
                const CVec xv = contract_axis(xu, d2, 2, array_steer(V, grid.tx_pitch, st.aod)); // K x P
                st.nu = search(
                            doppler_axis, [&](std::size_t i) { return coherent_objective(xv, K, grid_steer[doppler_axis][i]); },
                            [&](double nu) { return coherent_objective(xv, K, doppler_steer(grid, nu)); })
                            .first;

                update_amplitudes(x, st);
                return st;
            }

            // x += sign * signal(st)
            void accumulate_signal(CVec &x, const PathState &st, double sign) const
            {
                const std::array<CVec, 5> w = steering(st);
                const std::size_t K = dims[0], S = dims[1], P = dims[2], U = dims[3], V = dims[4];
                std::vector<cd> uv(U * V);
                for (std::size_t u = 0; u < U; ++u)
                    for (std::size_t v = 0; v < V; ++v)
                        uv[u * V + v] = w[aoa_axis][u] * w[aod_axis][v];
                std::size_t idx = 0;
                for (std::size_t k = 0; k < K; ++k)
                    for (std::size_t s = 0; s < S; ++s)
                    {
                        const cd ks = sign * st.alpha[k] * w[delay_axis][s];
                        for (std::size_t p = 0; p < P; ++p)
                        {
                            const cd ksp = ks * w[doppler_axis][p];
                            for (std::size_t j = 0; j < U * V; ++j)
                                x[idx++] += ksp * uv[j];
                        }
                    }
            }
        };

        double energy(const CVec &x)
        {
            CompensatedSum<double> s;
            for (const cd &v : x)
                s.add(std::norm(v));
            return s.value();
        }

        void check_mpc(const Mpc &m)
        {
            if (!(m.delay >= 0.0) || !std::isfinite(m.delay))
                throw std::invalid_argument("MPC delay must be non-negative");
            if (!(std::abs(m.amplitude) > 0.0))
                throw std::invalid_argument("MPC amplitude must be non-zero");
            for (double a : {m.aoa, m.aod})
                if (!(a >= 0.0 && a < two_pi))
                    throw std::invalid_argument("MPC angles must lie in [0, 2 pi)");
            if (m.ris_interacting && (!m.ris_incident_angle || !m.ris_reflect_angle))
                throw std::invalid_argument("RIS-interacting MPC needs incident and reflect angles");
        }

        // Normalized RIS angle objective |sum a_k conj g_k|^2 / sum |g_k|^2
        double ris_objective(std::span<const cd> alpha, std::span<const TransmissionMode> modes, double inc, double ref)
        {
            cd num{0.0, 0.0};
            double den = 0.0;
            for (std::size_t k = 0; k < modes.size(); ++k)
            {
                const cd g = modes[k].response(inc, ref);
                num += alpha[k] * std::conj(g);
                den += std::norm(g);
            }
            return den > 0.0 ? std::norm(num) / den : 0.0;
        }
    }

    // ---- Modes and observations ------------------------------------------------------

    std::complex<double> TransmissionMode::response(double incident, double reflect) const
    {
        const std::size_t n = phases.size();
        if (n == 0)
            return {0.0, 0.0};
        const double u = two_pi * pitch_wavelengths * (std::sin(incident) + std::sin(reflect));
        const double center = 0.5 * (static_cast<double>(n) - 1.0);
        cd s{0.0, 0.0};
        for (std::size_t i = 0; i < n; ++i)
            s += std::polar(1.0, phases[i] + u * (static_cast<double>(i) - center));
        return s / static_cast<double>(n);
    }

    std::vector<TransmissionMode> make_transmission_modes(std::size_t count, std::size_t elements, double pitch_wavelengths,
                                                          double design_incidence, double steer_min, double steer_max)
    {
        if (count < 1 || elements < 1)
            throw std::invalid_argument("transmission modes need at least one mode and one element");
        if (!(std::abs(design_incidence) < 0.5 * pi))
            throw std::invalid_argument("design incidence must lie in (-pi/2, pi/2)");

        std::vector<TransmissionMode> modes(count);
        const double center = 0.5 * (static_cast<double>(elements) - 1.0);
        for (std::size_t k = 0; k < count; ++k)
        {
            const double target = count == 1 ? 0.5 * (steer_min + steer_max)
                                             : steer_min + (steer_max - steer_min) * static_cast<double>(k) /
                                                               static_cast<double>(count - 1);
            if (!(std::abs(target) < 0.5 * pi))
                throw std::invalid_argument("steering angles must lie in (-pi/2, pi/2)");
            // Linear gradient that cancels the tile phase for (design_incidence, target)
            const double u = two_pi * pitch_wavelengths * (std::sin(design_incidence) + std::sin(target));
            modes[k].index = k;
            modes[k].pitch_wavelengths = pitch_wavelengths;
            modes[k].phases.resize(elements);
            for (std::size_t n = 0; n < elements; ++n)
                modes[k].phases[n] = wrap_two_pi(-u * (static_cast<double>(n) - center));
        }
        return modes;
    }

    void ObservationGrid::validate() const
    {
        if (subcarriers < 1 || snapshots < 1 || rx_elements < 1 || tx_elements < 1)
            throw std::invalid_argument("observation grid dimensions must be positive");
        if (!(subcarrier_spacing > 0.0) || !(snapshot_interval > 0.0) || !(rx_pitch > 0.0) || !(tx_pitch > 0.0))
            throw std::invalid_argument("observation grid spacings must be positive");
    }

    Observation synthesize_observations(std::span<const Mpc> truth, std::span<const TransmissionMode> modes,
                                        const ObservationGrid &grid, double snr_db, std::uint64_t seed)
    {
        grid.validate();
        if (modes.empty())
            throw std::invalid_argument("synthesis needs at least one transmission mode");
        for (const Mpc &m : truth)
            check_mpc(m);

        Observation obs;
        obs.grid = grid;
        obs.modes = modes.size();
        obs.snr_db = snr_db;
        obs.seed = seed;
        obs.data.assign(obs.modes * grid.samples_per_mode(), cd{0.0, 0.0});

        for (std::size_t a = 0; a < modes.size(); ++a)
            for (std::size_t b = a + 1; b < modes.size(); ++b)
            {
                const auto &pa = modes[a].phases, &pb = modes[b].phases;
                bool same = pa.size() == pb.size();
                for (std::size_t i = 0; same && i < pa.size(); ++i)
                    same = std::abs(wrap_pi(pa[i] - pb[i])) < 1e-12;
                if (same)
                    obs.warnings.push_back("transmission modes " + std::to_string(a) + " and " + std::to_string(b) +
                                           " have identical profiles; RIS paths cannot be told apart");
            }

        const Dims dims = dims_of(obs);
        const Searcher shape(grid, EstimatorConfig{}, dims);
        for (const Mpc &m : truth)
        {
            PathState st;
            st.tau = m.delay;
            st.nu = m.doppler;
            st.aoa = wrap_pi(m.aoa);
            st.aod = wrap_pi(m.aod);
            st.alpha.resize(obs.modes);
            for (std::size_t k = 0; k < obs.modes; ++k)
            {
                const cd g = m.ris_interacting
                                 ? modes[k].response(wrap_pi(*m.ris_incident_angle), wrap_pi(*m.ris_reflect_angle))
                                 : cd{1.0, 0.0};
                st.alpha[k] = m.amplitude * g;
            }
            shape.accumulate_signal(obs.data, st, 1.0);
        }

        if (std::isfinite(snr_db))
        {
            const double signal = energy(obs.data) / static_cast<double>(obs.data.size());
            obs.noise_variance = signal / from_db(snr_db);
            const std::size_t per_mode = grid.samples_per_mode();
            for (std::size_t k = 0; k < obs.modes; ++k)
            {
                Rng rng(derive_seed(seed, k));
                for (std::size_t i = 0; i < per_mode; ++i)
                    obs.data[k * per_mode + i] += rng.complex_normal(obs.noise_variance);
            }
        }
        return obs;
    }

    EstimatorConfig default_estimator_config(const ObservationGrid &grid)
    {
        EstimatorConfig c;
        const double delay_period = 1.0 / grid.subcarrier_spacing;
        c.delay = {0.0, delay_period * 127.0 / 128.0, 128};
        c.angle = {-0.5 * pi, 0.5 * pi, 181};
        const double nyquist = 0.5 / grid.snapshot_interval;
        c.doppler = {-nyquist, nyquist, 61};
        c.ris_angle = {-0.5 * pi, 0.5 * pi, 181};
        return c;
    }

    // ---- Classification ----------------------------------------------------------------

    double mode_variation(std::span<const std::complex<double>> a)
    {
        if (a.empty())
            return 0.0;
        const double n = static_cast<double>(a.size());
        double mean = 0.0;
        for (const cd &x : a)
            mean += std::abs(x);
        mean /= n;
        if (!(mean > 0.0))
            return 0.0;
        double var = 0.0;
        for (const cd &x : a)
            var += (std::abs(x) - mean) * (std::abs(x) - mean);
        var /= n;
        return var / (mean * mean);
    }

    bool classify_ris_paths(std::span<const std::complex<double>> mode_amplitudes, std::span<const TransmissionMode> modes,
                            double threshold)
    {
        if (modes.size() < 2 || mode_amplitudes.size() != modes.size())
            throw std::invalid_argument("RIS classification needs K >= 2 per-mode amplitudes");
        return mode_variation(mode_amplitudes) > threshold;
    }

    // ---- Estimator ---------------------------------------------------------------------

    std::vector<Mpc> EstimationResult::mpcs() const
    {
        std::vector<Mpc> out;
        out.reserve(paths.size());
        for (const EstimatedPath &p : paths)
            out.push_back(p.mpc);
        return out;
    }

    namespace
    {
        void estimate_ris_angles(EstimatedPath &path, std::span<const TransmissionMode> modes, const EstimatorConfig &config)
        {
            const SearchGrid &g = config.ris_angle;
            const std::span<const cd> alpha(path.mode_amplitudes);
            double inc = 0.0, ref = 0.0, best = -1.0;
            path.ris_ridge = false;
            if (config.known_incident_angle)
            {
                inc = *config.known_incident_angle;
                std::vector<double> f(g.points);
                for (std::size_t i = 0; i < g.points; ++i)
                    f[i] = ris_objective(alpha, modes, inc, g.at(i));
                const auto ib = static_cast<std::size_t>(std::max_element(f.begin(), f.end()) - f.begin());
                ref = g.at(ib);
                best = f[ib];
                if (ib > 0 && ib + 1 < g.points)
                {
                    const double v = ref + parabolic_offset(f[ib - 1], f[ib], f[ib + 1]) * g.step();
                    const double o = ris_objective(alpha, modes, inc, v);
                    if (o > best)
                    {
                        ref = v;
                        best = o;
                    }
                }
            }
            else
            {
                std::vector<double> f(g.points * g.points);
                for (std::size_t i = 0; i < g.points; ++i)
                    for (std::size_t j = 0; j < g.points; ++j)
                        f[i * g.points + j] = ris_objective(alpha, modes, g.at(i), g.at(j));
                const auto ib = static_cast<std::size_t>(std::max_element(f.begin(), f.end()) - f.begin());
                best = f[ib];
                inc = g.at(ib / g.points);
                ref = g.at(ib % g.points);
                // A far-field tile only sees sin(inc) + sin(ref): maxima form a ridge
                const std::size_t ties = static_cast<std::size_t>(
                    std::count_if(f.begin(), f.end(), [&](double v) { return v >= best * (1.0 - 1e-9); }));
                path.ris_ridge = ties > 1;
            }
            path.mpc.ris_incident_angle = wrap_two_pi(inc);
            path.mpc.ris_reflect_angle = wrap_two_pi(ref);

            cd num{0.0, 0.0};
            double den = 0.0;
            for (std::size_t k = 0; k < modes.size(); ++k)
            {
                const cd gk = modes[k].response(inc, ref);
                num += alpha[k] * std::conj(gk);
                den += std::norm(gk);
            }
            if (den > 0.0)
                path.mpc.amplitude = num / den;
        }

        void finalize_path(EstimatedPath &path, const PathState &st, std::span<const TransmissionMode> modes,
                           const EstimatorConfig &config)
        {
            path.mode_amplitudes = st.alpha;
            path.mpc.delay = std::max(0.0, st.tau);
            path.mpc.doppler = st.nu;
            path.mpc.aoa = wrap_two_pi(st.aoa);
            path.mpc.aod = wrap_two_pi(st.aod);
            cd mean{0.0, 0.0};
            for (const cd &a : st.alpha)
                mean += a;
            path.mpc.amplitude = mean / static_cast<double>(st.alpha.size());
            path.mode_variation = mode_variation(st.alpha);
            path.mpc.ris_interacting = modes.size() >= 2 && classify_ris_paths(st.alpha, modes, config.classification_threshold);
            path.mpc.ris_incident_angle.reset();
            path.mpc.ris_reflect_angle.reset();
            if (path.mpc.ris_interacting)
                estimate_ris_angles(path, modes, config);
        }
    }

    EstimationResult estimate_mpc_parameters(const Observation &obs, std::size_t model_order,
                                             std::span<const TransmissionMode> modes, const EstimatorConfig &config)
    {
        obs.grid.validate();
        if (model_order < 1)
            throw std::invalid_argument("model order must be at least 1");
        const Dims dims = dims_of(obs);
        const std::size_t identifiable = std::min({dims[1], dims[2], dims[3], dims[4]});
        if (model_order > identifiable)
            throw std::invalid_argument("model order exceeds the smallest observation dimension");
        if (modes.size() != obs.modes)
            throw std::invalid_argument("mode count does not match the observation");
        if (obs.data.size() != obs.modes * obs.grid.samples_per_mode())
            throw std::invalid_argument("observation data size does not match its grid");
        for (const SearchGrid *g : {&config.delay, &config.angle, &config.doppler, &config.ris_angle})
            if (g->points < 1)
                throw std::invalid_argument("search grids need at least one point");

        const Searcher searcher(obs.grid, config, dims);
        CVec residual = obs.data;
        std::vector<PathState> states;
        states.reserve(model_order);

        // Successive cancellation initialization
        for (std::size_t l = 0; l < model_order; ++l)
        {
            states.push_back(searcher.initialize(residual));
            searcher.accumulate_signal(residual, states.back(), -1.0);
        }

        EstimationResult result;
        result.paths.resize(model_order);
        result.residual_energy.push_back(energy(residual));

        constexpr std::array<std::size_t, 4> order{delay_axis, aoa_axis, aod_axis, doppler_axis};
        for (std::size_t it = 1; it <= config.max_iterations; ++it)
        {
            for (std::size_t l = 0; l < model_order; ++l)
            {
                PathState &st = states[l];
                searcher.accumulate_signal(residual, st, 1.0); // residual now holds this path's data
                for (std::size_t axis : order)
                    searcher.update(residual, st, axis);
                searcher.update_amplitudes(residual, st);
                searcher.accumulate_signal(residual, st, -1.0);
                finalize_path(result.paths[l], st, modes, config);
            }
            result.iterations = it;
            const double prev = result.residual_energy.back();
            const double cur = energy(residual);
            result.residual_energy.push_back(cur);
            if (!(prev > 0.0) || (prev - cur) <= config.tolerance * prev)
                break;
        }
        if (config.max_iterations == 0)
            for (std::size_t l = 0; l < model_order; ++l)
                finalize_path(result.paths[l], states[l], modes, config);
        return result;
    }

    // ---- RMSEE ------------------------------------------------------------------------

    ParameterSpans ParameterSpans::from_config(const EstimatorConfig &config)
    {
        ParameterSpans s;
        s.delay = config.delay.end - config.delay.begin;
        s.angle = config.angle.end - config.angle.begin;
        s.doppler = config.doppler.end - config.doppler.begin;
        s.ris_angle = config.ris_angle.end - config.ris_angle.begin;
        s.include_ris_incident = !config.known_incident_angle.has_value();
        return s;
    }

    void RmseeAccumulator::add(std::span<const Mpc> estimates, std::span<const Mpc> truth)
    {
        if (estimates.empty() || truth.empty())
            throw std::invalid_argument("RMSEE needs non-empty estimate and truth sets");
        if (estimates.size() != truth.size())
            throw std::invalid_argument("RMSEE needs as many estimates as truth paths");

        const std::size_t n = truth.size();
        auto distance = [&](const Mpc &e, const Mpc &t)
        {
            const double a = (e.delay - t.delay) / spans_.delay;
            const double b = wrap_pi(e.aoa - t.aoa) / spans_.angle;
            const double c = wrap_pi(e.aod - t.aod) / spans_.angle;
            const double d = (e.doppler - t.doppler) / spans_.doppler;
            return a * a + b * b + c * c + d * d;
        };

        std::vector<bool> used_e(n, false), used_t(n, false);
        for (std::size_t round = 0; round < n; ++round)
        {
            double best = std::numeric_limits<double>::infinity();
            std::size_t be = 0, bt = 0;
            for (std::size_t t = 0; t < n; ++t)
                for (std::size_t e = 0; e < n; ++e)
                    if (!used_t[t] && !used_e[e])
                    {
                        const double dist = distance(estimates[e], truth[t]);
                        if (dist < best)
                        {
                            best = dist;
                            be = e;
                            bt = t;
                        }
                    }
            used_e[be] = used_t[bt] = true;
            const Mpc &e = estimates[be], &t = truth[bt];
            const double dd = e.delay - t.delay;
            const double da = wrap_pi(e.aoa - t.aoa);
            const double dd2 = wrap_pi(e.aod - t.aod);
            const double dn = e.doppler - t.doppler;
            delay2_ += dd * dd;
            aoa2_ += da * da;
            aod2_ += dd2 * dd2;
            doppler2_ += dn * dn;
            ++count_;
            if (t.ris_interacting)
            {
                // An unflagged RIS path has no angle estimate: half the span is charged
                auto err = [&](const std::optional<double> &est, const std::optional<double> &tru)
                {
                    if (!est || !tru)
                        return 0.5 * spans_.ris_angle;
                    return wrap_pi(*est - *tru);
                };
                const double ei = err(e.ris_incident_angle, t.ris_incident_angle);
                const double er = err(e.ris_reflect_angle, t.ris_reflect_angle);
                inc2_ += ei * ei;
                ref2_ += er * er;
                ++ris_count_;
            }
        }
    }

    RmseeReport RmseeAccumulator::report() const
    {
        RmseeReport r;
        r.matched = count_;
        if (count_ == 0)
            return r;
        const double n = static_cast<double>(count_);
        r.delay = std::sqrt(delay2_ / n);
        r.aoa = std::sqrt(aoa2_ / n);
        r.aod = std::sqrt(aod2_ / n);
        r.doppler = std::sqrt(doppler2_ / n);
        std::vector<double> terms{delay2_ / n / (spans_.delay * spans_.delay), aoa2_ / n / (spans_.angle * spans_.angle),
                                  aod2_ / n / (spans_.angle * spans_.angle),
                                  doppler2_ / n / (spans_.doppler * spans_.doppler)};
        if (ris_count_ > 0)
        {
            const double m = static_cast<double>(ris_count_);
            r.ris_incident = std::sqrt(inc2_ / m);
            r.ris_reflect = std::sqrt(ref2_ / m);
            const double s2 = spans_.ris_angle * spans_.ris_angle;
            terms.push_back(ref2_ / m / s2);
            if (spans_.include_ris_incident)
                terms.push_back(inc2_ / m / s2);
        }
        double mean = 0.0;
        for (double t : terms)
            mean += t;
        r.aggregate = std::sqrt(mean / static_cast<double>(terms.size()));
        return r;
    }

    RmseeReport rmsee(std::span<const Mpc> estimates, std::span<const Mpc> truth, const ParameterSpans &spans)
    {
        RmseeAccumulator acc(spans);
        acc.add(estimates, truth);
        return acc.report();
    }

    // ---- Study --------------------------------------------------------------------------

    std::vector<Mpc> random_truth(const StudyConfig &config, const EstimatorConfig &est, std::uint64_t seed)
    {
        if (config.paths < 1 || config.ris_paths > config.paths)
            throw std::invalid_argument("study needs 1 <= paths and ris_paths <= paths");
        Rng rng(seed);
        const double delay_bin = est.delay.step();
        const double max_delay = 0.8 * (est.delay.end - est.delay.begin);
        const double max_angle = deg_to_rad(60.0);
        const double max_doppler = 0.6 * 0.5 / config.grid.snapshot_interval;
        const double min_angle_sep = deg_to_rad(10.0);

        std::vector<Mpc> out;
        for (std::size_t l = 0; l < config.paths; ++l)
        {
            Mpc m;
            for (int attempt = 0;; ++attempt)
            {
                if (attempt > 10000)
                    throw std::runtime_error("could not place separated paths; grid too small for the model order");
                m.delay = rng.uniform(2.0 * delay_bin, max_delay);
                const double aoa = rng.uniform(-max_angle, max_angle);
                const double aod = rng.uniform(-max_angle, max_angle);
                m.aoa = wrap_two_pi(aoa);
                m.aod = wrap_two_pi(aod);
                m.doppler = rng.uniform(-max_doppler, max_doppler);
                bool ok = true;
                for (const Mpc &o : out)
                    ok = ok && std::abs(o.delay - m.delay) >= 4.0 * delay_bin &&
                         std::abs(wrap_pi(o.aoa - m.aoa)) >= min_angle_sep &&
                         std::abs(wrap_pi(o.aod - m.aod)) >= min_angle_sep;
                if (ok)
                    break;
            }
            const double mag = l == 0 ? 1.0 : 0.8;
            m.amplitude = std::polar(mag, two_pi * rng.uniform());
            m.ris_interacting = l >= 1 && l <= config.ris_paths;
            if (m.ris_interacting)
            {
                m.ris_incident_angle = wrap_two_pi(config.incident_angle);
                m.ris_reflect_angle = wrap_two_pi(rng.uniform(config.steer_min, config.steer_max));
            }
            out.push_back(m);
        }
        return out;
    }

    std::vector<StudyCell> run_rmsee_study(const StudyConfig &config)
    {
        if (config.trials < 1)
            throw std::invalid_argument("study needs at least one trial");
        EstimatorConfig est = default_estimator_config(config.grid);
        est.known_incident_angle = config.incident_angle;
        const ParameterSpans spans = ParameterSpans::from_config(est);

        std::vector<std::vector<Mpc>> truths(config.trials);
        for (std::size_t t = 0; t < config.trials; ++t)
            truths[t] = random_truth(config, est, derive_seed(config.seed, t));

        std::vector<StudyCell> cells;
        for (std::size_t k : config.mode_counts)
        {
            const auto modes = make_transmission_modes(k, config.ris_elements, config.ris_pitch, config.incident_angle,
                                                       config.steer_min, config.steer_max);
            for (double snr : config.snr_db)
            {
                std::vector<std::vector<Mpc>> estimates(config.trials);
                parallel_for(config.trials, [&](std::size_t t)
                {
                    const Observation obs = synthesize_observations(truths[t], modes, config.grid, snr,
                                                                    derive_seed(config.seed ^ 0x6E6F697365ULL, t));
                    estimates[t] = estimate_mpc_parameters(obs, config.paths, modes, est).mpcs();
                });

                RmseeAccumulator acc(spans);
                std::size_t ris_total = 0, ris_hit = 0, plain_total = 0, plain_hit = 0;
                for (std::size_t t = 0; t < config.trials; ++t)
                {
                    acc.add(estimates[t], truths[t]);
                    // classification rates use the nearest estimate in delay
                    for (const Mpc &tr : truths[t])
                    {
                        const auto near = std::min_element(estimates[t].begin(), estimates[t].end(),
                                                           [&](const Mpc &a, const Mpc &b)
                                                           { return std::abs(a.delay - tr.delay) < std::abs(b.delay - tr.delay); });
                        if (tr.ris_interacting)
                        {
                            ++ris_total;
                            ris_hit += near->ris_interacting ? 1 : 0;
                        }
                        else
                        {
                            ++plain_total;
                            plain_hit += near->ris_interacting ? 1 : 0;
                        }
                    }
                }
                StudyCell cell;
                cell.modes = k;
                cell.snr_db = snr;
                cell.report = acc.report();
                cell.ris_detection_rate = ris_total ? static_cast<double>(ris_hit) / static_cast<double>(ris_total) : 0.0;
                cell.false_flag_rate = plain_total ? static_cast<double>(plain_hit) / static_cast<double>(plain_total) : 0.0;
                cells.push_back(cell);
            }
        }
        return cells;
    }
}
