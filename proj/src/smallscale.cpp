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


#include "rischan/smallscale.hpp"
#include "rischan/parallel.hpp"
#include "rischan/random.hpp"
#include "rischan/units.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace rischan::smallscale
{
    // ---- Channel composition -----------------------------------------------------

    Matrix cascaded_channel(const SubChannels &sub)
    {
        const Eigen::Index q = sub.theta.size();
        if (sub.h_tx_ris.rows() != q || sub.h_ris_rx.cols() != q)
            throw std::invalid_argument("cascaded channel: RIS dimension mismatch");
        if (sub.h_direct.rows() != sub.h_ris_rx.rows() || sub.h_direct.cols() != sub.h_tx_ris.cols())
            throw std::invalid_argument("cascaded channel: Tx/Rx dimension mismatch");
        for (Eigen::Index i = 0; i < q; ++i)
            if (std::abs(sub.theta[i]) > 1.0 + 1e-12)
                throw std::invalid_argument("cascaded channel: |theta| exceeds 1 for a passive RIS");
        return sub.h_direct + sub.h_ris_rx * sub.theta.asDiagonal() * sub.h_tx_ris;
    }

    Matrix keyhole_channel(std::span<const Vector> rx_responses, std::span<const Vector> tx_responses, const Vector &theta)
    {
        const auto q = static_cast<std::size_t>(theta.size());
        if (q < 1)
            throw std::invalid_argument("keyhole channel needs at least one RIS element");
        if (rx_responses.size() != q || tx_responses.size() != q)
            throw std::invalid_argument("keyhole channel: response count does not match theta");
        const Eigen::Index nr = rx_responses[0].size(), nt = tx_responses[0].size();
        Matrix h = Matrix::Zero(nr, nt);
        for (std::size_t i = 0; i < q; ++i)
        {
            if (rx_responses[i].size() != nr || tx_responses[i].size() != nt)
                throw std::invalid_argument("keyhole channel: inconsistent response lengths");
            h += theta[static_cast<Eigen::Index>(i)] * rx_responses[i] * tx_responses[i].transpose();
        }
        return h;
    }

    // ---- Time-varying ray simulator --------------------------------------------------

    double FadingScenario::max_doppler() const
    {
        return std::abs(speed) / wavelength(frequency);
    }

    void FadingScenario::validate() const
    {
        if (!(frequency > 0.0))
            throw std::invalid_argument("fading scenario: frequency must be positive");
        if (!(speed >= 0.0) || !std::isfinite(speed))
            throw std::invalid_argument("fading scenario: speed must be non-negative");
        if (!(sample_interval > 0.0))
            throw std::invalid_argument("fading scenario: sample interval must be positive");
        if (snapshots < 1 || runs < 1)
            throw std::invalid_argument("fading scenario: needs at least one snapshot and one run");
        if (rays.empty())
            throw std::invalid_argument("fading scenario: ray set is empty");
        double total = 0.0;
        for (const Ray &r : rays)
        {
            if (!(r.power >= 0.0))
                throw std::invalid_argument("fading scenario: ray powers must be non-negative");
            total += r.power;
        }
        if (std::abs(total - 1.0) > 1e-9)
            throw std::invalid_argument("fading scenario: ray powers must sum to 1");
        if (!(k_factor >= 0.0))
            throw std::invalid_argument("fading scenario: K-factor must be non-negative");
        const double fd = max_doppler();
        if (fd > 0.0 && sample_interval > 1.0 / (8.0 * fd) * (1.0 + 1e-12))
            throw std::invalid_argument("fading scenario: sample interval exceeds 1/(8 f_d,max)");
    }

    FadingScenario FadingScenario::isotropic_ring(std::size_t count, double frequency, double speed, double sample_interval,
                                                  std::size_t snapshots, std::size_t runs, std::uint64_t seed)
    {
        FadingScenario s;
        s.id = "isotropic-ring";
        s.frequency = frequency;
        s.speed = speed;
        s.sample_interval = sample_interval;
        s.snapshots = snapshots;
        s.runs = runs;
        s.seed = seed;
        s.random_rotation = true;
        for (std::size_t i = 0; i < count; ++i)
            s.rays.push_back({1.0 / static_cast<double>(count), two_pi * static_cast<double>(i) / static_cast<double>(count), 0.0, false});
        return s;
    }

    FadingScenario FadingScenario::ris_assisted(double frequency, double speed, double sample_interval, std::size_t snapshots,
                                                std::size_t runs, std::uint64_t seed)
    {
        FadingScenario s;
        s.id = "ris-assisted";
        s.frequency = frequency;
        s.speed = speed;
        s.sample_interval = sample_interval;
        s.snapshots = snapshots;
        s.runs = runs;
        s.seed = seed;
        s.k_factor = 0.5;
        s.los_aoa = 0.0;
        // NLOS budget: four RIS-relayed rays (60 %) and twelve diffuse rays (40 %)
        const double ris_aoa_deg[] = {35.0, 80.0, 145.0, 250.0};
        for (double a : ris_aoa_deg)
            s.rays.push_back({0.15, deg_to_rad(a), 0.0, true});
        for (int i = 0; i < 12; ++i)
            s.rays.push_back({0.4 / 12.0, deg_to_rad(7.0 + 30.0 * i), 0.0, false});
        return s;
    }

    namespace
    {
        struct ActiveRay
        {
            double amplitude;
            double aoa;
            bool ris;
        };

        std::vector<ActiveRay> active_rays(const FadingScenario &s)
        {
            std::vector<ActiveRay> out;
            const double nlos_scale = 1.0 / (1.0 + s.k_factor);
            if (s.k_factor > 0.0)
                out.push_back({std::sqrt(s.k_factor * nlos_scale), s.los_aoa, false});
            for (const Ray &r : s.rays)
            {
                if (r.ris && !s.ris_tracking && s.baseline == Baseline::no_ris)
                    continue;
                out.push_back({std::sqrt(r.power * nlos_scale), r.aoa, r.ris});
            }
            return out;
        }

        // Strongest ray that is not relayed by the RIS (any ray if all are)
        std::size_t strongest_ray(const std::vector<ActiveRay> &rays)
        {
            std::size_t best = rays.size();
            for (std::size_t i = 0; i < rays.size(); ++i)
                if (!rays[i].ris && (best == rays.size() || rays[i].amplitude > rays[best].amplitude))
                    best = i;
            if (best == rays.size())
                for (std::size_t i = 0; i < rays.size(); ++i)
                    if (best == rays.size() || rays[i].amplitude > rays[best].amplitude)
                        best = i;
            return best;
        }
    }

    ChannelSeries simulate_time_varying_channel(const FadingScenario &scenario)
    {
        scenario.validate();
        const std::vector<ActiveRay> rays = active_rays(scenario);
        const std::size_t anchor = strongest_ray(rays);
        const double fd_max = scenario.max_doppler();

        ChannelSeries out;
        out.scenario_id = scenario.id;
        out.seed = scenario.seed;
        out.sample_interval = scenario.sample_interval;
        out.runs = scenario.runs;
        out.steps = scenario.snapshots;
        out.samples.assign(out.runs * out.steps, {0.0, 0.0});

        parallel_for(scenario.runs, [&](std::size_t run)
        {
            Rng rng(derive_seed(scenario.seed, run));
            const double rotation = scenario.random_rotation ? two_pi * rng.uniform() : 0.0;
            std::vector<double> doppler(rays.size()), phase0(rays.size());
            for (std::size_t l = 0; l < rays.size(); ++l)
            {
                doppler[l] = fd_max * std::cos(rays[l].aoa + rotation - scenario.heading);
                phase0[l] = two_pi * rng.uniform();
            }
            for (std::size_t p = 0; p < scenario.snapshots; ++p)
            {
                const double t = static_cast<double>(p) * scenario.sample_interval;
                const double anchor_phase = two_pi * doppler[anchor] * t + phase0[anchor];
                std::complex<double> h{0.0, 0.0};
                for (std::size_t l = 0; l < rays.size(); ++l)
                {
                    const double ph = (scenario.ris_tracking && rays[l].ris)
                                          ? anchor_phase
                                          : two_pi * doppler[l] * t + phase0[l];
                    h += std::polar(rays[l].amplitude, ph);
                }
                out.samples[run * out.steps + p] = h;
            }
        });
        return out;
    }

    std::vector<std::complex<double>> temporal_acf(const ChannelSeries &series, std::size_t max_lag)
    {
        if (series.steps == 0 || max_lag >= series.steps)
            throw std::invalid_argument("temporal ACF: max_lag must be below the series length");
        CompensatedSum<double> power;
        for (const auto &h : series.samples)
            power.add(std::norm(h));
        const double mean_power = power.value() / static_cast<double>(series.samples.size());
        if (!(mean_power > 0.0))
            throw std::invalid_argument("temporal ACF: series is identically zero");

        std::vector<std::complex<double>> acf(max_lag + 1);
        for (std::size_t k = 0; k <= max_lag; ++k)
        {
            CompensatedSum<std::complex<double>> s;
            const std::size_t n = series.steps - k;
            for (std::size_t r = 0; r < series.runs; ++r)
                for (std::size_t t = 0; t < n; ++t)
                    s.add(series.at(r, t) * std::conj(series.at(r, t + k)));
            acf[k] = s.value() / (static_cast<double>(n * series.runs) * mean_power);
        }
        acf[0] = {1.0, 0.0};
        return acf;
    }

    // ---- Channel metrics ---------------------------------------------------------------

    double doppler_spread(const ChannelSeries &series)
    {
        if (series.steps < 2)
            throw std::invalid_argument("Doppler spread needs at least two samples per run");
        const std::size_t n = series.steps;
        Eigen::FFT<double> fft;
        std::vector<double> psd(n, 0.0);
        std::vector<std::complex<double>> in(n), spec;
        for (std::size_t r = 0; r < series.runs; ++r)
        {
            for (std::size_t t = 0; t < n; ++t)
                in[t] = series.at(r, t);
            fft.fwd(spec, in);
            for (std::size_t k = 0; k < n; ++k)
                psd[k] += std::norm(spec[k]);
        }
        // Bin k carries frequency k/(n T); upper half maps to negative frequencies
        const double df = 1.0 / (static_cast<double>(n) * series.sample_interval);
        auto freq = [&](std::size_t k)
        {
            const auto kk = static_cast<double>(k);
            return (2 * k < n ? kk : kk - static_cast<double>(n)) * df;
        };
        double p = 0.0, m1 = 0.0;
        for (std::size_t k = 0; k < n; ++k)
        {
            p += psd[k];
            m1 += psd[k] * freq(k);
        }
        if (!(p > 0.0))
            throw std::invalid_argument("Doppler spread of an all-zero series is undefined");
        const double mean = m1 / p;
        double m2 = 0.0;
        for (std::size_t k = 0; k < n; ++k)
            m2 += psd[k] * (freq(k) - mean) * (freq(k) - mean);
        return std::sqrt(m2 / p);
    }

    double rms_delay_spread(std::span<const Tap> taps)
    {
        if (taps.empty())
            throw std::invalid_argument("delay spread needs at least one tap");
        double p = 0.0, m1 = 0.0;
        for (const Tap &t : taps)
        {
            if (!(t.power >= 0.0))
                throw std::invalid_argument("tap powers must be non-negative");
            p += t.power;
            m1 += t.power * t.delay;
        }
        if (!(p > 0.0))
            throw std::invalid_argument("delay spread of zero-power taps is undefined");
        const double mean = m1 / p;
        double m2 = 0.0;
        for (const Tap &t : taps)
            m2 += t.power * (t.delay - mean) * (t.delay - mean);
        return std::sqrt(std::max(0.0, m2 / p));
    }

    MatrixMetrics matrix_metrics(const Matrix &h, double relative_threshold)
    {
        if (h.size() == 0)
            throw std::invalid_argument("matrix metrics need a non-empty matrix");
        Eigen::JacobiSVD<Matrix> svd(h);
        MatrixMetrics m;
        const auto &sv = svd.singularValues();
        m.singular_values.assign(sv.data(), sv.data() + sv.size());
        const double smax = sv.size() ? sv(0) : 0.0;
        const double smin = sv.size() ? sv(sv.size() - 1) : 0.0;
        for (double s : m.singular_values)
            if (smax > 0.0 && s >= relative_threshold * smax)
                ++m.effective_rank;
        m.condition_number = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
        return m;
    }

    ChannelMetrics channel_metrics(const ChannelSeries *series, std::span<const Tap> taps, const Matrix *h)
    {
        if (!series && taps.empty() && !h)
            throw std::invalid_argument("channel metrics need a series, a tap set or a matrix");
        ChannelMetrics out;
        if (series)
            out.doppler_spread = doppler_spread(*series);
        if (!taps.empty())
            out.rms_delay_spread = rms_delay_spread(taps);
        if (h)
        {
            const MatrixMetrics mm = matrix_metrics(*h);
            out.effective_rank = mm.effective_rank;
            out.condition_number = mm.condition_number;
        }
        return out;
    }

    // ---- Channel hardening ----------------------------------------------------------------

    std::vector<HardeningPoint> hardening_statistics(LinkModel links, PhaseConfig phases, std::span<const std::size_t> q_values,
                                                     std::size_t runs, std::uint64_t seed)
    {
        if (runs < 100)
            throw std::invalid_argument("hardening statistics need at least 100 runs");
        std::vector<HardeningPoint> out;
        for (std::size_t q : q_values)
        {
            if (q < 1)
                throw std::invalid_argument("hardening statistics: Q must be positive");
            std::vector<double> snr(runs);
            const std::uint64_t q_seed = derive_seed(seed, q);
            parallel_for(runs, [&](std::size_t run)
            {
                Rng rng(derive_seed(q_seed, run));
                std::complex<double> coherent{0.0, 0.0};
                double aligned = 0.0;
                for (std::size_t i = 0; i < q; ++i)
                {
                    std::complex<double> g{1.0, 0.0}, h{1.0, 0.0};
                    if (links == LinkModel::rayleigh)
                    {
                        g = rng.complex_normal();
                        h = rng.complex_normal();
                    }
                    if (phases == PhaseConfig::co_phased)
                        aligned += std::abs(g) * std::abs(h);
                    else
                        coherent += g * h * std::polar(1.0, two_pi * rng.uniform());
                }
                snr[run] = phases == PhaseConfig::co_phased ? aligned * aligned : std::norm(coherent);
            });

            CompensatedSum<double> s1, s2;
            for (double v : snr)
                s1.add(v);
            const double mean = s1.value() / static_cast<double>(runs);
            for (double v : snr)
                s2.add((v - mean) * (v - mean));
            const double var = s2.value() / static_cast<double>(runs - 1);
            const double q2 = static_cast<double>(q) * static_cast<double>(q);
            out.push_back({q, mean, mean / q2, mean > 0.0 ? var / (mean * mean) : 0.0});
        }
        return out;
    }

    // ---- Reciprocity ------------------------------------------------------------------------

    ReciprocityReport reciprocity_check(const PathLossFunction &model, const Scene &scene, const RisPanel &panel)
    {
        const Scene reverse = build_scene(scene.rx, scene.tx, panel, scene.pose, scene.frequency);
        ReciprocityReport r;
        r.forward.push_back(model(panel, scene));
        r.reverse.push_back(model(panel, reverse));
        const double f = r.forward[0], b = r.reverse[0];
        r.max_abs_diff = (f == b) ? 0.0 : std::abs(f - b);
        return r;
    }

    ReciprocityReport reciprocity_check(const SubChannels &sub)
    {
        const Matrix forward = cascaded_channel(sub);
        SubChannels rev;
        rev.h_direct = sub.h_direct.transpose();
        rev.h_tx_ris = sub.h_ris_rx.transpose();
        rev.h_ris_rx = sub.h_tx_ris.transpose();
        rev.theta = sub.theta;
        const Matrix reverse = cascaded_channel(rev).transpose();

        ReciprocityReport r;
        for (Eigen::Index j = 0; j < forward.cols(); ++j)
            for (Eigen::Index i = 0; i < forward.rows(); ++i)
            {
                r.forward.push_back(forward(i, j).real());
                r.forward.push_back(forward(i, j).imag());
                r.reverse.push_back(reverse(i, j).real());
                r.reverse.push_back(reverse(i, j).imag());
                r.max_abs_diff = std::max(r.max_abs_diff, std::abs(forward(i, j) - reverse(i, j)));
            }
        return r;
    }
}
