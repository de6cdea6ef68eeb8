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


#ifndef RISCHAN_SMALLSCALE_HPP
#define RISCHAN_SMALLSCALE_HPP

#include "rischan/scene.hpp"

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rischan::smallscale
{
    using Matrix = Eigen::MatrixXcd;
    using Vector = Eigen::VectorXcd;

    // ---- Channel composition -----------------------------------------------------

    struct SubChannels
    {
        Matrix h_direct; // Nr x Nt
        Matrix h_tx_ris; // Q x Nt
        Matrix h_ris_rx; // Nr x Q
        Vector theta;    // Q reflection coefficients, |theta| <= 1
    };

    // H = h_direct + h_ris_rx diag(theta) h_tx_ris
    Matrix cascaded_channel(const SubChannels &sub);

    // H = sum_q theta_q a_q b_q^T, a_q of length Nr and b_q of length Nt
    Matrix keyhole_channel(std::span<const Vector> rx_responses, std::span<const Vector> tx_responses, const Vector &theta);

    // ---- Time-varying ray simulator --------------------------------------------------

    struct Ray
    {
        double power = 0.0; // weight of this ray in the scenario's unit power budget
        double aoa = 0.0;   // radians, azimuth of arrival
        double delay = 0.0; // seconds
        bool ris = false;   // relayed by the RIS
    };

    // What the "RIS off" run does with RIS-relayed rays
    enum class Baseline
    {
        static_ris, // RIS present with a fixed configuration: rays evolve freely
        no_ris      // RIS rays removed
    };

    struct FadingScenario
    {
        std::string id = "custom";
        double frequency = 5.4e9;
        double speed = 0.0;   // m/s
        double heading = 0.0; // radians
        double sample_interval = 1e-3;
        std::size_t snapshots = 100;
        std::size_t runs = 1;
        std::vector<Ray> rays; // powers sum to 1
        bool ris_tracking = false;
        Baseline baseline = Baseline::static_ris;
        double k_factor = 0.0; // linear LOS / NLOS ratio; 0 disables the LOS ray
        double los_aoa = 0.0;
        bool random_rotation = false; // rotate the whole ray set uniformly per run
        std::uint64_t seed = 0;

        double max_doppler() const;
        // Throws std::invalid_argument on a violated invariant or sampling guard
        void validate() const;

        // count equal-power rays at uniformly spaced AoAs, no RIS, random rotation per run
        static FadingScenario isotropic_ring(std::size_t count, double frequency, double speed, double sample_interval,
                                             std::size_t snapshots, std::size_t runs, std::uint64_t seed);

        // LOS plus RIS-relayed rays plus diffuse scatterers. Used for the
        // tracking-on/off ACF comparison.
        static FadingScenario ris_assisted(double frequency, double speed, double sample_interval, std::size_t snapshots,
                                           std::size_t runs, std::uint64_t seed);
    };

    struct ChannelSeries
    {
        std::string scenario_id;
        std::uint64_t seed = 0;
        double sample_interval = 0.0;
        std::size_t runs = 0;
        std::size_t steps = 0;
        // SISO samples, run-major: samples[run * steps + step]
        std::vector<std::complex<double>> samples;

        std::complex<double> at(std::size_t run, std::size_t step) const { return samples[run * steps + step]; }
    };

    ChannelSeries simulate_time_varying_channel(const FadingScenario &scenario);

    // Normalized temporal ACF averaged over time origin and runs; acf[0] = 1
    std::vector<std::complex<double>> temporal_acf(const ChannelSeries &series, std::size_t max_lag);

    // ---- Channel metrics ---------------------------------------------------------------

    struct Tap
    {
        double delay = 0.0; // s
        double power = 0.0; // linear
    };

    // RMS width of the run-averaged periodogram, Hz
    double doppler_spread(const ChannelSeries &series);

    // Power-weighted standard deviation of tap delays, s
    double rms_delay_spread(std::span<const Tap> taps);

    struct MatrixMetrics
    {
        std::vector<double> singular_values;
        std::size_t effective_rank = 0; // count of sigma >= threshold * sigma_max
        double condition_number = 0.0;  // sigma_max / sigma_min, inf if singular
    };

    MatrixMetrics matrix_metrics(const Matrix &h, double relative_threshold = 1e-3);

    struct ChannelMetrics
    {
        std::optional<double> doppler_spread;
        std::optional<double> rms_delay_spread;
        std::optional<std::size_t> effective_rank;
        std::optional<double> condition_number;
    };

    // Any subset of inputs; at least one must be given
    ChannelMetrics channel_metrics(const ChannelSeries *series, std::span<const Tap> taps, const Matrix *h);

    // ---- Channel hardening ----------------------------------------------------------------

    enum class LinkModel
    {
        unit,    // h = 1 on every link
        rayleigh // i.i.d. CN(0, 1)
    };

    enum class PhaseConfig
    {
        co_phased,
        random
    };

    struct HardeningPoint
    {
        std::size_t q = 0;
        double mean_snr = 0.0;
        double snr_over_q2 = 0.0; // mean(SNR / Q^2)
        double var_ratio = 0.0;   // Var[SNR] / E[SNR]^2
    };

    // SNR = |sum_q h_ris_rx,q theta_q h_tx_ris,q|^2 with unit noise. runs >= 100.
    std::vector<HardeningPoint> hardening_statistics(LinkModel links, PhaseConfig phases, std::span<const std::size_t> q_values,
                                                     std::size_t runs, std::uint64_t seed);

    // ---- Reciprocity ------------------------------------------------------------------------

    struct ReciprocityReport
    {
        std::vector<double> forward;
        std::vector<double> reverse;
        double max_abs_diff = 0.0;
    };

    using PathLossFunction = std::function<double(const RisPanel &, const Scene &)>;

    // Evaluates the model on the scene and on the scene rebuilt with Tx and Rx
    // (and their gains) swapped, at the panel's fixed phase profile.
    ReciprocityReport reciprocity_check(const PathLossFunction &model, const Scene &scene, const RisPanel &panel);

    // Reverse link composed from transposed sub-channels, compared with H^T.
    // Values are interleaved real/imag parts.
    ReciprocityReport reciprocity_check(const SubChannels &sub);
}

#endif
