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


#ifndef RISCHAN_ESTIMATION_HPP
#define RISCHAN_ESTIMATION_HPP

#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rischan::estimation
{
    // One propagation path. Angles are stored in [0, 2 pi); the line arrays and
    // the RIS only see sin(angle), so estimates live on [-pi/2, pi/2] before wrapping.
    struct Mpc
    {
        std::complex<double> amplitude{1.0, 0.0};
        double delay = 0.0;   // s
        double aoa = 0.0;     // rad, azimuth at the Rx array
        double aod = 0.0;     // rad, azimuth at the Tx array
        double doppler = 0.0; // Hz
        bool ris_interacting = false;
        std::optional<double> ris_incident_angle; // rad
        std::optional<double> ris_reflect_angle;  // rad
    };

    // One fixed RIS configuration used during sounding. The response is the
    // normalized far-field tile response of a line of elements:
    //   g(ti, tr) = (1/N) sum_n exp(j phase_n) exp(j 2 pi pitch x_n (sin ti + sin tr))
    // with x_n the centered element offset in element pitches.
    struct TransmissionMode
    {
        std::size_t index = 0;
        std::vector<double> phases;
        double pitch_wavelengths = 0.5;

        std::complex<double> response(double incident, double reflect) const;
    };

    // K modes whose phase profiles steer beams (for the given design incidence)
    // to K reflect angles spread uniformly over [steer_min, steer_max].
    std::vector<TransmissionMode> make_transmission_modes(std::size_t count, std::size_t elements, double pitch_wavelengths,
                                                          double design_incidence, double steer_min, double steer_max);

    struct ObservationGrid
    {
        std::size_t subcarriers = 64;
        double subcarrier_spacing = 1e6; // Hz
        std::size_t snapshots = 16;
        double snapshot_interval = 1e-3; // s
        std::size_t rx_elements = 8;
        std::size_t tx_elements = 8;
        double rx_pitch = 0.5; // wavelengths
        double tx_pitch = 0.5;

        std::size_t samples_per_mode() const { return subcarriers * snapshots * rx_elements * tx_elements; }
        void validate() const;
    };

    // Y indexed (mode k, subcarrier s, snapshot p, rx u, tx v), v fastest
    struct Observation
    {
        ObservationGrid grid;
        std::size_t modes = 0;
        std::vector<std::complex<double>> data;
        double snr_db = std::numeric_limits<double>::infinity();
        double noise_variance = 0.0;
        std::uint64_t seed = 0;
        std::vector<std::string> warnings;

        std::size_t index(std::size_t k, std::size_t s, std::size_t p, std::size_t u, std::size_t v) const
        {
            return (((k * grid.subcarriers + s) * grid.snapshots + p) * grid.rx_elements + u) * grid.tx_elements + v;
        }
    };

    // Noise is drawn per mode from derive_seed(seed, k), so the first K modes of
    // a K+1-mode observation see the same noise. snr_db = +inf disables noise.
    Observation synthesize_observations(std::span<const Mpc> truth, std::span<const TransmissionMode> modes,
                                        const ObservationGrid &grid, double snr_db, std::uint64_t seed);

    struct SearchGrid
    {
        double begin = 0.0;
        double end = 1.0;
        std::size_t points = 2;

        double step() const { return points > 1 ? (end - begin) / static_cast<double>(points - 1) : 0.0; }
        double at(std::size_t i) const { return begin + static_cast<double>(i) * step(); }
    };

    struct EstimatorConfig
    {
        SearchGrid delay;     // s
        SearchGrid angle;     // rad, signed; used for AoA and AoD
        SearchGrid doppler;   // Hz
        SearchGrid ris_angle; // rad, signed
        std::optional<double> known_incident_angle; // rad, signed; searches the reflect angle only
        std::size_t max_iterations = 20;
        double tolerance = 1e-4;
        double classification_threshold = 0.05;
        std::size_t init_snapshots = 2; // snapshots used by the non-coherent delay search at initialization
    };

    // 128 delay points over [0, 1/df), 181 angles over [-90, 90] deg,
    // 61 Doppler points over [-1/(2T), 1/(2T)]
    EstimatorConfig default_estimator_config(const ObservationGrid &grid);

    struct EstimatedPath
    {
        Mpc mpc;
        std::vector<std::complex<double>> mode_amplitudes;
        double mode_variation = 0.0; // Var_k|a_k| / mean_k|a_k|^2
        bool ris_ridge = false;      // RIS angle objective maximized on a ridge, pair not unique
    };

    struct EstimationResult
    {
        std::vector<EstimatedPath> paths;
        std::size_t iterations = 0;
        std::vector<double> residual_energy; // after initialization and after every outer iteration

        std::vector<Mpc> mpcs() const;
    };

    // SAGE-style estimator: successive 1-D grid searches with one parabolic
    // refinement per coordinate, per-mode least-squares amplitudes, RIS path
    // classification and RIS angle search for flagged paths.
    EstimationResult estimate_mpc_parameters(const Observation &obs, std::size_t model_order,
                                             std::span<const TransmissionMode> modes, const EstimatorConfig &config);

    // Var_k(|a_k|) / mean_k(|a_k|)^2 (population variance)
    double mode_variation(std::span<const std::complex<double>> mode_amplitudes);

    // Flags a path whose amplitude varies across modes beyond the threshold. Needs K >= 2.
    bool classify_ris_paths(std::span<const std::complex<double>> mode_amplitudes, std::span<const TransmissionMode> modes,
                            double threshold = 0.05);

    // ---- RMSEE ------------------------------------------------------------------

    // Normalization spans (grid extents) for each parameter
    struct ParameterSpans
    {
        double delay = 1e-6;
        double angle = 3.14159265358979323846;
        double doppler = 1000.0;
        double ris_angle = 3.14159265358979323846;
        bool include_ris_incident = true;

        static ParameterSpans from_config(const EstimatorConfig &config);
    };

    struct RmseeReport
    {
        double delay = 0.0;   // s
        double aoa = 0.0;     // rad
        double aod = 0.0;     // rad
        double doppler = 0.0; // Hz
        double ris_incident = 0.0;
        double ris_reflect = 0.0;
        double aggregate = 0.0; // root of the mean normalized MSE
        std::size_t matched = 0;
    };

    // Accumulates squared errors over many trials; pairs are matched greedily
    // in span-normalized (delay, aoa, aod, doppler) space.
    class RmseeAccumulator
    {
    public:
        explicit RmseeAccumulator(ParameterSpans spans = {}) : spans_(spans) {}

        void add(std::span<const Mpc> estimates, std::span<const Mpc> truth);
        RmseeReport report() const;

    private:
        ParameterSpans spans_;
        double delay2_ = 0.0, aoa2_ = 0.0, aod2_ = 0.0, doppler2_ = 0.0, inc2_ = 0.0, ref2_ = 0.0;
        std::size_t count_ = 0, ris_count_ = 0;
    };

    RmseeReport rmsee(std::span<const Mpc> estimates, std::span<const Mpc> truth, const ParameterSpans &spans = {});

    // ---- RMSEE study (K modes x SNR) --------------------------------------------------

    struct StudyConfig
    {
        std::vector<std::size_t> mode_counts{4, 5, 6};
        std::vector<double> snr_db{0.0, 10.0, 20.0};
        std::size_t trials = 100;
        std::size_t paths = 3;     // model order
        std::size_t ris_paths = 1; // how many of them interact with the RIS
        ObservationGrid grid;
        std::size_t ris_elements = 4;
        double ris_pitch = 0.5;               // wavelengths
        double incident_angle = 0.3490658503988659; // 20 deg, known to the estimator
        double steer_min = -1.0471975511965976;    // -60 deg
        double steer_max = 1.0471975511965976;     // 60 deg
        std::uint64_t seed = 1;
    };

    struct StudyCell
    {
        std::size_t modes = 0;
        double snr_db = 0.0;
        RmseeReport report;
        double ris_detection_rate = 0.0;  // RIS truth paths flagged
        double false_flag_rate = 0.0;     // non-RIS truth paths flagged
    };

    // Random truth for one trial: delays, angles and Doppler drawn uniformly
    // with pairwise separations of at least 4 delay bins and 10 deg in AoA and AoD.
    std::vector<Mpc> random_truth(const StudyConfig &config, const EstimatorConfig &est, std::uint64_t seed);

    // Every cell reuses the same truth and noise streams per trial.
    std::vector<StudyCell> run_rmsee_study(const StudyConfig &config);
}

#endif
