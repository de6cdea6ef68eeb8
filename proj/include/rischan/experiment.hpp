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


#ifndef RISCHAN_EXPERIMENT_HPP
#define RISCHAN_EXPERIMENT_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace rischan::experiment
{
    inline constexpr std::string_view version = "1.0.0";

    // Invalid configuration; the message starts with the JSON path of the offending field
    class ConfigError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    enum class Kind
    {
        pathloss,
        sweep_ellipse,
        phase_gain,
        acf,
        hardening,
        estimate,
        metrics
    };

    std::string_view to_string(Kind kind);
    std::optional<Kind> kind_from_string(std::string_view name);

    using Vec3 = std::array<double, 3>;

    // All config structs keep file units (m, Hz, dBi, dBm, degrees).

    struct PolarConfig
    {
        double distance_m = 1.0;
        double theta_deg = 0.0; // from the RIS normal
        double phi_deg = 0.0;   // from the RIS x axis
        bool operator==(const PolarConfig &) const = default;
    };

    // Either an absolute position or a position relative to the RIS frame
    struct AntennaConfig
    {
        std::optional<Vec3> position_m;
        std::optional<PolarConfig> polar;
        double gain_dbi = 0.0;
        bool operator==(const AntennaConfig &) const = default;
    };

    struct RisPoseConfig
    {
        Vec3 center_m{0.0, 0.0, 0.0};
        Vec3 normal{0.0, 0.0, 1.0};
        Vec3 x_axis{1.0, 0.0, 0.0};
        bool operator==(const RisPoseConfig &) const = default;
    };

    struct SceneConfig
    {
        double frequency_hz = 0.0;
        AntennaConfig tx, rx;
        RisPoseConfig ris;
        bool operator==(const SceneConfig &) const = default;
    };

    struct PanelConfig
    {
        std::size_t m = 1, n = 1;
        double dx_m = 0.01, dy_m = 0.01;
        double pattern_exponent = 3.0;
        std::optional<double> element_gain; // linear; 2(q+1) when absent
        double amplitude = 1.0;
        double efficiency = 1.0;
        std::optional<int> quantization_bits;
        bool operator==(const PanelConfig &) const = default;
    };

    struct ProfileConfig
    {
        std::string label;
        std::string kind = "UNIFORM";
        double value_deg = 0.0;                // UNIFORM
        std::optional<double> target_theta_deg; // FAR_FIELD_BEAM; defaults to the Rx direction
        std::optional<double> target_phi_deg;
        std::optional<Vec3> focus_m;    // NEAR_FIELD_FOCUS; defaults to the Rx position
        std::vector<double> custom_deg; // CUSTOM, M x N row-major
        std::optional<int> quantization_bits;
        bool operator==(const ProfileConfig &) const = default;
    };

    struct ModelConfig
    {
        std::vector<std::string> models;
        std::optional<double> distance_m;
        std::optional<double> plate_a_m, plate_b_m;
        std::optional<double> design_reflection_deg;
        std::optional<std::array<double, 2>> tile_response; // re, im
        std::optional<std::size_t> element;
        double tx_power_dbm = 0.0;
        std::optional<ProfileConfig> profile; // applied to element-sum models
        bool operator==(const ModelConfig &) const = default;
    };

    struct SweepConfig
    {
        double focal_distance_m = 200.0;
        double semi_major_m = 200.0;
        double d1_begin_m = 140.0;
        double d1_end_m = 200.0;
        std::size_t steps = 61;
        Vec3 ris_normal{0.0, -1.0, 0.0};
        Vec3 ris_x_axis{1.0, 0.0, 0.0};
        bool operator==(const SweepConfig &) const = default;
    };

    struct RayConfig
    {
        double power = 0.0;
        double aoa_deg = 0.0;
        double delay_s = 0.0;
        bool ris = false;
        bool operator==(const RayConfig &) const = default;
    };

    struct FadingConfig
    {
        std::string preset = "ris_assisted"; // ris_assisted | isotropic_ring | custom
        double frequency_hz = 5.4e9;
        double speed_mps = 3.0;
        double heading_deg = 0.0;
        double sample_interval_s = 1e-3;
        std::size_t snapshots = 200;
        std::size_t runs = 200;
        std::size_t max_lag = 50;
        std::size_t ring_rays = 32;        // isotropic_ring
        std::string baseline = "static_ris"; // static_ris | no_ris
        double k_factor = 0.0;             // custom
        double los_aoa_deg = 0.0;          // custom
        bool random_rotation = false;      // custom
        std::vector<RayConfig> rays;       // custom
        bool operator==(const FadingConfig &) const = default;
    };

    struct HardeningConfig
    {
        std::string links = "rayleigh"; // rayleigh | unit
        std::vector<std::string> phases{"co_phased", "random"};
        std::vector<std::size_t> q_values{16, 64, 256, 1024, 4096};
        std::size_t runs = 200;
        bool operator==(const HardeningConfig &) const = default;
    };

    struct GridConfig
    {
        std::size_t subcarriers = 64;
        double subcarrier_spacing_hz = 1e6;
        std::size_t snapshots = 16;
        double snapshot_interval_s = 1e-3;
        std::size_t rx_elements = 8;
        std::size_t tx_elements = 8;
        double rx_pitch_wavelengths = 0.5;
        double tx_pitch_wavelengths = 0.5;
        bool operator==(const GridConfig &) const = default;
    };

    struct EstimationConfig
    {
        std::vector<std::size_t> mode_counts{4, 5, 6};
        std::vector<double> snr_db{0.0, 10.0, 20.0};
        std::size_t trials = 100;
        std::size_t paths = 3;
        std::size_t ris_paths = 1;
        GridConfig grid;
        std::size_t ris_elements = 4;
        double ris_pitch_wavelengths = 0.5;
        double incident_angle_deg = 20.0;
        double steer_min_deg = -60.0;
        double steer_max_deg = 60.0;
        bool operator==(const EstimationConfig &) const = default;
    };

    struct TapConfig
    {
        double delay_s = 0.0;
        double power = 0.0;
        bool operator==(const TapConfig &) const = default;
    };

    struct MetricsConfig
    {
        // doppler_spread, rms_delay_spread, effective_rank, condition_number;
        // defaults to every metric whose input is present
        std::vector<std::string> requested;
        std::optional<FadingConfig> fading;
        std::vector<TapConfig> taps;
        std::vector<std::vector<std::array<double, 2>>> channel_matrix; // rows of (re, im)
        bool operator==(const MetricsConfig &) const = default;
    };

    struct OutputConfig
    {
        std::optional<std::string> path;
        std::string format = "csv";
        bool operator==(const OutputConfig &) const = default;
    };

    struct ExperimentConfig
    {
        Kind kind = Kind::pathloss;
        std::uint64_t seed = 1;
        std::optional<SceneConfig> scene;
        std::optional<PanelConfig> panel;
        std::optional<ModelConfig> model;
        std::optional<SweepConfig> sweep;
        std::vector<ProfileConfig> profiles;
        std::optional<FadingConfig> fading;
        std::optional<HardeningConfig> hardening;
        std::optional<EstimationConfig> estimation;
        std::optional<MetricsConfig> metrics;
        OutputConfig output;
        bool operator==(const ExperimentConfig &) const = default;
    };

    // Strict JSON: duplicate and unknown keys are errors. Throws ConfigError.
    ExperimentConfig parse_config(std::string_view text);

    // Canonical JSON text with every default written out
    std::string serialize_config(const ExperimentConfig &config);

    // FNV-1a 64 of the canonical text, as 16 hex digits
    std::string config_hash(const ExperimentConfig &config);

    // ---- Result tables ------------------------------------------------------------

    struct Column
    {
        std::string name;
        std::string unit; // "-" marks a text column, "1" a dimensionless one
        bool is_text() const { return unit == "-"; }
        bool operator==(const Column &) const = default;
    };

    using Value = std::variant<double, std::string>;

    struct Provenance
    {
        std::string experiment;
        std::string config_hash;
        std::uint64_t seed = 0;
        std::string version;
        bool operator==(const Provenance &) const = default;
    };

    struct ResultTable
    {
        std::vector<Column> columns;
        std::vector<std::vector<Value>> rows;
        Provenance provenance;

        std::size_t column(std::string_view name) const; // throws std::out_of_range
        double number(std::size_t row, std::string_view name) const;
        // Throws std::logic_error if not rectangular or a cell type does not match its column
        void validate() const;
    };

    ResultTable run_experiment(const ExperimentConfig &config);

    enum class Format
    {
        csv,
        json
    };

    std::optional<Format> format_from_string(std::string_view name);

    std::string to_csv(const ResultTable &table);
    std::string to_json(const ResultTable &table);
    ResultTable table_from_json(std::string_view text);

    // Writes atomically through a temporary file in the destination directory
    void emit(const ResultTable &table, Format format, const std::string &path);
}

#endif
