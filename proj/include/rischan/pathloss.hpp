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


#ifndef RISCHAN_PATHLOSS_HPP
#define RISCHAN_PATHLOSS_HPP

#include "rischan/scene.hpp"

#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rischan::pathloss
{
    enum class Model
    {
        free_space,
        two_ray_ris,
        po_far_field,
        tang_general,
        tang_far_bf,
        tang_near_bf,
        tang_near_bc,
        refined_far,
        refined_near,
        single_element,
        ellingson,
        tile_rcs
    };

    // Upper-case selector names, e.g. "TANG_NEAR_BF"
    std::string_view to_string(Model model);
    std::optional<Model> model_from_string(std::string_view name);
    const std::vector<Model> &all_models();

    struct PathLossResult
    {
        double path_loss_db = 0.0;
        double received_power_dbm = 0.0;
        std::complex<double> coherent_sum{0.0, 0.0}; // inner element sum, where the model has one
        FieldRegion field_region_used;
        bool infinite = false; // perfect cancellation or zero response
        std::vector<std::string> warnings;
    };

    // ---- Element model ------------------------------------------------------

    // Normalized power pattern cos^q(theta) on [0, pi/2), zero elsewhere
    double element_pattern(double theta, double q);

    // sin(x)/x with the removable singularity handled for |x| < 1e-6
    double sinc(double x);

    // ---- Scalar models --------------------------------------------------------

    // 10 log10[(4 pi d / lambda)^2 / (gt gr)]
    double free_space_path_loss_db(double distance, double frequency, double gt = 1.0, double gr = 1.0);

    // Two-ray model with Q ground-laid RIS elements, returns received power in dBm
    double two_ray_ris_received_power_dbm(std::size_t q_elements, double d_tr, double frequency, double tx_power_dbm);

    // Physical-optics far-field model of a rectangular a x b surface
    struct PoFarFieldParams
    {
        double d1 = 1.0, d2 = 1.0;
        double a = 0.1, b = 0.1;
        double theta_i = 0.0; // incidence
        double theta_s = 0.0; // observed reflection
        double theta_r = 0.0; // designed reflection
        double gt = 1.0, gr = 1.0;
        double frequency = 1e9;
    };

    // General form with the sinc steering term (one sinc factor, not squared)
    double po_far_field_path_loss_db(const PoFarFieldParams &p);
    // Observation at the design angle, the sinc term dropped
    double po_design_angle_path_loss_db(const PoFarFieldParams &p);

    // Tile response |g| model: loss = -10 log10[(4 pi |g|^2 / lambda^2) PL_t PL_r]
    PathLossResult tile_rcs_path_loss(std::complex<double> tile_response, double d1, double d2, double frequency,
                                      double tx_power_dbm = 0.0);

    // ---- Element-sum models -----------------------------------------------------

    // Coherent element sum with the 64 pi^3 / (Gt Gr G dx dy lambda^2) prefactor
    PathLossResult tang_general_path_loss(const RisPanel &panel, const Scene &scene, double tx_power_dbm = 0.0);

    enum class TangCase
    {
        far_beamforming,
        near_beamforming,
        near_broadcasting
    };
    PathLossResult tang_case_path_loss(TangCase which, const RisPanel &panel, const Scene &scene, double tx_power_dbm = 0.0);

    enum class RefinedCase
    {
        far,
        near,
        single_element
    };
    // SINGLE_ELEMENT evaluates `element` (default: the element closest to the
    // panel center) with the panel's reflection coefficient for it.
    PathLossResult refined_path_loss(RefinedCase which, const RisPanel &panel, const Scene &scene,
                                     std::optional<std::size_t> element = std::nullopt, double tx_power_dbm = 0.0);

    // Single element with an explicit reflection coefficient
    PathLossResult single_element_path_loss(const RisPanel &panel, const Scene &scene, std::size_t element,
                                            std::complex<double> gamma, double tx_power_dbm = 0.0);

    // Reflectarray model driven by the panel's per-element amplitudes and phases
    // and the element gain pattern G(theta) = G F(theta).
    PathLossResult ellingson_path_loss(const RisPanel &panel, const Scene &scene, double tx_power_dbm = 0.0);

    // ---- Unified dispatch -------------------------------------------------------

    struct ModelSpec
    {
        Model model = Model::free_space;
        std::optional<double> distance;             // FREE_SPACE; defaults to d1 + d2
        std::optional<double> plate_a, plate_b;     // PO_FAR_FIELD; default to the panel size
        std::optional<double> design_reflection;    // PO_FAR_FIELD theta_r; defaults to the observed angle
        std::complex<double> tile_response{0.0, 0.0}; // TILE_RCS
        std::optional<std::size_t> element;         // SINGLE_ELEMENT
        double tx_power_dbm = 0.0;
    };

    // Evaluates any model on a built scene. The panel's current phase profile
    // is used where the model depends on it.
    PathLossResult evaluate(const ModelSpec &spec, const RisPanel &panel, const Scene &scene);

    // ---- Phase profiles -----------------------------------------------------------

    struct PhaseProfileSpec
    {
        enum class Kind
        {
            uniform,
            far_field_beam,
            near_field_focus,
            random,
            custom
        };
        Kind kind = Kind::uniform;
        double uniform_value = 0.0;
        Direction target;                 // FAR_FIELD_BEAM reflect direction
        std::optional<Point3> focus;      // NEAR_FIELD_FOCUS point, defaults to the Rx position
        std::uint64_t seed = 0;           // RANDOM
        std::vector<double> custom;       // CUSTOM, M x N row-major
        std::optional<int> quantization_bits;
    };

    std::string_view to_string(PhaseProfileSpec::Kind kind);
    std::optional<PhaseProfileSpec::Kind> profile_kind_from_string(std::string_view name);

    // Returns phases in [0, 2 pi), quantized when quantization_bits is set
    std::vector<double> design_phase_profile(const PhaseProfileSpec &spec, const RisPanel &panel, const Scene &scene);

    // Nearest multiple of 2 pi / 2^bits, ties toward the smaller multiple, result in [0, 2 pi)
    double quantize_phase(double phase, int bits);
    std::vector<double> quantize_phase_profile(std::span<const double> phases, std::optional<int> bits);

    // ---- Array factor / HPBW ------------------------------------------------------

    struct ScanGrid
    {
        double begin_deg = -90.0;
        double end_deg = 90.0;
        double step_deg = 0.05;
    };

    struct BeamPattern
    {
        std::vector<double> angles_deg;
        std::vector<double> power; // |sum of element phasors|^2
        double peak_deg = 0.0;
        double hpbw_deg = 0.0;
    };

    // Far-field reflected pattern in the x-z plane of the panel. Angles are
    // signed, measured from the normal toward +x; the specular direction of
    // incidence alpha is -alpha.
    BeamPattern array_factor_and_hpbw(const RisPanel &panel, std::span<const double> phases, double frequency,
                                      double incidence_deg, const ScanGrid &scan = {});

    // -3 dB width around the global maximum, linear interpolation between samples.
    // Throws if the main lobe does not fall below half power inside the scan.
    double half_power_beamwidth(std::span<const double> angles_deg, std::span<const double> power);
}

#endif
