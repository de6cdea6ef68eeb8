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


#include "rischan/pathloss.hpp"
#include "rischan/random.hpp"
#include "rischan/units.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <stdexcept>
#include <utility>

namespace rischan::pathloss
{
    namespace
    {
        constexpr std::array<std::pair<Model, std::string_view>, 12> model_names{{
            {Model::free_space, "FREE_SPACE"},
            {Model::two_ray_ris, "TWO_RAY_RIS"},
            {Model::po_far_field, "PO_FAR_FIELD"},
            {Model::tang_general, "TANG_GENERAL"},
            {Model::tang_far_bf, "TANG_FAR_BF"},
            {Model::tang_near_bf, "TANG_NEAR_BF"},
            {Model::tang_near_bc, "TANG_NEAR_BC"},
            {Model::refined_far, "REFINED_FAR"},
            {Model::refined_near, "REFINED_NEAR"},
            {Model::single_element, "SINGLE_ELEMENT"},
            {Model::ellingson, "ELLINGSON"},
            {Model::tile_rcs, "TILE_RCS"},
        }};

        constexpr std::array<std::pair<PhaseProfileSpec::Kind, std::string_view>, 5> profile_names{{
            {PhaseProfileSpec::Kind::uniform, "UNIFORM"},
            {PhaseProfileSpec::Kind::far_field_beam, "FAR_FIELD_BEAM"},
            {PhaseProfileSpec::Kind::near_field_focus, "NEAR_FIELD_FOCUS"},
            {PhaseProfileSpec::Kind::random, "RANDOM"},
            {PhaseProfileSpec::Kind::custom, "CUSTOM"},
        }};

        constexpr double infinite_db = std::numeric_limits<double>::infinity();

        // Fills dB, received power and the cancellation flag from a linear loss
        PathLossResult finish(double linear_loss, double tx_power_dbm)
        {
            PathLossResult r;
            if (!(linear_loss < infinite_db) || !(linear_loss > 0.0))
            {
                r.infinite = true;
                r.path_loss_db = infinite_db;
            }
            else
                r.path_loss_db = to_db(linear_loss);
            r.received_power_dbm = tx_power_dbm - r.path_loss_db;
            return r;
        }

        // Both ends must be beyond the Rayleigh distance for FAR
        FieldRegion scene_region(const RisPanel &panel, const Scene &scene)
        {
            return classify_field_region(panel, std::min(scene.d1, scene.d2), scene.frequency);
        }

        double pattern_from_cos(double c, double q)
        {
            if (!(c > 0.0))
                return 0.0;
            return q == 0.0 ? 1.0 : std::pow(c, q);
        }

        double combined_pattern(const RisPanel &panel, const Scene &scene, std::size_t i)
        {
            return pattern_from_cos(scene.cos_tx[i], panel.pattern_exponent) *
                   pattern_from_cos(scene.cos_rx[i], panel.pattern_exponent);
        }

        void check_sizes(const RisPanel &panel, const Scene &scene)
        {
            if (scene.size() != panel.size() || scene.m_count != panel.m_count || scene.n_count != panel.n_count)
                throw std::invalid_argument("scene was built for a different panel size");
        }

        // sum sqrt(F_combine) / (r_t r_r), no phase
        double magnitude_sum(const RisPanel &panel, const Scene &scene)
        {
            CompensatedSum<double> s;
            for (std::size_t i = 0; i < scene.size(); ++i)
                s.add(std::sqrt(combined_pattern(panel, scene, i)) / (scene.r_tx[i] * scene.r_rx[i]));
            return s.value();
        }

        std::size_t center_element(const RisPanel &panel)
        {
            return panel.index(panel.n_count / 2, panel.m_count / 2);
        }
    }

    std::string_view to_string(Model model)
    {
        for (auto [m, name] : model_names)
            if (m == model)
                return name;
        return "UNKNOWN";
    }

    std::optional<Model> model_from_string(std::string_view name)
    {
        for (auto [m, n] : model_names)
            if (n == name)
                return m;
        return std::nullopt;
    }

    const std::vector<Model> &all_models()
    {
        static const std::vector<Model> models = []
        {
            std::vector<Model> v;
            for (auto [m, n] : model_names)
                v.push_back(m);
            return v;
        }();
        return models;
    }

    std::string_view to_string(PhaseProfileSpec::Kind kind)
    {
        for (auto [k, name] : profile_names)
            if (k == kind)
                return name;
        return "UNKNOWN";
    }

    std::optional<PhaseProfileSpec::Kind> profile_kind_from_string(std::string_view name)
    {
        for (auto [k, n] : profile_names)
            if (n == name)
                return k;
        return std::nullopt;
    }

    double element_pattern(double theta, double q)
    {
        if (!(q >= 0.0))
            throw std::invalid_argument("pattern exponent must be non-negative");
        if (!(theta >= 0.0 && theta < 0.5 * pi))
            return 0.0;
        return pattern_from_cos(std::cos(theta), q);
    }

    double sinc(double x)
    {
        if (std::abs(x) < 1e-6)
            return 1.0 - x * x / 6.0;
        return std::sin(x) / x;
    }

    double free_space_path_loss_db(double distance, double frequency, double gt, double gr)
    {
        if (!(distance > 0.0))
            throw std::invalid_argument("distance must be positive");
        const double lambda = wavelength(frequency);
        const double ratio = 4.0 * pi * distance / lambda;
        return to_db(ratio * ratio / (gt * gr));
    }

    double two_ray_ris_received_power_dbm(std::size_t q_elements, double d_tr, double frequency, double tx_power_dbm)
    {
        if (!(d_tr > 0.0))
            throw std::invalid_argument("Tx-Rx distance must be positive");
        const double lambda = wavelength(frequency);
        return tx_power_dbm + amplitude_to_db(static_cast<double>(q_elements) + 1.0) +
               amplitude_to_db(lambda / (4.0 * pi * d_tr));
    }

    namespace
    {
        void check_po(const PoFarFieldParams &p)
        {
            if (!(p.d1 > 0.0) || !(p.d2 > 0.0))
                throw std::invalid_argument("PO model distances must be positive");
            if (!(p.a > 0.0) || !(p.b > 0.0))
                throw std::invalid_argument("PO model plate sides must be positive");
            for (double t : {p.theta_i, p.theta_s, p.theta_r})
                if (!(t >= 0.0 && t < 0.5 * pi))
                    throw std::invalid_argument("PO model angles must lie in [0, pi/2)");
        }

        double po_base(const PoFarFieldParams &p)
        {
            const double num = 4.0 * pi * p.d1 * p.d2;
            const double ab = p.a * p.b;
            const double ci = std::cos(p.theta_i);
            return num * num / (p.gt * p.gr * ab * ab * ci * ci);
        }
    }

    double po_far_field_path_loss_db(const PoFarFieldParams &p)
    {
        check_po(p);
        const double lambda = wavelength(p.frequency);
        const double s = sinc(pi * p.b / lambda * (std::sin(p.theta_s) - std::sin(p.theta_r)));
        // A non-positive sinc means the observer sits on or beyond a pattern null.
        if (!(s > 0.0))
            return infinite_db;
        return to_db(po_base(p) / s);
    }

    double po_design_angle_path_loss_db(const PoFarFieldParams &p)
    {
        check_po(p);
        wavelength(p.frequency);
        return to_db(po_base(p));
    }

    PathLossResult tile_rcs_path_loss(std::complex<double> tile_response, double d1, double d2, double frequency,
                                      double tx_power_dbm)
    {
        if (!(d1 > 0.0) || !(d2 > 0.0))
            throw std::invalid_argument("tile model distances must be positive");
        const double lambda = wavelength(frequency);
        const double g2 = std::norm(tile_response);
        const double pl_t = std::pow(lambda / (4.0 * pi * d1), 2);
        const double pl_r = std::pow(lambda / (4.0 * pi * d2), 2);
        const double gain = 4.0 * pi * g2 / (lambda * lambda) * pl_t * pl_r;
        PathLossResult r = finish(gain > 0.0 ? 1.0 / gain : infinite_db, tx_power_dbm);
        r.coherent_sum = tile_response;
        return r;
    }

    PathLossResult tang_general_path_loss(const RisPanel &panel, const Scene &scene, double tx_power_dbm)
    {
        check_sizes(panel, scene);
        const double lambda = scene.wavelength();
        const double k = two_pi / lambda;
        CompensatedSum<std::complex<double>> sum;
        for (std::size_t i = 0; i < scene.size(); ++i)
        {
            const double f = combined_pattern(panel, scene, i);
            const std::complex<double> gamma = std::polar(panel.amplitude_at(i), panel.phase_at(i));
            const double path = scene.r_tx[i] + scene.r_rx[i];
            // reduce the propagation phase before the complex exponential
            const double prop = -std::fmod(k * path, two_pi);
            sum.add(std::sqrt(f) * gamma * std::polar(1.0, prop) / (scene.r_tx[i] * scene.r_rx[i]));
        }
        const std::complex<double> s = sum.value();
        const double prefactor = 64.0 * pi * pi * pi /
                                 (scene.tx.gain * scene.rx.gain * panel.element_gain * panel.dx * panel.dy * lambda * lambda);
        const double mag2 = std::norm(s);
        PathLossResult r = finish(mag2 > 0.0 ? prefactor / mag2 : infinite_db, tx_power_dbm);
        r.coherent_sum = s;
        r.field_region_used = scene_region(panel, scene);
        return r;
    }

    PathLossResult tang_case_path_loss(TangCase which, const RisPanel &panel, const Scene &scene, double tx_power_dbm)
    {
        check_sizes(panel, scene);
        const double lambda = scene.wavelength();
        const double gtgr = scene.tx.gain * scene.rx.gain;
        const double a = panel.mean_amplitude();
        const double a2 = a * a;
        const FieldRegion region = scene_region(panel, scene);
        PathLossResult r;

        switch (which)
        {
        case TangCase::far_beamforming:
        {
            const double mn = static_cast<double>(panel.m_count) * static_cast<double>(panel.n_count);
            const double ft = element_pattern(scene.incidence.theta, panel.pattern_exponent);
            const double fr = element_pattern(scene.reflection.theta, panel.pattern_exponent);
            const double dd = scene.d1 * scene.d2;
            const double den = gtgr * panel.element_gain * mn * mn * panel.dx * panel.dy * lambda * lambda * ft * fr * a2;
            r = finish(64.0 * pi * pi * pi * dd * dd / den, tx_power_dbm);
            if (!region.is_far())
                r.warnings.emplace_back("far-field beamforming model applied inside the Rayleigh distance");
            break;
        }
        case TangCase::near_beamforming:
        {
            const double s = magnitude_sum(panel, scene);
            const double den = gtgr * panel.element_gain * panel.dx * panel.dy * lambda * lambda * a2 * s * s;
            r = finish(64.0 * pi * pi * pi / den, tx_power_dbm);
            r.coherent_sum = s;
            break;
        }
        case TangCase::near_broadcasting:
        {
            const double d = scene.d1 + scene.d2;
            r = finish(16.0 * pi * pi * d * d / (gtgr * lambda * lambda * a2), tx_power_dbm);
            break;
        }
        }
        r.field_region_used = region;
        return r;
    }

    PathLossResult single_element_path_loss(const RisPanel &panel, const Scene &scene, std::size_t element,
                                            std::complex<double> gamma, double tx_power_dbm)
    {
        check_sizes(panel, scene);
        if (element >= scene.size())
            throw std::out_of_range("element index outside the panel");
        const double rr = scene.r_tx[element] * scene.r_rx[element];
        const double dxdy = panel.dx * panel.dy;
        const double f = combined_pattern(panel, scene, element);
        const double den = scene.tx.gain * scene.rx.gain * dxdy * dxdy * f * std::norm(gamma);
        PathLossResult r = finish(den > 0.0 ? 16.0 * pi * pi * rr * rr / den : infinite_db, tx_power_dbm);
        r.coherent_sum = gamma;
        r.field_region_used = scene_region(panel, scene);
        return r;
    }

    PathLossResult refined_path_loss(RefinedCase which, const RisPanel &panel, const Scene &scene,
                                     std::optional<std::size_t> element, double tx_power_dbm)
    {
        check_sizes(panel, scene);
        const double gtgr = scene.tx.gain * scene.rx.gain;
        const double dxdy = panel.dx * panel.dy;
        PathLossResult r;
        switch (which)
        {
        case RefinedCase::far:
        {
            const double aperture = static_cast<double>(panel.size()) * dxdy;
            const double ft = element_pattern(scene.incidence.theta, panel.pattern_exponent);
            const double fr = element_pattern(scene.reflection.theta, panel.pattern_exponent);
            const double a = panel.mean_amplitude();
            const double dd = scene.d1 * scene.d2;
            const double den = gtgr * panel.element_gain * aperture * aperture * ft * fr * a * a;
            r = finish(16.0 * pi * pi * dd * dd / den, tx_power_dbm);
            break;
        }
        case RefinedCase::near:
        {
            const double s = magnitude_sum(panel, scene);
            r = finish(16.0 * pi * pi / (gtgr * dxdy * dxdy * s * s), tx_power_dbm);
            r.coherent_sum = s;
            break;
        }
        case RefinedCase::single_element:
        {
            const std::size_t i = element.value_or(center_element(panel));
            if (i >= scene.size())
                throw std::out_of_range("element index outside the panel");
            return single_element_path_loss(panel, scene, i, std::polar(panel.amplitude_at(i), panel.phase_at(i)),
                                            tx_power_dbm);
        }
        }
        r.field_region_used = scene_region(panel, scene);
        return r;
    }

    PathLossResult ellingson_path_loss(const RisPanel &panel, const Scene &scene, double tx_power_dbm)
    {
        check_sizes(panel, scene);
        if (!(panel.efficiency > 0.0 && panel.efficiency <= 1.0))
            throw std::invalid_argument("RIS efficiency must lie in (0, 1]");
        CompensatedSum<std::complex<double>> sum;
        for (std::size_t i = 0; i < scene.size(); ++i)
        {
            const double g_t = panel.element_gain * pattern_from_cos(scene.cos_tx[i], panel.pattern_exponent);
            const double g_r = panel.element_gain * pattern_from_cos(scene.cos_rx[i], panel.pattern_exponent);
            sum.add(panel.amplitude_at(i) * std::sqrt(g_t * g_r) * std::polar(1.0, panel.phase_at(i)) /
                    (scene.r_tx[i] * scene.r_rx[i]));
        }
        const std::complex<double> s = sum.value();
        const double mag2 = std::norm(s);
        const double prefactor = 256.0 * std::pow(pi, 4) / (panel.efficiency * scene.tx.gain * scene.rx.gain);
        PathLossResult r = finish(mag2 > 0.0 ? prefactor / mag2 : infinite_db, tx_power_dbm);
        r.coherent_sum = s;
        r.field_region_used = scene_region(panel, scene);
        return r;
    }

    PathLossResult evaluate(const ModelSpec &spec, const RisPanel &panel, const Scene &scene)
    {
        const double p = spec.tx_power_dbm;
        switch (spec.model)
        {
        case Model::free_space:
        {
            PathLossResult r = finish(from_db(free_space_path_loss_db(spec.distance.value_or(scene.d1 + scene.d2),
                                                                      scene.frequency, scene.tx.gain, scene.rx.gain)),
                                      p);
            r.field_region_used = scene_region(panel, scene);
            return r;
        }
        case Model::two_ray_ris:
        {
            PathLossResult r;
            r.received_power_dbm = two_ray_ris_received_power_dbm(panel.size(), scene.d_tr, scene.frequency, p);
            r.path_loss_db = p - r.received_power_dbm;
            r.field_region_used = scene_region(panel, scene);
            return r;
        }
        case Model::po_far_field:
        {
            PoFarFieldParams po;
            po.d1 = scene.d1;
            po.d2 = scene.d2;
            po.a = spec.plate_a.value_or(panel.width());
            po.b = spec.plate_b.value_or(panel.height());
            po.theta_i = scene.incidence.theta;
            po.theta_s = scene.observation_theta;
            po.theta_r = spec.design_reflection.value_or(scene.observation_theta);
            po.gt = scene.tx.gain;
            po.gr = scene.rx.gain;
            po.frequency = scene.frequency;
            const double db = po_far_field_path_loss_db(po);
            PathLossResult r = finish(from_db(db), p);
            r.field_region_used = scene_region(panel, scene);
            return r;
        }
        case Model::tang_general:
            return tang_general_path_loss(panel, scene, p);
        case Model::tang_far_bf:
            return tang_case_path_loss(TangCase::far_beamforming, panel, scene, p);
        case Model::tang_near_bf:
            return tang_case_path_loss(TangCase::near_beamforming, panel, scene, p);
        case Model::tang_near_bc:
            return tang_case_path_loss(TangCase::near_broadcasting, panel, scene, p);
        case Model::refined_far:
            return refined_path_loss(RefinedCase::far, panel, scene, std::nullopt, p);
        case Model::refined_near:
            return refined_path_loss(RefinedCase::near, panel, scene, std::nullopt, p);
        case Model::single_element:
            return refined_path_loss(RefinedCase::single_element, panel, scene, spec.element, p);
        case Model::ellingson:
            return ellingson_path_loss(panel, scene, p);
        case Model::tile_rcs:
        {
            PathLossResult r = tile_rcs_path_loss(spec.tile_response, scene.d1, scene.d2, scene.frequency, p);
            r.field_region_used = scene_region(panel, scene);
            return r;
        }
        }
        throw std::invalid_argument("unknown path loss model");
    }

    // ---- Phase profiles ----------------------------------------------------------

    double quantize_phase(double phase, int bits)
    {
        if (bits < 1)
            throw std::invalid_argument("quantization bits must be >= 1");
        const double levels = std::ldexp(1.0, bits);
        const double step = two_pi / levels;
        const double x = wrap_two_pi(phase) / step;
        const double lo = std::floor(x);
        double k = (x - lo > 0.5) ? lo + 1.0 : lo;
        if (k >= levels)
            k -= levels;
        return k * step;
    }

    std::vector<double> quantize_phase_profile(std::span<const double> phases, std::optional<int> bits)
    {
        std::vector<double> out(phases.begin(), phases.end());
        if (!bits)
            return out;
        for (double &p : out)
            p = quantize_phase(p, *bits);
        return out;
    }

    std::vector<double> design_phase_profile(const PhaseProfileSpec &spec, const RisPanel &panel, const Scene &scene)
    {
        check_sizes(panel, scene);
        const std::size_t count = panel.size();
        const double k = two_pi / scene.wavelength();
        std::vector<double> phases(count, 0.0);

        switch (spec.kind)
        {
        case PhaseProfileSpec::Kind::uniform:
            std::fill(phases.begin(), phases.end(), wrap_two_pi(spec.uniform_value));
            break;
        case PhaseProfileSpec::Kind::far_field_beam:
        {
            if (!(spec.target.theta >= 0.0 && spec.target.theta < 0.5 * pi))
                throw std::invalid_argument("beam target elevation must lie in [0, pi/2)");
            const Point3 u = scene.pose.direction(scene.incidence) + scene.pose.direction(spec.target);
            double gx = u.dot(scene.pose.x_axis);
            double gy = u.dot(scene.pose.y_axis);
            // specular targets cancel to rounding noise
            if (std::abs(gx) < 1e-12)
                gx = 0.0;
            if (std::abs(gy) < 1e-12)
                gy = 0.0;
            for (std::size_t n = 0; n < panel.n_count; ++n)
                for (std::size_t m = 0; m < panel.m_count; ++m)
                    phases[panel.index(n, m)] = wrap_two_pi(-k * (panel.offset_x(m) * gx + panel.offset_y(n) * gy));
            break;
        }
        case PhaseProfileSpec::Kind::near_field_focus:
        {
            const Point3 focus = spec.focus.value_or(scene.rx.position);
            for (std::size_t i = 0; i < count; ++i)
            {
                const double path = scene.r_tx[i] + (focus - scene.element_positions[i]).norm();
                phases[i] = wrap_two_pi(std::fmod(k * path, two_pi));
            }
            break;
        }
        case PhaseProfileSpec::Kind::random:
            for (std::size_t i = 0; i < count; ++i)
            {
                Rng rng(derive_seed(spec.seed, i));
                phases[i] = two_pi * rng.uniform();
            }
            break;
        case PhaseProfileSpec::Kind::custom:
            if (spec.custom.size() != count)
                throw std::invalid_argument("custom phase grid does not match the panel dimensions");
            for (std::size_t i = 0; i < count; ++i)
                phases[i] = wrap_two_pi(spec.custom[i]);
            break;
        }
        return quantize_phase_profile(phases, spec.quantization_bits);
    }

    // ---- Array factor / HPBW -------------------------------------------------------------

    double half_power_beamwidth(std::span<const double> angles_deg, std::span<const double> power)
    {
        if (angles_deg.size() != power.size() || power.size() < 3)
            throw std::invalid_argument("beam pattern needs at least three matching samples");
        const auto peak_it = std::max_element(power.begin(), power.end());
        const double peak = *peak_it;
        if (!(peak > 0.0))
            throw std::runtime_error("beam pattern has no lobe above -3 dB of its maximum");
        const double half = 0.5 * peak;
        const std::size_t ip = static_cast<std::size_t>(peak_it - power.begin());

        std::size_t l = ip;
        while (l > 0 && power[l] >= half)
            --l;
        std::size_t r = ip;
        while (r + 1 < power.size() && power[r] >= half)
            ++r;
        if (power[l] >= half || power[r] >= half)
            throw std::runtime_error("main lobe does not drop below -3 dB within the scan");

        auto crossing = [&](std::size_t i, std::size_t j)
        {
            const double t = (half - power[i]) / (power[j] - power[i]);
            return angles_deg[i] + t * (angles_deg[j] - angles_deg[i]);
        };
        return crossing(r, r - 1) - crossing(l, l + 1);
    }

    BeamPattern array_factor_and_hpbw(const RisPanel &panel, std::span<const double> phases, double frequency,
                                      double incidence_deg, const ScanGrid &scan)
    {
        if (phases.size() != panel.size())
            throw std::invalid_argument("phase profile does not match the panel size");
        if (!(scan.step_deg > 0.0 && scan.step_deg <= 0.05 + 1e-12))
            throw std::invalid_argument("scan resolution must be at most 0.05 deg");
        if (!(scan.end_deg > scan.begin_deg))
            throw std::invalid_argument("scan range is empty");
        const double k = two_pi / wavelength(frequency);
        const double sin_t = std::sin(deg_to_rad(incidence_deg));

        // Only the x offset matters in the x-z plane, so columns collapse to one weight
        std::vector<std::complex<double>> column(panel.m_count, {0.0, 0.0});
        std::vector<double> x(panel.m_count);
        for (std::size_t m = 0; m < panel.m_count; ++m)
        {
            x[m] = panel.offset_x(m);
            for (std::size_t n = 0; n < panel.n_count; ++n)
            {
                const std::size_t i = panel.index(n, m);
                column[m] += std::polar(panel.amplitude_at(i), phases[i]);
            }
        }

        BeamPattern out;
        const auto count = static_cast<std::size_t>(std::floor((scan.end_deg - scan.begin_deg) / scan.step_deg + 1e-9)) + 1;
        out.angles_deg.resize(count);
        out.power.resize(count);
        for (std::size_t a = 0; a < count; ++a)
        {
            const double angle = scan.begin_deg + static_cast<double>(a) * scan.step_deg;
            const double u = k * (sin_t + std::sin(deg_to_rad(angle)));
            std::complex<double> s{0.0, 0.0};
            for (std::size_t m = 0; m < column.size(); ++m)
                s += column[m] * std::polar(1.0, u * x[m]);
            out.angles_deg[a] = angle;
            out.power[a] = std::norm(s);
        }
        const auto peak = std::max_element(out.power.begin(), out.power.end());
        out.peak_deg = out.angles_deg[static_cast<std::size_t>(peak - out.power.begin())];
        out.hpbw_deg = half_power_beamwidth(out.angles_deg, out.power);
        return out;
    }
}
