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


#include "rischan/experiment.hpp"
#include "rischan/estimation.hpp"
#include "rischan/pathloss.hpp"
#include "rischan/random.hpp"
#include "rischan/scene.hpp"
#include "rischan/smallscale.hpp"
#include "rischan/units.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <unistd.h>

namespace rischan::experiment
{
    namespace
    {
        using json = nlohmann::json;

        constexpr std::array<std::pair<Kind, std::string_view>, 7> kind_names{{
            {Kind::pathloss, "pathloss"},
            {Kind::sweep_ellipse, "sweep-ellipse"},
            {Kind::phase_gain, "phase-gain"},
            {Kind::acf, "acf"},
            {Kind::hardening, "hardening"},
            {Kind::estimate, "estimate"},
            {Kind::metrics, "metrics"},
        }};

        constexpr std::array<std::string_view, 4> metric_names{"doppler_spread", "rms_delay_spread", "effective_rank",
                                                               "condition_number"};

        [[noreturn]] void fail(const std::string &path, const std::string &message)
        {
            throw ConfigError((path.empty() ? std::string("<root>") : path) + ": " + message);
        }

        void check(bool ok, const std::string &path, const std::string &message)
        {
            if (!ok)
                fail(path, message);
        }

        std::string item_path(const std::string &path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

        // ---- Typed conversions -------------------------------------------------------

        double as_number(const json &j, const std::string &path)
        {
            check(j.is_number(), path, "expected a number");
            const double v = j.get<double>();
            check(std::isfinite(v), path, "expected a finite number");
            return v;
        }

        std::uint64_t as_uint(const json &j, const std::string &path)
        {
            if (j.is_number_unsigned())
                return j.get<std::uint64_t>();
            check(j.is_number_integer() && j.get<std::int64_t>() >= 0, path, "expected a non-negative integer");
            return static_cast<std::uint64_t>(j.get<std::int64_t>());
        }

        std::size_t as_size(const json &j, const std::string &path) { return static_cast<std::size_t>(as_uint(j, path)); }

        int as_int(const json &j, const std::string &path)
        {
            check(j.is_number_integer(), path, "expected an integer");
            const auto v = j.get<std::int64_t>();
            check(v >= std::numeric_limits<int>::min() && v <= std::numeric_limits<int>::max(), path, "integer out of range");
            return static_cast<int>(v);
        }

        bool as_bool(const json &j, const std::string &path)
        {
            check(j.is_boolean(), path, "expected true or false");
            return j.get<bool>();
        }

        std::string as_string(const json &j, const std::string &path)
        {
            check(j.is_string(), path, "expected a string");
            return j.get<std::string>();
        }

        template <typename F>
        auto as_array(const json &j, const std::string &path, F &&convert)
        {
            check(j.is_array(), path, "expected an array");
            std::vector<decltype(convert(j, path))> out;
            for (std::size_t i = 0; i < j.size(); ++i)
                out.push_back(convert(j[i], item_path(path, i)));
            return out;
        }

        Vec3 as_vec3(const json &j, const std::string &path)
        {
            check(j.is_array() && j.size() == 3, path, "expected an array of 3 numbers");
            return {as_number(j[0], item_path(path, 0)), as_number(j[1], item_path(path, 1)), as_number(j[2], item_path(path, 2))};
        }

        std::array<double, 2> as_complex(const json &j, const std::string &path)
        {
            check(j.is_array() && j.size() == 2, path, "expected [re, im]");
            return {as_number(j[0], item_path(path, 0)), as_number(j[1], item_path(path, 1))};
        }

        // Object reader that tracks consumed keys so leftovers can be reported
        class Reader
        {
        public:
            Reader(const json &j, std::string path) : j_(j), path_(std::move(path))
            {
                check(j_.is_object(), path_, "expected an object");
            }

            std::string at(std::string_view key) const
            {
                return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
            }

            bool has(const char *key) const { return j_.contains(key); }

            const json *find(const char *key)
            {
                const auto it = j_.find(key);
                if (it == j_.end())
                    return nullptr;
                used_.insert(key);
                return &*it;
            }

            template <typename F>
            auto get(const char *key, F &&convert) -> std::optional<decltype(convert(json{}, std::string{}))>
            {
                if (const json *v = find(key))
                    return convert(*v, at(key));
                return std::nullopt;
            }

            template <typename F>
            auto require(const char *key, F &&convert)
            {
                const json *v = find(key);
                if (!v)
                    fail(at(key), "required field is missing");
                return convert(*v, at(key));
            }

            void finish() const
            {
                for (const auto &item : j_.items())
                    if (!used_.count(item.key()))
                        fail(at(item.key()), "unknown key");
            }

        private:
            const json &j_;
            std::string path_;
            std::set<std::string> used_;
        };

        template <typename T, typename F>
        std::optional<T> sub_object(Reader &r, const char *key, F &&parse)
        {
            if (const json *v = r.find(key))
            {
                Reader child(*v, r.at(key));
                T out = parse(child);
                child.finish();
                return out;
            }
            return std::nullopt;
        }

        template <typename T, typename F>
        std::vector<T> object_array(Reader &r, const char *key, F &&parse)
        {
            std::vector<T> out;
            if (const json *v = r.find(key))
            {
                check(v->is_array(), r.at(key), "expected an array");
                for (std::size_t i = 0; i < v->size(); ++i)
                {
                    Reader child((*v)[i], item_path(r.at(key), i));
                    out.push_back(parse(child));
                    child.finish();
                }
            }
            return out;
        }

        // ---- Blocks ----------------------------------------------------------------

        PolarConfig parse_polar(Reader &r)
        {
            PolarConfig p;
            p.distance_m = r.require("distance_m", as_number);
            check(p.distance_m > 0.0, r.at("distance_m"), "must be positive");
            p.theta_deg = r.require("theta_deg", as_number);
            check(p.theta_deg >= 0.0 && p.theta_deg < 90.0, r.at("theta_deg"), "must lie in [0, 90)");
            p.phi_deg = r.get("phi_deg", as_number).value_or(0.0);
            return p;
        }

        AntennaConfig parse_antenna(Reader &r)
        {
            AntennaConfig a;
            a.position_m = r.get("position_m", as_vec3);
            a.polar = sub_object<PolarConfig>(r, "polar", parse_polar);
            check(!(a.position_m && a.polar), r.at("polar"), "give either position_m or polar, not both");
            a.gain_dbi = r.get("gain_dbi", as_number).value_or(0.0);
            return a;
        }

        RisPoseConfig parse_pose(Reader &r)
        {
            RisPoseConfig p;
            p.center_m = r.get("center_m", as_vec3).value_or(p.center_m);
            p.normal = r.get("normal", as_vec3).value_or(p.normal);
            p.x_axis = r.get("x_axis", as_vec3).value_or(p.x_axis);
            return p;
        }

        SceneConfig parse_scene(Reader &r)
        {
            SceneConfig s;
            s.frequency_hz = r.require("frequency_hz", as_number);
            check(s.frequency_hz > 0.0, r.at("frequency_hz"), "must be positive");
            s.tx = sub_object<AntennaConfig>(r, "tx", parse_antenna).value_or(AntennaConfig{});
            s.rx = sub_object<AntennaConfig>(r, "rx", parse_antenna).value_or(AntennaConfig{});
            s.ris = sub_object<RisPoseConfig>(r, "ris", parse_pose).value_or(RisPoseConfig{});
            return s;
        }

        std::optional<int> parse_bits(Reader &r)
        {
            auto bits = r.get("quantization_bits", as_int);
            if (bits)
                check(*bits >= 1 && *bits <= 16, r.at("quantization_bits"), "must lie in [1, 16]");
            return bits;
        }

        PanelConfig parse_panel(Reader &r)
        {
            PanelConfig p;
            p.m = r.require("m", as_size);
            p.n = r.require("n", as_size);
            check(p.m >= 1, r.at("m"), "must be at least 1");
            check(p.n >= 1, r.at("n"), "must be at least 1");
            p.dx_m = r.require("dx_m", as_number);
            p.dy_m = r.require("dy_m", as_number);
            check(p.dx_m > 0.0, r.at("dx_m"), "must be positive");
            check(p.dy_m > 0.0, r.at("dy_m"), "must be positive");
            p.pattern_exponent = r.get("pattern_exponent", as_number).value_or(3.0);
            check(p.pattern_exponent >= 0.0, r.at("pattern_exponent"), "must be non-negative");
            p.element_gain = r.get("element_gain", as_number);
            if (p.element_gain)
                check(*p.element_gain > 0.0, r.at("element_gain"), "must be positive");
            p.amplitude = r.get("amplitude", as_number).value_or(1.0);
            check(p.amplitude > 0.0 && p.amplitude <= 1.0, r.at("amplitude"), "must lie in (0, 1]");
            p.efficiency = r.get("efficiency", as_number).value_or(1.0);
            check(p.efficiency > 0.0 && p.efficiency <= 1.0, r.at("efficiency"), "must lie in (0, 1]");
            p.quantization_bits = parse_bits(r);
            return p;
        }

        ProfileConfig parse_profile(Reader &r)
        {
            ProfileConfig p;
            p.kind = r.require("kind", as_string);
            check(pathloss::profile_kind_from_string(p.kind).has_value(), r.at("kind"),
                  "unknown profile kind \"" + p.kind + "\"");
            p.label = r.get("label", as_string).value_or(p.kind);
            p.value_deg = r.get("value_deg", as_number).value_or(0.0);
            p.target_theta_deg = r.get("target_theta_deg", as_number);
            if (p.target_theta_deg)
                check(*p.target_theta_deg >= 0.0 && *p.target_theta_deg < 90.0, r.at("target_theta_deg"),
                      "must lie in [0, 90)");
            p.target_phi_deg = r.get("target_phi_deg", as_number);
            check(p.target_theta_deg.has_value() == p.target_phi_deg.has_value() || !p.target_phi_deg,
                  r.at("target_phi_deg"), "needs target_theta_deg");
            p.focus_m = r.get("focus_m", as_vec3);
            p.custom_deg = r.get("custom_deg", [](const json &j, const std::string &path)
                                 { return as_array(j, path, as_number); })
                               .value_or(std::vector<double>{});
            check(p.kind != "CUSTOM" || !p.custom_deg.empty(), r.at("custom_deg"), "required for kind CUSTOM");
            p.quantization_bits = parse_bits(r);
            return p;
        }

        std::string model_name(const json &j, const std::string &path)
        {
            std::string name = as_string(j, path);
            check(pathloss::model_from_string(name).has_value(), path, "unknown path-loss model \"" + name + "\"");
            return name;
        }

        ModelConfig parse_model(Reader &r)
        {
            ModelConfig m;
            m.models = r.require("models", [](const json &j, const std::string &path)
                                 { return as_array(j, path, model_name); });
            check(!m.models.empty(), r.at("models"), "must list at least one model");
            m.distance_m = r.get("distance_m", as_number);
            if (m.distance_m)
                check(*m.distance_m > 0.0, r.at("distance_m"), "must be positive");
            m.plate_a_m = r.get("plate_a_m", as_number);
            m.plate_b_m = r.get("plate_b_m", as_number);
            if (m.plate_a_m)
                check(*m.plate_a_m > 0.0, r.at("plate_a_m"), "must be positive");
            if (m.plate_b_m)
                check(*m.plate_b_m > 0.0, r.at("plate_b_m"), "must be positive");
            m.design_reflection_deg = r.get("design_reflection_deg", as_number);
            m.tile_response = r.get("tile_response", as_complex);
            m.element = r.get("element", as_size);
            m.tx_power_dbm = r.get("tx_power_dbm", as_number).value_or(0.0);
            m.profile = sub_object<ProfileConfig>(r, "profile", parse_profile);
            return m;
        }

        SweepConfig parse_sweep(Reader &r)
        {
            SweepConfig s;
            s.focal_distance_m = r.get("focal_distance_m", as_number).value_or(s.focal_distance_m);
            s.semi_major_m = r.get("semi_major_m", as_number).value_or(s.semi_major_m);
            s.d1_begin_m = r.get("d1_begin_m", as_number).value_or(s.d1_begin_m);
            s.d1_end_m = r.get("d1_end_m", as_number).value_or(s.d1_end_m);
            s.steps = r.get("steps", as_size).value_or(s.steps);
            s.ris_normal = r.get("ris_normal", as_vec3).value_or(s.ris_normal);
            s.ris_x_axis = r.get("ris_x_axis", as_vec3).value_or(s.ris_x_axis);
            check(s.focal_distance_m > 0.0, r.at("focal_distance_m"), "must be positive");
            check(2.0 * s.semi_major_m > s.focal_distance_m, r.at("semi_major_m"),
                  "must exceed half the focal distance");
            const double c = 0.5 * s.focal_distance_m;
            for (const char *key : {"d1_begin_m", "d1_end_m"})
            {
                const double d = std::string_view(key) == "d1_begin_m" ? s.d1_begin_m : s.d1_end_m;
                check(d >= s.semi_major_m - c && d <= s.semi_major_m + c, r.at(key),
                      "must lie in [a - c, a + c] of the ellipse");
            }
            check(s.steps >= 2, r.at("steps"), "must be at least 2");
            return s;
        }

        RayConfig parse_ray(Reader &r)
        {
            RayConfig ray;
            ray.power = r.require("power", as_number);
            check(ray.power >= 0.0, r.at("power"), "must be non-negative");
            ray.aoa_deg = r.require("aoa_deg", as_number);
            ray.delay_s = r.get("delay_s", as_number).value_or(0.0);
            check(ray.delay_s >= 0.0, r.at("delay_s"), "must be non-negative");
            ray.ris = r.get("ris", as_bool).value_or(false);
            return ray;
        }

        FadingConfig parse_fading(Reader &r)
        {
            FadingConfig f;
            f.preset = r.get("preset", as_string).value_or(f.preset);
            check(f.preset == "ris_assisted" || f.preset == "isotropic_ring" || f.preset == "custom", r.at("preset"),
                  "must be ris_assisted, isotropic_ring or custom");
            f.frequency_hz = r.get("frequency_hz", as_number).value_or(f.frequency_hz);
            check(f.frequency_hz > 0.0, r.at("frequency_hz"), "must be positive");
            f.speed_mps = r.get("speed_mps", as_number).value_or(f.speed_mps);
            check(f.speed_mps >= 0.0, r.at("speed_mps"), "must be non-negative");
            f.heading_deg = r.get("heading_deg", as_number).value_or(f.heading_deg);
            f.sample_interval_s = r.get("sample_interval_s", as_number).value_or(f.sample_interval_s);
            check(f.sample_interval_s > 0.0, r.at("sample_interval_s"), "must be positive");
            f.snapshots = r.get("snapshots", as_size).value_or(f.snapshots);
            check(f.snapshots >= 2, r.at("snapshots"), "must be at least 2");
            f.runs = r.get("runs", as_size).value_or(f.runs);
            check(f.runs >= 1, r.at("runs"), "must be at least 1");
            f.max_lag = r.get("max_lag", as_size).value_or(std::min(f.max_lag, f.snapshots - 1));
            check(f.max_lag < f.snapshots, r.at("max_lag"), "must be smaller than snapshots");
            f.ring_rays = r.get("ring_rays", as_size).value_or(f.ring_rays);
            check(f.ring_rays >= 1, r.at("ring_rays"), "must be at least 1");
            f.baseline = r.get("baseline", as_string).value_or(f.baseline);
            check(f.baseline == "static_ris" || f.baseline == "no_ris", r.at("baseline"), "must be static_ris or no_ris");
            const bool custom = f.preset == "custom";
            for (const char *key : {"k_factor", "los_aoa_deg", "random_rotation", "rays"})
                check(custom || !r.has(key), r.at(key), "only allowed with preset custom");
            f.k_factor = r.get("k_factor", as_number).value_or(0.0);
            check(f.k_factor >= 0.0, r.at("k_factor"), "must be non-negative");
            f.los_aoa_deg = r.get("los_aoa_deg", as_number).value_or(0.0);
            f.random_rotation = r.get("random_rotation", as_bool).value_or(false);
            f.rays = object_array<RayConfig>(r, "rays", parse_ray);
            check(!custom || !f.rays.empty(), r.at("rays"), "required for preset custom");
            return f;
        }

        HardeningConfig parse_hardening(Reader &r)
        {
            HardeningConfig h;
            h.links = r.get("links", as_string).value_or(h.links);
            check(h.links == "rayleigh" || h.links == "unit", r.at("links"), "must be rayleigh or unit");
            if (auto phases = r.get("phases", [](const json &j, const std::string &path)
                                    { return as_array(j, path, as_string); }))
                h.phases = *phases;
            check(!h.phases.empty(), r.at("phases"), "must not be empty");
            for (std::size_t i = 0; i < h.phases.size(); ++i)
                check(h.phases[i] == "co_phased" || h.phases[i] == "random", item_path(r.at("phases"), i),
                      "must be co_phased or random");
            if (auto q = r.get("q_values", [](const json &j, const std::string &path)
                               { return as_array(j, path, as_size); }))
                h.q_values = *q;
            check(!h.q_values.empty(), r.at("q_values"), "must not be empty");
            for (std::size_t i = 0; i < h.q_values.size(); ++i)
                check(h.q_values[i] >= 1, item_path(r.at("q_values"), i), "must be at least 1");
            h.runs = r.get("runs", as_size).value_or(h.runs);
            check(h.runs >= 100, r.at("runs"), "must be at least 100");
            return h;
        }

        GridConfig parse_grid(Reader &r)
        {
            GridConfig g;
            g.subcarriers = r.get("subcarriers", as_size).value_or(g.subcarriers);
            g.subcarrier_spacing_hz = r.get("subcarrier_spacing_hz", as_number).value_or(g.subcarrier_spacing_hz);
            g.snapshots = r.get("snapshots", as_size).value_or(g.snapshots);
            g.snapshot_interval_s = r.get("snapshot_interval_s", as_number).value_or(g.snapshot_interval_s);
            g.rx_elements = r.get("rx_elements", as_size).value_or(g.rx_elements);
            g.tx_elements = r.get("tx_elements", as_size).value_or(g.tx_elements);
            g.rx_pitch_wavelengths = r.get("rx_pitch_wavelengths", as_number).value_or(g.rx_pitch_wavelengths);
            g.tx_pitch_wavelengths = r.get("tx_pitch_wavelengths", as_number).value_or(g.tx_pitch_wavelengths);
            for (const auto &[key, v] : {std::pair{"subcarriers", g.subcarriers}, std::pair{"snapshots", g.snapshots},
                                         std::pair{"rx_elements", g.rx_elements}, std::pair{"tx_elements", g.tx_elements}})
                check(v >= 1, r.at(key), "must be at least 1");
            for (const auto &[key, v] :
                 {std::pair{"subcarrier_spacing_hz", g.subcarrier_spacing_hz}, std::pair{"snapshot_interval_s", g.snapshot_interval_s},
                  std::pair{"rx_pitch_wavelengths", g.rx_pitch_wavelengths}, std::pair{"tx_pitch_wavelengths", g.tx_pitch_wavelengths}})
                check(v > 0.0, r.at(key), "must be positive");
            return g;
        }

        EstimationConfig parse_estimation(Reader &r)
        {
            EstimationConfig e;
            if (auto k = r.get("mode_counts", [](const json &j, const std::string &path)
                               { return as_array(j, path, as_size); }))
                e.mode_counts = *k;
            check(!e.mode_counts.empty(), r.at("mode_counts"), "must not be empty");
            for (std::size_t i = 0; i < e.mode_counts.size(); ++i)
                check(e.mode_counts[i] >= 2, item_path(r.at("mode_counts"), i), "RIS classification needs at least 2 modes");
            if (auto s = r.get("snr_db", [](const json &j, const std::string &path)
                               { return as_array(j, path, as_number); }))
                e.snr_db = *s;
            check(!e.snr_db.empty(), r.at("snr_db"), "must not be empty");
            e.trials = r.get("trials", as_size).value_or(e.trials);
            check(e.trials >= 1, r.at("trials"), "must be at least 1");
            e.paths = r.get("paths", as_size).value_or(e.paths);
            check(e.paths >= 1, r.at("paths"), "must be at least 1");
            e.ris_paths = r.get("ris_paths", as_size).value_or(e.ris_paths);
            check(e.ris_paths <= e.paths, r.at("ris_paths"), "must not exceed paths");
            e.grid = sub_object<GridConfig>(r, "grid", parse_grid).value_or(GridConfig{});
            const std::size_t smallest =
                std::min({e.grid.subcarriers, e.grid.snapshots, e.grid.rx_elements, e.grid.tx_elements});
            check(e.paths <= smallest, r.at("paths"), "exceeds the smallest observation dimension");
            e.ris_elements = r.get("ris_elements", as_size).value_or(e.ris_elements);
            check(e.ris_elements >= 1, r.at("ris_elements"), "must be at least 1");
            e.ris_pitch_wavelengths = r.get("ris_pitch_wavelengths", as_number).value_or(e.ris_pitch_wavelengths);
            check(e.ris_pitch_wavelengths > 0.0, r.at("ris_pitch_wavelengths"), "must be positive");
            e.incident_angle_deg = r.get("incident_angle_deg", as_number).value_or(e.incident_angle_deg);
            check(std::abs(e.incident_angle_deg) < 90.0, r.at("incident_angle_deg"), "must lie in (-90, 90)");
            e.steer_min_deg = r.get("steer_min_deg", as_number).value_or(e.steer_min_deg);
            e.steer_max_deg = r.get("steer_max_deg", as_number).value_or(e.steer_max_deg);
            check(e.steer_min_deg > -90.0, r.at("steer_min_deg"), "must exceed -90");
            check(e.steer_max_deg < 90.0 && e.steer_max_deg > e.steer_min_deg, r.at("steer_max_deg"),
                  "must lie in (steer_min_deg, 90)");
            return e;
        }

        TapConfig parse_tap(Reader &r)
        {
            TapConfig t;
            t.delay_s = r.require("delay_s", as_number);
            check(t.delay_s >= 0.0, r.at("delay_s"), "must be non-negative");
            t.power = r.require("power", as_number);
            check(t.power >= 0.0, r.at("power"), "must be non-negative");
            return t;
        }

        MetricsConfig parse_metrics(Reader &r)
        {
            MetricsConfig m;
            m.fading = sub_object<FadingConfig>(r, "fading", parse_fading);
            m.taps = object_array<TapConfig>(r, "taps", parse_tap);
            if (auto h = r.get("channel_matrix", [](const json &j, const std::string &path)
                               {
                                   return as_array(j, path, [](const json &row, const std::string &p)
                                                   { return as_array(row, p, as_complex); });
                               }))
                m.channel_matrix = *h;
            if (!m.channel_matrix.empty())
            {
                const std::size_t cols = m.channel_matrix.front().size();
                check(cols >= 1, r.at("channel_matrix"), "rows must not be empty");
                for (std::size_t i = 0; i < m.channel_matrix.size(); ++i)
                    check(m.channel_matrix[i].size() == cols, item_path(r.at("channel_matrix"), i), "rows must have equal length");
            }
            const auto present = [&](std::string_view name)
            {
                if (name == "doppler_spread")
                    return m.fading.has_value();
                if (name == "rms_delay_spread")
                    return !m.taps.empty();
                return !m.channel_matrix.empty();
            };
            if (auto req = r.get("requested", [](const json &j, const std::string &path)
                                 { return as_array(j, path, as_string); }))
            {
                m.requested = *req;
                for (std::size_t i = 0; i < m.requested.size(); ++i)
                {
                    const std::string p = item_path(r.at("requested"), i);
                    check(std::find(metric_names.begin(), metric_names.end(), m.requested[i]) != metric_names.end(), p,
                          "unknown metric \"" + m.requested[i] + "\"");
                    check(present(m.requested[i]), p, "input for metric \"" + m.requested[i] + "\" is missing");
                }
            }
            else
            {
                for (std::string_view name : metric_names)
                    if (present(name))
                        m.requested.emplace_back(name);
            }
            check(!m.requested.empty(), r.at("requested"), "no metric requested and no metric input given");
            return m;
        }

        OutputConfig parse_output(Reader &r)
        {
            OutputConfig o;
            o.path = r.get("path", as_string);
            o.format = r.get("format", as_string).value_or(o.format);
            check(format_from_string(o.format).has_value(), r.at("format"), "must be csv or json");
            return o;
        }

        // Which element-sum or geometric models can run from a distance alone
        bool needs_geometry(const std::string &model, const ModelConfig &m)
        {
            return !((model == "FREE_SPACE" || model == "TWO_RAY_RIS") && m.distance_m);
        }

        bool has_geometry(const AntennaConfig &a) { return a.position_m || a.polar; }

        void check_kind_blocks(const ExperimentConfig &c, const json &root)
        {
            const std::string kind(to_string(c.kind));
            auto need = [&](bool present, const char *block)
            { check(present, block, "required for experiment " + kind); };
            auto forbid = [&](const char *block)
            { check(!root.contains(block), block, "not used by experiment " + kind); };

            switch (c.kind)
            {
            case Kind::pathloss:
                need(c.scene.has_value(), "scene");
                need(c.model.has_value(), "model");
                for (const std::string &m : c.model->models)
                {
                    if (m != "FREE_SPACE")
                        check(c.panel.has_value(), "panel", "required by model " + m);
                    if (needs_geometry(m, *c.model))
                    {
                        check(has_geometry(c.scene->tx), "scene.tx", "position required by model " + m);
                        check(has_geometry(c.scene->rx), "scene.rx", "position required by model " + m);
                    }
                }
                for (const char *b : {"sweep", "profiles", "fading", "hardening", "estimation", "metrics"})
                    forbid(b);
                break;
            case Kind::sweep_ellipse:
                need(c.scene.has_value(), "scene");
                need(c.panel.has_value(), "panel");
                need(c.model.has_value(), "model");
                check(!has_geometry(c.scene->tx) && !has_geometry(c.scene->rx), "scene",
                      "Tx and Rx positions are set by the sweep; give gains only");
                for (const char *b : {"profiles", "fading", "hardening", "estimation", "metrics"})
                    forbid(b);
                break;
            case Kind::phase_gain:
                need(c.scene.has_value(), "scene");
                need(c.panel.has_value(), "panel");
                need(!c.profiles.empty(), "profiles");
                check(has_geometry(c.scene->tx), "scene.tx", "position required");
                check(has_geometry(c.scene->rx), "scene.rx", "position required");
                if (c.model)
                {
                    check(c.model->models.size() == 1, "model.models", "phase-gain evaluates exactly one model");
                    check(!c.model->profile, "model.profile", "use the profiles list for phase-gain");
                }
                for (const char *b : {"sweep", "fading", "hardening", "estimation", "metrics"})
                    forbid(b);
                break;
            case Kind::acf:
                need(c.fading.has_value(), "fading");
                for (const char *b : {"scene", "panel", "model", "sweep", "profiles", "hardening", "estimation", "metrics"})
                    forbid(b);
                break;
            case Kind::hardening:
                need(c.hardening.has_value(), "hardening");
                for (const char *b : {"scene", "panel", "model", "sweep", "profiles", "fading", "estimation", "metrics"})
                    forbid(b);
                break;
            case Kind::estimate:
                need(c.estimation.has_value(), "estimation");
                for (const char *b : {"scene", "panel", "model", "sweep", "profiles", "fading", "hardening", "metrics"})
                    forbid(b);
                break;
            case Kind::metrics:
                need(c.metrics.has_value(), "metrics");
                for (const char *b : {"scene", "panel", "model", "sweep", "profiles", "fading", "hardening", "estimation"})
                    forbid(b);
                break;
            }
        }

        json parse_strict(std::string_view text)
        {
            // One key set per open object, plus the key path for messages
            std::vector<std::set<std::string>> seen;
            std::vector<std::string> keys;
            json::parser_callback_t cb = [&](int, json::parse_event_t event, json &parsed)
            {
                switch (event)
                {
                case json::parse_event_t::object_start:
                    seen.emplace_back();
                    keys.emplace_back();
                    break;
                case json::parse_event_t::key:
                {
                    const std::string key = parsed.get<std::string>();
                    std::string path;
                    for (std::size_t i = 0; i + 1 < keys.size(); ++i)
                        if (!keys[i].empty())
                            path += keys[i] + ".";
                    path += key;
                    if (!seen.back().insert(key).second)
                        throw ConfigError(path + ": duplicate key");
                    keys.back() = key;
                    break;
                }
                case json::parse_event_t::object_end:
                    seen.pop_back();
                    keys.pop_back();
                    break;
                default:
                    break;
                }
                return true;
            };
            try
            {
                return json::parse(text.begin(), text.end(), cb);
            }
            catch (const json::parse_error &e)
            {
                throw ConfigError(std::string("<root>: invalid JSON: ") + e.what());
            }
        }

        // ---- Serialization ----------------------------------------------------------

        json vec_json(const Vec3 &v) { return json::array({v[0], v[1], v[2]}); }

        json antenna_json(const AntennaConfig &a)
        {
            json j;
            if (a.position_m)
                j["position_m"] = vec_json(*a.position_m);
            if (a.polar)
                j["polar"] = {{"distance_m", a.polar->distance_m}, {"theta_deg", a.polar->theta_deg}, {"phi_deg", a.polar->phi_deg}};
            j["gain_dbi"] = a.gain_dbi;
            return j;
        }

        json profile_json(const ProfileConfig &p)
        {
            json j;
            j["label"] = p.label;
            j["kind"] = p.kind;
            j["value_deg"] = p.value_deg;
            if (p.target_theta_deg)
                j["target_theta_deg"] = *p.target_theta_deg;
            if (p.target_phi_deg)
                j["target_phi_deg"] = *p.target_phi_deg;
            if (p.focus_m)
                j["focus_m"] = vec_json(*p.focus_m);
            if (!p.custom_deg.empty())
                j["custom_deg"] = p.custom_deg;
            if (p.quantization_bits)
                j["quantization_bits"] = *p.quantization_bits;
            return j;
        }

        json fading_json(const FadingConfig &f)
        {
            json j;
            j["preset"] = f.preset;
            j["frequency_hz"] = f.frequency_hz;
            j["speed_mps"] = f.speed_mps;
            j["heading_deg"] = f.heading_deg;
            j["sample_interval_s"] = f.sample_interval_s;
            j["snapshots"] = f.snapshots;
            j["runs"] = f.runs;
            j["max_lag"] = f.max_lag;
            j["ring_rays"] = f.ring_rays;
            j["baseline"] = f.baseline;
            if (f.preset == "custom")
            {
                j["k_factor"] = f.k_factor;
                j["los_aoa_deg"] = f.los_aoa_deg;
                j["random_rotation"] = f.random_rotation;
                json rays = json::array();
                for (const RayConfig &r : f.rays)
                    rays.push_back({{"power", r.power}, {"aoa_deg", r.aoa_deg}, {"delay_s", r.delay_s}, {"ris", r.ris}});
                j["rays"] = rays;
            }
            return j;
        }

        json config_json(const ExperimentConfig &c)
        {
            json j;
            j["experiment"] = std::string(to_string(c.kind));
            j["seed"] = c.seed;
            if (c.scene)
            {
                const SceneConfig &s = *c.scene;
                j["scene"] = {{"frequency_hz", s.frequency_hz},
                              {"tx", antenna_json(s.tx)},
                              {"rx", antenna_json(s.rx)},
                              {"ris", {{"center_m", vec_json(s.ris.center_m)}, {"normal", vec_json(s.ris.normal)}, {"x_axis", vec_json(s.ris.x_axis)}}}};
            }
            if (c.panel)
            {
                const PanelConfig &p = *c.panel;
                json pj = {{"m", p.m},
                           {"n", p.n},
                           {"dx_m", p.dx_m},
                           {"dy_m", p.dy_m},
                           {"pattern_exponent", p.pattern_exponent},
                           {"amplitude", p.amplitude},
                           {"efficiency", p.efficiency}};
                if (p.element_gain)
                    pj["element_gain"] = *p.element_gain;
                if (p.quantization_bits)
                    pj["quantization_bits"] = *p.quantization_bits;
                j["panel"] = pj;
            }
            if (c.model)
            {
                const ModelConfig &m = *c.model;
                json mj = {{"models", m.models}, {"tx_power_dbm", m.tx_power_dbm}};
                if (m.distance_m)
                    mj["distance_m"] = *m.distance_m;
                if (m.plate_a_m)
                    mj["plate_a_m"] = *m.plate_a_m;
                if (m.plate_b_m)
                    mj["plate_b_m"] = *m.plate_b_m;
                if (m.design_reflection_deg)
                    mj["design_reflection_deg"] = *m.design_reflection_deg;
                if (m.tile_response)
                    mj["tile_response"] = {(*m.tile_response)[0], (*m.tile_response)[1]};
                if (m.element)
                    mj["element"] = *m.element;
                if (m.profile)
                    mj["profile"] = profile_json(*m.profile);
                j["model"] = mj;
            }
            if (c.sweep)
            {
                const SweepConfig &s = *c.sweep;
                j["sweep"] = {{"focal_distance_m", s.focal_distance_m}, {"semi_major_m", s.semi_major_m},
                              {"d1_begin_m", s.d1_begin_m}, {"d1_end_m", s.d1_end_m}, {"steps", s.steps},
                              {"ris_normal", vec_json(s.ris_normal)}, {"ris_x_axis", vec_json(s.ris_x_axis)}};
            }
            if (!c.profiles.empty())
            {
                json arr = json::array();
                for (const ProfileConfig &p : c.profiles)
                    arr.push_back(profile_json(p));
                j["profiles"] = arr;
            }
            if (c.fading)
                j["fading"] = fading_json(*c.fading);
            if (c.hardening)
            {
                const HardeningConfig &h = *c.hardening;
                j["hardening"] = {{"links", h.links}, {"phases", h.phases}, {"q_values", h.q_values}, {"runs", h.runs}};
            }
            if (c.estimation)
            {
                const EstimationConfig &e = *c.estimation;
                const GridConfig &g = e.grid;
                j["estimation"] = {{"mode_counts", e.mode_counts},
                                   {"snr_db", e.snr_db},
                                   {"trials", e.trials},
                                   {"paths", e.paths},
                                   {"ris_paths", e.ris_paths},
                                   {"grid",
                                    {{"subcarriers", g.subcarriers},
                                     {"subcarrier_spacing_hz", g.subcarrier_spacing_hz},
                                     {"snapshots", g.snapshots},
                                     {"snapshot_interval_s", g.snapshot_interval_s},
                                     {"rx_elements", g.rx_elements},
                                     {"tx_elements", g.tx_elements},
                                     {"rx_pitch_wavelengths", g.rx_pitch_wavelengths},
                                     {"tx_pitch_wavelengths", g.tx_pitch_wavelengths}}},
                                   {"ris_elements", e.ris_elements},
                                   {"ris_pitch_wavelengths", e.ris_pitch_wavelengths},
                                   {"incident_angle_deg", e.incident_angle_deg},
                                   {"steer_min_deg", e.steer_min_deg},
                                   {"steer_max_deg", e.steer_max_deg}};
            }
            if (c.metrics)
            {
                const MetricsConfig &m = *c.metrics;
                json mj;
                mj["requested"] = m.requested;
                if (m.fading)
                    mj["fading"] = fading_json(*m.fading);
                if (!m.taps.empty())
                {
                    json taps = json::array();
                    for (const TapConfig &t : m.taps)
                        taps.push_back({{"delay_s", t.delay_s}, {"power", t.power}});
                    mj["taps"] = taps;
                }
                if (!m.channel_matrix.empty())
                {
                    json rows = json::array();
                    for (const auto &row : m.channel_matrix)
                    {
                        json r = json::array();
                        for (const auto &v : row)
                            r.push_back({v[0], v[1]});
                        rows.push_back(r);
                    }
                    mj["channel_matrix"] = rows;
                }
                j["metrics"] = mj;
            }
            json out = {{"format", c.output.format}};
            if (c.output.path)
                out["path"] = *c.output.path;
            j["output"] = out;
            return j;
        }

        // ---- Runtime objects ----------------------------------------------------------

        Point3 point(const Vec3 &v) { return {v[0], v[1], v[2]}; }

        RisPanel make_panel(const PanelConfig &c)
        {
            RisPanel p = RisPanel::uniform(c.m, c.n, c.dx_m, c.dy_m);
            p.pattern_exponent = c.pattern_exponent;
            p.element_gain = c.element_gain.value_or(2.0 * (c.pattern_exponent + 1.0));
            if (c.amplitude != 1.0)
                p.amplitude.assign(p.size(), c.amplitude);
            p.efficiency = c.efficiency;
            return p;
        }

        RisPose make_pose(const RisPoseConfig &c)
        {
            return RisPose::facing(point(c.center_m), point(c.normal), point(c.x_axis));
        }

        Antenna make_antenna(const AntennaConfig &c, const RisPose &pose)
        {
            Antenna a;
            a.gain = from_db(c.gain_dbi);
            if (c.position_m)
                a.position = point(*c.position_m);
            else if (c.polar)
                a.position = pose.center + c.polar->distance_m *
                                               pose.direction({deg_to_rad(c.polar->theta_deg), deg_to_rad(c.polar->phi_deg)});
            return a;
        }

        Scene make_scene(const SceneConfig &c, const RisPanel &panel)
        {
            const RisPose pose = make_pose(c.ris);
            return build_scene(make_antenna(c.tx, pose), make_antenna(c.rx, pose), panel, pose, c.frequency_hz);
        }

        // Designs the profile for this scene and stores it on the panel
        void apply_profile(RisPanel &panel, const ProfileConfig &c, const Scene &scene, std::uint64_t seed)
        {
            pathloss::PhaseProfileSpec spec;
            spec.kind = *pathloss::profile_kind_from_string(c.kind);
            spec.uniform_value = deg_to_rad(c.value_deg);
            spec.target = c.target_theta_deg
                              ? Direction{deg_to_rad(*c.target_theta_deg), deg_to_rad(c.target_phi_deg.value_or(0.0))}
                              : scene.reflection;
            if (c.focus_m)
                spec.focus = point(*c.focus_m);
            spec.seed = seed;
            spec.custom.reserve(c.custom_deg.size());
            for (double d : c.custom_deg)
                spec.custom.push_back(deg_to_rad(d));
            spec.quantization_bits = c.quantization_bits ? c.quantization_bits : panel.quantization_bits;
            panel.phase = pathloss::design_phase_profile(spec, panel, scene);
            panel.quantization_bits = spec.quantization_bits;
        }

        pathloss::ModelSpec make_model_spec(const ModelConfig &c, const std::string &name)
        {
            pathloss::ModelSpec s;
            s.model = *pathloss::model_from_string(name);
            s.distance = c.distance_m;
            s.plate_a = c.plate_a_m;
            s.plate_b = c.plate_b_m;
            if (c.design_reflection_deg)
                s.design_reflection = deg_to_rad(*c.design_reflection_deg);
            if (c.tile_response)
                s.tile_response = {(*c.tile_response)[0], (*c.tile_response)[1]};
            s.element = c.element;
            s.tx_power_dbm = c.tx_power_dbm;
            return s;
        }

        std::string region_name(const FieldRegion &r) { return r.is_far() ? "far" : "near"; }

        std::string join(const std::vector<std::string> &items)
        {
            std::string out;
            for (const std::string &s : items)
                out += (out.empty() ? "" : "; ") + s;
            return out;
        }

        smallscale::FadingScenario make_fading(const FadingConfig &c, std::uint64_t seed)
        {
            smallscale::FadingScenario s;
            if (c.preset == "ris_assisted")
                s = smallscale::FadingScenario::ris_assisted(c.frequency_hz, c.speed_mps, c.sample_interval_s, c.snapshots,
                                                             c.runs, seed);
            else if (c.preset == "isotropic_ring")
                s = smallscale::FadingScenario::isotropic_ring(c.ring_rays, c.frequency_hz, c.speed_mps, c.sample_interval_s,
                                                               c.snapshots, c.runs, seed);
            else
            {
                s.id = "custom";
                s.frequency = c.frequency_hz;
                s.speed = c.speed_mps;
                s.sample_interval = c.sample_interval_s;
                s.snapshots = c.snapshots;
                s.runs = c.runs;
                s.seed = seed;
                s.k_factor = c.k_factor;
                s.los_aoa = deg_to_rad(c.los_aoa_deg);
                s.random_rotation = c.random_rotation;
                for (const RayConfig &r : c.rays)
                    s.rays.push_back({r.power, deg_to_rad(r.aoa_deg), r.delay_s, r.ris});
            }
            s.heading = deg_to_rad(c.heading_deg);
            s.baseline = c.baseline == "no_ris" ? smallscale::Baseline::no_ris : smallscale::Baseline::static_ris;
            return s;
        }

        // ---- Experiments ------------------------------------------------------------

        ResultTable run_pathloss(const ExperimentConfig &c)
        {
            const ModelConfig &mc = *c.model;
            ResultTable t;
            t.columns = {{"model", "-"}, {"path_loss_db", "dB"}, {"received_power_dbm", "dBm"}, {"field_region", "-"}, {"warnings", "-"}};
            std::optional<RisPanel> panel;
            if (c.panel)
                panel = make_panel(*c.panel);
            std::optional<Scene> scene;
            const double f = c.scene->frequency_hz;
            for (const std::string &name : mc.models)
            {
                const double gt = from_db(c.scene->tx.gain_dbi), gr = from_db(c.scene->rx.gain_dbi);
                if (!needs_geometry(name, mc))
                {
                    const double d = *mc.distance_m;
                    double pl = 0.0;
                    if (name == "FREE_SPACE")
                        pl = pathloss::free_space_path_loss_db(d, f, gt, gr);
                    else
                        pl = mc.tx_power_dbm - pathloss::two_ray_ris_received_power_dbm(panel->size(), d, f, mc.tx_power_dbm);
                    const std::string region = panel ? region_name(classify_field_region(*panel, d, f)) : "n/a";
                    t.rows.push_back({name, pl, mc.tx_power_dbm - pl, region, std::string()});
                    continue;
                }
                if (!scene)
                {
                    scene = make_scene(*c.scene, *panel);
                    if (mc.profile)
                        apply_profile(*panel, *mc.profile, *scene, derive_seed(c.seed, 0));
                }
                const pathloss::PathLossResult r = pathloss::evaluate(make_model_spec(mc, name), *panel, *scene);
                t.rows.push_back({name, r.path_loss_db, r.received_power_dbm, region_name(r.field_region_used), join(r.warnings)});
            }
            return t;
        }

        ResultTable run_sweep(const ExperimentConfig &c)
        {
            const ModelConfig &mc = *c.model;
            const SweepConfig sw = c.sweep.value_or(SweepConfig{});
            EllipseSweep e;
            e.focal_distance = sw.focal_distance_m;
            e.semi_major = sw.semi_major_m;
            e.d1_begin = sw.d1_begin_m;
            e.d1_end = sw.d1_end_m;
            e.steps = sw.steps;

            ResultTable t;
            t.columns = {{"d1_m", "m"}, {"d2_m", "m"}};
            for (const std::string &name : mc.models)
                t.columns.push_back({"path_loss_db_" + name, "dB"});

            const double half = 0.5 * sw.focal_distance_m;
            const RisPanel base = make_panel(*c.panel);
            for (const EllipsePosition &pos : ellipse_sweep_positions(e))
            {
                RisPanel panel = base;
                const RisPose pose = RisPose::facing(pos.ris_center, point(sw.ris_normal), point(sw.ris_x_axis));
                const Antenna tx{{-half, 0.0, 0.0}, from_db(c.scene->tx.gain_dbi)};
                const Antenna rx{{half, 0.0, 0.0}, from_db(c.scene->rx.gain_dbi)};
                const Scene scene = build_scene(tx, rx, panel, pose, c.scene->frequency_hz);
                if (mc.profile)
                    apply_profile(panel, *mc.profile, scene, derive_seed(c.seed, 0));
                std::vector<Value> row{pos.d1, pos.d2};
                for (const std::string &name : mc.models)
                    row.emplace_back(pathloss::evaluate(make_model_spec(mc, name), panel, scene).path_loss_db);
                t.rows.push_back(std::move(row));
            }
            return t;
        }

        ResultTable run_phase_gain(const ExperimentConfig &c)
        {
            ModelConfig mc = c.model.value_or(ModelConfig{});
            if (mc.models.empty())
                mc.models = {"TANG_GENERAL"};
            ResultTable t;
            t.columns = {{"profile", "-"}, {"received_power_dbm", "dBm"}, {"path_loss_db", "dB"}};
            const RisPanel base = make_panel(*c.panel);
            const Scene scene = make_scene(*c.scene, base);
            for (std::size_t i = 0; i < c.profiles.size(); ++i)
            {
                RisPanel panel = base;
                apply_profile(panel, c.profiles[i], scene, derive_seed(c.seed, i));
                const auto r = pathloss::evaluate(make_model_spec(mc, mc.models.front()), panel, scene);
                t.rows.push_back({c.profiles[i].label, r.received_power_dbm, r.path_loss_db});
            }
            return t;
        }

        ResultTable run_acf(const ExperimentConfig &c)
        {
            const FadingConfig &fc = *c.fading;
            smallscale::FadingScenario on = make_fading(fc, c.seed);
            on.ris_tracking = true;
            smallscale::FadingScenario off = on;
            off.ris_tracking = false;
            const auto acf_on = smallscale::temporal_acf(smallscale::simulate_time_varying_channel(on), fc.max_lag);
            const auto acf_off = smallscale::temporal_acf(smallscale::simulate_time_varying_channel(off), fc.max_lag);
            ResultTable t;
            t.columns = {{"lag_s", "s"}, {"abs_acf_ris_on", "1"}, {"abs_acf_ris_off", "1"}};
            for (std::size_t k = 0; k <= fc.max_lag; ++k)
                t.rows.push_back({static_cast<double>(k) * fc.sample_interval_s, std::abs(acf_on[k]), std::abs(acf_off[k])});
            return t;
        }

        ResultTable run_hardening(const ExperimentConfig &c)
        {
            const HardeningConfig &h = *c.hardening;
            const auto links = h.links == "unit" ? smallscale::LinkModel::unit : smallscale::LinkModel::rayleigh;
            ResultTable t;
            t.columns = {{"phases", "-"}, {"Q", "1"}, {"mean_snr", "1"}, {"snr_over_q2", "1"}, {"var_ratio", "1"}};
            for (const std::string &ph : h.phases)
            {
                const auto phases = ph == "random" ? smallscale::PhaseConfig::random : smallscale::PhaseConfig::co_phased;
                for (const auto &p : smallscale::hardening_statistics(links, phases, h.q_values, h.runs, c.seed))
                    t.rows.push_back({ph, static_cast<double>(p.q), p.mean_snr, p.snr_over_q2, p.var_ratio});
            }
            return t;
        }

        ResultTable run_estimate(const ExperimentConfig &c)
        {
            const EstimationConfig &e = *c.estimation;
            estimation::StudyConfig s;
            s.mode_counts = e.mode_counts;
            s.snr_db = e.snr_db;
            s.trials = e.trials;
            s.paths = e.paths;
            s.ris_paths = e.ris_paths;
            s.grid.subcarriers = e.grid.subcarriers;
            s.grid.subcarrier_spacing = e.grid.subcarrier_spacing_hz;
            s.grid.snapshots = e.grid.snapshots;
            s.grid.snapshot_interval = e.grid.snapshot_interval_s;
            s.grid.rx_elements = e.grid.rx_elements;
            s.grid.tx_elements = e.grid.tx_elements;
            s.grid.rx_pitch = e.grid.rx_pitch_wavelengths;
            s.grid.tx_pitch = e.grid.tx_pitch_wavelengths;
            s.ris_elements = e.ris_elements;
            s.ris_pitch = e.ris_pitch_wavelengths;
            s.incident_angle = deg_to_rad(e.incident_angle_deg);
            s.steer_min = deg_to_rad(e.steer_min_deg);
            s.steer_max = deg_to_rad(e.steer_max_deg);
            s.seed = c.seed;

            ResultTable t;
            t.columns = {{"snr_db", "dB"},          {"K", "1"},
                         {"rmsee", "1"},            {"rmsee_delay_s", "s"},
                         {"rmsee_aoa_rad", "rad"},  {"rmsee_aod_rad", "rad"},
                         {"rmsee_doppler_hz", "Hz"}, {"rmsee_ris_reflect_rad", "rad"},
                         {"ris_detection_rate", "1"}, {"false_flag_rate", "1"}};
            for (const estimation::StudyCell &cell : estimation::run_rmsee_study(s))
            {
                const auto &r = cell.report;
                t.rows.push_back({cell.snr_db, static_cast<double>(cell.modes), r.aggregate, r.delay, r.aoa, r.aod, r.doppler,
                                  r.ris_reflect, cell.ris_detection_rate, cell.false_flag_rate});
            }
            return t;
        }

        ResultTable run_metrics(const ExperimentConfig &c)
        {
            const MetricsConfig &m = *c.metrics;
            const auto wanted = [&](std::string_view name)
            { return std::find(m.requested.begin(), m.requested.end(), name) != m.requested.end(); };

            std::optional<smallscale::ChannelSeries> series;
            if (wanted("doppler_spread"))
                series = smallscale::simulate_time_varying_channel(make_fading(*m.fading, c.seed));
            std::vector<smallscale::Tap> taps;
            if (wanted("rms_delay_spread"))
                for (const TapConfig &tc : m.taps)
                    taps.push_back({tc.delay_s, tc.power});
            std::optional<smallscale::Matrix> h;
            if (wanted("effective_rank") || wanted("condition_number"))
            {
                h = smallscale::Matrix(static_cast<Eigen::Index>(m.channel_matrix.size()),
                                       static_cast<Eigen::Index>(m.channel_matrix.front().size()));
                for (std::size_t i = 0; i < m.channel_matrix.size(); ++i)
                    for (std::size_t j = 0; j < m.channel_matrix[i].size(); ++j)
                        (*h)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = {m.channel_matrix[i][j][0],
                                                                                           m.channel_matrix[i][j][1]};
            }
            const smallscale::ChannelMetrics r =
                smallscale::channel_metrics(series ? &*series : nullptr, taps, h ? &*h : nullptr);

            constexpr double nan = std::numeric_limits<double>::quiet_NaN();
            ResultTable t;
            t.columns = {{"doppler_spread_hz", "Hz"}, {"rms_delay_spread_s", "s"}, {"effective_rank", "1"}, {"condition_number", "1"}};
            t.rows.push_back({wanted("doppler_spread") && r.doppler_spread ? *r.doppler_spread : nan,
                              wanted("rms_delay_spread") && r.rms_delay_spread ? *r.rms_delay_spread : nan,
                              wanted("effective_rank") && r.effective_rank ? static_cast<double>(*r.effective_rank) : nan,
                              wanted("condition_number") && r.condition_number ? *r.condition_number : nan});
            return t;
        }

        // ---- Output -------------------------------------------------------------------

        std::string format_number(double v)
        {
            if (std::isnan(v))
                return "NaN";
            if (std::isinf(v))
                return v > 0 ? "inf" : "-inf";
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.9g", v);
            return buf;
        }

        std::string csv_field(const std::string &s)
        {
            if (s.find_first_of(",\"\r\n") == std::string::npos)
                return s;
            std::string out = "\"";
            for (char ch : s)
            {
                if (ch == '"')
                    out += '"';
                out += ch;
            }
            return out + "\"";
        }

        std::uint64_t fnv1a(std::string_view s)
        {
            std::uint64_t h = 0xcbf29ce484222325ULL;
            for (unsigned char ch : s)
            {
                h ^= ch;
                h *= 0x100000001b3ULL;
            }
            return h;
        }
    }

    std::string_view to_string(Kind kind)
    {
        for (const auto &[k, name] : kind_names)
            if (k == kind)
                return name;
        return "unknown";
    }

    std::optional<Kind> kind_from_string(std::string_view name)
    {
        for (const auto &[k, n] : kind_names)
            if (n == name)
                return k;
        return std::nullopt;
    }

    std::optional<Format> format_from_string(std::string_view name)
    {
        if (name == "csv")
            return Format::csv;
        if (name == "json")
            return Format::json;
        return std::nullopt;
    }

    ExperimentConfig parse_config(std::string_view text)
    {
        const json root = parse_strict(text);
        Reader r(root, "");
        ExperimentConfig c;
        const std::string kind = r.require("experiment", as_string);
        const auto k = kind_from_string(kind);
        check(k.has_value(), "experiment", "unknown experiment kind \"" + kind + "\"");
        c.kind = *k;
        c.seed = r.get("seed", as_uint).value_or(1);
        c.scene = sub_object<SceneConfig>(r, "scene", parse_scene);
        c.panel = sub_object<PanelConfig>(r, "panel", parse_panel);
        c.model = sub_object<ModelConfig>(r, "model", parse_model);
        c.sweep = sub_object<SweepConfig>(r, "sweep", parse_sweep);
        c.profiles = object_array<ProfileConfig>(r, "profiles", parse_profile);
        c.fading = sub_object<FadingConfig>(r, "fading", parse_fading);
        c.hardening = sub_object<HardeningConfig>(r, "hardening", parse_hardening);
        c.estimation = sub_object<EstimationConfig>(r, "estimation", parse_estimation);
        c.metrics = sub_object<MetricsConfig>(r, "metrics", parse_metrics);
        c.output = sub_object<OutputConfig>(r, "output", parse_output).value_or(OutputConfig{});
        r.finish();
        check_kind_blocks(c, root);
        return c;
    }

    std::string serialize_config(const ExperimentConfig &config) { return config_json(config).dump(2) + "\n"; }

    std::string config_hash(const ExperimentConfig &config)
    {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(serialize_config(config))));
        return buf;
    }

    std::size_t ResultTable::column(std::string_view name) const
    {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i].name == name)
                return i;
        throw std::out_of_range("no column named " + std::string(name));
    }

    double ResultTable::number(std::size_t row, std::string_view name) const
    {
        return std::get<double>(rows.at(row).at(column(name)));
    }

    void ResultTable::validate() const
    {
        for (const Column &c : columns)
            if (c.name.empty() || c.unit.empty())
                throw std::logic_error("every column needs a name and a unit");
        for (const auto &row : rows)
        {
            if (row.size() != columns.size())
                throw std::logic_error("result table is not rectangular");
            for (std::size_t i = 0; i < row.size(); ++i)
                if (std::holds_alternative<std::string>(row[i]) != columns[i].is_text())
                    throw std::logic_error("cell type does not match column " + columns[i].name);
        }
    }

    ResultTable run_experiment(const ExperimentConfig &config)
    {
        ResultTable t;
        try
        {
            switch (config.kind)
            {
            case Kind::pathloss:
                t = run_pathloss(config);
                break;
            case Kind::sweep_ellipse:
                t = run_sweep(config);
                break;
            case Kind::phase_gain:
                t = run_phase_gain(config);
                break;
            case Kind::acf:
                t = run_acf(config);
                break;
            case Kind::hardening:
                t = run_hardening(config);
                break;
            case Kind::estimate:
                t = run_estimate(config);
                break;
            case Kind::metrics:
                t = run_metrics(config);
                break;
            }
        }
        catch (const ConfigError &)
        {
            throw;
        }
        catch (const std::exception &e)
        {
            throw std::runtime_error("experiment " + std::string(to_string(config.kind)) + ": " + e.what());
        }
        t.provenance = {std::string(to_string(config.kind)), config_hash(config), config.seed, std::string(version)};
        t.validate();
        return t;
    }

    std::string to_csv(const ResultTable &table)
    {
        table.validate();
        std::string out;
        for (std::size_t i = 0; i < table.columns.size(); ++i)
            out += (i ? "," : "") + csv_field(table.columns[i].name + "[" + table.columns[i].unit + "]");
        out += "\n";
        for (const auto &row : table.rows)
        {
            for (std::size_t i = 0; i < row.size(); ++i)
            {
                if (i)
                    out += ",";
                if (const auto *s = std::get_if<std::string>(&row[i]))
                    out += csv_field(*s);
                else
                    out += format_number(std::get<double>(row[i]));
            }
            out += "\n";
        }
        const Provenance &p = table.provenance;
        out += "# experiment=" + p.experiment + "\n";
        out += "# config_hash=" + p.config_hash + "\n";
        out += "# seed=" + std::to_string(p.seed) + "\n";
        out += "# version=" + p.version + "\n";
        return out;
    }

    std::string to_json(const ResultTable &table)
    {
        table.validate();
        nlohmann::ordered_json j;
        j["columns"] = nlohmann::ordered_json::array();
        for (const Column &c : table.columns)
            j["columns"].push_back({{"name", c.name}, {"unit", c.unit}});
        j["rows"] = nlohmann::ordered_json::array();
        for (const auto &row : table.rows)
        {
            nlohmann::ordered_json r = nlohmann::ordered_json::array();
            for (const Value &v : row)
            {
                if (const auto *s = std::get_if<std::string>(&v))
                    r.push_back(*s);
                else
                {
                    const double d = std::get<double>(v);
                    if (std::isnan(d))
                        r.push_back(nullptr);
                    else if (std::isinf(d))
                        r.push_back(d > 0 ? "inf" : "-inf");
                    else
                        r.push_back(d);
                }
            }
            j["rows"].push_back(r);
        }
        const Provenance &p = table.provenance;
        j["provenance"] = {{"experiment", p.experiment}, {"config_hash", p.config_hash}, {"seed", p.seed}, {"version", p.version}};
        return j.dump(2) + "\n";
    }

    ResultTable table_from_json(std::string_view text)
    {
        const json j = json::parse(text.begin(), text.end());
        ResultTable t;
        for (const json &c : j.at("columns"))
            t.columns.push_back({c.at("name").get<std::string>(), c.at("unit").get<std::string>()});
        for (const json &row : j.at("rows"))
        {
            std::vector<Value> r;
            for (std::size_t i = 0; i < row.size(); ++i)
            {
                const json &v = row[i];
                if (i < t.columns.size() && t.columns[i].is_text())
                    r.emplace_back(v.get<std::string>());
                else if (v.is_null())
                    r.emplace_back(std::numeric_limits<double>::quiet_NaN());
                else if (v.is_string())
                    r.emplace_back(v.get<std::string>() == "-inf" ? -std::numeric_limits<double>::infinity()
                                                                  : std::numeric_limits<double>::infinity());
                else
                    r.emplace_back(v.get<double>());
            }
            t.rows.push_back(std::move(r));
        }
        const json &p = j.at("provenance");
        t.provenance = {p.at("experiment").get<std::string>(), p.at("config_hash").get<std::string>(),
                        p.at("seed").get<std::uint64_t>(), p.at("version").get<std::string>()};
        t.validate();
        return t;
    }

    void emit(const ResultTable &table, Format format, const std::string &path)
    {
        const std::string text = format == Format::csv ? to_csv(table) : to_json(table);
        namespace fs = std::filesystem;
        const fs::path target(path);
        fs::path tmp = target;
        tmp += ".tmp-" + std::to_string(::getpid());
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out)
                throw std::runtime_error("cannot write " + path + ": cannot create temporary file");
            out.write(text.data(), static_cast<std::streamsize>(text.size()));
            out.close();
            if (!out)
            {
                std::error_code ec;
                fs::remove(tmp, ec);
                throw std::runtime_error("cannot write " + path + ": write failed");
            }
        }
        std::error_code ec;
        fs::rename(tmp, target, ec);
        if (ec)
        {
            std::error_code ignore;
            fs::remove(tmp, ignore);
            throw std::runtime_error("cannot write " + path + ": " + ec.message());
        }
    }
}
