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


#ifndef RISCHAN_SCENE_HPP
#define RISCHAN_SCENE_HPP

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

namespace rischan
{
    struct Point3
    {
        double x = 0.0, y = 0.0, z = 0.0;

        friend Point3 operator+(Point3 a, Point3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
        friend Point3 operator-(Point3 a, Point3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
        friend Point3 operator*(double s, Point3 a) { return {s * a.x, s * a.y, s * a.z}; }
        friend bool operator==(const Point3 &, const Point3 &) = default;

        double dot(Point3 o) const { return x * o.x + y * o.y + z * o.z; }
        double norm() const { return std::sqrt(dot(*this)); }
        Point3 cross(Point3 o) const { return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x}; }
        Point3 normalized() const;
        bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
    };

    // Thrown for impossible Tx/RIS/Rx arrangements
    class GeometryError : public std::invalid_argument
    {
    public:
        using std::invalid_argument::invalid_argument;
    };

    // Antenna position with linear gain
    struct Antenna
    {
        Point3 position;
        double gain = 1.0;
    };

    // Elevation theta from the panel normal, azimuth phi in the panel plane from x_axis.
    struct Direction
    {
        double theta = 0.0;
        double phi = 0.0;
    };

    // Position and orientation of the RIS. The outward normal is x_axis x y_axis.
    struct RisPose
    {
        Point3 center;
        Point3 x_axis{1.0, 0.0, 0.0};
        Point3 y_axis{0.0, 1.0, 0.0};

        Point3 normal() const { return x_axis.cross(y_axis); }

        // Builds a right-handed frame with the given outward normal; x_hint is
        // projected onto the panel plane.
        static RisPose facing(Point3 center, Point3 normal, Point3 x_hint);

        // Unit vector for (theta, phi) in this frame
        Point3 direction(Direction d) const;
    };

    // Element grid with per-element reflection state. Elements are stored
    // row-major: index = n * m_count + m, m running along x_axis.
    struct RisPanel
    {
        std::size_t m_count = 1;
        std::size_t n_count = 1;
        double dx = 0.01;
        double dy = 0.01;
        double element_gain = 8.0;     // linear G
        double pattern_exponent = 3.0; // q in cos^q
        double efficiency = 1.0;       // eta
        std::vector<double> amplitude; // A per element, empty means all ones
        std::vector<double> phase;     // radians per element, empty means all zeros
        std::optional<int> quantization_bits;

        std::size_t size() const { return m_count * n_count; }
        std::size_t index(std::size_t n, std::size_t m) const { return n * m_count + m; }
        double amplitude_at(std::size_t i) const { return amplitude.empty() ? 1.0 : amplitude[i]; }
        double phase_at(std::size_t i) const { return phase.empty() ? 0.0 : phase[i]; }
        double mean_amplitude() const;

        double width() const { return static_cast<double>(m_count) * dx; }
        double height() const { return static_cast<double>(n_count) * dy; }
        double diagonal() const { return std::hypot(width(), height()); }

        // Element (n, m) offset from the panel center in panel coordinates
        double offset_x(std::size_t m) const { return (static_cast<double>(m) - 0.5 * (static_cast<double>(m_count) - 1.0)) * dx; }
        double offset_y(std::size_t n) const { return (static_cast<double>(n) - 0.5 * (static_cast<double>(n_count) - 1.0)) * dy; }

        // Throws std::invalid_argument on a violated invariant
        void validate() const;

        // Uniform panel with default element model (q = 3, G = 2(q+1))
        static RisPanel uniform(std::size_t m_count, std::size_t n_count, double dx, double dy);
    };

    struct FieldRegion
    {
        enum class Kind
        {
            near,
            far
        };
        Kind kind = Kind::near;
        double rayleigh_distance = 0.0;

        bool is_far() const { return kind == Kind::far; }
    };

    // Derived Tx-RIS-Rx geometry. Immutable after build_scene.
    struct Scene
    {
        Antenna tx;
        Antenna rx;
        RisPose pose;
        double frequency = 0.0;

        double d1 = 0.0;   // Tx -> RIS center
        double d2 = 0.0;   // RIS center -> Rx
        double d_tr = 0.0; // Tx -> Rx
        Direction incidence;  // toward Tx
        Direction reflection; // toward Rx
        double observation_theta = 0.0;

        std::size_t m_count = 0, n_count = 0;
        std::vector<Point3> element_positions;
        std::vector<double> r_tx, r_rx;         // per-element ray lengths
        std::vector<double> cos_tx, cos_rx;     // per-element cosine from the normal

        double wavelength() const;
        std::size_t size() const { return element_positions.size(); }
    };

    // Builds the derived geometry. Throws GeometryError if Tx or Rx is not in
    // front of the panel, std::invalid_argument on bad frequency or pose.
    Scene build_scene(const Antenna &tx, const Antenna &rx, const RisPanel &panel, const RisPose &pose, double frequency);

    // Rayleigh distance 2 D^2 / lambda with D the panel diagonal
    double rayleigh_distance(const RisPanel &panel, double frequency);

    // FAR iff distance > Rayleigh distance (the boundary counts as NEAR)
    FieldRegion classify_field_region(const RisPanel &panel, double distance, double frequency);

    // RIS position on the ellipse whose foci are Tx (-c, 0, 0) and Rx (c, 0, 0)
    struct EllipsePosition
    {
        Point3 ris_center;
        double d1 = 0.0;
        double d2 = 0.0;
    };

    struct EllipseSweep
    {
        double focal_distance = 200.0; // d = 2c
        double semi_major = 200.0;     // a
        double d1_begin = 140.0;
        double d1_end = 200.0;
        std::size_t steps = 61;
    };

    // Positions on the upper half (y >= 0) of the ellipse with d1 spaced
    // uniformly from d1_begin to d1_end. Throws GeometryError for a degenerate
    // ellipse or a d1 range outside [a - c, a + c].
    std::vector<EllipsePosition> ellipse_sweep_positions(const EllipseSweep &sweep);
}

#endif
