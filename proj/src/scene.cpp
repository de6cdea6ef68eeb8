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


#include "rischan/scene.hpp"
#include "rischan/units.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace rischan
{
    Point3 Point3::normalized() const
    {
        const double n = norm();
        if (!(n > 0.0) || !std::isfinite(n))
            throw std::invalid_argument("cannot normalize a zero or non-finite vector");
        return (1.0 / n) * *this;
    }

    RisPose RisPose::facing(Point3 center, Point3 normal, Point3 x_hint)
    {
        const Point3 nz = normal.normalized();
        const Point3 projected = x_hint - nz.dot(x_hint) * nz;
        const Point3 ux = projected.normalized();
        const Point3 uy = nz.cross(ux);
        return {center, ux, uy};
    }

    Point3 RisPose::direction(Direction d) const
    {
        const Point3 n = normal();
        return std::sin(d.theta) * std::cos(d.phi) * x_axis +
               std::sin(d.theta) * std::sin(d.phi) * y_axis +
               std::cos(d.theta) * n;
    }

    double RisPanel::mean_amplitude() const
    {
        if (amplitude.empty())
            return 1.0;
        return std::accumulate(amplitude.begin(), amplitude.end(), 0.0) / static_cast<double>(amplitude.size());
    }

    void RisPanel::validate() const
    {
        if (m_count < 1 || n_count < 1)
            throw std::invalid_argument("RIS panel needs at least one element along each axis");
        if (!(dx > 0.0) || !(dy > 0.0))
            throw std::invalid_argument("RIS element pitch must be positive");
        if (!(element_gain > 0.0))
            throw std::invalid_argument("RIS element gain must be positive");
        if (!(pattern_exponent >= 0.0))
            throw std::invalid_argument("RIS pattern exponent must be non-negative");
        if (!(efficiency > 0.0 && efficiency <= 1.0))
            throw std::invalid_argument("RIS efficiency must lie in (0, 1]");
        if (!amplitude.empty())
        {
            if (amplitude.size() != size())
                throw std::invalid_argument("RIS amplitude grid does not match the panel size");
            for (double a : amplitude)
                if (!(a >= 0.0 && a <= 1.0))
                    throw std::invalid_argument("RIS amplitude entries must lie in [0, 1]");
        }
        if (!phase.empty())
        {
            if (phase.size() != size())
                throw std::invalid_argument("RIS phase grid does not match the panel size");
            for (double p : phase)
                if (!(p >= 0.0 && p < two_pi))
                    throw std::invalid_argument("RIS phases must lie in [0, 2pi)");
        }
        if (quantization_bits)
        {
            if (*quantization_bits < 1)
                throw std::invalid_argument("quantization bits must be positive");
            const double step = two_pi / std::ldexp(1.0, *quantization_bits);
            for (double p : phase)
            {
                const double k = p / step;
                if (std::abs(k - std::round(k)) > 1e-9)
                    throw std::invalid_argument("RIS phase is not a multiple of the quantization step");
            }
        }
    }

    RisPanel RisPanel::uniform(std::size_t m_count, std::size_t n_count, double dx, double dy)
    {
        RisPanel p;
        p.m_count = m_count;
        p.n_count = n_count;
        p.dx = dx;
        p.dy = dy;
        p.pattern_exponent = 3.0;
        p.element_gain = 2.0 * (p.pattern_exponent + 1.0);
        return p;
    }

    double Scene::wavelength() const { return rischan::wavelength(frequency); }

    namespace
    {
        Direction direction_in_frame(const RisPose &pose, Point3 v)
        {
            const Point3 u = v.normalized();
            const double cz = std::clamp(u.dot(pose.normal()), -1.0, 1.0);
            const double ux = u.dot(pose.x_axis), uy = u.dot(pose.y_axis);
            const double phi = (ux == 0.0 && uy == 0.0) ? 0.0 : wrap_two_pi(std::atan2(uy, ux));
            return {std::acos(cz), phi};
        }

        void check_pose(const RisPose &pose)
        {
            if (!pose.center.finite() || !pose.x_axis.finite() || !pose.y_axis.finite())
                throw std::invalid_argument("RIS pose must be finite");
            constexpr double tol = 1e-9;
            if (std::abs(pose.x_axis.norm() - 1.0) > tol || std::abs(pose.y_axis.norm() - 1.0) > tol ||
                std::abs(pose.x_axis.dot(pose.y_axis)) > tol)
                throw std::invalid_argument("RIS pose basis must be orthonormal");
        }
    }

    Scene build_scene(const Antenna &tx, const Antenna &rx, const RisPanel &panel, const RisPose &pose, double frequency)
    {
        if (!(frequency > 0.0))
            throw std::invalid_argument("carrier frequency must be positive");
        if (!tx.position.finite() || !rx.position.finite())
            throw std::invalid_argument("antenna positions must be finite");
        if (!(tx.gain > 0.0) || !(rx.gain > 0.0))
            throw std::invalid_argument("antenna gains must be positive");
        panel.validate();
        check_pose(pose);

        Scene s;
        s.tx = tx;
        s.rx = rx;
        s.pose = pose;
        s.frequency = frequency;
        s.m_count = panel.m_count;
        s.n_count = panel.n_count;

        const Point3 normal = pose.normal();
        const Point3 to_tx = tx.position - pose.center;
        const Point3 to_rx = rx.position - pose.center;
        s.d1 = to_tx.norm();
        s.d2 = to_rx.norm();
        s.d_tr = (rx.position - tx.position).norm();
        if (!(s.d1 > 0.0) || !(s.d2 > 0.0) || !(s.d_tr > 0.0))
            throw GeometryError("Tx, Rx and RIS must be at distinct positions");

        s.incidence = direction_in_frame(pose, to_tx);
        s.reflection = direction_in_frame(pose, to_rx);
        s.observation_theta = s.reflection.theta;
        if (!(to_tx.dot(normal) > 0.0))
            throw GeometryError("Tx lies behind or in the RIS plane (theta_t >= 90 deg)");
        if (!(to_rx.dot(normal) > 0.0))
            throw GeometryError("Rx lies behind or in the RIS plane (theta_r >= 90 deg)");

        const std::size_t count = panel.size();
        s.element_positions.resize(count);
        s.r_tx.resize(count);
        s.r_rx.resize(count);
        s.cos_tx.resize(count);
        s.cos_rx.resize(count);
        for (std::size_t n = 0; n < panel.n_count; ++n)
            for (std::size_t m = 0; m < panel.m_count; ++m)
            {
                const std::size_t i = panel.index(n, m);
                const Point3 p = pose.center + panel.offset_x(m) * pose.x_axis + panel.offset_y(n) * pose.y_axis;
                const Point3 vt = tx.position - p;
                const Point3 vr = rx.position - p;
                s.element_positions[i] = p;
                s.r_tx[i] = vt.norm();
                s.r_rx[i] = vr.norm();
                if (!(s.r_tx[i] > 0.0) || !(s.r_rx[i] > 0.0))
                    throw GeometryError("Tx or Rx coincides with an RIS element");
                s.cos_tx[i] = vt.dot(normal) / s.r_tx[i];
                s.cos_rx[i] = vr.dot(normal) / s.r_rx[i];
                if (!(s.cos_tx[i] > 0.0) || !(s.cos_rx[i] > 0.0))
                    throw GeometryError("Tx or Rx lies behind RIS element " + std::to_string(i));
            }
        return s;
    }

    double rayleigh_distance(const RisPanel &panel, double frequency)
    {
        const double d = panel.diagonal();
        return 2.0 * d * d / wavelength(frequency);
    }

    FieldRegion classify_field_region(const RisPanel &panel, double distance, double frequency)
    {
        if (!(distance > 0.0))
            throw std::invalid_argument("distance must be positive");
        FieldRegion r;
        r.rayleigh_distance = rayleigh_distance(panel, frequency);
        r.kind = distance > r.rayleigh_distance ? FieldRegion::Kind::far : FieldRegion::Kind::near;
        return r;
    }

    std::vector<EllipsePosition> ellipse_sweep_positions(const EllipseSweep &sweep)
    {
        const double c = 0.5 * sweep.focal_distance;
        const double a = sweep.semi_major;
        if (!(sweep.focal_distance > 0.0))
            throw GeometryError("focal distance must be positive");
        if (!(a > c))
            throw GeometryError("degenerate ellipse: semi-major axis must exceed half the Tx-Rx distance");
        if (sweep.steps < 2)
            throw std::invalid_argument("ellipse sweep needs at least two steps");
        const double d1_min = a - c, d1_max = a + c;
        for (double d1 : {sweep.d1_begin, sweep.d1_end})
            if (!(d1 >= d1_min && d1 <= d1_max))
                throw GeometryError("requested d1 lies outside [a - c, a + c]");

        const double e = c / a;
        const double b = std::sqrt(a * a - c * c);
        std::vector<EllipsePosition> out;
        out.reserve(sweep.steps);
        const double last = static_cast<double>(sweep.steps - 1);
        for (std::size_t i = 0; i < sweep.steps; ++i)
        {
            const double t = static_cast<double>(i) / last;
            const double d1 = (i + 1 == sweep.steps) ? sweep.d1_end : sweep.d1_begin + t * (sweep.d1_end - sweep.d1_begin);
            // Focal-radius form: distance to the focus (-c, 0) is a + e x
            const double x = (d1 - a) / e;
            const double y = b * std::sqrt(std::max(0.0, 1.0 - (x * x) / (a * a)));
            EllipsePosition p;
            p.ris_center = {x, y, 0.0};
            p.d1 = (p.ris_center - Point3{-c, 0.0, 0.0}).norm();
            p.d2 = (p.ris_center - Point3{c, 0.0, 0.0}).norm();
            out.push_back(p);
        }
        return out;
    }
}
