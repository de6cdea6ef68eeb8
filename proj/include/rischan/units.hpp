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

#ifndef RISCHAN_UNITS_HPP
#define RISCHAN_UNITS_HPP

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rischan
{
    inline constexpr double speed_of_light = 299792458.0; // m/s
    inline constexpr double pi = std::numbers::pi;
    inline constexpr double two_pi = 2.0 * std::numbers::pi;

    inline double wavelength(double frequency_hz)
    {
        if (!(frequency_hz > 0.0))
            throw std::invalid_argument("frequency must be positive");
        return speed_of_light / frequency_hz;
    }

    inline double deg_to_rad(double deg) { return deg * (pi / 180.0); }
    inline double rad_to_deg(double rad) { return rad * (180.0 / pi); }

    // Power ratio <-> dB
    inline double to_db(double linear) { return 10.0 * std::log10(linear); }
    inline double from_db(double db) { return std::pow(10.0, db / 10.0); }

    // Amplitude ratio <-> dB (20 log10)
    inline double amplitude_to_db(double amplitude) { return 20.0 * std::log10(amplitude); }
    inline double db_to_amplitude(double db) { return std::pow(10.0, db / 20.0); }

    // Wraps an angle into [0, 2pi)
    inline double wrap_two_pi(double angle)
    {
        double r = std::fmod(angle, two_pi);
        if (r < 0.0)
            r += two_pi;
        if (r >= two_pi) // fmod of tiny negatives can round up to 2pi
            r = 0.0;
        return r;
    }

    // Wraps an angle difference into [-pi, pi)
    inline double wrap_pi(double angle)
    {
        return wrap_two_pi(angle + pi) - pi;
    }
}

#endif
