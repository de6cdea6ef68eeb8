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


#ifndef RISCHAN_RANDOM_HPP
#define RISCHAN_RANDOM_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

namespace rischan
{
    // SplitMix64 finalizer; used to derive independent child seeds.
    constexpr std::uint64_t splitmix64(std::uint64_t x)
    {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    // Child seed for work item `index` of a job seeded with `seed`.
    // Parallel and serial execution see the same streams.
    constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index)
    {
        return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x5851F42D4C957F2DULL));
    }

    // Portable random source. The distribution transforms are written out
    // explicitly because the std:: distributions are implementation-defined.
    class Rng
    {
    public:
        explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

        std::uint64_t next() { return engine_(); }

        // Uniform on [0, 1)
        double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

        double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

        // Standard normal (Box-Muller, one value cached)
        double normal()
        {
            if (has_spare_)
            {
                has_spare_ = false;
                return spare_;
            }
            double u1 = 0.0;
            do
                u1 = uniform();
            while (u1 <= 0.0);
            const double u2 = uniform();
            const double r = std::sqrt(-2.0 * std::log(u1));
            const double a = 2.0 * 3.14159265358979323846 * u2;
            spare_ = r * std::sin(a);
            has_spare_ = true;
            return r * std::cos(a);
        }

        // Circularly-symmetric complex Gaussian with E|z|^2 = variance
        std::complex<double> complex_normal(double variance = 1.0)
        {
            const double s = std::sqrt(0.5 * variance);
            const double re = normal();
            const double im = normal();
            return {s * re, s * im};
        }

    private:
        std::mt19937_64 engine_;
        double spare_ = 0.0;
        bool has_spare_ = false;
    };

    // Neumaier compensated summation
    template <typename T>
    class CompensatedSum
    {
    public:
        void add(T value)
        {
            const T t = sum_ + value;
            if (std::abs(sum_) >= std::abs(value))
                comp_ += (sum_ - t) + value;
            else
                comp_ += (value - t) + sum_;
            sum_ = t;
        }
        T value() const { return sum_ + comp_; }

    private:
        T sum_{};
        T comp_{};
    };

    template <>
    class CompensatedSum<std::complex<double>>
    {
    public:
        void add(std::complex<double> v)
        {
            re_.add(v.real());
            im_.add(v.imag());
        }
        std::complex<double> value() const { return {re_.value(), im_.value()}; }

    private:
        CompensatedSum<double> re_, im_;
    };
}

#endif
