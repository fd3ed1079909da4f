// SPDX-License-Identifier: Apache-2.0
//
// bssim: behavioral model of an 8x8 mixed-signal matrix multiplier and the
// blind source separation experiments run on it.
//
// Angle-of-arrival mixing for a 4-element uniform linear array and the exact
// isomorphism between 4x4 complex matrices and 8x8 real matrices acting on
// stacked I/Q rails.

#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <utility>

#include "bssim/stream.hpp"

namespace bssim {

/// Rail stacking convention used project-wide: complex channel c occupies
/// rails (2c, 2c+1) = (I_{c+1}, Q_{c+1}).
inline constexpr int rail_of_i(int channel) { return 2 * channel; }
inline constexpr int rail_of_q(int channel) { return 2 * channel + 1; }

/// Maps each complex entry a+jb to the 2x2 block [[a, -b], [b, a]] at the
/// corresponding rail pair. The map is a ring homomorphism.
inline Real8 complex_to_real8(const Complex4& m) {
    Real8 r;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            const double a = m(i, j).real();
            const double b = m(i, j).imag();
            r(2 * i, 2 * j) = a;
            r(2 * i, 2 * j + 1) = -b;
            r(2 * i + 1, 2 * j) = b;
            r(2 * i + 1, 2 * j + 1) = a;
        }
    }
    return r;
}

/// Nearest complex-structured matrix (block average) plus the relative
/// Frobenius residual of the part that does not fit the structure.
inline std::pair<Complex4, double> real8_to_complex(const Real8& m8) {
    Complex4 m;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            const double a = 0.5 * (m8(2 * i, 2 * j) + m8(2 * i + 1, 2 * j + 1));
            const double b = 0.5 * (m8(2 * i + 1, 2 * j) - m8(2 * i, 2 * j + 1));
            m(i, j) = std::complex<double>(a, b);
        }
    }
    const Real8 recon = complex_to_real8(m);
    const double denom = m8.norm();
    const double resid = denom > 0.0 ? (m8 - recon).norm() / denom : 0.0;
    return {m, resid};
}

/// 4x4 complex mixing matrix plus its 8x8 real-isomorphic form.
struct MixingMatrix {
    Complex4 complex_entries;
    Real8 real_form;

    static MixingMatrix from_complex(const Complex4& m) {
        MixingMatrix mm;
        mm.complex_entries = m;
        mm.real_form = complex_to_real8(m);
        return mm;
    }

    double condition_number() const {
        Eigen::JacobiSVD<Complex4> svd(complex_entries);
        const auto& sv = svd.singularValues();
        if (sv(3) <= 0.0)
            return std::numeric_limits<double>::infinity();
        return sv(0) / sv(3);
    }
};

/// Four equal-length, equal-rate complex source streams (the vector S).
struct SourceBundle {
    std::array<ComplexStream, 4> sources;

    void validate() const {
        for (const auto& s : sources)
            s.validate();
        for (int k = 1; k < 4; ++k) {
            if (sources[k].size() != sources[0].size())
                throw std::invalid_argument("SourceBundle: stream lengths differ");
            if (sources[k].sample_rate != sources[0].sample_rate)
                throw std::invalid_argument("SourceBundle: sample rates differ");
        }
    }
};

/// Response of a 4-element uniform linear array to a plane wave from
/// angle_deg: element m at spacing*m wavelengths contributes
/// exp(j 2 pi spacing m sin(angle)). Unit modulus per entry.
inline Eigen::Vector4cd steering_column(double angle_deg, double element_spacing_wavelengths) {
    if (!(angle_deg > -90.0) || !(angle_deg < 90.0))
        throw std::invalid_argument("steering_column: angle must lie in (-90, 90) degrees");
    const double k =
        2.0 * M_PI * element_spacing_wavelengths * std::sin(angle_deg * M_PI / 180.0);
    Eigen::Vector4cd col;
    for (int m = 0; m < 4; ++m)
        col(m) = std::exp(std::complex<double>(0.0, k * m));
    return col;
}

/// Uniform-linear-array steering matrix with one column per arrival angle.
/// Near-duplicate angles make the matrix unusable for unmixing and are
/// rejected at condition number 1e6.
inline MixingMatrix steering_matrix(const std::array<double, 4>& angles_deg,
                                    double element_spacing_wavelengths) {
    if (!(element_spacing_wavelengths > 0.0))
        throw std::invalid_argument("steering_matrix: element spacing must be > 0");
    Complex4 a;
    for (int n = 0; n < 4; ++n)
        a.col(n) = steering_column(angles_deg[n], element_spacing_wavelengths);
    MixingMatrix mm = MixingMatrix::from_complex(a);
    if (!(mm.condition_number() < 1.0e6))
        throw std::invalid_argument("steering_matrix: angles produce a near-singular matrix");
    return mm;
}

/// Stacks a bundle into rails in the (I1,Q1,...,I4,Q4) order.
inline RailStreams stack_rails(const SourceBundle& s) {
    s.validate();
    const auto n = static_cast<Eigen::Index>(s.sources[0].size());
    RailStreams out;
    out.sample_rate = s.sources[0].sample_rate;
    out.samples.resize(8, n);
    for (int c = 0; c < 4; ++c) {
        for (Eigen::Index t = 0; t < n; ++t) {
            out.samples(rail_of_i(c), t) = s.sources[c].i_samples[static_cast<std::size_t>(t)];
            out.samples(rail_of_q(c), t) = s.sources[c].q_samples[static_cast<std::size_t>(t)];
        }
    }
    return out;
}

/// Extracts complex channel `c` (rails 2c, 2c+1) from a rail bank.
inline ComplexStream unstack_channel(const RailStreams& x, int channel) {
    if (x.rails() != 8)
        throw std::invalid_argument("unstack_channel: expected 8 rails");
    ComplexStream s;
    s.sample_rate = x.sample_rate;
    const auto n = x.length();
    s.i_samples.resize(static_cast<std::size_t>(n));
    s.q_samples.resize(static_cast<std::size_t>(n));
    for (Eigen::Index t = 0; t < n; ++t) {
        s.i_samples[static_cast<std::size_t>(t)] = x.samples(rail_of_i(channel), t);
        s.q_samples[static_cast<std::size_t>(t)] = x.samples(rail_of_q(channel), t);
    }
    return s;
}

/// X = A S, computed sample-by-sample on the stacked rails.
inline RailStreams mix(const MixingMatrix& a, const SourceBundle& s) {
    if (!(a.condition_number() < 1.0e12))
        throw std::invalid_argument("mix: mixing matrix is singular");
    const RailStreams stacked = stack_rails(s);
    RailStreams out;
    out.sample_rate = stacked.sample_rate;
    out.samples = a.real_form * stacked.samples;
    return out;
}

} // namespace bssim
