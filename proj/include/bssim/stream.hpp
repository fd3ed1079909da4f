// SPDX-License-Identifier: Apache-2.0
//
// bssim: behavioral model of an 8x8 mixed-signal matrix multiplier and the
// blind source separation experiments run on it.

#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace bssim {

using Complex4 = Eigen::Matrix4cd;
using Real8 = Eigen::Matrix<double, 8, 8>;

/// Uniformly sampled complex (I/Q) baseband sequence. Sample values are in
/// volts; one ComplexStream is one element of the source vector S or one
/// complex channel of X / Y.
struct ComplexStream {
    std::vector<double> i_samples;
    std::vector<double> q_samples;
    double sample_rate = 0.0; // Hz

    std::size_t size() const { return i_samples.size(); }

    std::complex<double> at(std::size_t n) const {
        return {i_samples[n], q_samples[n]};
    }

    void validate() const {
        if (i_samples.size() != q_samples.size())
            throw std::invalid_argument("ComplexStream: I/Q length mismatch");
        if (i_samples.empty())
            throw std::invalid_argument("ComplexStream: empty stream");
        if (!(sample_rate > 0.0))
            throw std::invalid_argument("ComplexStream: sample_rate must be > 0");
    }
};

/// A bank of real rails sharing one sample rate, one rail per matrix row.
/// Rail order is the project convention (I1, Q1, I2, Q2, I3, Q3, I4, Q4).
struct RailStreams {
    Eigen::MatrixXd samples; // n_rails x n_samples
    double sample_rate = 0.0;

    Eigen::Index rails() const { return samples.rows(); }
    Eigen::Index length() const { return samples.cols(); }
};

inline double mean_square(const std::vector<double>& x) {
    double acc = 0.0;
    for (double v : x)
        acc += v * v;
    return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

inline double rms(const std::vector<double>& x) { return std::sqrt(mean_square(x)); }

/// Average complex power E[|s|^2] of a stream.
inline double complex_power(const ComplexStream& s) {
    return mean_square(s.i_samples) + mean_square(s.q_samples);
}

/// Excess kurtosis E[(x-m)^4]/var^2 - 3. Negative for sub-Gaussian data.
inline double excess_kurtosis(const std::vector<double>& x) {
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x)
        mean += v;
    mean /= n;
    double m2 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double d = v - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m4 /= n;
    return m4 / (m2 * m2) - 3.0;
}

} // namespace bssim
