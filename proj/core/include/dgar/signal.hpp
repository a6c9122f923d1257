#pragma once

#include <complex>
#include <functional>
#include <string>
#include <vector>

#include "dgar/rng.hpp"
#include "dgar/tensor.hpp"

namespace dgar::sim {

// One propagation path: a static delay plus an optional time-varying
// component induced by motion.
struct Path {
    double amplitude = 0.0;                           // alpha_p >= 0
    double static_delay = 0.0;                        // seconds
    std::function<double(double)> dynamic_delay;      // t -> seconds; null means 0

    double delay_at(double t) const {
        return static_delay + (dynamic_delay ? dynamic_delay(t) : 0.0);
    }
};

// Multipath channel parameterization plus receiver noise level.
// noise_std is the RMS magnitude of the complex Gaussian noise sample
// (each component has std noise_std/sqrt(2)).
struct PathSet {
    std::vector<Path> paths;
    double noise_std = 0.0;

    void validate() const;
};

struct ComplexMatrix {
    int64_t rows = 0, cols = 0;
    std::vector<std::complex<double>> data;

    ComplexMatrix() = default;
    ComplexMatrix(int64_t r, int64_t c) : rows(r), cols(c), data(static_cast<size_t>(r * c)) {}
    std::complex<double>& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * cols + j)]; }
    std::complex<double> at(int64_t i, int64_t j) const {
        return data[static_cast<size_t>(i * cols + j)];
    }
};

struct RealMatrix {
    int64_t rows = 0, cols = 0;
    std::vector<double> data;

    RealMatrix() = default;
    RealMatrix(int64_t r, int64_t c) : rows(r), cols(c), data(static_cast<size_t>(r * c)) {}
    double& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * cols + j)]; }
    double at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * cols + j)]; }
};

// OFDM sensing front end: N subcarriers at f_n = f1 + (n-1)*delta_f observed
// over T packets.
struct OfdmConfig {
    int64_t n_subcarriers = 30;   // N
    double f1 = 5.18e9;           // Hz
    double delta_f = 312.5e3;     // Hz
    int64_t n_packets = 100;      // T
    double packet_interval = 0.02;  // seconds
    std::vector<std::complex<double>> pilots;  // unit modulus; empty = all ones

    double subcarrier_freq(int64_t n) const { return f1 + static_cast<double>(n) * delta_f; }
    std::vector<double> packet_times(double t0 = 0.0) const;
    void validate() const;
};

// Dechirped LFM sensing front end. A path at delay tau produces a beat tone
// at beta*tau; one sweep is sampled at `sample_rate`, dechirped, zero-padded
// to the next power of two and FFT'd; the first n_bins magnitudes are kept.
struct LfmConfig {
    double bandwidth = 7e6;        // B, Hz
    double sweep_duration = 1e-3;  // T_S, seconds
    double f_start = 5.8e9;        // f_c, Hz
    double sample_rate = 5e5;      // fs, Hz
    int64_t n_bins = 30;           // N
    int64_t n_snapshots = 100;     // T
    double snapshot_interval = 0.02;  // seconds

    double beta() const { return bandwidth / sweep_duration; }
    int64_t samples_per_sweep() const {
        return static_cast<int64_t>(sweep_duration * sample_rate);
    }
    int64_t fft_size() const;
    std::vector<double> snapshot_times(double t0 = 0.0) const;
    void validate() const;
};

// Sum over paths of alpha_p * exp(-j 2 pi f tau_p(t)), plus one complex
// Gaussian noise draw when noise_std > 0.
std::complex<double> channel_response(const PathSet& ps, double f, double t, Rng& rng);

// CSI estimate matrix: entry (n, t) is the channel response at subcarrier
// frequency f_n and packet time t_grid[t]. Noise enters the received sample
// before the pilot division; the pilots are unit modulus so the division is
// a phase rotation.
ComplexMatrix ofdm_csi_matrix(const OfdmConfig& cfg, const PathSet& ps,
                              const std::vector<double>& t_grid, Rng& rng);

// One dechirped sweep starting at t0: samples before a path's arrival are
// zero (the chirp window), noise is added per received sample, and the
// magnitude spectrum's first n_bins are returned.
std::vector<double> lfm_snapshot(const LfmConfig& cfg, const PathSet& ps, double t0, Rng& rng);

// Stacks lfm_snapshot over the T snapshot start times into an N x T matrix.
RealMatrix lfm_matrix(const LfmConfig& cfg, const PathSet& ps,
                      const std::vector<double>& t0_grid, Rng& rng);

enum class InputMode { amplitude, amplitude_phase };

InputMode input_mode_from_string(const std::string& s);
std::string to_string(InputMode m);

// Real-valued model input from a complex CSI matrix. amplitude: D = N rows
// of |h|. amplitude_phase: D = 2N, amplitude rows then phase rows unwrapped
// along the time axis.
Tensor<float> to_model_input(const ComplexMatrix& m, InputMode mode);

// LFM matrices are already real magnitudes.
Tensor<float> to_model_input(const RealMatrix& m);

}  // namespace dgar::sim
