#include "dgar/signal.hpp"

#include <cmath>

#include "dgar/errors.hpp"
#include "dgar/fft.hpp"

namespace dgar::sim {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

std::complex<double> complex_noise(double std_rms, Rng& rng) {
    double s = std_rms / std::sqrt(2.0);
    double re = rng.gaussian(0.0, s);
    double im = rng.gaussian(0.0, s);
    return {re, im};
}
}  // namespace

void PathSet::validate() const {
    for (const auto& p : paths) {
        if (p.amplitude < 0) throw DataError("PathSet: negative amplitude");
        if (p.static_delay < 0) throw DataError("PathSet: negative static delay");
    }
    if (noise_std < 0) throw DataError("PathSet: negative noise std");
}

std::vector<double> OfdmConfig::packet_times(double t0) const {
    std::vector<double> t(static_cast<size_t>(n_packets));
    for (int64_t i = 0; i < n_packets; ++i) t[static_cast<size_t>(i)] = t0 + i * packet_interval;
    return t;
}

void OfdmConfig::validate() const {
    if (n_subcarriers < 1 || n_packets < 1) throw DataError("OfdmConfig: N, T must be >= 1");
    if (delta_f <= 0) throw DataError("OfdmConfig: delta_f must be positive");
    if (!pilots.empty()) {
        if (static_cast<int64_t>(pilots.size()) != n_subcarriers)
            throw DataError("OfdmConfig: pilot count != N");
        for (const auto& s : pilots)
            if (std::abs(std::abs(s) - 1.0) > 1e-9)
                throw DataError("OfdmConfig: pilots must be unit modulus");
    }
}

int64_t LfmConfig::fft_size() const { return next_pow2(samples_per_sweep()); }

std::vector<double> LfmConfig::snapshot_times(double t0) const {
    std::vector<double> t(static_cast<size_t>(n_snapshots));
    for (int64_t i = 0; i < n_snapshots; ++i)
        t[static_cast<size_t>(i)] = t0 + i * snapshot_interval;
    return t;
}

void LfmConfig::validate() const {
    if (bandwidth <= 0 || sweep_duration <= 0 || sample_rate <= 0)
        throw DataError("LfmConfig: bandwidth, sweep duration, sample rate must be positive");
    if (n_bins < 1 || n_snapshots < 1) throw DataError("LfmConfig: N, T must be >= 1");
    if (n_bins > fft_size()) throw DataError("LfmConfig: n_bins exceeds FFT size");
    if (samples_per_sweep() < 2) throw DataError("LfmConfig: fewer than 2 samples per sweep");
}

std::complex<double> channel_response(const PathSet& ps, double f, double t, Rng& rng) {
    if (f <= 0) throw DataError("channel_response: frequency must be positive");
    std::complex<double> h(0.0, 0.0);
    for (const auto& p : ps.paths) {
        double tau = p.delay_at(t);
        double phase = -kTwoPi * f * tau;
        h += p.amplitude * std::complex<double>(std::cos(phase), std::sin(phase));
    }
    if (ps.noise_std > 0) h += complex_noise(ps.noise_std, rng);
    return h;
}

ComplexMatrix ofdm_csi_matrix(const OfdmConfig& cfg, const PathSet& ps,
                              const std::vector<double>& t_grid, Rng& rng) {
    cfg.validate();
    ps.validate();
    if (static_cast<int64_t>(t_grid.size()) != cfg.n_packets)
        throw DataError("ofdm_csi_matrix: t_grid has " + std::to_string(t_grid.size()) +
                        " entries, expected " + std::to_string(cfg.n_packets));
    ComplexMatrix out(cfg.n_subcarriers, cfg.n_packets);
    for (int64_t n = 0; n < cfg.n_subcarriers; ++n) {
        double fn = cfg.subcarrier_freq(n);
        std::complex<double> sn =
            cfg.pilots.empty() ? std::complex<double>(1.0, 0.0)
                               : cfg.pilots[static_cast<size_t>(n)];
        for (int64_t t = 0; t < cfg.n_packets; ++t) {
            // received pilot = channel * s_n + noise; CSI estimate = y / s_n
            std::complex<double> h(0.0, 0.0);
            for (const auto& p : ps.paths) {
                double tau = p.delay_at(t_grid[static_cast<size_t>(t)]);
                double phase = -kTwoPi * fn * tau;
                h += p.amplitude * std::complex<double>(std::cos(phase), std::sin(phase));
            }
            std::complex<double> y = h * sn;
            if (ps.noise_std > 0) y += complex_noise(ps.noise_std, rng);
            out.at(n, t) = y / sn;
        }
    }
    return out;
}

std::vector<double> lfm_snapshot(const LfmConfig& cfg, const PathSet& ps, double t0, Rng& rng) {
    cfg.validate();
    ps.validate();
    for (const auto& p : ps.paths) {
        double tau = p.delay_at(t0);
        if (tau >= cfg.sweep_duration)
            throw DataError("lfm_snapshot: path delay " + std::to_string(tau) +
                            " s outside chirp window T_S = " +
                            std::to_string(cfg.sweep_duration) + " s");
    }
    const int64_t n_samp = cfg.samples_per_sweep();
    const double dt = 1.0 / cfg.sample_rate;
    const double beta = cfg.beta();
    std::vector<std::complex<double>> dechirped(static_cast<size_t>(cfg.fft_size()),
                                                std::complex<double>(0.0, 0.0));
    for (int64_t i = 0; i < n_samp; ++i) {
        double t = static_cast<double>(i) * dt;  // time within the sweep
        std::complex<double> y(0.0, 0.0);
        for (const auto& p : ps.paths) {
            double tau = p.delay_at(t0);  // delay treated constant within one sweep
            double td = t - tau;
            if (td < 0) continue;  // chirp window: echo not arrived yet
            // received echo, conjugate phase convention; dechirping against
            // the reference chirp leaves a beat at +beta*tau
            double phase = -kTwoPi * (cfg.f_start * td + 0.5 * beta * td * td);
            y += p.amplitude * std::complex<double>(std::cos(phase), std::sin(phase));
        }
        if (ps.noise_std > 0) y += complex_noise(ps.noise_std, rng);
        double ref_phase = kTwoPi * (cfg.f_start * t + 0.5 * beta * t * t);
        std::complex<double> ref(std::cos(ref_phase), std::sin(ref_phase));
        dechirped[static_cast<size_t>(i)] = y * ref;
    }
    fft_inplace(dechirped);
    std::vector<double> bins(static_cast<size_t>(cfg.n_bins));
    for (int64_t k = 0; k < cfg.n_bins; ++k)
        bins[static_cast<size_t>(k)] = std::abs(dechirped[static_cast<size_t>(k)]);
    return bins;
}

RealMatrix lfm_matrix(const LfmConfig& cfg, const PathSet& ps,
                      const std::vector<double>& t0_grid, Rng& rng) {
    if (static_cast<int64_t>(t0_grid.size()) != cfg.n_snapshots)
        throw DataError("lfm_matrix: t0_grid has " + std::to_string(t0_grid.size()) +
                        " entries, expected " + std::to_string(cfg.n_snapshots));
    RealMatrix out(cfg.n_bins, cfg.n_snapshots);
    for (int64_t t = 0; t < cfg.n_snapshots; ++t) {
        auto bins = lfm_snapshot(cfg, ps, t0_grid[static_cast<size_t>(t)], rng);
        for (int64_t n = 0; n < cfg.n_bins; ++n) out.at(n, t) = bins[static_cast<size_t>(n)];
    }
    return out;
}

InputMode input_mode_from_string(const std::string& s) {
    if (s == "amplitude") return InputMode::amplitude;
    if (s == "amplitude_phase") return InputMode::amplitude_phase;
    throw ConfigError("unknown input mode '" + s + "' (valid: amplitude, amplitude_phase)");
}

std::string to_string(InputMode m) {
    return m == InputMode::amplitude ? "amplitude" : "amplitude_phase";
}

Tensor<float> to_model_input(const ComplexMatrix& m, InputMode mode) {
    int64_t n = m.rows, t = m.cols;
    if (mode == InputMode::amplitude) {
        Tensor<float> out({n, t});
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < t; ++j)
                out.at(i, j) = static_cast<float>(std::abs(m.at(i, j)));
        return out;
    }
    // amplitude rows, then per-subcarrier phase unwrapped along time
    Tensor<float> out({2 * n, t});
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < t; ++j)
            out.at(i, j) = static_cast<float>(std::abs(m.at(i, j)));
        double prev = std::arg(m.at(i, 0));
        double offset = 0.0;
        out.at(n + i, 0) = static_cast<float>(prev);
        for (int64_t j = 1; j < t; ++j) {
            double cur = std::arg(m.at(i, j));
            double d = cur - prev;
            if (d > 3.141592653589793) offset -= kTwoPi;
            else if (d < -3.141592653589793) offset += kTwoPi;
            out.at(n + i, j) = static_cast<float>(cur + offset);
            prev = cur;
        }
    }
    return out;
}

Tensor<float> to_model_input(const RealMatrix& m) {
    Tensor<float> out({m.rows, m.cols});
    for (int64_t i = 0; i < m.rows * m.cols; ++i)
        out[i] = static_cast<float>(m.data[static_cast<size_t>(i)]);
    return out;
}

}  // namespace dgar::sim
