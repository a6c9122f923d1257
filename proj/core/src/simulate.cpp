#include "dgar/simulate.hpp"

#include <cmath>
#include <sstream>

#include "dgar/errors.hpp"

namespace dgar::sim {

namespace {
constexpr double kPi = 3.141592653589793238462643383279;
}

Modality modality_from_string(const std::string& s) {
    if (s == "ofdm") return Modality::ofdm;
    if (s == "lfm") return Modality::lfm;
    throw ConfigError("unknown modality '" + s + "' (valid: ofdm, lfm)");
}

std::string to_string(Modality m) { return m == Modality::ofdm ? "ofdm" : "lfm"; }

std::vector<ActivityTemplate> default_activity_templates() {
    std::vector<ActivityTemplate> ts;

    // walking: periodic sawtooth, the body path length cycles with gait
    ts.push_back({1, "walking", 2.0, [](double t, double phase, double rate) {
                      double x = t * (2.0 + 1.5 * rate) + phase;
                      double frac = x - std::floor(x);
                      return 2.0 * frac - 1.0;
                  }});
    // sitting down: smooth monotone ramp down
    ts.push_back({2, "sitting_down", 2.0, [](double t, double phase, double rate) {
                      double c = 0.35 + 0.1 * phase;
                      double s = 6.0 * (0.5 + rate);
                      return 1.0 - 2.0 / (1.0 + std::exp(-s * (t - c)));
                  }});
    // standing up: ramp up
    ts.push_back({3, "standing_up", 2.0, [](double t, double phase, double rate) {
                      double c = 0.35 + 0.1 * phase;
                      double s = 6.0 * (0.5 + rate);
                      return 2.0 / (1.0 + std::exp(-s * (t - c))) - 1.0;
                  }});
    // standing: near constant with a slow small sway
    ts.push_back({4, "standing", 2.0, [](double t, double phase, double rate) {
                      return 0.08 * std::sin(2.0 * kPi * (0.4 + 0.3 * rate) * t + 2.0 * kPi * phase);
                  }});
    // picking up: dip and return
    ts.push_back({5, "picking_up", 2.0, [](double t, double phase, double rate) {
                      double c = 0.45 + 0.1 * phase;
                      double w = 0.16 / (0.6 + 0.8 * rate);
                      double d = (t - c) / w;
                      return -std::exp(-0.5 * d * d);
                  }});
    // kicking: fast transient pulse
    ts.push_back({6, "kicking", 2.0, [](double t, double phase, double rate) {
                      double c = 0.4 + 0.2 * phase;
                      double w = 0.05 / (0.6 + 0.8 * rate);
                      double d = (t - c) / w;
                      return d * std::exp(0.5 - 0.5 * d * d);  // odd pulse, |.| <= 1
                  }});
    return ts;
}

void DomainSpec::validate() const {
    if (subject_speed_scale <= 0 || reflection_amplitude_scale <= 0)
        throw DataError("DomainSpec: scales must be positive");
    static_env_paths.validate();
}

std::vector<DomainSpec> make_default_domains(int n_domains, double spread, uint64_t seed,
                                             Modality modality, double base_noise_std) {
    if (n_domains < 1) throw DataError("make_default_domains: need >= 1 domain");
    std::vector<DomainSpec> out;
    const bool ofdm = modality == Modality::ofdm;
    const double env_delay_lo = ofdm ? 15e-9 : 0.6e-6;
    const double env_delay_hi = ofdm ? 75e-9 : 3.0e-6;
    for (int k = 0; k < n_domains; ++k) {
        Rng rng(Rng::mix(seed, 0xd0a11, static_cast<uint64_t>(k)));
        DomainSpec d;
        d.domain_id = k;
        d.rng_seed = rng.next_u64();
        // deterministic per-domain offsets, fanned out by `spread`
        double u_speed = rng.uniform(-1.0, 1.0);
        double u_amp = rng.uniform(-1.0, 1.0);
        double u_noise = rng.uniform(0.0, 1.0);
        d.subject_speed_scale = 1.0 * (1.0 + 0.45 * spread * u_speed);
        d.reflection_amplitude_scale = 1.0 * (1.0 + 0.55 * spread * u_amp);
        d.noise_std = base_noise_std * (1.0 + 1.5 * spread * u_noise);
        // static environment: 2-3 fixed reflectors per domain
        int n_env = 2 + static_cast<int>(rng.uniform_int(2));
        for (int p = 0; p < n_env; ++p) {
            Path path;
            path.amplitude = rng.uniform(0.25, 0.9) * (1.0 + 0.4 * spread * rng.uniform(-1.0, 1.0));
            path.amplitude = std::max(path.amplitude, 0.05);
            path.static_delay = rng.uniform(env_delay_lo, env_delay_hi);
            d.static_env_paths.paths.push_back(std::move(path));
        }
        out.push_back(std::move(d));
    }
    return out;
}

std::string GeneratorConfig::hash_string() const {
    std::ostringstream os;
    os << to_string(modality) << "|" << to_string(input_mode) << "|";
    if (modality == Modality::ofdm)
        os << ofdm.n_subcarriers << "," << ofdm.f1 << "," << ofdm.delta_f << "," << ofdm.n_packets
           << "," << ofdm.packet_interval;
    else
        os << lfm.bandwidth << "," << lfm.sweep_duration << "," << lfm.f_start << ","
           << lfm.sample_rate << "," << lfm.n_bins << "," << lfm.n_snapshots << ","
           << lfm.snapshot_interval;
    os << "|" << delay_scale_ofdm << "," << delay_scale_lfm << "," << secondary_paths;
    std::string s = os.str();
    std::ostringstream h;
    h << std::hex << data::fnv1a(s.data(), s.size());
    return h.str();
}

namespace {

// Builds the per-sample path set: domain static environment plus a body
// path and a few limb echoes following the activity trajectory.
PathSet sample_pathset(const DomainSpec& dom, const ActivityTemplate& tmpl,
                       const GeneratorConfig& cfg, Rng& rng) {
    const bool ofdm = cfg.modality == Modality::ofdm;
    const double delay_scale = ofdm ? cfg.delay_scale_ofdm : cfg.delay_scale_lfm;
    const double body_lo = ofdm ? cfg.body_delay_min_ofdm : cfg.body_delay_min_lfm;
    const double body_hi = ofdm ? cfg.body_delay_max_ofdm : cfg.body_delay_max_lfm;

    PathSet ps = dom.static_env_paths;
    ps.noise_std = dom.noise_std;

    const double duration = tmpl.duration;
    const double phase = rng.uniform(0.0, 1.0);
    const double rate = dom.subject_speed_scale * rng.uniform(0.85, 1.15);
    const double amp_jit = rng.uniform(0.85, 1.15);

    Path body;
    body.amplitude = dom.reflection_amplitude_scale * amp_jit * rng.uniform(0.55, 1.0);
    body.static_delay = rng.uniform(body_lo, body_hi);
    double excursion = delay_scale * rng.uniform(0.8, 1.2);
    auto shape = tmpl.shape;
    body.dynamic_delay = [shape, duration, phase, rate, excursion](double t) {
        return excursion * shape(t / duration, phase, rate);
    };
    ps.paths.push_back(std::move(body));

    for (int s = 0; s < cfg.secondary_paths; ++s) {
        Path limb;
        limb.amplitude = dom.reflection_amplitude_scale * rng.uniform(0.15, 0.45);
        limb.static_delay = rng.uniform(body_lo, body_hi);
        double ph2 = phase + rng.uniform(0.05, 0.3);
        double rate2 = rate * rng.uniform(0.9, 1.3);
        double exc2 = excursion * rng.uniform(0.4, 0.9);
        limb.dynamic_delay = [shape, duration, ph2, rate2, exc2](double t) {
            return exc2 * shape(t / duration, ph2, rate2);
        };
        ps.paths.push_back(std::move(limb));
    }
    return ps;
}

}  // namespace

data::DatasetContainer generate_dataset(const std::vector<DomainSpec>& domains,
                                        const std::vector<ActivityTemplate>& templates,
                                        int64_t samples_per_class_per_domain,
                                        const GeneratorConfig& cfg, uint64_t seed) {
    if (domains.size() < 2) throw DataError("generate_dataset: need >= 2 domains");
    if (templates.size() < 2) throw DataError("generate_dataset: need >= 2 activity classes");
    if (samples_per_class_per_domain < 1)
        throw DataError("generate_dataset: zero samples requested");
    for (const auto& d : domains) d.validate();
    if (cfg.modality == Modality::ofdm)
        cfg.ofdm.validate();
    else {
        cfg.lfm.validate();
        if (cfg.input_mode == InputMode::amplitude_phase)
            throw ConfigError("generate_dataset: amplitude_phase requires complex input; "
                              "lfm matrices are real magnitudes");
    }

    data::DatasetContainer c;
    c.manifest.modality = to_string(cfg.modality);
    c.manifest.n_classes = static_cast<int>(templates.size());
    c.manifest.n_domains = static_cast<int>(domains.size());
    c.manifest.seed = seed;
    c.manifest.config_hash = cfg.hash_string();

    int64_t next_id = 0;
    for (const auto& dom : domains) {
        for (const auto& tmpl : templates) {
            for (int64_t i = 0; i < samples_per_class_per_domain; ++i) {
                Rng rng(Rng::mix(seed ^ dom.rng_seed, static_cast<uint64_t>(dom.domain_id),
                                 static_cast<uint64_t>(tmpl.class_id),
                                 static_cast<uint64_t>(i)));
                PathSet ps = sample_pathset(dom, tmpl, cfg, rng);
                data::SampleRecord rec;
                rec.sample_id = next_id++;
                rec.domain_id = dom.domain_id;
                rec.label = tmpl.class_id;
                if (cfg.modality == Modality::ofdm) {
                    auto m = ofdm_csi_matrix(cfg.ofdm, ps, cfg.ofdm.packet_times(), rng);
                    rec.input = to_model_input(m, cfg.input_mode);
                } else {
                    auto m = lfm_matrix(cfg.lfm, ps, cfg.lfm.snapshot_times(), rng);
                    rec.input = to_model_input(m);
                }
                if (!rec.input.all_finite())
                    throw NumericError("generate_dataset: non-finite sample (domain " +
                                       std::to_string(dom.domain_id) + ", class " +
                                       std::to_string(tmpl.class_id) + ")");
                c.records.push_back(std::move(rec));
            }
        }
    }
    c.manifest.d = c.records.front().input.dim(0);
    c.manifest.l = c.records.front().input.dim(1);
    for (const auto& r : c.records) c.manifest.per_domain_counts[r.domain_id] += 1;
    c.validate();
    return c;
}

}  // namespace dgar::sim
