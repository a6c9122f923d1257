#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dgar/dataset.hpp"
#include "dgar/signal.hpp"

namespace dgar::sim {

enum class Modality { ofdm, lfm };

Modality modality_from_string(const std::string& s);
std::string to_string(Modality m);

// An activity class realized as a normalized delay trajectory xi(t) with
// |xi| <= 1 and bounded slope; the generator scales it into seconds per
// modality. `phase` and `rate` are per-sample draws, `rate` additionally
// carries the domain's subject speed scale.
struct ActivityTemplate {
    int class_id = 0;  // 1-based
    std::string name;
    double duration = 2.0;  // seconds
    std::function<double(double t_norm, double phase, double rate)> shape;
};

// The six built-in activity classes: walking (periodic sawtooth), sitting
// down (ramp down), standing up (ramp up), standing (near constant),
// picking up (dip and return), kicking (fast transient).
std::vector<ActivityTemplate> default_activity_templates();

// The concrete realization of one source distribution P_i(x): per-domain
// subject and environment parameters that shift the data distribution.
struct DomainSpec {
    int domain_id = 0;
    double subject_speed_scale = 1.0;
    double reflection_amplitude_scale = 1.0;
    PathSet static_env_paths;
    double noise_std = 0.0;
    uint64_t rng_seed = 0;

    void validate() const;
};

// Domain parameter dispersion grows with `spread` (>= 0): speed, amplitude
// and noise scales fan out from their base values and each domain gets its
// own static environment paths. spread = 0 makes all domains identical up
// to noise draws.
std::vector<DomainSpec> make_default_domains(int n_domains, double spread, uint64_t seed,
                                             Modality modality, double base_noise_std = 0.05);

struct GeneratorConfig {
    Modality modality = Modality::ofdm;
    InputMode input_mode = InputMode::amplitude;
    OfdmConfig ofdm;
    LfmConfig lfm;
    // Scale of the activity-induced dynamic delay, seconds. The OFDM scale
    // corresponds to nanosecond-level body path changes; the LFM scale is
    // beat-mapped so trajectories move across range bins.
    double delay_scale_ofdm = 6e-9;
    double delay_scale_lfm = 0.35e-6;
    // Static delay range for the sampled body paths, seconds.
    double body_delay_min_ofdm = 10e-9, body_delay_max_ofdm = 80e-9;
    double body_delay_min_lfm = 0.5e-6, body_delay_max_lfm = 3.2e-6;
    int secondary_paths = 2;  // limb echoes per sample

    std::string hash_string() const;
};

// Deterministic for a fixed seed: every sample derives its own RNG stream
// from (seed, domain, class, index), so generation order does not matter.
data::DatasetContainer generate_dataset(const std::vector<DomainSpec>& domains,
                                        const std::vector<ActivityTemplate>& templates,
                                        int64_t samples_per_class_per_domain,
                                        const GeneratorConfig& cfg, uint64_t seed);

}  // namespace dgar::sim
