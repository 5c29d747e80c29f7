#pragma once

#include "ecorl/harness.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace ecorl::experiment {

struct Variant {
    std::string name;
    harness::RunConfig run;

    bool operator==(const Variant&) const = default;
};

/// A named grid of runs sharing an output directory. All randomness derives
/// from `seed`: run seed = mix(mix(seed, variant index), seed id), and each
/// run splits that into env / init / exploration / replay streams.
struct ExperimentSpec {
    std::string name = "experiment";
    std::string output_dir = "runs";
    int parallelism = 1;
    std::uint64_t seed = 0;
    std::vector<Variant> variants;

    void validate() const;

    bool operator==(const ExperimentSpec&) const = default;
};

/// Strict parse: unknown keys anywhere are errors, field ranges validated.
/// A config without "variants" describes a single run; run-config keys then
/// live at the top level next to name/output_dir/parallelism/seed.
ExperimentSpec parse_config(const std::string& json_text);
ExperimentSpec parse_config_file(const std::string& path);

/// Fully materialized round-trip form: parse(serialize(spec)) == spec.
std::string serialize_config(const ExperimentSpec& spec);

std::uint64_t derive_run_seed(std::uint64_t experiment_seed, int variant_index,
                              std::uint64_t seed_id);

/// Runs every variant x seed, writing
///   <output_dir>/<name>/<task>/<variant>/seed<k>/{metrics.jsonl, heatmap_*.csv, final.ckpt}
/// plus a summary.json. Refuses to clobber an existing experiment directory
/// unless overwrite is set. Returns a process exit status.
int run_experiment(const ExperimentSpec& spec, bool overwrite, std::ostream& log);

/// Expands a one-parameter sweep (dynamism_p or learning_rate) over the single
/// variant of `base` into a multi-variant spec.
ExperimentSpec expand_sweep(const ExperimentSpec& base, const std::string& param,
                            const std::vector<double>& values);

}  // namespace ecorl::experiment
