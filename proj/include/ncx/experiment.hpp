#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ncx/element.hpp"
#include "ncx/inequality.hpp"
#include "ncx/pde.hpp"

namespace ncx {

using Json = nlohmann::ordered_json;

// Flat key=value experiment configuration.  Every known field has a default;
// unknown fields and malformed values are rejected with the field name.
//
// Text form: one `key = value` per line, `#` starts a comment, values may be
// double-quoted.  Section headers and multi-line values are not accepted.
class ExperimentConfig {
public:
    ExperimentConfig();

    static ExperimentConfig parse(const std::string& text, const std::string& origin = "config");
    static ExperimentConfig load(const std::string& path);

    void set(const std::string& key, const std::string& value);
    // "key=value"
    void set_assignment(const std::string& assignment);
    bool is_set(const std::string& key) const;

    std::string str(const std::string& key) const;
    double real(const std::string& key) const;
    int integer(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::uint64_t seed() const;

    // Every field except the output paths with its resolved value, sorted
    // by key.
    std::string canonical() const;
    // FNV-1a 64 of canonical(), as 16 hex digits.
    std::string hash() const;

    // Field-level validation of everything the experiment will use; throws
    // ConfigError before any computation.
    void validate() const;

    std::string experiment() const { return str("experiment"); }
    BackendConfig backend() const;
    std::optional<TraceCalibration> calibration() const;
    std::vector<IneqSpec> ineq_specs(int d) const;
    // Family `index` of the run: 0 is the test family, 1 the Nash family of a
    // heat run.  Its seed is split from the config seed unless the family
    // text pins one.
    FamilyDescriptor family(int index = 0) const;
    RunOptions run_options() const;
    DampedWaveParams wave_params() const;
    PicardConfig picard() const;
    Nonlinearity nonlinearity() const;

    struct Field {
        std::string name;
        char type;  // s string, r real, i integer, b bool, u unsigned 64-bit
        std::string default_value;
        std::string help;
    };
    static const std::vector<Field>& fields();

private:
    std::map<std::string, std::string> values_;
    std::map<std::string, bool> explicit_;
};

// splitmix64 of seed + (index + 1) * 0x9E3779B97F4A7C15
std::uint64_t split_seed(std::uint64_t seed, int index);

const std::vector<std::string>& experiment_kinds();

struct CheckOutcome {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct ExperimentResult {
    Json report;
    std::vector<CheckOutcome> checks;
    std::optional<TraceCalibration> calibration;
    bool pass = false;
};

// calibrate -> build family -> run checks or solvers.  Deterministic for a
// fixed configuration.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

enum class ReportFormat { Json, Csv, Plotdata };
ReportFormat report_format_from_string(const std::string& s);

// Serializes a report.  CSV and plotdata layouts depend on the experiment;
// a report without rows or samples is an error.
std::string emit_report(const Json& report, ReportFormat format);
Json parse_report(const std::string& text);

// Manifest {tool, version, experiment, config_hash, config, seed,
// calibration, checks, pass, wall_clock_seconds}.
Json run_manifest(const ExperimentConfig& cfg, const ExperimentResult& result, double wall_clock_seconds);

// Writes report (JSON), csv, plotdata and manifest for the paths configured
// in `out`, `csv`, `plotdata` and `manifest`; all writes are atomic.
// Returns the paths written.
std::vector<std::string> write_outputs(const ExperimentConfig& cfg, const ExperimentResult& result, double wall_clock_seconds);

// 0 pass, 1 check failure, 2 configuration or domain error, 3 numerical failure.
int exit_code_for(const ExperimentResult& result);

extern const char* const kToolVersion;

}  // namespace ncx
