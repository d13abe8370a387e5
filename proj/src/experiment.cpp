#include "ncx/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "ncx/families.hpp"
#include "ncx/symbol_io.hpp"

namespace ncx {

const char* const kToolVersion = "0.9.0";

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// shortest representation that round-trips
std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return nlohmann::json(v).dump();
}

std::string field_error(const std::string& key, const std::string& msg) { return "config: field '" + key + "': " + msg; }

const ExperimentConfig::Field* find_field(const std::string& key) {
    for (const auto& f : ExperimentConfig::fields())
        if (f.name == key) return &f;
    return nullptr;
}

double parse_real(const std::string& key, const std::string& v) {
    if (v.empty()) return IneqParams::unset;
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size()) throw ConfigError(field_error(key, "expected a number, got '" + v + "'"));
    return x;
}

long long parse_int(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    long long x = 0;
    try {
        x = std::stoll(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (v.empty() || used != v.size()) throw ConfigError(field_error(key, "expected an integer, got '" + v + "'"));
    return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(field_error(key, "expected true or false, got '" + v + "'"));
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) out.push_back(tok);
    }
    return out;
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// configuration

const std::vector<ExperimentConfig::Field>& ExperimentConfig::fields() {
    static const std::vector<Field> f = {
        {"experiment", 's', "check", "calibrate, check, estimate, equivalence, heat, wave or semilinear"},
        {"backend", 's', "nc2", "nc2, nc4 or comm:<d>"},
        {"N", 'i', "0", "grid points per axis (0 keeps the backend default)"},
        {"L", 'r', "0", "grid half-width (0 keeps the backend default)"},
        {"M", 'i', "0", "Hermite truncation per block (0 keeps the backend default)"},
        {"h", 'r', "0", "deformation parameter of each 2x2 block (0 keeps the default)"},
        {"tail_tol", 'r', "1e-6", "truncation tail tolerance"},
        {"calibration", 's', "", "calibration manifest to reuse instead of recalibrating"},
        {"created_at", 's', "", "timestamp recorded by calibrate (default: now, UTC)"},
        {"kind", 's', "", "inequality kind, or a comma-separated list"},
        {"p", 'r', "", "inequality exponent p"},
        {"q", 'r', "", "inequality exponent q"},
        {"r", 'r', "", "inequality exponent r"},
        {"s", 'r', "", "inequality smoothness s"},
        {"kernel", 's', "", "convolution kernel for hls and young-weak"},
        {"heat_t_min", 'r', "", "heat-kernel inequality: smallest t"},
        {"heat_t_max", 'r', "", "heat-kernel inequality: largest t"},
        {"heat_t_points", 'i', "0", "heat-kernel inequality: number of t values"},
        {"family", 's', "mixed,count=8", "test family descriptor"},
        {"samples", 'i', "0", "family size (0 keeps the family count)"},
        {"seed", 'u', "1", "64-bit master seed"},
        {"refine", 'b', "true", "repeat on the refined backend and compare"},
        {"stability_tol", 'r', "0.02", "allowed relative change of max_ratio under refinement"},
        {"slack", 'r', "1e-8", "additive slack for inequalities without a constant"},
        {"b", 'r', "2", "damping"},
        {"m", 'r', "1", "mass"},
        {"p_nl", 'i', "2", "nonlinearity power"},
        {"nonlinearity", 's', "square", "square, modulus-power or zero"},
        {"eps", 'r', "0.1", "data smallness for the Picard iteration"},
        {"t_max", 'r', "10", "final time"},
        {"steps", 'i', "200", "time steps on [0, t_max]"},
        {"picard_max", 'i', "40", "maximal Picard iterations"},
        {"tol", 'r', "1e-12", "relative Picard tolerance"},
        {"bound", 'r', "1", "Omega_0 ball radius M for the iterates"},
        {"r_margin", 'r', "2", "contraction margin r; ratios above 1/r are reported"},
        {"delta", 'r', "-1", "Omega_0 weight rate (negative: half the predicted rate)"},
        {"x0_width", 'r', "0.8", "Gaussian width of x0"},
        {"x1_width", 'r', "1.2", "Gaussian width of x1"},
        {"data_size", 'r', "0.05", "semilinear: data rescaled to ||x0||_H1 + ||x1||_2 = data_size"},
        {"u0_width", 'r', "1.5", "heat: u0 = y*y for a Gaussian y of this width"},
        {"times", 'i', "21", "heat: sample times on [0, t_max]"},
        {"window", 'r', "0.5", "decay fit: tail fraction of the time span"},
        {"nash_family", 's', "mixed,count=6", "heat: family for the Nash constant"},
        {"nash_backend", 's', "", "heat: backend tag for the Nash constant (default: backend)"},
        {"out", 's', "", "report path (JSON)"},
        {"csv", 's', "", "CSV path"},
        {"plotdata", 's', "", "plot data path"},
        {"manifest", 's', "", "manifest path (default: <out>.manifest.json)"},
    };
    return f;
}

const std::vector<std::string>& experiment_kinds() {
    static const std::vector<std::string> k = {"calibrate", "check", "estimate", "equivalence", "heat", "wave", "semilinear"};
    return k;
}

ExperimentConfig::ExperimentConfig() {
    for (const auto& f : fields()) values_[f.name] = f.default_value;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    const Field* f = find_field(key);
    if (!f) throw ConfigError("config: unknown field '" + key + "'");
    const std::string v = trim(value);
    switch (f->type) {
        case 'r': parse_real(key, v); break;
        case 'i': parse_int(key, v); break;
        case 'b': parse_bool(key, v); break;
        case 'u':
            if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
                throw ConfigError(field_error(key, "expected an unsigned integer, got '" + v + "'"));
            try {
                (void)std::stoull(v);
            } catch (const std::exception&) {
                throw ConfigError(field_error(key, "out of range"));
            }
            break;
        default: break;
    }
    values_[key] = v;
    explicit_[key] = true;
}

void ExperimentConfig::set_assignment(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("config: expected key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::string& origin) {
    ExperimentConfig c;
    std::stringstream ss(text);
    std::string line;
    int no = 0;
    while (std::getline(ss, line)) {
        ++no;
        const std::string where = origin + ":" + std::to_string(no) + ": ";
        // strip a comment outside quotes
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line.resize(i);
                break;
            }
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') throw ConfigError(where + "sections are not supported");
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        try {
            c.set(key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << is.rdbuf();
    return parse(ss.str(), path);
}

bool ExperimentConfig::is_set(const std::string& key) const { return explicit_.count(key) > 0; }

std::string ExperimentConfig::str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: unknown field '" + key + "'");
    return it->second;
}
double ExperimentConfig::real(const std::string& key) const { return parse_real(key, str(key)); }
int ExperimentConfig::integer(const std::string& key) const { return static_cast<int>(parse_int(key, str(key))); }
bool ExperimentConfig::flag(const std::string& key) const { return parse_bool(key, str(key)); }
std::uint64_t ExperimentConfig::seed() const { return std::stoull(str("seed")); }

std::string ExperimentConfig::canonical() const {
    std::string out;
    for (const auto& [k, v] : values_)
        if (k != "out" && k != "csv" && k != "plotdata" && k != "manifest") out += k + "=" + v + "\n";
    return out;
}

std::string ExperimentConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::uint64_t split_seed(std::uint64_t seed, int index) {
    std::uint64_t z = seed + static_cast<std::uint64_t>(index + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

BackendConfig ExperimentConfig::backend() const {
    BackendConfig c;
    try {
        c = BackendConfig::from_tag(str("backend"));
    } catch (const ConfigError& e) {
        throw ConfigError(field_error("backend", e.what()));
    }
    if (str("backend") != "nc2" && str("backend") != "nc4" && str("backend").rfind("comm:", 0) != 0)
        throw ConfigError(field_error("backend", "expected nc2, nc4 or comm:<d>, got '" + str("backend") + "'"));
    if (integer("N") != 0) c.grid.N = integer("N");
    if (real("L") != 0.0) c.grid.L = real("L");
    if (c.kind == BackendKind::NcMatrix) {
        if (integer("M") != 0) c.M = integer("M");
        if (real("h") != 0.0) c.h = real("h");
    } else {
        if (is_set("M") && integer("M") != 0) throw ConfigError(field_error("M", "the commutative backend has no truncation"));
        if (is_set("h") && real("h") != 0.0) throw ConfigError(field_error("h", "the commutative backend has h = 0"));
    }
    c.tail_tol = real("tail_tol");
    c.calibration = calibration();
    return c;
}

std::optional<TraceCalibration> ExperimentConfig::calibration() const {
    const std::string path = str("calibration");
    if (path.empty()) return std::nullopt;
    std::ifstream is(path);
    if (!is) throw ConfigError(field_error("calibration", "cannot open '" + path + "'"));
    std::stringstream ss;
    ss << is.rdbuf();
    try {
        return TraceCalibration::from_manifest_json(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(field_error("calibration", e.what()));
    }
}

std::vector<IneqSpec> ExperimentConfig::ineq_specs(int d) const {
    const std::vector<std::string> names = split_list(str("kind"));
    if (names.empty()) throw ConfigError(field_error("kind", "an inequality kind is required"));
    std::vector<IneqSpec> out;
    for (const std::string& n : names) {
        IneqSpec s;
        try {
            s.kind = ineq_kind_from_string(n);
        } catch (const ConfigError& e) {
            throw ConfigError(field_error("kind", e.what()));
        }
        // kind defaults, with the parameters a user setting determines cleared
        try {
            s = IneqSpec::defaults(s.kind, d);
        } catch (const DomainError& e) {
            throw ConfigError(field_error("kind", e.what()));
        }
        IneqParams& P = s.params;
        P.eta = IneqParams::unset;
        auto user = [&](const char* key) { return is_set(key) && !str(key).empty(); };
        const bool kernel_kind = s.kind == IneqKind::Hls || s.kind == IneqKind::YoungWeak;
        if (s.kind == IneqKind::Sobolev && (user("p") || user("q") || user("s"))) {
            if (!user("q")) P.q = IneqParams::unset;
            else if (!user("p")) P.p = IneqParams::unset;
        }
        if (kernel_kind) {
            if (user("kernel") && !user("q")) P.q = IneqParams::unset;
            if (user("p") || user("r") || user("kernel")) {
                if (!user("r")) P.r = IneqParams::unset;
                else if (!user("p")) P.p = IneqParams::unset;
            }
        }
        if (user("p")) P.p = real("p");
        if (user("q")) P.q = real("q");
        if (user("r")) P.r = real("r");
        if (user("s")) P.s = real("s");
        if (user("kernel")) P.kernel = str("kernel");
        if (user("heat_t_min")) P.t_min = real("heat_t_min");
        if (user("heat_t_max")) P.t_max = real("heat_t_max");
        if (integer("heat_t_points") > 0) P.t_points = integer("heat_t_points");
        try {
            out.push_back(s.resolved(d));
        } catch (const DomainError& e) {
            throw ConfigError(field_error("kind", n + ": " + e.what()));
        }
    }
    return out;
}

FamilyDescriptor ExperimentConfig::family(int index) const {
    const std::string key = index == 0 ? "family" : "nash_family";
    FamilyDescriptor f;
    try {
        f = FamilyDescriptor::parse(str(key));
    } catch (const Error& e) {
        throw ConfigError(field_error(key, e.what()));
    }
    if (str(key).find("seed=") == std::string::npos) f.seed = split_seed(seed(), index);
    if (index == 0 && integer("samples") != 0) f.count = integer("samples");
    if (f.count <= 0) throw ConfigError(field_error(index == 0 ? "samples" : key, "the family needs at least one element"));
    return f;
}

RunOptions ExperimentConfig::run_options() const {
    RunOptions o;
    o.refine = flag("refine");
    o.stability_tol = real("stability_tol");
    o.slack = real("slack");
    return o;
}

DampedWaveParams ExperimentConfig::wave_params() const {
    DampedWaveParams p{real("b"), real("m")};
    if (!(p.b > 0.0) || !std::isfinite(p.b)) throw ConfigError(field_error("b", "the damping must be positive"));
    if (!(p.m > 0.0) || !std::isfinite(p.m)) throw ConfigError(field_error("m", "the mass must be positive"));
    return p;
}

PicardConfig ExperimentConfig::picard() const {
    PicardConfig c;
    c.eps = real("eps");
    c.M = real("bound");
    c.r = real("r_margin");
    c.delta = real("delta");
    c.max_iters = integer("picard_max");
    c.tol = real("tol");
    c.t_max = real("t_max");
    c.steps = integer("steps");
    if (!(c.eps > 0.0)) throw ConfigError(field_error("eps", "must be positive"));
    if (!(c.M > 0.0)) throw ConfigError(field_error("bound", "must be positive"));
    if (!(c.r > 1.0)) throw ConfigError(field_error("r_margin", "must exceed 1"));
    if (c.max_iters < 1) throw ConfigError(field_error("picard_max", "must be at least 1"));
    if (!(c.tol >= 0.0)) throw ConfigError(field_error("tol", "must be nonnegative"));
    return c;
}

Nonlinearity ExperimentConfig::nonlinearity() const {
    const std::string f = str("nonlinearity");
    if (f == "square") {
        if (integer("p_nl") != 2) throw ConfigError(field_error("p_nl", "the square form has p_nl = 2"));
        return Nonlinearity::square();
    }
    if (f == "zero") return Nonlinearity::zero();
    if (f == "modulus-power") {
        if (integer("p_nl") < 2) throw ConfigError(field_error("p_nl", "must be an integer > 1"));
        return Nonlinearity::modulus_power(integer("p_nl"));
    }
    throw ConfigError(field_error("nonlinearity", "expected square, modulus-power or zero, got '" + f + "'"));
}

void ExperimentConfig::validate() const {
    const std::string e = experiment();
    if (std::find(experiment_kinds().begin(), experiment_kinds().end(), e) == experiment_kinds().end())
        throw ConfigError(field_error("experiment", "unknown experiment '" + e + "'"));
    const BackendConfig b = backend();
    b.validate();
    const int d = b.grid.d;
    if (!(real("tail_tol") > 0.0)) throw ConfigError(field_error("tail_tol", "must be positive"));

    auto positive_time = [&] {
        if (!(real("t_max") > 0.0) || !std::isfinite(real("t_max"))) throw ConfigError(field_error("t_max", "must be positive"));
        if (integer("steps") < 1) throw ConfigError(field_error("steps", "must be at least 1"));
        if (!(real("window") > 0.0 && real("window") <= 1.0)) throw ConfigError(field_error("window", "must lie in (0, 1]"));
    };

    if (e == "calibrate") {
        if (b.kind != BackendKind::NcMatrix) throw ConfigError(field_error("backend", "calibrate needs a matrix backend (nc2 or nc4)"));
    } else if (e == "check" || e == "estimate") {
        ineq_specs(d);
        family(0);
        if (!(real("stability_tol") > 0.0)) throw ConfigError(field_error("stability_tol", "must be positive"));
        if (!(real("slack") >= 0.0)) throw ConfigError(field_error("slack", "must be nonnegative"));
    } else if (e == "equivalence") {
        if (d <= 2) throw ConfigError(field_error("backend", "the equivalence panel needs d > 2, got d = " + std::to_string(d)));
        family(0);
    } else if (e == "heat") {
        if (d <= 2) throw ConfigError(field_error("backend", "the heat decay bound uses the Nash constant, which needs d > 2"));
        positive_time();
        if (integer("times") < 2) throw ConfigError(field_error("times", "need at least two sample times"));
        if (!(real("u0_width") > 0.0)) throw ConfigError(field_error("u0_width", "must be positive"));
        family(1);
        if (!str("nash_backend").empty()) {
            BackendConfig nb;
            try {
                nb = BackendConfig::from_tag(str("nash_backend"));
            } catch (const ConfigError& err) {
                throw ConfigError(field_error("nash_backend", err.what()));
            }
            if (nb.grid.d != d) throw ConfigError(field_error("nash_backend", "must have the same dimension as backend"));
        }
    } else if (e == "wave" || e == "semilinear") {
        wave_params();
        positive_time();
        if (!(real("x0_width") > 0.0)) throw ConfigError(field_error("x0_width", "must be positive"));
        if (!(real("x1_width") > 0.0)) throw ConfigError(field_error("x1_width", "must be positive"));
        if (e == "semilinear") {
            picard();
            const Nonlinearity F = nonlinearity();
            if (F.form == Nonlinearity::Form::ModulusPower && b.kind != BackendKind::NcMatrix)
                throw ConfigError(field_error("nonlinearity", "modulus-power needs the matrix backend"));
            if (!(real("data_size") > 0.0)) throw ConfigError(field_error("data_size", "must be positive"));
        }
    }
}

// ---------------------------------------------------------------------------
// experiments

namespace {

Json backend_json(const BackendConfig& c, double c_theta) {
    Json j;
    j["tag"] = c.tag();
    j["d"] = c.grid.d;
    j["h"] = c.kind == BackendKind::NcMatrix ? c.h : 0.0;
    j["grid"] = {{"N", c.grid.N}, {"L", c.grid.L}};
    j["M"] = c.kind == BackendKind::NcMatrix ? c.M : 0;
    j["c_theta"] = c_theta;
    return j;
}

Json params_json(const IneqSpec& s) {
    Json j;
    j["kind"] = to_string(s.kind);
    for (const auto& [k, v] : s.param_list()) j[k] = v;
    if (!s.params.kernel.empty()) j["kernel"] = s.params.kernel;
    return j;
}

Json samples_json(const std::vector<IneqSample>& samples) {
    Json arr = Json::array();
    for (const IneqSample& s : samples) {
        Json j;
        j["id"] = s.element_id;
        j["lhs"] = s.lhs;
        j["rhs"] = s.rhs;
        j["ratio"] = s.ratio;
        if (!s.extra.empty()) {
            Json e;
            for (const auto& [k, v] : s.extra) e[k] = v;
            j["extra"] = e;
        }
        arr.push_back(j);
    }
    return arr;
}

Json optional_number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json ineq_report_json(const std::string& experiment, const IneqReport& r) {
    Json j;
    j["experiment"] = experiment;
    j["backend"] = backend_json(r.backend, r.c_theta);
    j["kind_params"] = params_json(r.spec);
    j["family"] = r.family;
    j["samples"] = samples_json(r.samples);
    j["max_ratio"] = optional_number(r.max_ratio);
    j["argmax"] = r.argmax_id;
    j["refined_max_ratio"] = optional_number(r.refined_max_ratio);
    j["refinement_delta"] = optional_number(r.refinement_delta);
    j["stability_tol"] = r.stability_tol;
    if (constant_free(r.spec.kind)) {
        j["max_excess"] = optional_number(r.max_excess);
        j["worst"] = r.worst_id;
    }
    j["all_finite"] = r.all_finite;
    j["holds"] = r.holds;
    j["pass"] = r.pass;
    j["notes"] = r.notes;
    return j;
}

CheckOutcome ineq_outcome(const IneqReport& r) {
    CheckOutcome o;
    o.name = to_string(r.spec.kind);
    o.pass = r.pass;
    std::ostringstream os;
    if (!r.all_finite) {
        os << "non-finite ratios";
    } else if (!r.holds) {
        os << "violated at sample '" << r.worst_id << "' by " << num(r.max_excess);
    } else if (std::isfinite(r.refinement_delta) && r.refinement_delta > r.stability_tol) {
        os << "max ratio " << num(r.max_ratio) << " at sample '" << r.argmax_id << "' moved by " << num(r.refinement_delta)
           << " under refinement";
    } else {
        os << "max ratio " << num(r.max_ratio) << " at sample '" << r.argmax_id << "'";
        if (std::isfinite(r.refinement_delta)) os << ", refinement delta " << num(r.refinement_delta);
    }
    o.detail = os.str();
    return o;
}

NcElement gaussian_element(const BackendPtr& b, double a) { return NcElement(make_test_symbol(TestFamilySpec::gaussian(a), b->grid), b); }

Json fit_json(const DecayReport& r) {
    return Json{{"window", r.window}, {"t_from", r.t_from}, {"t_to", r.t_to}, {"delta_fit", r.delta_fit}};
}

// Calibrates a matrix backend once, up front, and pins the result in the
// config so every later build of the same backend reuses it.
BackendConfig calibrated(BackendConfig bc, ExperimentResult& R) {
    if (bc.kind == BackendKind::NcMatrix) {
        if (!bc.calibration) bc.calibration = bc.build()->calibration;
        R.calibration = bc.calibration;
    }
    return bc;
}

double backend_c_theta(const BackendPtr& b) { return b->kind == BackendKind::NcMatrix ? b->calibration.c_theta : 0.0; }

ExperimentResult run_calibrate(const ExperimentConfig& cfg) {
    ExperimentResult R;
    const BackendPtr b = calibrated(cfg.backend(), R).build();
    const std::string created = cfg.str("created_at").empty() ? utc_now() : cfg.str("created_at");
    const TraceCalibration& c = b->calibration;
    R.report["experiment"] = "calibrate";
    R.report["d"] = c.d;
    R.report["h"] = c.h;
    R.report["M"] = c.M;
    R.report["N"] = c.N;
    R.report["L"] = c.L;
    R.report["c_theta"] = c.c_theta;
    R.report["block_c"] = c.block_c;
    R.report["reference_widths"] = c.reference_widths;
    R.report["residuals"] = c.residuals;
    R.report["created_at"] = created;
    const bool ok = b->calibration.valid();
    R.checks.push_back({"calibration", ok, "c_theta = " + num(b->calibration.c_theta)});
    R.report["pass"] = ok;
    R.pass = ok;
    return R;
}

ExperimentResult run_check_experiment(const ExperimentConfig& cfg) {
    ExperimentResult R;
    const BackendConfig bc = calibrated(cfg.backend(), R);
    const std::vector<IneqSpec> specs = cfg.ineq_specs(bc.grid.d);
    const FamilyDescriptor fam = cfg.family(0);
    const std::vector<IneqReport> reports = run_checks(specs, fam, bc, cfg.run_options());

    R.pass = true;
    for (const IneqReport& r : reports) {
        R.checks.push_back(ineq_outcome(r));
        R.pass = R.pass && r.pass;
    }
    if (reports.size() == 1) {
        R.report = ineq_report_json("check", reports.front());
    } else {
        R.report["experiment"] = "check";
        R.report["backend"] = backend_json(bc, reports.front().c_theta);
        R.report["family"] = fam.to_string();
        Json arr = Json::array();
        for (const IneqReport& r : reports) arr.push_back(ineq_report_json("check", r));
        R.report["reports"] = arr;
        R.report["pass"] = R.pass;
    }
    return R;
}

ExperimentResult run_estimate(const ExperimentConfig& cfg) {
    ExperimentResult R;
    const BackendConfig bc = calibrated(cfg.backend(), R);
    const std::vector<IneqSpec> specs = cfg.ineq_specs(bc.grid.d);
    const FamilyDescriptor fam = cfg.family(0);
    R.pass = true;
    Json arr = Json::array();
    for (const IneqSpec& s : specs) {
        const EstimatedConstant c = estimate_constant(s, fam, bc, cfg.run_options());
        Json j = ineq_report_json("estimate", c.report);
        j["constant"] = {{"value", optional_number(c.value)}, {"stable", c.stable}, {"refinement_delta", optional_number(c.refinement_delta)}};
        const bool ok = c.stable && std::isfinite(c.value) && c.value > 0.0;
        j["pass"] = ok;
        R.checks.push_back({to_string(s.kind), ok,
                            "constant " + num(c.value) + (c.stable ? " (stable)" : " (unstable, delta " + num(c.refinement_delta) + ")")});
        R.pass = R.pass && ok;
        arr.push_back(j);
    }
    if (arr.size() == 1) {
        R.report = arr.front();
    } else {
        R.report["experiment"] = "estimate";
        R.report["backend"] = arr.front()["backend"];
        R.report["family"] = fam.to_string();
        R.report["reports"] = arr;
        R.report["pass"] = R.pass;
    }
    return R;
}

ExperimentResult run_equivalence(const ExperimentConfig& cfg) {
    ExperimentResult R;
    const BackendConfig bc = calibrated(cfg.backend(), R);
    const FamilyDescriptor fam = cfg.family(0);
    const std::vector<IneqReport> reports = equivalence_report(fam, bc, cfg.run_options());
    R.pass = true;
    Json arr = Json::array();
    for (const IneqReport& r : reports) {
        R.checks.push_back(ineq_outcome(r));
        R.pass = R.pass && r.pass;
        arr.push_back(ineq_report_json("equivalence", r));
    }
    R.report["experiment"] = "equivalence";
    R.report["backend"] = backend_json(bc, reports.front().c_theta);
    R.report["family"] = fam.to_string();
    R.report["reports"] = arr;
    R.report["pass"] = R.pass;
    return R;
}

ExperimentResult run_heat(const ExperimentConfig& cfg) {
    const BackendConfig bc = cfg.backend();
    const BackendConfig nash_bc = cfg.str("nash_backend").empty() ? BackendConfig::from_tag(bc.tag()) : BackendConfig::from_tag(cfg.str("nash_backend"));
    const FamilyDescriptor nash_fam = cfg.family(1);
    const EstimatedConstant nash = estimate_constant(IneqSpec::defaults(IneqKind::Nash, bc.grid.d), nash_fam, nash_bc, cfg.run_options());

    ExperimentResult R;
    const BackendPtr b = calibrated(bc, R).build();
    const NcElement u0 = star_square(gaussian_element(b, cfg.real("u0_width")));
    const int n = cfg.integer("times");
    std::vector<double> ts(n);
    for (int k = 0; k < n; ++k) ts[k] = cfg.real("t_max") * k / (n - 1);
    const HeatDecayReport H = heat_decay_report(u0, ts, nash);

    R.report["experiment"] = "heat";
    R.report["backend"] = backend_json(bc, backend_c_theta(b));
    R.report["u0"] = "y*y, y = " + TestFamilySpec::gaussian(cfg.real("u0_width")).describe();
    R.report["nash"] = {{"value", nash.value},
                        {"c_d2", H.c_d2},
                        {"stable", nash.stable},
                        {"refinement_delta", optional_number(nash.refinement_delta)},
                        {"family", nash.family},
                        {"backend", backend_json(nash_bc, nash.c_theta)}};
    Json rows = Json::array();
    for (const HeatRow& r : H.rows)
        rows.push_back({{"t", r.t},
                        {"l1", r.l1},
                        {"l2", r.l2},
                        {"h1", r.h1},
                        {"linf", optional_number(r.linf)},
                        {"dt_l2", r.dt_l2},
                        {"bound", r.bound},
                        {"nash_ratio", r.nash_ratio}});
    R.report["rows"] = rows;
    R.report["mass0"] = H.mass0;
    R.report["max_mass_drift"] = H.max_mass_drift;
    R.report["min_margin"] = H.min_margin;
    R.report["bound_holds"] = H.bound_holds;
    R.report["monotone"] = H.monotone;

    const bool mass_ok = H.max_mass_drift <= 1e-6;
    R.checks.push_back({"heat mass conservation", mass_ok, "max relative drift " + num(H.max_mass_drift)});
    std::string worst;
    double margin = std::numeric_limits<double>::infinity();
    for (const HeatRow& r : H.rows)
        if (r.bound - r.l2 < margin) margin = r.bound - r.l2, worst = "t = " + num(r.t);
    R.checks.push_back({"heat decay bound", H.bound_holds, "smallest margin " + num(margin) + " at " + worst});
    R.checks.push_back({"heat L2 monotone", H.monotone, H.monotone ? "nonincreasing" : "||u(t)||_2 increased"});
    if (!nash.stable) R.checks.push_back({"nash constant", false, "unstable under refinement, delta " + num(nash.refinement_delta)});
    R.pass = true;
    for (const auto& c : R.checks) R.pass = R.pass && c.pass;
    R.report["pass"] = R.pass;
    R.report["notes"] = H.notes;
    return R;
}

CauchyData wave_data(const ExperimentConfig& cfg, const BackendPtr& b, bool rescale) {
    CauchyData data{gaussian_element(b, cfg.real("x0_width")), gaussian_element(b, cfg.real("x1_width"))};
    if (rescale) {
        const double a = cfg.real("data_size") / data.size();
        data.x0 = data.x0.with_symbol(a * data.x0.symbol());
        data.x1 = data.x1.with_symbol(a * data.x1.symbol());
    }
    return data;
}

ExperimentResult run_wave(const ExperimentConfig& cfg) {
    ExperimentResult R;
    const BackendConfig bc = calibrated(cfg.backend(), R);
    const BackendPtr b = bc.build();
    const DampedWaveParams p = cfg.wave_params();
    const CauchyData data = wave_data(cfg, b, false);
    const auto sol = linear_wave_solve(data, p, uniform_times(cfg.real("t_max"), cfg.integer("steps")));

    Json rows = Json::array();
    std::vector<std::pair<double, double>> h1;
    bool finite = true;
    for (const WaveSnapshot& s : sol) {
        const double v = h1_norm(s.x), l2 = s.x.symbol().l2_norm(), g = grad_norm(s.x), dt = s.dx.symbol().l2_norm();
        finite = finite && std::isfinite(v) && std::isfinite(dt);
        h1.emplace_back(s.t, v);
        rows.push_back({{"t", s.t}, {"h1", v}, {"l2", l2}, {"grad", g}, {"dt_l2", dt}});
    }
    const DecayReport fit = decay_rate_fit(h1, cfg.real("window"));

    R.report["experiment"] = "wave";
    R.report["backend"] = backend_json(bc, backend_c_theta(b));
    R.report["params"] = {{"b", p.b}, {"m", p.m}};
    R.report["regime"] = to_string(mode_kernels(1.0, 0.0, p).which);
    R.report["data_size"] = data.size();
    R.report["delta_pred"] = p.delta_pred();
    R.report["fit"] = fit_json(fit);
    R.report["rows"] = rows;
    const bool ok = finite && fit.delta_fit >= 0.95 * p.delta_pred();
    R.checks.push_back({"damped wave H1 decay", ok,
                        "fitted rate " + num(fit.delta_fit) + " against 0.95 * " + num(p.delta_pred()) + " (b = " + num(p.b) +
                            ", m = " + num(p.m) + ")"});
    R.pass = ok;
    R.report["pass"] = ok;
    return R;
}

ExperimentResult run_semilinear(const ExperimentConfig& cfg) {
    ExperimentResult R;
    const BackendConfig bc = calibrated(cfg.backend(), R);
    const BackendPtr b = bc.build();
    const DampedWaveParams p = cfg.wave_params();
    const PicardConfig pc = cfg.picard();
    const Nonlinearity F = cfg.nonlinearity();
    const CauchyData data = wave_data(cfg, b, true);
    const SemilinearResult S = semilinear_picard(data, p, F, pc);
    const PicardState& st = S.state;

    Json rows = Json::array();
    std::vector<std::pair<double, double>> l2, grad, dt;
    for (const WaveSnapshot& s : S.solution) {
        const double a = s.x.symbol().l2_norm(), g = grad_norm(s.x), v = s.dx.symbol().l2_norm();
        l2.emplace_back(s.t, a);
        grad.emplace_back(s.t, g);
        dt.emplace_back(s.t, v);
        rows.push_back({{"t", s.t}, {"l2", a}, {"grad", g}, {"dt_l2", v}});
    }
    const double w = cfg.real("window");
    const DecayReport f1 = decay_rate_fit(l2, w), f2 = decay_rate_fit(grad, w), f3 = decay_rate_fit(dt, w);

    R.report["experiment"] = "semilinear";
    R.report["backend"] = backend_json(bc, backend_c_theta(b));
    R.report["params"] = {{"b", p.b}, {"m", p.m}};
    R.report["nonlinearity"] = F.describe();
    R.report["config"] = {{"eps", pc.eps}, {"M", pc.M},       {"r", pc.r},         {"delta", st.delta},
                          {"tol", pc.tol}, {"t_max", pc.t_max}, {"steps", pc.steps}, {"max_iters", pc.max_iters}};
    R.report["data_size"] = data.size();
    R.report["delta_pred"] = p.delta_pred();
    R.report["picard"] = {{"iterations", st.iterations},
                          {"converged", st.converged},
                          {"omega_norms", st.omega_norms},
                          {"differences", st.differences},
                          {"contraction", st.contraction},
                          {"max_contraction", st.max_contraction}};
    R.report["omega0_norm"] = omega0_norm(S.solution, st.delta);
    R.report["fits"] = {{"l2", fit_json(f1)}, {"grad", fit_json(f2)}, {"dt_l2", fit_json(f3)}};
    R.report["rows"] = rows;

    bool contracting = st.converged;
    for (double c : st.contraction) contracting = contracting && c < 1.0;
    R.checks.push_back({"semilinear Picard contraction", contracting,
                        std::string(st.converged ? "converged" : "not converged") + " after " + std::to_string(st.iterations) +
                            " iterations, largest ratio " + num(st.max_contraction)});
    const bool decays = f1.delta_fit > 0.0 && f2.delta_fit > 0.0 && f3.delta_fit > 0.0;
    R.checks.push_back({"semilinear decay", decays,
                        "fitted rates " + num(f1.delta_fit) + " (l2), " + num(f2.delta_fit) + " (grad), " + num(f3.delta_fit) + " (dt)"});
    R.pass = contracting && decays;
    R.report["pass"] = R.pass;
    R.report["notes"] = st.notes;
    return R;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::string e = cfg.experiment();
    ExperimentResult R;
    if (e == "calibrate") R = run_calibrate(cfg);
    else if (e == "check") R = run_check_experiment(cfg);
    else if (e == "estimate") R = run_estimate(cfg);
    else if (e == "equivalence") R = run_equivalence(cfg);
    else if (e == "heat") R = run_heat(cfg);
    else if (e == "wave") R = run_wave(cfg);
    else R = run_semilinear(cfg);
    return R;
}

int exit_code_for(const ExperimentResult& result) { return result.pass ? 0 : 1; }

// ---------------------------------------------------------------------------
// emission

ReportFormat report_format_from_string(const std::string& s) {
    if (s == "json") return ReportFormat::Json;
    if (s == "csv") return ReportFormat::Csv;
    if (s == "plotdata") return ReportFormat::Plotdata;
    throw ConfigError("report: unknown format '" + s + "' (json, csv or plotdata)");
}

Json parse_report(const std::string& text) {
    try {
        return Json::parse(text);
    } catch (const Json::exception& e) {
        throw IoError(std::string("report: cannot parse JSON: ") + e.what());
    }
}

namespace {

std::string cell(const Json& v) {
    if (v.is_null()) return "nan";
    if (v.is_number()) return num(v.get<double>());
    if (v.is_string()) {
        std::string s = v.get<std::string>();
        if (s.find_first_of(",\"") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
        return q + "\"";
    }
    return v.dump();
}

// the per-inequality sub-reports of a check / estimate / equivalence report
std::vector<const Json*> ineq_parts(const Json& r) {
    std::vector<const Json*> out;
    if (r.contains("reports"))
        for (const Json& x : r["reports"]) out.push_back(&x);
    else if (r.contains("samples"))
        out.push_back(&r);
    return out;
}

std::vector<std::string> row_columns(const std::string& experiment) {
    if (experiment == "heat") return {"t", "l2", "h1", "linf", "dt_l2", "bound"};
    if (experiment == "wave") return {"t", "h1", "l2", "grad", "dt_l2"};
    return {"t", "l2", "grad", "dt_l2"};
}

}  // namespace

std::string emit_report(const Json& report, ReportFormat format) {
    if (!report.is_object() || !report.contains("experiment")) throw DomainError("report: not an ncx report");
    const std::string e = report["experiment"].get<std::string>();
    if (format == ReportFormat::Json) return report.dump(2) + "\n";

    std::ostringstream os;
    if (e == "heat" || e == "wave" || e == "semilinear") {
        if (!report.contains("rows") || report["rows"].empty()) throw DomainError("report: no rows to emit");
        const auto cols = row_columns(e);
        if (format == ReportFormat::Csv) {
            for (std::size_t c = 0; c < cols.size(); ++c) os << (c ? "," : "") << cols[c];
            os << "\n";
            for (const Json& row : report["rows"]) {
                for (std::size_t c = 0; c < cols.size(); ++c) os << (c ? "," : "") << cell(row.at(cols[c]));
                os << "\n";
            }
        } else {
            for (std::size_t c = 1; c < cols.size(); ++c) {
                if (c > 1) os << "\n";
                os << "# " << cols[c] << "\n";
                for (const Json& row : report["rows"]) os << cell(row.at("t")) << " " << cell(row.at(cols[c])) << "\n";
            }
        }
        return os.str();
    }
    if (e == "calibrate") {
        const Json& w = report.at("reference_widths");
        const Json& r = report.at("residuals");
        if (w.empty()) throw DomainError("report: no calibration widths to emit");
        if (format == ReportFormat::Csv) os << "width,residual\n";
        else os << "# residual\n";
        for (std::size_t k = 0; k < w.size(); ++k)
            os << cell(w[k]) << (format == ReportFormat::Csv ? "," : " ") << (k < r.size() ? cell(r[k]) : std::string("nan")) << "\n";
        return os.str();
    }

    const auto parts = ineq_parts(report);
    std::size_t total = 0;
    for (const Json* p : parts) total += p->at("samples").size();
    if (total == 0) throw DomainError("report: no samples to emit");
    if (format == ReportFormat::Csv) {
        os << "kind,element,lhs,rhs,ratio\n";
        for (const Json* p : parts)
            for (const Json& s : p->at("samples"))
                os << cell(p->at("kind_params").at("kind")) << "," << cell(s.at("id")) << "," << cell(s.at("lhs")) << ","
                   << cell(s.at("rhs")) << "," << cell(s.at("ratio")) << "\n";
    } else {
        bool first = true;
        for (const Json* p : parts) {
            if (!first) os << "\n";
            first = false;
            os << "# " << p->at("kind_params").at("kind").get<std::string>() << "\n";
            std::size_t k = 0;
            for (const Json& s : p->at("samples")) os << k++ << " " << cell(s.at("ratio")) << "\n";
        }
    }
    return os.str();
}

Json run_manifest(const ExperimentConfig& cfg, const ExperimentResult& result, double wall_clock_seconds) {
    Json m;
    m["tool"] = "ncx";
    m["version"] = kToolVersion;
    m["experiment"] = cfg.experiment();
    m["config_hash"] = cfg.hash();
    Json c;
    for (const auto& f : ExperimentConfig::fields()) c[f.name] = cfg.str(f.name);
    m["config"] = c;
    m["seed"] = cfg.seed();
    if (result.calibration) m["calibration"] = Json::parse(result.calibration->manifest_json(""));
    else m["calibration"] = nullptr;
    Json checks = Json::array();
    for (const CheckOutcome& o : result.checks) checks.push_back({{"name", o.name}, {"pass", o.pass}, {"detail", o.detail}});
    m["checks"] = checks;
    m["pass"] = result.pass;
    m["wall_clock_seconds"] = wall_clock_seconds;
    return m;
}

std::vector<std::string> write_outputs(const ExperimentConfig& cfg, const ExperimentResult& result, double wall_clock_seconds) {
    std::vector<std::string> written;
    const std::string out = cfg.str("out");
    if (!out.empty()) {
        atomic_write(out, emit_report(result.report, ReportFormat::Json));
        written.push_back(out);
    }
    if (!cfg.str("csv").empty()) {
        atomic_write(cfg.str("csv"), emit_report(result.report, ReportFormat::Csv));
        written.push_back(cfg.str("csv"));
    }
    if (!cfg.str("plotdata").empty()) {
        atomic_write(cfg.str("plotdata"), emit_report(result.report, ReportFormat::Plotdata));
        written.push_back(cfg.str("plotdata"));
    }
    std::string manifest = cfg.str("manifest");
    if (manifest.empty() && !out.empty()) manifest = out + ".manifest.json";
    if (!manifest.empty()) {
        atomic_write(manifest, run_manifest(cfg, result, wall_clock_seconds).dump(2) + "\n");
        written.push_back(manifest);
    }
    return written;
}

}  // namespace ncx
