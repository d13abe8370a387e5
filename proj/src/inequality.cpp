#include "ncx/inequality.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ncx/parallel.hpp"
#include "ncx/symbol_ops.hpp"

namespace ncx {

namespace {

bool is_set(double v) { return !std::isnan(v); }

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

const std::pair<IneqKind, const char*> kNames[] = {
    {IneqKind::Sobolev, "sobolev"},         {IneqKind::Hls, "hls"},
    {IneqKind::YoungWeak, "young-weak"},    {IneqKind::Nash, "nash"},
    {IneqKind::LogSobolev, "log-sobolev"},  {IneqKind::EntropyBound, "entropy-bound"},
    {IneqKind::Gn, "gn"},                   {IneqKind::HeatKernel, "heat-kernel"},
    {IneqKind::HolderInterp, "holder-interp"}, {IneqKind::LogHolder, "log-holder"},
};

void require_close(double a, double b, const char* what) {
    if (std::abs(a - b) > 1e-12 * std::max(1.0, std::abs(b))) throw DomainError(what);
}

// E_r(x) = tau(y log y), y = |x|^r / ||x||_r^r, from the singular values.
double power_entropy(const SingularValueFn& sv, double r) {
    double S = 0.0;
    for (double v : sv.values) S += std::pow(v, r);
    if (!(S > 0.0)) throw ZeroElementError("entropy: all singular values vanish");
    double acc = 0.0;
    for (double v : sv.values) {
        const double y = std::pow(v, r) / (S * sv.weight);
        if (y > 0.0) acc += y * std::log(y);
    }
    return sv.weight * acc;
}

}  // namespace

std::string to_string(IneqKind k) {
    for (const auto& [kind, name] : kNames)
        if (kind == k) return name;
    return "?";
}

IneqKind ineq_kind_from_string(const std::string& s) {
    for (const auto& [kind, name] : kNames)
        if (s == name) return kind;
    throw ConfigError("unknown inequality kind '" + s + "'");
}

const std::vector<IneqKind>& all_ineq_kinds() {
    static const std::vector<IneqKind> v = [] {
        std::vector<IneqKind> out;
        for (const auto& [kind, name] : kNames) out.push_back(kind);
        return out;
    }();
    return v;
}

bool requires_d_above_2(IneqKind k) { return k == IneqKind::Nash || k == IneqKind::LogSobolev || k == IneqKind::HeatKernel; }

bool constant_free(IneqKind k) {
    return k == IneqKind::EntropyBound || k == IneqKind::LogHolder || k == IneqKind::HolderInterp;
}

bool additive(IneqKind k) { return k == IneqKind::EntropyBound || k == IneqKind::LogHolder || k == IneqKind::LogSobolev; }

double gn_eta(int d, double s, double p, double q, double r) {
    const double den = s / d + 1.0 / p - 1.0 / r;
    if (den == 0.0) throw DomainError("gn: s/d + 1/p - 1/r must be nonzero");
    return (1.0 / p - 1.0 / q) / den;
}

double gn_eta_printed_corollary(int d, double q) { return d * (q - 2.0) / (2.0 * d); }

IneqSpec IneqSpec::defaults(IneqKind k, int d) {
    IneqSpec spec;
    spec.kind = k;
    IneqParams& P = spec.params;
    switch (k) {
        case IneqKind::Sobolev:
            P.s = d >= 3 ? 1.0 : 0.25 * d;
            P.p = 2.0;
            break;
        case IneqKind::Hls:
            P.kernel = "riesz:s=" + fmt(0.5 * d);
            P.p = 4.0 / 3.0;
            break;
        case IneqKind::YoungWeak:
            P.kernel = "riesz:s=" + fmt(0.5 * d);
            P.p = 1.0;
            break;
        case IneqKind::Gn:
            P.s = 0.25 * d;
            P.r = 2.0;
            P.p = 1.0;
            P.q = 3.0;
            break;
        case IneqKind::HeatKernel:
            P.t_min = 0.01;
            P.t_max = 0.2;
            P.t_points = 8;
            break;
        case IneqKind::HolderInterp:
        case IneqKind::LogHolder:
            P.p = 1.0;
            P.r = 2.0;
            P.q = 3.0;
            break;
        default: break;
    }
    return spec.resolved(d);
}

IneqSpec IneqSpec::resolved(int d) const {
    const std::string name = to_string(kind);
    if (requires_d_above_2(kind) && d <= 2)
        throw DomainError(name + ": requires d > 2 (got d = " + std::to_string(d) + ")");
    IneqSpec out = *this;
    IneqParams& P = out.params;
    auto need = [&](double v, const char* what) {
        if (!is_set(v)) throw DomainError(name + ": parameter " + what + " is required");
    };

    switch (kind) {
        case IneqKind::Sobolev: {
            need(P.s, "s");
            if (!(P.s > 0.0 && P.s < d)) throw DomainError("sobolev: s must lie in (0, d)");
            if (is_set(P.p) && !is_set(P.q))
                P.q = 1.0 / (1.0 / P.p - P.s / d);
            else if (!is_set(P.p) && is_set(P.q))
                P.p = 1.0 / (1.0 / P.q + P.s / d);
            need(P.p, "p");
            need(P.q, "q");
            require_close(1.0 / P.p - 1.0 / P.q, P.s / d, "sobolev: parameters must satisfy 1/p - 1/q = s/d");
            if (!(P.p > 1.0 && P.p < P.q && std::isfinite(P.q) && P.q > 0.0))
                throw DomainError("sobolev: parameters must satisfy 1 < p < q < inf");
            break;
        }
        case IneqKind::Hls:
        case IneqKind::YoungWeak: {
            if (P.kernel.empty()) P.kernel = "riesz:s=" + fmt(0.5 * d);
            KernelDescriptor K = KernelDescriptor::parse(P.kernel);
            if (K.kind == KernelDescriptor::Kind::Riesz) {
                if (!(K.s > 0.0 && K.s < d)) throw DomainError(name + ": the Riesz kernel needs 0 < s < d");
                const double qk = d / (d - K.s);
                if (is_set(P.q)) require_close(P.q, qk, "kernel: K_s lies in L^{q,inf} only for q = d/(d-s)");
                P.q = qk;
                P.s = K.s;
            }
            need(P.q, "q");
            if (is_set(P.p) && !is_set(P.r))
                P.r = 1.0 / (1.0 / P.p + 1.0 / P.q - 1.0);
            else if (!is_set(P.p) && is_set(P.r))
                P.p = 1.0 / (1.0 + 1.0 / P.r - 1.0 / P.q);
            need(P.p, "p");
            need(P.r, "r");
            require_close(1.0 + 1.0 / P.r, 1.0 / P.p + 1.0 / P.q, "parameters must satisfy 1 + 1/r = 1/p + 1/q");
            const bool p_ok = kind == IneqKind::Hls ? P.p > 1.0 : P.p >= 1.0;
            if (!p_ok || !std::isfinite(P.p) || !(P.q > 1.0) || !std::isfinite(P.q) || !(P.r > 1.0) || !std::isfinite(P.r))
                throw DomainError(name + (kind == IneqKind::Hls ? ": needs 1 < p, q, r < inf" : ": needs 1 <= p < inf and 1 < q, r < inf"));
            break;
        }
        case IneqKind::Gn: {
            need(P.s, "s");
            need(P.p, "p");
            need(P.q, "q");
            need(P.r, "r");
            if (!(P.s > 0.0)) throw DomainError("gn: s must be positive");
            if (!(P.r > 0.0 && P.r < d / P.s)) throw DomainError("gn: r must lie in (0, d/s)");
            const double qmax = P.r * d / (d - P.s * P.r);
            if (!(1.0 <= P.p && P.p <= P.q && P.q <= qmax * (1.0 + 1e-12)))
                throw DomainError("gn: parameters must satisfy 1 <= p <= q <= rd/(d - sr)");
            const double eta = gn_eta(d, P.s, P.p, P.q, P.r);
            if (is_set(P.eta)) require_close(P.eta, eta, "gn: eta must equal (1/p - 1/q)/(s/d + 1/p - 1/r)");
            P.eta = eta;
            break;
        }
        case IneqKind::HolderInterp:
        case IneqKind::LogHolder: {
            need(P.p, "p");
            need(P.q, "q");
            need(P.r, "r");
            if (!(P.p >= 1.0 && P.p < P.q && P.r <= P.q && P.r >= P.p))
                throw DomainError(name + ": parameters must satisfy 1 <= p <= r <= q and p < q");
            const double eta = (P.p / P.r) * (P.q - P.r) / (P.q - P.p);
            if (kind == IneqKind::HolderInterp) {
                if (is_set(P.eta)) require_close(P.eta, eta, "holder-interp: eta must equal (p/r)(q-r)/(q-p)");
                P.eta = eta;
            }
            break;
        }
        case IneqKind::HeatKernel:
            if (!is_set(P.t_min)) P.t_min = 0.01;
            if (!is_set(P.t_max)) P.t_max = 0.2;
            if (P.t_points <= 0) P.t_points = 8;
            if (!(P.t_min > 0.0 && P.t_min <= P.t_max)) throw DomainError("heat-kernel: need 0 < t_min <= t_max");
            break;
        default: break;
    }
    return out;
}

std::vector<std::pair<std::string, double>> IneqSpec::param_list() const {
    std::vector<std::pair<std::string, double>> out;
    const IneqParams& P = params;
    for (auto [k, v] : {std::pair{"p", P.p}, std::pair{"q", P.q}, std::pair{"r", P.r}, std::pair{"s", P.s}, std::pair{"eta", P.eta}})
        if (is_set(v)) out.emplace_back(k, v);
    if (kind == IneqKind::HeatKernel) {
        out.emplace_back("t_min", P.t_min);
        out.emplace_back("t_max", P.t_max);
        out.emplace_back("t_points", P.t_points);
    }
    return out;
}

std::vector<double> IneqSpec::t_grid() const {
    std::vector<double> t(params.t_points);
    for (int k = 0; k < params.t_points; ++k)
        t[k] = params.t_points == 1 ? params.t_max
                                    : params.t_min * std::pow(params.t_max / params.t_min, static_cast<double>(k) / (params.t_points - 1));
    return t;
}

const NcElement& CheckContext::derived(const std::string& key, const std::function<NcElement(const NcElement&)>& make) {
    auto it = memo_.find(key);
    if (it == memo_.end()) it = memo_.emplace(key, make(x_)).first;
    return it->second;
}

IneqSample check_inequality(const IneqSpec& spec_in, CheckContext& ctx) {
    const NcElement& x = ctx.x();
    const int d = x.symbol().grid().d;
    const IneqSpec spec = spec_in.resolved(d);
    const IneqParams& P = spec.params;
    if (x.is_zero()) throw ZeroElementError(to_string(spec.kind) + ": x = 0");

    IneqSample out;
    out.element_id = x.label();
    auto frac = [&](double s) -> const NcElement& {
        return ctx.derived("frac:" + fmt(s), [s](const NcElement& e) { return fractional_laplacian(e, s); });
    };
    auto sv_norm = [&](double p) { return lp_norm(x, p, false, NormRoute::SingularValues); };

    switch (spec.kind) {
        case IneqKind::Sobolev:
            out.lhs = lp_norm(x, P.q);
            out.rhs = lp_norm(frac(P.s), P.p);
            break;
        case IneqKind::Hls:
        case IneqKind::YoungWeak: {
            const KernelDescriptor K = KernelDescriptor::parse(P.kernel);
            const NcElement& kx = ctx.derived("kernel:" + K.describe(), [&K](const NcElement& e) {
                const NcElement y = convolve_kernel(K, e);
                return NcElement(y.symbol(), without_tail_check(e.backend_ptr()), y.positive(), e.label());
            });
            out.lhs = lp_norm(kx, P.r, spec.kind == IneqKind::YoungWeak);
            out.rhs = K.weak_norm(d, P.q) * lp_norm(x, P.p);
            break;
        }
        case IneqKind::Nash:
            out.lhs = std::pow(lp_norm(x, 2.0), 1.0 + 2.0 / d);
            out.rhs = gradient_l2(x) * std::pow(lp_norm(x, 1.0), 2.0 / d);
            break;
        case IneqKind::LogSobolev: {
            const double l2 = lp_norm(x, 2.0), g = gradient_l2(x);
            out.lhs = entropy(x);
            out.rhs = 0.5 * d * std::log(g * g / (l2 * l2));
            break;
        }
        case IneqKind::EntropyBound: {
            const double l2 = sv_norm(2.0), l1 = sv_norm(1.0);
            out.lhs = entropy(x);
            out.rhs = std::log(l2 * l2 / (l1 * l1));
            break;
        }
        case IneqKind::Gn:
            out.lhs = lp_norm(x, P.q);
            out.rhs = std::pow(lp_norm(frac(P.s), P.r), P.eta) * std::pow(lp_norm(x, P.p), 1.0 - P.eta);
            break;
        case IneqKind::HeatKernel: {
            double best = 0.0, t_best = 0.0;
            for (double t : spec.t_grid()) {
                // not memoized: on refined d = 4 grids each flow is a large symbol
                const NcElement u = apply_multiplier(x, Multiplier::heat(t));
                const double v = std::pow(t, 0.5 * d) * lp_norm(u, kInf);
                if (v > best) best = v, t_best = t;
            }
            out.lhs = best;
            out.rhs = lp_norm(x, 1.0);
            out.extra.emplace_back("t_argmax", t_best);
            break;
        }
        case IneqKind::HolderInterp:
            out.lhs = sv_norm(P.r);
            out.rhs = std::pow(sv_norm(P.p), P.eta) * std::pow(sv_norm(P.q), 1.0 - P.eta);
            break;
        case IneqKind::LogHolder: {
            const SingularValueFn& sv = x.singular_values();
            const double nq = sv_norm(P.q), nr = sv_norm(P.r), np = sv_norm(P.p);
            out.lhs = power_entropy(sv, P.r);
            out.rhs = P.r * P.p / (P.q - P.p) * std::log(nq / nr);
            // scale-consistent reading: E_p <= (pq/(q-p)) log(||x||_q / ||x||_p)
            out.extra.emplace_back("corrected_excess", power_entropy(sv, P.p) - P.p * P.q / (P.q - P.p) * std::log(nq / np));
            break;
        }
    }
    if (additive(spec.kind)) {
        const double scale = spec.kind == IneqKind::LogSobolev ? 2.0 / d : 1.0;
        out.ratio = std::exp(scale * (out.lhs - out.rhs));
    } else {
        out.ratio = out.lhs / out.rhs;
    }
    return out;
}

IneqSample check_inequality(const IneqSpec& spec, const NcElement& x) {
    CheckContext ctx(x);
    return check_inequality(spec, ctx);
}

std::vector<NcElement> build_family(const FamilyDescriptor& family, const BackendPtr& backend) {
    const auto specs = expand_family(family, backend->grid.d);
    std::vector<NcElement> out;
    out.reserve(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i)
        out.emplace_back(make_test_symbol(specs[i], backend->grid), backend, false, std::to_string(i) + ":" + specs[i].describe());
    return out;
}

namespace {

std::vector<std::vector<IneqSample>> evaluate(const std::vector<IneqSpec>& specs, const FamilyDescriptor& family,
                                              const BackendPtr& backend) {
    const std::vector<NcElement> elems = build_family(family, backend);
    std::vector<std::vector<IneqSample>> rows(specs.size(), std::vector<IneqSample>(elems.size()));
    parallel_for(elems.size(), [&](std::size_t i) {
        CheckContext ctx(elems[i]);
        for (std::size_t k = 0; k < specs.size(); ++k) rows[k][i] = check_inequality(specs[k], ctx);
    });
    return rows;
}

double excess(IneqKind kind, const IneqSample& s) { return additive(kind) ? s.lhs - s.rhs : s.ratio - 1.0; }

}  // namespace

std::vector<IneqReport> run_checks(const std::vector<IneqSpec>& specs_in, const FamilyDescriptor& family,
                                   const BackendConfig& cfg, const RunOptions& opts) {
    if (family.count <= 0) throw DomainError("inequality check: empty family");
    cfg.validate();
    const int d = cfg.grid.d;
    std::vector<IneqSpec> specs;
    for (const auto& s : specs_in) specs.push_back(s.resolved(d));

    const BackendPtr backend = cfg.build();
    const auto base = evaluate(specs, family, backend);
    std::vector<std::vector<IneqSample>> fine;
    if (opts.refine) fine = evaluate(specs, family, cfg.refined().build());

    std::vector<IneqReport> reports;
    for (std::size_t k = 0; k < specs.size(); ++k) {
        IneqReport R;
        R.spec = specs[k];
        R.backend = cfg;
        R.c_theta = backend->kind == BackendKind::NcMatrix ? backend->calibration.c_theta : 0.0;
        R.family = family.to_string();
        R.samples = base[k];
        R.stability_tol = opts.stability_tol;
        const IneqKind kind = specs[k].kind;
        const std::string name = to_string(kind);

        auto scan = [&](const std::vector<IneqSample>& rows, double& max_ratio, std::string& arg) {
            max_ratio = -kInf;
            for (const auto& s : rows) {
                if (!std::isfinite(s.ratio) || !std::isfinite(s.lhs) || !std::isfinite(s.rhs)) {
                    if (R.all_finite) R.notes.push_back(name + ": non-finite ratio at element '" + s.element_id + "'");
                    R.all_finite = false;
                    continue;
                }
                if (s.ratio > max_ratio) max_ratio = s.ratio, arg = s.element_id;
            }
        };
        scan(R.samples, R.max_ratio, R.argmax_id);

        bool stable = true;
        if (opts.refine) {
            std::string arg;
            scan(fine[k], R.refined_max_ratio, arg);
            R.refinement_delta = std::abs(R.refined_max_ratio - R.max_ratio) / std::abs(R.max_ratio);
            stable = R.refinement_delta <= opts.stability_tol;
            if (!stable)
                R.notes.push_back(name + ": max ratio moved by " + fmt(R.refinement_delta) + " under N -> 2N, M -> 2M (tolerance " +
                                  fmt(opts.stability_tol) + ")");
        } else {
            R.notes.push_back("refinement skipped; stability not assessed");
        }

        if (constant_free(kind)) {
            R.max_excess = -kInf;
            auto consider = [&](const std::vector<IneqSample>& rows) {
                for (const auto& s : rows) {
                    const double e = excess(kind, s);
                    if (e > R.max_excess) R.max_excess = e, R.worst_id = s.element_id;
                }
            };
            consider(R.samples);
            if (opts.refine) consider(fine[k]);
            R.holds = R.max_excess <= opts.slack;
            if (!R.holds) {
                std::size_t violations = 0;
                for (const auto& s : R.samples) violations += excess(kind, s) > opts.slack;
                R.notes.push_back(name + " violated: element '" + R.worst_id + "' exceeds the bound by " + fmt(R.max_excess) + " (" +
                                  std::to_string(violations) + " of " + std::to_string(R.samples.size()) + " elements violate it)");
            }
        }

        if (kind == IneqKind::LogHolder) {
            double worst = -kInf;
            for (const auto& s : R.samples)
                for (const auto& [key, v] : s.extra)
                    if (key == "corrected_excess") worst = std::max(worst, v);
            R.notes.push_back("log-holder, scale-consistent form E_p <= (pq/(q-p)) log(||x||_q/||x||_p): max excess " + fmt(worst));
        }
        if (kind == IneqKind::Gn) {
            const IneqParams& P = specs[k].params;
            if (P.p == 2.0 && P.r == 2.0) {
                const double printed = gn_eta_printed_corollary(d, P.q);
                if (std::abs(printed - P.eta) > 1e-12)
                    R.notes.push_back("gn: the corollary exponent d(q-2)/(2d) = " + fmt(printed) + " differs from the general exponent " +
                                      fmt(P.eta) + "; the general exponent is used");
            }
        }
        if ((kind == IneqKind::Hls || kind == IneqKind::YoungWeak) && cfg.kind == BackendKind::NcMatrix)
            R.notes.push_back(name + ": truncation tail check disabled for K*x; its truncation error is assessed by refinement");

        R.pass = R.all_finite && stable && R.holds;
        reports.push_back(std::move(R));
    }
    return reports;
}

IneqReport run_check(const IneqSpec& spec, const FamilyDescriptor& family, const BackendConfig& backend, const RunOptions& opts) {
    return run_checks({spec}, family, backend, opts).front();
}

EstimatedConstant estimate_constant(const IneqSpec& spec, const FamilyDescriptor& family, const BackendConfig& backend,
                                    const RunOptions& opts) {
    if (family.count <= 0) throw DomainError("estimate_constant: empty family");
    EstimatedConstant c;
    c.report = run_check(spec, family, backend, opts);
    c.kind = spec.kind;
    c.value = c.report.max_ratio;
    c.refinement_delta = c.report.refinement_delta;
    c.stable = opts.refine && c.report.refinement_delta <= opts.stability_tol;
    c.family = c.report.family;
    c.backend = backend;
    c.c_theta = c.report.c_theta;
    if (!(c.value > 0.0) || !std::isfinite(c.value)) throw NumericalError("estimate_constant: no finite positive ratio");
    return c;
}

std::vector<IneqReport> equivalence_report(const FamilyDescriptor& family, const BackendConfig& backend, const RunOptions& opts) {
    const int d = backend.grid.d;
    if (d <= 2) throw DomainError("equivalence: the Sobolev/Nash/heat-kernel/log-Sobolev panel requires d > 2 (got d = " + std::to_string(d) + ")");
    IneqSpec sob;
    sob.kind = IneqKind::Sobolev;
    sob.params.s = 1.0;
    sob.params.p = 2.0;
    return run_checks({sob, IneqSpec::defaults(IneqKind::Nash, d), IneqSpec::defaults(IneqKind::HeatKernel, d),
                       IneqSpec::defaults(IneqKind::LogSobolev, d)},
                      family, backend, opts);
}

}  // namespace ncx
