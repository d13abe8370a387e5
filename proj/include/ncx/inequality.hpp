#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ncx/element.hpp"
#include "ncx/families.hpp"
#include "ncx/multipliers.hpp"

namespace ncx {

enum class IneqKind { Sobolev, Hls, YoungWeak, Nash, LogSobolev, EntropyBound, Gn, HeatKernel, HolderInterp, LogHolder };

std::string to_string(IneqKind k);
IneqKind ineq_kind_from_string(const std::string& s);
const std::vector<IneqKind>& all_ineq_kinds();
bool requires_d_above_2(IneqKind k);
// Kinds whose printed form has no constant; they must hold outright.
bool constant_free(IneqKind k);
// Kinds compared on a logarithmic scale (ratio = exp(lhs - rhs)).
bool additive(IneqKind k);

// Parameters of one inequality.  NaN means "not set": resolve() fills what
// the parameter relations determine and rejects violations.
//   sobolev       ||x||_q <= C ||(-D)^{s/2} x||_p,          1/p - 1/q = s/d
//   hls           ||K*x||_r <= C ||K||_{q,inf} ||x||_p,      1 + 1/r = 1/p + 1/q
//   young-weak    ||K*x||_{r,inf} <= C ||K||_{q,inf} ||x||_p
//   nash          ||x||_2^{1+2/d} <= C ||grad x||_2 ||x||_1^{2/d}
//   log-sobolev   E_2(x) <= (d/2) log(C ||grad x||_2^2 / ||x||_2^2)
//   entropy-bound E_2(x) <= log(||x||_2^2 / ||x||_1^2)
//   gn            ||x||_q <= ||(-D)^{s/2} x||_r^eta ||x||_p^{1-eta}
//   heat-kernel   sup_t t^{d/2} ||e^{tD} x||_inf <= C ||x||_1
//   holder-interp ||x||_r <= ||x||_p^eta ||x||_q^{1-eta},   eta = (p/r)(q-r)/(q-p)
//   log-holder    E_r(x) <= (rp/(q-p)) log(||x||_q / ||x||_r)
// with E_r(x) = tau(y log y), y = |x|^r / ||x||_r^r.
struct IneqParams {
    static constexpr double unset = std::numeric_limits<double>::quiet_NaN();
    double p = unset, q = unset, r = unset, s = unset;
    double eta = unset;  // derived for gn and holder-interp
    std::string kernel;  // hls / young-weak kernel descriptor
    double t_min = unset, t_max = unset;
    int t_points = 0;
};

struct IneqSpec {
    IneqKind kind = IneqKind::Nash;
    IneqParams params;

    // Kind defaults for dimension d, already resolved.
    static IneqSpec defaults(IneqKind k, int d);
    // Fills derived parameters from defaults and relations; DomainError on a
    // violated relation or an unsupported dimension.
    IneqSpec resolved(int d) const;
    // Ordered (name, value) list of the numeric parameters that apply.
    std::vector<std::pair<std::string, double>> param_list() const;
    std::vector<double> t_grid() const;
};

struct IneqSample {
    std::string element_id;
    double lhs = 0.0;
    double rhs = 0.0;
    double ratio = 0.0;
    // kind-specific diagnostics (heat-kernel: t_argmax; log-holder: corrected_excess)
    std::vector<std::pair<std::string, double>> extra;
};

// Per-element memo of derived elements (K*x, multipliers, heat flows) so
// several checks on one element quantize each derived element once.
class CheckContext {
public:
    explicit CheckContext(NcElement x) : x_(std::move(x)) {}
    const NcElement& x() const { return x_; }
    const NcElement& derived(const std::string& key, const std::function<NcElement(const NcElement&)>& make);

private:
    NcElement x_;
    std::map<std::string, NcElement> memo_;
};

IneqSample check_inequality(const IneqSpec& spec, CheckContext& ctx);
IneqSample check_inequality(const IneqSpec& spec, const NcElement& x);

struct RunOptions {
    bool refine = true;
    double stability_tol = 0.02;
    double slack = 1e-8;  // additive slack for constant-free kinds
};

struct IneqReport {
    IneqSpec spec;
    BackendConfig backend;
    double c_theta = 0.0;
    std::string family;
    std::vector<IneqSample> samples;
    double max_ratio = 0.0;
    std::string argmax_id;
    double refined_max_ratio = IneqParams::unset;
    double refinement_delta = IneqParams::unset;
    double stability_tol = 0.02;
    bool all_finite = true;
    // constant-free kinds: largest lhs - rhs (additive kinds) or ratio - 1
    double max_excess = IneqParams::unset;
    std::string worst_id;
    bool holds = true;
    bool pass = false;
    std::vector<std::string> notes;
};

// One report per spec, sharing the family elements (and their derived
// elements) across specs.  Refinement rebuilds the family on
// backend.refined().
std::vector<IneqReport> run_checks(const std::vector<IneqSpec>& specs, const FamilyDescriptor& family,
                                   const BackendConfig& backend, const RunOptions& opts = {});
IneqReport run_check(const IneqSpec& spec, const FamilyDescriptor& family, const BackendConfig& backend,
                     const RunOptions& opts = {});

struct EstimatedConstant {
    IneqKind kind = IneqKind::Nash;
    double value = 0.0;
    double refinement_delta = IneqParams::unset;
    bool stable = false;
    std::string family;
    BackendConfig backend;
    double c_theta = 0.0;
    IneqReport report;
};

EstimatedConstant estimate_constant(const IneqSpec& spec, const FamilyDescriptor& family, const BackendConfig& backend,
                                    const RunOptions& opts = {});

// Sobolev (s = 1, p = 2, q = 2d/(d-2)), Nash, heat-kernel and log-Sobolev on
// one family.  Requires d > 2.
std::vector<IneqReport> equivalence_report(const FamilyDescriptor& family, const BackendConfig& backend,
                                           const RunOptions& opts = {});

// Builds the family members on a backend; ids are "<index>:<description>".
std::vector<NcElement> build_family(const FamilyDescriptor& family, const BackendPtr& backend);

// gn exponent of the general theorem and the reading printed for the
// p = r = 2 special case; both are reported when they disagree.
double gn_eta(int d, double s, double p, double q, double r);
double gn_eta_printed_corollary(int d, double q);

}  // namespace ncx
