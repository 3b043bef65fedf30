#include "dribo/verify.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

namespace dribo {

namespace {

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

bool grad_ok(const GradCheckResult& r, double tolerance) {
    return std::isfinite(r.max_rel_error) && r.max_rel_error < tolerance && r.trials > 0;
}

}  // namespace

std::string format_check(const CheckRecord& r) {
    const char* verdict = !r.asserted ? "LOGGED" : r.pass ? "PASS" : "FAIL";
    return r.name + "\t" + g17(r.lhs) + "\t" + g17(r.rhs) + "\t" + g17(r.gap) + "\t" + verdict;
}

std::string format_gradcheck(const GradCheckResult& r, double tolerance) {
    return r.name + "\t" + std::to_string(r.trials) + "\t" + g17(r.max_rel_error) + "\t" +
           (grad_ok(r, tolerance) ? "PASS" : "FAIL");
}

bool report_checks(const std::vector<CheckRecord>& records, std::ostream& out) {
    bool ok = !records.empty();
    for (const auto& r : records) {
        out << format_check(r) << '\n';
        if (r.asserted && !r.pass) ok = false;
    }
    return ok;
}

bool report_gradchecks(const std::vector<GradCheckResult>& results, std::ostream& out, double tolerance) {
    bool ok = !results.empty();
    for (const auto& r : results) {
        out << format_gradcheck(r, tolerance) << '\n';
        if (!grad_ok(r, tolerance)) ok = false;
    }
    return ok;
}

}  // namespace dribo
