#pragma once

// Text reports for the exact-information checks and the gradient suite.
//
// Oracle lines, tab separated, values with 17 significant digits:
//   <name>\t<lhs>\t<rhs>\t<gap>\t<PASS|FAIL|LOGGED>
// Gradient lines:
//   <name>\t<trials>\t<max_rel_error>\t<PASS|FAIL>

#include <iosfwd>
#include <vector>

#include "dribo/gradcheck.hpp"
#include "dribo/oracle.hpp"

namespace dribo {

inline constexpr double kGradCheckTolerance = 1e-4;

std::string format_check(const CheckRecord& r);
std::string format_gradcheck(const GradCheckResult& r, double tolerance = kGradCheckTolerance);

/// Writes one line per record; true when every asserted record passed.
bool report_checks(const std::vector<CheckRecord>& records, std::ostream& out);
/// Writes one line per result; true when every error is below the tolerance.
bool report_gradchecks(const std::vector<GradCheckResult>& results, std::ostream& out,
                       double tolerance = kGradCheckTolerance);

}  // namespace dribo
