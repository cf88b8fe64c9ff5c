#include "mcmt/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mcmt {

void validate_moment(const Moment& m, double duration) {
  if (!std::isfinite(m.start) || !std::isfinite(m.end)) {
    throw std::invalid_argument("moment has non-finite bounds");
  }
  if (m.start < 0.0 || m.end < m.start) {
    throw std::invalid_argument("moment [" + std::to_string(m.start) + ", " +
                                std::to_string(m.end) + "] is not ordered");
  }
  if (duration > 0.0 && m.end > duration) {
    throw std::invalid_argument("moment end " + std::to_string(m.end) +
                                " exceeds duration " + std::to_string(duration));
  }
}

void validate_proposal(const Proposal& p, double width_cap) {
  if (!(p.center >= 0.0 && p.center <= 1.0)) {
    throw std::invalid_argument("proposal center outside [0,1]");
  }
  if (!(p.width > 0.0 && p.width <= width_cap)) {
    throw std::invalid_argument("proposal width outside (0, width_cap]");
  }
}

void validate_proposal_set(const ProposalSet& ps, double width_cap) {
  if (ps.empty()) throw std::invalid_argument("empty proposal set");
  for (const auto& p : ps) validate_proposal(p, width_cap);
}

double iou(const Moment& a, const Moment& b) {
  const double inter =
      std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
  const double uni = std::max(a.end, b.end) - std::min(a.start, b.start);
  if (uni <= 0.0) {
    return (a.start == b.start && a.end == b.end) ? 1.0 : 0.0;
  }
  return inter / uni;
}

Moment proposal_to_moment(const Proposal& p, double duration) {
  if (!(duration > 0.0)) {
    throw std::invalid_argument("duration must be positive");
  }
  const double s = std::max(p.center - p.width / 2.0, 0.0);
  const double e = std::min(p.center + p.width / 2.0, 1.0);
  Moment m{s * duration, e * duration};
  if (m.end < m.start) m.end = m.start;
  return m;
}

}  // namespace mcmt
