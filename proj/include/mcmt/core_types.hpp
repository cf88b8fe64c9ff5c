#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace mcmt {

/// A temporal segment of a video, in seconds.
struct Moment {
  double start = 0.0;
  double end = 0.0;

  double length() const { return end - start; }
};

/// A candidate segment in normalized video time. `score` carries the
/// aggregation weight of the proposal when one is available.
struct Proposal {
  double center = 0.5;
  double width = 0.5;
  std::optional<double> score;
};

using ProposalSet = std::vector<Proposal>;

/// Positive, easy-negative and hard-negative clip weights for one video.
struct MaskTriplet {
  std::vector<double> positive;
  std::vector<double> easy;
  std::vector<double> hard;
};

// Throws std::invalid_argument when the moment is malformed. A non-positive
// `duration` skips the upper-bound check.
void validate_moment(const Moment& m, double duration = -1.0);

// Throws std::invalid_argument unless center is in [0,1] and width in
// (0, width_cap].
void validate_proposal(const Proposal& p, double width_cap = 1.0);

void validate_proposal_set(const ProposalSet& ps, double width_cap = 1.0);

/// Intersection over union of two intervals. Two identical zero-length
/// intervals have IoU 1; any other zero-length union gives 0.
double iou(const Moment& a, const Moment& b);

/// Converts a normalized proposal to seconds, clamping to [0, duration].
Moment proposal_to_moment(const Proposal& p, double duration);

}  // namespace mcmt
