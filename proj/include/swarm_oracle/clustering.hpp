#pragma once

#include <variant>
#include <vector>

#include "swarm_oracle/domain.hpp"

namespace swarm_oracle {

enum class ClusterStatus : std::uint8_t { Open, Accepted, Rejected, Annulled };

const char* to_string(ClusterStatus status);

/// A member report as held inside a cluster. `vote` is the vote counted by the
/// contract, which may differ from the submitted one for coerced targeted reports.
struct ClusterMember {
  Report report;
  Vote counted_vote = Vote::Reject;
  bool coerced = false;
  /// Token supply when the deposit was escrowed.
  TokenAmount supply;
};

/// A pending proposal: member reports in ledger order, the deposit-weighted
/// centroid of their observations and the escrowed pool.
struct Cluster {
  ClusterId id = 0;
  std::vector<ClusterMember> members;
  Observation centroid;
  TokenAmount pool;
  ClusterStatus status = ClusterStatus::Open;

  bool has_member(RobotId robot) const;
};

struct Joined {
  ClusterId id;
  friend bool operator==(const Joined&, const Joined&) = default;
};
struct Created {
  ClusterId id;
  friend bool operator==(const Created&, const Created&) = default;
};
struct Dropped {
  friend bool operator==(const Dropped&, const Dropped&) = default;
};

using AssignmentDecision = std::variant<Joined, Created, Dropped>;

/// Euclidean distance. Throws on dimension mismatch.
double distance(const Observation& a, const Observation& b);

/// Decides where a new report goes. Joins the nearest open cluster whose
/// centroid lies within `radius` (ties to the lowest id); otherwise creates
/// cluster `next_id` while fewer than `capacity` clusters are open; otherwise
/// drops. Pure: the caller performs the admission.
AssignmentDecision assign(const Observation& observation, std::span<const Cluster> open_clusters,
                          double radius, std::uint32_t capacity, ClusterId next_id);

/// Deposit-weighted mean of member observations.
Observation recompute_centroid(const Cluster& cluster);

/// Appends a member, grows the pool and refreshes the centroid. Existing
/// members never move.
void admit(Cluster& cluster, ClusterMember member);

}  // namespace swarm_oracle
