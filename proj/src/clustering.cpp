#include "swarm_oracle/clustering.hpp"

#include <cmath>
#include <limits>

namespace swarm_oracle {

const char* to_string(ClusterStatus status) {
  switch (status) {
    case ClusterStatus::Open: return "open";
    case ClusterStatus::Accepted: return "accepted";
    case ClusterStatus::Rejected: return "rejected";
    case ClusterStatus::Annulled: return "annulled";
  }
  return "unknown";
}

bool Cluster::has_member(RobotId robot) const {
  for (const auto& m : members) {
    if (m.report.robot == robot) return true;
  }
  return false;
}

double distance(const Observation& a, const Observation& b) {
  if (a.dimension() != b.dimension()) {
    throw Error("observation dimension mismatch: " + std::to_string(a.dimension()) + " vs " +
                std::to_string(b.dimension()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.dimension(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

AssignmentDecision assign(const Observation& observation, std::span<const Cluster> open_clusters,
                          double radius, std::uint32_t capacity, ClusterId next_id) {
  const Cluster* best = nullptr;
  double best_distance = std::numeric_limits<double>::infinity();
  std::size_t open = 0;
  for (const auto& c : open_clusters) {
    if (c.status != ClusterStatus::Open) continue;
    ++open;
    const double d = distance(c.centroid, observation);
    if (d > radius) continue;
    if (d < best_distance || (d == best_distance && best != nullptr && c.id < best->id)) {
      best = &c;
      best_distance = d;
    }
  }
  if (best != nullptr) return Joined{best->id};
  if (open < capacity) return Created{next_id};
  return Dropped{};
}

Observation recompute_centroid(const Cluster& cluster) {
  if (cluster.members.empty()) throw Error("cannot aggregate an empty cluster");
  const std::size_t dim = cluster.members.front().report.observation.dimension();
  std::vector<long double> weighted(dim, 0.0L);
  long double total = 0.0L;
  for (const auto& m : cluster.members) {
    const auto& obs = m.report.observation;
    if (obs.dimension() != dim) throw Error("observation dimension mismatch inside cluster");
    const auto w = static_cast<long double>(m.report.deposit.units());
    for (std::size_t i = 0; i < dim; ++i) weighted[i] += w * obs[i];
    total += w;
  }
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<double>(weighted[i] / total);
  return Observation(std::move(out));
}

void admit(Cluster& cluster, ClusterMember member) {
  cluster.pool += member.report.deposit;
  cluster.members.push_back(std::move(member));
  cluster.centroid = recompute_centroid(cluster);
}

}  // namespace swarm_oracle
