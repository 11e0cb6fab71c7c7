#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "foveate/error.hpp"
#include "foveate/gaze.hpp"

namespace foveate::gaze {
namespace {

double dist_sq(PixelPoint a, PixelPoint b) {
  const double dr = a.row - b.row;
  const double dc = a.col - b.col;
  return dr * dr + dc * dc;
}

// Lowest-index argmin.
std::size_t nearest(PixelPoint p, const std::vector<PixelPoint>& centroids) {
  std::size_t best = 0;
  double best_d = dist_sq(p, centroids[0]);
  for (std::size_t c = 1; c < centroids.size(); ++c) {
    const double d = dist_sq(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<PixelPoint> kmeans_plus_plus(const std::vector<PixelPoint>& points, std::size_t k,
                                         std::mt19937_64& rng) {
  std::vector<PixelPoint> centroids;
  centroids.reserve(k);
  std::uniform_int_distribution<std::size_t> any(0, points.size() - 1);
  centroids.push_back(points[any(rng)]);

  std::vector<double> d2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) d2[i] = dist_sq(points[i], centroids[0]);
  while (centroids.size() < k) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t chosen = 0;
    if (total > 0.0) {
      const double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      double running = 0.0;
      chosen = points.size() - 1;
      for (std::size_t i = 0; i < points.size(); ++i) {
        running += d2[i];
        if (running > target && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = any(rng);
    }
    centroids.push_back(points[chosen]);
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::min(d2[i], dist_sq(points[i], centroids.back()));
    }
  }
  return centroids;
}

double objective(const std::vector<PixelPoint>& points, const std::vector<std::size_t>& assignment,
                 const std::vector<PixelPoint>& centroids) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) total += dist_sq(points[i], centroids[assignment[i]]);
  return total;
}

}  // namespace

std::size_t cluster_count(std::size_t m, double k_fraction) {
  if (!(k_fraction > 0.0 && k_fraction <= 1.0)) throw InvalidArgument("k_fraction must lie in (0, 1]");
  if (m == 0) throw InvalidArgument("cannot cluster an empty point set");
  const auto k = static_cast<std::size_t>(std::floor(k_fraction * static_cast<double>(m) + 0.5));
  return std::clamp<std::size_t>(k, 1, m);
}

ClusteringResult kmeans(const std::vector<PixelPoint>& points, const KMeansOptions& options) {
  if (points.empty()) throw InvalidArgument("cannot cluster an empty point set");
  const std::size_t m = points.size();
  std::size_t k = options.k_override ? *options.k_override : cluster_count(m, options.k_fraction);
  if (k == 0) throw InvalidArgument("cluster count must be positive");
  k = std::min(k, m);

  std::mt19937_64 rng(options.seed);
  std::vector<PixelPoint> centroids = kmeans_plus_plus(points, k, rng);

  ClusteringResult result;
  std::vector<std::size_t>& assignment = result.assignment;
  assignment.assign(m, 0);
  for (std::size_t i = 0; i < m; ++i) assignment[i] = nearest(points[i], centroids);

  while (result.iterations < options.max_iterations) {
    ++result.iterations;

    // Re-seed empty clusters from the point farthest from its centroid.
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t a : assignment) ++sizes[a];
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] > 0) continue;
      std::size_t far = m;
      double far_d = -1.0;
      for (std::size_t i = 0; i < m; ++i) {
        if (sizes[assignment[i]] < 2) continue;
        const double d = dist_sq(points[i], centroids[assignment[i]]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far == m) break;
      --sizes[assignment[far]];
      assignment[far] = c;
      sizes[c] = 1;
      centroids[c] = points[far];
    }

    std::vector<PixelPoint> sums(k);
    for (std::size_t i = 0; i < m; ++i) {
      sums[assignment[i]].row += points[i].row;
      sums[assignment[i]].col += points[i].col;
    }
    double movement = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) continue;
      const PixelPoint next{sums[c].row / static_cast<double>(sizes[c]), sums[c].col / static_cast<double>(sizes[c])};
      movement = std::max(movement, std::sqrt(dist_sq(next, centroids[c])));
      centroids[c] = next;
    }
    result.objective_history.push_back(objective(points, assignment, centroids));

    std::vector<std::size_t> next_assignment(m);
    for (std::size_t i = 0; i < m; ++i) next_assignment[i] = nearest(points[i], centroids);
    const bool stable = next_assignment == assignment;
    // Only stop once the assignment is consistent with the final centroids;
    // at the iteration cap keep centroids equal to their members' means.
    if ((movement < options.tolerance_px && stable) || result.iterations >= options.max_iterations) break;
    assignment = std::move(next_assignment);
  }

  result.clusters.resize(k);
  for (std::size_t i = 0; i < m; ++i) result.clusters[assignment[i]].member_indices.push_back(i);
  for (std::size_t c = 0; c < k; ++c) {
    FixationCluster& cluster = result.clusters[c];
    std::vector<PixelPoint> members;
    members.reserve(cluster.member_indices.size());
    for (std::size_t i : cluster.member_indices) members.push_back(points[i]);
    cluster.centroid_px = centroids[c];
    cluster.hull_px = convex_hull(std::move(members));
  }
  return result;
}

std::vector<FixationCluster> cluster_fixations(const std::vector<PixelPoint>& points, double k_fraction,
                                               std::uint64_t seed) {
  KMeansOptions options;
  options.k_fraction = k_fraction;
  options.seed = seed;
  return kmeans(points, options).clusters;
}

}  // namespace foveate::gaze
