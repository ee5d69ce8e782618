#pragma once

#include "safenav/collision.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace safenav::baselines {

/// Sphere-vs-sphere benchmark case.
struct ComparisonCase {
    collision::PositionBelief robot;
    double robot_radius = 0.0;
    collision::PositionBelief obstacle;
    double obstacle_radius = 0.0;
    std::string label;
};

struct ComparisonRow {
    std::string method;
    double probability = 0.0;
    double time_mean_s = 0.0;
    double time_std_s = 0.0;
    bool feasible = false;
    bool degenerate = false; // coincident-mean flag from the linearized method
};

/// Empirical collision fraction over n_samples independent draws of both
/// positions, with the binomial standard error. Deterministic per seed.
/// Throws InvalidInput when n_samples < 100.
std::pair<double, double> mc_oracle(const ComparisonCase& c, int n_samples,
                                    std::uint64_t seed);

/// Robot volume times the combined Gaussian density at the mean separation:
/// pi r1^2 N(mu_x; mu_s, Sigma_x + Sigma_s), clamped to [0,1].
double dutoit(const ComparisonCase& c);

/// Robot volume times the maximum combined density on the robot's boundary
/// circle, located by a 360-point scan plus local ternary refinement.
double park(const ComparisonCase& c);

struct ZhuResult {
    double probability = 0.0;
    bool degenerate = false;
};

/// Linearized chance constraint along the mean-separation direction a:
/// Phi((r1 + s1 - ||mu_x - mu_s||) / sqrt(a' (Sigma_x + Sigma_s) a)).
/// Coincident means leave no direction to linearize along; returns 0.5
/// flagged degenerate.
ZhuResult zhu(const ComparisonCase& c);

/// Samples robot positions and averages the exact obstacle-Gaussian mass of
/// the collision disc around each sample. Deterministic per seed.
/// Throws InvalidInput when n_samples < 100.
double lambert_mci(const ComparisonCase& c, int n_samples, std::uint64_t seed);

/// Runs the series method plus all five references, timing each over
/// `repeats` runs. feasible = probability <= threshold. Row order: exact,
/// numerical_integral, lambert_mci, dutoit, park, zhu.
std::vector<ComparisonRow> compare(const ComparisonCase& c, double threshold,
                                   int repeats, int n_samples, std::uint64_t seed,
                                   double delta);

/// Benchmark geometries 'a', 'b', 'c': same-size discs at decreasing
/// clearance, (b) with the robot uncertain along the approach axis only,
/// (c) touching with both bodies small and well-localized.
ComparisonCase builtin_case(char which);

} // namespace safenav::baselines
