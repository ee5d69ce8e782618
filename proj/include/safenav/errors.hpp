#pragma once

#include <stdexcept>
#include <string>

namespace safenav {

/// Bad caller input: non-SPD matrices, malformed geometry, schema violations.
class InvalidInput : public std::invalid_argument {
public:
    explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

/// A floating-point quantity left the representable range even after
/// log-space evaluation. `index` is the series index where it happened.
class NumericRange : public std::range_error {
public:
    NumericRange(const std::string& what, int index)
        : std::range_error(what), index(index) {}
    int index;
};

/// Series did not meet the requested tolerance within n_max terms.
/// Carries the best bound achieved so the caller can decide whether to
/// fall back to sampling.
class ConvergenceFailure : public std::runtime_error {
public:
    ConvergenceFailure(const std::string& what, double best_bound, int terms)
        : std::runtime_error(what), best_bound(best_bound), terms(terms) {}
    double best_bound;
    int terms;
};

/// Polygon with no area, too few vertices, or a concave corner.
class DegenerateGeometry : public std::invalid_argument {
public:
    explicit DegenerateGeometry(const std::string& what) : std::invalid_argument(what) {}
};

/// Not enough samples to finish an estimate (velocity fits need >= 2 positions).
class InsufficientData : public std::invalid_argument {
public:
    explicit InsufficientData(const std::string& what) : std::invalid_argument(what) {}
};

/// Two algebraically equivalent computations disagreed beyond tolerance.
class InternalInconsistency : public std::runtime_error {
public:
    InternalInconsistency(const std::string& what, double relative_gap)
        : std::runtime_error(what), relative_gap(relative_gap) {}
    double relative_gap;
};

} // namespace safenav
