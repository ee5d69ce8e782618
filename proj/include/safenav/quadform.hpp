#pragma once

#include <Eigen/Dense>
#include <vector>

namespace safenav::quadform {

/// Quadratic form q(w) = w' A w of a Gaussian w ~ N(mean, covariance).
/// A and covariance must be symmetric positive definite.
struct QuadFormSpec {
    Eigen::MatrixXd a;
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

/// Spectral parameters of the form: lambdas are the eigenvalues of
/// S^{1/2} A S^{1/2} (all positive), b = P' S^{-1/2} mu expresses the mean
/// in the rotated whitened frame. The distribution of q(w) is the one of
/// sum_i lambda_i (u_i + b_i)^2 with u ~ N(0, I).
struct SpectralParams {
    Eigen::VectorXd lambdas;
    Eigen::VectorXd b;
    int n() const { return static_cast<int>(lambdas.size()); }
};

/// Power-series coefficients. c[k] holds c_k, d[k] holds d_k (d[0] unused).
struct SeriesCoefficients {
    std::vector<double> c;
    std::vector<double> d;
};

/// One evaluation of the series CDF or PDF.
///   value        clamped to [0,1] for the CDF, >= 0 for the PDF
///   terms_used   truncation index N (partial sum keeps k = 0..N)
///   error_bound  certified remainder estimate, see cdf() notes
///   rho          radius used for the coefficient envelope
struct SeriesResult {
    double value = 0.0;
    int terms_used = 0;
    double error_bound = 0.0;
    double rho = 0.0;
};

/// Options shared by cdf() and pdf().
struct SeriesOptions {
    double delta = 1e-3;      // requested truncation tolerance
    int n_max = 200;          // give up past this many terms
    double rho_fraction = 0.9; // rho = rho_fraction * min(lambda)
};

/// Eigen-decomposes the form. Throws InvalidInput when a or covariance is
/// asymmetric (1e-12 relative), not positive definite, or has an eigenvalue
/// below 1e-10 times its largest one.
SpectralParams spectral_decompose(const QuadFormSpec& spec);

/// First n_terms+1 coefficients of the series (c_0 .. c_{n_terms}).
/// c_0 = exp(-0.5 sum b_i^2) prod (2 lambda_i)^{-1/2}, computed in log space;
/// d_k = 0.5 sum_i (1 - k b_i^2) (2 lambda_i)^{-k};
/// c_k = (1/k) sum_{j<k} d_{k-j} c_j.
/// Throws NumericRange if a coefficient overflows double range.
SeriesCoefficients coefficients(const SpectralParams& params, int n_terms);

/// Envelope constant m(rho) = prod lambda_i^{-1/2}
///   * exp(-0.5 sum b_i^2 lambda_i / (lambda_i + rho))
///   * prod (1 - rho/lambda_i)^{-1/2},   valid for 0 < rho < min lambda_i.
double m_rho(const SpectralParams& params, double rho);

/// Certified bound on the CDF remainder after keeping terms 0..n_terms:
///   m(rho) / (Gamma(n/2) (N+1)!) (y/2)^{n/2} (y/(2 rho))^{N+1} exp(y/(2 rho)).
double truncation_bound(const SpectralParams& params, double y, int n_terms,
                        double rho);

/// Same shape for the PDF remainder:
///   m(rho) / (Gamma(n/2) N!) (y/2)^{n/2-1} (y/(2 rho))^{N+1} exp(y/(2 rho)).
double pdf_truncation_bound(const SpectralParams& params, double y, int n_terms,
                            double rho);

/// CDF P(q(w) <= y) via the alternating series
///   F(y) = sum_k (-1)^k c_k y^{n/2+k} / Gamma(n/2+k+1).
///
/// Stops at the smallest N >= 1 past the term-magnitude peak with
/// 2(|t_{N+1}| + |t_{N+2}|) <= delta, or earlier if the certified bound
/// already meets delta. The certified bound alone would need roughly double
/// the terms the series actually requires (it majorizes |c_k| by
/// m(rho)/rho^k, loose by an exponential factor), so the reported
/// error_bound is min(certified bound, 2(|t_{N+1}| + |t_{N+2}|)), which on
/// success never exceeds delta.
///
/// Evaluation runs in double precision with the coefficient recursion kept
/// under a running scale factor; when the predicted round-off
/// (max |term| * N * 2^-52) crosses 0.05*delta the sum is recomputed in
/// MPFR at a precision wide enough to absorb the cancellation.
///
/// Throws ConvergenceFailure when n_max terms do not satisfy the rule.
SeriesResult cdf(const SpectralParams& params, double y,
                 const SeriesOptions& opt = {});

/// Series PDF p(y) = sum_k (-1)^k c_k y^{n/2+k-1} / Gamma(n/2+k), same
/// stopping rule and escalation as cdf().
SeriesResult pdf(const SpectralParams& params, double y,
                 const SeriesOptions& opt = {});

} // namespace safenav::quadform
