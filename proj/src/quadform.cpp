#include "safenav/quadform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "detail/bigfloat.hpp"
#include "safenav/errors.hpp"

namespace safenav::quadform {

namespace {

constexpr double kEigenFloorRatio = 1e-10;
constexpr double kSymmetryTol = 1e-12;

void check_spd(const Eigen::MatrixXd& m, const char* name) {
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > kSymmetryTol * scale) {
        std::ostringstream os;
        os << name << " is not symmetric (max asymmetry " << asym << ")";
        throw InvalidInput(os.str());
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (lo <= 0.0 || lo < kEigenFloorRatio * hi) {
        std::ostringstream os;
        os << name << " is not positive definite enough (min eigenvalue " << lo
           << ", max " << hi << ")";
        throw InvalidInput(os.str());
    }
}

struct LogGamma {
    // lgamma(n/2 + k + shift) evaluated on demand
    static double at(double x) { return std::lgamma(x); }
};

// Shared state of one double-precision series pass. The c recursion is run
// on ctil_k = c_k * rtil^k with rtil = 2*min(lambda), which keeps d bounded:
// dtil_k = 0.5 sum (1 - k b_i^2) (rtil/(2 lambda_i))^k and |rtil/(2 lambda_i)| <= 1.
// A running power-of-two rescale (folded into scale_log) keeps ctil itself in
// range for long runs. Term magnitudes are assembled in log space.
struct SeriesPass {
    // inputs
    const Eigen::VectorXd* lambdas = nullptr;
    const Eigen::VectorXd* b = nullptr;
    double y = 0.0;
    bool density = false; // false: CDF terms, true: PDF terms

    // derived
    double rtil = 0.0;
    double lc0 = 0.0;     // log c_0
    double scale_log = 0.0;

    std::vector<double> ctil;     // scaled coefficients
    std::vector<double> env;      // cancellation-free envelope of |ctil|
    std::vector<double> dtil;
    std::vector<double> ratio_pow; // (rtil/(2 lambda_i))^k, per i
    std::vector<double> term;     // signed term values (may be 0 after underflow)
    std::vector<double> log_abs_term;
    std::vector<double> log_env_term;

    void init() {
        const auto& l = *lambdas;
        const auto& bv = *b;
        rtil = 2.0 * l.minCoeff();
        lc0 = -0.5 * bv.squaredNorm();
        for (int i = 0; i < l.size(); ++i) lc0 -= 0.5 * std::log(2.0 * l[i]);
        ctil = {1.0};
        env = {1.0};
        dtil = {0.0};
        ratio_pow.assign(l.size(), 1.0);
        push_term(0);
    }

    // ctil_k = c_k rtil^k, so the polynomial factor folds rtil^{-k} back in:
    // |t_k| = c_0 |ctil_k| (y/rtil)^k y^{n/2 (-1 for pdf)} / Gamma(n/2+k+shift)
    double log_poly_factor(int k) const {
        const double n = static_cast<double>(lambdas->size());
        const double shift = density ? 0.0 : 1.0;
        return k * std::log(y / rtil) +
               (n / 2.0 - (density ? 1.0 : 0.0)) * std::log(y) -
               LogGamma::at(n / 2.0 + k + shift);
    }

    void push_term(int k) {
        const double lt = lc0 + scale_log + std::log(std::abs(ctil[k])) + log_poly_factor(k);
        const double le = lc0 + scale_log + std::log(env[k]) + log_poly_factor(k);
        log_abs_term.push_back(ctil[k] == 0.0 ? -std::numeric_limits<double>::infinity() : lt);
        log_env_term.push_back(le);
        double t = std::exp(lt);
        if (ctil[k] < 0.0) t = -t;
        if (k % 2 == 1) t = -t;
        term.push_back(ctil[k] == 0.0 ? 0.0 : t);
    }

    void extend(int k) {
        const auto& l = *lambdas;
        const auto& bv = *b;
        double dk = 0.0;
        for (int i = 0; i < l.size(); ++i) {
            ratio_pow[i] *= rtil / (2.0 * l[i]);
            dk += (1.0 - k * bv[i] * bv[i]) * ratio_pow[i];
        }
        dk *= 0.5;
        dtil.push_back(dk);

        double ck = 0.0, ek = 0.0;
        for (int j = 0; j < k; ++j) {
            ck += dtil[k - j] * ctil[j];
            ek += std::abs(dtil[k - j]) * env[j];
        }
        ck /= k;
        ek /= k;
        ctil.push_back(ck);
        env.push_back(std::max(ek, std::abs(ck)));

        double m = 0.0;
        for (double v : env) m = std::max(m, v);
        if (m > 0x1.0p500) {
            for (auto& v : ctil) v *= 0x1.0p-512;
            for (auto& v : env) v *= 0x1.0p-512;
            scale_log += 512.0 * M_LN2;
        }
        push_term(k);
    }

    double kahan_partial(int upto) const {
        double s = 0.0, comp = 0.0;
        for (int k = 0; k <= upto; ++k) {
            const double yv = term[k] - comp;
            const double tv = s + yv;
            comp = (tv - s) - yv;
            s = tv;
        }
        return s;
    }
};

double log_m_rho(const Eigen::VectorXd& lambdas, const Eigen::VectorXd& b, double rho) {
    double lm = 0.0;
    for (int i = 0; i < lambdas.size(); ++i) {
        lm += -0.5 * std::log(lambdas[i]);
        lm += -0.5 * b[i] * b[i] * lambdas[i] / (lambdas[i] + rho);
        lm += -0.5 * std::log1p(-rho / lambdas[i]);
    }
    return lm;
}

double log_trunc_bound(const Eigen::VectorXd& lambdas, const Eigen::VectorXd& b,
                       double y, int n_terms, double rho, bool density) {
    if (y == 0.0) return -std::numeric_limits<double>::infinity();
    const double n = static_cast<double>(lambdas.size());
    const double lm = log_m_rho(lambdas, b, rho);
    const double half_y = y / 2.0;
    const double ratio = y / (2.0 * rho);
    double lg;
    if (density) {
        lg = lm - std::lgamma(n / 2.0) - std::lgamma(n_terms + 1.0) +
             (n / 2.0 - 1.0) * std::log(half_y) + (n_terms + 1.0) * std::log(ratio) + ratio;
    } else {
        lg = lm - std::lgamma(n / 2.0) - std::lgamma(n_terms + 2.0) +
             (n / 2.0) * std::log(half_y) + (n_terms + 1.0) * std::log(ratio) + ratio;
    }
    return lg;
}

struct StopInfo {
    int n = -1;
    double certified = std::numeric_limits<double>::infinity();
    double practical = std::numeric_limits<double>::infinity();
};

// Runs the double pass until the stopping rule fires or n_max is exhausted.
StopInfo run_to_stop(SeriesPass& pass, double delta, int n_max, double rho) {
    StopInfo out;
    int peak = 0;
    double best_cert = std::numeric_limits<double>::infinity();
    const double log_delta = std::log(delta);
    for (int k = 1; k <= n_max + 2; ++k) {
        pass.extend(k);
        if (pass.log_abs_term[k] > pass.log_abs_term[peak]) peak = k;

        // certified rule at N = k
        if (k <= n_max) {
            const double lb = log_trunc_bound(*pass.lambdas, *pass.b, pass.y, k, rho,
                                              pass.density);
            best_cert = std::min(best_cert, std::exp(lb));
            if (lb <= log_delta) {
                out.n = k;
                out.certified = std::exp(lb);
                out.practical = std::numeric_limits<double>::infinity();
                return out;
            }
        }
        // practical rule at N = k - 2: the doubled two-term lookahead must
        // itself fit under delta, so the reported bound never exceeds delta
        const int n = k - 2;
        if (n >= 1 && n <= n_max && peak <= n) {
            const double est = 2.0 * (std::exp(pass.log_abs_term[n + 1]) +
                                      std::exp(pass.log_abs_term[n + 2]));
            if (est <= delta) {
                out.n = n;
                out.certified = std::exp(
                    log_trunc_bound(*pass.lambdas, *pass.b, pass.y, n, rho, pass.density));
                out.practical = est;
                return out;
            }
        }
    }
    out.certified = best_cert;
    return out;
}

// High-precision recomputation of the partial sum 0..n_stop. Magnitude and
// stopping decisions stay with the double pass; this only absorbs the
// cancellation in the summed value.
double mpfr_partial_sum(const SeriesPass& pass, int n_stop, double needed_log_acc) {
    using detail::MpReal;
    const double max_log_env =
        *std::max_element(pass.log_env_term.begin(), pass.log_env_term.end());
    const double bits_needed = (max_log_env - needed_log_acc) / M_LN2;
    const mpfr_prec_t prec =
        static_cast<mpfr_prec_t>(std::min(1.5e5, std::max(96.0, 64.0 + bits_needed)));

    const auto& l = *pass.lambdas;
    const auto& bv = *pass.b;
    const int n = static_cast<int>(l.size());

    MpReal lc0(prec), tmp(prec), tmp2(prec);
    mpfr_set_zero(lc0.v, 1);
    for (int i = 0; i < n; ++i) {
        mpfr_set_d(tmp.v, bv[i], MPFR_RNDN);
        mpfr_sqr(tmp.v, tmp.v, MPFR_RNDN);
        mpfr_div_ui(tmp.v, tmp.v, 2, MPFR_RNDN);
        mpfr_sub(lc0.v, lc0.v, tmp.v, MPFR_RNDN);
        mpfr_set_d(tmp.v, 2.0 * l[i], MPFR_RNDN);
        mpfr_log(tmp.v, tmp.v, MPFR_RNDN);
        mpfr_div_ui(tmp.v, tmp.v, 2, MPFR_RNDN);
        mpfr_sub(lc0.v, lc0.v, tmp.v, MPFR_RNDN);
    }
    MpReal c0(prec);
    mpfr_exp(c0.v, lc0.v, MPFR_RNDN);

    // g_k = (y/rtil)^k * y^{n/2 (-1 for pdf)} / Gamma(n/2 + k + shift), iterated
    const double half_n = n / 2.0;
    MpReal g(prec);
    mpfr_set_d(tmp.v, pass.y, MPFR_RNDN);
    mpfr_set_d(tmp2.v, pass.density ? half_n - 1.0 : half_n, MPFR_RNDN);
    mpfr_pow(g.v, tmp.v, tmp2.v, MPFR_RNDN);
    mpfr_set_d(tmp.v, pass.density ? half_n : half_n + 1.0, MPFR_RNDN);
    mpfr_gamma(tmp.v, tmp.v, MPFR_RNDN);
    mpfr_div(g.v, g.v, tmp.v, MPFR_RNDN);

    std::vector<MpReal> ctil, dtil, ratio_pow;
    ctil.emplace_back(1.0, prec);
    dtil.emplace_back(0.0, prec);
    for (int i = 0; i < n; ++i) ratio_pow.emplace_back(1.0, prec);

    MpReal sum(prec), t(prec);
    mpfr_mul(t.v, c0.v, g.v, MPFR_RNDN);
    mpfr_set(sum.v, t.v, MPFR_RNDN);

    const double yr = pass.y / pass.rtil;
    for (int k = 1; k <= n_stop; ++k) {
        MpReal dk(0.0, prec);
        for (int i = 0; i < n; ++i) {
            mpfr_mul_d(ratio_pow[i].v, ratio_pow[i].v, pass.rtil / (2.0 * l[i]), MPFR_RNDN);
            mpfr_mul_d(tmp.v, ratio_pow[i].v, 1.0 - k * bv[i] * bv[i], MPFR_RNDN);
            mpfr_add(dk.v, dk.v, tmp.v, MPFR_RNDN);
        }
        mpfr_div_ui(dk.v, dk.v, 2, MPFR_RNDN);
        dtil.push_back(std::move(dk));

        MpReal ck(0.0, prec);
        for (int j = 0; j < k; ++j) {
            mpfr_mul(tmp.v, dtil[k - j].v, ctil[j].v, MPFR_RNDN);
            mpfr_add(ck.v, ck.v, tmp.v, MPFR_RNDN);
        }
        mpfr_div_ui(ck.v, ck.v, k, MPFR_RNDN);
        ctil.push_back(std::move(ck));

        // g_k = g_{k-1} * yr / (n/2 + k + shift - 1)
        mpfr_mul_d(g.v, g.v, yr, MPFR_RNDN);
        const double denom = pass.density ? half_n + k - 1.0 : half_n + k;
        mpfr_div_d(g.v, g.v, denom, MPFR_RNDN);

        mpfr_mul(t.v, ctil[k].v, g.v, MPFR_RNDN);
        mpfr_mul(t.v, t.v, c0.v, MPFR_RNDN);
        if (k % 2 == 1) mpfr_neg(t.v, t.v, MPFR_RNDN);
        mpfr_add(sum.v, sum.v, t.v, MPFR_RNDN);
    }
    return sum.to_double();
}

SeriesResult evaluate(const SpectralParams& params, double y, const SeriesOptions& opt,
                      bool density) {
    if (params.lambdas.size() == 0 || params.lambdas.size() != params.b.size())
        throw InvalidInput("spectral params empty or lambda/b size mismatch");
    if (params.lambdas.minCoeff() <= 0.0)
        throw InvalidInput("spectral params have a non-positive eigenvalue");
    if (!(y >= 0.0)) throw InvalidInput("series evaluation point must be >= 0");
    if (!(opt.delta > 0.0)) throw InvalidInput("delta must be > 0");
    if (opt.n_max < 1) throw InvalidInput("n_max must be >= 1");
    if (!(opt.rho_fraction > 0.0 && opt.rho_fraction < 1.0))
        throw InvalidInput("rho_fraction must lie in (0,1)");

    const double rho = opt.rho_fraction * params.lambdas.minCoeff();
    SeriesResult res;
    res.rho = rho;

    if (y == 0.0) {
        res.terms_used = 1;
        if (density) {
            const int n = params.n();
            double c0 = std::exp(-0.5 * params.b.squaredNorm());
            for (int i = 0; i < n; ++i) c0 /= std::sqrt(2.0 * params.lambdas[i]);
            res.value = (n == 2) ? c0 : 0.0;
        } else {
            res.value = 0.0;
        }
        return res;
    }

    SeriesPass pass;
    pass.lambdas = &params.lambdas;
    pass.b = &params.b;
    pass.y = y;
    pass.density = density;
    pass.init();

    StopInfo stop = run_to_stop(pass, opt.delta, opt.n_max, rho);
    if (stop.n < 0) {
        throw ConvergenceFailure("series did not reach the requested tolerance",
                                 stop.certified, opt.n_max);
    }

    double value = pass.kahan_partial(stop.n);

    // round-off guard: envelope of everything that was summed vs. target
    const double max_log_env =
        *std::max_element(pass.log_env_term.begin(), pass.log_env_term.begin() + stop.n + 1);
    const double roundoff_log =
        max_log_env + std::log(2.2e-16) + std::log(static_cast<double>(stop.n) + 10.0);
    const double needed_log = std::log(0.05 * opt.delta);
    if (roundoff_log > needed_log) {
        value = mpfr_partial_sum(pass, stop.n, needed_log);
    }

    res.terms_used = stop.n;
    res.error_bound = std::min(stop.certified, stop.practical);
    if (density) {
        res.value = std::max(0.0, value);
    } else {
        res.value = std::clamp(value, 0.0, 1.0);
    }
    return res;
}

} // namespace

SpectralParams spectral_decompose(const QuadFormSpec& spec) {
    const auto n = spec.mean.size();
    if (n == 0) throw InvalidInput("empty quadratic form");
    if (spec.a.rows() != n || spec.a.cols() != n || spec.covariance.rows() != n ||
        spec.covariance.cols() != n)
        throw InvalidInput("quadratic form dimensions disagree");
    check_spd(spec.a, "matrix_a");
    check_spd(spec.covariance, "covariance");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_cov(
        0.5 * (spec.covariance + spec.covariance.transpose()));
    const Eigen::VectorXd ev = es_cov.eigenvalues();
    const Eigen::MatrixXd v = es_cov.eigenvectors();
    const Eigen::MatrixXd sqrt_cov =
        v * ev.cwiseSqrt().asDiagonal() * v.transpose();
    const Eigen::MatrixXd inv_sqrt_cov =
        v * ev.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();

    const Eigen::MatrixXd form = sqrt_cov * 0.5 * (spec.a + spec.a.transpose()) * sqrt_cov;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_form(
        0.5 * (form + form.transpose()));

    SpectralParams out;
    out.lambdas = es_form.eigenvalues();
    const double hi = out.lambdas.maxCoeff();
    if (out.lambdas.minCoeff() <= 0.0 || out.lambdas.minCoeff() < kEigenFloorRatio * hi) {
        std::ostringstream os;
        os << "whitened form matrix lost positive definiteness (min eigenvalue "
           << out.lambdas.minCoeff() << ")";
        throw InvalidInput(os.str());
    }
    out.b = es_form.eigenvectors().transpose() * (inv_sqrt_cov * spec.mean);
    return out;
}

SeriesCoefficients coefficients(const SpectralParams& params, int n_terms) {
    if (n_terms < 0) throw InvalidInput("n_terms must be >= 0");
    if (params.lambdas.size() == 0 || params.lambdas.size() != params.b.size())
        throw InvalidInput("spectral params empty or lambda/b size mismatch");
    if (params.lambdas.minCoeff() <= 0.0)
        throw InvalidInput("spectral params have a non-positive eigenvalue");

    SeriesPass pass;
    pass.lambdas = &params.lambdas;
    pass.b = &params.b;
    pass.y = 1.0; // unused by the recursion itself
    pass.init();
    for (int k = 1; k <= n_terms; ++k) pass.extend(k);

    SeriesCoefficients out;
    out.c.resize(n_terms + 1);
    out.d.resize(n_terms + 1, 0.0);
    const double log_rtil = std::log(pass.rtil);
    for (int k = 0; k <= n_terms; ++k) {
        // c_k = ctil_k * exp(lc0 + scale_log) / rtil^k
        const double lg = pass.lc0 + pass.scale_log +
                          std::log(std::abs(pass.ctil[k])) - k * log_rtil;
        double v = std::exp(lg);
        if (std::isinf(v)) throw NumericRange("series coefficient overflow", k);
        if (pass.ctil[k] < 0.0) v = -v;
        out.c[k] = pass.ctil[k] == 0.0 ? 0.0 : v;
        if (k >= 1) {
            const double dk_log = std::log(std::abs(pass.dtil[k])) - k * log_rtil;
            double dv = std::exp(dk_log);
            if (std::isinf(dv)) throw NumericRange("series d coefficient overflow", k);
            if (pass.dtil[k] < 0.0) dv = -dv;
            out.d[k] = pass.dtil[k] == 0.0 ? 0.0 : dv;
        }
    }
    return out;
}

double m_rho(const SpectralParams& params, double rho) {
    if (params.lambdas.size() == 0)
        throw InvalidInput("spectral params empty");
    if (!(rho > 0.0) || rho >= params.lambdas.minCoeff())
        throw InvalidInput("rho must lie in (0, min lambda)");
    return std::exp(log_m_rho(params.lambdas, params.b, rho));
}

double truncation_bound(const SpectralParams& params, double y, int n_terms, double rho) {
    if (!(rho > 0.0) || rho >= params.lambdas.minCoeff())
        throw InvalidInput("rho must lie in (0, min lambda)");
    if (!(y >= 0.0)) throw InvalidInput("y must be >= 0");
    if (n_terms < 0) throw InvalidInput("n_terms must be >= 0");
    return std::exp(log_trunc_bound(params.lambdas, params.b, y, n_terms, rho, false));
}

double pdf_truncation_bound(const SpectralParams& params, double y, int n_terms,
                            double rho) {
    if (!(rho > 0.0) || rho >= params.lambdas.minCoeff())
        throw InvalidInput("rho must lie in (0, min lambda)");
    if (!(y > 0.0)) throw InvalidInput("y must be > 0");
    if (n_terms < 0) throw InvalidInput("n_terms must be >= 0");
    return std::exp(log_trunc_bound(params.lambdas, params.b, y, n_terms, rho, true));
}

SeriesResult cdf(const SpectralParams& params, double y, const SeriesOptions& opt) {
    return evaluate(params, y, opt, false);
}

SeriesResult pdf(const SpectralParams& params, double y, const SeriesOptions& opt) {
    return evaluate(params, y, opt, true);
}

} // namespace safenav::quadform
