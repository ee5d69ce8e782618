#pragma once

#include <mpfr.h>

#include <utility>
#include <vector>

namespace safenav::detail {

/// Minimal RAII holder for one mpfr value. Non-copyable; the series code
/// only ever needs in-place arithmetic and explicit moves.
class MpReal {
public:
    explicit MpReal(mpfr_prec_t prec) { mpfr_init2(v, prec); mpfr_set_zero(v, 1); }
    MpReal(double x, mpfr_prec_t prec) { mpfr_init2(v, prec); mpfr_set_d(v, x, MPFR_RNDN); }
    MpReal(MpReal&& o) noexcept {
        mpfr_init2(v, mpfr_get_prec(o.v));
        mpfr_swap(v, o.v);
    }
    MpReal& operator=(MpReal&& o) noexcept {
        if (this != &o) mpfr_swap(v, o.v);
        return *this;
    }
    MpReal(const MpReal&) = delete;
    MpReal& operator=(const MpReal&) = delete;
    ~MpReal() { mpfr_clear(v); }

    double to_double() const { return mpfr_get_d(v, MPFR_RNDN); }

    mpfr_t v;
};

} // namespace safenav::detail
