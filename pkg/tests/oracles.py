"""Independent reference values, recomputed here with mpmath / QUADPACK.

The numbers frozen in the tests came from these functions; they share no code
with the package's own quadratures.  Run ``python tests/oracles.py`` to print them.
"""

import math

import mpmath as mp
from scipy.integrate import quad


def phi_direct(lam, alpha, dps=30):
    """Laplace exponent by tanh-sinh quadrature of the defining integral in t."""
    with mp.workdps(dps):
        lam = mp.mpf(lam)
        e1 = mp.e ** -1

        def g(t):
            return -mp.expm1(-lam * t) * mp.log(1 / t) ** alpha * t ** mp.mpf(-1.5)

        pts = [0] + [p for p in (mp.mpf(1) / lam / 100, mp.mpf(1) / lam, 100 / lam) if p < e1] + [e1]
        return float(mp.quad(g, pts))


def variation_direct(alpha):
    """int_0^{1/e} r nu(r) dr."""
    with mp.workdps(30):
        return float(mp.quad(lambda r: mp.log(1 / r) ** alpha * r ** mp.mpf(-0.5), [0, mp.e ** -1]))


def phi_log(log_lam, alpha):
    """log Phi(exp(L)) for any L, by QUADPACK in w = log(lambda t).

    Phi(lambda) = sqrt(lambda) int_{-inf}^{L-1} (1 - exp(-e^w)) (L - w)^alpha e^{-w/2} dw.
    """
    L = float(log_lam)
    top = L - 1.0

    def g(w):
        return -math.expm1(-math.exp(w)) * (L - w) ** alpha * math.exp(-0.5 * w)

    # below w = min(top, 0) - 200 the integrand is smaller by e^-100; above
    # w = 80 the factor e^{-w/2} makes the rest negligible
    lo = min(top, 0.0) - 200.0
    val = quad(g, lo, min(top, 0.0), limit=400, epsrel=1e-12)[0]
    if top > 0:
        val += quad(g, 0.0, min(top, 80.0), limit=400, epsrel=1e-12)[0]
    return 0.5 * L + math.log(val)


def variance_direct(alpha, t, y_split=8.0, q_end=40.0):
    """Var Z(t, x) = (2 pi)^-3 4 pi int_0^inf fhat(r) (1 - exp(-t r^2)) dr.

    QUADPACK in y = log r up to ``y_split``, then in q = log y; the
    integrand there falls like exp((1 - alpha) q) and the remainder past
    ``q_end`` is closed with that rate.
    """
    def log_fhat(y):
        lp = phi_log(2 * y - math.log(2), alpha)
        return -lp - math.log1p(math.exp(-lp)) if lp > 0 else -math.log1p(math.exp(lp))

    def g(y):
        r = math.exp(y)
        return math.exp(y + log_fhat(y)) * (-math.expm1(-t * r * r))

    body = quad(g, -30.0, y_split, limit=500, epsrel=1e-11)[0]

    def h(q):
        y = math.exp(q)
        return math.exp(q + y + log_fhat(y))

    tail = quad(h, math.log(y_split), q_end, limit=500, epsrel=1e-10)[0]
    tail += h(q_end) / (alpha - 1)
    return 4 * math.pi * (2 * math.pi) ** -3 * (body + tail)


if __name__ == "__main__":
    for a in (1.1, 1.5, 1.9):
        print("phi", a, [repr(phi_direct(x, a)) for x in (1e-3, 1.0, 100.0, 1e9)])
        print("variation", a, repr(variation_direct(a)))
    for t in (0.1, 1.0):
        print("variance 1.5", t, repr(variance_direct(1.5, t)))
