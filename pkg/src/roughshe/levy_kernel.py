"""Correlation kernel built from a logarithmically perturbed stable subordinator.

The subordinator has Levy density ``nu(r) = log(1/r)**alpha * r**-1.5`` on
``(0, 1/e)``.  Its Laplace exponent ``Phi`` and 1-potential measure ``U`` give
the spatial correlation function on R^3

    f(x) = int_0^inf p_s(x) U(ds),      fhat(z) = 1 / (1 + Phi(|z|^2 / 2)),

with ``p_s`` the heat kernel of Brownian motion at time ``s``.  The kernel is
only barely locally integrable: ``f(x) ~ |x|^-2 log(1/|x|)^-alpha`` near zero.

Evaluators are deterministic functions of the parameters; the Monte-Carlo
subordinator is keyed by a seed through :mod:`roughshe.rng`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator
from scipy.special import gamma as gamma_fn
from scipy.special import gammaincc

from . import rng as rng_mod
from .quadrature import QuadratureError, adaptive_gk, panel_nodes

E_INV = math.exp(-1.0)
_UMAX = math.exp(-0.5)      # sqrt of the support edge
_LN2 = math.log(2.0)
_FOURIER_3D = (2.0 * math.pi) ** -3


@dataclass(frozen=True)
class AlphaParam:
    """Log-correction exponent.

    ``alpha > 1`` is required for the kernel to exist as a Dalang-admissible
    correlation.  ``probe=True`` admits any positive value so that the
    admissibility checker can be pointed at a divergent case.
    """

    alpha: float
    probe: bool = False

    def __post_init__(self):
        a = float(self.alpha)
        object.__setattr__(self, "alpha", a)
        if not math.isfinite(a) or a <= 0:
            raise ValueError(f"alpha must be a positive finite number, got {a}")
        if not self.probe and a <= 1:
            raise ValueError(f"alpha must exceed 1, got {a}")

    def require_rough_range(self) -> None:
        """Field and solver code needs ``1 < alpha < 2``."""
        if not 1.0 < self.alpha < 2.0:
            raise ValueError(
                f"alpha must lie in (1, 2) for field and solver use, got {self.alpha}")


def as_alpha(alpha, probe: bool = False) -> AlphaParam:
    if isinstance(alpha, AlphaParam):
        return alpha
    return AlphaParam(float(alpha), probe=probe)


# ---------------------------------------------------------------------------
# Levy density


@dataclass(frozen=True)
class LevyDensity:
    alpha: AlphaParam
    support: tuple = (0.0, E_INV)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        inside = (r > 0) & (r < E_INV)
        ri = r[inside]
        out[inside] = np.log(1.0 / ri) ** self.alpha.alpha * ri ** -1.5
        return out

    def power_moment(self, p, lo, hi):
        """``int_lo^hi r**p nu(dr)`` for arrays of class edges.

        Computed in ``y = log(1/r)``, where the integrand is
        ``y**alpha * exp((1/2 - p) * y)``.
        """
        a = self.alpha.alpha
        if np.any(np.asarray(lo) <= 0):
            raise ValueError("power_moment needs a positive lower edge")
        lo = np.clip(np.asarray(lo, dtype=float), 0.0, E_INV)
        hi = np.clip(np.asarray(hi, dtype=float), 0.0, E_INV)
        y0 = np.log(1.0 / hi)
        y1 = np.log(1.0 / lo)
        n = max(1, int(np.ceil(np.max(y1 - y0) / 0.25)))
        edges = y0[..., None] + (y1 - y0)[..., None] * np.linspace(0.0, 1.0, n + 1)
        y, w = panel_nodes(edges, 12)
        return np.sum(y ** a * np.exp((0.5 - p) * y) * w, axis=-1)

    def small_jump_drift(self, delta: float) -> float:
        """``int_0^delta r nu(dr)``, in closed form via the incomplete gamma."""
        a = self.alpha.alpha
        y0 = math.log(1.0 / delta)
        return 2.0 ** (a + 1) * gamma_fn(a + 1) * gammaincc(a + 1, 0.5 * y0)

    def small_jump_second_moment(self, delta: float) -> float:
        a = self.alpha.alpha
        y0 = math.log(1.0 / delta)
        return (2.0 / 3.0) ** (a + 1) * gamma_fn(a + 1) * gammaincc(a + 1, 1.5 * y0)

    def variation_integral(self) -> float:
        """``int (1 ^ r) nu(dr)``; finite, so the subordinator has finite variation."""
        return self.small_jump_drift(E_INV)


# ---------------------------------------------------------------------------
# Laplace exponent


class LaplaceExponent:
    """``Phi(lambda) = int_0^{1/e} (1 - exp(-lambda t)) nu(t) dt``.

    Direct evaluation substitutes ``t = u**2`` so that the integrand is bounded
    up to a logarithmic factor at the origin, then bisects adaptively.
    """

    # beyond this the u-substitution loses its lowest breakpoints to underflow
    _ADAPTIVE_MAX = 1e200

    def __init__(self, alpha, rtol: float = 1e-8, max_panels: int = 400):
        self.alpha = as_alpha(alpha)
        self.rtol = float(rtol)
        self.max_panels = int(max_panels)

    def __call__(self, lam, rtol=None):
        res = self.evaluate(lam, rtol)
        if not np.all(res.converged):
            bad = ~res.converged
            raise QuadratureError(
                f"Phi quadrature missed tolerance at {int(bad.sum())} point(s); "
                f"worst relative error estimate "
                f"{np.max(res.error[bad] / np.abs(res.value[bad])):.3e}",
                res.value, res.error)
        return res.value

    def evaluate(self, lam, rtol=None):
        """Like ``__call__`` but returns the raw :class:`PhiResult`."""
        rtol = self.rtol if rtol is None else float(rtol)
        lam = np.asarray(lam, dtype=float)
        if np.any(lam < 0) or np.any(~np.isfinite(lam)):
            raise ValueError("Phi needs finite lambda >= 0")
        shape = lam.shape
        flat = lam.ravel()
        value = np.zeros(flat.size)
        error = np.zeros(flat.size)
        converged = np.ones(flat.size, dtype=bool)

        huge = flat > self._ADAPTIVE_MAX
        if huge.any():
            value[huge] = np.sqrt(flat[huge]) * self.scaled(np.log(flat[huge]))
        todo = np.flatnonzero((flat > 0) & ~huge)
        if todo.size:
            a = self.alpha.alpha
            lam_t = flat[todo]

            def integrand(u, owner):
                lo = lam_t[owner][:, None]
                return 2.0 * (-np.expm1(-lo * u * u)) * (2.0 * np.log(1.0 / u)) ** a / (u * u)

            res = adaptive_gk(integrand, [_phi_edges(x) for x in lam_t],
                              rtol=rtol, max_panels=self.max_panels)
            value[todo] = res.value
            error[todo] = res.error
            converged[todo] = res.converged
        return PhiResult(value.reshape(shape), error.reshape(shape),
                         converged.reshape(shape))

    def scaled(self, log_lam):
        """``J(L) = exp(-L/2) Phi(exp(L))`` for ``L > -99``.

        Uses ``t = exp(w)/lambda``, under which

            J(L) = int_{-inf}^{L-1} (1 - exp(-e^w)) (L - w)**alpha e^{-w/2} dw,

        integrated on fixed Gauss-Legendre panels.  Valid for any size of
        ``lambda`` and used where ``lambda`` itself would overflow.
        """
        L = np.asarray(log_lam, dtype=float)
        if np.any(L <= -99):
            raise ValueError("scaled Laplace exponent needs log(lambda) > -99")
        a = self.alpha.alpha
        shape = L.shape
        Lf = L.ravel()
        upper = np.minimum(Lf - 1.0, 120.0)
        lower = -100.0
        edges = lower + (upper - lower)[:, None] * np.linspace(0.0, 1.0, 161)
        w, wt = panel_nodes(edges, 16)
        g = -np.expm1(-np.exp(w)) * (Lf[:, None] - w) ** a * np.exp(-0.5 * w)
        return np.sum(g * wt, axis=-1).reshape(shape)


@dataclass
class PhiResult:
    value: np.ndarray
    error: np.ndarray
    converged: np.ndarray


def _phi_edges(lam: float):
    u0 = lam ** -0.5
    if u0 >= _UMAX:
        return np.array([0.0, 0.5 * _UMAX, _UMAX])
    pts = [0.0, u0 / 16, u0 / 4, u0]
    x = 8 * u0
    while x < _UMAX:
        pts.append(x)
        x *= 8
    pts.append(_UMAX)
    return np.array(pts)


def phi_asymptote(lam, alpha):
    """Leading-order form ``sqrt(4 pi lambda) log(lambda)**alpha``."""
    lam = np.asarray(lam, dtype=float)
    return np.sqrt(4 * math.pi * lam) * np.log(lam) ** float(alpha)


# ---------------------------------------------------------------------------
# Gaver-Stehfest inversion


@lru_cache(maxsize=32)
def stehfest_weights(order: int):
    """Exact Stehfest weights ``V_1..V_N`` as Fractions (``order`` even)."""
    if order < 2 or order % 2:
        raise ValueError("Stehfest order must be an even integer >= 2")
    h = order // 2
    out = []
    for k in range(1, order + 1):
        s = Fraction(0)
        for j in range((k + 1) // 2, min(k, h) + 1):
            s += Fraction(j ** h * math.factorial(2 * j),
                          math.factorial(h - j) * math.factorial(j) * math.factorial(j - 1)
                          * math.factorial(k - j) * math.factorial(2 * j - k))
        out.append((-1) ** (k + h) * s)
    return tuple(out)


# ---------------------------------------------------------------------------
# Subordinator sampling


class SubordinatorSampler:
    """Draws ``T_S``: the subordinator at an independent Exp(1) time.

    Jumps are split into dyadic size classes ``[a/2, a)`` from ``1/e`` down to
    the cutoff ``delta``; jumps below ``delta`` are replaced by their mean,
    a drift ``S * int_0^delta r nu(dr)``.  Given ``S`` the count in each class
    is Poisson.  Classes with at most ``exact_budget`` jumps in a path draw
    every jump by rejection from an ``r**-1.5`` proposal; busier classes use
    the Gaussian limit of the class sum.
    """

    chunk = 8192

    def __init__(self, alpha, delta: float = 1e-8, exact_budget: int = 128):
        self.alpha = as_alpha(alpha)
        self.nu = LevyDensity(self.alpha)
        if not 0 < delta < E_INV:
            raise ValueError("jump cutoff must lie in (0, 1/e)")
        self.delta = float(delta)
        self.exact_budget = int(exact_budget)
        edges = [E_INV]
        while edges[-1] / 2 > self.delta:
            edges.append(edges[-1] / 2)
        edges.append(self.delta)
        hi = np.array(edges[:-1])
        lo = np.array(edges[1:])
        keep = lo < hi
        self.lo, self.hi = lo[keep], hi[keep]
        m0 = self.nu.power_moment(0, self.lo, self.hi)
        m1 = self.nu.power_moment(1, self.lo, self.hi)
        m2 = self.nu.power_moment(2, self.lo, self.hi)
        self.rate = m0
        self.mean_jump = m1 / m0
        self.sd_jump = np.sqrt(np.maximum(m2 / m0 - self.mean_jump ** 2, 0.0))
        self.drift = self.nu.small_jump_drift(self.delta)

    def _class_jumps(self, j, n, gen):
        lo, hi = self.lo[j], self.hi[j]
        a = self.alpha.alpha
        top = math.log(1.0 / lo)
        out = np.empty(n)
        filled = 0
        while filled < n:
            m = int(1.3 * (n - filled)) + 8
            u = gen.random(m)
            # inverse transform for density proportional to r**-1.5 on [lo, hi)
            r = (lo ** -0.5 - u * (lo ** -0.5 - hi ** -0.5)) ** -2.0
            acc = gen.random(m) < (np.log(1.0 / r) / top) ** a
            r = r[acc][: n - filled]
            out[filled:filled + r.size] = r
            filled += r.size
        return out

    def _sample_chunk(self, n, gen):
        S = gen.standard_exponential(n)
        total = S * self.drift
        for j in range(self.lo.size):
            counts = gen.poisson(S * self.rate[j])
            big = counts > self.exact_budget
            if big.any():
                nb = counts[big]
                total[big] += nb * self.mean_jump[j] + np.sqrt(nb) * self.sd_jump[j] * \
                    gen.standard_normal(nb.size)
            small = np.flatnonzero(~big & (counts > 0))
            if small.size:
                ns = counts[small]
                jumps = self._class_jumps(j, int(ns.sum()), gen)
                owner = np.repeat(np.arange(small.size), ns)
                total[small] += np.bincount(owner, weights=jumps, minlength=small.size)
        return total

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        """``n`` independent draws of ``T_S``; chunked draws keyed by seed."""
        n = int(n)
        out = np.empty(n)
        for c, start in enumerate(range(0, n, self.chunk)):
            stop = min(n, start + self.chunk)
            gen = rng_mod.stream(seed, "subordinator", self.alpha.alpha, self.delta, c)
            out[start:stop] = self._sample_chunk(stop - start, gen)
        return out


def sample_subordinator_at_exponential_time(alpha, seed: int = 0, delta: float = 1e-8) -> float:
    """A single draw of ``T_S``."""
    return float(SubordinatorSampler(alpha, delta).sample(1, seed)[0])


# ---------------------------------------------------------------------------
# Potential measure


@dataclass
class CdfEstimate:
    """``U[0, eps)`` at a set of points with per-point diagnostics."""

    eps: np.ndarray
    value: np.ndarray
    stderr: np.ndarray
    backend: np.ndarray        # object array of backend names
    flagged: np.ndarray        # inversion judged unstable at this point


@dataclass
class PotentialMeasure:
    """``U`` on a logarithmic grid of ``(0, s_max]``.

    Mass above ``s_max`` is carried as ``mass_tail`` (an atom at ``s_max`` in
    integrals); any mass below the first breakpoint is likewise carried at
    the first breakpoint.
    """

    grid: np.ndarray
    cdf_values: np.ndarray
    backend: str
    mass_tail: float
    stderr: np.ndarray = field(default=None)

    @cached_property
    def _interp(self):
        v = np.log(self.grid)
        if np.all(self.cdf_values > 0):
            spl = CubicSpline(v, np.log(self.cdf_values))
            return lambda x: np.exp(spl(x))
        return PchipInterpolator(v, self.cdf_values)

    def cdf(self, s):
        """Interpolated ``U[0, s]``; 0 below the grid, 1 - tail at the top."""
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        inside = (s >= self.grid[0]) & (s <= self.grid[-1])
        out[inside] = self._interp(np.log(s[inside]))
        out[s > self.grid[-1]] = 1.0
        return out

    def interval_mass(self, a, b):
        """``U[a, b)`` from the interpolated CDF."""
        return self.cdf(b) - self.cdf(np.maximum(a, 0.0))

    def invariant_report(self, tol: float = 1e-6) -> dict:
        steps = np.diff(self.cdf_values)
        return {
            "nondecreasing": bool(np.all(steps >= -tol)),
            "min_step": float(steps.min()),
            "total_mass": float(self.cdf_values[-1] + self.mass_tail),
            "mass_at_most_one": bool(self.cdf_values[-1] + self.mass_tail <= 1 + tol),
        }

    def unimodality_excess(self, centres, radii, constant: float = 4.0):
        """``max(U[x-r, x+r) - constant * U[0, r))`` over the sampled pairs."""
        x = np.asarray(centres, dtype=float)
        r = np.asarray(radii, dtype=float)
        lhs = self.interval_mass(x - r, x + r)
        rhs = constant * self.cdf(r)
        return lhs - rhs


# ---------------------------------------------------------------------------
# Settings and the model


@dataclass(frozen=True)
class KernelSettings:
    phi_rtol: float = 1e-8
    phi_max_panels: int = 400
    inversion_order: int = 16
    inversion_check_order: int = 14
    inversion_dps: int | None = None   # mpmath precision; None means float64
    inversion_rtol: float = 1e-3       # accepted |F_N - F_check| / F_N
    inversion_phi_rtol: float = 1e-13
    grid_min: float = 1e-12
    grid_max: float = 1e3
    grid_size: int = 512
    jump_cutoff: float = 1e-8
    exact_jump_budget: int = 128
    mc_paths: int = 100_000
    seed: int = 0
    band_factor: float = 4.0


class CorrelationModel:
    """Everything derived from one ``alpha``: Phi, U, f and fhat.

    Expensive pieces (the inverted U grid, the spline table of ``log Phi``,
    the radial ``phi`` table) are built on first use and cached.
    """

    def __init__(self, alpha, settings: KernelSettings | None = None, probe: bool = False):
        self.alpha = as_alpha(alpha, probe=probe)
        self.settings = settings or KernelSettings()
        s = self.settings
        self.nu = LevyDensity(self.alpha)
        self.phi = LaplaceExponent(self.alpha, s.phi_rtol, s.phi_max_panels)
        self._mc_draws = None

    @property
    def a(self) -> float:
        return self.alpha.alpha

    # -- potential measure ------------------------------------------------

    def _phi_precise(self, lam):
        return self.phi.evaluate(lam, rtol=self.settings.inversion_phi_rtol).value

    def _invert(self, eps, order):
        """Stehfest estimate of ``U[0, eps)`` at one order."""
        eps = np.asarray(eps, dtype=float)
        k = np.arange(1, order + 1)
        if self.settings.inversion_dps is None:
            V = np.array([float(v) for v in stehfest_weights(order)])
            lam = k[None, :] * _LN2 / eps[:, None]
            ph = self._phi_precise(lam)
            return _LN2 / eps * np.sum(V / (lam * (1.0 + ph)), axis=1)
        return self._invert_mp(eps, order)

    def _invert_mp(self, eps, order):
        import mpmath as mp

        V = stehfest_weights(order)
        a = self.a
        out = np.empty(eps.size)
        with mp.workdps(self.settings.inversion_dps):
            ln2 = mp.log(2)
            for i, e in enumerate(eps):
                e = mp.mpf(float(e))
                acc = mp.mpf(0)
                for kk, v in enumerate(V, start=1):
                    lam = kk * ln2 / e
                    acc += mp.mpf(v.numerator) / v.denominator / (lam * (1 + _phi_mp(lam, a)))
                out[i] = float(ln2 / e * acc)
        return out

    def potential_cdf(self, eps, backend: str = "laplace-inversion") -> CdfEstimate:
        """``U[0, eps)`` by Laplace inversion or by Monte-Carlo.

        The inversion runs at ``inversion_order`` and ``inversion_check_order``;
        their difference is the error estimate.  Points where the sequence has
        not settled (or leaves [0, 1]) are flagged and answered by Monte-Carlo.
        """
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        if np.any(eps <= 0):
            raise ValueError("potential_cdf needs eps > 0")
        names = np.empty(eps.size, dtype=object)
        if backend == "monte-carlo":
            val, se = self._mc_cdf(eps)
            names[:] = "monte-carlo"
            return CdfEstimate(eps, val, se, names, np.zeros(eps.size, dtype=bool))
        if backend != "laplace-inversion":
            raise ValueError(f"unknown backend {backend!r}")
        s = self.settings
        hi = self._invert(eps, s.inversion_order)
        lo = self._invert(eps, s.inversion_check_order)
        err = np.abs(hi - lo)
        slack = np.maximum(5e-5, 3 * err)
        bad = (err > s.inversion_rtol * np.abs(hi) + 1e-14) | (hi < -slack) | (hi > 1 + slack) \
            | ~np.isfinite(hi)
        val = np.clip(hi, 0.0, 1.0)
        names[:] = "laplace-inversion"
        if bad.any():
            mv, mse = self._mc_cdf(eps[bad])
            val[bad] = mv
            err[bad] = mse
            names[bad] = "monte-carlo"
        return CdfEstimate(eps, val, err, names, bad)

    def mc_draws(self):
        if self._mc_draws is None:
            s = self.settings
            sampler = SubordinatorSampler(self.alpha, s.jump_cutoff, s.exact_jump_budget)
            self._mc_draws = np.sort(sampler.sample(s.mc_paths, s.seed))
        return self._mc_draws

    def _mc_cdf(self, eps):
        draws = self.mc_draws()
        n = draws.size
        p = np.searchsorted(draws, eps, side="left") / n
        # Laplace-smoothed proportion keeps the error bar nonzero at p = 0
        ps = (p * n + 1) / (n + 2)
        return p, np.sqrt(ps * (1 - ps) / n)

    @cached_property
    def potential(self) -> PotentialMeasure:
        """Default U grid, by Laplace inversion."""
        return self.build_potential("laplace-inversion")

    def build_potential(self, backend: str = "laplace-inversion") -> PotentialMeasure:
        s = self.settings
        grid = np.geomspace(s.grid_min, s.grid_max, s.grid_size)
        est = self.potential_cdf(grid, backend)
        # inversion noise near F = 1 (order 1e-5) can make the raw values
        # dip; the running maximum moves no value by more than its error bar
        cdf = np.maximum.accumulate(np.minimum(est.value, 1.0))
        tail = max(0.0, 1.0 - cdf[-1])
        name = backend if not est.flagged.any() else backend + "+monte-carlo"
        return PotentialMeasure(grid, cdf, name, tail, est.stderr)

    # -- spectral side ----------------------------------------------------

    def fhat_eval(self, z):
        """``1 / (1 + Phi(|z|^2 / 2))`` for points ``z`` (last axis of length 3)."""
        z = np.asarray(z, dtype=float)
        r2 = np.sum(z * z, axis=-1)
        return 1.0 / (1.0 + self.phi(0.5 * r2))

    def fhat_radial(self, r):
        """Radial profile of fhat via the direct Phi quadrature."""
        r = np.asarray(r, dtype=float)
        return 1.0 / (1.0 + self.phi(0.5 * r * r))

    @cached_property
    def _log_phi_table(self):
        # smooth pieces: log J(L) on a fine uniform L grid, and
        # log J(L) - alpha log L on a log-L grid for the far range
        a = self.a
        L1 = np.linspace(-40.0, 32.0, 1441)
        near = CubicSpline(L1, np.log(self.phi.scaled(L1)))
        q = np.linspace(math.log(30.0), math.log(1e7), 481)
        Lq = np.exp(q)
        far = CubicSpline(q, np.log(self.phi.scaled(Lq)) - a * q)
        m1 = self.nu.variation_integral()
        return near, far, math.log(m1)

    def log_phi(self, log_lam):
        """Tabulated ``log Phi(exp(L))``: fast, for radial quadratures.

        Relative accuracy is about 1e-9 against the direct quadrature.
        Below ``L = -40`` the linear term ``Phi ~ lambda int t nu(dt)`` is used.
        """
        near, far, logm1 = self._log_phi_table
        L = np.asarray(log_lam, dtype=float)
        out = np.empty_like(L)
        lo = L < -40.0
        mid = (L >= -40.0) & (L <= 31.0)
        hi = L > 31.0
        out[lo] = logm1 + L[lo]
        out[mid] = 0.5 * L[mid] + near(L[mid])
        if hi.any():
            qh = np.log(L[hi])
            qc = np.minimum(qh, far.x[-1])
            out[hi] = 0.5 * L[hi] + far(qc) + self.a * qh
        return out

    def log_fhat_y(self, y):
        """``log fhat`` at radius ``exp(y)``."""
        y = np.asarray(y, dtype=float)
        return -np.logaddexp(0.0, self.log_phi(2.0 * y - _LN2))

    def fhat_profile(self, r):
        """Tabulated radial profile of fhat (``0 <= r``)."""
        r = np.asarray(r, dtype=float)
        out = np.ones_like(r)
        pos = r > 0
        out[pos] = np.exp(self.log_fhat_y(np.log(r[pos])))
        return out

    def _heat_scaled(self, log_t):
        """``t * (p_{2t} * f)(0)`` for an array of ``log t`` (any size of t)."""
        lt = np.asarray(log_t, dtype=float).ravel()
        yc = -0.5 * lt
        edges = yc[:, None] + np.linspace(-30.0, 3.0, 133)
        y, w = panel_nodes(edges, 8)
        expo = 3.0 * y + lt[:, None] - np.exp(2.0 * y + lt[:, None]) + self.log_fhat_y(y)
        return 4.0 * math.pi * _FOURIER_3D * np.sum(np.exp(expo) * w, axis=1)

    def heat_convolution_at_zero(self, t):
        """``(p_{2t} * f)(0) = (2 pi)^-3 int exp(-t |z|^2) fhat(z) dz``."""
        t = np.asarray(t, dtype=float)
        if np.any(t <= 0):
            raise ValueError("heat convolution needs t > 0")
        return (self._heat_scaled(np.log(t)) / t.ravel()).reshape(t.shape)

    def heat_convolution_physical(self, t):
        """Same quantity as ``int p_{2t}(x) f(x) dx`` from the U-built kernel."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty(t.size)
        r0 = self.trusted_radius
        for i, ti in enumerate(t):
            sd = math.sqrt(2 * ti)
            y = np.linspace(math.log(max(r0, 1e-6 * sd)), math.log(12 * sd), 241)
            yn, w = panel_nodes(y, 8)
            r = np.exp(yn)
            p = (4 * math.pi * ti) ** -1.5 * np.exp(-r * r / (4 * ti))
            out[i] = 4 * math.pi * np.sum(r ** 3 * p * self.phi_profile(r) * w)
        return out

    def _log_far_integral(self, h, y0, y_far=1e6, n_panels=120):
        """``int_{y0}^inf h(y) dy`` for ``h ~ C y**-alpha``; ``q = log y``.

        The remainder beyond ``y_far`` is closed with the power-law tail
        ``h(y_far) * y_far / (alpha - 1)``.
        """
        q, w = panel_nodes(np.linspace(math.log(y0), math.log(y_far), n_panels + 1), 8)
        y = np.exp(q)
        body = np.sum(h(y) * y * w)
        hf = float(h(np.array([y_far]))[0])
        return body + hf * y_far / (self.a - 1.0)

    def resolvent_at_zero(self, lam):
        """``(R_lambda f)(0) = int_0^inf (p_s * f)(0) exp(-lambda s) ds`` (nested)."""
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        if np.any(lam < math.e * (1 - 1e-12)):
            raise ValueError("resolvent_at_zero needs lambda >= e")
        out = np.empty(lam.size)
        for i, lm in enumerate(lam):
            # integrate G(w) exp(-lambda e^w) dw with G(w) = s (p_s*f)(0), s = e^w
            def G(w):
                return 2.0 * self._heat_scaled(w - _LN2)

            w_hi = math.log(60.0 / lm)
            w_mid = w_hi - 20.0
            wn, ww = panel_nodes(np.linspace(w_mid, w_hi, 81), 8)
            near = np.sum(G(wn) * np.exp(-lm * np.exp(wn)) * ww)
            far = self._log_far_integral(
                lambda y: G(-y) * np.exp(-lm * np.exp(-y)), -w_mid, n_panels=60)
            out[i] = near + far
        return out

    def resolvent_fourier(self, lam):
        """``(2 pi)^-3 int fhat(z) / (lambda + |z|^2 / 2) dz`` (oracle form)."""
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        out = np.empty(lam.size)
        c = 4 * math.pi * _FOURIER_3D
        for i, lm in enumerate(lam):
            def h(y):
                return c * np.exp(self.log_fhat_y(y) + y) / (lm * np.exp(-2 * y) + 0.5)

            y1 = 0.5 * math.log(2 * lm) + 10.0
            yn, w = panel_nodes(np.linspace(-30.0, y1, int((y1 + 30) / 0.25) + 1), 8)
            out[i] = np.sum(h(yn) * w) + self._log_far_integral(h, y1)
        return out

    def dalang_integral(self, cutoff):
        """``int_{|z| <= R} fhat(z) / (1 + |z|^2) dz`` by radial quadrature."""
        R = np.atleast_1d(np.asarray(cutoff, dtype=float))
        out = np.empty(R.size)
        for i, Ri in enumerate(R):
            if Ri <= 0:
                raise ValueError("cutoff must be positive")
            y1 = math.log(Ri)
            y0 = min(-30.0, y1 - 1.0)
            yn, w = panel_nodes(np.linspace(y0, y1, int((y1 - y0) / 0.25) + 2), 8)
            g = np.exp(self.log_fhat_y(yn) + yn) / (1.0 + np.exp(-2 * yn))
            out[i] = 4 * math.pi * np.sum(g * w)
        return out

    def dalang_check(self, levels: int = 6):
        """Cauchy test along cutoffs ``10**(2**k)``: squaring the cutoff each step.

        Under ``fhat(r) ~ 1 / (r log(r)**alpha)`` the increment from ``R`` to
        ``R**2`` scales like ``log(R)**(1 - alpha)``: shrinking exactly when
        ``alpha > 1``.  The kernel is declared admissible when the last three
        increments are strictly decreasing.
        """
        cut = 10.0 ** (2.0 ** np.arange(levels + 1))
        vals = self.dalang_integral(cut)
        inc = np.diff(vals)
        ratios = inc[1:] / inc[:-1]
        return {
            "cutoffs": cut,
            "values": vals,
            "increments": inc,
            "ratios": ratios,
            "admissible": bool(np.all(ratios[-3:] < 1.0)),
        }

    # -- physical side ----------------------------------------------------

    @property
    def trusted_radius(self) -> float:
        """Smallest radius where the U grid resolves ``f``."""
        return math.sqrt(60.0 * self.settings.grid_min)

    def phi_profile(self, r, potential: PotentialMeasure | None = None):
        """Radial kernel ``phi(r) = f(x)``, ``|x| = r``, from the discretised U.

        Integration by parts against ``U[0, s]``:

            f(r) = int F(s) (-d/ds p_s(r)) ds + p_{s_max}(r),

        with the mass beyond the grid carried at ``s_max``.
        """
        pm = potential or self.potential
        r = np.asarray(r, dtype=float)
        if np.any(r < self.trusted_radius * (1 - 1e-12)):
            raise ValueError(
                f"radius below the U-grid resolution floor; smallest trusted radius "
                f"is {self.trusted_radius:.3e}")
        shape = r.shape
        rf = r.ravel()
        v0, v1 = math.log(pm.grid[0]), math.log(pm.grid[-1])
        v, w = panel_nodes(np.linspace(v0, v1, int((v1 - v0) / 0.25) + 2), 8)
        s = np.exp(v)
        F = pm.cdf(s)
        out = np.empty(rf.size)
        for start in range(0, rf.size, 256):
            rr = rf[start:start + 256, None] ** 2
            p = (2 * math.pi * s) ** -1.5 * np.exp(-rr / (2 * s))
            body = np.sum(F * p * (1.5 - rr / (2 * s)) * w, axis=1)
            smax = pm.grid[-1]
            top = (2 * math.pi * smax) ** -1.5 * np.exp(-rr[:, 0] / (2 * smax))
            out[start:start + 256] = body + top
        return out.reshape(shape)

    def f_eval(self, x):
        """``f(x) = int p_s(x) U(ds)`` for points ``x`` (last axis of length 3)."""
        x = np.asarray(x, dtype=float)
        r = np.sqrt(np.sum(x * x, axis=-1))
        if np.any(r == 0):
            raise ValueError("f is singular at the origin")
        return self.phi_profile(r)

    @cached_property
    def profile_table(self):
        """Cubic spline of ``log phi`` against ``log r`` on (trusted radius, 40]."""
        q = np.linspace(math.log(self.trusted_radius), math.log(40.0), 700)
        return CubicSpline(q, np.log(self.phi_profile(np.exp(q))))

    def phi_fast(self, r, cap_radius: float | None = None):
        """Tabulated ``phi``; radii below ``cap_radius`` are lifted to it.

        Returns ``(values, capped_mask)``.
        """
        cap = self.trusted_radius if cap_radius is None else max(cap_radius, self.trusted_radius)
        r = np.asarray(r, dtype=float)
        capped = r < cap
        q = np.log(np.maximum(r, cap))
        spl = self.profile_table
        return np.exp(spl(np.minimum(q, spl.x[-1]))) * (q <= spl.x[-1]), capped

    def mc_mean_heat_kernel(self, r, n: int | None = None, seed: int | None = None):
        """Monte-Carlo ``E p_{T_S}(r)``: an independent estimate of ``phi(r)``."""
        s = self.settings
        sampler = SubordinatorSampler(self.alpha, s.jump_cutoff, s.exact_jump_budget)
        T = sampler.sample(n or s.mc_paths, s.seed if seed is None else seed)
        r = np.atleast_1d(np.asarray(r, dtype=float))
        p = (2 * math.pi * T[None, :]) ** -1.5 * np.exp(-r[:, None] ** 2 / (2 * T[None, :]))
        return p.mean(axis=1), p.std(axis=1, ddof=1) / math.sqrt(T.size)


def _phi_mp(lam, alpha):
    """Extended-precision ``Phi`` through the scaled form (mpmath)."""
    import mpmath as mp

    L = mp.log(lam)
    top = L - 1

    def g(w):
        return -mp.expm1(-mp.exp(w)) * (L - w) ** alpha * mp.exp(-w / 2)

    pts = [-mp.inf] + [mp.mpf(p) for p in (-60, -40, -20, -10, 0, 10, 20, 40) if p < top] + [top]
    return mp.sqrt(lam) * mp.quad(g, pts)
