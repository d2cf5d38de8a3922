"""The linearised field Z(t, .) and its geometry.

``Z(t, x) - 1`` is a centred stationary Gaussian field with spectral density

    g_t(z) = (2 pi)^-3 fhat(z) (1 - exp(-t |z|^2)) / |z|^2.

On the periodic box of side ``L`` with ``N`` points per axis the field is
synthesised exactly for the lattice-frequency restriction of ``g_t``: mode
``m`` (wavenumber ``k = 2 pi m / L``) carries variance ``g_t(k) (2 pi / L)^3``.
That discrete target, not the wrapped kernel, is what the oracles compare to.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from . import rng as rng_mod
from .levy_kernel import _FOURIER_3D, CorrelationModel
from .quadrature import panel_nodes

_SLICES = {"3d": 3, "2d": 2, "1d": 1}


class AliasingWarning(UserWarning):
    """Much of the spectral mass lies beyond the lattice Nyquist shell."""


@dataclass(frozen=True)
class LatticeSpec:
    N: int
    L: float = 1.0
    dim_slices: str = "3d"

    def __post_init__(self):
        N = int(self.N)
        if N < 2 or N & (N - 1):
            raise ValueError(f"N must be a power of two >= 2, got {self.N}")
        if not self.L > 0:
            raise ValueError(f"box side L must be positive, got {self.L}")
        if self.dim_slices not in _SLICES:
            raise ValueError(f"dim_slices must be one of {sorted(_SLICES)}")
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "L", float(self.L))

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def ndim(self) -> int:
        return _SLICES[self.dim_slices]

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.ndim


def _mode_index_sq(N):
    m = np.rint(np.fft.fftfreq(N) * N).astype(np.int64)
    return m[:, None, None] ** 2 + m[None, :, None] ** 2 + m[None, None, :] ** 2


def spectral_density(model: CorrelationModel, t: float, k):
    """``g_t`` at radial wavenumber ``k``; the origin gets its limit ``t (2 pi)^-3``."""
    k = np.asarray(k, dtype=float)
    out = np.full(k.shape, t * _FOURIER_3D)
    nz = k > 0
    kk = k[nz]
    out[nz] = _FOURIER_3D * model.fhat_profile(kk) * (-np.expm1(-t * kk * kk)) / (kk * kk)
    return out


def noise_weights(model: CorrelationModel, spec: LatticeSpec, dt: float = 1.0):
    """Per-mode variances ``dt (2 pi)^-3 fhat(k) (2 pi / L)^3`` of f-correlated noise."""
    return _mode_weights(model, spec, lambda k: dt * _FOURIER_3D * model.fhat_profile(k))


def field_weights(model: CorrelationModel, spec: LatticeSpec, t: float):
    """Per-mode variances of ``Z(t, .) - 1`` on the lattice."""
    return _mode_weights(model, spec, lambda k: spectral_density(model, t, k))


def _mode_weights(model, spec, radial):
    N = spec.N
    msq = _mode_index_sq(N)
    uniq, inv = np.unique(msq, return_inverse=True)
    k = 2 * math.pi / spec.L * np.sqrt(uniq.astype(float))
    c = (radial(k) * (2 * math.pi / spec.L) ** 3)[inv].reshape(msq.shape)
    # a slice through the origin sees the 3-D modes summed over the dropped axes
    if spec.ndim < 3:
        c = c.sum(axis=tuple(range(spec.ndim, 3)))
    return c


def covariance_table(weights):
    """Lattice covariance ``C(j) = sum_m c_m cos(2 pi m.j / N)`` by FFT."""
    return sfft.fftn(weights).real


@dataclass
class FieldSample:
    lattice: LatticeSpec
    values: np.ndarray
    gen: str
    seed: int
    t: float | None = None
    label: tuple = field(default=())


class ZField:
    """Spectral synthesiser for one ``(model, t, lattice)``.

    Each call to :meth:`sample_pair` performs one complex FFT and returns two
    independent real fields (real and imaginary parts).
    """

    def __init__(self, model: CorrelationModel, t: float, spec: LatticeSpec,
                 dtype=np.float64, alias_fraction: float = 0.5):
        model.alpha.require_rough_range()
        if not t > 0:
            raise ValueError("t must be positive")
        self.model, self.t, self.spec = model, float(t), spec
        self.dtype = np.dtype(dtype)
        w = field_weights(model, spec, self.t)
        self.weights = w
        self.amp = np.sqrt(w).astype(self.dtype)
        self.variance = float(w.sum())
        frac = nyquist_tail_fraction(model, self.t, spec)
        self.alias_fraction = frac
        if frac > alias_fraction:
            warnings.warn(
                f"{frac:.1%} of the spectral mass of Z lies beyond the Nyquist shell "
                f"(N={spec.N}, L={spec.L})", AliasingWarning, stacklevel=2)

    def sample_pair(self, gen: np.random.Generator):
        cdt = np.complex64 if self.dtype == np.float32 else np.complex128
        shape = self.spec.shape
        xi = np.empty(shape, dtype=cdt)
        xi.real = gen.standard_normal(shape, dtype=self.dtype)
        xi.imag = gen.standard_normal(shape, dtype=self.dtype)
        xi *= self.amp
        z = sfft.fftn(xi, overwrite_x=True)
        return z.real.copy(), z.imag.copy()

    def sample(self, seed: int, replica: int = 0) -> FieldSample:
        """Replica ``2p`` is the real part of pair ``p``, ``2p + 1`` the imaginary part."""
        gen = rng_mod.stream(seed, "field", self.t, self.spec, replica // 2)
        x, y = self.sample_pair(gen)
        return FieldSample(self.spec, x if replica % 2 == 0 else y, "fft-spectral",
                           seed, self.t, ("field", replica))

    @property
    def covariance(self):
        return covariance_table(self.weights)

    @property
    def distance_table(self):
        """Canonical metric on lattice displacements, ``sqrt(2 (C(0) - C(j)))``."""
        C = self.covariance
        return np.sqrt(np.maximum(2.0 * (C.flat[0] - C), 0.0))


def sample_field(model: CorrelationModel, spec: LatticeSpec, t: float, seed: int,
                 replica: int = 0) -> FieldSample:
    return ZField(model, t, spec).sample(seed, replica)


# ---------------------------------------------------------------------------
# dense oracle


def dense_covariance(weights):
    """Full covariance matrix of the lattice field (small lattices only)."""
    C = covariance_table(weights)
    shape = C.shape
    idx = np.indices(shape).reshape(len(shape), -1)
    diff = (idx[:, :, None] - idx[:, None, :]) % np.array(shape)[:, None, None]
    return C[tuple(diff)]


def dense_sampler(cov):
    """Symmetric square root ``cov^(1/2)``; samples are ``root @ xi``."""
    vals, vecs = np.linalg.eigh(cov)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


# ---------------------------------------------------------------------------
# continuum covariance and canonical metric


def _g_integrand(model, t, y):
    """``e^y fhat(e^y) (1 - exp(-t e^{2y}))`` : the radial weight in log r."""
    arg = np.minimum(2 * y + math.log(t), 700.0)
    return np.exp(model.log_fhat_y(y) + y) * -np.expm1(-np.exp(arg))


def variance_Z(model: CorrelationModel, t: float):
    """``Var Z(t, x) = (2 pi)^-3 4 pi int_0^inf fhat(r) (1 - exp(-t r^2)) dr``."""
    c = 4 * math.pi * _FOURIER_3D
    y1 = 0.5 * math.log(40.0 / t) + 2.0
    yn, w = panel_nodes(np.linspace(-40.0, y1, int((y1 + 40) / 0.2) + 2), 8)
    body = np.sum(_g_integrand(model, t, yn) * w)
    return c * (body + model._log_far_integral(lambda y: _g_integrand(model, t, y), y1))


def nyquist_tail_fraction(model: CorrelationModel, t: float, spec: LatticeSpec):
    """Share of ``int g_t`` carried by ``|z| > pi N / L``."""
    kmax = math.pi * spec.N / spec.L
    c = 4 * math.pi * _FOURIER_3D
    y0 = math.log(kmax)
    if y0 < 1.0:
        yn, w = panel_nodes(np.linspace(y0, 1.0, 41), 8)
        tail = np.sum(_g_integrand(model, t, yn) * w)
        y0 = 1.0
    else:
        tail = 0.0
    tail += model._log_far_integral(lambda y: _g_integrand(model, t, y), y0)
    return float(c * tail / variance_Z(model, t))


def distance_sq(model: CorrelationModel, t: float, rho, periods: int = 64):
    """``E|Z(t,x) - Z(t,x')|^2`` at separation ``rho = |x - x'|``.

    Radially ``d^2 = 2 (2 pi)^-3 4 pi int (1 - sinc(r rho)) g(r) dr`` with
    ``g(r) = fhat(r) (1 - exp(-t r^2))``.  The range ``r rho <= 2 pi periods``
    is integrated directly (log-spaced below one period, then per half
    period); beyond, the non-oscillating part is a tail integral and the
    sinc part is closed by one integration by parts.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    out = np.zeros(rho.size)
    c = 8 * math.pi * _FOURIER_3D
    u0 = 2 * math.pi * periods
    for i, p in enumerate(rho):
        if p == 0:
            continue
        # inner: y = log r up to one period
        y_a = math.log(2 * math.pi / p)
        y_lo = min(-40.0, y_a - 40.0)
        yn, w = panel_nodes(np.linspace(y_lo, y_a, int((y_a - y_lo) / 0.1) + 2), 8)
        r = np.exp(yn)
        inner = np.sum((1 - np.sinc(r * p / math.pi)) * _g_integrand(model, t, yn) * w)
        # middle: u = r rho over [2 pi, u0], panels of half a period
        un, wu = panel_nodes(np.linspace(2 * math.pi, u0, 2 * (periods - 1) + 1), 8)
        ym = np.log(un / p)
        gm = _g_integrand(model, t, ym) / un        # g(r) dr = g du / rho = (e^y g) du / u
        middle = np.sum((1 - np.sin(un) / un) * gm * wu)
        # outer: int_{u0/rho}^inf g dr minus the sinc tail ~ g(r0) / (rho u0)
        y0 = math.log(u0 / p)
        tail = model._log_far_integral(lambda y: _g_integrand(model, t, y), y0)
        g0 = float(_g_integrand(model, t, np.array([y0]))[0]) / u0
        out[i] = c * (inner + middle + tail - g0 / u0)
    return out


def sandwich_quantity(model: CorrelationModel, rho):
    """``T(rho) = 2 (2 pi)^-3 int (1 - cos(z.e rho)) fhat(z) / (1 + |z|^2) dz``.

    ``(1 - e^{-t/2}) T <= E|Z(t,x) - Z(t,x')|^2 <= e^{t/2} T``, so ``T`` is
    the time-free yardstick for the canonical metric.  Computed with
    QUADPACK: adaptive in ``log r`` up to ``A = max(1/rho, e^2)``; past
    ``A`` the non-oscillating part runs in ``log log r`` and the sine part
    uses the Fourier-weight routine.
    """
    from scipy.integrate import quad

    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    c = 8 * math.pi * _FOURIER_3D

    def h(r):
        r = np.asarray(r, dtype=float)
        return model.fhat_profile(r) * r * r / (1 + r * r)

    out = np.zeros(rho.size)
    for i, p in enumerate(rho):
        if p == 0:
            continue
        A = max(1.0 / p, math.e ** 2)
        yA = math.log(A)

        def inner(y):
            r = math.exp(y)
            x = r * p
            one_minus_sinc = x * x / 6 if x < 1e-4 else 1 - math.sin(x) / x
            return one_minus_sinc * float(h(r)) * r

        a = quad(inner, -40.0, yA, limit=400, epsabs=0, epsrel=1e-10)[0]

        def flat(q):
            # r = exp(y), y = exp(q): h(r) dr = fhat(r) r / (1 + r^-2) * y dq
            y = math.exp(q)
            lf = float(model.log_fhat_y(np.array([y]))[0])
            return math.exp(lf + y + q) / (1 + math.exp(-2 * y))

        qe = math.log(yA) + 10.0
        b = quad(flat, math.log(yA), qe, limit=400, epsabs=0, epsrel=1e-10)[0]
        # past qe the integrand is e^{q (1 - alpha)} up to slowly varying factors
        b += flat(qe) / (model.a - 1)
        osc = quad(lambda r: float(h(r)) / r, A, np.inf, weight="sin", wvar=p, limlst=100)[0]
        out[i] = c * (a + b - osc / p)
    return out


def covariance_pair(model: CorrelationModel, t: float, x, x2, lattice: LatticeSpec | None = None):
    """``Cov(Z(t,x), Z(t,x'))``.

    Without ``lattice`` this is the continuum value; with it, the lattice
    target of the spectral sampler (``x``, ``x'`` then are integer sites).
    """
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if lattice is None:
        rho = np.sqrt(np.sum((x - x2) ** 2, axis=-1))
        var = variance_Z(model, t)
        return var - 0.5 * distance_sq(model, t, np.atleast_1d(rho)).reshape(np.shape(rho))
    C = covariance_table(field_weights(model, lattice, t))
    d = np.rint(x - x2).astype(int) % lattice.N
    d = np.atleast_2d(d)[:, :lattice.ndim]
    return C[tuple(d.T)]


def canonical_distance(model: CorrelationModel, t: float, x, x2):
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    rho = np.sqrt(np.sum((x - x2) ** 2, axis=-1))
    return np.sqrt(distance_sq(model, t, np.atleast_1d(rho))).reshape(np.shape(rho))


# ---------------------------------------------------------------------------
# maxima, metric entropy, concentration


@dataclass
class ScanRow:
    N: int
    mean_max: float
    ci_low: float
    ci_high: float
    replicas: int
    lower_tail_freq: float = float("nan")
    entropy_integral: float = float("nan")

    @property
    def ratio(self):
        return self.mean_max / self.entropy_integral


@dataclass
class ScanResult:
    rows: list
    maxima: np.ndarray          # (replicas, len(Ns))
    variance: float
    K: float
    flagged: bool
    notes: list = field(default_factory=list)

    def exponent_fit(self, n_boot: int = 400, seed: int = 0):
        """Slope of ``log E max`` against ``log log N``, with a bootstrap interval."""
        Ns = np.array([r.N for r in self.rows], dtype=float)
        keep = Ns > 1
        x = np.log(np.log(Ns[keep]))
        mx = self.maxima[:, keep]
        slope = np.polyfit(x, np.log(mx.mean(axis=0)), 1)[0]
        gen = np.random.default_rng(seed)
        boots = np.empty(n_boot)
        for b in range(n_boot):
            pick = gen.integers(0, mx.shape[0], mx.shape[0])
            boots[b] = np.polyfit(x, np.log(mx[pick].mean(axis=0)), 1)[0]
        lo, hi = np.quantile(boots, [0.025, 0.975])
        return float(slope), (float(lo), float(hi))

    def monotone_within_ci(self):
        """No step down in ``N`` is significant at the interval level."""
        lows = np.array([r.ci_low for r in self.rows])
        highs = np.array([r.ci_high for r in self.rows])
        return bool(np.all(highs[1:] >= lows[:-1]))


def lattice_max_scan(model: CorrelationModel, t: float, Ns, replicas: int, seed: int = 0,
                     N_field: int | None = None, K: float | None = None,
                     dtype=np.float64, min_replicas: int = 30, L: float = 1.0) -> ScanResult:
    """E max of ``|Z(t, .)|`` over nested ``N``-per-axis sublattices of the unit cube.

    One field at resolution ``N_field`` (default ``max(Ns)``) per replica;
    the ``N`` lattice is its stride-``N_field / N`` subsample, so maxima are
    pathwise monotone in ``N``.  ``K`` sets the lower-tail event
    ``max <= (log N)^(1 - alpha/2) / K``; by default it is fitted so that the
    event has frequency one half at the smallest ``N > 1``.  With a box side
    ``L > 1`` the field lives on the larger torus and only the points of the
    unit cube enter the maxima.
    """
    Ns = [int(n) for n in Ns]
    if any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise ValueError("Ns must be strictly increasing")
    Nf = N_field or int(round(max(Ns) * L))
    strides = [sublattice_stride(Nf, L, n) for n in Ns]
    spec = LatticeSpec(Nf, L, "3d" if Nf <= 128 else "2d")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AliasingWarning)
        zf = ZField(model, t, spec, dtype=dtype)
    maxima = np.empty((replicas, len(Ns)))
    for p in range((replicas + 1) // 2):
        gen = rng_mod.stream(seed, "scan", t, Nf, p)
        pair = zf.sample_pair(gen)
        for q in range(2):
            i = 2 * p + q
            if i >= replicas:
                break
            a = np.abs(pair[q])
            for j, n in enumerate(Ns):
                s = strides[j]
                sub = a[(slice(0, s * n, s),) * spec.ndim]
                maxima[i, j] = sub.max()
    beta = 1 - model.a / 2
    rows = []
    if K is None:
        n0 = next((n for n in Ns if n > 1), None)
        if n0 is not None and replicas:
            j0 = Ns.index(n0)
            K = math.log(n0) ** beta / np.median(maxima[:, j0])
        else:
            K = 1.0
    for j, n in enumerate(Ns):
        col = maxima[:, j]
        m = float(col.mean()) if replicas else float("nan")
        se = float(col.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else float("nan")
        thr = math.log(n) ** beta / K if n > 1 else float("nan")
        freq = float(np.mean(col <= thr)) if n > 1 and replicas else float("nan")
        rows.append(ScanRow(n, m, m - 1.96 * se, m + 1.96 * se, replicas, freq))
    notes = []
    flagged = replicas < min_replicas
    if flagged:
        notes.append(f"only {replicas} replicas (< {min_replicas}); intervals unreliable")
    if spec.ndim < 3:
        notes.append(f"resolution {Nf} uses a 2-D slice")
    return ScanResult(rows, maxima, zf.variance, float(K), flagged, notes)


def sublattice_stride(N_field: int, L: float, n: int) -> int:
    """Stride that picks the ``n``-per-unit-length points out of the field lattice."""
    s = N_field / (L * n)
    if s < 1 or abs(s - round(s)) > 1e-9:
        raise ValueError(f"N={n} points per unit length do not sit on the {N_field}-point "
                         f"lattice of side {L}")
    return int(round(s))


def sublattice_entropy(zf: "ZField", n: int, max_points: int = 32 ** 3):
    """Entropy integral of the ``n``-per-axis unit-cube points of ``zf``'s lattice.

    Distances come from the exact lattice metric.  Above ``max_points``
    points the set is cut to the ``x_3 = 0`` plane; the second return value
    is the dimension actually used.
    """
    spec = zf.spec
    s = sublattice_stride(spec.N, spec.L, n)
    D = zf.distance_table
    ndim = D.ndim
    use = ndim
    while use > 1 and n ** use > max_points:
        use -= 1
    axes = [np.arange(n) * s] * use + [np.zeros(1, dtype=int)] * (ndim - use)
    P = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, ndim)

    def dist_from(i):
        return D[tuple(((P - P[i]) % spec.N).T)]

    return entropy_integral_from_radii(greedy_cover_radii(dist_from, P.shape[0])), use


def greedy_cover_radii(dist_from, n_points: int, start: int = 0):
    """Farthest-point (Gonzalez) covering radii.

    ``dist_from(i)`` returns distances from point ``i`` to all points.
    Entry ``k - 1`` of the result is the covering radius achieved by the
    first ``k`` greedy centres, which is within a factor 2 of optimal.
    """
    mind = np.array(dist_from(start), dtype=float)
    radii = []
    for _ in range(n_points):
        i = int(np.argmax(mind))
        r = float(mind[i])
        radii.append(r)
        if r <= 0:
            break
        mind = np.minimum(mind, dist_from(i))
    return np.array(radii)


def entropy_integral_from_radii(radii):
    """``int_0^diam sqrt(log N(eps)) deps`` with ``N(eps)`` from greedy radii."""
    R = np.asarray(radii, dtype=float)
    if R.size == 0 or R[0] == 0:
        return 0.0
    R = np.append(R, 0.0) if R[-1] > 0 else R
    k = np.arange(1, R.size + 1)
    # covering radius R[k-1] with k centres: N(eps) <= k+1 on [R[k], R[k-1])
    widths = R[:-1] - R[1:]
    return float(np.sum(np.sqrt(np.log(k[:-1] + 1)) * widths))


def dudley_bound_estimate(points, metric, empirical_max: float | None = None):
    """Entropy integral of a finite set under ``metric(p, Q) -> distances``.

    Returns ``(entropy_integral, empirical_max)`` for band comparison.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    radii = greedy_cover_radii(lambda i: metric(pts[i], pts), pts.shape[0])
    return entropy_integral_from_radii(radii), empirical_max


def lattice_entropy_integral(zf: ZField):
    """Greedy-cover entropy integral of the whole lattice under the exact lattice metric."""
    D = zf.distance_table
    shape = D.shape
    n = D.size

    def dist_from(i):
        return np.roll(D, np.unravel_index(i, shape), axis=tuple(range(D.ndim))).ravel()

    return entropy_integral_from_radii(greedy_cover_radii(dist_from, n))


def borell_check(maxima, max_variance: float, zs):
    """Empirical two-sided deviation frequencies of the max vs ``2 exp(-z^2 / 2 s^2)``."""
    m = np.asarray(maxima, dtype=float)
    dev = np.abs(m - m.mean())
    zs = np.asarray(zs, dtype=float)
    freq = np.array([(dev > z).mean() for z in zs])
    bound = np.minimum(1.0, 2 * np.exp(-zs ** 2 / (2 * max_variance)))
    slack = 3 * np.sqrt(np.maximum(freq * (1 - freq), 1.0 / m.size) / m.size)
    return {"z": zs, "freq": freq, "bound": bound, "ok": bool(np.all(freq <= bound + slack))}
