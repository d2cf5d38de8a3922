"""Moment estimators, Feynman-Kac particles and oscillation statistics.

Exponential moments of the parabolic Anderson model are dominated by rare
replicas, so every estimate is accumulated in the log domain and reports the
largest single-replica weight share.  A share above 20% marks the estimate
unreliable; it is never silently averaged away.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import rng as rng_mod
from .levy_kernel import CorrelationModel
from .spde_solver import SigmaSpec, SolverConfig, Trajectory, run

HEAVY_TAIL_SHARE = 0.2


@dataclass
class MomentEstimate:
    k: float
    log_mean: float
    ci: tuple
    replicas: int
    max_weight_share: float
    flags: list = field(default_factory=list)

    @property
    def value(self) -> float:
        return math.exp(self.log_mean) if self.log_mean < 700 else math.inf

    @property
    def reliable(self) -> bool:
        return self.max_weight_share <= HEAVY_TAIL_SHARE and "all-zero" not in self.flags


def _log_mean_exp(logs):
    return float(logsumexp(logs) - math.log(logs.size))


def estimate_from_logs(logs, k, n_boot: int = 400, seed: int = 0, level: float = 0.95):
    """Estimate ``log E exp(L)`` from per-replica log weights ``L``."""
    logs = np.asarray(logs, dtype=float).ravel()
    if logs.size == 0:
        raise ValueError("no samples")
    flags = []
    if np.all(np.isneginf(logs)):
        return MomentEstimate(k, -math.inf, (-math.inf, -math.inf), logs.size, 1.0, ["all-zero"])
    lm = _log_mean_exp(logs)
    share = float(np.exp(np.max(logs) - logsumexp(logs)))
    gen = np.random.default_rng(seed)
    boots = np.empty(n_boot)
    for b in range(n_boot):
        boots[b] = _log_mean_exp(logs[gen.integers(0, logs.size, logs.size)])
    a = (1 - level) / 2
    lo, hi = np.quantile(boots, [a, 1 - a])
    lo, hi = min(lo, lm), max(hi, lm)
    if share > HEAVY_TAIL_SHARE:
        flags.append("heavy-tail")
    return MomentEstimate(k, lm, (float(lo), float(hi)), logs.size, share, flags)


def estimate_moment(samples, k: float, **kw) -> MomentEstimate:
    """``log E|X|^k`` by log-sum-exp over ``k log|x_i|`` with a bootstrap interval."""
    if k < 1:
        raise ValueError("moment order k must be >= 1")
    x = np.abs(np.asarray(samples, dtype=float)).ravel()
    with np.errstate(divide="ignore"):
        logs = k * np.log(x)
    return estimate_from_logs(logs, k, **kw)


def estimate_moment_replicas(values, k: float, **kw) -> MomentEstimate:
    """``E|X|^k`` from an array ``(replicas, ...)`` of spatially correlated sites.

    Sites are averaged within each replica first (in the log domain), so
    the bootstrap and the weight share act on independent replicas.
    """
    if k < 1:
        raise ValueError("moment order k must be >= 1")
    x = np.abs(np.asarray(values, dtype=float))
    x = x.reshape(x.shape[0], -1)
    with np.errstate(divide="ignore"):
        lx = k * np.log(x)
    logs = logsumexp(lx, axis=1) - math.log(x.shape[1])
    return estimate_from_logs(logs, k, **kw)


# ---------------------------------------------------------------------------
# Feynman-Kac


@dataclass
class FeynmanKacConfig:
    k: int
    t: float
    bm_dt: float
    replicas: int
    seed: int = 0
    cap_radius: float | None = None      # default: the U-grid trusted radius
    box: float | None = None             # periodic box side; None means R^3

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError("k must be an integer >= 1")
        if not self.bm_dt > 0:
            raise ValueError("bm_dt must be positive")
        if self.t < 0:
            raise ValueError("t must be nonnegative")


class PeriodicImages:
    """``sum_{n != 0} f(y + n L)`` tabulated on ``[0, L/2]^3``.

    The periodised kernel is even and ``L``-periodic in every coordinate,
    so the table covers one octant of the cell; images are summed out to
    distance ``r_max``.  Trilinear interpolation in between.
    """

    def __init__(self, model: CorrelationModel, L: float, n_grid: int = 13, r_max: float = 20.0):
        from scipy.interpolate import RegularGridInterpolator

        self.L = float(L)
        g = np.linspace(0.0, self.L / 2, n_grid)
        Y = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
        m = int(math.ceil(r_max / self.L)) + 1
        r = np.arange(-m, m + 1)
        n = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
        n = n[np.any(n != 0, axis=1) & (np.sqrt((n * n).sum(axis=1)) * self.L <= r_max + self.L)]
        vals = np.zeros(Y.shape[0])
        for c in range(0, Y.shape[0], 64):
            d = Y[c:c + 64, None, :] + self.L * n[None, :, :]
            dist = np.sqrt((d * d).sum(axis=-1))
            f, _ = model.phi_fast(np.minimum(dist, r_max), model.trusted_radius)
            vals[c:c + 64] = np.where(dist <= r_max, f, 0.0).sum(axis=1)
        self.table = vals.reshape(n_grid, n_grid, n_grid)
        self._interp = RegularGridInterpolator((g, g, g), self.table)

    def wrap(self, x):
        return x - self.L * np.round(x / self.L)

    def __call__(self, x_wrapped):
        shp = x_wrapped.shape[:-1]
        return self._interp(np.abs(x_wrapped).reshape(-1, 3)).reshape(shp)


@dataclass
class FeynmanKacResult:
    estimate: MomentEstimate
    energies: np.ndarray
    cap_fraction: float
    cap_radius: float


_IMAGE_CACHE: dict = {}


def periodic_images(model: CorrelationModel, L: float) -> PeriodicImages:
    key = (model.a, model.settings, float(L))
    if key not in _IMAGE_CACHE:
        _IMAGE_CACHE[key] = PeriodicImages(model, L)
    return _IMAGE_CACHE[key]


def feynman_kac_moment(model: CorrelationModel, cfg: FeynmanKacConfig,
                       chunk: int = 4096) -> FeynmanKacResult:
    """``E u(t, x)^k = E exp(sum_{i<j} int_0^t f(w_i - w_j) ds)`` for the PAM.

    The ``k`` Brownian motions start together.  Pair energies use the
    midpoint rule on steps of ``bm_dt`` (each step walks half a step,
    evaluates, then walks the other half), with ``f`` held at its value at
    the cap radius inside it.  With ``cfg.box`` set the kernel is the
    periodised one, matching the torus solver.
    """
    return feynman_kac_series(model, cfg, [cfg.t], chunk)[0]


def feynman_kac_series(model: CorrelationModel, cfg: FeynmanKacConfig, times,
                       chunk: int = 4096) -> list:
    """Feynman-Kac estimates at several ``times`` from the same paths.

    Every time must be a multiple of ``cfg.bm_dt``; ``cfg.t`` is ignored.
    Paths depend on ``(seed, k, bm_dt)`` only, so shorter horizons see
    prefixes of the longer ones.
    """
    k = int(cfg.k)
    times = [float(t) for t in times]
    steps = []
    for t in times:
        n = t / cfg.bm_dt
        if t < 0 or abs(n - round(n)) > 1e-6:
            raise ValueError(f"time {t} is not a multiple of bm_dt={cfg.bm_dt}")
        steps.append(int(round(n)))
    n_max = max(steps) if steps else 0
    dt = cfg.bm_dt
    cap = model.trusted_radius if cfg.cap_radius is None else cfg.cap_radius
    R = int(cfg.replicas)
    energies = np.zeros((len(times), R))
    capped = np.zeros(len(times))
    evals = np.zeros(len(times))
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    active = bool(pairs) and n_max > 0 and R > 0
    images = periodic_images(model, cfg.box) if (cfg.box and active) else None
    if active:
        I = np.array([p[0] for p in pairs])
        J = np.array([p[1] for p in pairs])
        for c, start in enumerate(range(0, R, chunk)):
            m = min(R, start + chunk) - start
            gen = rng_mod.stream(cfg.seed, "feynman-kac", k, cfg.bm_dt, cfg.box, c)
            pos = np.zeros((m, k, 3))
            e = np.zeros(m)
            hits = 0
            for s in range(1, n_max + 1):
                # walk half a step, evaluate, walk the other half
                pos += math.sqrt(0.5 * dt) * gen.standard_normal((m, k, 3))
                diff = pos[:, I, :] - pos[:, J, :]
                if images is not None:
                    diff = images.wrap(diff)
                r = np.sqrt(np.sum(diff * diff, axis=-1))
                fv, hit = model.phi_fast(r, cap)
                if images is not None:
                    fv = fv + images(diff)
                e += dt * fv.sum(axis=1)
                hits += int(hit.sum())
                pos += math.sqrt(0.5 * dt) * gen.standard_normal((m, k, 3))
                for i, n in enumerate(steps):
                    if n == s:
                        energies[i, start:start + m] = e
                        capped[i] += hits
                        evals[i] += m * len(pairs) * s
    out = []
    for i, t in enumerate(times):
        frac = float(capped[i] / evals[i]) if evals[i] else 0.0
        est = estimate_from_logs(energies[i], k, seed=cfg.seed) if R else None
        if est is not None:
            est.flags.append(f"cap-fraction={frac:.3g}")
        out.append(FeynmanKacResult(est, energies[i].copy(), frac, cap))
    return out


# ---------------------------------------------------------------------------
# growth fits


@dataclass
class GrowthReport:
    k: float
    slope: float
    intercept: float
    monotone: bool
    label: str = "diagnostic"


def lyapunov_fit(times, estimates, k) -> GrowthReport:
    """Least-squares slope of ``log E|u(t)|^k`` against ``t``."""
    t = np.asarray(times, dtype=float)
    if t.size < 3:
        raise ValueError("need at least three time points")
    y = np.array([e.log_mean if isinstance(e, MomentEstimate) else float(e) for e in estimates])
    slope, icpt = np.polyfit(t, y, 1)
    mono = bool(np.all(np.diff(y[np.argsort(t)]) >= 0))
    return GrowthReport(k, float(slope), float(icpt), mono)


def lyapunov_trend(reports, alpha):
    """``log(slope)`` against ``k**(1/alpha)`` for several ``k`` (diagnostic)."""
    ks = np.array([r.k for r in reports], dtype=float)
    sl = np.array([r.slope for r in reports])
    x = ks ** (1.0 / alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        ly = np.log(sl)
    ok = np.isfinite(ly)
    trend = float(np.polyfit(x[ok], ly[ok], 1)[0]) if ok.sum() >= 2 else float("nan")
    return {"k": ks, "k_pow": x, "log_slope": ly, "trend": trend, "label": "diagnostic"}


# ---------------------------------------------------------------------------
# increments


@dataclass
class IncrementRow:
    lag: float
    k: int
    moment: float
    se: float
    normalized: float


def _norm_log(lag, alpha, k):
    lp = max(math.log(1.0 / lag), 0.0)
    return lp ** ((alpha - 1) * k / 2)


def _site_stats(x, blocks=2):
    """Mean and a block-based standard error of ``x`` shaped (R, N, N, N)."""
    R, N = x.shape[0], x.shape[1]
    b = N // blocks
    bm = x.reshape(R, blocks, b, blocks, b, blocks, b).mean(axis=(2, 4, 6)).ravel()
    return float(bm.mean()), float(bm.std(ddof=1) / math.sqrt(bm.size)) if bm.size > 1 else math.nan


def increment_scan(traj: Trajectory, model: CorrelationModel, mode: str, lags,
                   ks=(2, 4), base_time: float | None = None, u_only: bool = True):
    """Moments of spatial or temporal increments from stored snapshots.

    ``mode='spatial'``: ``lags`` are positive integer shifts along the first
    axis, applied to the snapshot at ``base_time`` (default: the last one).
    ``mode='temporal'``: ``lags`` are time differences ``h``; snapshots at
    ``base_time`` and ``base_time + h`` must exist.
    """
    a = model.a
    times = list(traj.times)
    if base_time is None:
        base_time = times[-1] if mode == "spatial" else times[0]
    i0 = _time_index(times, base_time)
    u0 = traj.u[i0]
    rows = []
    for lag in lags:
        if mode == "spatial":
            if int(lag) != lag or lag < 0:
                raise ValueError("spatial lags are nonnegative integer lattice shifts")
            if lag == 0:
                diff = np.zeros_like(u0)
            else:
                diff = np.roll(u0, -int(lag), axis=1) - u0
            phys = lag * traj.config.lattice.h
        elif mode == "temporal":
            if lag < 0:
                raise ValueError("temporal lags must be nonnegative")
            if lag < traj.config.dt * (1 - 1e-9) and lag != 0:
                raise ValueError("temporal lag below the time step")
            diff = traj.u[_time_index(times, base_time + lag)] - u0 if lag else np.zeros_like(u0)
            phys = lag
        else:
            raise ValueError("mode must be 'spatial' or 'temporal'")
        for k in ks:
            m, se = _site_stats(np.abs(diff) ** k)
            norm = m * _norm_log(phys, a, k) if phys > 0 else 0.0
            rows.append(IncrementRow(float(phys), int(k), m, se, norm))
    return rows


def _time_index(times, t):
    for i, s in enumerate(times):
        if abs(s - t) <= 1e-9 * max(1.0, abs(t)):
            return i
    raise ValueError(f"no snapshot at t={t}")


def band_ratio(values):
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v) & (v > 0)]
    return float(v.max() / v.min()) if v.size else math.nan


# ---------------------------------------------------------------------------
# oscillation over Pi(delta)


def pi_cardinality(delta: float) -> int:
    m = int(math.floor(1.0 / math.sqrt(delta) + 1e-12))
    return (2 * m + 1) ** 3


def pi_offsets(delta: float, budget: int | None = None):
    """Integer offsets ``i`` of ``Pi(delta)``; a 1-D slice if over ``budget``.

    The slice runs along the first axis in the order ``0, +1, -1, +2, ...``
    and keeps ``budget`` points, so ``budget=2`` is a single neighbour.
    Returns ``(offsets, truncated)``.
    """
    m = int(math.floor(1.0 / math.sqrt(delta) + 1e-12))
    full = (2 * m + 1) ** 3
    if budget is None or full <= budget:
        r = np.arange(-m, m + 1)
        g = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
        return g, False
    order = [0]
    for j in range(1, m + 1):
        order += [j, -j]
    order = order[:max(1, min(budget, 2 * m + 1))]
    g = np.zeros((len(order), 3), dtype=int)
    g[:, 0] = order
    return g, True


@dataclass
class OscillationRow:
    delta: float
    points: int
    truncated: bool
    rho: float                    # |log delta|^(1 - alpha/2)
    u_max: float
    z_max: float
    d_max: float
    u_se: float
    z_se: float
    d_se: float
    samples: np.ndarray = field(repr=False, default=None)

    @property
    def z_ratio(self):
        return self.z_max / self.rho

    @property
    def d_ratio(self):
        return self.d_max / self.rho


def oscillation_growth(model: CorrelationModel, config: SolverConfig, deltas,
                       budget: int | None = None, n_base: int = 8):
    """Maxima over ``Pi(delta)`` of ``|u(y)-u(x)|``, ``|Z(y)-Z(x)|`` and ``|D_t(x,y)|``.

    ``D_t(x, y) = u(y) - u(x) - sigma(u(x)) (Z(y) - Z(x))``.  Each ``delta``
    must be a multiple of the lattice spacing; statistics are averaged over
    ``n_base`` base points per axis pattern and over replicas, all computed
    on one coupled run at ``T_end``.
    """
    spec = config.lattice
    h, N = spec.h, spec.N
    if not config.coupled:
        config = SolverConfig(**{**config.__dict__, "coupled": True})
    plans = []
    for d in deltas:
        j = d / h
        if abs(j - round(j)) > 1e-9 or round(j) < 1:
            raise ValueError(f"delta={d} is not a positive multiple of the spacing {h}")
        offs, trunc = pi_offsets(d, budget)
        plans.append((d, int(round(j)), offs, trunc))
    # base points spread over the lattice
    gen = np.random.default_rng(config.seed)
    bases = gen.integers(0, N, size=(n_base, 3))
    out = {d: [] for d, *_ in plans}
    n_end = config.n_steps

    def obs(n, t, u, z, reps):
        if n != n_end:
            return
        for d, j, offs, _ in plans:
            for b in bases:
                idx = (b[None, :] + j * offs) % N
                ux = u[:, b[0], b[1], b[2]][:, None]
                zx = z[:, b[0], b[1], b[2]][:, None]
                uy = u[:, idx[:, 0], idx[:, 1], idx[:, 2]]
                zy = z[:, idx[:, 0], idx[:, 1], idx[:, 2]]
                du, dz = uy - ux, zy - zx
                dd = du - config.sigma(ux) * dz
                out[d].append(np.stack([np.abs(du).max(axis=1), np.abs(dz).max(axis=1),
                                        np.abs(dd).max(axis=1)], axis=1))

    run(model, config, observer=obs)
    rows = []
    a = model.a
    for d, j, offs, trunc in plans:
        s = np.concatenate(out[d], axis=0)   # (replicas * n_base, 3)
        m = s.mean(axis=0)
        se = s.std(axis=0, ddof=1) / math.sqrt(s.shape[0]) if s.shape[0] > 1 else np.full(3, math.nan)
        rho = abs(math.log(d)) ** (1 - a / 2)
        rows.append(OscillationRow(d, offs.shape[0], trunc, rho, *map(float, m), *map(float, se),
                                   samples=s))
    return rows
