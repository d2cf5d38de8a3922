"""Exponential-Euler integration of the mild equation on the periodic cube.

One step is

    u_{n+1} = P_dt [ u_n + sigma(u_n) W_n ],

where ``P_dt`` multiplies Fourier mode ``k`` by ``exp(-|k|^2 dt / 2)`` and
``W_n`` is a Gaussian field whose mode variances are
``dt (2 pi)^-3 fhat(k) (2 pi / L)^3``.  Replicas are advanced in batches;
replicas ``2p`` and ``2p + 1`` take the real and imaginary parts of one
complex synthesis keyed by ``(seed, pair p, step)``, so any step's noise can
be regenerated on its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from . import rng as rng_mod
from .gaussian_field import FieldSample, LatticeSpec, noise_weights
from .levy_kernel import CorrelationModel


class BlowupError(FloatingPointError):
    """The state became non-finite."""

    def __init__(self, step: int):
        super().__init__(f"non-finite solution values after step {step}")
        self.step = step


@dataclass(frozen=True)
class SigmaSpec:
    """Diffusion coefficient.

    ``kind`` is one of ``const`` (value ``param``), ``clip`` (identity clipped
    to ``[-M, M]``), ``tanh`` (``a tanh(z / a)``) or ``id``.
    """

    kind: str
    param: float = 1.0

    def __post_init__(self):
        if self.kind not in ("const", "clip", "tanh", "id"):
            raise ValueError(f"unknown sigma kind {self.kind!r}")
        if self.kind in ("clip", "tanh") and not self.param > 0:
            raise ValueError(f"sigma {self.kind} needs a positive parameter")
        object.__setattr__(self, "param", float(self.param))

    @classmethod
    def parse(cls, text: str) -> "SigmaSpec":
        """``const:c``, ``clip:M``, ``tanh:a`` or ``id``."""
        name, _, arg = text.strip().partition(":")
        if name == "id":
            if arg:
                raise ValueError("sigma 'id' takes no parameter")
            return cls("id")
        if not arg:
            raise ValueError(f"sigma {name!r} needs a parameter, e.g. {name}:1")
        return cls(name, float(arg))

    def __str__(self):
        return "id" if self.kind == "id" else f"{self.kind}:{self.param:g}"

    def __call__(self, u):
        k, p = self.kind, self.param
        if k == "const":
            return np.full_like(u, p)
        if k == "clip":
            return np.clip(u, -p, p)
        if k == "tanh":
            return p * np.tanh(u / p)
        return u

    @property
    def sigma0(self) -> float:
        """``sup |sigma|`` (infinite for the identity)."""
        return {"const": abs(self.param), "clip": self.param,
                "tanh": self.param, "id": math.inf}[self.kind]

    @property
    def lipschitz(self) -> float:
        return 0.0 if self.kind == "const" else 1.0

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.sigma0)

    @property
    def strictly_positive(self) -> bool:
        """``0 < inf sigma <= sup sigma < inf``."""
        return self.kind == "const" and self.param > 0


@dataclass
class SolverConfig:
    lattice: LatticeSpec
    dt: float
    T_end: float
    sigma: SigmaSpec
    seed: int = 0
    coupled: bool = False
    replicas: int = 1
    snapshots: tuple = ()
    dtype: str = "float64"
    batch: int = 2

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.T_end < 0:
            raise ValueError("T_end must be nonnegative")
        if self.replicas < 0:
            raise ValueError("replicas must be nonnegative")
        if self.batch < 2 or self.batch % 2:
            raise ValueError("batch must be an even number >= 2")

    @property
    def n_steps(self) -> int:
        return int(round(self.T_end / self.dt))

    @property
    def stability_ok(self) -> bool:
        """Advisory guard ``dt <= h^2 / 2`` for the multiplicative term."""
        return self.dt <= self.lattice.h ** 2 / 2

    def snapshot_steps(self):
        out = []
        for t in self.snapshots:
            n = int(round(t / self.dt))
            if abs(n * self.dt - t) > 1e-9 * max(1.0, t) or n > self.n_steps or n < 0:
                raise ValueError(f"snapshot time {t} is not a step of dt={self.dt} within T_end")
            out.append(n)
        return out


@dataclass
class Trajectory:
    config: SolverConfig
    times: list
    u: list                   # arrays (replicas, *shape)
    z: list
    noise_ledger: dict = field(default_factory=dict)


def noise_key(seed: int, pair: int, step: int):
    return (seed, "noise", pair, step)


class Integrator:
    """Precomputed spectral data for one ``(model, lattice, dt)``."""

    def __init__(self, model: CorrelationModel, spec: LatticeSpec, dt: float, dtype="float64"):
        model.alpha.require_rough_range()
        if spec.ndim != 3:
            raise ValueError("the solver runs on the full 3-D lattice")
        self.model, self.spec, self.dt = model, spec, float(dt)
        self.dtype = np.dtype(dtype)
        self.cdtype = np.complex64 if self.dtype == np.float32 else np.complex128
        w = noise_weights(model, spec, self.dt)
        self.noise_var = float(w.sum())
        self.amp = np.sqrt(w).astype(self.dtype)
        N, L = spec.N, spec.L
        k = 2 * math.pi / L * np.fft.fftfreq(N, 1.0 / N)
        kz = 2 * math.pi / L * np.fft.rfftfreq(N, 1.0 / N)
        k2 = k[:, None, None] ** 2 + k[None, :, None] ** 2 + kz[None, None, :] ** 2
        self.heat = np.exp(-0.5 * k2 * self.dt).astype(self.dtype)

    def noise_pairs(self, seed: int, pairs, step: int):
        """Noise for replicas ``2p, 2p+1`` of every ``p`` in ``pairs``."""
        shape = self.spec.shape
        xi = np.empty((len(pairs),) + shape, dtype=self.cdtype)
        for i, p in enumerate(pairs):
            gen = rng_mod.stream(*noise_key(seed, p, step))
            xi[i].real = gen.standard_normal(shape, dtype=self.dtype)
            xi[i].imag = gen.standard_normal(shape, dtype=self.dtype)
        xi *= self.amp
        z = sfft.fftn(xi, axes=(1, 2, 3), overwrite_x=True)
        out = np.empty((2 * len(pairs),) + shape, dtype=self.dtype)
        out[0::2] = z.real
        out[1::2] = z.imag
        return out

    def step(self, u, noise, sigma: SigmaSpec):
        """``P_dt [u + sigma(u) noise]`` for a batch ``(R, N, N, N)``."""
        v = u + sigma(u) * noise
        vh = sfft.rfftn(v, axes=(1, 2, 3), overwrite_x=True)
        vh *= self.heat
        return sfft.irfftn(vh, s=self.spec.shape, axes=(1, 2, 3), overwrite_x=True)

    def heat_only(self, u):
        vh = sfft.rfftn(u, axes=(1, 2, 3))
        vh *= self.heat
        return sfft.irfftn(vh, s=self.spec.shape, axes=(1, 2, 3))


def noise_increment(model: CorrelationModel, spec: LatticeSpec, dt: float, seed: int,
                    step: int, replica: int = 0) -> FieldSample:
    """The noise field ``W_step`` seen by ``replica``."""
    integ = Integrator(model, spec, dt)
    pair = replica // 2
    w = integ.noise_pairs(seed, [pair], step)[replica % 2]
    return FieldSample(spec, w, "fft-spectral", seed, None, ("noise", replica, step))


def step(integrator: Integrator, u_n, noise, sigma: SigmaSpec):
    """Single exponential-Euler step for one field or a batch of fields."""
    single = np.ndim(u_n) == 3
    u = u_n[None] if single else u_n
    w = noise[None] if single else noise
    out = integrator.step(u, w, sigma)
    if not np.all(np.isfinite(out)):
        raise BlowupError(0)
    return out[0] if single else out


def run(model: CorrelationModel, config: SolverConfig, observer=None) -> Trajectory:
    """Iterate to ``T_end``.

    ``observer(step, t, u, z, replicas)`` is called after every step (and at
    step 0) with the current batch; ``z`` is ``None`` unless coupled.  Only
    the requested snapshots are stored.
    """
    integ = Integrator(model, config.lattice, config.dt, config.dtype)
    snaps = config.snapshot_steps()
    want = {n: i for i, n in enumerate(snaps)}
    R = config.replicas
    shape = config.lattice.shape
    u_store = [np.empty((R,) + shape, dtype=integ.dtype) for _ in snaps]
    z_store = [np.empty((R,) + shape, dtype=integ.dtype) for _ in snaps] if config.coupled else []
    one = SigmaSpec("const", 1.0)
    n_steps = config.n_steps
    for start in range(0, R, config.batch):
        reps = np.arange(start, min(R, start + config.batch))
        pairs = sorted({int(r) // 2 for r in reps})
        u = np.ones((2 * len(pairs),) + shape, dtype=integ.dtype)
        z = u.copy() if config.coupled else None
        sel = reps - 2 * pairs[0]
        for n in range(n_steps + 1):
            if n > 0:
                w = integ.noise_pairs(config.seed, pairs, n - 1)
                u = integ.step(u, w, config.sigma)
                if not np.all(np.isfinite(u)):
                    raise BlowupError(n)
                if z is not None:
                    z = integ.step(z, w, one)
            if observer is not None:
                observer(n, n * config.dt, u[sel], None if z is None else z[sel], reps)
            if n in want:
                u_store[want[n]][reps] = u[sel]
                if z is not None:
                    z_store[want[n]][reps] = z[sel]
    ledger = {"seed": config.seed, "label": "noise", "pairs": (R + 1) // 2,
              "steps": n_steps, "key": "(seed, 'noise', pair, step)"}
    return Trajectory(config, [n * config.dt for n in snaps], u_store, z_store, ledger)


# ---------------------------------------------------------------------------
# exact lattice oracles


def scheme_field_weights(model: CorrelationModel, spec: LatticeSpec, dt: float, n_steps: int):
    """Mode variances of the scheme's ``Z_n - 1`` after ``n_steps``.

    ``sum_{j=1..n} c_k exp(-|k|^2 dt j)`` per mode, with noise variances
    ``c_k``; the constant mode keeps ``n c_0``.
    """
    c = noise_weights(model, spec, dt)
    N, L = spec.N, spec.L
    k = 2 * math.pi / L * np.fft.fftfreq(N, 1.0 / N)
    k2 = k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2
    q = np.exp(-k2 * dt)
    geo = np.where(k2 > 0, q * -np.expm1(-k2 * dt * n_steps) / np.where(k2 > 0, -np.expm1(-k2 * dt), 1.0),
                   float(n_steps))
    return c * geo


def pam_second_moment(model: CorrelationModel, spec: LatticeSpec, dt: float, n_steps: int,
                      sigma: SigmaSpec | None = None):
    """Exact ``E u_n(x) u_n(y)`` of the scheme for linear ``sigma``.

    For ``sigma = id`` the two-point function ``M(d)`` of the stationary
    scheme obeys ``M <- P_2dt [M (1 + C_W)]`` with ``C_W`` the noise
    covariance; for ``sigma = const(c)`` it is ``M <- P_2dt [M + c^2 C_W]``.
    Returns the table over lattice displacements.
    """
    sigma = sigma or SigmaSpec("id")
    c = noise_weights(model, spec, dt)
    CW = sfft.fftn(c).real
    N, L = spec.N, spec.L
    k = 2 * math.pi / L * np.fft.fftfreq(N, 1.0 / N)
    k2 = k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2
    heat2 = np.exp(-k2 * dt)
    M = np.ones(spec.shape)
    for _ in range(n_steps):
        if sigma.kind == "id":
            src = M * (1.0 + CW)
        elif sigma.kind == "const":
            src = M + sigma.param ** 2 * CW
        else:
            raise ValueError("exact second moments need sigma id or const")
        M = sfft.ifftn(sfft.fftn(src) * heat2).real
    return M


# ---------------------------------------------------------------------------
# linearisation experiment


def beta_gamma(eps):
    """Scales ``beta = exp(-sqrt(log 1/eps))`` and ``gamma = (16 beta)^(1/4)``."""
    eps = np.asarray(eps, dtype=float)
    beta = np.exp(-np.sqrt(np.log(1.0 / eps)))
    return beta, (16 * beta) ** 0.25


@dataclass
class LinearizationRow:
    shift: tuple
    eps: float
    grad_u: float          # E |nabla u|^2
    lin: float             # E |sigma(u) nabla Z|^2
    resid: float           # E |nabla u - sigma(u) nabla Z|^2
    ratio: float
    ratio_se: float
    beta: float
    gamma: float


def linearization_residual(model: CorrelationModel, config: SolverConfig, shifts,
                           blocks: int = 2) -> list:
    """Residual ``D = nabla u - sigma(u) nabla Z`` at ``T_end`` for lattice shifts.

    ``shifts`` are integer 3-vectors (multiples of the spacing ``h``).
    Expectations pool sites and replicas; errors come from the spread of the
    per-(replica, block) means with the lattice cut into ``blocks**3`` boxes.
    """
    shifts = [tuple(int(v) for v in np.broadcast_to(s, (3,))) for s in shifts]
    for s in shifts:
        if not any(s):
            raise ValueError("a shift must be a nonzero lattice vector (eps below spacing)")
    if not config.coupled:
        config = SolverConfig(**{**config.__dict__, "coupled": True})
    h = config.lattice.h
    N = config.lattice.N
    b = N // blocks
    n_end = config.n_steps
    acc = {s: [] for s in shifts}

    def block_means(x):
        return x.reshape(x.shape[0], blocks, b, blocks, b, blocks, b).mean(axis=(2, 4, 6)).ravel()

    def obs(n, t, u, z, reps):
        if n != n_end:
            return
        su = config.sigma(u)
        for s in shifts:
            back = [-v for v in s]
            gu = np.roll(u, back, axis=(1, 2, 3)) - u
            lin = su * (np.roll(z, back, axis=(1, 2, 3)) - z)
            d = gu - lin
            acc[s].append(np.stack([block_means(gu * gu), block_means(lin * lin),
                                    block_means(d * d)]))

    run(model, config, observer=obs)
    rows = []
    for s in shifts:
        data = np.concatenate(acc[s], axis=1)          # (3, samples)
        a_m, l_m, r_m = data.mean(axis=1)
        n = data.shape[1]
        ratio = r_m / a_m
        # delta-method error of a ratio of means
        cov = np.cov(data[[0, 2]]) / n
        var = (cov[1, 1] / a_m ** 2 - 2 * r_m * cov[0, 1] / a_m ** 3 + r_m ** 2 * cov[0, 0] / a_m ** 4)
        eps = h * math.sqrt(sum(v * v for v in s))
        beta, gamma = beta_gamma(eps)
        rows.append(LinearizationRow(s, eps, float(a_m), float(l_m), float(r_m), float(ratio),
                                     float(math.sqrt(max(var, 0.0))), float(beta), float(gamma)))
    return rows
