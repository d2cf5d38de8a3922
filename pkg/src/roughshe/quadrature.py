"""Vectorised quadrature rules.

Two integrators live here:

* :func:`adaptive_gk` -- globally adaptive Gauss-Kronrod (G7/K15) bisection,
  run simultaneously for a batch of integrals that share one integrand
  family but have their own parameters and intervals.
* :func:`panel_gl` -- fixed composite Gauss-Legendre on caller supplied
  panel edges, for smooth integrands where a node budget is known up front.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# QUADPACK qk15 abscissae (nonnegative half) and weights.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

# full 15-point node set on [-1, 1] and the matching weight vectors
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG_FULL = np.zeros(15)
_WG_FULL[[1, 3, 5]] = _WG[:3]
_WG_FULL[[13, 11, 9]] = _WG[:3]
_WG_FULL[7] = _WG[3]


class QuadratureError(RuntimeError):
    """Raised when an adaptive integral misses its tolerance within budget."""

    def __init__(self, message: str, value, error):
        super().__init__(message)
        self.value = value
        self.error = error


@dataclass
class QuadResult:
    value: np.ndarray
    error: np.ndarray
    converged: np.ndarray
    n_panels: np.ndarray

    def raise_if_failed(self, what: str = "integral") -> None:
        if not np.all(self.converged):
            bad = np.flatnonzero(~self.converged)
            raise QuadratureError(
                f"{what}: {bad.size} of {self.converged.size} quadratures did not "
                f"converge; worst achieved error estimate "
                f"{np.max(self.error[bad]):.3e}",
                self.value, self.error)


def adaptive_gk(func, edges, rtol=1e-8, atol=0.0, max_panels=400, max_iter=200):
    """Integrate a batch of one-dimensional integrals adaptively.

    Parameters
    ----------
    func : callable
        ``func(x, owner)`` evaluates the integrand at nodes ``x`` (shape
        ``(P, 15)``) for integrals with indices ``owner`` (shape ``(P,)``).
    edges : sequence of 1-D arrays
        Initial breakpoints for each integral; at least two per integral.
    rtol, atol : float
        Each integral stops once its summed error estimate is below
        ``max(atol, rtol * |value|)``.
    max_panels : int
        Per-integral panel budget.

    Returns
    -------
    QuadResult
    """
    owners, los, his = [], [], []
    for i, e in enumerate(edges):
        e = np.asarray(e, dtype=float)
        owners.append(np.full(e.size - 1, i))
        los.append(e[:-1])
        his.append(e[1:])
    m = len(edges)
    owner = np.concatenate(owners)
    lo = np.concatenate(los)
    hi = np.concatenate(his)
    val, err = _gk15(func, lo, hi, owner)
    converged = np.zeros(m, dtype=bool)

    for _ in range(max_iter):
        total = np.bincount(owner, weights=val, minlength=m)
        total_err = np.bincount(owner, weights=err, minlength=m)
        npan = np.bincount(owner, minlength=m)
        tol = np.maximum(atol, rtol * np.abs(total))
        converged = total_err <= tol
        active = ~converged & (npan < max_panels)
        if not active.any():
            break
        # split every panel carrying more than its even share of the budget
        share = tol[owner] / npan[owner]
        owner_max = np.zeros(m)
        np.maximum.at(owner_max, owner, err)
        split = active[owner] & ((err > share) | (err >= owner_max[owner]))
        if not split.any():
            break
        mid = 0.5 * (lo[split] + hi[split])
        s_owner = owner[split]
        new_lo = np.concatenate([lo[split], mid])
        new_hi = np.concatenate([mid, hi[split]])
        new_owner = np.concatenate([s_owner, s_owner])
        nv, ne = _gk15(func, new_lo, new_hi, new_owner)
        keep = ~split
        owner = np.concatenate([owner[keep], new_owner])
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        val = np.concatenate([val[keep], nv])
        err = np.concatenate([err[keep], ne])

    total = np.bincount(owner, weights=val, minlength=m)
    total_err = np.bincount(owner, weights=err, minlength=m)
    npan = np.bincount(owner, minlength=m)
    converged = total_err <= np.maximum(atol, rtol * np.abs(total))
    return QuadResult(total, total_err, converged, npan)


def _gk15(func, lo, hi, owner):
    half = 0.5 * (hi - lo)
    centre = 0.5 * (hi + lo)
    x = centre[:, None] + half[:, None] * _NODES[None, :]
    fx = func(x, owner)
    k = (fx @ _WK) * half
    g = (fx @ _WG_FULL) * half
    return k, np.abs(k - g)


@lru_cache(maxsize=16)
def gauss_legendre(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def panel_nodes(edges, order=16):
    """Nodes and weights of composite Gauss-Legendre on ``edges``.

    ``edges`` may be 1-D (one set of panels) or 2-D with one row of panel
    edges per integral; returned arrays then carry a leading batch axis.
    """
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_legendre(order)
    lo = edges[..., :-1, None]
    hi = edges[..., 1:, None]
    half = 0.5 * (hi - lo)
    nodes = 0.5 * (hi + lo) + half * x
    weights = half * w
    shape = nodes.shape[:-2] + (-1,)
    return nodes.reshape(shape), weights.reshape(shape)


def panel_gl(func, edges, order=16):
    """Composite Gauss-Legendre integral of a vectorised ``func``."""
    nodes, weights = panel_nodes(edges, order)
    return np.sum(func(nodes) * weights, axis=-1)
