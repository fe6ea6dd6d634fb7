"""Interpolation paths between a Hamiltonian and its flipped version.

Every path is expressed through *effective fields* ``F_X(t)`` such that the
interpolated energy is ``-sum_X F_X(t) sigma_X``:

* ``TrigF``:  interior ``cos t J + sin t J~``, on ``[0, pi]``;
* ``TrigF0``: interior ``cos t J0 + sin t J~0 + mu``, on ``[0, pi]``;
* ``Linear``: interior ``t J``, on ``[-1, 1]``.

The remainder couplings are left as they are on every path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from .disorder import CouplingAssignment, flip_centered, flip_full
from .model import InteractionModel, parities

DEFAULT_TS_NODES = 48
_DOMAIN_TOL = 1e-12


@dataclass(frozen=True)
class InterpolationPath:
    name: str
    domain: tuple[float, float]
    start: float
    end: float
    flip: str
    needs_tilde: bool

    def check(self, t) -> None:
        t = np.asarray(t)
        lo, hi = self.domain
        if np.any(t < lo - _DOMAIN_TOL) or np.any(t > hi + _DOMAIN_TOL):
            raise ValueError(f"t outside the {self.name} domain {self.domain}")

    def fields(self, model: InteractionModel, couplings: CouplingAssignment, t) -> np.ndarray:
        """Effective fields, shape ``broadcast(batch, t.shape) + (n_interactions,)``.

        ``t`` may be a scalar or an array broadcastable against the coupling
        batch shape.
        """
        self.check(t)
        t = np.asarray(t, dtype=float)[..., None]
        m = model.n_interior
        J = np.asarray(couplings.J, dtype=float)
        shape = np.broadcast_shapes(J.shape, t.shape[:-1] + (J.shape[-1],))
        F = np.array(np.broadcast_to(J, shape), dtype=float)
        if self.name == "Linear":
            F[..., :m] = t * J[..., :m]
            return F
        if couplings.J_tilde is None:
            raise ValueError(f"path {self.name} needs tilde couplings")
        Jt = np.asarray(couplings.J_tilde, dtype=float)
        c, s = np.cos(t), np.sin(t)
        if self.name == "TrigF":
            F[..., :m] = c * J[..., :m] + s * Jt
        else:
            mu = model.interior_mean
            F[..., :m] = c * (J[..., :m] - mu) + s * (Jt - mu) + mu
        return F


PATHS = {
    "TrigF": InterpolationPath("TrigF", (0.0, np.pi), 0.0, np.pi, "F", True),
    "TrigF0": InterpolationPath("TrigF0", (0.0, np.pi), 0.0, np.pi, "F0", True),
    "Linear": InterpolationPath("Linear", (-1.0, 1.0), 1.0, -1.0, "F", False),
}


def get_path(path) -> InterpolationPath:
    if isinstance(path, InterpolationPath):
        return path
    try:
        return PATHS[path]
    except KeyError:
        raise ValueError(f"unknown path {path!r}; expected one of {sorted(PATHS)}") from None


def interp_hamiltonian(path, t, model: InteractionModel, couplings: CouplingAssignment, sigma):
    """Interpolated energy of configuration(s) ``sigma`` at parameter ``t``."""
    F = get_path(path).fields(model, couplings, t)
    return -np.sum(F * parities(model, sigma), axis=-1)


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


def k1(t, s):
    return np.cos(np.subtract(t, s))


def k2(t, s):
    return np.sin(np.subtract(t, s)) ** 2


def h1(t, s):
    return (np.cos(t) - np.sin(t)) * (np.cos(s) - np.sin(s))


def h2(t, s):
    return np.sin(np.subtract(t, s)) * (np.cos(t) - np.sin(t))


KERNELS: dict[str, Callable] = {"k1": k1, "k2": k2, "h1": h1, "h2": h2}


def kernel_eval(name: str, t, s):
    try:
        return KERNELS[name](t, s)
    except KeyError:
        raise ValueError(f"unknown kernel {name!r}") from None


# ---------------------------------------------------------------------------
# quadrature in (t, s)
# ---------------------------------------------------------------------------


def gauss_legendre(domain: tuple[float, float], nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped to ``domain``."""
    if nodes < 1:
        raise ValueError("need at least one node")
    x, w = leggauss(nodes)
    a, b = domain
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def quadrature_2d(f: Callable, domain, nodes: int = DEFAULT_TS_NODES, report: bool = False):
    """Tensor Gauss-Legendre integral of ``f(t, s)`` over ``domain x domain``.

    ``f`` receives broadcast grids ``t[:, None]`` and ``s[None, :]``.  With
    ``report=True`` also returns the change under node doubling.
    """
    if nodes < 2:
        raise ValueError("need at least two nodes per axis")

    def once(n):
        t, w = gauss_legendre(domain, n)
        vals = np.broadcast_to(np.asarray(f(t[:, None], t[None, :]), dtype=float), (n, n))
        return float(w @ vals @ w)

    v = once(nodes)
    if report:
        return v, abs(once(2 * nodes) - v)
    return v


# ---------------------------------------------------------------------------
# pressure differences
# ---------------------------------------------------------------------------


def pressure_difference(path, model: InteractionModel, couplings: CouplingAssignment, beta: float,
                        route: str = "path"):
    """``P(start) - P(end)`` along the path: ``X`` for flip F, ``X0`` for flip F0.

    ``route="direct"`` evaluates the two pressures on the original and
    flipped couplings instead, without going through the path.
    """
    from .gibbs import log_partition

    p = get_path(path)
    if route == "path":
        a = log_partition(model, p.fields(model, couplings, p.start), beta)
        b = log_partition(model, p.fields(model, couplings, p.end), beta)
        return a - b
    if route != "direct":
        raise ValueError(f"unknown route {route!r}")
    flipped = flip_centered(couplings, model) if p.flip == "F0" else flip_full(couplings, model)
    return log_partition(model, couplings.J, beta) - log_partition(model, flipped.J, beta)
