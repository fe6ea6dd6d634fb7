"""Gaussian disorder: coupling assignments, flips, sampling and quadrature.

Disorder points are processed in chunks.  A Monte Carlo measure draws
standard normals from a counter-based generator keyed by ``(seed,
sample_index)``, so any chunking or thread layout reproduces the same
stream.  A Gauss-Hermite measure walks the tensor grid
``J = mu + Delta * sqrt(2) * u`` with physicists' nodes ``u`` and weights
``w / sqrt(pi)``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from numpy.polynomial.hermite import hermgauss

from .model import InteractionModel

DEFAULT_NODES = 32
DEFAULT_MAX_DIM = 6
DEFAULT_BLOCKS = 64


@dataclass(frozen=True)
class CouplingAssignment:
    """Coupling values, batched along leading axes.

    ``J`` has trailing axis ``n_interactions``; ``J_tilde`` (independent copy,
    interior interactions only) has trailing axis ``n_interior`` or is None.
    """

    J: np.ndarray
    J_tilde: np.ndarray | None = None

    def centered(self, model: InteractionModel) -> np.ndarray:
        return self.J - model.mean

    def tilde_centered(self, model: InteractionModel) -> np.ndarray:
        if self.J_tilde is None:
            raise ValueError("assignment has no tilde couplings")
        return self.J_tilde - model.interior_mean

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return np.shape(self.J)[:-1]


def flip_full(c: CouplingAssignment, model: InteractionModel) -> CouplingAssignment:
    """Negate the interior couplings; remainder and tilde values are untouched."""
    J = np.array(c.J, dtype=float, copy=True)
    J[..., : model.n_interior] *= -1.0
    return CouplingAssignment(J, c.J_tilde)


def flip_centered(c: CouplingAssignment, model: InteractionModel) -> CouplingAssignment:
    """Negate only the centered part of interior couplings: ``J -> 2 mu - J``."""
    J = np.array(c.J, dtype=float, copy=True)
    m = model.n_interior
    J[..., :m] = 2.0 * model.interior_mean - J[..., :m]
    return CouplingAssignment(J, c.J_tilde)


@dataclass(frozen=True)
class QuenchedEstimate:
    value: float | np.ndarray
    error: float | np.ndarray
    method: str
    meta: dict = field(default_factory=dict)

    def __float__(self) -> float:
        return float(self.value)


@dataclass(frozen=True)
class DisorderMeasure:
    """How disorder expectations are evaluated.

    ``method`` is ``"monte-carlo"`` (needs ``seed`` and ``n_samples``) or
    ``"gauss-hermite"`` (tensor grid with ``nodes_per_dim`` nodes).
    """

    method: str = "gauss-hermite"
    seed: int | None = None
    n_samples: int = 0
    nodes_per_dim: int = DEFAULT_NODES
    max_dim: int = DEFAULT_MAX_DIM
    chunk_size: int = 1024
    n_blocks: int = DEFAULT_BLOCKS
    threads: int = 1

    def __post_init__(self):
        if self.method not in ("monte-carlo", "gauss-hermite"):
            raise ValueError(f"unknown disorder method {self.method!r}")
        if self.method == "monte-carlo":
            if self.seed is None:
                raise ValueError("monte-carlo measure needs a seed")
            if self.n_samples <= 0:
                raise ValueError("monte-carlo measure needs n_samples > 0")
        elif self.nodes_per_dim < 1:
            raise ValueError("nodes_per_dim must be positive")

    @classmethod
    def monte_carlo(cls, seed: int, n_samples: int, **kw) -> "DisorderMeasure":
        return cls("monte-carlo", seed=seed, n_samples=n_samples, **kw)

    @classmethod
    def gauss_hermite(cls, nodes_per_dim: int = DEFAULT_NODES, **kw) -> "DisorderMeasure":
        return cls("gauss-hermite", nodes_per_dim=nodes_per_dim, **kw)

    @property
    def is_exact(self) -> bool:
        return self.method == "gauss-hermite"

    def describe(self, dim: int | None = None) -> dict:
        if self.is_exact:
            d = {
                "method": self.method,
                "nodes_per_dim": self.nodes_per_dim,
                "affine_map": "J = mu + Delta*sqrt(2)*u, weights w/sqrt(pi) (physicists' Hermite)",
            }
            if dim is not None:
                d["dimension"] = dim
                d["n_points"] = self.nodes_per_dim**dim
            return d
        return {"method": self.method, "seed": self.seed, "n_samples": self.n_samples}


def disorder_dimension(model: InteractionModel, tilde: bool) -> int:
    return model.n_interactions + (model.n_interior if tilde else 0)


def standard_normals(seed: int, start: int, count: int, width: int) -> np.ndarray:
    """Rows ``start .. start+count-1`` of the sample stream for ``seed``."""
    out = np.empty((count, width))
    for r in range(count):
        bg = np.random.Philox(key=seed, counter=[0, 0, 0, start + r])
        out[r] = np.random.Generator(bg).standard_normal(width)
    return out


def assignment_from_normals(model: InteractionModel, z: np.ndarray, tilde: bool) -> CouplingAssignment:
    n = model.n_interactions
    J = model.mean + model.std * z[..., :n]
    Jt = None
    if tilde:
        m = model.n_interior
        Jt = model.interior_mean + model.std[:m] * z[..., n : n + m]
    return CouplingAssignment(J, Jt)


def _gh_rule(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    u, w = hermgauss(nodes)
    return np.sqrt(2.0) * u, w / np.sqrt(np.pi)


def sample_couplings(model: InteractionModel, measure: DisorderMeasure, tilde: bool = True,
                     start: int = 0, count: int | None = None) -> CouplingAssignment:
    """Draw Monte Carlo disorder samples ``start .. start+count-1``."""
    if measure.is_exact:
        raise ValueError("sampling needs a monte-carlo measure")
    count = measure.n_samples - start if count is None else count
    z = standard_normals(measure.seed, start, count, disorder_dimension(model, tilde))
    return assignment_from_normals(model, z, tilde)


def _chunks(model: InteractionModel, measure: DisorderMeasure, tilde: bool):
    """Yield ``(block, couplings, weights)``; MC weights are ones."""
    dim = disorder_dimension(model, tilde)
    if measure.is_exact:
        if dim > measure.max_dim:
            raise ValueError(f"quadrature dimension {dim} exceeds the cap {measure.max_dim}")
        x, w = _gh_rule(measure.nodes_per_dim)
        total = measure.nodes_per_dim**dim
        shape = (measure.nodes_per_dim,) * dim
        for lo in range(0, total, measure.chunk_size):
            idx = np.unravel_index(np.arange(lo, min(lo + measure.chunk_size, total)), shape)
            z = np.stack([x[i] for i in idx], axis=-1) if dim else np.zeros((1, 0))
            wt = np.prod(np.stack([w[i] for i in idx], axis=0), axis=0) if dim else np.ones(1)
            yield 0, assignment_from_normals(model, z, tilde), wt
        return
    n = measure.n_samples
    nb = min(measure.n_blocks, n)
    edges = np.linspace(0, n, nb + 1).astype(int)
    for b in range(nb):
        for lo in range(edges[b], edges[b + 1], measure.chunk_size):
            hi = min(lo + measure.chunk_size, edges[b + 1])
            z = standard_normals(measure.seed, lo, hi - lo, dim)
            yield b, assignment_from_normals(model, z, tilde), np.ones(hi - lo)


class Integral:
    """Blocked weighted sums of named per-disorder quantities.

    Quadrature runs use a single block; Monte Carlo runs keep one sum per
    block so that nonlinear combinations get delete-one-block jackknife
    errors.
    """

    def __init__(self, method: str, n_blocks: int):
        self.method = method
        self.n_blocks = n_blocks
        self.sums: dict[str, np.ndarray] = {}
        self._comp: dict[str, np.ndarray] = {}
        self.weights = np.zeros(n_blocks)
        self.counts = np.zeros(n_blocks, dtype=np.int64)

    def add(self, block: int, weight_total: float, count: int, sums: Mapping[str, np.ndarray]) -> None:
        self.weights[block] += weight_total
        self.counts[block] += count
        for k, v in sums.items():
            v = np.asarray(v, dtype=float)
            if k not in self.sums:
                self.sums[k] = np.zeros((self.n_blocks,) + v.shape)
                self._comp[k] = np.zeros_like(self.sums[k])
            # Kahan step per block
            y = v - self._comp[k][block]
            t = self.sums[k][block] + y
            self._comp[k][block] = (t - self.sums[k][block]) - y
            self.sums[k][block] = t

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def means(self, drop: int | None = None) -> dict[str, np.ndarray]:
        keep = np.ones(self.n_blocks, bool)
        if drop is not None:
            keep[drop] = False
        wt = self.weights[keep].sum()
        return {k: v[keep].sum(axis=0) / wt for k, v in self.sums.items()}

    def estimate(self, combine: Callable[[dict], Mapping[str, np.ndarray]]) -> tuple[dict, dict]:
        """Apply ``combine`` to the means; return ``(values, errors)``."""
        full = {k: np.asarray(v, dtype=float) for k, v in combine(self.means()).items()}
        nb = int(np.count_nonzero(self.counts))
        if self.method != "monte-carlo" or nb < 2:
            return full, {k: np.zeros_like(v) for k, v in full.items()}
        reps = [combine(self.means(drop=b)) for b in range(self.n_blocks) if self.counts[b]]
        err = {}
        for k in full:
            r = np.stack([np.asarray(x[k], dtype=float) for x in reps])
            err[k] = np.sqrt((nb - 1) / nb * np.sum((r - r.mean(axis=0)) ** 2, axis=0))
        return full, err


def integrate(
    model: InteractionModel,
    measure: DisorderMeasure,
    integrand: Callable[[CouplingAssignment, np.ndarray], Mapping[str, np.ndarray]],
    tilde: bool = True,
) -> Integral:
    """Accumulate ``integrand(couplings, weights)`` over the measure.

    ``integrand`` returns, per chunk, weighted sums over the chunk (weights
    are the quadrature weights, or ones for Monte Carlo).
    """
    n_blocks = 1 if measure.is_exact else min(measure.n_blocks, measure.n_samples)
    acc = Integral(measure.method, n_blocks)

    def work(item):
        block, c, w = item
        return block, float(math.fsum(w)), len(w), integrand(c, w)

    chunks = _chunks(model, measure, tilde)
    if measure.threads > 1:
        with ThreadPoolExecutor(measure.threads) as pool:
            results = pool.map(work, chunks)
            for r in results:
                acc.add(*r)
    else:
        for item in chunks:
            acc.add(*work(item))
    return acc


def disorder_expectation(
    f: Callable[[CouplingAssignment], np.ndarray],
    model: InteractionModel,
    measure: DisorderMeasure,
    tilde: bool = True,
) -> QuenchedEstimate:
    """``Av(f)``; Monte Carlo error is the sample standard deviation over ``sqrt(n)``."""

    def integrand(c, w):
        v = np.asarray(f(c), dtype=float)
        ww = w.reshape((-1,) + (1,) * (v.ndim - 1))
        return {"f": np.sum(ww * v, axis=0), "f2": np.sum(ww * v * v, axis=0)}

    acc = integrate(model, measure, integrand, tilde)
    m = acc.means()
    dim = disorder_dimension(model, tilde)
    if measure.is_exact:
        return QuenchedEstimate(_squeeze(m["f"]), _squeeze(np.zeros_like(m["f"])), "quadrature",
                                measure.describe(dim))
    n = acc.n
    var = np.maximum(m["f2"] - m["f"] ** 2, 0.0) * n / max(n - 1, 1)
    return QuenchedEstimate(_squeeze(m["f"]), _squeeze(np.sqrt(var / n)), "monte-carlo", measure.describe(dim))


def _squeeze(a: np.ndarray):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


def ibp_residual(
    model: InteractionModel,
    measure: DisorderMeasure,
    i: int,
    psi: Callable[[np.ndarray], np.ndarray],
    dpsi: Callable[[np.ndarray], np.ndarray] | None = None,
) -> float:
    """Gaussian integration-by-parts defect for coupling ``i``.

    Returns ``|Av(x_i psi) - Av(x_i) Av(psi) - Delta_i^2 Av(d psi / d x_i)|``
    on the couplings ``J`` (independent, so only the diagonal covariance
    survives).  ``psi`` and ``dpsi`` map an ``(K, n_interactions)`` array to
    ``(K,)``; without ``dpsi`` a central difference with step
    ``eps**(1/3) * max(1, |x_i|)`` is used.
    """
    if not measure.is_exact:
        raise ValueError("ibp_residual needs a quadrature measure")

    def deriv(J):
        if dpsi is not None:
            return dpsi(J)
        h = np.finfo(float).eps ** (1.0 / 3.0) * np.maximum(1.0, np.abs(J[:, i]))
        up, dn = J.copy(), J.copy()
        up[:, i] += h
        dn[:, i] -= h
        return (psi(up) - psi(dn)) / (2.0 * h)

    def integrand(c, w):
        J = c.J
        p = psi(J)
        return {
            "xpsi": w @ (J[:, i] * p),
            "x": w @ J[:, i],
            "psi": w @ p,
            "dpsi": w @ deriv(J),
        }

    m = integrate(model, measure, integrand, tilde=False).means()
    rhs = m["x"] * m["psi"] + model.variance[i] * m["dpsi"]
    return float(abs(m["xpsi"] - rhs))
