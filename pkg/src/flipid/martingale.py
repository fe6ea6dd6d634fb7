"""Martingale decomposition of flip pressure differences.

Couplings are integrated one at a time in storage order (interior
interactions first).  With ``A_k = Av_{<=k}(X)`` the partial average over
the first ``k`` couplings, ``A_0 = X`` and ``A_N = Av(X)``, the differences
``Psi_k = A_k - A_{k+1}`` are orthogonal and ``V(X) = sum_k Av(Psi_k^2)``.

Everything is evaluated on the tensor Gauss-Hermite grid, where partial
averages are exact contractions along leading axes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .disorder import DisorderMeasure, _gh_rule, flip_centered, flip_full, CouplingAssignment
from .gibbs import log_partition
from .model import InteractionModel, stability_constant

QUARTIC_COEFFICIENT = 22.0 / 3.0
ALTERNATE_QUARTIC_COEFFICIENT = 25.0 / 3.0
MAX_GRID_POINTS = 1 << 22


@dataclass
class MartingaleDecomposition:
    """Partial averages and martingale differences on a quadrature grid.

    ``A[k]`` has shape ``(n,) * (N - k)``: a function of couplings ``k+1 .. N``.
    ``psi_sq[k] = Av(Psi_k^2)`` and ``cross[k, j] = Av(Psi_k Psi_j)``.
    """

    flip: str
    ordering: list[tuple[int, ...]]
    n_interior: int
    A: list[np.ndarray]
    psi_sq: np.ndarray
    cross: np.ndarray
    mean: float
    variance: float
    telescoping_error: float
    meta: dict = field(default_factory=dict)

    @property
    def n_couplings(self) -> int:
        return len(self.ordering)

    def a_stats(self, k: int, weights: np.ndarray) -> tuple[float, float]:
        """``(Av(A_k), max |A_k|)`` over the grid."""
        a = self.A[k]
        return float(_contract_all(a, weights)), float(np.max(np.abs(a)))

    def orthogonality_error(self) -> float:
        off = self.cross - np.diag(np.diag(self.cross))
        return float(np.max(np.abs(off))) if off.size else 0.0

    def decomposition_error(self) -> float:
        return abs(math.fsum(self.psi_sq) - self.variance)

    def to_dict(self) -> dict:
        return {
            "flip": self.flip,
            "ordering": [list(x) for x in self.ordering],
            "n_interior": self.n_interior,
            "mean": self.mean,
            "variance": self.variance,
            "psi_sq": self.psi_sq.tolist(),
            "sum_psi_sq": math.fsum(self.psi_sq),
            "orthogonality_error": self.orthogonality_error(),
            "decomposition_error": self.decomposition_error(),
            "telescoping_error": self.telescoping_error,
            "a_max": [float(np.max(np.abs(a))) for a in self.A],
            "meta": self.meta,
        }

    def to_csv(self, path) -> None:
        """Rows ``k, Av(A_k), max|A_k|, Av(Psi_k^2)`` (the last row has no ``Psi``)."""
        w1 = self.meta["weights_1d"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "mean_A_k", "max_abs_A_k", "psi_sq"])
            for k in range(len(self.A)):
                avg, mx = self.a_stats(k, np.asarray(w1))
                ps = repr(float(self.psi_sq[k])) if k < len(self.psi_sq) else ""
                w.writerow([k, repr(avg), repr(mx), ps])


def _contract_first(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.tensordot(w, a, axes=(0, 0))


def _contract_all(a: np.ndarray, w: np.ndarray) -> float:
    while a.ndim:
        a = _contract_first(a, w)
    return float(a)


def flip_difference(model: InteractionModel, J: np.ndarray, beta: float, flip: str) -> np.ndarray:
    """``X0`` (flip ``"F0"``) or ``X`` (flip ``"F"``) for couplings ``J``."""
    c = CouplingAssignment(J)
    if flip == "F0":
        flipped = flip_centered(c, model)
    elif flip == "F":
        flipped = flip_full(c, model)
    else:
        raise ValueError(f"unknown flip {flip!r}")
    return log_partition(model, J, beta) - log_partition(model, flipped.J, beta)


def decompose(model: InteractionModel, measure: DisorderMeasure, beta: float,
              flip: str = "F0") -> MartingaleDecomposition:
    """Martingale decomposition of ``X0`` or ``X`` over the couplings in storage order.

    Needs a Gauss-Hermite measure; the grid has ``nodes_per_dim ** N`` points.
    """
    if not measure.is_exact:
        raise ValueError("the martingale decomposition needs a gauss-hermite measure")
    N = model.n_interactions
    if N > measure.max_dim:
        raise ValueError(f"quadrature dimension {N} exceeds the cap {measure.max_dim}")
    n = measure.nodes_per_dim
    if n**N > MAX_GRID_POINTS:
        raise ValueError(f"grid of {n}**{N} points is too large; lower nodes_per_dim")
    x, w = _gh_rule(n)
    grids = np.meshgrid(*([x] * N), indexing="ij")
    z = np.stack([g.ravel() for g in grids], axis=-1) if N else np.zeros((1, 0))
    J = model.mean + model.std * z
    X = flip_difference(model, J, beta, flip).reshape((n,) * N)

    A = [X]
    for _ in range(N):
        A.append(_contract_first(A[-1], w))
    mean = float(A[-1])
    # Psi_k as a full-grid array (constant along the first k axes)
    psi = [np.broadcast_to(_lift(A[k], N) - _lift(A[k + 1], N), (n,) * N) for k in range(N)]
    W = _full_weights(w, N)
    cross = np.array([[float(np.sum(W * psi[k] * psi[j])) for j in range(N)] for k in range(N)])
    psi_sq = np.diag(cross).copy() if N else np.zeros(0)
    variance = float(np.sum(W * (X - mean) ** 2))
    tele = float(np.max(np.abs(sum(psi, np.zeros((n,) * N)) - (X - mean)))) if N else 0.0
    meta = {
        "nodes_per_dim": n,
        "beta": beta,
        "weights_1d": w.tolist(),
        "affine_map": "J = mu + Delta*sqrt(2)*u, weights w/sqrt(pi)",
    }
    return MartingaleDecomposition(flip, [tuple(s) for s in _site_tuples(model)], model.n_interior,
                                   A, psi_sq, cross, mean, variance, tele, meta)


def _lift(a: np.ndarray, N: int) -> np.ndarray:
    """View a function of the last ``a.ndim`` couplings on the full grid."""
    return a.reshape((1,) * (N - a.ndim) + a.shape)


def _full_weights(w: np.ndarray, N: int) -> np.ndarray:
    W = np.ones(())
    for _ in range(N):
        W = np.multiply.outer(W, w)
    return W


def _site_tuples(model: InteractionModel):
    return [tuple(sorted(it.sites)) for it in model.interactions]


@dataclass
class TailReport:
    flip: str
    n_interior: int
    tail_max: list[float]
    vanishes: bool
    expected_to_vanish: bool
    tol: float

    @property
    def passed(self) -> bool:
        """The tail vanishes wherever symmetry says it must; otherwise the values are informational."""
        return self.vanishes or not self.expected_to_vanish

    def to_dict(self) -> dict:
        return {"flip": self.flip, "n_interior": self.n_interior, "tail_max": self.tail_max,
                "vanishes": self.vanishes, "expected_to_vanish": self.expected_to_vanish,
                "tol": self.tol, "passed": self.passed}


def tail_vanishing_check(dec: MartingaleDecomposition, M: int | None = None, tol: float = 1e-8,
                         interior_means=None) -> TailReport:
    """Check ``A_k = 0`` for ``k >= M``.

    Under the centered flip the tail always vanishes.  Under the full flip
    it must vanish when all interior means are zero (then the two flips
    agree); pass ``interior_means`` so that expectation can be formed.  With
    nonzero means the tail is generally nonzero and is only reported (it
    still vanishes at ``beta = 0`` or when the flip is a gauge symmetry).
    """
    M = dec.n_interior if M is None else M
    tail = [float(np.max(np.abs(a))) for a in dec.A[M:]]
    vanishes = all(v < tol for v in tail)
    if dec.flip == "F0":
        expected = True
    else:
        expected = interior_means is not None and not np.any(np.asarray(interior_means) != 0)
    return TailReport(dec.flip, M, tail, vanishes, expected, tol)


def r0(beta: float, c_bar: float, coefficient: float = QUARTIC_COEFFICIENT) -> float:
    """``beta^2 c + coefficient * beta^4 c^2``."""
    return beta**2 * c_bar + coefficient * beta**4 * c_bar**2


@dataclass
class BoundReport:
    flip: str
    variance: float
    error: float
    bound: float
    rate: float
    c_bar: float
    volume: int
    n_se: float
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.variance <= self.bound + self.n_se * self.error

    def to_dict(self) -> dict:
        return {"flip": self.flip, "variance": self.variance, "error": self.error, "bound": self.bound,
                "rate": self.rate, "c_bar": self.c_bar, "volume": self.volume, "n_se": self.n_se,
                "passed": self.passed, "meta": self.meta}


def bound_check(model: InteractionModel, beta: float, variance: float, flip: str = "F0",
                error: float = 0.0, n_se: float = 3.0, rate: float | None = None) -> BoundReport:
    """Compare a variance with the self-averaging bound.

    Centered flip: ``r0(beta) |subregion|`` with ``c`` the larger of the
    full-volume and subregion stability densities.  Full flip: ``r(beta)
    |volume|`` where ``r`` defaults to the same functional form with the
    full-volume constant; pass ``rate`` to override it.
    """
    sc = stability_constant(model)
    if flip == "F0":
        c_bar = sc.witness
        volume = model.subregion_size
    elif flip == "F":
        c_bar = sc.full
        volume = model.n_sites
    else:
        raise ValueError(f"unknown flip {flip!r}")
    r = r0(beta, c_bar) if rate is None else float(rate)
    meta = {
        "quartic_coefficient": QUARTIC_COEFFICIENT,
        "alternate_quartic_coefficient": ALTERNATE_QUARTIC_COEFFICIENT,
        "bound_with_alternate": r0(beta, c_bar, ALTERNATE_QUARTIC_COEFFICIENT) * volume,
        "rate_source": "default" if rate is None else "user",
    }
    return BoundReport(flip, float(variance), float(error), r * volume, r, c_bar, volume, n_se, meta)
