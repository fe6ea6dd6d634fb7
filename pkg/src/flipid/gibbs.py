"""Exact finite-volume Gibbs states by state enumeration.

Energies of all ``2**N`` configurations are produced in Gray-code order: each
successive state differs by one spin, so the energy changes by
``2 * sum_{X ni i} F_X sigma_X`` over the interactions touching the flipped
site.  The ``"matrix"`` method recomputes every energy from the parity table
and serves as a cross-check.

For a fixed disorder realization every multi-replica average factorizes
into one-replica moments ``omega(sigma_X)`` and ``omega(sigma_X sigma_Y)``
over interior interactions; :class:`ReplicaMoments` caches them.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .disorder import CouplingAssignment, DisorderMeasure, QuenchedEstimate, disorder_expectation
from .interpolation import get_path
from .model import InteractionModel

_MAX_BLOCK = 1 << 23  # rows * states per enumeration pass
_RESYNC = 1024


@lru_cache(maxsize=64)
def gray_order(n_sites: int) -> np.ndarray:
    k = np.arange(2**n_sites, dtype=np.int64)
    return k ^ (k >> 1)


@lru_cache(maxsize=32)
def _tables(model: InteractionModel, method: str):
    """Parity table in enumeration order, its interior pair products and ``B``."""
    model.check_enumerable()
    P = model.parity_table
    if method == "gray":
        P = P[gray_order(model.n_sites)]
    m = model.n_interior
    Pi = P[:, :m]
    pairs = (Pi[:, :, None] * Pi[:, None, :]).reshape(len(P), m * m)
    B = -(Pi @ model.interior_mean)
    return P, Pi, pairs, B


def state_energies(model: InteractionModel, fields: np.ndarray, method: str = "gray") -> np.ndarray:
    """Energies ``-sum_X F_X sigma_X`` for every state, shape ``(K, 2**N)``.

    Column order is Gray-code order for ``method="gray"`` and natural bitmask
    order for ``method="matrix"``.
    """
    F = np.atleast_2d(np.asarray(fields, dtype=float))
    P = _tables(model, method)[0]
    if method == "matrix":
        return -(F @ P.T)
    if method != "gray":
        raise ValueError(f"unknown enumeration method {method!r}")
    S = len(P)
    inc = model.incidence()
    local = [F[:, cols] for cols in inc]
    E = np.empty((S, F.shape[0]))
    E[0] = -(F @ P[0])
    for k in range(1, S):
        i = (k & -k).bit_length() - 1
        if k % _RESYNC == 0:
            E[k] = -(F @ P[k])
        else:
            E[k] = E[k - 1] + 2.0 * (local[i] @ P[k - 1, inc[i]])
    return E.T


def _boltzmann(model, F, beta, method):
    a = -beta * state_energies(model, F, method)
    shift = a.max(axis=1, keepdims=True)
    w = np.exp(a - shift)
    z = w.sum(axis=1)
    return w / z[:, None], np.log(z) + shift[:, 0]


def _rows(F: np.ndarray, n_states: int):
    step = max(1, _MAX_BLOCK // n_states)
    for lo in range(0, F.shape[0], step):
        yield slice(lo, lo + step)


def log_partition(model: InteractionModel, fields, beta: float, method: str = "gray") -> np.ndarray:
    """``ln sum_sigma exp(beta sum_X F_X sigma_X)`` with a max-shift; batched over leading axes."""
    F = np.asarray(fields, dtype=float)
    batch = F.shape[:-1]
    F2 = F.reshape(-1, model.n_interactions)
    out = np.empty(F2.shape[0])
    for sl in _rows(F2, 2**model.n_sites):
        out[sl] = _boltzmann(model, F2[sl], beta, method)[1]
    return out.reshape(batch)


def pressure(model: InteractionModel, couplings: CouplingAssignment, path, t, beta: float,
             method: str = "gray"):
    """Pressure ``ln Z(t)`` of the interpolated Hamiltonian."""
    return log_partition(model, get_path(path).fields(model, couplings, t), beta, method)


@dataclass
class ReplicaMoments:
    """One-replica moments for a batch of (disorder, t) points.

    ``one[..., X] = omega(sigma_X)``, ``two[..., X, Y] = omega(sigma_X sigma_Y)``
    over interior interactions; ``mag = omega(B)``, ``mag_one[..., X] =
    omega(B sigma_X)``, ``mag_sq = omega(B**2)``.
    """

    log_z: np.ndarray
    one: np.ndarray
    two: np.ndarray
    mag: np.ndarray
    mag_one: np.ndarray
    mag_sq: np.ndarray
    observables: dict = field(default_factory=dict)

    @property
    def pressure(self) -> np.ndarray:
        return self.log_z

    @property
    def z(self) -> np.ndarray:
        return np.exp(self.log_z)


def gibbs_moments(model: InteractionModel, fields, beta: float, observables: dict | None = None,
                  method: str = "gray") -> ReplicaMoments:
    """All registered one-replica moments in a single enumeration pass.

    ``observables`` maps names to per-state value vectors in natural bitmask
    order (functions of the parities ``sigma_X``).
    """
    F = np.asarray(fields, dtype=float)
    batch = F.shape[:-1]
    F2 = F.reshape(-1, model.n_interactions)
    K, m = F2.shape[0], model.n_interior
    _, Pi, pairs, B = _tables(model, method)
    obs = {}
    if observables:
        order = gray_order(model.n_sites) if method == "gray" else slice(None)
        obs = {k: np.asarray(v, dtype=float)[order] for k, v in observables.items()}
    log_z = np.empty(K)
    one = np.empty((K, m))
    two = np.empty((K, m * m))
    mag = np.empty(K)
    mag_one = np.empty((K, m))
    mag_sq = np.empty(K)
    vals = {k: np.empty(K) for k in obs}
    PiB = Pi * B[:, None]
    for sl in _rows(F2, 2**model.n_sites):
        p, log_z[sl] = _boltzmann(model, F2[sl], beta, method)
        one[sl] = p @ Pi
        two[sl] = p @ pairs
        mag[sl] = p @ B
        mag_one[sl] = p @ PiB
        mag_sq[sl] = p @ (B * B)
        for k, v in obs.items():
            vals[k][sl] = p @ v
    return ReplicaMoments(
        log_z.reshape(batch),
        one.reshape(batch + (m,)),
        two.reshape(batch + (m, m)),
        mag.reshape(batch),
        mag_one.reshape(batch + (m,)),
        mag_sq.reshape(batch),
        {k: v.reshape(batch) for k, v in vals.items()},
    )


def replica_moments(model: InteractionModel, couplings: CouplingAssignment, path, t, beta: float,
                    observables: dict | None = None, method: str = "gray") -> ReplicaMoments:
    """Moments of the random state ``omega_t`` for the given disorder."""
    F = get_path(path).fields(model, couplings, t)
    return gibbs_moments(model, F, beta, observables, method)


def dump_moments_csv(moments: ReplicaMoments, path) -> None:
    """Write moments as rows ``(point, kind, X, Y, value)`` for debugging."""
    one = np.atleast_2d(moments.one)
    two = moments.two.reshape((-1,) + moments.two.shape[-2:])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["point", "kind", "X", "Y", "value"])
        for k in range(one.shape[0]):
            w.writerow([k, "log_z", "", "", repr(float(np.ravel(moments.log_z)[k]))])
            w.writerow([k, "mag", "", "", repr(float(np.ravel(moments.mag)[k]))])
            for x in range(one.shape[1]):
                w.writerow([k, "one", x, "", repr(float(one[k, x]))])
                for y in range(one.shape[1]):
                    w.writerow([k, "two", x, y, repr(float(two[k, x, y]))])


# ---------------------------------------------------------------------------
# multi-replica products
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"([CcMmB])_?\{?(\d)\s*,?\s*(\d)?\}?(\^2)?")


@dataclass(frozen=True)
class Factor:
    kind: str  # "C", "c", "M", "m"
    replicas: tuple[int, ...]


def parse_product(spec: str) -> list[Factor]:
    """Parse e.g. ``"C12*C23"``, ``"M_1 C_{1,2}"``, ``"c12^2"`` into factors."""
    factors = []
    rest = spec.replace("*", " ").strip()
    pos = 0
    while pos < len(rest):
        if rest[pos].isspace():
            pos += 1
            continue
        mt = _TOKEN.match(rest, pos)
        if not mt:
            raise ValueError(f"unknown observable at {rest[pos:]!r}")
        kind, a, b, sq = mt.groups()
        kind = "M" if kind == "B" else kind
        if kind in "Cc":
            if b is None:
                raise ValueError(f"{kind} needs two replica indices")
            f = Factor(kind, (int(a), int(b)))
        else:
            if b is not None:
                raise ValueError(f"{kind} takes one replica index")
            f = Factor(kind, (int(a),))
        factors.extend([f, f] if sq else [f])
        pos = mt.end()
    return factors


def _factor_weights(model: InteractionModel, f: Factor) -> np.ndarray:
    if f.kind in "Cc":
        w = np.asarray(model.interior_variance, dtype=float)
    else:
        w = -np.asarray(model.interior_mean, dtype=float)
    if f.kind in "cm":
        w = w / model.subregion_size
    return w


def assemble_product(model: InteractionModel, factors: list[Factor], moments: list[ReplicaMoments]):
    """``omega_{t_1,...,t_R}(product of factors)`` from per-replica moments.

    ``moments[r - 1]`` holds the moments of replica ``r``.  At most two
    factors are supported; replicas are independent given the disorder, so
    each replica contributes ``1``, ``omega(sigma_X)``, ``omega(sigma_Y)`` or
    ``omega(sigma_X sigma_Y)``.
    """
    needed = max((r for f in factors for r in f.replicas), default=0)
    if needed > len(moments):
        raise ValueError(f"replica {needed} has no parameter")
    if len(factors) > 2:
        raise ValueError("products of more than two observables are not supported")
    batch = np.shape(moments[0].log_z)
    if not factors:
        return np.ones(batch)
    if model.n_interior == 0:
        return np.zeros(batch)
    ws = [_factor_weights(model, f) for f in factors]
    exps = [[f.replicas.count(r + 1) % 2 for f in factors] for r in range(len(moments))]
    if len(factors) == 1:
        acc = np.broadcast_to(ws[0], batch + ws[0].shape).copy()
        for r, (e,) in enumerate(exps):
            if e:
                acc = acc * moments[r].one
        return acc.sum(axis=-1)
    acc = np.broadcast_to(ws[0][:, None] * ws[1][None, :], batch + (len(ws[0]),) * 2).copy()
    for r, (e1, e2) in enumerate(exps):
        mom = moments[r]
        if e1 and e2:
            acc = acc * mom.two
        elif e1:
            acc = acc * mom.one[..., :, None]
        elif e2:
            acc = acc * mom.one[..., None, :]
    return acc.sum(axis=(-2, -1))


def multi_replica_average(model: InteractionModel, measure: DisorderMeasure, path, spec: str,
                          params, beta: float, method: str = "gray") -> QuenchedEstimate:
    """Quenched average of a replica product, e.g. ``<C12 C23>_{t,s,t}``.

    ``params[r - 1]`` is the interpolation parameter of replica ``r``.
    """
    p = get_path(path)
    factors = parse_product(spec)
    params = [float(x) for x in params]
    needed = max((r for f in factors for r in f.replicas), default=0)
    if needed > len(params):
        raise ValueError(f"replica {needed} has no parameter")
    if any(f.kind in "cm" for f in factors) and model.subregion_size == 0:
        raise ValueError("normalized observables need a nonempty subregion")
    distinct = sorted(set(params))

    def f(c):
        cache = {t: replica_moments(model, c, p, t, beta, method=method) for t in distinct}
        return assemble_product(model, factors, [cache[t] for t in params])

    est = disorder_expectation(f, model, measure, tilde=p.needs_tilde)
    est.meta.update({"spec": spec, "params": params, "path": p.name, "beta": beta})
    return est
