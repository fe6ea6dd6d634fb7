"""Finite-volume Gaussian interaction models.

A model is a finite family of interactions ``(X, mu_X, Delta^2_X)`` over ``N``
Ising spins, together with a distinguished subregion.  Interactions whose
site set lies inside the subregion are *interior*; all the others form the
*remainder*.  Interactions are stored interior first (each block sorted by
site tuple), so ``model.mean[:model.n_interior]`` are the interior means.

Spin configurations are bitmasks: bit ``b`` set means ``sigma_b = -1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

DEFAULT_MAX_SITES = 20


class ModelError(ValueError):
    """Raised for invalid model descriptions."""


@dataclass(frozen=True)
class Interaction:
    sites: tuple[int, ...]
    mean: float
    variance: float


@dataclass(frozen=True, eq=False)
class InteractionModel:
    """Immutable interaction family with its subregion.

    Use :func:`build_model` or the ``chain``/``ea2d``/``explicit`` builders
    rather than calling the constructor with unsorted interactions.
    """

    n_sites: int
    interactions: tuple[Interaction, ...]
    subregion: frozenset[int]
    lattice: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_sites < 1:
            raise ModelError("need at least one site")
        if not self.subregion <= set(range(self.n_sites)):
            raise ModelError(f"subregion {sorted(self.subregion)} is not inside the spin set")
        seen = set()
        for it in self.interactions:
            if not it.sites:
                raise ModelError("empty interaction set is excluded")
            if len(set(it.sites)) != len(it.sites):
                raise ModelError(f"repeated site in interaction {it.sites}")
            if min(it.sites) < 0 or max(it.sites) >= self.n_sites:
                raise ModelError(f"interaction {it.sites} outside the spin set")
            if it.variance < 0:
                raise ModelError(f"negative variance for {it.sites}")
            key = frozenset(it.sites)
            if key in seen:
                raise ModelError(f"duplicate interaction {tuple(sorted(key))}")
            seen.add(key)
        flags = [set(it.sites) <= self.subregion for it in self.interactions]
        m = sum(flags)
        if flags != [True] * m + [False] * (len(flags) - m):
            raise ModelError("interactions must be ordered interior first")

    # -- sizes ---------------------------------------------------------------
    @property
    def n_interactions(self) -> int:
        return len(self.interactions)

    @cached_property
    def n_interior(self) -> int:
        return sum(set(it.sites) <= self.subregion for it in self.interactions)

    @property
    def n_remainder(self) -> int:
        return self.n_interactions - self.n_interior

    @property
    def subregion_size(self) -> int:
        return len(self.subregion)

    # -- parameter vectors ---------------------------------------------------
    @cached_property
    def mean(self) -> np.ndarray:
        a = np.array([it.mean for it in self.interactions], dtype=float)
        a.setflags(write=False)
        return a

    @cached_property
    def variance(self) -> np.ndarray:
        a = np.array([it.variance for it in self.interactions], dtype=float)
        a.setflags(write=False)
        return a

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)

    @property
    def interior_mean(self) -> np.ndarray:
        return self.mean[: self.n_interior]

    @property
    def interior_variance(self) -> np.ndarray:
        return self.variance[: self.n_interior]

    @cached_property
    def site_masks(self) -> np.ndarray:
        """Bitmask of each interaction's site set."""
        return np.array([sum(1 << i for i in it.sites) for it in self.interactions], dtype=np.int64)

    def incidence(self) -> list[np.ndarray]:
        """Indices of the interactions containing each site."""
        return [
            np.array([k for k, it in enumerate(self.interactions) if i in it.sites], dtype=np.intp)
            for i in range(self.n_sites)
        ]

    def with_interior_means(self, means: Sequence[float]) -> "InteractionModel":
        """Copy of the model with the interior means replaced."""
        means = list(means)
        if len(means) != self.n_interior:
            raise ModelError("need one mean per interior interaction")
        new = [
            Interaction(it.sites, float(means[k]), it.variance) if k < self.n_interior else it
            for k, it in enumerate(self.interactions)
        ]
        return InteractionModel(self.n_sites, tuple(new), self.subregion, dict(self.lattice))

    # -- enumeration tables --------------------------------------------------
    def check_enumerable(self, max_sites: int = DEFAULT_MAX_SITES) -> None:
        if self.n_sites > max_sites:
            raise ModelError(f"{self.n_sites} sites exceed the enumeration cap {max_sites}")

    @cached_property
    def parity_table(self) -> np.ndarray:
        """``sigma_X`` for every state (rows, natural bitmask order) and interaction."""
        self.check_enumerable()
        return parities(self, np.arange(2**self.n_sites, dtype=np.int64))

    def __repr__(self) -> str:
        return (
            f"InteractionModel(n_sites={self.n_sites}, n_interactions={self.n_interactions}, "
            f"n_interior={self.n_interior}, subregion={sorted(self.subregion)})"
        )


# ---------------------------------------------------------------------------
# spin configurations
# ---------------------------------------------------------------------------


def spins_from_bits(bits, n_sites: int) -> np.ndarray:
    """Convert bitmask(s) to ``+/-1`` arrays with a trailing site axis."""
    bits = np.asarray(bits, dtype=np.int64)
    b = (bits[..., None] >> np.arange(n_sites)) & 1
    return (1 - 2 * b).astype(np.int8)


def bits_from_spins(spins) -> np.ndarray:
    spins = np.asarray(spins)
    down = (spins < 0).astype(np.int64)
    return (down << np.arange(spins.shape[-1])).sum(axis=-1)


def parities(model: InteractionModel, bits) -> np.ndarray:
    """``sigma_X`` for each configuration bitmask, shape ``bits.shape + (n_interactions,)``."""
    bits = np.asarray(bits, dtype=np.int64)
    overlap = bits[..., None] & model.site_masks
    odd = np.zeros(overlap.shape, dtype=np.int64)
    x = overlap.copy()
    while np.any(x):
        odd ^= x & 1
        x >>= 1
    return (1.0 - 2.0 * odd)


# ---------------------------------------------------------------------------
# Hamiltonian and deterministic parts
# ---------------------------------------------------------------------------

_PARTS = ("full", "interior", "remainder", "interior-centered", "interior-tilde-centered", "B-only")


def hamiltonian_eval(model: InteractionModel, couplings, sigma, part: str = "full"):
    """Energy ``-sum_X J_X sigma_X`` restricted to one part of the decomposition.

    ``sigma`` is a bitmask (or array of them); ``couplings`` is a
    :class:`~flipid.disorder.CouplingAssignment`, broadcast against ``sigma``.
    ``full == interior-centered + B-only + remainder`` holds identically.
    """
    if part not in _PARTS:
        raise ValueError(f"unknown part {part!r}; expected one of {_PARTS}")
    p = parities(model, sigma)
    m = model.n_interior
    J = np.asarray(couplings.J, dtype=float)
    if part == "full":
        return -np.sum(J * p, axis=-1)
    if part == "interior":
        return -np.sum(J[..., :m] * p[..., :m], axis=-1)
    if part == "remainder":
        return -np.sum(J[..., m:] * p[..., m:], axis=-1)
    if part == "interior-centered":
        return -np.sum((J[..., :m] - model.interior_mean) * p[..., :m], axis=-1)
    if part == "B-only":
        return magnetization(model, sigma)
    if couplings.J_tilde is None:
        raise ValueError("tilde couplings are required for part 'interior-tilde-centered'")
    Jt = np.asarray(couplings.J_tilde, dtype=float)
    return -np.sum((Jt - model.interior_mean) * p[..., :m], axis=-1)


def magnetization(model: InteractionModel, sigma, normalized: bool = False):
    """Generalized magnetization ``B = -sum_{X in interior} mu_X sigma_X``."""
    p = parities(model, sigma)[..., : model.n_interior]
    b = -(p @ model.interior_mean)
    return b / _volume(model) if normalized else b


def interior_variance_sum(model: InteractionModel, normalized: bool = False) -> float:
    """``D = sum_{X in interior} Delta^2_X``."""
    d = float(math.fsum(model.interior_variance))
    return d / _volume(model) if normalized else d


def overlap_covariance(model: InteractionModel, sigma, tau, normalized: bool = False):
    """``C(sigma, tau) = sum_{X in interior} Delta^2_X sigma_X tau_X``."""
    m = model.n_interior
    ps = parities(model, sigma)[..., :m]
    pt = parities(model, tau)[..., :m]
    c = (ps * pt) @ model.interior_variance
    return c / _volume(model) if normalized else c


def _volume(model: InteractionModel) -> int:
    if model.subregion_size == 0:
        raise ModelError("normalized quantities need a nonempty subregion")
    return model.subregion_size


@dataclass(frozen=True)
class StabilityConstants:
    full: float
    mean_density: float
    variance_density: float
    interior: float
    interior_mean_density: float
    interior_variance_density: float

    @property
    def witness(self) -> float:
        """Largest density over the volume and the subregion."""
        return max(self.full, self.interior)


def stability_constant(model: InteractionModel) -> StabilityConstants:
    """Smallest constant bounding the per-site sums of ``|mu_X|`` and ``Delta^2_X``.

    The interior analogues divide interior sums by the subregion size (zero for
    an empty subregion).
    """
    n = model.n_sites
    md = math.fsum(np.abs(model.mean)) / n
    vd = math.fsum(model.variance) / n
    k = model.subregion_size
    if k:
        imd = math.fsum(np.abs(model.interior_mean)) / k
        ivd = math.fsum(model.interior_variance) / k
    else:
        imd = ivd = 0.0
    return StabilityConstants(max(md, vd), md, vd, max(imd, ivd), imd, ivd)


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def _resolve_subregion(n_sites: int, subregion) -> frozenset[int]:
    if subregion is None:
        return frozenset()
    if isinstance(subregion, Mapping):
        if "first" in subregion:
            k = int(subregion["first"])
            if not 0 <= k <= n_sites:
                raise ModelError(f"cannot take the first {k} of {n_sites} sites")
            return frozenset(range(k))
        if "fraction" in subregion:
            k = math.ceil(float(subregion["fraction"]) * n_sites)
            return frozenset(range(min(k, n_sites)))
        raise ModelError(f"unknown subregion selector {dict(subregion)}")
    if isinstance(subregion, int):
        return frozenset(range(subregion))
    sites = frozenset(int(i) for i in subregion)
    if not sites <= set(range(n_sites)):
        raise ModelError(f"subregion {sorted(sites)} is not inside the spin set")
    return sites


def _assemble(n_sites, items, subregion, lattice=None, max_sites=None) -> InteractionModel:
    if max_sites is not None and n_sites > max_sites:
        raise ModelError(f"{n_sites} sites exceed the enumeration cap {max_sites}")
    sub = _resolve_subregion(n_sites, subregion)
    seen = set()
    for it in items:
        key = frozenset(it.sites)
        if key in seen:
            raise ModelError(f"duplicate interaction {tuple(sorted(key))}")
        seen.add(key)
    interior = sorted((it for it in items if set(it.sites) <= sub), key=lambda it: (len(it.sites), it.sites))
    rest = sorted((it for it in items if not set(it.sites) <= sub), key=lambda it: (len(it.sites), it.sites))
    return InteractionModel(n_sites, tuple(interior + rest), sub, dict(lattice or {}))


def chain(
    n: int,
    mu: float = 0.0,
    delta: float = 1.0,
    *,
    field_mu: float | None = None,
    field_delta: float | None = None,
    periodic: bool = False,
    subregion=None,
    max_sites: int | None = None,
) -> InteractionModel:
    """Nearest-neighbour chain; per-site fields are added when ``field_mu`` or ``field_delta`` is given.

    >>> m = chain(3, 0.3, 1.0, subregion=[0, 1])
    >>> [it.sites for it in m.interactions]
    [(0, 1), (1, 2)]
    """
    items = []
    n_bonds = n if (periodic and n > 2) else n - 1
    for i in range(n_bonds):
        j = (i + 1) % n
        items.append(Interaction(tuple(sorted((i, j))), float(mu), float(delta) ** 2))
    if field_mu is not None or field_delta is not None:
        fm = 0.0 if field_mu is None else float(field_mu)
        fd = 1.0 if field_delta is None else float(field_delta)
        items.extend(Interaction((i,), fm, fd**2) for i in range(n))
    lattice = {"kind": "chain", "dimension": 1, "side": n, "periodic": bool(periodic)}
    return _assemble(n, items, subregion, lattice, max_sites)


def ea2d(
    L: int,
    mu: float = 0.0,
    delta: float = 1.0,
    *,
    periodic: bool = True,
    subregion=None,
    max_sites: int | None = None,
) -> InteractionModel:
    """Edwards-Anderson model on an ``L x L`` square lattice (row-major sites)."""
    items = {}
    for r in range(L):
        for c in range(L):
            i = r * L + c
            nbrs = []
            if periodic or c + 1 < L:
                nbrs.append(r * L + (c + 1) % L)
            if periodic or r + 1 < L:
                nbrs.append(((r + 1) % L) * L + c)
            for j in nbrs:
                if i != j:
                    key = tuple(sorted((i, j)))
                    items[key] = Interaction(key, float(mu), float(delta) ** 2)
    lattice = {"kind": "ea2d", "dimension": 2, "side": L, "periodic": bool(periodic)}
    return _assemble(L * L, list(items.values()), subregion, lattice, max_sites)


def explicit(
    n_sites: int,
    rows: Iterable[Sequence[float]],
    *,
    subregion=None,
    max_sites: int | None = None,
) -> InteractionModel:
    """Model from rows ``(site, ..., site, mu, variance)``."""
    items = []
    for row in rows:
        row = list(row)
        if len(row) < 3:
            raise ModelError(f"row {row} needs at least one site, a mean and a variance")
        sites = tuple(sorted(int(s) for s in row[:-2]))
        items.append(Interaction(sites, float(row[-2]), float(row[-1])))
    return _assemble(n_sites, items, subregion, {"kind": "explicit"}, max_sites)


def read_interaction_rows(path) -> list[list[float]]:
    """Read whitespace- or comma-separated rows ``sites... mu variance``; ``#`` starts a comment."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].replace(",", " ").strip()
            if line:
                rows.append([float(x) for x in line.split()])
    return rows


def build_model(spec: Mapping) -> InteractionModel:
    """Build a model from a description mapping (as read from a config file).

    Keys: ``builder`` (chain | ea2d | explicit), sizes (``n`` or ``L``), ``mu``,
    ``delta``, optional field parameters, ``subregion`` (site list, integer
    count, ``{first: k}`` or ``{fraction: a}``), and ``exact`` / ``max_sites``
    for the enumeration cap.
    """
    spec = dict(spec)
    builder = spec.pop("builder", None)
    cap = spec.pop("max_sites", DEFAULT_MAX_SITES) if spec.pop("exact", True) else None
    sub = spec.pop("subregion", None)
    if builder == "chain":
        return chain(
            int(spec.pop("n")),
            float(spec.pop("mu", 0.0)),
            float(spec.pop("delta", 1.0)),
            field_mu=spec.pop("field_mu", None),
            field_delta=spec.pop("field_delta", None),
            periodic=bool(spec.pop("periodic", False)),
            subregion=sub,
            max_sites=cap,
        )
    if builder == "ea2d":
        return ea2d(
            int(spec.pop("L")),
            float(spec.pop("mu", 0.0)),
            float(spec.pop("delta", 1.0)),
            periodic=bool(spec.pop("periodic", True)),
            subregion=sub,
            max_sites=cap,
        )
    if builder == "explicit":
        rows = spec.pop("rows", None)
        if rows is None and "rows_file" in spec:
            rows = read_interaction_rows(spec.pop("rows_file"))
        if rows is None:
            raise ModelError("explicit builder needs 'rows' or 'rows_file'")
        return explicit(int(spec.pop("n_sites")), rows, subregion=sub, max_sites=cap)
    raise ModelError(f"unknown builder {builder!r}")
