"""Variance formulas and identity functionals for flipped interactions.

All quenched replica averages on a ``(t, s)`` grid are accumulated in one
pass over the disorder: for each disorder point the one-replica moments are
computed at every grid node, combined into per-disorder replica products,
and summed with the disorder weights.  The left-hand sides (pressure
differences) use the same disorder points, so Monte Carlo runs compare the
two sides with common random numbers.  Nonlinear combinations (products of
quenched means) get jackknife errors.

Grid arrays use the convention ``A[i, j]`` = value at ``(t_i, s_j)``; the
replica parameters are listed positionally, e.g. ``C1223_tst[i, j] =
<C12 C23>_{t_i, s_j, t_i}``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .disorder import CouplingAssignment, DisorderMeasure, Integral, QuenchedEstimate, integrate
from .gibbs import Factor, assemble_product, gibbs_moments, log_partition, replica_moments
from .interpolation import DEFAULT_TS_NODES, gauss_legendre, get_path, h1, h2, k1, k2
from .model import InteractionModel

SCHEMA_VERSION = "1"


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class TermRow:
    label: str
    kernel: str
    beta_power: int
    replicas: str
    value: float
    error: float = 0.0


@dataclass
class IdentityReport:
    name: str
    lhs: QuenchedEstimate
    rhs: QuenchedEstimate
    residual: float
    residual_error: float
    terms: list[TermRow] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def relative_residual(self) -> float:
        return abs(self.residual) / max(1.0, abs(float(self.lhs.value)))

    def passed(self, rtol: float = 1e-6, n_se: float = 3.0) -> bool:
        if self.lhs.method == "monte-carlo":
            return abs(self.residual) <= n_se * self.residual_error
        return self.relative_residual < rtol

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "lhs": _est_dict(self.lhs),
            "rhs": _est_dict(self.rhs),
            "residual": self.residual,
            "residual_error": self.residual_error,
            "relative_residual": self.relative_residual,
            "terms": [vars(t).copy() for t in self.terms],
            "extra": _jsonable(self.extra),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


def _est_dict(e: QuenchedEstimate) -> dict:
    return {"value": _jsonable(e.value), "error": _jsonable(e.error), "method": e.method,
            "meta": _jsonable(e.meta)}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    return x


# ---------------------------------------------------------------------------
# grid accumulation
# ---------------------------------------------------------------------------


def _gram(a: np.ndarray, b: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``sum_k w_k sum_x a[k, t, x] b[k, s, x]`` as a ``(t, s)`` array."""
    return np.tensordot(a * w[:, None, None], b, axes=([0, 2], [0, 2]))


def _grid_integrand(model: InteractionModel, path, beta: float, ts: np.ndarray,
                    linear_extras: bool, lhs: bool, method: str):
    p = get_path(path)
    d2 = np.asarray(model.interior_variance, dtype=float)
    dd = np.outer(d2, d2).ravel()
    m = model.n_interior

    def integrand(c: CouplingAssignment, w: np.ndarray) -> dict:
        out = {}
        if lhs:
            x = log_partition(model, p.fields(model, c, p.start), beta, method) - log_partition(
                model, p.fields(model, c, p.end), beta, method)
            out["X"] = w @ x
            out["X2"] = w @ (x * x)
        mom = gibbs_moments(model, p.fields(model, c, ts[:, None]), beta, method=method)
        # (nt, K, ...) -> (K, nt, ...)
        v = np.moveaxis(mom.one, 0, 1)
        two = np.moveaxis(mom.two, 0, 1).reshape(v.shape[0], len(ts), m * m)
        mb = mom.mag.T
        mbx = np.moveaxis(mom.mag_one, 0, 1)
        r = np.matmul(v * d2, np.swapaxes(v, 1, 2))  # sum_X D2 w_t(X) w_s(X)
        ctt = np.diagonal(r, axis1=1, axis2=2)
        vv = (v[..., :, None] * v[..., None, :]).reshape(two.shape) * dd
        out["C12"] = np.tensordot(w, r, 1)
        out["C2"] = _gram(two * dd, two, w)
        out["C1223_tst"] = _gram(vv, two, w)
        out["C1234_tsst"] = np.tensordot(w, r * r, 1)
        out["M"] = w @ mb
        out["M2"] = w @ mom.mag_sq.T
        out["MM"] = _gram(mb[..., None], mb[..., None], w)
        out["M1C12"] = _gram(mbx * d2, v, w)
        out["M1C23_tst"] = np.tensordot(w, mb[:, :, None] * r, 1)
        out["Ctt"] = w @ ctt
        if linear_extras:
            u = np.matmul((v * d2)[..., None, :], two.reshape(two.shape[:2] + (m, m)))[..., 0, :]
            out["C1223_tts"] = _gram(u * d2, v, w)
            out["C1234_ttss"] = _gram(ctt[..., None], ctt[..., None], w)
            out["C1234_ttst"] = np.tensordot(w, ctt[:, :, None] * r, 1)
            out["M1C23_stt"] = _gram(ctt[..., None], mb[..., None], w)
        return out

    return integrand


@dataclass
class GridAverages:
    """Quenched averages on a parameter grid, with jackknife support."""

    integral: Integral
    ts: np.ndarray
    weights: np.ndarray
    path: str
    beta: float

    def estimate(self, combine: Callable[[dict], dict]) -> tuple[dict, dict]:
        return self.integral.estimate(combine)


def grid_averages(model: InteractionModel, measure: DisorderMeasure, path, beta: float,
                  nodes: int = DEFAULT_TS_NODES, linear_extras: bool = False, lhs: bool = True,
                  method: str = "gray") -> GridAverages:
    """Accumulate every replica average the identity functionals need on a Gauss-Legendre grid."""
    p = get_path(path)
    ts, wts = gauss_legendre(p.domain, nodes)
    integrand = _grid_integrand(model, p, beta, ts, linear_extras, lhs, method)
    acc = integrate(model, measure, integrand, tilde=p.needs_tilde)
    return GridAverages(acc, ts, wts, p.name, beta)


def _integrate_ts(wts: np.ndarray, grid: np.ndarray) -> float:
    return float(wts @ grid @ wts)


# ---------------------------------------------------------------------------
# variance formulas
# ---------------------------------------------------------------------------


def _report(name, g: GridAverages, combine, term_specs, measure, model, extra_keys=()):
    vals, errs = g.estimate(combine)
    method = "quadrature" if measure.is_exact else "monte-carlo"
    meta = measure.describe() | {"ts_nodes": len(g.ts), "path": g.path, "beta": g.beta}
    lhs = QuenchedEstimate(float(vals["lhs"]), float(errs["lhs"]), method, dict(meta))
    rhs = QuenchedEstimate(float(vals["rhs"]), float(errs["rhs"]), method, dict(meta))
    terms = [
        TermRow(label, kern, bp, reps, float(vals[key]), float(errs[key]))
        for key, label, kern, bp, reps in term_specs
    ]
    extra = {k: {"value": float(vals[k]), "error": float(errs[k])} for k in extra_keys}
    return IdentityReport(name, lhs, rhs, float(vals["residual"]), float(errs["residual"]), terms, extra)


def _replicon(mn, kind="tst"):
    c1223 = mn["C1223_tst"] if kind == "tst" else mn["C1223_tst"].T
    return mn["C2"] - 2.0 * c1223 + mn["C1234_tsst"]


def lemma1_check(model: InteractionModel, measure: DisorderMeasure, beta: float,
                 nodes: int = DEFAULT_TS_NODES, method: str = "gray") -> IdentityReport:
    """Second moment of ``X0`` (centered flip) against its double-integral form.

    ``Av(X0^2) = b^2 IntInt k1 <C12>_{t,s}
    - b^4 IntInt k2 (<C12^2>_{t,s} - 2 <C12 C23>_{t,s,t} + <C12 C34>_{t,s,s,t})``,
    and ``Av(X0) = 0``.
    """
    g = grid_averages(model, measure, "TrigF0", beta, nodes, method=method)
    T, S = np.meshgrid(g.ts, g.ts, indexing="ij")
    K1, K2 = k1(T, S), k2(T, S)
    b = beta

    def combine(mn):
        t1 = b**2 * _integrate_ts(g.weights, K1 * mn["C12"])
        t2 = -(b**4) * _integrate_ts(g.weights, K2 * _replicon(mn, "tst"))
        lhs = mn["X2"]
        return {"lhs": lhs, "rhs": t1 + t2, "residual": lhs - t1 - t2, "t1": t1, "t2": t2,
                "mean": mn["X"]}

    specs = [
        ("t1", "b^2 IntInt k1 <C12>_{t,s}", "k1", 2, "C12|t,s"),
        ("t2", "-b^4 IntInt k2 (<C12^2>_{t,s} - 2<C12C23>_{t,s,t} + <C12C34>_{t,s,s,t})", "k2", 4,
         "C12^2|t,s ; C12C23|t,s,t ; C12C34|t,s,s,t"),
    ]
    return _report("lemma1", g, combine, specs, measure, model, extra_keys=("mean",))


def lemma2_check(model: InteractionModel, measure: DisorderMeasure, beta: float,
                 nodes: int = DEFAULT_TS_NODES, method: str = "gray") -> IdentityReport:
    """Variance of ``X`` (full flip, trigonometric path) against its four-block form.

    The magnetization-overlap block enters as ``-2 b^3 IntInt h2 (...)``; the
    ``+2 b^3`` variant is kept in ``extra["display_rhs"]`` for comparison.
    The mean is checked against ``b Int (cos t - sin t) <M>_t dt``.
    """
    g = grid_averages(model, measure, "TrigF", beta, nodes, method=method)
    T, S = np.meshgrid(g.ts, g.ts, indexing="ij")
    K1, K2, H1, H2 = k1(T, S), k2(T, S), h1(T, S), h2(T, S)
    b = beta
    kern = np.cos(g.ts) - np.sin(g.ts)

    def combine(mn):
        t1 = b**2 * _integrate_ts(g.weights, K1 * mn["C12"])
        t2 = b**2 * _integrate_ts(g.weights, H1 * (mn["MM"] - np.outer(mn["M"], mn["M"])))
        blk3 = _integrate_ts(g.weights, H2 * (mn["M1C12"] - mn["M1C23_tst"]))
        t3 = -2.0 * b**3 * blk3
        t4 = -(b**4) * _integrate_ts(g.weights, K2 * _replicon(mn, "sts"))
        lhs = mn["X2"] - mn["X"] ** 2
        rhs = t1 + t2 + t3 + t4
        mean_formula = b * float(g.weights @ (kern * mn["M"]))
        return {"lhs": lhs, "rhs": rhs, "residual": lhs - rhs, "t1": t1, "t2": t2, "t3": t3, "t4": t4,
                "mean": mn["X"], "mean_formula": mean_formula, "mean_residual": mn["X"] - mean_formula,
                "display_rhs": rhs - 2 * t3, "display_residual": lhs - rhs + 2 * t3}

    specs = [
        ("t1", "b^2 IntInt k1 <C12>_{t,s}", "k1", 2, "C12|t,s"),
        ("t2", "b^2 IntInt h1 (<M1M2>_{t,s} - <M1>_t<M2>_s)", "h1", 2, "M1M2|t,s ; M1|t ; M2|s"),
        ("t3", "-2b^3 IntInt h2 (<M1C12>_{t,s} - <M1C23>_{t,s,t})", "h2", 3, "M1C12|t,s ; M1C23|t,s,t"),
        ("t4", "-b^4 IntInt k2 (<C12^2>_{t,s} - 2<C12C23>_{s,t,s} + <C12C34>_{t,s,s,t})", "k2", 4,
         "C12^2|t,s ; C12C23|s,t,s ; C12C34|t,s,s,t"),
    ]
    return _report("lemma2", g, combine, specs, measure, model,
                   extra_keys=("mean", "mean_formula", "mean_residual", "display_rhs", "display_residual"))


def linear_lemma_check(model: InteractionModel, measure: DisorderMeasure, beta: float,
                       nodes: int = DEFAULT_TS_NODES, method: str = "gray") -> IdentityReport:
    """Variance of ``X`` along the linear path ``t H' + H_rest``, ``t in [-1, 1]``.

    Term ``t2`` (``-2 b^4 IntInt ts <C12>_{t,s}``) and the ``-<C12>_{t,t}<M>_s``
    sign inside ``t4`` belong to the display variant only
    (``extra["display_rhs"]``); the evaluated right-hand side omits ``t2``
    and uses ``+<C12>_{t,t}<M>_s``.
    """
    g = grid_averages(model, measure, "Linear", beta, nodes, linear_extras=True, method=method)
    T, S = np.meshgrid(g.ts, g.ts, indexing="ij")
    D = float(math.fsum(model.interior_variance))
    b = beta
    W = g.weights

    def combine(mn):
        M, Ctt = mn["M"], mn["Ctt"]
        t1 = b**2 * _integrate_ts(W, mn["C12"])
        t2 = -2.0 * b**4 * _integrate_ts(W, T * S * mn["C12"])
        t3 = b**2 * _integrate_ts(W, mn["MM"] - np.outer(M, M))
        t4 = -2.0 * b**3 * _integrate_ts(W, T * (mn["M1C12"] + np.outer(Ctt, M)))
        t4_display = -2.0 * b**3 * _integrate_ts(W, T * (mn["M1C12"] - np.outer(Ctt, M)))
        t5 = 2.0 * b**3 * _integrate_ts(W, T * (mn["M1C23_tst"] + mn["M1C23_stt"] - D * M[None, :]))
        t6 = b**4 * _integrate_ts(W, T * S * (mn["C1234_ttss"] - np.outer(Ctt, Ctt)))
        t7 = -4.0 * b**4 * _integrate_ts(W, T**2 * (mn["C1223_tts"] - mn["C1234_ttst"]))
        t8 = b**4 * _integrate_ts(W, T * S * _replicon(mn, "tst"))
        lhs = mn["X2"] - mn["X"] ** 2
        rhs = t1 + t3 + t4 + t5 + t6 + t7 + t8
        display = t1 + t2 + t3 + t4_display + t5 + t6 + t7 + t8
        mean_formula = -b * float(W @ (M + b * g.ts * Ctt))
        return {"lhs": lhs, "rhs": rhs, "residual": lhs - rhs, "t1": t1, "t2": t2, "t3": t3, "t4": t4,
                "t4_display": t4_display, "t5": t5, "t6": t6, "t7": t7, "t8": t8,
                "mean": mn["X"], "mean_formula": mean_formula, "mean_residual": mn["X"] - mean_formula,
                "display_rhs": display, "display_residual": lhs - display}

    specs = [
        ("t1", "b^2 IntInt <C12>_{t,s}", "1", 2, "C12|t,s"),
        ("t2", "-2b^4 IntInt st <C12>_{t,s} (display variant only)", "st", 4, "C12|t,s"),
        ("t3", "b^2 IntInt (<M1M2>_{t,s} - <M>_t<M>_s)", "1", 2, "M1M2|t,s ; M|t ; M|s"),
        ("t4", "-2b^3 IntInt t (<M1C12>_{t,s} + <C12>_{t,t}<M>_s)", "t", 3, "M1C12|t,s ; C12|t,t ; M|s"),
        ("t5", "2b^3 IntInt t (<M1C23>_{t,s,t} + <M1C23>_{s,t,t} - D<M>_s)", "t", 3,
         "M1C23|t,s,t ; M1C23|s,t,t ; M|s"),
        ("t6", "b^4 IntInt ts (<C12C34>_{t,t,s,s} - <C12>_{t,t}<C12>_{s,s})", "ts", 4,
         "C12C34|t,t,s,s ; C12|t,t ; C12|s,s"),
        ("t7", "-4b^4 IntInt t^2 (<C12C23>_{t,t,s} - <C12C34>_{t,t,s,t})", "t^2", 4,
         "C12C23|t,t,s ; C12C34|t,t,s,t"),
        ("t8", "b^4 IntInt ts (<C12^2>_{t,s} - 2<C12C23>_{t,s,t} + <C12C34>_{t,s,s,t})", "ts", 4,
         "C12^2|t,s ; C12C23|t,s,t ; C12C34|t,s,s,t"),
    ]
    return _report("linear", g, combine, specs, measure, model,
                   extra_keys=("t4_display", "mean", "mean_formula", "mean_residual", "display_rhs",
                               "display_residual"))


# ---------------------------------------------------------------------------
# identity functionals
# ---------------------------------------------------------------------------


@dataclass
class FunctionalValue:
    name: str
    value: float
    error: float
    method: str
    blocks: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable({"schema": SCHEMA_VERSION, "name": self.name, "value": self.value,
                          "error": self.error, "method": self.method, "blocks": self.blocks,
                          "extra": self.extra})


def _pack(name, vals, errs, method, keys, extra=None):
    blocks = {k: {"value": float(vals[k]), "error": float(errs[k])} for k in keys}
    return FunctionalValue(name, float(vals["value"]), float(errs["value"]), method, blocks, extra or {})


def _theorem1_combine(g: GridAverages, beta: float, n_sub: int, part: str):
    T, S = np.meshgrid(g.ts, g.ts, indexing="ij")
    W = g.weights
    z = 1.0 / n_sub**2
    if part == "centered":
        K2 = k2(T, S)

        def combine(mn):
            v = z * _integrate_ts(W, K2 * _replicon(mn, "tst"))
            return {"value": v, "replicon": v}

        return combine
    H1, H2, K2 = h1(T, S), h2(T, S), k2(T, S)

    def combine(mn):
        a = beta**2 * z * _integrate_ts(W, H1 * (mn["MM"] - np.outer(mn["M"], mn["M"])))
        bb = -2.0 * beta**3 * z * _integrate_ts(W, H2 * (mn["M1C12"] - mn["M1C23_tst"]))
        c = -(beta**4) * z * _integrate_ts(W, K2 * _replicon(mn, "sts"))
        return {"value": a + bb + c, "magnetization": a, "mixed": bb, "replicon": c}

    return combine


def theorem1_functional(model: InteractionModel, measure: DisorderMeasure, beta: float,
                        part: str = "centered", nodes: int = DEFAULT_TS_NODES,
                        method: str = "gray") -> FunctionalValue:
    """Normalized identity functional whose large-volume limit vanishes.

    ``part="centered"``: ``IntInt k2 (<c12^2>_{t,s} - 2<c12c23>_{t,s,t} +
    <c12c34>_{t,s,s,t})`` on the centered-flip path.  ``part="full"``: the
    magnetization, mixed and replicon blocks on the full-flip path, with
    weights ``b^2 h1``, ``-2 b^3 h2``, ``-b^4 k2``.
    """
    if part not in ("centered", "full"):
        raise ValueError(f"unknown part {part!r}")
    _need_subregion(model)
    path = "TrigF0" if part == "centered" else "TrigF"
    g = grid_averages(model, measure, path, beta, nodes, lhs=False, method=method)
    vals, errs = g.estimate(_theorem1_combine(g, beta, model.subregion_size, part))
    keys = ["replicon"] if part == "centered" else ["magnetization", "mixed", "replicon"]
    return _pack(f"theorem1_{part}", vals, errs, _method(measure), keys)


def _linear_combine(g: GridAverages, beta: float, model: InteractionModel, variant: str):
    T, S = np.meshgrid(g.ts, g.ts, indexing="ij")
    W = g.weights
    n = model.subregion_size
    z = 1.0 / n**2
    d = float(math.fsum(model.interior_variance)) / n
    b = beta

    def combine(mn):
        M = mn["M"] / n
        Ctt = mn["Ctt"] / n
        out = {}
        out["cc_fluct"] = b**4 * _integrate_ts(W, T * S * (z * mn["C1234_ttss"] - np.outer(Ctt, Ctt)))
        out["cc_mixed"] = -4.0 * b**4 * z * _integrate_ts(W, T**2 * (mn["C1223_tts"] - mn["C1234_ttst"]))
        out["replicon"] = b**4 * z * _integrate_ts(W, T * S * _replicon(mn, "sts" if variant == "mu" else "tst"))
        if variant == "full":
            out["magnetization"] = b**2 * _integrate_ts(W, z * mn["MM"] - np.outer(M, M))
            out["mc_a"] = -2.0 * b**3 * _integrate_ts(W, T * (z * mn["M1C12"] + np.outer(Ctt, M)))
            out["mc_b"] = 2.0 * b**3 * _integrate_ts(
                W, T * (z * (mn["M1C23_tst"] + mn["M1C23_stt"]) - d * M[None, :]))
        out["value"] = sum(out.values())
        return out

    return combine


def theorem3_linear_functionals(model: InteractionModel, measure: DisorderMeasure, beta: float,
                                variant: str = "full", mu_interval: tuple[float, float] = (0.0, 1.0),
                                n_mu: int = 8, nodes: int = DEFAULT_TS_NODES,
                                method: str = "gray") -> FunctionalValue:
    """Linear-path identity functionals in normalized variables.

    ``variant="full"``: the six blocks (magnetization, two mixed
    magnetization-overlap blocks, overlap fluctuation, ``t^2`` block,
    replicon).  ``variant="mu-averaged"``: the three ``b^4`` blocks integrated
    over ``mu`` with interior means ``mu * mu'_X``.
    """
    _need_subregion(model)
    if variant == "full":
        g = grid_averages(model, measure, "Linear", beta, nodes, linear_extras=True, lhs=False, method=method)
        vals, errs = g.estimate(_linear_combine(g, beta, model, "full"))
        keys = ["magnetization", "mc_a", "mc_b", "cc_fluct", "cc_mixed", "replicon"]
        return _pack("theorem3_full", vals, errs, _method(measure), keys)
    if variant != "mu-averaged":
        raise ValueError(f"unknown variant {variant!r}")
    keys = ["cc_fluct", "cc_mixed", "replicon"]
    vals, errs = _mu_integral(model, measure, mu_interval, n_mu,
                              lambda mdl: _mu_piece(mdl, measure, beta, nodes, "Linear", method,
                                                    lambda g: _linear_combine(g, beta, mdl, "mu")),
                              keys)
    return _pack("theorem3_mu", vals, errs, _method(measure), keys,
                 {"mu_interval": list(mu_interval), "n_mu": n_mu})


def _mu_piece(mdl, measure, beta, nodes, path, method, make_combine, lhs=False):
    g = grid_averages(mdl, measure, path, beta, nodes, linear_extras=(path == "Linear"), lhs=lhs,
                      method=method)
    return g.integral, make_combine(g)


def _mu_integral(model, measure, mu_interval, n_mu, piece, keys):
    """``Int dmu`` of jackknifed combinations; Monte Carlo reuses the same samples at every ``mu``."""
    mu1, mu2 = map(float, mu_interval)
    base = np.asarray(model.interior_mean, dtype=float)
    if mu1 == mu2:
        return {k: 0.0 for k in keys + ["value"]}, {k: 0.0 for k in keys + ["value"]}
    mus, wmu = gauss_legendre((mu1, mu2), n_mu)
    parts = [piece(model.with_interior_means(mu * base)) for mu in mus]

    def combine_all(drop=None):
        tot = None
        for wm, (integral, comb) in zip(wmu, parts):
            r = comb(integral.means(drop))
            tot = {k: wm * np.asarray(v) for k, v in r.items()} if tot is None else {
                k: tot[k] + wm * np.asarray(v) for k, v in r.items()}
        return tot

    full = combine_all()
    integral0 = parts[0][0]
    nb = int(np.count_nonzero(integral0.counts))
    if measure.is_exact or nb < 2:
        return full, {k: 0.0 for k in full}
    reps = [combine_all(b) for b in range(integral0.n_blocks) if integral0.counts[b]]
    errs = {}
    for k in full:
        r = np.array([float(x[k]) for x in reps])
        errs[k] = float(np.sqrt((nb - 1) / nb * np.sum((r - r.mean()) ** 2)))
    return full, errs


def theorem2_mu_average(model: InteractionModel, measure: DisorderMeasure, beta: float,
                        mu_interval: tuple[float, float] = (0.0, 1.0), n_mu: int = 8,
                        nodes: int = DEFAULT_TS_NODES, fluctuation_ts: Sequence[float] = (0.0, np.pi / 4, np.pi / 2),
                        method: str = "gray") -> FunctionalValue:
    """``Int dmu IntInt k2 (<c12^2>_{t,s;mu} - 2<c12c23>_{s,t,s;mu} + <c12c34>_{t,s,s,t;mu})``.

    Interior means are ``mu * mu'_X`` with ``mu'`` the model's interior
    means.  Also reports ``Int dmu (<m^2>_{t;mu} - <m>_{t;mu}^2)`` at the
    grid nodes closest to ``fluctuation_ts``.
    """
    _need_subregion(model)
    n = model.subregion_size
    fl_idx = None

    def make(g):
        nonlocal fl_idx
        T, S = np.meshgrid(g.ts, g.ts, indexing="ij")
        K2 = k2(T, S)
        fl_idx = [int(np.argmin(abs(g.ts - t))) for t in fluctuation_ts]

        def combine(mn):
            out = {"value": _integrate_ts(g.weights, K2 * _replicon(mn, "sts")) / n**2}
            for j, i in enumerate(fl_idx):
                out[f"m_fluct_{j}"] = (mn["M2"][i] - mn["M"][i] ** 2) / n**2
            return out

        return combine

    keys = [f"m_fluct_{j}" for j in range(len(fluctuation_ts))]
    vals, errs = _mu_integral(model, measure, mu_interval, n_mu,
                              lambda mdl: _mu_piece(mdl, measure, beta, nodes, "TrigF", method, make),
                              keys)
    extra = {"mu_interval": list(mu_interval), "n_mu": n_mu, "fluctuation_ts": list(fluctuation_ts)}
    return _pack("theorem2", vals, errs, _method(measure), keys, extra)


def _method(measure: DisorderMeasure) -> str:
    return "quadrature" if measure.is_exact else "monte-carlo"


def _need_subregion(model: InteractionModel) -> None:
    if model.subregion_size == 0:
        raise ValueError("normalized functionals need a nonempty subregion")


# ---------------------------------------------------------------------------
# replicon polynomial
# ---------------------------------------------------------------------------


def replicon_two_ways(model: InteractionModel, couplings: CouplingAssignment, beta: float, t: float,
                      s: float, method: str = "gray") -> tuple[float, float, float]:
    """The replicon polynomial for one disorder realization, computed two ways.

    ``value_a`` from replica products: ``omega_{t,s}(c12^2) - omega_{s,t,s}(c12 c23)
    - omega_{t,s,t}(c12 c23) + omega_{t,s,t,s}(c12 c34)``; ``value_b`` as the
    sum over interior pairs of products of truncated correlations at ``t``
    and ``s``.  Returns ``(value_a, value_b, |value_a - value_b|)``.
    """
    _need_subregion(model)
    mt = replica_moments(model, couplings, "TrigF0", t, beta, method=method)
    ms = replica_moments(model, couplings, "TrigF0", s, beta, method=method)
    c12 = Factor("c", (1, 2))
    c23 = Factor("c", (2, 3))
    c34 = Factor("c", (3, 4))
    a = (assemble_product(model, [c12, c12], [mt, ms])
         - assemble_product(model, [c12, c23], [ms, mt, ms])
         - assemble_product(model, [c12, c23], [mt, ms, mt])
         + assemble_product(model, [c12, c34], [mt, ms, mt, ms]))
    d2 = np.asarray(model.interior_variance, dtype=float)
    tr_t = mt.two - mt.one[..., :, None] * mt.one[..., None, :]
    tr_s = ms.two - ms.one[..., :, None] * ms.one[..., None, :]
    bval = np.einsum("x,y,...xy,...xy->...", d2, d2, tr_t, tr_s) / model.subregion_size**2
    a = float(np.squeeze(a))
    bval = float(np.squeeze(bval))
    return a, bval, abs(a - bval)


# ---------------------------------------------------------------------------
# volume scans
# ---------------------------------------------------------------------------


def _zero(model, measure, beta, **kw):
    return FunctionalValue("zero", 0.0, 0.0, _method(measure))


def _variance_density(model, measure, beta, nodes=DEFAULT_TS_NODES, method="gray", **kw):
    """``V(X0) / |subregion|`` estimated directly from pressure differences."""
    from .interpolation import pressure_difference

    def integrand(c, w):
        x = pressure_difference("TrigF0", model, c, beta, route="direct")
        return {"X": w @ x, "X2": w @ (x * x)}

    acc = integrate(model, measure, integrand, tilde=False)
    vals, errs = acc.estimate(lambda mn: {"value": (mn["X2"] - mn["X"] ** 2) / model.subregion_size})
    return FunctionalValue("variance_density", float(vals["value"]), float(errs["value"]), _method(measure))


FUNCTIONALS: dict[str, Callable[..., FunctionalValue]] = {
    "zero": _zero,
    "variance_density": _variance_density,
    "theorem1_centered": lambda m, me, b, **kw: theorem1_functional(m, me, b, "centered", **kw),
    "theorem1_full": lambda m, me, b, **kw: theorem1_functional(m, me, b, "full", **kw),
    "theorem2": lambda m, me, b, **kw: theorem2_mu_average(m, me, b, **kw),
    "theorem3_full": lambda m, me, b, **kw: theorem3_linear_functionals(m, me, b, "full", **kw),
    "theorem3_mu": lambda m, me, b, **kw: theorem3_linear_functionals(m, me, b, "mu-averaged", **kw),
}


@dataclass
class ScanResult:
    functional: str
    rows: list[dict]
    tau: float | None
    p_value: float | None
    degenerate: bool

    def decays(self, tau_max: float = -0.6, factor: float = 2.0, n_se: float = 3.0) -> bool:
        """Nonincreasing trend with a large/small ratio of at least ``factor``, or zero within errors."""
        if all(abs(r["value"]) < n_se * r["error"] or r["value"] == 0.0 for r in self.rows):
            return True
        if self.tau is None or len(self.rows) < 2:
            return False
        first, last = self.rows[0]["value"], self.rows[-1]["value"]
        return self.tau <= tau_max and abs(last) * factor <= abs(first)

    def to_csv(self, path) -> None:
        cols = ["L", "n_sites", "n_subregion", "value", "error"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: (repr(r[k]) if isinstance(r[k], float) else r[k]) for k in cols})

    def to_dict(self) -> dict:
        return _jsonable({"schema": SCHEMA_VERSION, "functional": self.functional, "rows": self.rows,
                          "kendall_tau": self.tau, "p_value": self.p_value, "degenerate": self.degenerate})


def volume_scan(family: Callable[[int], InteractionModel], sizes: Sequence[int], measure: DisorderMeasure,
                beta: float, functional: str | Callable = "theorem1_centered", **kw) -> ScanResult:
    """Evaluate a functional over a family of volumes and attach Kendall's tau of ``|value|`` vs size."""
    fn = FUNCTIONALS[functional] if isinstance(functional, str) else functional
    name = functional if isinstance(functional, str) else getattr(functional, "__name__", "custom")
    rows = []
    for L in sizes:
        model = family(L)
        fv = fn(model, measure, beta, **kw)
        rows.append({"L": int(L), "n_sites": model.n_sites, "n_subregion": model.subregion_size,
                     "value": float(fv.value), "error": float(fv.error)})
    # the trend is taken on magnitudes: a functional tending to zero from below
    # should count as decaying
    vals = np.abs([r["value"] for r in rows])
    if len(rows) < 2 or np.all(vals == vals[0]):
        return ScanResult(name, rows, None, None, True)
    res = stats.kendalltau([r["L"] for r in rows], vals)
    return ScanResult(name, rows, float(res.statistic), float(res.pvalue), False)
