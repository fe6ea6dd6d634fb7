"""Batch driver for the verification suites.

A run reads one YAML config, evaluates the selected suites and writes one
JSON report per suite (sorted keys, no timings), ``timings.json``,
``summary.json`` with the failure list, and one CSV per volume scan.

Exit status: 0 when every check passes, 1 when a check fails, 2 for a
configuration error.

Example config::

    seed: 7
    measure: {method: gauss-hermite, nodes_per_dim: 32}
    betas: [0.25, 0.5]
    models:
      - {builder: chain, n: 3, mu: 0.3, delta: 1.0, subregion: [0, 1]}
    suites: [lemma1, lemma2, replicon]
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import identities as idt
from .disorder import CouplingAssignment, DisorderMeasure
from .martingale import bound_check, decompose, tail_vanishing_check
from .model import build_model

SUITES = ("lemma1", "lemma2", "linear", "theorem1", "theorem2", "theorem3", "martingale", "replicon", "scan")
EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    models: list[dict]
    measure: dict
    betas: list[float]
    suites: list[str]
    out: Path
    seed: int | None = None
    threads: int = 1
    ts_nodes: int = idt.DEFAULT_TS_NODES
    rtol: float = 1e-6
    mean_tol: float = 1e-8
    n_se: float = 3.0
    options: dict = field(default_factory=dict)

    def disorder_measure(self) -> DisorderMeasure:
        m = dict(self.measure)
        method = m.pop("method", "gauss-hermite")
        try:
            if method == "monte-carlo":
                if self.seed is None:
                    raise ConfigError("monte-carlo mode needs a seed")
                return DisorderMeasure.monte_carlo(int(self.seed), int(m.pop("n_samples", 2000)),
                                                   threads=self.threads, **m)
            if method == "gauss-hermite":
                return DisorderMeasure.gauss_hermite(int(m.pop("nodes_per_dim", 32)), threads=self.threads, **m)
        except TypeError as exc:
            raise ConfigError(f"bad measure options: {exc}") from None
        raise ConfigError(f"unknown measure method {method!r}")

    def suite_options(self, name: str) -> dict:
        return dict(self.options.get(name) or {})


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a YAML config and apply command-line overrides."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    return config_from_dict(raw, overrides)


def config_from_dict(raw: dict, overrides: dict | None = None) -> ExperimentConfig:
    raw = dict(raw)
    ov = {k: v for k, v in (overrides or {}).items() if v is not None}
    models = raw.pop("models", None)
    if models is None and "model" in raw:
        models = [raw.pop("model")]
    models = list(models or [])
    measure = dict(raw.pop("measure", {"method": "gauss-hermite"}))
    if "method" in ov:
        measure["method"] = ov.pop("method")
    betas = [float(b) for b in raw.pop("betas", [raw.pop("beta", 0.5)])]
    suites = ov.pop("suites", None) or raw.pop("suites", None) or []
    raw.pop("suites", None)
    if isinstance(suites, str):
        suites = [s.strip() for s in suites.split(",") if s.strip()]
    bad = [s for s in suites if s not in SUITES]
    if bad:
        raise ConfigError(f"unknown suites {bad}; expected some of {list(SUITES)}")
    if not suites:
        raise ConfigError("no suites selected")
    cfg = ExperimentConfig(
        models=models,
        measure=measure,
        betas=betas,
        suites=list(suites),
        out=Path(ov.pop("out", raw.pop("out", "reports"))),
        seed=ov.pop("seed", raw.pop("seed", None)),
        threads=int(ov.pop("threads", raw.pop("threads", 1))),
        ts_nodes=int(raw.pop("ts_nodes", idt.DEFAULT_TS_NODES)),
        rtol=float(raw.pop("rtol", 1e-6)),
        mean_tol=float(raw.pop("mean_tol", 1e-8)),
        n_se=float(raw.pop("n_se", 3.0)),
    )
    raw.pop("out", None)
    cfg.options = {k: raw.pop(k) for k in list(raw) if k in SUITES}
    if raw:
        raise ConfigError(f"unknown config keys {sorted(raw)}")
    if cfg.measure.get("method", "gauss-hermite") == "monte-carlo" and cfg.seed is None:
        raise ConfigError("monte-carlo mode needs a seed")
    needs_models = {"lemma1", "lemma2", "linear", "theorem1", "theorem2", "theorem3", "martingale"}
    if needs_models & set(cfg.suites) and not cfg.models:
        raise ConfigError("selected suites need at least one model")
    return cfg


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


@dataclass
class SuiteResult:
    name: str
    records: list[dict]
    failures: list[dict]
    csv: dict = field(default_factory=dict)


def _check(records, failures, label, ok, **info):
    rec = {"check": label, "passed": bool(ok), **info}
    records.append(rec)
    if not ok:
        failures.append(rec)


def _identity_suite(cfg: ExperimentConfig, name: str) -> SuiteResult:
    fn = {"lemma1": idt.lemma1_check, "lemma2": idt.lemma2_check, "linear": idt.linear_lemma_check}[name]
    measure = cfg.disorder_measure()
    records, failures = [], []
    for mi, spec in enumerate(cfg.models):
        model = build_model(spec)
        for beta in cfg.betas:
            rep = fn(model, measure, beta, nodes=cfg.ts_nodes)
            info = {"model": mi, "beta": beta, "report": rep.to_dict()}
            _check(records, failures, f"{name}:variance", rep.passed(cfg.rtol, cfg.n_se), **info)
            if name == "lemma1":
                mean = rep.extra["mean"]
                ok = (abs(mean["value"]) < cfg.mean_tol if measure.is_exact
                      else abs(mean["value"]) <= cfg.n_se * max(mean["error"], 0.0))
                _check(records, failures, "lemma1:mean", ok, model=mi, beta=beta, mean=mean)
    return SuiteResult(name, records, failures)


def _theorem_suite(cfg: ExperimentConfig, name: str) -> SuiteResult:
    measure = cfg.disorder_measure()
    opts = cfg.suite_options(name)
    records, failures = [], []
    for mi, spec in enumerate(cfg.models):
        model = build_model(spec)
        for beta in cfg.betas:
            if name == "theorem1":
                vals = [idt.theorem1_functional(model, measure, beta, part, nodes=cfg.ts_nodes)
                        for part in opts.get("parts", ["centered", "full"])]
            elif name == "theorem2":
                vals = [idt.theorem2_mu_average(model, measure, beta, tuple(opts.get("mu_interval", (0.0, 1.0))),
                                                int(opts.get("n_mu", 4)), nodes=cfg.ts_nodes)]
            else:
                vals = [idt.theorem3_linear_functionals(model, measure, beta, v,
                                                        tuple(opts.get("mu_interval", (0.0, 1.0))),
                                                        int(opts.get("n_mu", 4)), nodes=cfg.ts_nodes)
                        for v in opts.get("variants", ["full", "mu-averaged"])]
            for fv in vals:
                _check(records, failures, f"{fv.name}:finite", math.isfinite(fv.value), model=mi, beta=beta,
                       functional=fv.to_dict())
    return SuiteResult(name, records, failures)


def _martingale_suite(cfg: ExperimentConfig) -> SuiteResult:
    measure = cfg.disorder_measure()
    if not measure.is_exact:
        raise ConfigError("the martingale suite needs a gauss-hermite measure")
    opts = cfg.suite_options("martingale")
    tol = float(opts.get("tol", 1e-8))
    records, failures = [], []
    csv = {}
    for mi, spec in enumerate(cfg.models):
        model = build_model(spec)
        for beta in cfg.betas:
            for flip in opts.get("flips", ["F0", "F"]):
                dec = decompose(model, measure, beta, flip)
                tail = tail_vanishing_check(dec, tol=tol, interior_means=model.interior_mean)
                bound = bound_check(model, beta, dec.variance, flip)
                base = {"model": mi, "beta": beta, "flip": flip}
                _check(records, failures, "martingale:orthogonality", dec.orthogonality_error() < tol,
                       value=dec.orthogonality_error(), **base)
                _check(records, failures, "martingale:variance", dec.decomposition_error() < tol,
                       value=dec.decomposition_error(), decomposition=dec.to_dict(), **base)
                _check(records, failures, "martingale:tail", tail.passed, tail=tail.to_dict(), **base)
                _check(records, failures, "martingale:bound", bound.passed, bound=bound.to_dict(), **base)
                csv[f"martingale_m{mi}_b{beta:g}_{flip}.csv"] = dec.to_csv
    return SuiteResult("martingale", records, failures, csv)


def random_replicon_instances(seed: int, count: int, max_sites: int = 6):
    """Seeded random ``(model, couplings, beta, t, s)`` tuples on small chains with fields."""
    from .model import chain

    rng = np.random.default_rng(seed)
    for i in range(count):
        n = int(rng.integers(1, max_sites + 1))
        model = chain(n, float(rng.normal()), float(0.5 + rng.random()), field_mu=float(rng.normal()),
                      field_delta=float(0.5 + rng.random()), subregion={"first": int(rng.integers(1, n + 1))})
        z = rng.standard_normal(model.n_interactions + model.n_interior)
        J = model.mean + model.std * z[: model.n_interactions]
        Jt = model.interior_mean + model.std[: model.n_interior] * z[model.n_interactions:]
        yield model, CouplingAssignment(J, Jt), float(rng.uniform(0, 2)), float(rng.uniform(0, np.pi)), \
            float(rng.uniform(0, np.pi))


def _replicon_suite(cfg: ExperimentConfig) -> SuiteResult:
    opts = cfg.suite_options("replicon")
    tol = float(opts.get("tol", 1e-12))
    seed = 0 if cfg.seed is None else int(cfg.seed)
    records, failures = [], []
    for i, (model, c, beta, t, s) in enumerate(
            random_replicon_instances(seed, int(opts.get("instances", 100)), int(opts.get("max_sites", 6)))):
        a, b, r = idt.replicon_two_ways(model, c, beta, t, s)
        _check(records, failures, "replicon:residual", r < tol, instance=i, n_sites=model.n_sites, beta=beta,
               t=t, s=s, value_a=a, value_b=b, residual=r)
    return SuiteResult("replicon", records, failures)


def _scan_suite(cfg: ExperimentConfig) -> SuiteResult:
    opts = cfg.suite_options("scan")
    if "family" not in opts:
        raise ConfigError("scan suite needs a 'family' model description")
    family_spec = dict(opts["family"])
    size_key = "L" if family_spec.get("builder") == "ea2d" else "n"
    sizes = [int(x) for x in opts.get("sizes", [4, 6, 8, 10, 12])]
    functionals = opts.get("functionals", ["theorem1_centered"])
    unknown = [f for f in functionals if f not in idt.FUNCTIONALS]
    if unknown:
        raise ConfigError(f"unknown functionals {unknown}")
    measure = cfg.disorder_measure()
    kw = {"nodes": int(opts.get("ts_nodes", cfg.ts_nodes))}
    if "n_mu" in opts:
        kw["n_mu"] = int(opts["n_mu"])

    def family(L):
        return build_model({**family_spec, size_key: L})

    records, failures, csv = [], [], {}
    for beta in cfg.betas:
        for fname in functionals:
            fkw = {k: v for k, v in kw.items() if k != "n_mu" or fname in ("theorem2", "theorem3_mu")}
            res = idt.volume_scan(family, sizes, measure, beta, fname, **fkw)
            info = {"beta": beta, "functional": fname, "scan": res.to_dict()}
            if fname == "variance_density":
                rows_ok = []
                for row in res.rows:
                    model = family(row["L"])
                    bc = bound_check(model, beta, row["value"] * model.subregion_size, "F0",
                                     error=row["error"] * model.subregion_size, n_se=cfg.n_se)
                    row["bound_density"] = bc.rate
                    rows_ok.append(bc.passed)
                _check(records, failures, "scan:bound", all(rows_ok), **info)
            else:
                _check(records, failures, "scan:decay", res.decays(n_se=cfg.n_se), **info)
            csv[f"scan_{fname}_b{beta:g}.csv"] = res.to_csv
    return SuiteResult("scan", records, failures, csv)


def run_suite(cfg: ExperimentConfig, name: str) -> SuiteResult:
    if name in ("lemma1", "lemma2", "linear"):
        return _identity_suite(cfg, name)
    if name in ("theorem1", "theorem2", "theorem3"):
        return _theorem_suite(cfg, name)
    if name == "martingale":
        return _martingale_suite(cfg)
    if name == "replicon":
        return _replicon_suite(cfg)
    if name == "scan":
        return _scan_suite(cfg)
    raise ConfigError(f"unknown suite {name!r}")


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(idt._jsonable(obj), sort_keys=True, indent=1) + "\n")


def run(cfg: ExperimentConfig) -> int:
    """Run every selected suite, write the reports and return the exit status."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    timings, summary = {}, {"schema": idt.SCHEMA_VERSION, "suites": {}, "failures": []}
    for name in cfg.suites:
        t0 = time.perf_counter()
        res = run_suite(cfg, name)
        timings[name] = time.perf_counter() - t0
        _dump(cfg.out / f"{name}.json", {"schema": idt.SCHEMA_VERSION, "suite": name, "seed": cfg.seed,
                                         "measure": cfg.measure, "betas": cfg.betas, "records": res.records})
        for fname, writer in res.csv.items():
            writer(cfg.out / fname)
        summary["suites"][name] = {"checks": len(res.records), "failures": len(res.failures)}
        summary["failures"].extend({"suite": name, **{k: v for k, v in f.items() if k in (
            "check", "model", "beta", "flip", "functional", "instance")}} for f in res.failures)
    summary["passed"] = not summary["failures"]
    _dump(cfg.out / "summary.json", summary)
    _dump(cfg.out / "timings.json", timings)
    return EXIT_OK if summary["passed"] else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="flipid", description="Run flip-identity verification suites.")
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--suite", action="append", help=f"suite to run (repeatable or comma list): {', '.join(SUITES)}")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--threads", type=int, help="worker threads for disorder chunks")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--exact", dest="method", action="store_const", const="gauss-hermite",
                      help="Gauss-Hermite quadrature")
    mode.add_argument("--mc", dest="method", action="store_const", const="monte-carlo", help="Monte Carlo")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    suites = None
    if args.suite:
        suites = [s.strip() for item in args.suite for s in item.split(",") if s.strip()]
    overrides = {"suites": suites, "out": args.out, "seed": args.seed, "threads": args.threads,
                 "method": args.method}
    try:
        cfg = load_config(args.config, overrides)
        return run(cfg)
    except (ValueError, KeyError) as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
