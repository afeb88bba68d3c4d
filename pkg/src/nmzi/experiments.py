"""Experiment configs, presets, and the runners that turn them into tables.

A config is flat ``key = value`` text plus an optional ``[elements]``
section of ``theta linear_phi kerr_phi`` records.  Numbers may carry a
``pi`` suffix (``0.13pi``) and grids may be written ``linspace(a, b, n)``.
The full grammar is in ``docs/config_grammar.md``.
"""
from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field

import numpy as np

from nmzi import analytics, optimizer
from nmzi.circuit import CircuitFile, CircuitSpec, SimpleNmziParams
from nmzi.fock import ElementParams
from nmzi.observables import REPORTED_P, format_value
from nmzi.optimizer import Constraint, Objective

EXPERIMENTS = ("fig1d", "fig1e", "fig2c", "fig2d", "fig3", "figS1", "figS2", "figS3", "figS4", "custom")


class ConfigError(ValueError):
    """Invalid experiment config; carries the offending line and field."""

    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.field = field


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 0
    alpha2: float = 1.0
    kerr_phi: float = 0.1
    n_elements: int = 2
    grid: tuple = ()
    kerr_grid: tuple = ()
    fock_n: tuple = (1,)
    budget: int = 20000
    restarts: int = 4
    method: str = "cobyla"
    tail_limit: float = 0.01
    leakage_limit: float = 0.01
    target: tuple = (1.0, 1.0)
    free_kerr: bool = False
    magnitude: float = 0.01 * math.pi
    samples: int = 200
    objective: str = "photon:1"
    constraints: tuple = ()
    optimize: bool = True
    threads: int = 1
    elements: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}",
                              field="experiment")
        if self.budget < 1:
            raise ConfigError("must be >= 1", field="budget")
        if self.restarts < 1:
            raise ConfigError("must be >= 1", field="restarts")
        if self.n_elements < 1:
            raise ConfigError("must be >= 1", field="n_elements")
        if self.alpha2 < 0:
            raise ConfigError("must be >= 0", field="alpha2")
        if self.samples < 1:
            raise ConfigError("must be >= 1", field="samples")
        if self.threads < 1:
            raise ConfigError("must be >= 1", field="threads")
        if self.method not in optimizer.METHODS:
            raise ConfigError(f"must be one of {optimizer.METHODS}", field="method")
        if self.experiment in _NEEDS_GRID and not self.grid:
            raise ConfigError("sweep grid is empty", field="grid")
        if self.experiment == "custom" and not self.elements and not self.optimize:
            raise ConfigError("custom evaluation needs an [elements] section", field="elements")

    @property
    def alpha(self):
        return math.sqrt(self.alpha2)

    def as_dict(self):
        d = dataclasses.asdict(self)
        d["elements"] = [list(e) for e in self.elements]
        d["grid"] = list(self.grid)
        d["kerr_grid"] = list(self.kerr_grid)
        d["fock_n"] = list(self.fock_n)
        d["target"] = list(self.target)
        d["constraints"] = list(self.constraints)
        return d

    def to_text(self):
        """Config text that parses back to this config."""
        lines = []
        for f in dataclasses.fields(self):
            if f.name == "elements":
                continue
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                text = ", ".join(repr(v) if not isinstance(v, str) else v for v in value)
            elif isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines.append(f"{f.name} = {text}")
        if self.elements:
            lines.append("[elements]")
            lines.extend(" ".join(repr(float(v)) for v in e) for e in self.elements)
        return "\n".join(lines) + "\n"


_NEEDS_GRID = {"fig1d", "fig1e", "fig2c", "fig2d", "fig3", "figS1", "figS2", "figS3"}

def parse_number(text):
    """Float with an optional ``pi`` factor: ``0.5``, ``0.13pi``, ``-pi``."""
    t = text.strip().replace(" ", "")
    scale = 1.0
    if t.endswith("pi"):
        t, scale = t[:-2].rstrip("*"), math.pi
        if t in ("", "+", "-"):
            t += "1"
    try:
        value = float(t) * scale
    except ValueError:
        raise ValueError(f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"not finite: {text!r}")
    return value


def parse_grid(text):
    text = text.strip()
    m = re.match(r"^linspace\((.*)\)$", text)
    if m:
        parts = [p.strip() for p in m.group(1).split(",")]
        if len(parts) != 3:
            raise ValueError("linspace needs (start, stop, num)")
        num = int(parts[2])
        if num < 1:
            raise ValueError("linspace num must be >= 1")
        return tuple(float(x) for x in np.linspace(parse_number(parts[0]), parse_number(parts[1]), num))
    if not text:
        return ()
    return tuple(parse_number(p) for p in text.split(","))


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text):
    value = parse_number(text)
    if value != int(value):
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


def _ints(text):
    return tuple(_int(p) for p in text.split(",") if p.strip())


def _strings(text):
    return tuple(p.strip() for p in text.split(";") if p.strip())


_PARSERS = {
    "experiment": str.strip,
    "seed": _int,
    "alpha2": parse_number,
    "kerr_phi": parse_number,
    "n_elements": _int,
    "grid": parse_grid,
    "kerr_grid": parse_grid,
    "fock_n": _ints,
    "budget": _int,
    "restarts": _int,
    "method": str.strip,
    "tail_limit": parse_number,
    "leakage_limit": parse_number,
    "target": parse_grid,
    "free_kerr": _bool,
    "magnitude": parse_number,
    "samples": _int,
    "objective": str.strip,
    "constraints": _strings,
    "optimize": _bool,
    "threads": _int,
}


def parse_config(text, overrides=None):
    """Parse config text; ``overrides`` (already typed) win over file values."""
    values = {}
    elements = []
    in_elements = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if line != "[elements]":
                raise ConfigError(f"unknown section {line}", line=lineno)
            in_elements = True
            continue
        if in_elements:
            tokens = line.split()
            if len(tokens) != 3:
                raise ConfigError(f"element record needs 3 fields, got {len(tokens)}",
                                  line=lineno, field=f"elements[{len(elements)}]")
            try:
                elements.append(tuple(parse_number(t) for t in tokens))
            except ValueError as exc:
                raise ConfigError(str(exc), line=lineno, field=f"elements[{len(elements)}]") from None
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, _, value = (s.strip() for s in line.partition("="))
        if key not in _PARSERS:
            raise ConfigError("unknown key", line=lineno, field=key)
        if key in values:
            raise ConfigError("duplicate key", line=lineno, field=key)
        try:
            values[key] = (_PARSERS[key](value), lineno)
        except ValueError as exc:
            raise ConfigError(str(exc), line=lineno, field=key) from None

    if "experiment" not in values:
        raise ConfigError("missing key", field="experiment")
    name = values["experiment"][0]
    merged = dict(PRESETS.get(name, {}))
    merged.update({k: v for k, (v, _) in values.items()})
    if elements:
        merged["elements"] = tuple(elements)
    merged.update(overrides or {})
    try:
        return ExperimentConfig(**merged)
    except ConfigError as exc:
        if exc.field in values and exc.line is None:
            raise ConfigError(str(exc).split(": ", 1)[-1], line=values[exc.field][1], field=exc.field) from None
        raise


def preset(name, **overrides):
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {tuple(PRESETS)}", field="preset")
    return ExperimentConfig(**{**PRESETS[name], **overrides})


#: Defaults per figure; every field a runner reads is pinned here.
PRESETS = {
    "fig1d": dict(experiment="fig1d", seed=0, alpha2=0.01, kerr_phi=0.1,
                  grid=parse_grid("linspace(-pi, pi, 401)")),
    "fig1e": dict(experiment="fig1e", seed=0, alpha2=0.01, kerr_grid=(0.05, 0.1, 0.5),
                  grid=parse_grid("linspace(-pi, pi, 400)")),
    "fig2c": dict(experiment="fig2c", seed=0, alpha2=1.0, kerr_phi=0.1, tail_limit=0.01,
                  grid=(2.0, 4.0, 6.0, 8.0, 10.0, 15.0, 20.0, 30.0, 40.0),
                  budget=20000, restarts=2),
    "fig2d": dict(experiment="fig2d", seed=0, kerr_phi=0.1, n_elements=40, fock_n=(1, 2, 3),
                  leakage_limit=0.01, grid=(0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5),
                  budget=20000, restarts=2),
    "fig3": dict(experiment="fig3", seed=0, n_elements=20, kerr_phi=0.1, free_kerr=True,
                 target=(1.0, 1.0), leakage_limit=0.01,
                 grid=(0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0), budget=20000, restarts=2),
    "figS1": dict(experiment="figS1", seed=0, kerr_phi=0.1,
                  grid=(0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0), budget=20000, restarts=8),
    "figS2": dict(experiment="figS2", seed=0, tail_limit=0.01, alpha2=1.0,
                  kerr_grid=(0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 1.5),
                  grid=(2.0, 4.0, 8.0, 12.0, 16.0, 20.0), budget=10000, restarts=4),
    "figS3": dict(experiment="figS3", seed=0, alpha2=1.0, kerr_phi=0.1, n_elements=20,
                  tail_limit=0.01, grid=(0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 3.0),
                  budget=20000, restarts=2),
    "figS4": dict(experiment="figS4", seed=0, alpha2=1.0, kerr_phi=0.1, n_elements=20,
                  tail_limit=0.01, magnitude=0.01 * math.pi, samples=200,
                  budget=20000, restarts=2),
    "custom": dict(experiment="custom", seed=0),
}


# -- runners -----------------------------------------------------------------


@dataclass
class ExperimentOutput:
    """Table plus side artifacts of one run."""

    columns: tuple
    rows: list
    circuits: dict = field(default_factory=dict)  # tag -> CircuitFile
    runlog: list = field(default_factory=list)  # (point, LogEntry)
    summary: dict = field(default_factory=dict)
    infeasible: list = field(default_factory=list)

    def csv_text(self):
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_cell(v) for v in row))
        return "\n".join(lines) + "\n"

    def runlog_text(self):
        lines = ["point,restart,index,params_hash,objective,violation"]
        for point, e in self.runlog:
            lines.append(
                f"{point},{e.restart},{e.index},{e.params_hash},"
                f"{format_value(e.objective)},{format_value(e.violation)}"
            )
        return "\n".join(lines) + "\n"


def _cell(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return format_value(v)


def _p_cols():
    return tuple(f"P_{p}" for p in range(REPORTED_P))


def _p_vals(rep):
    p = list(rep.p) + [0.0] * REPORTED_P
    return tuple(p[:REPORTED_P])


def _record(out, point, result):
    out.runlog.extend((point, e) for e in result.run_log)
    if not result.feasible:
        out.infeasible.append(point)


def _tail(cfg, strict=True):
    return Constraint.tail(2, cfg.tail_limit, strict=strict)


def run_fig1d(cfg):
    params = analytics.optimal_params(cfg.kerr_phi)
    rows = optimizer.sweep(params.to_circuit(), "linear_phi", cfg.grid, alpha=cfg.alpha)
    out = ExperimentOutput(("linear_phi",) + _p_cols() + ("g2_exact", "error"), [])
    for r in rows:
        if r.ok:
            out.rows.append((r.value,) + _p_vals(r.report) + (r.report.g2, ""))
        else:
            out.rows.append((r.value,) + (None,) * (REPORTED_P + 1) + (r.error,))
    return out


def run_fig1e(cfg):
    out = ExperimentOutput(("kerr_phi", "linear_phi", "g2_exact", "g2_approx"), [])
    for kerr in cfg.kerr_grid:
        params = analytics.optimal_params(kerr)
        rows = optimizer.sweep(params.to_circuit(), "linear_phi", cfg.grid, alpha=cfg.alpha)
        for r in rows:
            p = SimpleNmziParams(params.theta1, params.theta2, r.value, kerr)
            try:
                approx = analytics.approx_g2(p)
            except analytics.UndefinedG2Error:
                approx = None
            out.rows.append((kerr, r.value, r.report.g2 if r.ok else None, approx))
    return out


def _problem_kwargs(cfg):
    return dict(budget=cfg.budget, seed=cfg.seed, restarts=cfg.restarts, method=cfg.method)


def run_fig2c(cfg):
    template = optimizer.cascade_problem(int(cfg.grid[0]), cfg.alpha, constraints=(_tail(cfg),),
                                         kerr_phi=cfg.kerr_phi, **_problem_kwargs(cfg))
    asym = analytics.extraction_asymptote(1, cfg.alpha)
    out = ExperimentOutput(("N", "best_P1", "asymptote", "P_ge2", "feasible", "error"), [])
    for r in optimizer.sweep(template, "N", cfg.grid, threads=cfg.threads):
        if r.ok:
            _record(out, int(r.value), r.result)
            out.rows.append((int(r.value), r.result.objective_value, asym, r.report.tail(2),
                             r.result.feasible, ""))
            out.circuits[f"N{int(r.value)}"] = CircuitFile(r.result.best_params, cfg.alpha, r.report.n_max)
        else:
            out.rows.append((int(r.value), None, asym, None, False, r.error))
    return out


def run_fig2d(cfg):
    out = ExperimentOutput(("n", "alpha2", "best_Pn", "asymptote", "leakage", "feasible", "error"), [])
    for n in cfg.fock_n:
        template = optimizer.cascade_problem(
            cfg.n_elements, math.sqrt(cfg.grid[0]), objective=Objective("photon", n),
            constraints=(Constraint.leakage((0, n), cfg.leakage_limit),),
            kerr_phi=cfg.kerr_phi, **_problem_kwargs(cfg))
        for r in optimizer.sweep(template, "alpha2", cfg.grid, threads=cfg.threads):
            asym = analytics.extraction_asymptote(n, math.sqrt(r.value))
            if r.ok:
                _record(out, f"n{n}_a{r.value:g}", r.result)
                out.rows.append((n, r.value, r.result.objective_value, asym,
                                 r.report.leakage((0, n)), r.result.feasible, ""))
            else:
                out.rows.append((n, r.value, None, asym, None, False, r.error))
    return out


def run_fig3(cfg):
    t = tuple(cfg.target)
    support = tuple(int(k) for k in np.flatnonzero(np.abs(np.array(t)) > 0))
    template = optimizer.cascade_problem(
        cfg.n_elements, math.sqrt(cfg.grid[0]), objective=Objective("fidelity", target=t),
        constraints=(Constraint.leakage(support, cfg.leakage_limit),), kerr_phi=cfg.kerr_phi,
        free_kerr=cfg.free_kerr, **_problem_kwargs(cfg))
    out = ExperimentOutput(("alpha2", "P_0", "P_1", "fidelity", "purity", "leakage", "feasible", "error"), [])
    for r in optimizer.sweep(template, "alpha2", cfg.grid, threads=cfg.threads):
        if r.ok:
            rep = r.report
            _record(out, f"a{r.value:g}", r.result)
            out.rows.append((r.value, rep.p[0], rep.p[1], rep.fidelity, rep.purity,
                             rep.leakage(support), r.result.feasible, ""))
            out.circuits[f"alpha2_{r.value:g}"] = CircuitFile(r.result.best_params, math.sqrt(r.value), rep.n_max)
        else:
            out.rows.append((r.value,) + (None,) * 5 + (False, r.error))
    return out


def run_figS1(cfg):
    out = ExperimentOutput(("alpha2", "mode") + _p_cols() + ("g2", "feasible"), [])
    params = analytics.optimal_params(cfg.kerr_phi)
    for a2 in cfg.grid:
        rep, _, _ = optimizer.evaluate_spec(params.to_circuit(), math.sqrt(a2))
        out.rows.append((a2, "optimal_condition") + _p_vals(rep) + (rep.g2, True))
        for limit in (0.01, 0.001):
            problem = optimizer.simple_nmzi_problem(
                math.sqrt(a2), cfg.kerr_phi, constraints=(Constraint.tail(2, limit, strict=True),),
                **_problem_kwargs(cfg))
            result = optimizer.optimize(problem, threads=cfg.threads)
            _record(out, f"a{a2:g}_lim{limit:g}", result)
            rep = result.best_report
            out.rows.append((a2, f"optimized_{limit:g}") + _p_vals(rep) + (rep.g2, result.feasible))
    return out


def run_figS2(cfg):
    out = ExperimentOutput(("panel", "kerr_phi", "alpha2", "N", "best_P1", "asymptote", "feasible", "error"), [])
    for a2 in (0.5, 1.0):
        template = optimizer.simple_nmzi_problem(math.sqrt(a2), cfg.kerr_grid[0],
                                                 constraints=(_tail(cfg),), **_problem_kwargs(cfg))
        for r in optimizer.sweep(template, "kerr_phi", cfg.kerr_grid, threads=cfg.threads, chain=False):
            if r.ok:
                _record(out, f"a_k{r.value:g}_a{a2:g}", r.result)
                out.rows.append(("a", r.value, a2, 2, r.result.objective_value,
                                 analytics.extraction_asymptote(1, math.sqrt(a2)), r.result.feasible, ""))
            else:
                out.rows.append(("a", r.value, a2, 2, None, None, False, r.error))
    for kerr in (0.05, 0.1, 0.2):
        template = optimizer.cascade_problem(int(cfg.grid[0]), cfg.alpha, constraints=(_tail(cfg),),
                                             kerr_phi=kerr, **_problem_kwargs(cfg))
        for r in optimizer.sweep(template, "N", cfg.grid, threads=cfg.threads):
            asym = analytics.extraction_asymptote(1, cfg.alpha)
            if r.ok:
                _record(out, f"b_k{kerr:g}_N{int(r.value)}", r.result)
                out.rows.append(("b", kerr, cfg.alpha2, int(r.value), r.result.objective_value, asym,
                                 r.result.feasible, ""))
            else:
                out.rows.append(("b", kerr, cfg.alpha2, int(r.value), None, asym, False, r.error))
    return out


def _single_photon_design(cfg, out):
    """Optimized N-element single-photon extractor, or the config's own elements."""
    if cfg.elements:
        return CircuitSpec(tuple(ElementParams(*e) for e in cfg.elements))
    problem = optimizer.cascade_problem(cfg.n_elements, cfg.alpha, constraints=(_tail(cfg),),
                                        kerr_phi=cfg.kerr_phi, **_problem_kwargs(cfg))
    result = optimizer.optimize(problem, threads=cfg.threads)
    _record(out, "design", result)
    out.circuits["design"] = CircuitFile(result.best_params, cfg.alpha, result.best_report.n_max)
    out.summary["design_P1"] = result.objective_value
    out.summary["design_feasible"] = result.feasible
    return result.best_params


def run_figS3(cfg):
    out = ExperimentOutput(("alpha2", "P1", "P_ge2", "asymptote"), [])
    spec = _single_photon_design(cfg, out)
    for alpha, value, rep in optimizer.alpha_scan(spec, [math.sqrt(a) for a in cfg.grid]):
        out.rows.append((alpha**2, value, rep.tail(2), analytics.extraction_asymptote(1, alpha)))
    return out


def run_figS4(cfg):
    out = ExperimentOutput(("sample", "P1", "P_ge2"), [])
    spec = _single_photon_design(cfg, out)
    study = optimizer.PerturbationStudy(spec, cfg.magnitude, cfg.samples, cfg.seed)
    summary = optimizer.perturbation_study(study, cfg.alpha)
    for i, (value, rep) in enumerate(zip(summary.values, summary.reports)):
        out.rows.append((i, value, rep.tail(2)))
    counts, edges = summary.histogram
    out.summary.update(
        base_P1=summary.base_value, mean=summary.mean, median=summary.median,
        min=summary.min, max=summary.max,
        histogram_counts=[int(c) for c in counts],
        histogram_edges=[float(e) for e in edges],
    )
    return out


def _parse_objective(text):
    kind, _, arg = text.partition(":")
    if kind == "photon":
        return lambda cfg: Objective("photon", int(arg or 1))
    if kind == "fidelity":
        return lambda cfg: Objective("fidelity", target=tuple(cfg.target))
    raise ConfigError(f"unknown objective {text!r}", field="objective")


def _parse_constraint(text):
    parts = text.split(":")
    try:
        if parts[0] == "tail" and len(parts) == 3:
            return Constraint.tail(int(parts[1]), parse_number(parts[2]), strict=True)
        if parts[0] == "leakage" and len(parts) == 3:
            keep = tuple(int(k) for k in parts[1].split(","))
            return Constraint.leakage(keep, parse_number(parts[2]))
    except ValueError as exc:
        raise ConfigError(str(exc), field="constraints") from None
    raise ConfigError(f"bad constraint {text!r} (tail:n:limit or leakage:k1,k2:limit)",
                      field="constraints")


def run_custom(cfg):
    objective = _parse_objective(cfg.objective)(cfg)
    constraints = tuple(_parse_constraint(c) for c in cfg.constraints)
    out = ExperimentOutput(("mode", "objective", "violation", "feasible") + _p_cols()
                           + ("P_rest", "g2", "fidelity", "purity"), [])
    spec = CircuitSpec(tuple(ElementParams(*e) for e in cfg.elements)) if cfg.elements else None
    if cfg.optimize:
        n = len(spec) if spec is not None else cfg.n_elements
        problem = optimizer.cascade_problem(
            n, cfg.alpha, objective=objective, constraints=constraints, kerr_phi=cfg.kerr_phi,
            free_kerr=cfg.free_kerr, warm_starts=(spec,) if spec is not None else (),
            **_problem_kwargs(cfg))
        result = optimizer.optimize(problem, threads=cfg.threads)
        _record(out, "custom", result)
        spec, feasible = result.best_params, result.feasible
        mode = "optimized"
    else:
        mode, feasible = "evaluated", None
    rep, value, viol = optimizer.evaluate_spec(spec, cfg.alpha, objective, constraints)
    if feasible is None:
        feasible = viol <= optimizer.FEASIBILITY_TOL
        if not feasible:
            out.infeasible.append("custom")
    row = rep.row()
    out.rows.append((mode, value, viol if constraints else None, feasible) + tuple(row[1:]))
    out.circuits["custom"] = CircuitFile(spec, cfg.alpha, rep.n_max)
    return out


RUNNERS = {
    "fig1d": run_fig1d,
    "fig1e": run_fig1e,
    "fig2c": run_fig2c,
    "fig2d": run_fig2d,
    "fig3": run_fig3,
    "figS1": run_figS1,
    "figS2": run_figS2,
    "figS3": run_figS3,
    "figS4": run_figS4,
    "custom": run_custom,
}


def run(cfg):
    return RUNNERS[cfg.experiment](cfg)
