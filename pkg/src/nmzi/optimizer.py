"""Constrained, derivative-free optimization of cascade parameters.

A problem names an objective on the Path-A output (a photon-number
probability or the fidelity to a target), inequality constraints on the
photon statistics, and which element parameters are free.  :func:`optimize`
runs a local derivative-free search from several starting points (warm
starts first, then a Latin hypercube) and keeps the best point seen across
every evaluation.
"""
from __future__ import annotations

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from nmzi import analytics
from nmzi.circuit import CircuitSpec, Simulator
from nmzi.fock import ElementParams, FockCutoff
from nmzi.observables import (
    ModeADensity,
    ObservableReport,
    fock_target,
    photon_probabilities,
    report,
    superposition_target,
)

logger = logging.getLogger(__name__)

#: Margin turning a strict ``< limit`` into the closed ``<= limit - margin``.
STRICT_MARGIN = 1e-9

#: Tolerance on a certified constraint violation.
FEASIBILITY_TOL = 1e-9

THETA_BOUNDS = (-math.pi / 2, math.pi / 2)
LINEAR_BOUNDS = (-math.pi, math.pi)
KERR_BOUNDS = (-math.pi / 2, math.pi / 2)

METHODS = ("cobyla", "nelder-mead")


class InfeasibleError(RuntimeError):
    """No point satisfying every constraint was found within the budget."""

    def __init__(self, result):
        super().__init__(
            f"no feasible point in {result.evaluations_used} evaluations "
            f"(best violation {result.constraint_violation:.3e})"
        )
        self.result = result


@dataclass(frozen=True)
class Constraint:
    """``sum_{p >= n} P_p <= limit`` (``tail``) or ``1 - sum_{p in keep} P_p <= limit`` (``leakage``)."""

    kind: str
    limit: float
    n: int = 2
    keep: tuple = ()
    strict: bool = False

    def __post_init__(self):
        if self.kind not in ("tail", "leakage"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.kind == "leakage" and not self.keep:
            raise ValueError("leakage constraint needs the kept photon numbers")
        object.__setattr__(self, "keep", tuple(int(k) for k in self.keep))

    @property
    def bound(self):
        return self.limit - STRICT_MARGIN if self.strict else self.limit

    def quantity(self, p):
        if self.kind == "tail":
            return float(np.sum(p[self.n:]))
        return 1.0 - float(sum(p[k] for k in self.keep if k < len(p)))

    def violation(self, p):
        """Positive when violated."""
        return self.quantity(p) - self.bound

    def describe(self):
        op = "<" if self.strict else "<="
        if self.kind == "tail":
            return f"P(n>={self.n}) {op} {self.limit:g}"
        keep = "+".join(f"P{k}" for k in self.keep)
        return f"1-({keep}) {op} {self.limit:g}"

    @classmethod
    def tail(cls, n, limit, strict=False):
        return cls("tail", limit, n=n, strict=strict)

    @classmethod
    def leakage(cls, keep, limit, strict=False):
        return cls("leakage", limit, keep=tuple(keep), strict=strict)


@dataclass(frozen=True)
class Objective:
    """Maximize ``P_n`` (``kind="photon"``) or ``<t|rho|t>`` (``kind="fidelity"``)."""

    kind: str = "photon"
    n: int = 1
    target: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("photon", "fidelity"):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.kind == "fidelity":
            if self.target is None:
                raise ValueError("fidelity objective needs a target state")
            t = superposition_target(self.target)
            object.__setattr__(self, "target", tuple(complex(x) for x in t))

    def target_vector(self):
        if self.kind == "photon":
            return fock_target(self.n)
        return np.array(self.target, dtype=complex)

    def value(self, rho, p):
        if self.kind == "photon":
            return float(p[self.n]) if self.n < len(p) else 0.0
        t = np.array(self.target, dtype=complex)
        k = min(t.size, rho.shape[0])
        return float(np.real(np.vdot(t[:k], rho[:k, :k] @ t[:k])))


@dataclass(frozen=True)
class OptimizationProblem:
    """Everything needed to reproduce one constrained optimization.

    ``base`` supplies the values of fixed parameters (and the N of the
    cascade); ``free`` is an ``(N, 3)`` mask over ``(theta, linear_phi,
    kerr_phi)``.  ``budget`` caps the total number of forward simulations.
    """

    objective: Objective
    constraints: tuple
    alpha: complex
    base: CircuitSpec
    free: tuple
    budget: int = 20000
    seed: int = 0
    restarts: int = 4
    method: str = "cobyla"
    warm_starts: tuple = ()
    n_max: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "warm_starts", tuple(self.warm_starts))
        free = tuple(tuple(bool(f) for f in row) for row in self.free)
        object.__setattr__(self, "free", free)
        if len(free) != len(self.base) or any(len(r) != 3 for r in free):
            raise ValueError("free mask must be (N, 3) matching the base circuit")
        if not any(any(r) for r in free):
            raise ValueError("no free parameters")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        for w in self.warm_starts:
            if len(w) != len(self.base):
                raise ValueError(f"warm start has {len(w)} elements, problem has {len(self.base)}")

    @property
    def n_elements(self):
        return len(self.base)

    @property
    def cutoff(self):
        if self.n_max is not None:
            return FockCutoff(self.n_max)
        return FockCutoff.for_alpha(self.alpha)

    def free_mask(self):
        return np.array(self.free, dtype=bool)

    def bounds(self):
        """``(lower, upper)`` for the free vector, in mask order."""
        per = np.array([THETA_BOUNDS, LINEAR_BOUNDS, KERR_BOUNDS])
        mask = self.free_mask()
        lo = np.broadcast_to(per[:, 0], mask.shape)[mask]
        hi = np.broadcast_to(per[:, 1], mask.shape)[mask]
        return lo, hi

    def pack(self, spec):
        table = np.array([e.as_tuple() for e in spec.elements], dtype=float)
        return table[self.free_mask()]

    def unpack(self, z):
        table = np.array([e.as_tuple() for e in self.base.elements], dtype=float)
        table[self.free_mask()] = z
        return table


@dataclass(frozen=True)
class LogEntry:
    restart: int
    index: int
    params_hash: str
    objective: float
    violation: float


@dataclass(frozen=True)
class OptimizationResult:
    best_params: CircuitSpec
    best_report: ObservableReport
    objective_value: float
    constraint_violation: float
    evaluations_used: int
    seed: int
    feasible: bool
    restart_values: tuple = ()
    run_log: tuple = field(default=(), repr=False, compare=False)

    def raise_if_infeasible(self):
        if not self.feasible:
            raise InfeasibleError(self)
        return self


class _Budget(Exception):
    pass


def _params_hash(z):
    return hashlib.sha1(np.ascontiguousarray(z, dtype=float).tobytes()).hexdigest()[:12]


class _Evaluator:
    """Objective/violation for one restart, with best-so-far tracking."""

    def __init__(self, problem, sim, restart, limit):
        self.problem = problem
        self.sim = sim
        self.restart = restart
        self.limit = limit
        self.count = 0
        self.log = []
        self.best = None  # (key, z, objective, violation)
        self._cache_z = None
        self._cache = None

    def evaluate(self, z):
        z = np.asarray(z, dtype=float)
        if self._cache_z is not None and np.array_equal(z, self._cache_z):
            return self._cache
        if self.count >= self.limit:
            raise _Budget
        self.count += 1
        table = self.problem.unpack(z)
        rho = self.sim.density(table[:, 0], table[:, 1], table[:, 2])
        p = np.clip(np.real(np.diag(rho)), 0.0, None)
        obj = self.problem.objective.value(rho, p)
        viol = max((c.violation(p) for c in self.problem.constraints), default=-math.inf)
        self.log.append(LogEntry(self.restart, self.count - 1, _params_hash(z), obj, viol))
        # feasible points rank above infeasible ones; then higher objective / lower violation
        key = (1, obj) if viol <= 0 else (0, -viol)
        if self.best is None or key > self.best[0]:
            self.best = (key, z.copy(), obj, viol)
        self._cache_z, self._cache = z.copy(), (obj, viol)
        return obj, viol


def _run_cobyla(ev, z0, limit, rhobeg):
    margin = 1e-7

    def fun(z):
        return -ev.evaluate(z)[0]

    def cons(z):
        return -ev.evaluate(z)[1] - margin

    options = {"rhobeg": rhobeg, "maxiter": int(limit), "tol": 1e-7, "catol": 0.0}
    kwargs = {}
    if ev.problem.constraints:
        kwargs["constraints"] = [{"type": "ineq", "fun": cons}]
    minimize(fun, z0, method="COBYLA", options=options, **kwargs)


def _run_nelder_mead(ev, z0, limit, rhobeg):
    lo, hi = ev.problem.bounds()
    z = np.clip(z0, lo, hi)
    # exact penalty with increasing weight; each stage restarts from the last
    for weight in (10.0, 100.0, 1000.0):
        remaining = limit - ev.count
        if remaining <= 0:
            break

        def fun(x, w=weight):
            obj, viol = ev.evaluate(x)
            return -obj + w * max(0.0, viol)

        simplex = np.vstack([z] + [z + rhobeg * np.eye(z.size)[i] for i in range(z.size)])
        res = minimize(
            fun,
            z,
            method="Nelder-Mead",
            bounds=list(zip(lo, hi)),
            options={
                "maxfev": int(remaining),
                "initial_simplex": np.clip(simplex, lo, hi),
                "xatol": 1e-9,
                "fatol": 1e-12,
                "adaptive": True,
            },
        )
        z = res.x


def _starting_points(problem):
    lo, hi = problem.bounds()
    starts = [problem.pack(w) for w in problem.warm_starts]
    n_random = max(0, problem.restarts - len(starts))
    if n_random:
        sampler = qmc.LatinHypercube(d=lo.size, seed=problem.seed)
        starts.extend(qmc.scale(sampler.random(n_random), lo, hi))
    return starts[: max(problem.restarts, len(problem.warm_starts))]


def _one_restart(problem, restart, z0, limit, rhobeg):
    sim = Simulator(problem.alpha, problem.cutoff)
    ev = _Evaluator(problem, sim, restart, limit)
    try:
        if problem.method == "cobyla":
            _run_cobyla(ev, z0, limit, rhobeg)
        else:
            _run_nelder_mead(ev, z0, limit, rhobeg)
    except _Budget:
        pass
    return ev


def canonical_spec(table):
    """Wrap angles into their exact periods: theta and linear_phi by 2 pi, kerr_phi by pi."""

    def wrap(x, period):
        return (x + period / 2) % period - period / 2

    return CircuitSpec(
        tuple(
            ElementParams(wrap(t, 2 * math.pi), wrap(lp, 2 * math.pi), wrap(kp, math.pi))
            for t, lp, kp in table
        )
    )


def evaluate_spec(spec, alpha, objective=None, constraints=(), cutoff=None):
    """Fresh forward simulation: ``(report, objective value, max violation)``."""
    sim = Simulator(alpha, cutoff)
    rho = sim.density_for(spec)
    p = photon_probabilities(rho)
    objective = objective or Objective()
    viol = max((c.violation(p) for c in constraints), default=-math.inf)
    rep = report(ModeADensity(rho), objective.target_vector(), sim.cutoff.n_max)
    return rep, objective.value(rho, p), viol


def optimize(problem, threads=1, rhobeg=0.3):
    """Multi-start constrained search; deterministic for a given problem.

    Restarts are independent and may run on ``threads`` workers; the best
    result is chosen in restart order so ties never depend on scheduling.
    """
    starts = _starting_points(problem)
    share = problem.budget // len(starts)
    limits = [share + (1 if i < problem.budget % len(starts) else 0) for i in range(len(starts))]
    jobs = [(problem, i, z0, lim, rhobeg) for i, (z0, lim) in enumerate(zip(starts, limits)) if lim > 0]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            evaluators = list(pool.map(lambda j: _one_restart(*j), jobs))
    else:
        evaluators = [_one_restart(*j) for j in jobs]

    best = None
    for ev in evaluators:
        if ev.best is not None and (best is None or ev.best[0] > best.best[0]):
            best = ev
    used = sum(ev.count for ev in evaluators)
    spec = canonical_spec(problem.unpack(best.best[1]))
    rep, obj, viol = evaluate_spec(spec, problem.alpha, problem.objective, problem.constraints, problem.cutoff)
    feasible = viol <= FEASIBILITY_TOL
    logger.info(
        "optimize N=%d alpha=%r: objective %.6g violation %.3e after %d evaluations",
        problem.n_elements, problem.alpha, obj, viol, used,
    )
    return OptimizationResult(
        best_params=spec,
        best_report=rep,
        objective_value=obj,
        constraint_violation=max(viol, 0.0) if feasible else viol,
        evaluations_used=used,
        seed=problem.seed,
        feasible=feasible,
        restart_values=tuple(
            (ev.restart, ev.best[2] if ev.best else math.nan, ev.best[3] if ev.best else math.nan)
            for ev in evaluators
        ),
        run_log=tuple(entry for ev in evaluators for entry in ev.log),
    )


# -- problem builders ------------------------------------------------------


def cascade_problem(
    n_elements,
    alpha,
    objective=None,
    constraints=(),
    kerr_phi=0.1,
    free_kerr=False,
    warm_starts=(),
    **kwargs,
):
    """Every element's theta and linear_phi free; kerr_phi fixed unless ``free_kerr``."""
    base = CircuitSpec(tuple(ElementParams(0.0, 0.0, kerr_phi) for _ in range(n_elements)))
    free = tuple((True, True, bool(free_kerr)) for _ in range(n_elements))
    return OptimizationProblem(
        objective=objective or Objective(),
        constraints=tuple(constraints),
        alpha=complex(alpha),
        base=base,
        free=free,
        warm_starts=tuple(_resize(w, n_elements, kerr_phi) for w in warm_starts),
        **kwargs,
    )


def simple_nmzi_problem(alpha, kerr_phi=0.1, constraints=(), objective=None, **kwargs):
    """Two elements, the second a bare beam splitter; seeded by the optimal condition."""
    base = CircuitSpec((ElementParams(0.0, 0.0, kerr_phi), ElementParams(0.0, 0.0, 0.0)))
    free = ((True, True, False), (True, False, False))
    warm = list(kwargs.pop("warm_starts", ()))
    try:
        for branch in ("minus", "plus"):
            warm.append(analytics.optimal_params(kerr_phi, branch).to_circuit())
    except analytics.NoSolutionError:
        pass
    return OptimizationProblem(
        objective=objective or Objective(),
        constraints=tuple(constraints),
        alpha=complex(alpha),
        base=base,
        free=free,
        warm_starts=tuple(warm),
        **kwargs,
    )


def _resize(spec, n_elements, kerr_phi):
    """Pad with ``theta = 0`` elements at the end, or truncate."""
    elements = list(spec.elements[:n_elements])
    while len(elements) < n_elements:
        elements.append(ElementParams(0.0, 0.0, kerr_phi))
    return CircuitSpec(tuple(elements))


def with_budget(problem, budget=None, seed=None, restarts=None):
    changes = {}
    if budget is not None:
        changes["budget"] = budget
    if seed is not None:
        changes["seed"] = seed
    if restarts is not None:
        changes["restarts"] = restarts
    return replace(problem, **changes)


# -- experiments built on the optimizer -----------------------------------


def optimize_superposition(target, n_elements, alpha, budget=20000, seed=0, leakage=0.01,
                           kerr_phi=0.1, free_kerr=True, restarts=4, warm_starts=(), threads=1,
                           method="cobyla"):
    """Maximize fidelity to ``target`` with ``1 - sum_{k in support} P_k <= leakage``."""
    t = superposition_target(target)
    support = tuple(int(k) for k in np.flatnonzero(np.abs(t) > 0))
    problem = cascade_problem(
        n_elements,
        alpha,
        objective=Objective("fidelity", target=tuple(t)),
        constraints=(Constraint.leakage(support, leakage),),
        kerr_phi=kerr_phi,
        free_kerr=free_kerr,
        warm_starts=warm_starts,
        budget=budget,
        seed=seed,
        restarts=restarts,
        method=method,
    )
    return optimize(problem, threads=threads)


@dataclass(frozen=True)
class PerturbationStudy:
    base_params: CircuitSpec
    magnitude: float
    samples: int
    seed: int = 0
    perturb: tuple = ("theta", "linear_phi")

    def __post_init__(self):
        if self.magnitude < 0:
            raise ValueError("magnitude must be >= 0")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")


@dataclass(frozen=True)
class PerturbationSummary:
    base_value: float
    values: np.ndarray
    reports: tuple
    histogram: tuple  # (counts, edges)

    @property
    def mean(self):
        return float(np.mean(self.values))

    @property
    def median(self):
        return float(np.median(self.values))

    @property
    def min(self):
        return float(np.min(self.values))

    @property
    def max(self):
        return float(np.max(self.values))


def perturbation_study(study, alpha, objective=None, bins=20):
    """Uniform ``[-magnitude, magnitude]`` noise on the chosen parameters of every element."""
    objective = objective or Objective()
    index = {"theta": 0, "linear_phi": 1, "kerr_phi": 2}
    cols = [index[name] for name in study.perturb]
    sim = Simulator(alpha)
    target = objective.target_vector()
    base_table = np.array([e.as_tuple() for e in study.base_params.elements], dtype=float)

    def measure(table):
        rho = sim.density(table[:, 0], table[:, 1], table[:, 2])
        p = photon_probabilities(rho)
        return objective.value(rho, p), report(ModeADensity(rho), target, sim.cutoff.n_max)

    base_value, _ = measure(base_table)
    rng = np.random.default_rng(study.seed)
    values, reports = [], []
    for _ in range(study.samples):
        table = base_table.copy()
        noise = rng.uniform(-study.magnitude, study.magnitude, size=(len(table), len(cols)))
        table[:, cols] += noise
        value, rep = measure(table)
        values.append(value)
        reports.append(rep)
    values = np.array(values)
    counts, edges = np.histogram(values, bins=bins)
    return PerturbationSummary(base_value, values, tuple(reports), (counts, edges))


def alpha_scan(spec, alphas, objective=None):
    """Evaluate a fixed circuit at several input amplitudes."""
    objective = objective or Objective()
    rows = []
    for a in alphas:
        rep, value, _ = evaluate_spec(spec, a, objective)
        rows.append((a, value, rep))
    return rows


# -- sweeps ----------------------------------------------------------------

SWEEP_VARS = ("alpha2", "N", "kerr_phi", "linear_phi")


@dataclass(frozen=True)
class SweepRow:
    value: float
    result: OptimizationResult | None = None
    report: ObservableReport | None = None
    error: str | None = None

    @property
    def ok(self):
        return self.error is None


def _kerr_mask(template):
    """Elements carrying a Kerr medium: nonzero or free kerr_phi in the template."""
    return tuple(e.kerr_phi != 0 or f[2] for e, f in zip(template.base.elements, template.free))


def _set_kerr(spec, kerr_phi, mask):
    return CircuitSpec(
        tuple(replace(e, kerr_phi=kerr_phi) if m else e for e, m in zip(spec.elements, mask))
    )


def _problem_at(template, var, value, previous):
    if var == "alpha2":
        if value < 0:
            raise ValueError(f"alpha2 must be >= 0, got {value}")
        problem = replace(template, alpha=complex(math.sqrt(value)), n_max=None)
    elif var == "kerr_phi":
        warm = list(template.warm_starts)
        if template.n_elements == 2 and template.free[1] == (True, False, False):
            warm = []
            try:
                warm = [analytics.optimal_params(value, b).to_circuit() for b in ("minus", "plus")]
            except analytics.NoSolutionError:
                pass
        mask = _kerr_mask(template)
        problem = replace(template, base=_set_kerr(template.base, value, mask),
                          warm_starts=tuple(_set_kerr(w, value, mask) for w in warm))
    elif var == "N":
        n = int(value)
        if n != value or n < 1:
            raise ValueError(f"N must be a positive integer, got {value}")
        last_base = template.base.elements[-1]
        base = CircuitSpec(tuple(template.base.elements[:n]) + (last_base,) * max(0, n - len(template.base)))
        free = tuple(template.free[:n]) + (template.free[-1],) * max(0, n - len(template.free))
        kerr = last_base.kerr_phi
        warm = tuple(_resize(w, n, kerr) for w in template.warm_starts)
        problem = replace(template, base=base, free=free, warm_starts=warm)
    else:
        raise ValueError(f"optimizer sweeps take one of {SWEEP_VARS[:3]}, got {var!r}")
    if previous is not None:
        kerr = problem.base.elements[-1].kerr_phi
        prev = _resize(previous, problem.n_elements, kerr)
        if var == "kerr_phi":
            prev = _set_kerr(prev, value, _kerr_mask(template))
        problem = replace(problem, warm_starts=(prev,) + problem.warm_starts)
    return problem


def sweep(template, sweep_var, grid, threads=1, chain=True, alpha=None):
    """One row per grid point; failures become marked rows.

    ``template`` is an :class:`OptimizationProblem`, or a :class:`CircuitSpec`
    for a pure evaluation sweep (``linear_phi`` of the first element, or
    ``alpha2``), which never calls the optimizer.  With ``chain`` each
    optimized point warm-starts the next.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("sweep grid is empty")
    if sweep_var not in SWEEP_VARS:
        raise ValueError(f"sweep_var must be one of {SWEEP_VARS}, got {sweep_var!r}")
    rows = []
    if isinstance(template, CircuitSpec):
        for value in grid:
            try:
                if sweep_var == "linear_phi":
                    first = replace(template.elements[0], linear_phi=float(value))
                    spec, a = CircuitSpec((first,) + template.elements[1:]), alpha
                elif sweep_var == "alpha2":
                    spec, a = template, math.sqrt(value)
                else:
                    raise ValueError(f"evaluation sweeps take linear_phi or alpha2, got {sweep_var!r}")
                rep, _, _ = evaluate_spec(spec, a)
                rows.append(SweepRow(float(value), report=rep))
            except Exception as exc:  # noqa: BLE001 - recorded per row
                rows.append(SweepRow(float(value), error=f"{type(exc).__name__}: {exc}"))
        return rows

    previous = None
    for value in grid:
        try:
            problem = _problem_at(template, sweep_var, value, previous if chain else None)
            result = optimize(problem, threads=threads)
            if result.feasible:
                previous = result.best_params
            rows.append(SweepRow(float(value), result=result, report=result.best_report))
        except Exception as exc:  # noqa: BLE001 - recorded per row
            logger.warning("sweep point %s=%r failed: %s", sweep_var, value, exc)
            rows.append(SweepRow(float(value), error=f"{type(exc).__name__}: {exc}"))
    return rows
