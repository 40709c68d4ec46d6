"""Adaptive SOLVE -> ESTIMATE -> MARK -> REFINE loops and their bookkeeping."""
import time
import warnings
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.optimize import minimize_scalar

from .estimator import data_resolution, edge_indicators, oscillation
from .fem import DiscreteSolution, assemble_system, solve
from .marking import (mark_doerfler, mark_goafem_maximum, mark_goal_doerfler,
                      mark_maximum)
from .mesh import refine
from .problem import builtin_problem

__all__ = [
    "STRATEGIES",
    "AFEM_STRATEGIES",
    "GOAFEM_STRATEGIES",
    "RunConfig",
    "AdaptiveRecord",
    "AdaptiveStep",
    "adaptive_steps",
    "run_afem",
    "run_goafem",
    "run",
    "run_uniform",
    "reference_values",
    "extrapolate_reference",
    "TooFewRecords",
    "NonMonotoneWarning",
]

AFEM_STRATEGIES = ("maximum", "doerfler")
GOAFEM_STRATEGIES = ("goafem_maximum", "ms", "fpz", "bet")
STRATEGIES = AFEM_STRATEGIES + GOAFEM_STRATEGIES


class TooFewRecords(ValueError):
    pass


class NonMonotoneWarning(RuntimeWarning):
    pass


@dataclass
class RunConfig:
    """Parameters of one adaptive run.

    ``theta`` is the maximum-criterion parameter; Dörfler-type strategies use
    ``1 - theta`` as bulk parameter.
    """
    problem: str = "zshape"
    p: int = 1
    strategy: str = "maximum"
    theta: float = 0.5
    c_min: float = 1.0
    max_dofs: int = 50_000
    max_iterations: int = 60
    max_elements: int = None
    squared: bool = True

    def __post_init__(self):
        if self.p not in (1, 2):
            raise ValueError(f"p must be 1 or 2, got {self.p}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if not 0 < self.theta <= 1:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")
        if self.strategy not in ("maximum", "goafem_maximum") and self.theta >= 1:
            raise ValueError("Dörfler strategies need theta < 1 (bulk parameter 1 - theta)")
        if self.c_min <= 0:
            raise ValueError(f"c_min must be positive, got {self.c_min}")

    @property
    def goal_oriented(self):
        return self.strategy in GOAFEM_STRATEGIES

    @property
    def bulk_theta(self):
        return 1.0 - self.theta


@dataclass
class AdaptiveRecord:
    iter: int
    ntri: int
    nedges: int
    ndof: int
    eta2: float
    eta_star2: float
    rho2: float
    rho_star2: float
    osc2: float
    osc_star2: float
    energy_uu: float
    energy_dual: float
    goal: float
    nmarked: int
    seconds: float

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    def as_dict(self):
        return asdict(self)


@dataclass(eq=False)
class AdaptiveStep:
    """Everything computed on one mesh of the adaptive sequence.

    ``lineage`` connects the previous mesh to ``mesh`` (None on the first).
    """
    record: AdaptiveRecord
    mesh: object
    system: object
    primal: DiscreteSolution
    dual: DiscreteSolution
    eta: object
    eta_star: object
    marked: np.ndarray = None
    lineage: object = None
    extra: dict = field(default_factory=dict)


def _mark(config, mesh, eta, eta_star):
    s = config.strategy
    if s == "maximum":
        return mark_maximum(mesh, eta, config.theta, config.squared), {}
    if s == "doerfler":
        return mark_doerfler(eta, config.bulk_theta), {}
    if s == "goafem_maximum":
        return mark_goafem_maximum(mesh, eta, eta_star, config.theta, config.c_min,
                                   config.squared, details=True)
    return mark_goal_doerfler(eta, eta_star, config.bulk_theta, s.upper()), {}


def _evaluate(mesh, problem, p, need_dual):
    """SOLVE and ESTIMATE on one mesh; returns the step pieces and totals."""
    system = assemble_system(mesh, problem, p)
    u = DiscreteSolution.from_free(system, solve(system, "primal"), "primal")
    eta = edge_indicators(mesh, problem, u)
    rho = data_resolution(mesh, problem, "primal", p).total()
    osc = oscillation(mesh, problem, "primal", p).total()
    if need_dual:
        z = DiscreteSolution.from_free(system, solve(system, "dual"), "dual")
        eta_star = edge_indicators(mesh, problem, z)
        rho_star = data_resolution(mesh, problem, "dual", p).total()
        osc_star = oscillation(mesh, problem, "dual", p).total()
    else:
        z = DiscreteSolution(mesh, p, u.coefficients, "dual", problem)
        eta_star = type(eta)(eta.values, mesh, "dual")
        rho_star, osc_star = rho, osc
    c, cz = u.coefficients, z.coefficients
    totals = dict(ntri=mesh.n_triangles, nedges=mesh.n_edges, ndof=system.n_free,
                  eta2=eta.total(), eta_star2=eta_star.total(), rho2=rho,
                  rho_star2=rho_star, osc2=osc, osc_star2=osc_star,
                  energy_uu=float(c @ (system.K @ c)), energy_dual=float(cz @ (system.K @ cz)),
                  goal=float(system.G @ c))
    return system, u, z, eta, eta_star, totals


def adaptive_steps(config, problem=None):
    """Generate the adaptive sequence; one :class:`AdaptiveStep` per mesh.

    The loop stops on the mesh where the number of free dofs reaches
    ``max_dofs``, the triangle count reaches ``max_elements`` or the
    iteration count reaches ``max_iterations``; that mesh is still solved,
    estimated and yielded (with ``marked`` left as None).
    """
    if problem is None:
        _, problem = builtin_problem(config.problem)
    mesh = problem.mesh
    lineage = None
    need_dual = config.goal_oriented and not problem.dual_is_primal
    for it in range(config.max_iterations + 1):
        t0 = time.perf_counter()
        system, u, z, eta, eta_star, totals = _evaluate(mesh, problem, config.p, need_dual)
        stop = (it == config.max_iterations or system.n_free >= config.max_dofs
                or (config.max_elements is not None and mesh.n_triangles >= config.max_elements))
        marked, extra = (None, {}) if stop else _mark(config, mesh, eta, eta_star)
        record = AdaptiveRecord(iter=it, nmarked=0 if marked is None else len(marked),
                                seconds=time.perf_counter() - t0, **totals)
        yield AdaptiveStep(record, mesh, system, u, z, eta, eta_star, marked, lineage, extra)
        if stop:
            return
        mesh, lineage = refine(mesh, marked)


def run_uniform(problem, p=1, levels=5):
    """Records of ``levels + 1`` uniformly refined meshes (every edge marked)."""
    if isinstance(problem, str):
        _, problem = builtin_problem(problem)
    mesh = problem.mesh
    records = []
    for it in range(levels + 1):
        t0 = time.perf_counter()
        *_, totals = _evaluate(mesh, problem, p, not problem.dual_is_primal)
        last = it == levels
        records.append(AdaptiveRecord(iter=it, nmarked=0 if last else mesh.n_edges,
                                      seconds=time.perf_counter() - t0, **totals))
        if not last:
            mesh, _ = refine(mesh, np.arange(mesh.n_edges))
    return records


def reference_values(problem, mesh, p, refinements=2):
    """``(a(u, u), a(z, z), G(u))`` for Galerkin solutions on ``mesh`` refined
    uniformly ``refinements`` times; used as stand-ins for the exact values."""
    for _ in range(refinements):
        mesh, _ = refine(mesh, np.arange(mesh.n_edges))
    system = assemble_system(mesh, problem, p)
    x = solve(system, "primal")
    y = x if problem.dual_is_primal else solve(system, "dual")
    Kf = system.K_free
    return float(x @ (Kf @ x)), float(y @ (Kf @ y)), float(system.rhs("dual") @ x)


def run_afem(config, problem=None):
    """Instance-optimal AFEM (or its Dörfler counterpart); list of records."""
    if config.strategy not in AFEM_STRATEGIES:
        raise ValueError(f"run_afem needs a strategy from {AFEM_STRATEGIES}")
    return [s.record for s in adaptive_steps(config, problem)]


def run_goafem(config, problem=None):
    """Goal-oriented AFEM with one of the four marking strategies."""
    if config.strategy not in GOAFEM_STRATEGIES:
        raise ValueError(f"run_goafem needs a strategy from {GOAFEM_STRATEGIES}")
    return [s.record for s in adaptive_steps(config, problem)]


def run(config, problem=None):
    return (run_goafem if config.goal_oriented else run_afem)(config, problem)


def _fit(N, v, r):
    X = np.column_stack([np.ones_like(N), -N**(-r)])
    coef, *_ = np.linalg.lstsq(X, v, rcond=None)
    return coef, float(np.linalg.norm(X @ coef - v))


def extrapolate_reference(records, field="energy_sq", rate_hint=1.0):
    """Extrapolate the limit of ``a(u_l, u_l)`` or ``G(u_l)`` in the dof count.

    Fits ``v_l = v_inf - c * N_l**(-r)`` by least squares on the last
    ``max(4, min(8, L // 2))`` records; for fixed ``r`` the fit is linear, and
    ``r`` is found by a bounded scalar search around ``rate_hint``.  Records
    without free dofs are ignored.

    Warns with :class:`NonMonotoneWarning` and returns the last value when the
    fitted values are not monotone.
    """
    key = {"energy_sq": "energy_uu", "goal": "goal"}.get(field)
    if key is None:
        raise ValueError(f"field must be 'energy_sq' or 'goal', got {field!r}")
    records = [r for r in records if r.ndof > 0]
    L = len(records)
    if L < 4:
        raise TooFewRecords("extrapolation needs at least four records with free dofs")
    k = min(L, max(4, min(8, L // 2)))
    tail_records = records[-k:]
    N = np.array([r.ndof for r in tail_records], dtype=float)
    v = np.array([getattr(r, key) for r in tail_records], dtype=float)
    d = np.diff(v)
    tol = 1e-12 * max(1.0, np.abs(v).max())
    if not (np.all(d >= -tol) or np.all(d <= tol)):
        warnings.warn("values are not monotone; returning the last value", NonMonotoneWarning)
        return float(v[-1])
    if np.all(np.abs(d) <= tol):
        return float(v[-1])
    res = minimize_scalar(lambda r: _fit(N, v, r)[1], bounds=(rate_hint / 8, rate_hint * 4),
                          method="bounded", options={"xatol": 1e-12})
    r = res.x if _fit(N, v, res.x)[1] <= _fit(N, v, rate_hint)[1] else rate_hint
    return float(_fit(N, v, r)[0][0])
