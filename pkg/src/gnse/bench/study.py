"""Convergence studies, the inf-sup probe, analytic rate curves and CSV output."""
from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import dataclass, field
import logging
import math
import os

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from ..exceptions import ConfigurationError, NonConvergenceError, NumericError
from ..fem.interpolation import prolongate
from ..fem.matrices import assemble_aux_matrices
from ..fem.space import ElementPair, build_space
from ..mesh import refine_to
from ..solver import (DiscreteState, NewtonConfig, ProblemData, apply_dirichlet,
                      initial_state, newton_solve, weak_rhs_action)
from .manufactured import ManufacturedCase, exact_fields, exponents
from .measures import dual_modular_diagnostic, eoc, error_norms, stability_quantity

__all__ = [
    "LevelResult",
    "EocTable",
    "make_problem",
    "solve_sequence",
    "run_study",
    "infsup_probe",
    "rates_curves",
    "emit_csv",
    "read_csv",
    "CSV_HEADER",
    "WORKERS_ENV",
]

log = logging.getLogger(__name__)

CSV_HEADER = ["level", "h", "ndof_v", "ndof_q", "e_v", "eoc_v", "e_q_s", "eoc_q_s",
              "e_q_ell", "eoc_q_ell", "e_q_p", "eoc_q_p", "newton_iters", "dual_modular"]
WORKERS_ENV = "GNSE_WORKERS"


@dataclass
class LevelResult:
    level: int
    h: float
    ndof_v: int
    ndof_q: int
    e_v: float
    e_q_s: float
    e_q_ell: float
    e_q_p: float
    newton_iters: int
    dual_modular: float
    stability: float = math.nan
    mu: float = math.nan


@dataclass
class EocTable:
    """Per-level errors of one ``(pair, case, p)`` study."""

    pair: str
    case_id: int
    p: float
    rows: list = field(default_factory=list)

    def column(self, name):
        return [getattr(r, name) for r in self.rows]

    def eoc(self, name):
        """EOC column aligned with the rows (``None`` in the first row)."""
        if len(self.rows) < 2:
            return [None] * len(self.rows)
        return [None] + eoc(self.column(name), self.column("h"))

    def final_eoc(self, name):
        return self.eoc(name)[-1]


def make_problem(case, space, degree=8):
    """:class:`ProblemData` for ``case`` on ``space`` with the weakly assembled load."""
    fields = exact_fields(case)
    return ProblemData(stress=case.stress, space=space, g1=fields.g1, g2=fields.v,
                       rhs_action=weak_rhs_action(case.stress, fields.v, fields.grad_v,
                                                  fields.q),
                       degree=degree)


def _solve_with_p_continuation(case, space, init, cfg, degree, steps, level):
    """Walk ``p`` from 2 to the target, each solve seeding the next."""
    state = init
    report = None
    total = 0
    for p in np.linspace(2.0, case.p, steps + 1)[1:] if case.p != 2.0 else [2.0]:
        sub = ManufacturedCase(case.case_id, float(p), case.beta, case.delta)
        data = make_problem(sub, space, degree)
        state, report = newton_solve(data, apply_dirichlet(data, state), cfg,
                                     p=case.p, level=level)
        total += report.iterations
    report.iterations = total
    return state, report


def solve_sequence(pair, case, max_level, cfg=None, degree=8, p_continuation=False,
                   continuation_steps=4):
    """Yield ``(mesh, space, state, report)`` for levels ``0..max_level``.

    Each level starts from the prolongated solution of the previous one; level 0
    starts from the Dirichlet lift.  With ``p_continuation`` a Newton failure is
    retried by stepping ``p`` from 2 to the target.
    """
    cfg = cfg or NewtonConfig()
    pair = ElementPair.parse(pair)
    prev = None
    for mesh in refine_to(max_level):
        space = build_space(mesh, pair)
        data = make_problem(case, space, degree)
        if prev is None:
            init = initial_state(data)
        else:
            init = DiscreteState(space,
                                 prolongate(prev.velocity_function, space).coefficients,
                                 prolongate(prev.pressure_function, space).coefficients)
            init = apply_dirichlet(data, init)
        try:
            state, report = newton_solve(data, init, cfg, p=case.p, level=mesh.level)
        except NonConvergenceError:
            if not p_continuation:
                raise
            log.info("p-continuation at level %d for p = %g", mesh.level, case.p)
            state, report = _solve_with_p_continuation(case, space, init, cfg, degree,
                                                       continuation_steps, mesh.level)
        prev = state
        yield mesh, space, state, report


def _study_cell(args):
    pair, case_id, p, max_level, cfg, degree, error_degree, p_continuation = args
    case = ManufacturedCase(case_id, p)
    exps = exponents(p)
    table = EocTable(ElementPair.parse(pair).value, case_id, p)
    for mesh, space, state, report in solve_sequence(pair, case, max_level, cfg, degree,
                                                     p_continuation):
        h = 2.0 ** (-mesh.level)
        errs = error_norms(state, case, exps, error_degree)
        table.rows.append(LevelResult(
            level=mesh.level, h=h, ndof_v=space.n_velocity_dofs,
            ndof_q=space.n_pressure_dofs, e_v=errs.e_v, e_q_s=errs.e_q_s,
            e_q_ell=errs.e_q_ell, e_q_p=errs.e_q_p, newton_iters=report.iterations,
            dual_modular=dual_modular_diagnostic(case, h, state, error_degree),
            stability=stability_quantity(state, case, error_degree), mu=state.mu))
        log.info("%s case %d p=%g level %d: e_v=%.4e iters=%d", table.pair, case_id, p,
                 mesh.level, errs.e_v, report.iterations)
    return table


def _worker_count():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigurationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def run_study(pair, case_id, p_list, max_level, degree=8, error_degree=12, cfg=None,
              deterministic=True, workers=None, p_continuation=False):
    """One :class:`EocTable` per ``p`` (returned in the order of ``p_list``).

    Cells for different ``p`` may run in separate processes unless
    ``deterministic`` is set; every cell is sequential across levels.
    """
    if max_level < 1:
        raise ConfigurationError("max_level must be at least 1")
    pair = ElementPair.parse(pair)
    cfg = cfg or NewtonConfig()
    jobs = [(pair, case_id, float(p), max_level, cfg, degree, error_degree, p_continuation)
            for p in p_list]
    for job in jobs:
        ManufacturedCase(case_id, job[2])  # validate before spawning work
    workers = 1 if deterministic else (workers or _worker_count())
    if workers == 1 or len(jobs) == 1:
        return [_study_cell(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_study_cell, jobs))


def _smallest_nonzero_eigenvalue(S, M, tol=1e-12, max_iter=10000):
    """Smallest eigenvalue of ``S x = lam M x`` on the M-complement of the constants.

    Inverse iteration on ``S + (M 1)(M 1)^T``, which agrees with ``S`` on that
    complement and is nonsingular, with the constant mode projected out.
    """
    n = len(S)
    one = np.ones(n)
    m1 = M @ one
    c = one / math.sqrt(one @ m1)
    Mc = M @ c
    lu = sla.lu_factor(S + np.outer(Mc, Mc))
    x = np.random.default_rng(0).standard_normal(n)
    lam_old = math.inf
    for _ in range(max_iter):
        x = x - (Mc @ x) * c
        x = x / math.sqrt(x @ (M @ x))
        y = sla.lu_solve(lu, M @ x)
        y = y - (Mc @ y) * c
        lam = (y @ (S @ y)) / (y @ (M @ y))
        x = y
        if abs(lam - lam_old) <= tol * abs(lam):
            return lam
        lam_old = lam
    raise NumericError("inverse iteration for the inf-sup constant did not converge")


def schur_pencil(space):
    """Dense ``(B A1^-1 B^T, M_p)`` restricted to zero-trace velocities."""
    mats = assemble_aux_matrices(space)
    interior = np.setdiff1d(np.arange(space.n_velocity_dofs), space.boundary_velocity_dofs)
    A = mats.velocity_h1[interior][:, interior].tocsc()
    B = mats.divergence[:, interior]
    Y = spla.splu(A).solve(B.T.toarray())
    S = B @ Y
    return 0.5 * (S + S.T), mats.pressure_mass.toarray()


def infsup_probe(pair, levels):
    """Euclidean inf-sup constants ``beta_h = sqrt(lambda_min)`` per level."""
    pair = ElementPair.parse(pair)
    levels = list(levels)
    if not levels or min(levels) < 1:
        raise ConfigurationError("inf-sup levels must be >= 1")
    meshes = refine_to(max(levels))
    out = []
    for level in levels:
        S, M = schur_pencil(build_space(meshes[level], pair))
        out.append(math.sqrt(_smallest_nonzero_eigenvalue(S, M)))
    return out


def rates_curves(p_grid):
    """Analytic exponent and rate curves, one dict per ``p``."""
    rows = []
    for p in p_grid:
        e = exponents(p)
        rows.append({
            "p": e.p, "s": e.s, "s_conj": e.s_conj, "ell": e.ell, "ell_conj": e.ell_conj,
            "rate_v_case1": min(1.0, e.p_conj / 2.0),
            "rate_q_s": min(2.0 / e.p_conj, e.p_conj / 2.0),
            "rate_q_ell": 1.0,
        })
    return rows


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def emit_csv(table, path):
    """Write ``table`` with the fixed header; empty cells where an EOC is undefined."""
    eocs = {name: table.eoc(name) for name in ("e_v", "e_q_s", "e_q_ell", "e_q_p")}
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for i, r in enumerate(table.rows):
                w.writerow([_fmt(v) for v in (
                    r.level, r.h, r.ndof_v, r.ndof_q,
                    r.e_v, eocs["e_v"][i], r.e_q_s, eocs["e_q_s"][i],
                    r.e_q_ell, eocs["e_q_ell"][i], r.e_q_p, eocs["e_q_p"][i],
                    r.newton_iters, r.dual_modular)])
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc


def read_csv(path):
    """Parse a file written by :func:`emit_csv` into a list of dicts (``None`` for empty cells)."""
    ints = {"level", "ndof_v", "ndof_q", "newton_iters"}
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (None if v == "" else (int(v) if k in ints else float(v)))
             for k, v in row.items()} for row in rows]
