"""Benchmark cases, records and the runners behind the command line."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse

from . import __version__
from .discretization import COEFFICIENTS, ProblemConfig, build_system, time_march
from .errors import (BreakdownError, ConfigError, DomainError, MarchFailure,
                     OperatorFailure, RefusalError, SingularShiftError)
from .krylov import GmresConfig, SolveStats, arnoldi_ritz, gmres, hessenberg_eigvals
from .preconditioners import PRECONDITIONERS, make_preconditioner
from .structured import export_matrix_market

DEFAULT_L = {"d1": 8, "d2": 12}
DEFAULT_COEFFICIENTS = ("d1", "d2")
DEFAULT_PRECONDITIONERS = ("tai", "cai", "none")
DEFAULT_SIZES = (2**8, 2**9, 2**10)
EXTENDED_SIZES = (2**11, 2**12)
DEFAULT_ORDER_SIZES = (32, 64, 128, 256)

SPECTRUM_CAP = 1024
EXPORT_CAP = 4096

SOLVER_ERRORS = (MarchFailure, BreakdownError, OperatorFailure, SingularShiftError)


def _constant(c):
    return lambda x: np.full(np.shape(x), c, dtype=float)


def _sine(a, b):
    return lambda x: np.sin(np.pi * (np.asarray(x, dtype=float) - a) / (b - a))


@dataclass(frozen=True)
class BenchmarkCase:
    """One solver run.

    ``coefficient`` is ``d1``, ``d2`` or a non-negative constant written as a
    number. ``l`` defaults to 8 for d1 and 12 otherwise, capped at N.
    """

    coefficient: str = "d1"
    N: int = 256
    preconditioner: str = "tai"
    l: int | None = None
    beta: float = 1.2
    lam: float = 1.5
    gamma1: float = 0.75
    tol: float = 1e-7
    maxit: int = 1000
    side: str = "left"
    restart: int | None = None
    a: float = 0.0
    b: float = 1.0
    T: float = 1.0
    M: int | None = None
    source: str = "manufactured"
    initial: str = "zero"

    def __post_init__(self):
        if self.coefficient not in COEFFICIENTS:
            try:
                c = float(self.coefficient)
            except ValueError:
                raise ConfigError(f"coefficient must be d1, d2 or a number, got {self.coefficient!r}") from None
            if not (math.isfinite(c) and c >= 0):
                raise ConfigError(f"constant coefficient must be finite and >= 0, got {c}")
        if self.l is None:
            object.__setattr__(self, "l", min(DEFAULT_L.get(self.coefficient, 12), self.N))
        if self.preconditioner not in PRECONDITIONERS:
            raise ConfigError(f"preconditioner must be one of {', '.join(PRECONDITIONERS)}, "
                              f"got {self.preconditioner!r}")
        if self.preconditioner in ("tai", "cai") and not 2 <= self.l <= self.N:
            raise ConfigError(f"l must satisfy 2 <= l <= N, got l={self.l}, N={self.N}")
        if self.N < 2:
            raise ConfigError(f"N must be >= 2, got {self.N}")
        if not 1 < self.beta < 2:
            raise ConfigError(f"beta must lie in (1, 2), got {self.beta}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.source not in ("manufactured", "zero"):
            raise ConfigError(f"source must be manufactured or zero, got {self.source!r}")
        if self.source == "manufactured" and (self.a, self.b) != (0.0, 1.0):
            raise ConfigError("the manufactured source is defined on [0, 1] only")
        if self.initial not in ("zero", "sine"):
            raise ConfigError(f"initial must be zero or sine, got {self.initial!r}")
        try:
            GmresConfig(self.tol, self.maxit, self.restart, self.side)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        try:
            self.problem()
        except DomainError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def diffusion(self):
        if self.coefficient in COEFFICIENTS:
            return COEFFICIENTS[self.coefficient]
        return _constant(float(self.coefficient))

    @property
    def is_zero_diffusion(self) -> bool:
        return self.coefficient not in COEFFICIENTS and float(self.coefficient) == 0.0

    def problem(self) -> ProblemConfig:
        initial = _sine(self.a, self.b) if self.initial == "sine" else _constant(0.0)
        source = "manufactured" if self.source == "manufactured" else (lambda x, t: np.zeros_like(x))
        exact = None
        if self.source == "zero":
            if self.initial == "zero":
                exact = lambda x, t: np.zeros_like(x)
            elif self.is_zero_diffusion:
                exact = lambda x, t: initial(x)
        cfg = ProblemConfig(N=self.N, a=self.a, b=self.b, T=self.T, M=self.M, beta=self.beta,
                            lam=self.lam, gamma1=self.gamma1, diffusion=self.diffusion,
                            source=source, initial=initial, exact=exact)
        if self.source == "manufactured" and self.initial != "zero":
            # the manufactured solution starts from rest
            cfg.exact = None
        return cfg

    def gmres_config(self) -> GmresConfig:
        return GmresConfig(self.tol, self.maxit, self.restart, self.side)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_id(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


@dataclass
class BenchmarkRecord:
    case: BenchmarkCase
    per_step_iterations: list
    total_cpu_seconds: float
    converged: bool
    max_error: float = math.nan
    failed_step: int | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def avg_iterations(self) -> float:
        its = self.per_step_iterations
        return math.fsum(its) / len(its) if its else 0.0


def make_solver(sys, case: BenchmarkCase, apply_Pinv):
    """rhs -> (x, stats) for one time step; A = I is answered without iterating."""
    if not np.any(sys.d):
        return lambda rhs: (np.array(rhs, dtype=float), SolveStats(0, [], True))
    cfg = case.gmres_config()
    return lambda rhs: gmres(sys.apply_A, rhs, apply_Pinv=apply_Pinv, config=cfg)


def prepare(case: BenchmarkCase):
    """Assembly: problem, system and preconditioner (not timed)."""
    problem = case.problem()
    sys = build_system(problem)
    P = make_preconditioner(sys, case.preconditioner, case.l)
    return problem, sys, P


def run_case(case: BenchmarkCase, keep_solution=False):
    """Time march one case. Solver failures are recorded, not raised.

    Returns the record, and also the final state when ``keep_solution``.
    """
    problem, sys, P = prepare(case)
    solver = make_solver(sys, case, P)
    stats = []
    done = []

    def counted(rhs):
        x, s = solver(rhs)
        stats.append(s)
        return x, s

    meta = {"initial_guess": "zero", "side": case.side, "config_id": case.config_id(),
            "version": __version__}
    u = None
    failed = None
    start = time.perf_counter()
    try:
        res = time_march(problem, sys, counted, observer=lambda j, t, v: done.append(j))
        u = res.u
    except SOLVER_ERRORS as exc:
        failed = len(done)
        meta["failure"] = str(exc)
    elapsed = time.perf_counter() - start

    its = [s.iterations for s in stats]
    err = math.nan
    if u is not None and problem.exact is not None:
        err = float(np.max(np.abs(u - problem.exact(problem.grid, res.t_final)), initial=0.0))
    record = BenchmarkRecord(case=case, per_step_iterations=its, total_cpu_seconds=elapsed,
                             converged=failed is None, max_error=err, failed_step=failed,
                             metadata=meta)
    if keep_solution:
        return record, problem, u
    return record


# ---------------------------------------------------------------- case matrices


CASE_KEYS = {"a": "a", "b": "b", "T": "T", "M": "M", "beta": "beta", "lambda": "lam",
             "gamma1": "gamma1", "l": "l", "tol": "tol", "maxit": "maxit", "side": "side",
             "restart": "restart", "source": "source", "initial": "initial"}


def cases_from_config(cfg: dict, sizes=DEFAULT_SIZES, coefficients=DEFAULT_COEFFICIENTS,
                      preconditioners=DEFAULT_PRECONDITIONERS):
    """Expand a parsed config into cases ordered coefficient, preconditioner, N."""
    common = {CASE_KEYS[k]: v for k, v in cfg.items() if k in CASE_KEYS}
    coefs = cfg.get("coefficient", list(coefficients))
    pres = cfg.get("preconditioner", list(preconditioners))
    Ns = cfg.get("N", list(sizes))
    return [BenchmarkCase(coefficient=c, N=n, preconditioner=p, **common)
            for c in coefs for p in pres for n in Ns]


def single_case(cfg: dict, **defaults) -> BenchmarkCase:
    cases = cases_from_config(cfg, sizes=(defaults.get("N", 256),),
                              coefficients=(defaults.get("coefficient", "d1"),),
                              preconditioners=(defaults.get("preconditioner", "tai"),))
    if len(cases) != 1:
        raise ConfigError("this command takes a single coefficient, preconditioner and N")
    return cases[0]


# ---------------------------------------------------------------- output


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


RECORD_COLUMNS = ("coefficient", "N", "preconditioner", "l", "beta", "lambda", "gamma1",
                  "tol", "maxit", "side", "avg_iterations", "total_cpu_seconds", "converged",
                  "max_error", "failed_step", "per_step_iterations", "config_id", "version")


def record_row(r: BenchmarkRecord) -> list:
    c = r.case
    return [_fmt(v) for v in (
        c.coefficient, c.N, c.preconditioner, c.l, c.beta, c.lam, c.gamma1, c.tol, c.maxit,
        c.side, r.avg_iterations, r.total_cpu_seconds, str(r.converged).lower(), r.max_error,
        r.failed_step, " ".join(map(str, r.per_step_iterations)),
        r.metadata.get("config_id"), r.metadata.get("version"))]


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def solution_rows(problem, u):
    x = problem.grid
    ex = problem.exact(x, problem.T) if problem.exact is not None else None
    for i in range(x.size):
        if ex is None:
            yield [_fmt(float(x[i])), _fmt(float(u[i])), "", ""]
        else:
            yield [_fmt(float(v)) for v in (x[i], u[i], ex[i], abs(u[i] - ex[i]))]


# ---------------------------------------------------------------- spectra


def _sorted_eigs(ev):
    ev = np.asarray(ev, dtype=complex)
    return ev[np.lexsort((ev.imag, ev.real))]


def full_spectrum(apply_M, n, method="lapack"):
    """All n eigenvalues of ``apply_M``.

    Arnoldi with m = n normally returns every eigenvalue. If it stops early on
    an invariant subspace (an exact preconditioner does this at step 1), the
    operator is assembled column by column and reduced to Hessenberg form
    instead, so the result always has n entries.
    """
    ev = arnoldi_ritz(apply_M, n, n, method=method)
    if ev.size == n:
        return ev
    M = np.column_stack([apply_M(e) for e in np.eye(n)])
    H = scipy.linalg.hessenberg(M)
    if method == "qr":
        return hessenberg_eigvals(H)
    return scipy.linalg.eigvals(H)


def spectra(case: BenchmarkCase, method="lapack"):
    """Full-size Arnoldi spectra of A and A P^{-1}, sorted by real then imaginary part."""
    if case.N > SPECTRUM_CAP:
        raise RefusalError(f"spectrum export is capped at N = {SPECTRUM_CAP}, got {case.N}")
    _, sys, P = prepare(case)
    n = sys.n
    ev_A = full_spectrum(sys.apply_A, n, method)
    if P is None:
        ev_AP = ev_A
    else:
        ev_AP = full_spectrum(lambda v: sys.apply_A(P(v)), n, method)
    return _sorted_eigs(ev_A), _sorted_eigs(ev_AP)


def eig_rows(ev):
    return [[_fmt(float(z.real)), _fmt(float(z.imag))] for z in ev]


# ---------------------------------------------------------------- matrices


def export_matrices(case: BenchmarkCase, outdir) -> list[Path]:
    """Write A, D = diag(d) and the first column of G as Matrix Market files."""
    if case.N > EXPORT_CAP:
        raise RefusalError(f"matrix export is capped at N = {EXPORT_CAP}, got {case.N}")
    _, sys, _ = prepare(case)
    outdir = Path(outdir)
    note = f"config_id {case.config_id()}"
    paths = [outdir / "A.mtx", outdir / "D.mtx", outdir / "G_first_column.mtx"]
    export_matrix_market(sys.dense_A(), paths[0], comment=note)
    idx = np.arange(sys.n)
    # explicit zeros are kept so D always has N entries
    D = scipy.sparse.coo_matrix((sys.d.copy(), (idx, idx)), shape=(sys.n, sys.n))
    scipy.io.mmwrite(str(paths[1]), D, comment=note, field="real", symmetry="general")
    export_matrix_market(sys.G.first_column[:, None], paths[2], comment=note)
    return paths


# ---------------------------------------------------------------- order study


def order_rows(records):
    """(N, error, observed_order, status) rows; order uses the ratio of the h values.

    The order column is dropped when only one N is given.
    """
    with_order = len(records) > 1
    header = ["N", "error", "observed_order", "status"] if with_order else ["N", "error", "status"]
    rows = []
    prev = None
    for r in records:
        status = "ok" if r.converged else f"failed at step {r.failed_step}"
        row = [str(r.case.N), _fmt(r.max_error if r.converged else math.nan)]
        if with_order:
            order = math.nan
            if prev is not None and r.converged and prev.max_error > 0 and r.max_error > 0:
                h_prev = (prev.case.b - prev.case.a) / (prev.case.N + 1)
                h = (r.case.b - r.case.a) / (r.case.N + 1)
                order = math.log(prev.max_error / r.max_error) / math.log(h_prev / h)
            row.append(_fmt(order))
        row.append(status)
        rows.append(row)
        prev = r
    return header, rows
