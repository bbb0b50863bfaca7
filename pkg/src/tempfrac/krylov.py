"""Right-preconditioned GMRES and an Arnoldi/Ritz spectral diagnostic."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import BreakdownError, ContractViolation, OperatorFailure

REORTH_FACTOR = 1.0 / np.sqrt(2.0)
INITIAL_BASIS = 32


@dataclass(frozen=True)
class GmresConfig:
    """Stopping rule and preconditioning side.

    ``side="right"`` solves A P^{-1} y = b and stops on the residual of the
    original system. ``side="left"`` solves P^{-1} A x = P^{-1} b and stops on
    the preconditioned residual ||P^{-1}(b - A x)|| / ||P^{-1}(b - A x_0)||,
    which is how MATLAB-style GMRES counts iterations.
    """

    tol: float = 1e-7
    maxit: int = 1000
    restart: int | None = None
    side: str = "right"

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.maxit < 1:
            raise ValueError(f"maxit must be >= 1, got {self.maxit}")
        if self.restart is not None and self.restart < 1:
            raise ValueError(f"restart must be >= 1, got {self.restart}")
        if self.side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {self.side!r}")


@dataclass
class SolveStats:
    """Per-solve record.

    ``residual_history[k]`` is the relative residual after iteration k + 1:
    of the original system for right (or no) preconditioning, of the
    preconditioned system for left preconditioning.
    """

    iterations: int = 0
    residual_history: list = field(default_factory=list)
    converged: bool = False

    def pairs(self):
        """(iteration, RES) pairs, starting at iteration 1."""
        return list(enumerate(self.residual_history, start=1))


def _checked(op, v, name):
    y = np.asarray(op(v), dtype=float)
    if y.shape != v.shape:
        raise ContractViolation(f"{name} returned shape {y.shape}, expected {v.shape}")
    if not np.all(np.isfinite(y)):
        raise OperatorFailure(f"{name} produced NaN or Inf")
    return y


def _orthogonalize(V, k, w):
    """Gram-Schmidt of w against V[:k+1] with one conditional second pass.

    Returns the coefficient vector and the new norm.
    """
    basis = V[:k + 1]
    h = basis @ w
    w -= h @ basis
    norm_before = np.linalg.norm(h) ** 2 + np.linalg.norm(w) ** 2
    norm = np.linalg.norm(w)
    if norm < REORTH_FACTOR * np.sqrt(norm_before):
        h2 = basis @ w
        w -= h2 @ basis
        h += h2
        norm = np.linalg.norm(w)
    return h, norm


def gmres(apply_A, b, x0=None, apply_Pinv=None, config: GmresConfig | None = None):
    """Solve A x = b by GMRES, optionally preconditioned by ``apply_Pinv``.

    Full GMRES unless ``config.restart`` is set. With right preconditioning
    the iterates are x_k = x_0 + P^{-1} V_k y_k, so the least-squares residual
    is that of the original system; either way the monitored residual is
    recomputed explicitly from x before convergence is declared.

    Returns ``(x, SolveStats)``.
    """
    cfg = config or GmresConfig()
    b = np.asarray(b, dtype=float)
    n = b.size
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if x.shape != b.shape:
        raise ContractViolation("x0 and b must have the same length")

    left = apply_Pinv is not None and cfg.side == "left"
    if apply_Pinv is None:
        operator = lambda v: _checked(apply_A, v, "apply_A")
        correction = lambda u: u
        monitored = lambda r: r
    elif left:
        operator = lambda v: _checked(apply_Pinv, _checked(apply_A, v, "apply_A"), "apply_Pinv")
        correction = lambda u: u
        monitored = lambda r: _checked(apply_Pinv, r, "apply_Pinv")
    else:
        operator = lambda v: _checked(apply_A, _checked(apply_Pinv, v, "apply_Pinv"), "apply_A")
        correction = lambda u: _checked(apply_Pinv, u, "apply_Pinv")
        monitored = lambda r: r

    def residual(x):
        return monitored(b - _checked(apply_A, x, "apply_A"))

    r = residual(x)
    r0_norm = np.linalg.norm(r)
    stats = SolveStats()
    if r0_norm == 0.0:
        stats.converged = True
        return x, stats

    cycle = min(cfg.restart or cfg.maxit, cfg.maxit, n)
    while stats.iterations < cfg.maxit:
        beta = np.linalg.norm(r)
        m = min(cycle, cfg.maxit - stats.iterations)
        # the basis grows by doubling; preallocating maxit vectors of length n
        # costs more than the solve when convergence is fast
        cap = min(m, INITIAL_BASIS)
        V = np.zeros((cap + 1, n))
        H = np.zeros((cap + 1, cap))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k_done = 0
        for k in range(m):
            if k == cap:
                cap = min(2 * cap, m)
                V = _grow(V, (cap + 1, n))
                H = _grow(H, (cap + 1, cap))
            # operators may hand back their input; never orthogonalize V in place
            w = operator(V[k]).copy()
            hcol, hnext = _orthogonalize(V, k, w)
            H[:k + 1, k] = hcol
            H[k + 1, k] = hnext
            for i in range(k):
                a, c = H[i, k], H[i + 1, k]
                H[i, k] = cs[i] * a + sn[i] * c
                H[i + 1, k] = -sn[i] * a + cs[i] * c
            rr = np.hypot(H[k, k], H[k + 1, k])
            if rr == 0.0:
                raise BreakdownError("zero column in Hessenberg matrix")
            cs[k], sn[k] = H[k, k] / rr, H[k + 1, k] / rr
            H[k, k] = rr
            H[k + 1, k] = 0.0
            g[k + 1] = -sn[k] * g[k]
            g[k] = cs[k] * g[k]
            stats.iterations += 1
            k_done = k + 1
            stats.residual_history.append(abs(g[k + 1]) / r0_norm)
            breakdown = hnext <= 1e-14 * max(1.0, np.linalg.norm(hcol))
            if stats.residual_history[-1] < cfg.tol or breakdown:
                x_try = x + correction(_combine(V, H, g, k_done))
                true_res = np.linalg.norm(residual(x_try)) / r0_norm
                if true_res < cfg.tol:
                    stats.residual_history[-1] = true_res
                    stats.converged = True
                    return x_try, stats
                if breakdown:
                    raise BreakdownError(
                        f"Arnoldi breakdown at iteration {stats.iterations} "
                        f"with relative residual {true_res:.3e}")
            if k + 1 < m:
                V[k + 1] = w / hnext
        x = x + correction(_combine(V, H, g, k_done))
        r = residual(x)
    return x, stats


def _grow(a, shape):
    out = np.zeros(shape)
    out[:a.shape[0], :a.shape[1]] = a
    return out


def _combine(V, H, g, k):
    y = scipy.linalg.solve_triangular(H[:k, :k], g[:k])
    return y @ V[:k]


# ---------------------------------------------------------------- spectra


def arnoldi(apply_M, n, m, v0):
    """m steps of Arnoldi; returns (V, H) trimmed to the steps actually taken."""
    if m > n:
        raise ContractViolation(f"subspace size {m} exceeds dimension {n}")
    v0 = np.asarray(v0, dtype=float)
    V = np.zeros((m + 1, n))
    H = np.zeros((m + 1, m))
    V[0] = v0 / np.linalg.norm(v0)
    for k in range(m):
        w = _checked(apply_M, V[k], "apply_M").copy()
        hcol, hnext = _orthogonalize(V, k, w)
        # full reorthogonalization is cheap here and keeps m = n exact
        h2 = V[:k + 1] @ w
        w -= h2 @ V[:k + 1]
        hcol += h2
        hnext = np.linalg.norm(w)
        H[:k + 1, k] = hcol
        H[k + 1, k] = hnext
        if hnext <= 1e-12 * max(1.0, np.linalg.norm(hcol)):
            return V[:k + 1], H[:k + 1, :k + 1]
        V[k + 1] = w / hnext
    return V[:m], H[:m, :m]


def hessenberg_eigvals(H, tol=1e-14, max_sweeps=None):
    """Eigenvalues of an upper Hessenberg matrix by Wilkinson-shifted QR.

    Complex single-shift iteration with Givens rotations and deflation on
    negligible subdiagonals; no eigenvectors are accumulated. O(m^2) per sweep
    with a Python loop over rotations, so it is meant for m up to a few hundred.
    """
    A = np.array(H, dtype=complex)
    m = A.shape[0]
    if A.shape != (m, m):
        raise ContractViolation("H must be square")
    eig = np.zeros(m, dtype=complex)
    hi = m - 1
    sweeps = 0
    limit = max_sweeps or 100 * max(m, 1)
    while hi >= 0:
        if hi == 0:
            eig[0] = A[0, 0]
            break
        # locate the active unreduced block [lo, hi]
        lo = hi
        while lo > 0:
            s = abs(A[lo - 1, lo - 1]) + abs(A[lo, lo])
            if abs(A[lo, lo - 1]) <= tol * (s if s > 0 else 1.0):
                A[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            eig[hi] = A[hi, hi]
            hi -= 1
            continue
        sweeps += 1
        if sweeps > limit:
            raise ArithmeticError("shifted QR did not converge")
        a, b_, c, d = A[hi - 1, hi - 1], A[hi - 1, hi], A[hi, hi - 1], A[hi, hi]
        tr, det = a + d, a * d - b_ * c
        disc = np.sqrt(tr * tr / 4 - det)
        mu1, mu2 = tr / 2 + disc, tr / 2 - disc
        mu = mu1 if abs(mu1 - d) < abs(mu2 - d) else mu2
        if sweeps % 11 == 0:
            # exceptional shift to break cycles
            mu = d + abs(A[hi, hi - 1])
        blk = slice(lo, hi + 1)
        sub = A[blk, blk]
        sub -= mu * np.eye(hi - lo + 1)
        rots = []
        for i in range(hi - lo):
            x1, x2 = sub[i, i], sub[i + 1, i]
            r = np.hypot(abs(x1), abs(x2))
            if r == 0:
                c_, s_ = 1.0, 0.0
            else:
                c_, s_ = x1 / r, x2 / r
            rows = sub[i:i + 2, i:].copy()
            sub[i, i:] = np.conj(c_) * rows[0] + np.conj(s_) * rows[1]
            sub[i + 1, i:] = -s_ * rows[0] + c_ * rows[1]
            rots.append((c_, s_))
        for i, (c_, s_) in enumerate(rots):
            cols = sub[:i + 2, i:i + 2].copy()
            sub[:i + 2, i] = cols[:, 0] * c_ + cols[:, 1] * s_
            sub[:i + 2, i + 1] = -cols[:, 0] * np.conj(s_) + cols[:, 1] * np.conj(c_)
        sub += mu * np.eye(hi - lo + 1)
        A[blk, blk] = sub
    return eig


def arnoldi_ritz(apply_M, n, m, v0=None, method="lapack"):
    """Ritz values of ``apply_M`` from an m-step Arnoldi run.

    ``method="qr"`` uses :func:`hessenberg_eigvals`; ``"lapack"`` hands the
    Hessenberg matrix to LAPACK's shifted-QR driver, which is what large m needs.
    An early (invariant-subspace) breakdown returns the values found so far.
    """
    if v0 is None:
        v0 = np.ones(n) + np.arange(n) / max(n, 1)
    _, H = arnoldi(apply_M, n, m, v0)
    if method == "qr":
        return hessenberg_eigvals(H)
    if method == "lapack":
        return scipy.linalg.eigvals(H, check_finite=True, overwrite_a=False)
    raise ValueError(f"unknown method {method!r}")
