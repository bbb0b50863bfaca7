"""Approximate-inverse preconditioners for A = I + D G.

Row i of A equals row i of K_i = I + d_i G, so the approximate inverse takes
row i from K_i^{-1}. Replacing G by tau(G) turns every K_i^{-1} into
S diag(1 / (1 + d_i lambda_k)) S; interpolating these diagonals in x between
``l`` nodes gives

    P^{-1} = sum_s Phi_s S Lambda_s^{-1} S,

which costs l + 1 sine transforms per application. The circulant variant
swaps tau(G) for the Strang circulant and DST for FFT.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .discretization import DiscreteSystem
from .errors import ContractViolation, DomainError, RefusalError, SingularShiftError
from .structured import (IMAG_RESIDUE_TOL, SINGULAR_SHIFT_TOL, SineTransformPlan,
                         WindowedSineTransform, strang_circulant, tau_shifted_solve)

REFERENCE_CAP = 512


def uniform_index_nodes(n: int, l: int) -> np.ndarray:
    """l grid indices evenly spread over 0..n-1, always including both ends."""
    if not 2 <= l <= n:
        raise DomainError(f"need 2 <= l <= N = {n}, got l = {l}")
    return np.floor(np.linspace(0, n - 1, l) + 0.5).astype(int)


NODE_STRATEGIES = {"uniform-index": uniform_index_nodes}


def hat_functions(x, nodes_x) -> np.ndarray:
    """Piecewise-linear hat functions on ``nodes_x`` evaluated at ``x``; shape (l, n)."""
    l = len(nodes_x)
    return np.stack([np.interp(x, nodes_x, np.eye(l)[s]) for s in range(l)])


def _resolve_nodes(sys, l, nodes, strategy):
    n = sys.n
    if nodes is None:
        try:
            nodes = NODE_STRATEGIES[strategy](n, l)
        except KeyError:
            raise DomainError(f"unknown node strategy {strategy!r}") from None
    nodes = np.asarray(nodes, dtype=int)
    if nodes.ndim != 1 or nodes.size < 2 or nodes.size > n:
        raise DomainError(f"need 2 <= l <= N = {n} nodes")
    if np.any(np.diff(nodes) <= 0) or nodes[0] != 0 or nodes[-1] != n - 1:
        raise DomainError("nodes must be strictly increasing and include both grid ends")
    return nodes


def _check_vec(v, n):
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise ContractViolation(f"vector must have length {n}, got shape {v.shape}")
    return v


@dataclass(frozen=True, eq=False)
class TaiPreconditioner:
    n: int
    nodes: np.ndarray            # grid indices of the interpolation nodes
    nodes_x: np.ndarray
    phi: np.ndarray              # (l, n) hat-function values at the grid
    inv_eig: np.ndarray          # (l, n) entries 1 / (1 + lambda_k d(node_s))
    plan: SineTransformPlan
    window: WindowedSineTransform | None = None
    phi_window: np.ndarray | None = None     # (l, width) phi on each row's window

    @property
    def l(self) -> int:
        return self.nodes.size

    def __call__(self, v):
        return apply_tai(self, v)

    def dense(self) -> np.ndarray:
        s = self.plan.matrix()
        return sum(self.phi[k][:, None] * ((s * self.inv_eig[k]) @ s) for k in range(self.l))


def build_tai(sys: DiscreteSystem, l: int, nodes=None, strategy="uniform-index") -> TaiPreconditioner:
    nodes = _resolve_nodes(sys, l, nodes, strategy)
    nodes_x = sys.grid[nodes]
    denom = 1.0 + np.outer(sys.d[nodes], sys.tau.eigenvalues)
    if np.any(np.abs(denom) < SINGULAR_SHIFT_TOL):
        raise SingularShiftError("1 + lambda_k d(node) vanishes at some node")
    phi = hat_functions(sys.grid, nodes_x)
    plan = SineTransformPlan(sys.n)
    window = phi_window = None
    if plan.method == "bluestein":
        # phi_s vanishes outside its two neighbouring intervals, so the l
        # inner transforms are only needed there
        lo = np.array([np.flatnonzero(row)[0] for row in phi])
        hi = np.array([np.flatnonzero(row)[-1] for row in phi])
        width = int((hi - lo).max()) + 1
        starts = np.minimum(lo, sys.n - width)
        window = WindowedSineTransform(plan, starts, width)
        phi_window = np.stack([phi[s, q:q + width] for s, q in enumerate(starts)])
    return TaiPreconditioner(n=sys.n, nodes=nodes, nodes_x=nodes_x, phi=phi,
                             inv_eig=1.0 / denom, plan=plan, window=window,
                             phi_window=phi_window)


def apply_tai(p: TaiPreconditioner, v) -> np.ndarray:
    v = _check_vec(v, p.n)
    w = p.plan(v)
    if p.window is None:
        # one batched call transforms all l rows
        return np.sum(p.phi * p.plan(p.inv_eig * w), axis=0)
    rows = p.window(p.inv_eig * w) * p.phi_window
    out = np.zeros(p.n)
    width = p.window.width
    for s, q in enumerate(p.window.starts):
        out[q:q + width] += rows[s]
    return out


@dataclass(frozen=True, eq=False)
class CaiPreconditioner:
    n: int
    nodes: np.ndarray
    nodes_x: np.ndarray
    phi: np.ndarray
    inv_eig: np.ndarray          # complex, over the Strang circulant spectrum

    @property
    def l(self) -> int:
        return self.nodes.size

    def __call__(self, v):
        return apply_cai(self, v)

    def dense(self) -> np.ndarray:
        n = self.n
        F = np.fft.fft(np.eye(n), axis=0)
        Finv = np.fft.ifft(np.eye(n), axis=0)
        out = sum(self.phi[k][:, None] * ((Finv * self.inv_eig[k]) @ F) for k in range(self.l))
        return out.real


def build_cai(sys: DiscreteSystem, l: int, nodes=None, strategy="uniform-index") -> CaiPreconditioner:
    nodes = _resolve_nodes(sys, l, nodes, strategy)
    nodes_x = sys.grid[nodes]
    spectrum = strang_circulant(sys.G).spectrum
    denom = 1.0 + np.outer(sys.d[nodes], spectrum)
    if np.any(np.abs(denom) < SINGULAR_SHIFT_TOL):
        raise SingularShiftError("1 + sigma_k d(node) vanishes at some node")
    return CaiPreconditioner(n=sys.n, nodes=nodes, nodes_x=nodes_x,
                             phi=hat_functions(sys.grid, nodes_x), inv_eig=1.0 / denom)


def apply_cai(p: CaiPreconditioner, v) -> np.ndarray:
    v = _check_vec(v, p.n)
    w = np.fft.fft(v)
    z = np.sum(p.phi * np.fft.ifft(p.inv_eig * w, axis=1), axis=0)
    if np.max(np.abs(z.imag), initial=0.0) > IMAG_RESIDUE_TOL * max(1.0, np.max(np.abs(z.real))):
        raise ArithmeticError("circulant preconditioner produced a complex result")
    return z.real


def _check_cap(n, cap):
    if n > cap:
        raise RefusalError(f"reference operation limited to N <= {cap}, got N = {n}")


def apply_p2_rowwise(sys: DiscreteSystem, v, cap: int = REFERENCE_CAP) -> np.ndarray:
    """Row i of the result is row i of (I + d_i tau(G))^{-1} v. O(N^2 log N)."""
    _check_cap(sys.n, cap)
    v = _check_vec(v, sys.n)
    return np.array([tau_shifted_solve(sys.tau, di, v)[i] for i, di in enumerate(sys.d)])


def apply_p1_rowwise(sys: DiscreteSystem, v, cap: int = REFERENCE_CAP) -> np.ndarray:
    """Row i of the result is row i of (I + d_i G)^{-1} v, by dense solves."""
    _check_cap(sys.n, cap)
    v = _check_vec(v, sys.n)
    n = sys.n
    G = sys.G.dense()
    eye = np.eye(n)
    out = np.empty(n)
    for i, di in enumerate(sys.d):
        z = scipy.linalg.solve((eye + di * G).T, eye[i])
        out[i] = z @ v
    return out


def exact_inverse(sys: DiscreteSystem, cap: int = 4096):
    """Dense LU of A as a 'perfect' preconditioner for sanity checks."""
    _check_cap(sys.n, cap)
    lu = scipy.linalg.lu_factor(sys.dense_A())
    return lambda v: scipy.linalg.lu_solve(lu, v)


def make_preconditioner(sys: DiscreteSystem, kind: str, l: int | None = None):
    """Operator v -> P^{-1} v for ``kind`` in tai, cai, none, p2-ref, p1-ref, exact.

    Returns None for ``none``.
    """
    if kind == "tai":
        return build_tai(sys, l)
    if kind == "cai":
        return build_cai(sys, l)
    if kind == "none":
        return None
    if kind == "p2-ref":
        _check_cap(sys.n, REFERENCE_CAP)
        return lambda v: apply_p2_rowwise(sys, v)
    if kind == "p1-ref":
        _check_cap(sys.n, REFERENCE_CAP)
        return lambda v: apply_p1_rowwise(sys, v)
    if kind == "exact":
        return exact_inverse(sys)
    raise DomainError(f"unknown preconditioner {kind!r}")


PRECONDITIONERS = ("tai", "cai", "none", "p2-ref", "p1-ref", "exact")
