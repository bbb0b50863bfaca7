"""Fast structured-matrix kernels.

Symmetric Toeplitz matrices (matvec by circulant embedding), the orthonormal
DST-I, the tau algebra it diagonalizes, the Hankel correction that projects a
symmetric Toeplitz matrix into that algebra, and the Strang circulant.

Every matrix class here stores O(n) data and exposes ``dense()`` so that tests
can compare against plain dense linear algebra.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft
import scipy.io
import scipy.sparse

from .errors import ContractViolation, SingularShiftError

SINGULAR_SHIFT_TOL = 1e-14
IMAG_RESIDUE_TOL = 1e-10


def _as_vector(x, n, name="x"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != n:
        raise ContractViolation(f"{name} must have length {n}, got shape {x.shape}")
    return x


def _largest_prime_factor(m: int) -> int:
    largest, p = 1, 2
    while p * p <= m:
        while m % p == 0:
            largest, m = p, m // p
        p += 1
    return max(largest, m)


# pocketfft runs the DST-I on a length 2(n+1) FFT, which is slow when n + 1
# has a large prime factor (n = 4096 gives 4097 = 17 * 241)
BLUESTEIN_PRIME = 50


class _BluesteinDST:
    """DST-I as a chirp convolution of length >= 2n - 1.

    Uses jk = (j^2 + k^2 - (k - j)^2) / 2, so every FFT has a fast length
    whatever the factorization of n + 1.
    """

    def __init__(self, n):
        L = n + 1
        self.n = n
        self.M = M = scipy.fft.next_fast_len(2 * n - 1)
        m = np.arange(n + 1)
        # exp(-i pi m^2 / (2L)) has period 4L in m^2; reduce first for accuracy
        chirp = np.exp(-1j * np.pi * ((m * m) % (4 * L)) / (2 * L))
        h = np.zeros(M, dtype=complex)
        h[:n] = np.conj(chirp[:n])
        h[M - n + 1:] = np.conj(chirp[1:n])[::-1]
        self.kernel = scipy.fft.fft(h)
        self.chirp = chirp[1:]
        post = -np.sqrt(2.0 / L) * self.chirp
        self.post_re, self.post_im = post.real.copy(), post.imag.copy()

    def __call__(self, x):
        buf = np.zeros(x.shape[:-1] + (self.M,), dtype=complex)
        np.multiply(x, self.chirp, out=buf[..., :self.n])
        scipy.fft.fft(buf, axis=-1, overwrite_x=True)
        buf *= self.kernel
        conv = scipy.fft.ifft(buf, axis=-1, overwrite_x=True)[..., :self.n]
        return self.post_re * conv.imag + self.post_im * conv.real


class WindowedSineTransform:
    """Rows of the DST-I evaluated on one output window each.

    Row s of ``x`` is transformed and only entries ``starts[s] .. starts[s] +
    width - 1`` are returned. Through the chirp convolution this needs FFTs of
    length n + width - 1 instead of 2n - 1. Each row counts as one transform
    on the parent plan.
    """

    def __init__(self, plan: "SineTransformPlan", starts, width: int):
        n = plan.n
        starts = np.asarray(starts, dtype=int)
        if width < 1 or np.any(starts < 0) or np.any(starts + width > n):
            raise ContractViolation("output windows must lie inside 0..n-1")
        self.plan, self.starts, self.width = plan, starts, int(width)
        L = n + 1
        self.M = M = scipy.fft.next_fast_len(n + width - 1)
        # kernel row s holds conj(c_d) for d = q0 - (n - 1) .. q0 + width - 1
        d = starts[:, None] - (n - 1) + np.arange(n + width - 1)[None, :]
        h = np.zeros((starts.size, M), dtype=complex)
        h[:, :n + width - 1] = np.exp(1j * np.pi * ((d * d) % (4 * L)) / (2 * L))
        self.kernels = scipy.fft.fft(h, axis=-1)
        m = np.arange(1, n + 1)
        self.chirp = np.exp(-1j * np.pi * ((m * m) % (4 * L)) / (2 * L))
        k = starts[:, None] + 1 + np.arange(width)[None, :]
        post = -np.sqrt(2.0 / L) * np.exp(-1j * np.pi * ((k * k) % (4 * L)) / (2 * L))
        self.post_re, self.post_im = post.real.copy(), post.imag.copy()

    def __call__(self, x):
        n, w = self.plan.n, self.width
        x = np.asarray(x, dtype=float)
        if x.shape != (self.starts.size, n):
            raise ContractViolation(f"expected shape {(self.starts.size, n)}, got {x.shape}")
        self.plan.count += x.shape[0]
        buf = np.zeros((x.shape[0], self.M), dtype=complex)
        np.multiply(x, self.chirp, out=buf[:, :n])
        scipy.fft.fft(buf, axis=-1, overwrite_x=True)
        buf *= self.kernels
        conv = scipy.fft.ifft(buf, axis=-1, overwrite_x=True)[:, n - 1:n - 1 + w]
        return self.post_re * conv.imag + self.post_im * conv.real


def _pocketfft_dst(x):
    return scipy.fft.dst(x, type=1, norm="ortho", axis=-1)


class SineTransformPlan:
    """Reusable orthonormal DST-I of a fixed size.

    ``plan(x)`` transforms a vector, or every row of a 2-D array. The
    ``count`` attribute records how many length-``n`` transforms have been
    performed, which the preconditioner tests use to check transform budgets.
    ``method`` is ``"pocketfft"`` or ``"bluestein"``; by default it is picked
    from the factorization of n + 1.
    """

    def __init__(self, n: int, method: str | None = None):
        if n < 1:
            raise ContractViolation(f"transform size must be >= 1, got {n}")
        self.n = int(n)
        self.count = 0
        if method is None:
            method = "bluestein" if _largest_prime_factor(n + 1) > BLUESTEIN_PRIME else "pocketfft"
        if method == "bluestein":
            self._kernel = _BluesteinDST(self.n)
        elif method == "pocketfft":
            self._kernel = _pocketfft_dst
        else:
            raise ValueError(f"unknown DST method {method!r}")
        self.method = method

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim not in (1, 2) or x.shape[-1] != self.n:
            raise ContractViolation(
                f"DST plan of size {self.n} got array of shape {x.shape}")
        self.count += 1 if x.ndim == 1 else x.shape[0]
        return self._kernel(x)

    def reset_count(self):
        self.count = 0

    def matrix(self):
        """Dense S, for oracles only."""
        n = self.n
        idx = np.arange(1, n + 1)
        return np.sqrt(2.0 / (n + 1)) * np.sin(np.pi * np.outer(idx, idx) / (n + 1))


def dst1(plan: SineTransformPlan, x) -> np.ndarray:
    """y_i = sqrt(2/(n+1)) sum_j sin(pi i j/(n+1)) x_j, with 1-based i, j.

    The transform is orthonormal and its own inverse.
    """
    return plan(_as_vector(x, plan.n))


def _next_pow2(m):
    return 1 << (int(m) - 1).bit_length()


@dataclass(frozen=True, eq=False)
class SymmetricToeplitz:
    """Symmetric Toeplitz matrix M[i, j] = first_column[|i - j|]."""

    first_column: np.ndarray
    _embedded: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        c = np.array(self.first_column, dtype=float).ravel()
        if c.size < 1:
            raise ContractViolation("first_column must be non-empty")
        if not np.all(np.isfinite(c)):
            raise ContractViolation("first_column entries must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "first_column", c)
        n = c.size
        size = _next_pow2(2 * n)
        col = np.zeros(size)
        col[:n] = c
        col[size - n + 1:] = c[:0:-1]
        object.__setattr__(self, "_embedded", np.fft.rfft(col))

    @property
    def n(self) -> int:
        return self.first_column.size

    def matvec(self, x) -> np.ndarray:
        return toeplitz_matvec(self, x)

    def dense(self) -> np.ndarray:
        idx = np.arange(self.n)
        return self.first_column[np.abs(idx[:, None] - idx[None, :])]


def toeplitz_matvec(t: SymmetricToeplitz, x) -> np.ndarray:
    """Product ``t @ x`` through a power-of-two circulant embedding."""
    x = _as_vector(x, t.n)
    size = 2 * (t._embedded.size - 1)
    y = np.fft.irfft(t._embedded * np.fft.rfft(x, size), size)
    return y[:t.n]


@dataclass(frozen=True, eq=False)
class HankelCorrection:
    """Symmetric Hankel matrix read off its first and last columns.

    H[i, j] = first_col[i + j] for i + j <= n - 1, else last_col[i + j - n + 1].
    """

    first_col: np.ndarray
    last_col: np.ndarray

    @property
    def n(self) -> int:
        return len(self.first_col)

    def dense(self) -> np.ndarray:
        n = self.n
        anti = np.concatenate([np.asarray(self.first_col, float),
                               np.asarray(self.last_col, float)[1:]])
        idx = np.arange(n)
        return anti[idx[:, None] + idx[None, :]]


def hankel_correction(t: SymmetricToeplitz) -> HankelCorrection:
    c = t.first_column
    n = t.n
    first = np.zeros(n)
    if n >= 3:
        first[:n - 2] = c[2:]
    return HankelCorrection(first_col=first, last_col=first[::-1].copy())


@dataclass(frozen=True, eq=False)
class TauMatrix:
    """Matrix S diag(eigenvalues) S of the tau algebra."""

    eigenvalues: np.ndarray
    plan: SineTransformPlan = field(default=None, repr=False)

    def __post_init__(self):
        lam = np.array(self.eigenvalues, dtype=float).ravel()
        lam.setflags(write=False)
        object.__setattr__(self, "eigenvalues", lam)
        if self.plan is None:
            object.__setattr__(self, "plan", SineTransformPlan(lam.size))

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    def matvec(self, x) -> np.ndarray:
        x = _as_vector(x, self.n)
        return self.plan(self.eigenvalues * self.plan(x))

    def dense(self) -> np.ndarray:
        s = self.plan.matrix()
        return (s * self.eigenvalues) @ s


def tau_from_toeplitz(t: SymmetricToeplitz, plan: SineTransformPlan | None = None) -> TauMatrix:
    """tau(T) = T - HC(T), stored by its eigenvalues (S c)_j / (S e_1)_j."""
    n = t.n
    plan = plan or SineTransformPlan(n)
    col = t.first_column - hankel_correction(t).first_col
    j = np.arange(1, n + 1)
    se1 = np.sqrt(2.0 / (n + 1)) * np.sin(np.pi * j / (n + 1))
    lam = scipy.fft.dst(col, type=1, norm="ortho") / se1
    return TauMatrix(lam, plan)


def _check_shift(denom, d):
    if np.any(np.abs(denom) < SINGULAR_SHIFT_TOL):
        raise SingularShiftError(f"I + {d}*M is singular to working precision")


def tau_shifted_solve(tau: TauMatrix, d: float, v) -> np.ndarray:
    """(I + d*tau)^{-1} v by two sine transforms and a pointwise divide."""
    v = _as_vector(v, tau.n, "v")
    denom = 1.0 + d * tau.eigenvalues
    _check_shift(denom, d)
    return tau.plan(tau.plan(v) / denom)


@dataclass(frozen=True, eq=False)
class CirculantMatrix:
    """Circulant matrix stored as the DFT of its first column."""

    spectrum: np.ndarray

    @property
    def n(self) -> int:
        return self.spectrum.size

    def matvec(self, x) -> np.ndarray:
        x = _as_vector(x, self.n)
        return _real_part(np.fft.ifft(self.spectrum * np.fft.fft(x)))

    def first_column(self) -> np.ndarray:
        return _real_part(np.fft.ifft(self.spectrum))

    def dense(self) -> np.ndarray:
        c = self.first_column()
        idx = np.arange(self.n)
        return c[(idx[:, None] - idx[None, :]) % self.n]


def _real_part(z):
    if z.size and np.max(np.abs(z.imag)) > IMAG_RESIDUE_TOL * max(1.0, np.max(np.abs(z.real))):
        raise ArithmeticError("complex residue too large for a real result")
    return z.real.copy()


def strang_circulant(t: SymmetricToeplitz) -> CirculantMatrix:
    """Circulant copying the central diagonals of ``t`` and wrapping them."""
    n = t.n
    k = np.arange(n)
    src = np.where(k <= n // 2, k, n - k)
    col = t.first_column[src]
    return CirculantMatrix(np.fft.fft(col))


def circulant_shifted_solve(c: CirculantMatrix, d: float, v) -> np.ndarray:
    v = _as_vector(v, c.n, "v")
    denom = 1.0 + d * c.spectrum
    _check_shift(denom, d)
    return _real_part(np.fft.ifft(np.fft.fft(v) / denom))


def export_matrix_market(matrix, path, comment=""):
    """Debug helper: write ``matrix.dense()`` (or an array) as a coordinate file."""
    dense = matrix.dense() if hasattr(matrix, "dense") else np.atleast_2d(np.asarray(matrix, float))
    rows, cols = np.indices(dense.shape)
    coo = scipy.sparse.coo_matrix((dense.ravel(), (rows.ravel(), cols.ravel())), shape=dense.shape)
    scipy.io.mmwrite(str(path), coo, comment=comment, field="real", symmetry="general")
