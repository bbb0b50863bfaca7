import numpy as np
import pytest

from tempfrac.discretization import ProblemConfig, build_system, coefficient_d1
from tempfrac.errors import BreakdownError, OperatorFailure
from tempfrac.krylov import (GmresConfig, arnoldi_ritz, gmres, hessenberg_eigvals)
from tempfrac.preconditioners import build_tai, exact_inverse


def well_conditioned(n, seed):
    rng = np.random.default_rng(seed)
    return np.eye(n) * 4 + rng.standard_normal((n, n)) * 0.5


def test_identity_one_iteration():
    b = np.arange(1.0, 6.0)
    x, stats = gmres(lambda v: v, b)
    assert stats.converged and stats.iterations == 1
    np.testing.assert_allclose(x, b, rtol=1e-15)


def test_zero_rhs():
    x, stats = gmres(lambda v: 2 * v, np.zeros(4))
    assert stats.converged and stats.iterations == 0 and not x.any()


@pytest.mark.parametrize("side", ["right", "left"])
def test_dense_system_vs_lu(side):
    A = well_conditioned(10, 0)
    b = np.random.default_rng(1).standard_normal(10)
    ref = np.linalg.solve(A, b)
    M = np.diag(1 / np.diag(A))
    x, stats = gmres(lambda v: A @ v, b, apply_Pinv=lambda v: M @ v,
                     config=GmresConfig(side=side))
    assert stats.converged
    assert np.linalg.norm(x - ref) / np.linalg.norm(ref) < 1e-6


def test_true_residual_reported_and_monotone():
    sys = build_system(ProblemConfig(N=64, diffusion=coefficient_d1))
    P = build_tai(sys, 8)
    b = sys.apply_A(np.sin(np.pi * sys.grid))
    for pinv in (None, P):
        x, stats = gmres(sys.apply_A, b, apply_Pinv=pinv)
        hist = np.array(stats.residual_history)
        assert np.all(np.diff(hist) <= 1e-15)
        true = np.linalg.norm(b - sys.apply_A(x)) / np.linalg.norm(b)
        assert hist[-1] == pytest.approx(true, rel=1e-12)
        assert stats.converged and hist[-1] < 1e-7 <= hist[-2]
        assert stats.pairs()[-1] == (stats.iterations, hist[-1])


def test_left_side_monitors_preconditioned_residual():
    sys = build_system(ProblemConfig(N=64, diffusion=coefficient_d1))
    P = build_tai(sys, 8)
    b = sys.apply_A(np.cos(3 * sys.grid))
    x, stats = gmres(sys.apply_A, b, apply_Pinv=P, config=GmresConfig(side="left"))
    prec = np.linalg.norm(P(b - sys.apply_A(x))) / np.linalg.norm(P(b))
    assert stats.residual_history[-1] == pytest.approx(prec, rel=1e-10)
    assert np.all(np.diff(stats.residual_history) <= 1e-15)


def test_exact_preconditioner_one_iteration():
    sys = build_system(ProblemConfig(N=48, diffusion=coefficient_d1))
    b = np.random.default_rng(2).standard_normal(48)
    _, stats = gmres(sys.apply_A, b, apply_Pinv=exact_inverse(sys))
    assert stats.iterations == 1


def test_scaling_invariance():
    sys = build_system(ProblemConfig(N=128, diffusion=coefficient_d1))
    P = build_tai(sys, 8)
    b = np.random.default_rng(3).standard_normal(128)
    for pinv in (None, P):
        _, s1 = gmres(sys.apply_A, b, apply_Pinv=pinv)
        _, s2 = gmres(sys.apply_A, 1e3 * b, apply_Pinv=pinv)
        assert s1.iterations == s2.iterations


def test_maxit_and_restart():
    A = well_conditioned(40, 4) + np.diag(np.linspace(0, 30, 40))
    b = np.ones(40)
    x, stats = gmres(lambda v: A @ v, b, config=GmresConfig(maxit=3))
    assert not stats.converged and stats.iterations == 3 and len(stats.residual_history) == 3
    x, stats = gmres(lambda v: A @ v, b, config=GmresConfig(restart=5, tol=1e-10))
    assert stats.converged
    np.testing.assert_allclose(A @ x, b, atol=1e-8)


def test_operator_failure():
    with pytest.raises(OperatorFailure):
        gmres(lambda v: v * np.nan, np.ones(3))


def test_breakdown_with_nonzero_residual():
    # singular A: b has a component outside the range, Krylov space is invariant
    A = np.diag([1.0, 0.0])
    with pytest.raises(BreakdownError):
        gmres(lambda v: A @ v, np.array([1.0, 1.0]))


def test_config_validation():
    with pytest.raises(ValueError):
        GmresConfig(tol=0)
    with pytest.raises(ValueError):
        GmresConfig(maxit=0)
    with pytest.raises(ValueError):
        GmresConfig(side="both")


# ---------------------------------------------------------------- Ritz values

@pytest.mark.parametrize("method", ["qr", "lapack"])
def test_ritz_identity(method):
    ev = arnoldi_ritz(lambda v: v, 12, 5, method=method)
    np.testing.assert_allclose(ev, 1.0, atol=1e-14)


@pytest.mark.parametrize("method", ["qr", "lapack"])
def test_ritz_diagonal(method):
    D = np.arange(1.0, 9.0)
    ev = arnoldi_ritz(lambda v: D * v, 8, 8, np.ones(8), method=method)
    np.testing.assert_allclose(np.sort(ev.real), D, atol=1e-8)
    assert np.abs(ev.imag).max() < 1e-8


@pytest.mark.parametrize("method", ["qr", "lapack"])
def test_ritz_dense_random(method):
    A = np.random.default_rng(5).standard_normal((16, 16))
    ev = arnoldi_ritz(lambda v: A @ v, 16, 16, method=method)
    ref = np.linalg.eigvals(A)
    # match each oracle eigenvalue to its nearest Ritz value
    assert max(np.abs(ev - r).min() for r in ref) < 1e-6
    assert max(np.abs(ref - e).min() for e in ev) < 1e-6


@pytest.mark.parametrize("m", [1, 2, 5, 30])
def test_hessenberg_qr_vs_lapack(m):
    rng = np.random.default_rng(m)
    H = np.triu(rng.standard_normal((m, m)), -1)
    ev = hessenberg_eigvals(H)
    ref = np.linalg.eigvals(H)
    assert max(np.abs(ev - r).min() for r in ref) < 1e-8


def test_ritz_early_breakdown_returns_invariant_subspace():
    D = np.array([2.0, 2.0, 5.0, 5.0])
    ev = arnoldi_ritz(lambda v: D * v, 4, 4, np.ones(4))
    np.testing.assert_allclose(np.sort(ev.real), [2.0, 5.0], atol=1e-12)
