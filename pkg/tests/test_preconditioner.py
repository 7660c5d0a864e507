import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from biotpit import preconditioner as pc
from biotpit.sparse import factor_spd


def _toy(kind, Bt=None, n_u=3, n_p=2, S_scale=1.0):
    A = sp.identity(n_u, format="csr")
    S = S_scale * sp.identity(n_p, format="csr")
    Bt = sp.csr_matrix((n_p, n_u)) if Bt is None else sp.csr_matrix(Bt)
    schur = pc.SchurApprox(S, factor_spd(S))
    return pc.BlockPreconditioner(pc.Kind.parse(kind), factor_spd(A), Bt, schur, n_u, np.array([], dtype=int))


@pytest.mark.parametrize("kind", ["p1", "p2"])
def test_identity_blocks(kind):
    P = _toy(kind)
    r = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    np.testing.assert_array_equal(P(r), [1, 2, 3, -4, -5])
    assert not np.any(P(np.zeros(5)))


def test_unit_schur_gives_minus_rp():
    P = _toy("p2", S_scale=1.0)
    r = np.arange(5.0)
    np.testing.assert_array_equal(P(r)[3:], -r[3:])


def test_kinds_agree_without_coupling_in_rhs():
    Bt = np.array([[1.0, 0.0, 2.0], [0.0, 1.0, 0.0]])
    r = np.array([0.0, 0.0, 0.0, 1.0, -1.0])
    # r_u = 0 so Bt z_u = 0 and both forms coincide
    np.testing.assert_allclose(_toy("p1", Bt)(r), _toy("p2", Bt)(r))


def test_kind_parse():
    assert pc.Kind.parse("P1") is pc.Kind.LowerTriangular
    assert pc.Kind.parse(pc.Kind.BlockDiagonal) is pc.Kind.BlockDiagonal
    with pytest.raises(ValueError):
        pc.Kind.parse("p3")


def test_dimension_check(trig4):
    _, s = trig4
    with pytest.raises(ValueError):
        pc.build("p1", s)(np.ones(3))


def test_block_diagonal_never_touches_bt(trig4):
    _, s = trig4
    P = pc.build("p2", s)
    assert P.Bt is None
    P(np.ones(s.n_dof))


def test_schur_matches_scaled_c(trig4):
    _, s = trig4
    S = pc.schur_approx(s).S.toarray()
    C = s.C.toarray() * s.schur_scale
    free = np.setdiff1d(np.arange(s.dofs.n_p), s.dirichlet_p.dofs)
    F = np.ix_(free, free)
    np.testing.assert_allclose(S[F], C[F], rtol=1e-15)


def _dense_p1_forward(s, r):
    """Block forward substitution on dense copies of the blocks."""
    A = s.A_bc.toarray()
    n_u = s.dofs.n_u
    S = s.schur_scale * s.C.toarray()
    D = s.dirichlet_p.dofs
    S[D, :] = 0
    S[:, D] = 0
    S[D, D] = 1.0
    P22 = -S
    P22[D, D] = 1.0
    z_u = np.linalg.solve(A, r[:n_u])
    z_p = np.linalg.solve(P22, r[n_u:] - s.Bt_bc.toarray() @ z_u)
    return np.concatenate([z_u, z_p])


@pytest.mark.oracle
def test_p1_vs_dense_forward_substitution(trig4, rng):
    _, s = trig4
    P = pc.build("p1", s)
    for _ in range(3):
        r = rng.standard_normal(s.n_dof)
        np.testing.assert_allclose(P(r), _dense_p1_forward(s, r), rtol=1e-10, atol=1e-12)


@pytest.mark.oracle
@pytest.mark.parametrize("kind", ["p1", "p2"])
def test_exactness_against_explicit_matrix(trig4, rng, kind):
    _, s = trig4
    P = pc.build(kind, s)
    M = pc.dense_matrix(P, s)
    r = rng.standard_normal(s.n_dof)
    np.testing.assert_allclose(M @ P(r), r, rtol=1e-10, atol=1e-10)


@given(st.integers(0, 2**31 - 1), st.floats(-10, 10), st.floats(-10, 10))
def test_linearity(seed, a, b):
    s = _linearity_system()
    rng = np.random.default_rng(seed)
    r1, r2 = rng.standard_normal((2, s.n_dof))
    for kind in ("p1", "p2"):
        P = _PRECONDS[kind]
        lhs = P(a * r1 + b * r2)
        rhs = a * P(r1) + b * P(r2)
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * max(1.0, np.linalg.norm(rhs))


_CACHE = {}
_PRECONDS = {}


def _linearity_system():
    if "s" not in _CACHE:
        from biotpit.assembly import build_system
        from biotpit.benchmarks import mandel_case
        from biotpit.mesh import build_uniform_mesh

        s = build_system(build_uniform_mesh(4, 4), mandel_case(), 0.1)
        _CACHE["s"] = s
        _PRECONDS.update({k: pc.build(k, s) for k in ("p1", "p2")})
    return _CACHE["s"]


def test_concurrent_apply_is_safe(trig4, rng):
    from concurrent.futures import ThreadPoolExecutor

    _, s = trig4
    P = pc.build("p1", s)
    rs = rng.standard_normal((16, s.n_dof))
    serial = [P(r) for r in rs]
    with ThreadPoolExecutor(4) as ex:
        threaded = list(ex.map(P, rs))
    for a, b in zip(serial, threaded):
        assert np.array_equal(a, b)
