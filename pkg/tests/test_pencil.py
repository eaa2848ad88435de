import numpy as np
import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from daepencil import (INDEX_ABOVE_ONE, Pencil, PencilKind, RankTolerance,
                       classify, pencil_rank, regular_index)
from daepencil.errors import NotRegular, ShapeMismatch
from daepencil.pencil import invertibility_estimate, kernel_projector


def sympy_pencil_rank(p: Pencil) -> int:
    """Exact generic rank of lam*A + B over the rationals."""
    lam = sympy.Symbol("lam")
    M = sympy.Matrix(p.A.astype(int)) * lam + sympy.Matrix(p.B.astype(int))
    return M.rank()


def test_rank_singular3(singular3_pencil):
    assert pencil_rank(singular3_pencil) == 2


def test_rank_identity_pencil():
    assert pencil_rank(Pencil(np.eye(2), np.zeros((2, 2)))) == 2


def test_rank_zero_pencil():
    assert pencil_rank(Pencil(np.zeros((2, 3)), np.zeros((2, 3)))) == 0


def test_rank_against_exact_minor_oracle(rng):
    for _ in range(20):
        A = rng.integers(-3, 4, size=(4, 3)).astype(float)
        B = rng.integers(-3, 4, size=(4, 3)).astype(float)
        p = Pencil(A, B)
        assert pencil_rank(p) == sympy_pencil_rank(p)


def test_classify_riccati(riccati_pencil):
    cls = classify(riccati_pencil)
    assert cls.kind is PencilKind.REGULAR
    assert cls.rank == 2
    assert cls.index == 1
    assert cls.total_defect == 0


def test_classify_singular3(singular3_pencil):
    cls = classify(singular3_pencil)
    assert cls.kind is PencilKind.SINGULAR
    assert (cls.rank, cls.defect, cls.dual_defect, cls.total_defect) == (2, 1, 1, 2)
    assert cls.index is None


def test_classify_degenerate_A_zero():
    cls = classify(Pencil(np.zeros((2, 2)), np.eye(2)))
    assert cls.kind is PencilKind.REGULAR
    assert cls.index == 1


def test_regular_index_examples(sqrt_growth_pencil):
    assert regular_index(sqrt_growth_pencil.A, sqrt_growth_pencil.B) == 1
    assert regular_index(np.eye(3), np.random.default_rng(0).normal(size=(3, 3))) == 0


def test_regular_index_above_one_with_resolvent_oracle():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.eye(2)
    assert regular_index(A, B) == INDEX_ABOVE_ONE
    # oracle: the symbolic resolvent (A + mu B)^{-1} has a pole of order 2,
    # the smallest k for which mu^k * R stays finite at mu = 0
    mu = sympy.Symbol("mu")
    R = (sympy.Matrix(A.astype(int)) + mu * sympy.eye(2)).inv()
    order = None
    for k in range(5):
        scaled = sympy.simplify(mu ** k * R)
        limits = [sympy.limit(entry, mu, 0) for entry in scaled]
        if all(lim.is_finite for lim in limits):
            order = k
            break
    assert order == 2


def test_regular_index_rejects_nonregular(singular3_pencil):
    with pytest.raises(NotRegular):
        regular_index(singular3_pencil.A, singular3_pencil.B)
    with pytest.raises(NotRegular):
        regular_index(np.zeros((2, 3)), np.ones((2, 3)))


def test_invalid_pencil_shapes():
    with pytest.raises(ShapeMismatch):
        Pencil(np.eye(2), np.eye(3))
    with pytest.raises(ShapeMismatch):
        Pencil(np.array([[np.inf, 0], [0, 1]]), np.eye(2))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 10_000))
def test_defect_identities_exact(m, n, seed):
    rng = np.random.default_rng(seed)
    p = Pencil(rng.integers(-2, 3, size=(m, n)).astype(float),
               rng.integers(-2, 3, size=(m, n)).astype(float))
    cls = classify(p)
    assert cls.defect + cls.rank == n
    assert cls.dual_defect + cls.rank == m
    assert cls.total_defect == n + m - 2 * cls.rank


def test_classify_invariant_under_equivalence(riccati_pencil, sqrt_growth_pencil,
                                              circle_pencil, singular3_pencil, rng):
    for p in (riccati_pencil, sqrt_growth_pencil, circle_pencil, singular3_pencil):
        ref = classify(p)
        for _ in range(5):
            U, _ = np.linalg.qr(rng.standard_normal((p.m, p.m)))
            V, _ = np.linalg.qr(rng.standard_normal((p.n, p.n)))
            q = Pencil(U @ p.A @ V, U @ p.B @ V)
            cls = classify(q)
            assert cls.kind == ref.kind
            assert cls.rank == ref.rank
            assert cls.defect == ref.defect
            assert cls.dual_defect == ref.dual_defect
            assert cls.index == ref.index


def test_rank_repeatable_across_reseeded_runs(singular3_pencil, riccati_pencil):
    for p in (singular3_pencil, riccati_pencil):
        values = [pencil_rank(p, RankTolerance(seed=s)) for s in range(10)]
        assert len(set(values)) == 1


def test_index_one_implies_invertible_shift(sqrt_growth_pencil):
    p = sqrt_growth_pencil
    assert regular_index(p.A, p.B) == 1
    eps_rank = np.finfo(float).eps * 2
    P2 = kernel_projector(p.A)
    G = p.A + p.B @ P2
    assert invertibility_estimate(G) < 1.0 / (100.0 * eps_rank)
