import numpy as np
import sympy

from daepencil import (Pencil, Side, classify, minimal_indices,
                       polynomial_kernel_basis, validate_chain)
from daepencil.decomposition import max_principal_angle
from daepencil.kernel import PolySolution, band_matrix
from daepencil.synth import random_integer_pencil


def exact_nullity(M) -> int:
    return M.shape[1] - sympy.Matrix(M.astype(int)).rank()


def oracle_degrees(p: Pencil, side: Side):
    """Nullity-difference count #new(d) = nul(M_d) - 2 nul(M_{d-1}) + nul(M_{d-2})."""
    A, B = (p.A, p.B) if side is Side.PRIMAL else (p.A.T, p.B.T)
    cls = classify(p)
    target = cls.defect if side is Side.PRIMAL else cls.dual_defect
    m, n = A.shape
    nullities = {-2: 0, -1: 0}
    degrees = []
    for d in range(0, min(m, n) + 1):
        nullities[d] = exact_nullity(band_matrix(A, B, d))
        degrees.extend([d] * (nullities[d] - 2 * nullities[d - 1]
                              + nullities[d - 2]))
        if len(degrees) >= target:
            break
    return degrees


def test_primal_basis_singular3(singular3_pencil):
    basis = polynomial_kernel_basis(singular3_pencil, Side.PRIMAL)
    assert len(basis) == 1
    sol = basis.solutions[0]
    assert sol.degree == 0
    target = np.array([[1.0, 0.0, 1.0]]).T
    assert max_principal_angle(np.column_stack(sol.coeffs[-1:]), target) < 1e-12


def test_regular_pencil_has_empty_bases():
    p = Pencil(np.eye(2), np.eye(2))
    assert len(polynomial_kernel_basis(p, Side.PRIMAL)) == 0
    assert len(polynomial_kernel_basis(p, Side.DUAL)) == 0


def test_dual_basis_singular3_against_exact_nullspace(singular3_pencil):
    basis = polynomial_kernel_basis(singular3_pencil, Side.DUAL)
    assert len(basis) == 1
    sol = basis.solutions[0]
    assert sol.degree == 1
    # exact rational nullspace of the stacked band system
    M = band_matrix(singular3_pencil.A.T, singular3_pencil.B.T, 1)
    null = sympy.Matrix(M.astype(int)).nullspace()
    assert len(null) == 1
    exact = np.array(null[0], dtype=float).reshape(-1)
    got = sol.stacked()
    assert max_principal_angle(exact[:, None], got[:, None]) < 1e-10


def test_minimal_indices_examples(singular3_pencil, riccati_pencil):
    assert minimal_indices(singular3_pencil) == ([0], [1])
    assert minimal_indices(riccati_pencil) == ([], [])
    wide = Pencil(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))
    assert minimal_indices(wide) == ([1], [])


def test_validate_chain_exact(singular3_pencil):
    basis = polynomial_kernel_basis(singular3_pencil, Side.PRIMAL)
    rep = validate_chain(basis.solutions[0], singular3_pencil)
    assert rep.max_residual == 0.0


def test_validate_chain_detects_violation(singular3_pencil):
    bad = PolySolution(side=Side.PRIMAL, degree=0,
                       coeffs=(np.array([1.0, 0.0, 0.0]),))
    rep = validate_chain(bad, singular3_pencil)
    B = singular3_pencil.B
    scale = (np.linalg.norm(singular3_pencil.A, 2) + np.linalg.norm(B, 2))
    assert np.isclose(rep.residuals[0],
                      np.linalg.norm(B @ bad.coeffs[0]) / scale)
    assert rep.max_residual > 0.1


def test_validate_chain_perturbed(singular3_pencil, rng):
    basis = polynomial_kernel_basis(singular3_pencil, Side.DUAL)
    sol = basis.solutions[0]
    noisy = PolySolution(side=Side.DUAL, degree=sol.degree,
                         coeffs=tuple(c + 1e-6 * rng.standard_normal(c.shape)
                                      for c in sol.coeffs))
    rep = validate_chain(noisy, singular3_pencil)
    assert 1e-7 <= rep.max_residual <= 1e-5


def test_degrees_match_nullity_difference_oracle(rng):
    pencils = [random_integer_pencil(rng, int(rng.integers(1, 6)),
                                     int(rng.integers(1, 6)))
               for _ in range(10)]
    pencils.append(Pencil(np.zeros((2, 2)), np.zeros((2, 2))))
    for p in pencils:
        for side in (Side.PRIMAL, Side.DUAL):
            assert polynomial_kernel_basis(p, side).degrees == \
                oracle_degrees(p, side)


def test_basis_invariants_on_random_integer_pencils(rng):
    for _ in range(15):
        p = random_integer_pencil(rng, int(rng.integers(1, 6)),
                                  int(rng.integers(1, 6)))
        cls = classify(p)
        for side, count in ((Side.PRIMAL, cls.defect), (Side.DUAL, cls.dual_defect)):
            basis = polynomial_kernel_basis(p, side)
            assert len(basis) == count
            for sol in basis.solutions:
                rep = validate_chain(sol, p)
                assert rep.max_residual <= 1e-10
            if count:
                leads = np.column_stack([s.coeffs[-1] for s in basis.solutions])
                assert np.linalg.matrix_rank(leads) == count
            degs = basis.degrees
            assert degs == sorted(degs)


def test_degree_bounds(singular3_pencil):
    prim = polynomial_kernel_basis(singular3_pencil, Side.PRIMAL)
    m, n = singular3_pencil.shape
    assert sum(prim.degrees) <= m
    assert sum(prim.degrees) + len(prim) <= n


def test_canonical_normalization(singular3_pencil):
    sol = polynomial_kernel_basis(singular3_pencil, Side.PRIMAL).solutions[0]
    lead = sol.coeffs[-1]
    assert np.isclose(np.linalg.norm(lead), 1.0)
    first = lead[np.argmax(np.abs(lead) > 1e-12 * np.max(np.abs(lead)))]
    assert first > 0


def test_minimal_indices_invariant_under_equivalence(singular3_pencil, rng):
    ref = minimal_indices(singular3_pencil)
    for _ in range(5):
        U, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        V, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        q = Pencil(U @ singular3_pencil.A @ V, U @ singular3_pencil.B @ V)
        assert minimal_indices(q) == ref
