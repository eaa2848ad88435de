import numpy as np
import pytest

from daepencil import (Pencil, decompose, max_principal_angle, regular_split,
                       semi_inverse, verify_decomposition)
from daepencil.decomposition import Decomposition, projectors_from_bases
from daepencil.errors import IndexTooHigh
from daepencil.selftest import _paper_projector_decomposition
from daepencil.synth import assemble_pencil, random_ground_truth


def test_riccati_projectors_match_reference(riccati_pencil):
    dec = decompose(riccati_pencil)
    assert np.allclose(dec.P1, [[1, 0], [-1, 0]], atol=1e-12)
    assert np.allclose(dec.P2, [[0, 0], [1, 1]], atol=1e-12)
    assert np.allclose(dec.Q1, [[1, 0], [0, 0]], atol=1e-12)
    assert np.allclose(dec.Q2, [[0, 0], [0, 1]], atol=1e-12)
    assert max_principal_angle(dec.bases["X2"], np.array([[0.0, 1.0]]).T) < 1e-12


def test_reference_projectors_verify_exactly():
    for which in ("riccati", "sqrt_growth"):
        dec, p = _paper_projector_decomposition(which)
        rep = verify_decomposition(dec, p)
        assert rep.max_residual == 0.0


def test_swapped_projectors_fail_intertwining(riccati_pencil):
    dec = decompose(riccati_pencil)
    swapped = Decomposition(
        pencil=dec.pencil, bases=dec.bases,
        S1=dec.S1, S2=dec.S2, P1=dec.P1, P2=dec.P2,
        F1=dec.F1, F2=dec.F2, Q1=dec.Q2, Q2=dec.Q1,
        coord_rows_x=dec.coord_rows_x, coord_rows_y=dec.coord_rows_y,
        semi_inverses=dec.semi_inverses, blocks=dec.blocks, dims=dec.dims)
    rep = verify_decomposition(swapped, riccati_pencil)
    # raw residual of the direct evaluation Q_i A - A P_i on the swapped pair
    raw = max(np.max(np.abs(dec.Q2 @ riccati_pencil.A - riccati_pencil.A @ dec.P1)),
              np.max(np.abs(dec.Q1 @ riccati_pencil.A - riccati_pencil.A @ dec.P2)))
    assert raw >= 0.5
    assert rep.families["intertwining"] > 1e-2


def test_zero_pencil_decomposition():
    p = Pencil(np.zeros((2, 2)), np.zeros((2, 2)))
    dec = decompose(p)
    assert np.allclose(dec.S2, np.eye(2))
    assert dec.report.families["annihilation"] == 0.0
    assert dec.dims == {"Xs1": 0, "Xs2": 2, "X1": 0, "X2": 0,
                        "Ys1": 0, "Ys2": 2, "Y1": 0, "Y2": 0}


def test_singular3_dims_and_subspaces(singular3_pencil):
    dec = decompose(singular3_pencil)
    assert [dec.dims[k] for k in ("Xs1", "Xs2", "X1", "X2")] == [1, 1, 0, 1]
    assert [dec.dims[k] for k in ("Ys1", "Ys2", "Y1", "Y2")] == [1, 1, 0, 1]
    assert max_principal_angle(dec.bases["Xs2"],
                               np.array([[1.0, 0.0, 1.0]]).T) <= 1e-8
    assert max_principal_angle(dec.bases["X2"],
                               np.array([[0.0, 1.0, 0.0]]).T) <= 1e-8


def test_invertible_A_gives_trivial_split():
    dec = decompose(Pencil(np.eye(2), np.diag([1.0, 2.0])))
    assert dec.dims["X1"] == 2 and dec.dims["X2"] == 0
    assert np.allclose(dec.P1, np.eye(2))
    assert np.allclose(dec.P2, 0.0)


def test_regular_split_reference_projectors(sqrt_growth_pencil):
    P1, P2, Q1, Q2 = regular_split(sqrt_growth_pencil.A, sqrt_growth_pencil.B)
    assert np.allclose(P1, np.diag([1.0, 0.0]), atol=1e-12)
    assert np.allclose(P2, np.diag([0.0, 1.0]), atol=1e-12)
    assert np.allclose(Q1, np.diag([1.0, 0.0]), atol=1e-12)
    assert np.allclose(Q2, np.diag([0.0, 1.0]), atol=1e-12)


def test_regular_split_invertible_A():
    A = np.array([[2.0, 1.0], [0.0, 1.0]])
    P1, P2, Q1, Q2 = regular_split(A, np.eye(2))
    assert np.allclose(P1, np.eye(2))
    assert np.allclose(P2, 0.0)


def test_regular_split_modes_agree(riccati_pencil, sqrt_growth_pencil, rng):
    cases = [(riccati_pencil.A, riccati_pencil.B),
             (sqrt_growth_pencil.A, sqrt_growth_pencil.B)]
    for d1, d2 in ((2, 1), (1, 2), (3, 2)):
        gt = assemble_pencil(rng, [], [], d1, d2)
        cases.append((gt.pencil.A, gt.pencil.B))
    for A, B in cases:
        kr = regular_split(A, B, mode="KernelRange")
        res = regular_split(A, B, mode="Residue")
        for M1, M2 in zip(kr, res):
            assert np.max(np.abs(M1 - M2)) <= 1e-8


def test_regular_split_round_trip_ground_truth(rng):
    for _ in range(10):
        d1, d2 = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        d = d1 + d2
        A0 = np.zeros((d, d))
        B0 = np.zeros((d, d))
        q, _ = np.linalg.qr(rng.standard_normal((d1, d1)))
        A0[:d1, :d1] = q * rng.uniform(0.5, 2.0)
        B0[:d1, :d1] = rng.standard_normal((d1, d1))
        q2, _ = np.linalg.qr(rng.standard_normal((d2, d2)))
        B0[d1:, d1:] = q2 * rng.uniform(0.5, 2.0)
        T, _ = np.linalg.qr(rng.standard_normal((d, d)))
        S, _ = np.linalg.qr(rng.standard_normal((d, d)))
        A, B = T @ A0 @ S, T @ B0 @ S
        # spectral projectors of a regular index-1 pencil are unique
        E = np.zeros((d, d))
        E[:d1, :d1] = np.eye(d1)
        P1_true = np.linalg.inv(S) @ E @ S
        Q1_true = T @ E @ T.T
        P1, P2, Q1, Q2 = regular_split(A, B)
        assert np.max(np.abs(P1 - P1_true)) <= 1e-8
        assert np.max(np.abs(Q1 - Q1_true)) <= 1e-8


def test_regular_split_index_too_high():
    with pytest.raises(IndexTooHigh):
        regular_split(np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2))
    with pytest.raises(IndexTooHigh):
        decompose(Pencil(np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2)))


def test_singular_pencil_with_high_index_block_rejected(rng):
    # chain block of degree 1 next to a nilpotent regular block: the pencil is
    # singular, its regular part has index 2, and must be rejected
    A0 = np.zeros((3, 4))
    B0 = np.zeros((3, 4))
    A0[0, 0] = 1.0
    B0[0, 1] = 1.0
    A0[1, 3] = 1.0              # regular part A = [[0,1],[0,0]], B = I
    B0[1, 2] = 1.0
    B0[2, 3] = 1.0
    U, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    V, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    with pytest.raises(IndexTooHigh):
        decompose(Pencil(U @ A0 @ V, U @ B0 @ V))


def test_decompose_accepts_precomputed_bases(singular3_pencil):
    from daepencil import Side, polynomial_kernel_basis
    primal = polynomial_kernel_basis(singular3_pencil, Side.PRIMAL)
    dual = polynomial_kernel_basis(singular3_pencil, Side.DUAL)
    dec = decompose(singular3_pencil, bases=(primal, dual))
    assert dec.dims["Xs2"] == 1 and dec.dims["X2"] == 1
    assert dec.report.max_residual <= 1e-10


def test_semi_inverse_reference_values(riccati_pencil, sqrt_growth_pencil):
    dec1 = decompose(riccati_pencil)
    assert np.allclose(semi_inverse("A1", dec1), [[1, 0], [-1, 0]], atol=1e-12)
    dec2 = decompose(sqrt_growth_pencil)
    assert np.allclose(semi_inverse("A1", dec2), [[1, 0], [0, 0]], atol=1e-12)
    dec3 = decompose(Pencil(np.eye(2), np.eye(2)))
    assert np.allclose(semi_inverse("A1", dec3), np.eye(2), atol=1e-12)


def test_semi_inverse_triples(singular3_pencil):
    p = singular3_pencil
    dec = decompose(p)
    agen = dec.semi_inverses["Agen"]
    EAgen = dec.F1 @ p.A
    assert np.allclose(agen @ EAgen, dec.S1, atol=1e-10)
    assert np.allclose(EAgen @ agen, dec.F1, atol=1e-10)
    assert np.allclose(agen, dec.S1 @ agen, atol=1e-10)
    b2 = dec.semi_inverses["B2"]
    EB2 = dec.Q2 @ p.B
    assert np.allclose(b2 @ EB2, dec.P2, atol=1e-10)
    assert np.allclose(EB2 @ b2, dec.Q2, atol=1e-10)


def test_random_assembled_pencils_ground_truth(rng):
    for _ in range(60):
        gt = random_ground_truth(rng)
        dec = decompose(gt.pencil)
        assert dec.report.max_residual <= 1e-8
        assert dec.dims == gt.dims
        if gt.dims["Xs2"]:
            assert max_principal_angle(dec.bases["Xs2"], gt.leading_span) <= 1e-7
        if gt.chain_span.shape[1]:
            chain = np.hstack([dec.bases["Xs1"][:, :0], gt.chain_span])
            # computed singular domain contains the canonical chain span
            stacked = np.hstack([dec.bases["Xs1"], dec.bases["Xs2"]])
            resid = gt.chain_span - stacked @ np.linalg.lstsq(
                stacked, gt.chain_span, rcond=None)[0]
            assert np.max(np.abs(resid)) <= 1e-7
        if gt.image_span.shape[1]:
            resid = gt.image_span - dec.bases["Ys1"] @ np.linalg.lstsq(
                dec.bases["Ys1"], gt.image_span, rcond=None)[0]
            assert np.max(np.abs(resid)) <= 1e-7


def test_shift_operator_invertible_for_regular(riccati_pencil,
                                               sqrt_growth_pencil):
    for p in (riccati_pencil, sqrt_growth_pencil):
        dec = decompose(p)
        G = p.A + p.B @ dec.P2
        assert np.linalg.cond(G) < 1e8
        for j in ("1", "2"):
            xj = dec.bases[f"X{j}"]
            yj = dec.bases[f"Y{j}"]
            if xj.shape[1]:
                assert max_principal_angle(G @ xj, yj) < 1e-10


def test_decomposition_serialization(singular3_pencil):
    dec = decompose(singular3_pencil)
    doc = dec.to_dict()
    assert doc["dims"]["Xs2"] == 1
    S1 = np.array(doc["projectors"]["S1"]["data"]).reshape(3, 3)
    assert np.allclose(S1, dec.S1)
    assert doc["residuals"]["max_residual"] <= 1e-10
