import numpy as np
import pytest

from daepencil import (Pencil, SemilinearDAE, build_reduced, check_consistency,
                       consistency_project, decompose, parse_expr, phi_operator)
from daepencil.errors import NoConvergence, PhiSingular
from daepencil.selftest import _paper_projector_decomposition


def make_rs(pencil, exprs):
    dae = SemilinearDAE(pencil=pencil,
                        f=[parse_expr(s, pencil.n) for s in exprs])
    return build_reduced(dae, decompose(pencil))


@pytest.fixture
def rs_sqrt(sqrt_growth_pencil):
    return make_rs(sqrt_growth_pencil, ["2*x2", "x1*x2-1"])


@pytest.fixture
def rs_circle(circle_pencil):
    return make_rs(circle_pencil, ["0", "x1^2+x2^2+x2-1"])


@pytest.fixture
def rs_singular3(singular3_pencil):
    return make_rs(singular3_pencil,
                   ["(x1-x3-1)^3+x1-x3-x2", "x1-x3+x2",
                    "-(x2^3+3*x2^2+x2+1)-(t+1)*x3^2"])


def test_drift_reference_values(rs_sqrt, rs_circle):
    # differential drift (2 x2, 0) for the sqrt-growth problem
    assert np.allclose(rs_sqrt.pi(0.0, [3.0, 0.5]), [1.0, 0.0])
    # and -b * x_p1 on the circle problem (b = 1)
    assert np.allclose(rs_circle.pi(0.0, [0.5, 0.8]), [-0.5, 0.0])


def test_zero_right_side_zero_drift():
    p = Pencil(np.eye(2), np.zeros((2, 2)))
    rs = make_rs(p, ["0", "0"])
    u1, u2 = rs.upsilon(0.0, [1.0, 2.0])
    assert np.allclose(u1, 0.0) and np.allclose(u2, 0.0)


def test_phi_reference_values(rs_sqrt, rs_circle):
    phi, cond = phi_operator(rs_sqrt, 0.0, [3.0, 0.5])
    assert np.allclose(phi, [[2.0]])
    phi3, _ = phi_operator(rs_circle, 0.0, [0.0, 1.0])
    assert np.allclose(phi3, [[2.0]])


def test_phi_singular3_in_reference_bases(singular3_pencil):
    # with the exactly known projector system the constraint Jacobian is the
    # scalar -3 (x2 + 1)^2 in the stored bases
    dec, p = _paper_projector_decomposition_3(singular3_pencil)
    dae = SemilinearDAE(pencil=p, f=[
        parse_expr("(x1-x3-1)^3+x1-x3-x2", 3),
        parse_expr("x1-x3+x2", 3),
        parse_expr("-(x2^3+3*x2^2+x2+1)-(t+1)*x3^2", 3)])
    rs = build_reduced(dae, dec)
    phi, _ = phi_operator(rs, 0.0, [3.0, -2.0, 1.0])
    assert np.allclose(phi, [[-3.0]])
    phi0, _ = phi_operator(rs, 0.0, [3.0, 0.0, 1.0])
    assert np.allclose(phi0, [[-3.0 * (0.0 + 1.0) ** 2]])


def _paper_projector_decomposition_3(p):
    """Reference decomposition of the 3x3 singular pencil with the exactly
    known subspace bases."""
    from daepencil.decomposition import Decomposition, projectors_from_bases, \
        semi_inverse
    s1 = np.array([[1.0, 0.0, 0.0]]).T
    s2 = np.array([[1.0, 0.0, 1.0]]).T
    pp = np.array([[0.0, 1.0, 0.0]]).T
    l1 = np.array([[1.0, 0.0, 0.0]]).T
    l2 = np.array([[0.0, 1.0, 0.0]]).T
    q = np.array([[-0.5, 0.5, 1.0]]).T
    zero = np.zeros((3, 0))
    bases = {"Xs1": s1, "Xs2": s2, "X1": zero, "X2": pp,
             "Ys1": l1, "Ys2": l2, "Y1": zero, "Y2": q}
    (S1, S2, P1, P2), rows_x = projectors_from_bases(
        [bases[k] for k in ("Xs1", "Xs2", "X1", "X2")])
    (F1, F2, Q1, Q2), rows_y = projectors_from_bases(
        [bases[k] for k in ("Ys1", "Ys2", "Y1", "Y2")])
    dec = Decomposition(
        pencil=p, bases=bases, S1=S1, S2=S2, P1=P1, P2=P2,
        F1=F1, F2=F2, Q1=Q1, Q2=Q2,
        coord_rows_x=dict(zip(("Xs1", "Xs2", "X1", "X2"), rows_x)),
        coord_rows_y=dict(zip(("Ys1", "Ys2", "Y1", "Y2"), rows_y)),
        semi_inverses={}, blocks={},
        dims={k: b.shape[1] for k, b in bases.items()})
    def block(op, xn, yn):
        bx, cy = bases[xn], dec.coord_rows_y[yn]
        if bx.shape[1] == 0:
            return np.zeros((cy.shape[0], 0))
        return cy @ op @ bx
    dec.blocks = {
        "A_gen": (block(p.A, "Xs1", "Ys1"), ("Xs1", "Ys1")),
        "B_gen": (block(p.B, "Xs1", "Ys1"), ("Xs1", "Ys1")),
        "B_und": (block(p.B, "Xs2", "Ys1"), ("Xs2", "Ys1")),
        "B_ov": (block(p.B, "Xs1", "Ys2"), ("Xs1", "Ys2")),
        "A_1": (block(p.A, "X1", "Y1"), ("X1", "Y1")),
        "B_1": (block(p.B, "X1", "Y1"), ("X1", "Y1")),
        "B_2": (block(p.B, "X2", "Y2"), ("X2", "Y2")),
    }
    dec.semi_inverses = {k: semi_inverse(k, dec, p) for k in ("Agen", "A1", "B2")}
    return dec, p


def test_reference_decomposition_singular3_verifies(singular3_pencil):
    from daepencil import verify_decomposition
    dec, p = _paper_projector_decomposition_3(singular3_pencil)
    rep = verify_decomposition(dec, p)
    assert rep.max_residual <= 1e-15


def test_consistency_project_examples(rs_sqrt, rs_singular3):
    res = consistency_project(rs_sqrt, 0.0, [3.0, 0.4])
    assert np.allclose(res.x, [3.0, 0.5], atol=1e-9)
    assert res.residual <= 1e-9
    res4 = consistency_project(rs_singular3, 0.0, [3.0, -1.5, 1.0])
    assert np.allclose(res4.x, [3.0, -2.0, 1.0], atol=1e-8)


def test_affine_constraint_converges_in_one_iteration():
    p = Pencil([[1, 0], [0, 0]], [[0, 0], [0, 1]])
    rs = make_rs(p, ["x2", "3*x1-2*x2+1"])   # x2 = (3 x1 + 1) / 3
    res = consistency_project(rs, 0.0, [1.0, 100.0])
    assert res.iterations == 1
    assert np.isclose(res.x[1], 4.0 / 3.0)


def test_check_consistency_examples(rs_singular3, rs_sqrt, riccati_pencil):
    rs1 = make_rs(riccati_pencil, ["x1^2", "sin(t)"])
    r = check_consistency(rs1, 0.0, [-1.0, np.sin(0.0) + 1.0])
    assert r.ae1 <= 1e-14 and r.ae2 is None
    r4 = check_consistency(rs_singular3, 0.0, [3.0, -2.0, 1.0])
    assert r4.ae1 <= 1e-12 and r4.ae2 <= 1e-12
    # residual of the algebraic equation, not distance to the solved manifold:
    # |B2^{-1} Q2 f - x_p2| = |(x1 x2 - 1) - x2| = 0.4 at (3, 0.7)
    r2 = check_consistency(rs_sqrt, 0.0, [3.0, 0.7])
    assert np.isclose(r2.ae1, 0.4)


def test_projection_is_retraction(rs_circle):
    res = consistency_project(rs_circle, 0.0, [0.5, 0.9])
    res2 = consistency_project(rs_circle, 0.0, res.x)
    assert np.linalg.norm(res2.x - res.x) <= 1e-10


def test_phi_matches_finite_difference_jacobian(rs_sqrt, rs_singular3, rng):
    for rs, base in ((rs_sqrt, [2.5, None]), (rs_singular3, [3.0, None, 1.0])):
        for _ in range(5):
            guess = [v if v is not None else float(rng.uniform(-3, -1))
                     for v in base]
            res = consistency_project(rs, 0.3, guess)
            x = res.x
            phi, _ = phi_operator(rs, 0.3, x)
            bx2 = rs.dec.bases["X2"]
            cy2 = rs.dec.coord_rows_y["Y2"]
            B = rs.dae.pencil.B
            h = 1e-6

            def F(xi):
                xx = x - rs.dec.P2 @ x + bx2 @ xi
                return cy2 @ (rs.dec.Q2 @ (rs.dae.f_vec(0.3, xx) - B @ xx))

            xi0 = rs.dec.coords(x, "X2")
            fd = np.column_stack([
                (F(xi0 + h * e) - F(xi0 - h * e)) / (2 * h)
                for e in np.eye(bx2.shape[1])])
            assert np.max(np.abs(phi - fd)) <= 1e-5 * (1 + np.max(np.abs(phi)))


def test_dae_residual_vanishes_on_manifold(rs_sqrt, rs_singular3, rng):
    scale = rs_sqrt.dae.pencil.scale()
    for _ in range(10):
        x1 = float(rng.uniform(1.5, 6.0))
        res = consistency_project(rs_sqrt, 0.0, [x1, 0.3])
        assert rs_sqrt.dae_residual(0.0, res.x) <= 1e-8 * scale
    res4 = consistency_project(rs_singular3, 0.2, [2.0, -1.8, 0.7])
    assert rs_singular3.dae_residual(0.2, res4.x) <= 1e-8 * \
        rs_singular3.dae.pencil.scale()


def test_component_roundtrip_identity(rs_singular3, rng):
    dec = rs_singular3.dec
    for _ in range(10):
        x = rng.standard_normal(3)
        parts = dec.components(x)
        back = parts["xs1"] + parts["xs2"] + parts["xp1"] + parts["xp2"]
        assert np.linalg.norm(back - x) <= 1e-12 * (1 + np.linalg.norm(x))


def test_phi_singular_raises(rs_singular3):
    # the constraint Jacobian vanishes at x2 = -1, the cubic's flat point;
    # starting the iteration exactly there must report the singularity
    with pytest.raises(PhiSingular):
        consistency_project(rs_singular3, 0.0, [3.0, -1.0, 1.0])


def test_no_convergence_off_manifold(rs_circle):
    # no real constraint solution with x1 = 2 on the unit circle
    with pytest.raises((NoConvergence, PhiSingular)):
        consistency_project(rs_circle, 0.0, [2.0, 0.5])


def test_finite_difference_jacobian_fallback(sqrt_growth_pencil):
    dae = SemilinearDAE(pencil=sqrt_growth_pencil,
                        f=[parse_expr("2*abs(x2)", 2),
                           parse_expr("x1*x2-1", 2)],
                        fd_jacobian=True)
    rs = build_reduced(dae, decompose(sqrt_growth_pencil))
    phi, cond = phi_operator(rs, 0.0, [3.0, 0.5])
    assert np.allclose(phi, [[2.0]], atol=1e-5)
    res = consistency_project(rs, 0.0, [3.0, 0.4])
    assert np.allclose(res.x, [3.0, 0.5], atol=1e-8)
    # batch path uses the same fallback
    J = rs.jac_many(np.zeros(2), np.array([[3.0, 0.5], [2.0, 1.0]]))
    assert np.allclose(J[0, 1], [0.5, 3.0], atol=1e-5)
