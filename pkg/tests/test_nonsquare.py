"""End-to-end runs on non-square pencils: overdetermined and underdetermined
systems including constraint-drift detection and pinned free components."""

import numpy as np
import pytest

from daepencil import (FreePin, Pencil, SemilinearDAE, build_reduced, classify,
                       decompose, integrate, parse_expr)
from daepencil.reduction import check_consistency, consistency_project


def make_rs(A, B, exprs, **kwargs):
    p = Pencil(A, B)
    dae = SemilinearDAE(pencil=p, f=[parse_expr(s, p.n) for s in exprs],
                        **kwargs)
    return build_reduced(dae, decompose(p))


def test_overdetermined_consistent_run():
    # two equations, one unknown: dx1/dt = -x1 plus the redundant row x1 = x1
    rs = make_rs([[1.0], [0.0]], [[0.0], [1.0]], ["-x1", "x1"])
    cls = classify(rs.dae.pencil)
    assert cls.rank == 1 and cls.dual_defect == 1 and cls.defect == 0
    assert rs.dec.dims["Ys2"] == 1 and rs.dec.dims["Xs2"] == 0
    traj = integrate(rs, 0.0, np.array([2.0]), horizon=5.0)
    assert traj.verdict.kind == "global"
    ts = np.array(traj.times)
    assert np.max(np.abs(traj.state_array()[:, 0] - 2.0 * np.exp(-ts))) <= 1e-7
    assert max(traj.res_ae2) <= 1e-10


def test_overdetermined_drift_is_constraint_failure():
    # the second row demands x1 = x1 + t/5: consistent only at t = 0
    rs = make_rs([[1.0], [0.0]], [[0.0], [1.0]], ["-x1", "x1 + t/5"])
    traj = integrate(rs, 0.0, np.array([2.0]), horizon=5.0)
    assert traj.verdict.kind == "constraint_failure"
    assert traj.verdict.residual > 0


def test_underdetermined_pinned_run():
    # one equation, two unknowns: dx1/dt + x2 = 0 with x2 pinned to t
    rs = make_rs([[1.0, 0.0]], [[0.0, 1.0]], ["0"])
    cls = classify(rs.dae.pencil)
    assert cls.rank == 1 and cls.defect == 1
    assert rs.dec.dims["Xs2"] == 1 and rs.dec.dims["X1"] == 0
    pin = FreePin(curve=[parse_expr("1", 0), parse_expr("t", 0)],
                  functionals=np.array([[0.0, 1.0]]))
    traj = integrate(rs, 0.0, np.array([1.0, 0.0]), phi_s2=pin, horizon=4.0)
    assert traj.verdict.kind == "global"
    ts = np.array(traj.times)
    X = traj.state_array()
    assert np.max(np.abs(X[:, 0] - (1.0 - ts ** 2 / 2.0))) <= 1e-8
    assert np.max(np.abs(X[:, 1] - ts)) <= 1e-12


def test_underdetermined_requires_pin():
    rs = make_rs([[1.0, 0.0]], [[0.0, 1.0]], ["0"])
    from daepencil.errors import InconsistentStart
    with pytest.raises(InconsistentStart):
        integrate(rs, 0.0, np.array([1.0, 0.0]), horizon=1.0)


def test_consistency_residuals_nonsquare():
    rs = make_rs([[1.0], [0.0]], [[0.0], [1.0]], ["-x1", "x1"])
    r = check_consistency(rs, 0.0, np.array([3.0]))
    assert r.ae1 == 0.0 and r.ae2 <= 1e-15
    # no algebraic component to solve, projection is the identity
    res = consistency_project(rs, 0.0, np.array([3.0]))
    assert res.iterations == 0 and np.allclose(res.x, [3.0])


def test_mixed_nonsquare_with_algebraic_part():
    # 3 equations, 2 unknowns: a differential row, an algebraic row solving
    # x2, and a redundant copy of the algebraic row
    A = [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0]]
    B = [[0.0, 0.0], [0.0, 1.0], [0.0, 1.0]]
    rs = make_rs(A, B, ["2*x2", "x1*x2-1", "x1*x2-1"])
    cls = classify(rs.dae.pencil)
    assert cls.rank == 2 and cls.dual_defect == 1
    assert rs.dec.dims["X2"] == 1 and rs.dec.dims["Ys2"] == 1
    traj = integrate(rs, 0.0, np.array([3.0, 0.5]), horizon=5.0)
    assert traj.verdict.kind == "global"
    ts = np.array(traj.times)
    x1_exact = np.sqrt(4.0 * ts + 4.0) + 1.0
    assert np.max(np.abs(traj.state_array()[:, 0] - x1_exact)) <= 1e-6
    assert max(traj.res_ae2) <= 1e-9
