"""Built-in example problems with known closed-form solutions.

Four small systems exercise every code path: two scalar-constraint regular
problems (one with a finite escape time, one globally solvable with square-root
growth), a circle-manifold problem with bounded solutions, and a genuinely
singular 3x3 system whose pencil carries both a free component and an
overdetermined constraint row and whose solutions blow up in finite time.

Each entry provides the problem dictionary (the JSON problem-file content)
plus closed-form reference solutions for accuracy checks.
"""

from __future__ import annotations

import numpy as np

CORPUS_NAMES = ("riccati_constraint", "sqrt_growth", "circle_manifold",
                "free_component_blowup")


def _mat(rows):
    arr = np.asarray(rows, dtype=float)
    return {"rows": arr.shape[0], "cols": arr.shape[1],
            "data": [float(v) for v in arr.flatten()]}


def riccati_constraint(x10: float = -1.0, t0: float = 0.0) -> dict:
    """dx1/dt = x1^2 with the constraint x1 + x2 = sin(t).

    Solutions: x1(t) = 1 / (1/x10 + t0 - t), x2 = sin(t) - x1. Global for
    x10 < 0; finite escape time t0 + 1/x10 for x10 > 0.
    """
    x20 = float(np.sin(t0) - x10)
    return {
        "A": _mat([[1, 0], [0, 0]]),
        "B": _mat([[0, 0], [1, 1]]),
        "f": ["x1^2", "sin(t)"],
        "t_plus": 0.0,
        "initial": {"t0": t0, "x0": [x10, x20]},
        "certificates": [
            {"type": "global", "name": "global_left_halfline",
             "regions": {"m1": ["x1 < 0"]},
             "V": "x1^2", "chi": "v", "R": 1.0,
             "samples": 1024, "box": [[-40, 40], [-40, 40]]},
            {"type": "blowup", "name": "blowup_right_halfline",
             "regions": {"m1": ["x1 > 0"]},
             "V": "x1^2", "k": "2", "U": "v^(3/2)",
             "samples": 1024, "box": [[-40, 40], [-40, 40]]},
        ],
        "bounds": {},
    }


def riccati_constraint_exact(ts, x10=-1.0, t0=0.0):
    ts = np.asarray(ts, dtype=float)
    x1 = 1.0 / (1.0 / x10 + t0 - ts)
    return np.column_stack([x1, np.sin(ts) - x1])


def sqrt_growth(x10: float = 3.0, t0: float = 0.0) -> dict:
    """dx1/dt = 2 x2 with x2 = x1 x2 - 1 (constraint solvable off x1 = 1).

    Solutions grow like sqrt(t): x1 = sgn(x10-1) sqrt(4(t-t0) + (x10-1)^2) + 1,
    x2 = 1/(x1 - 1). Global but unbounded.
    """
    x20 = 1.0 / (x10 - 1.0)
    return {
        "A": _mat([[1, 0], [0, 0]]),
        "B": _mat([[0, 0], [0, 1]]),
        "f": ["2*x2", "x1*x2-1"],
        "t_plus": 0.0,
        "initial": {"t0": t0, "x0": [x10, x20]},
        "certificates": [
            {"type": "global", "name": "global_offpole",
             "regions": {"m1": ["x1 != 1"], "m2": ["x2 != 0"]},
             "V": "x1^2", "chi": "5", "R": 10.0,
             "samples": 1024, "box": [[-60, 60], [-60, 60]]},
            {"type": "invariance", "name": "never_reaches_pole",
             "regions": {"m1": ["x1 != 1"], "m2": ["x2 != 0"]},
             "W": "-(x1-1)^2", "Kr": ["abs(x1-1) >= r"],
             "samples": 1024, "box": [[-60, 60], [-60, 60]]},
        ],
        "bounds": {},
    }


def sqrt_growth_exact(ts, x10=3.0, t0=0.0):
    ts = np.asarray(ts, dtype=float)
    s = np.sign(x10 - 1.0)
    x1 = s * np.sqrt(4.0 * (ts - t0) + (x10 - 1.0) ** 2) + 1.0
    return np.column_stack([x1, 1.0 / (x1 - 1.0)])


def circle_manifold(b: float = 1.0, x10: float = 0.5, t0: float = 0.0) -> dict:
    """dx1/dt + b x1 = 0 on the circle x1^2 + x2^2 = 1 (upper branch).

    x1 = x10 exp(-b (t-t0)), x2 = sqrt(1 - x1^2); bounded for b >= 0.
    """
    x20 = float(np.sqrt(1.0 - x10 ** 2))
    return {
        "A": _mat([[1, 0], [0, 0]]),
        "B": _mat([[b, 0], [0, 1]]),
        "f": ["0", "x1^2+x2^2+x2-1"],
        "t_plus": 0.0,
        "initial": {"t0": t0, "x0": [x10, x20]},
        "certificates": [
            {"type": "invariance", "name": "stays_in_band",
             "regions": {"m1": ["x1 > -1", "x1 < 1"],
                         "m2": ["x2 > 0", "x2 <= 1"]},
             "W": "x1^2", "Kr": ["abs(x1) <= 1-r"],
             "samples": 1024, "box": [[-1.2, 1.2], [-1.2, 1.2]]},
            {"type": "bounded_manifold", "name": "algebraic_component_bounded",
             "regions": {"m2": ["x2 > 0", "x2 <= 1"]},
             "M_bound": 1.0,
             "samples": 1024, "box": [[-1.2, 1.2], [-1.2, 1.2]]},
        ],
        "bounds": {"sup_norm": 1.01},
    }


def circle_manifold_exact(ts, b=1.0, x10=0.5, t0=0.0):
    ts = np.asarray(ts, dtype=float)
    x1 = x10 * np.exp(-b * (ts - t0))
    return np.column_stack([x1, np.sqrt(1.0 - x1 ** 2)])


def free_component_blowup(x10: float = 3.0, t0: float = 0.0) -> dict:
    """Singular 3x3 system with one free component and one redundant row.

    In the variables w = x1 - x3, u = x2, xi = x3 the system reads
    dw/dt = (w-1)^3, u = -(t+1)^(1/3) xi^(2/3) - 1, with xi free; the default
    pin fixes x3(t) = t + 1, giving x1 = 1/sqrt(1-2t) + t + 2, x2 = -(t+2).
    Escape time 0.5 for the default initial data.
    """
    return {
        "A": _mat([[1, 0, -1], [0, 0, 0], [0, 0, 0]]),
        "B": _mat([[1, -1, -1], [1, 1, -1], [0, 2, 0]]),
        "f": ["(x1-x3-1)^3+x1-x3-x2", "x1-x3+x2",
              "-(x2^3+3*x2^2+x2+1)-(t+1)*x3^2"],
        "t_plus": 0.0,
        "initial": {"t0": t0, "x0": [x10, -2.0, 1.0]},
        "phi_s2": ["t+1", "0", "t+1"],
        "phi_s2_pins": [[0.0, 0.0, 1.0]],
        "certificates": [
            {"type": "blowup", "name": "blowup_above_one",
             "regions": {"m1": ["x1-x3 > 1"], "ms2": ["x3 != 0"],
                         "m2": ["x2 != -1"]},
             "V": "(x1-x3-1)^2", "chi": "2*v^2",
             "samples": 1024, "box": [[-8, 8], [-8, 8], [-8, 8]]},
        ],
        "bounds": {},
    }


def free_component_blowup_exact(ts, x10=3.0, t0=0.0):
    ts = np.asarray(ts, dtype=float)
    w0 = x10 - 1.0   # w(t0) = x10 - x30 with x30 = 1
    x1 = 1.0 / np.sqrt(-2.0 * (ts - t0) + (w0 - 1.0) ** (-2.0)) + ts + 2.0
    x2 = -(ts + 2.0)
    x3 = ts + 1.0
    return np.column_stack([x1, x2, x3])


_BUILDERS = {
    "riccati_constraint": riccati_constraint,
    "sqrt_growth": sqrt_growth,
    "circle_manifold": circle_manifold,
    "free_component_blowup": free_component_blowup,
}


def problem_dict(name: str, **kwargs) -> dict:
    """Problem-file dictionary for one of the built-in corpus entries."""
    if name not in _BUILDERS:
        raise KeyError(f"no corpus problem named {name!r}; "
                       f"choose from {CORPUS_NAMES}")
    return _BUILDERS[name](**kwargs)
