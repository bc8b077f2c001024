"""Exhaustive lattice enumeration, the trusted reference for every solver.

Walks the full box in a reflected mixed-radix Gray order so consecutive
points differ in one coordinate by one step; the objective and gradient are
updated incrementally (O(n) per point) and re-anchored periodically to keep
float drift below the comparison tolerances. Deliberately dumb and
allocation-free in the hot loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instance import Instance

POINT_CAP = 5_000_000
REANCHOR_EVERY = 4096


class PointCapError(ValueError):
    """Box too large to enumerate; carries the required point count."""

    def __init__(self, required: int, cap: int):
        super().__init__(f"box holds {required} lattice points, enumeration cap is {cap}")
        self.required = required
        self.cap = cap


@dataclass
class OracleResult:
    obj: float  # exact minimum, evaluated directly at the argmin
    argmin: np.ndarray  # first minimizer in lexicographic scan order (ties exact)
    count: int  # points visited


def box_point_count(inst: Instance) -> int:
    return inst.box_size()


def enumerate_min(inst: Instance, point_cap: int = POINT_CAP) -> OracleResult:
    """Exact minimum of the instance by full enumeration.

    Raises PointCapError instead of attempting a box larger than point_cap.
    """
    total = inst.box_size()
    if total > point_cap:
        raise PointCapError(total, point_cap)
    n = inst.n
    Q, c, l = inst.Q, inst.c, inst.l
    radix = (inst.u - inst.l + 1).astype(np.int64)

    x = l.astype(float).copy()
    grad = Q @ x
    obj = float(x @ grad + c @ x)
    best_obj = obj
    best_x = x.copy()

    # loopless reflected mixed-radix Gray walk (focus pointers f, directions o)
    digit = np.zeros(n, dtype=np.int64)
    focus = list(range(n + 1))
    direction = np.ones(n, dtype=np.int64)
    cols = [Q[:, j] for j in range(n)]
    diag = np.diag(Q).copy()

    visited = 1
    while True:
        j = focus[0]
        focus[0] = 0
        if j == n:
            break
        delta = float(direction[j])
        obj += delta * delta * diag[j] + 2.0 * delta * grad[j] + delta * c[j]
        grad += delta * cols[j]
        x[j] += delta
        digit[j] += direction[j]
        if digit[j] == 0 or digit[j] == radix[j] - 1:
            direction[j] = -direction[j]
            focus[j] = focus[j + 1]
            focus[j + 1] = j + 1
        visited += 1
        if visited % REANCHOR_EVERY == 0:
            grad = Q @ x
            obj = float(x @ grad + c @ x)
        if obj < best_obj:
            best_obj = obj
            best_x = x.copy()
        elif obj == best_obj and tuple(x) < tuple(best_x):
            best_x = x.copy()

    argmin = np.rint(best_x).astype(np.int64)
    exact = inst.objective(argmin)
    return OracleResult(obj=exact, argmin=argmin, count=visited)
