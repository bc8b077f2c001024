"""Mixed-binary convex models over the centered lattice.

The main model replaces each centered variable xt_i by magnitude binaries
y_ik (one per attainable magnitude) and a sign binary z_i. A diagonal shift
theta moves xt_i^2 weight out of the quadratic form and into the linear
binary expansion sum mags_k^2 y_ik, so a large enough theta makes the
continuous relaxation convex while every lattice point keeps its original
objective value. A one-hot baseline model (one binary per lattice level) is
included for size and bound comparisons.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cqp import CqpProblem
from .transform import CenteredProblem, snap_to_lattice

LESS, EQUAL = "<", "="


@dataclass(eq=False)
class VariableLayout:
    """Index bookkeeping for the binary block appended after the n continuous vars."""

    n_x: int
    y_start: np.ndarray  # first binary index of each variable's y block
    y_count: np.ndarray  # block lengths
    mags: list  # per variable: magnitude coefficients (main) or signed levels (one-hot)
    z_pos: Optional[np.ndarray]  # sign binary index per variable; None for one-hot
    q: int  # total binary count

    def y_slice(self, i: int) -> slice:
        s = int(self.y_start[i])
        return slice(s, s + int(self.y_count[i]))


@dataclass(eq=False)
class ReformModel:
    """Linear rows plus theta-shifted quadratic objective over (xt, binaries).

    Rows read  A xt + B b (sense) rhs  with b the binary block; binary bounds
    [0, 1] are held as variable bounds, not rows. The row set does not depend
    on theta.
    """

    kind: str  # "mbqp" or "naive"
    layout: VariableLayout
    Qc: np.ndarray
    cc: np.ndarray
    offset: float
    theta: np.ndarray
    select_cut: bool  # whether the optional z <= sum y rows are present
    A: np.ndarray  # (rows, n)
    B: np.ndarray  # (rows, q)
    rhs: np.ndarray
    senses: np.ndarray  # "<" or "=" per row
    row_tags: list  # (family, variable) per row
    Lmat: np.ndarray  # (q, n): theta -> linear cost on binaries

    unit_mask: np.ndarray = None  # carried from the centered problem, used by lift
    radius: np.ndarray = None

    @property
    def n(self) -> int:
        return self.layout.n_x

    @property
    def q(self) -> int:
        return self.layout.q

    def quad(self) -> np.ndarray:
        """Quadratic matrix on the xt block: Qc + Diag(theta)."""
        return self.Qc + np.diag(self.theta)

    def binary_cost(self) -> np.ndarray:
        """Linear coefficients subtracted on the binary block: Lmat theta."""
        return self.Lmat @ self.theta

    def with_theta(self, theta: np.ndarray) -> "ReformModel":
        """Same rows, different diagonal shift."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n,):
            raise ValueError(f"theta: expected shape ({self.n},), got {theta.shape}")
        return dataclasses.replace(self, theta=theta)

    def objective_value(self, point: np.ndarray) -> float:
        """Model objective at a stacked (xt, binaries) point, offset included."""
        point = np.asarray(point, dtype=float)
        xt, b = point[: self.n], point[self.n:]
        return float(xt @ self.quad() @ xt + self.cc @ xt - self.binary_cost() @ b + self.offset)

    def lift_point(self, xt: np.ndarray) -> np.ndarray:
        if self.kind == "naive":
            return _lift_naive(self, xt)
        return _lift_mbqp(self.layout, self.unit_mask, self.radius, xt)


def make_layout(cp: CenteredProblem) -> VariableLayout:
    """Binary layout of the main model: magnitudes per variable, then signs."""
    mags, starts, counts = [], [], []
    pos = 0
    for i in range(cp.n):
        m = int(cp.radius[i])
        levels = np.arange(1, m + 1, dtype=float) if cp.unit_mask[i] else np.arange(1, m + 1, 2, dtype=float)
        mags.append(levels)
        starts.append(pos)
        counts.append(len(levels))
        pos += len(levels)
    z_pos = pos + np.arange(cp.n)
    return VariableLayout(n_x=cp.n, y_start=np.array(starts), y_count=np.array(counts),
                          mags=mags, z_pos=z_pos, q=pos + cp.n)


def make_naive_layout(cp: CenteredProblem) -> VariableLayout:
    """One binary per lattice level, no sign binaries."""
    mags, starts, counts = [], [], []
    pos = 0
    for i in range(cp.n):
        m = int(cp.radius[i])
        step = 1 if cp.unit_mask[i] else 2
        levels = np.arange(-m, m + 1, step, dtype=float)
        mags.append(levels)
        starts.append(pos)
        counts.append(len(levels))
        pos += len(levels)
    return VariableLayout(n_x=cp.n, y_start=np.array(starts), y_count=np.array(counts),
                          mags=mags, z_pos=None, q=pos)


def build_mbqp(cp: CenteredProblem, theta: np.ndarray, select_cut: bool = True) -> ReformModel:
    """Build the main model at a given diagonal shift.

    Per variable the rows are: the magnitude envelope -sum mags_k y_ik <= xt_i
    <= sum mags_k y_ik; for unit-step variables the selection rows
    z_i <= sum_k y_ik <= 1 (the lower half is a redundant strengthening cut,
    kept unless select_cut=False); for odd variables the selection equality
    sum_k y_ik = 1; and the sign-linking rows
    sum mags_k y_ik - xt_i <= 2 m_i z_i  and  sum mags_k y_ik + xt_i <= 2 m_i (1 - z_i).
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (cp.n,):
        raise ValueError(f"theta: expected shape ({cp.n},), got {theta.shape}")
    layout = make_layout(cp)
    n, q = cp.n, layout.q
    A_rows, B_rows, rhs, senses, tags = [], [], [], [], []

    def add(ax: float, i: int, ycoef, zcoef: float, r: float, sense: str, family: str) -> None:
        a = np.zeros(n)
        a[i] = ax
        b = np.zeros(q)
        b[layout.y_slice(i)] = ycoef
        if zcoef:
            b[layout.z_pos[i]] = zcoef
        A_rows.append(a)
        B_rows.append(b)
        rhs.append(r)
        senses.append(sense)
        tags.append((family, i))

    for i in range(n):
        mags = layout.mags[i]
        m = float(cp.radius[i])
        add(-1.0, i, -mags, 0.0, 0.0, LESS, "mag_lower")
        add(+1.0, i, -mags, 0.0, 0.0, LESS, "mag_upper")
        if cp.unit_mask[i]:
            if select_cut:
                add(0.0, i, -np.ones_like(mags), +1.0, 0.0, LESS, "sel_lower")
            add(0.0, i, np.ones_like(mags), 0.0, 1.0, LESS, "sel_upper")
        else:
            add(0.0, i, np.ones_like(mags), 0.0, 1.0, EQUAL, "pick_one")
        add(-1.0, i, mags, -2.0 * m, 0.0, LESS, "sign_neg")
        add(+1.0, i, mags, +2.0 * m, 2.0 * m, LESS, "sign_pos")

    Lmat = np.zeros((q, n))
    for i in range(n):
        Lmat[layout.y_slice(i), i] = layout.mags[i] ** 2
    return ReformModel(kind="mbqp", layout=layout, Qc=cp.Qc, cc=cp.cc, offset=cp.offset,
                       theta=theta, select_cut=select_cut,
                       A=np.array(A_rows), B=np.array(B_rows), rhs=np.array(rhs),
                       senses=np.array(senses), row_tags=tags, Lmat=Lmat,
                       unit_mask=cp.unit_mask, radius=cp.radius)


def build_naive(cp: CenteredProblem, theta: Optional[np.ndarray] = None) -> ReformModel:
    """One-hot baseline: xt_i = sum lev y_lev, sum y_lev = 1, xt_i^2 = sum lev^2 y_lev.

    Used only for size and bound comparisons against the main model.
    """
    theta = np.zeros(cp.n) if theta is None else np.asarray(theta, dtype=float)
    if theta.shape != (cp.n,):
        raise ValueError(f"theta: expected shape ({cp.n},), got {theta.shape}")
    layout = make_naive_layout(cp)
    n, q = cp.n, layout.q
    A_rows, B_rows, rhs, senses, tags = [], [], [], [], []
    for i in range(n):
        levels = layout.mags[i]
        a = np.zeros(n)
        a[i] = 1.0
        b = np.zeros(q)
        b[layout.y_slice(i)] = -levels
        A_rows.append(a)
        B_rows.append(b)
        rhs.append(0.0)
        senses.append(EQUAL)
        tags.append(("value_def", i))
        b2 = np.zeros(q)
        b2[layout.y_slice(i)] = 1.0
        A_rows.append(np.zeros(n))
        B_rows.append(b2)
        rhs.append(1.0)
        senses.append(EQUAL)
        tags.append(("pick_one", i))
    Lmat = np.zeros((q, n))
    for i in range(n):
        Lmat[layout.y_slice(i), i] = layout.mags[i] ** 2
    return ReformModel(kind="naive", layout=layout, Qc=cp.Qc, cc=cp.cc, offset=cp.offset,
                       theta=theta, select_cut=False,
                       A=np.array(A_rows), B=np.array(B_rows), rhs=np.array(rhs),
                       senses=np.array(senses), row_tags=tags, Lmat=Lmat,
                       unit_mask=cp.unit_mask, radius=cp.radius)


def _lift_mbqp(layout: VariableLayout, unit_mask: np.ndarray, radius: np.ndarray,
               xt: np.ndarray) -> np.ndarray:
    xt = np.asarray(xt, dtype=float)
    n, q = layout.n_x, layout.q
    point = np.zeros(n + q)
    point[:n] = xt
    for i in range(n):
        v = xt[i]
        k = np.rint(v)
        if abs(v - k) > 1e-9 or abs(k) > radius[i] or (not unit_mask[i] and int(k) % 2 == 0):
            raise ValueError(f"coordinate {i} ({v!r}) is not on the centered lattice")
        mag = abs(int(k))
        if mag > 0:
            slot = mag - 1 if unit_mask[i] else (mag - 1) // 2
            point[n + int(layout.y_start[i]) + slot] = 1.0
        # zero keeps the all-zero magnitude block and the nonnegative sign
        point[n + int(layout.z_pos[i])] = 0.0 if k >= 0 else 1.0
    return point


def lift(cp: CenteredProblem, xt: np.ndarray) -> np.ndarray:
    """Binary witness for a centered lattice point in the main model's layout.

    The chosen magnitude binary is the one matching |xt_i| (none when
    xt_i = 0 on a unit-step variable), and the sign binary is 1 exactly for
    negative coordinates. Returns the stacked (xt, binaries) vector.
    """
    return _lift_mbqp(make_layout(cp), cp.unit_mask, cp.radius, xt)


def _lift_naive(model: ReformModel, xt: np.ndarray) -> np.ndarray:
    xt = np.asarray(xt, dtype=float)
    layout = model.layout
    point = np.zeros(model.n + model.q)
    point[: model.n] = xt
    for i in range(model.n):
        levels = layout.mags[i]
        hit = np.where(levels == np.rint(xt[i]))[0]
        if abs(xt[i] - np.rint(xt[i])) > 1e-9 or len(hit) == 0:
            raise ValueError(f"coordinate {i} ({xt[i]!r}) is not on the centered lattice")
        point[model.n + int(layout.y_start[i]) + int(hit[0])] = 1.0
    return point


@dataclass
class FeasibilityReport:
    ok: bool
    worst_row: float  # largest row violation (0 when satisfied)
    worst_binary: float  # largest distance of a binary to {0, 1}
    by_family: dict  # family -> worst violation over its rows

    def __bool__(self) -> bool:
        return self.ok


def check_feasible(model: ReformModel, point: np.ndarray, tol: float = 1e-9) -> FeasibilityReport:
    """Row-by-row feasibility of a stacked point, binaries checked against {0, 1}.

    All row data is small-integer exact, so lift output passes at tol = 0.
    """
    point = np.asarray(point, dtype=float)
    if point.shape != (model.n + model.q,):
        raise ValueError(f"point: expected shape ({model.n + model.q},), got {point.shape}")
    xt, b = point[: model.n], point[model.n:]
    vals = model.A @ xt + model.B @ b
    viol = np.where(model.senses == EQUAL, np.abs(vals - model.rhs), vals - model.rhs)
    viol = np.maximum(viol, 0.0)
    by_family: dict = {}
    for v, (family, _i) in zip(viol, model.row_tags):
        by_family[family] = max(by_family.get(family, 0.0), float(v))
    bdev = float(np.max(np.minimum(np.abs(b), np.abs(b - 1.0)))) if model.q else 0.0
    worst = float(viol.max()) if len(viol) else 0.0
    return FeasibilityReport(ok=(worst <= tol and bdev <= tol), worst_row=worst,
                             worst_binary=bdev, by_family=by_family)


def relax_model(model: ReformModel, bounds_as_rows: bool = False) -> CqpProblem:
    """Continuous relaxation as a convex-QP problem.

    Binaries relax to [0, 1]; with bounds_as_rows=True the bounds are emitted
    as explicit inequality rows (appended after the model rows: all lower
    bounds, then all upper bounds) so dual multipliers line up with the full
    row system used by the bound certificates.
    """
    n, q = model.n, model.q
    nv = n + q
    H = np.zeros((nv, nv))
    H[:n, :n] = model.quad()
    g = np.concatenate([model.cc, -model.binary_cost()])
    ineq = model.senses == LESS
    M_full = np.hstack([model.A, model.B])
    G, h = M_full[ineq], model.rhs[ineq]
    E, e = M_full[~ineq], model.rhs[~ineq]
    lb = np.concatenate([np.full(n, -np.inf), np.zeros(q)])
    ub = np.concatenate([np.full(n, np.inf), np.ones(q)])
    if bounds_as_rows:
        rows_lb = np.hstack([np.zeros((q, n)), -np.eye(q)])
        rows_ub = np.hstack([np.zeros((q, n)), np.eye(q)])
        G = np.vstack([G, rows_lb, rows_ub])
        h = np.concatenate([h, np.zeros(q), np.ones(q)])
        lb = np.full(nv, -np.inf)
        ub = np.full(nv, np.inf)
    return CqpProblem(H=H, g=g, G=G, h=h, E=E, e=e, lb=lb, ub=ub)


def dump_lp(model: ReformModel) -> str:
    """Plain-text listing of the objective and rows for desk checking."""
    names = [f"x{i}" for i in range(model.n)]
    for i in range(model.n):
        for k in range(int(model.layout.y_count[i])):
            names.append(f"y{i}_{k}")
    if model.layout.z_pos is not None:
        for i in range(model.n):
            names.append(f"z{i}")

    def terms(coefs, offset=0) -> str:
        out = []
        for j, cf in enumerate(coefs):
            if cf != 0.0:
                out.append(f"{cf:+g} {names[offset + j]}")
        return " ".join(out) if out else "0"

    lines = [f"minimize  [quadratic: xt' (Qc + Diag(theta)) xt]  {terms(model.cc)} "
             f"{terms(-model.binary_cost(), offset=model.n)}  {model.offset:+g}"]
    lines.append(f"theta = {np.array2string(model.theta, precision=12)}")
    lines.append("subject to")
    for r in range(len(model.rhs)):
        family, i = model.row_tags[r]
        coefs = np.concatenate([model.A[r], model.B[r]])
        op = "<=" if model.senses[r] == LESS else "="
        lines.append(f"  {family}[{i}]: {terms(coefs)} {op} {model.rhs[r]:g}")
    lines.append("binaries in [0, 1] (integral in the exact model)")
    return "\n".join(lines)
