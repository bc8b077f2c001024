"""Dense convex quadratic programming with certified duals.

Solves  min x'Hx + g'x  s.t.  Gx <= h, Ex = e, lb <= x <= ub  by an
infeasible-start predictor-corrector interior-point method. A presolve pass
eliminates fixed variables and singleton equalities (branching fixes many
binaries, so deep nodes shrink a lot) and catches bound-provable
infeasibility with an exact certificate; harder infeasibility falls through
to a phase-1 LP on the same core. Dual multipliers are recovered in the
original variable space and the KKT residual is reported with the solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class NonconvexError(ValueError):
    """The quadratic term is indefinite beyond the tolerated slack."""


@dataclass(eq=False)
class CqpProblem:
    """Objective value convention is x'Hx + g'x (no 1/2)."""

    H: np.ndarray
    g: np.ndarray
    G: np.ndarray  # (mi, nv) rows of Gx <= h
    h: np.ndarray
    E: np.ndarray  # (me, nv) rows of Ex = e
    e: np.ndarray
    lb: np.ndarray  # -inf allowed
    ub: np.ndarray  # +inf allowed

    def __post_init__(self) -> None:
        nv = len(self.g)
        self.H = np.asarray(self.H, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        self.G = np.asarray(self.G, dtype=float).reshape(-1, nv)
        self.h = np.asarray(self.h, dtype=float)
        self.E = np.asarray(self.E, dtype=float).reshape(-1, nv)
        self.e = np.asarray(self.e, dtype=float)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        if self.H.shape != (nv, nv):
            raise ValueError(f"H: expected ({nv}, {nv}), got {self.H.shape}")
        for name, vec, m in (("h", self.h, self.G.shape[0]), ("e", self.e, self.E.shape[0]),
                             ("lb", self.lb, nv), ("ub", self.ub, nv)):
            if vec.shape != (m,):
                raise ValueError(f"{name}: expected ({m},), got {vec.shape}")

    @property
    def nv(self) -> int:
        return len(self.g)

    def data_scale(self) -> float:
        parts = [np.abs(self.H).max(initial=0.0), np.abs(self.g).max(initial=0.0),
                 np.abs(self.G).max(initial=0.0), np.abs(self.h).max(initial=0.0),
                 np.abs(self.E).max(initial=0.0), np.abs(self.e).max(initial=0.0)]
        for bnd in (self.lb, self.ub):
            finite = bnd[np.isfinite(bnd)]
            parts.append(np.abs(finite).max(initial=0.0))
        return 1.0 + max(parts)

    def value(self, x: np.ndarray) -> float:
        return float(x @ self.H @ x + self.g @ x)


@dataclass
class FarkasCertificate:
    """Nonnegative row combination proving the constraint system empty.

    Aggregating row_weights' Gx + eq_weights' Ex plus the bound rows
    (-x_j <= -lb_j with lb_weights, x_j <= ub_j with ub_weights) yields a
    near-zero coefficient vector with a negative right-hand side.
    """

    row_weights: np.ndarray
    eq_weights: np.ndarray  # signed (equalities carry free multipliers)
    lb_weights: np.ndarray
    ub_weights: np.ndarray
    residual: float = 0.0  # max aggregated coefficient magnitude, scaled
    gap: float = 0.0  # aggregated right-hand side (negative for a valid proof)

    def verify(self, prob: CqpProblem, tol: float = 1e-8) -> bool:
        agg = (prob.G.T @ self.row_weights + prob.E.T @ self.eq_weights
               - self.lb_weights + self.ub_weights)
        rhs = float(prob.h @ self.row_weights + prob.e @ self.eq_weights)
        for w, bnd, sign in ((self.lb_weights, prob.lb, -1.0), (self.ub_weights, prob.ub, 1.0)):
            used = w > 0
            if np.any(~np.isfinite(bnd[used])):
                return False
            rhs += float(sign * (w[used] @ bnd[used]))
        sc = prob.data_scale()
        self.residual = float(np.abs(agg).max(initial=0.0)) / sc
        self.gap = rhs
        nonneg = (self.row_weights.min(initial=0.0) >= -1e-12
                  and self.lb_weights.min(initial=0.0) >= -1e-12
                  and self.ub_weights.min(initial=0.0) >= -1e-12)
        return bool(nonneg and self.residual <= tol and rhs <= -1e-9 * sc)


@dataclass
class CqpSolution:
    status: str  # "optimal", "infeasible", "unconverged"
    x: Optional[np.ndarray]
    value: Optional[float]
    ineq_mult: np.ndarray = None  # one per G row, >= 0
    eq_mult: np.ndarray = None  # one per E row, free
    lb_mult: np.ndarray = None
    ub_mult: np.ndarray = None
    kkt_residual: float = np.inf  # max of stationarity/feasibility/complementarity, scaled
    farkas: Optional[FarkasCertificate] = None
    iterations: int = 0


def _interval_min(w: np.ndarray, lb: np.ndarray, ub: np.ndarray) -> float:
    """min of w'x over the box; -inf when some needed bound is missing."""
    nz = w != 0.0
    if not np.any(nz):
        return 0.0
    side = np.where(w[nz] > 0, lb[nz], ub[nz])
    if np.any(~np.isfinite(side)):
        return -np.inf
    return float(w[nz] @ side)


def _bound_cert_weights(w: np.ndarray, nv: int) -> tuple[np.ndarray, np.ndarray]:
    """Bound-row weights cancelling the coefficients of an aggregated row."""
    lbw, ubw = np.zeros(nv), np.zeros(nv)
    pos, neg = w > 0, w < 0
    lbw[pos] = w[pos]
    ubw[neg] = -w[neg]
    return lbw, ubw


class _Presolve:
    """Fix lb==ub variables and singleton equalities; prove easy infeasibility."""

    def __init__(self, prob: CqpProblem, eps: float):
        self.prob = prob
        self.lb = prob.lb.copy()
        self.ub = prob.ub.copy()
        self.records: list = []  # ("bound", j) or ("eqrow", j, r), in elimination order
        self.eq_dropped = np.zeros(len(prob.e), dtype=bool)
        self.farkas: Optional[FarkasCertificate] = None
        self.eps = eps
        self._run()

    def _cert(self, kind: str, r: int, sigma: float, w: np.ndarray) -> None:
        mi, me, nv = len(self.prob.h), len(self.prob.e), self.prob.nv
        rw, ew = np.zeros(mi), np.zeros(me)
        if kind == "ineq":
            rw[r] = 1.0
        else:
            ew[r] = sigma
        lbw, ubw = _bound_cert_weights(w, nv)  # bound rows cancel w exactly
        self.farkas = FarkasCertificate(row_weights=rw, eq_weights=ew,
                                        lb_weights=lbw, ub_weights=ubw)
        self.farkas.verify(self.prob)

    def _row_infeasible(self, kind: str, r: int, w: np.ndarray, beta: float, sigma: float) -> bool:
        lo = _interval_min(w, self.lb, self.ub)
        if lo > beta + self.eps:
            self._cert(kind, r, sigma, w)
            return True
        return False

    def _run(self) -> None:
        prob = self.prob
        fixed = self.lb == self.ub
        for j in np.where(fixed)[0]:
            self.records.append(("bound", int(j)))
        while True:
            for r in range(len(prob.h)):
                if self._row_infeasible("ineq", r, prob.G[r], float(prob.h[r]), 1.0):
                    return
            for r in range(len(prob.e)):
                if self.eq_dropped[r]:
                    continue
                for sigma in (1.0, -1.0):
                    if self._row_infeasible("eq", r, sigma * prob.E[r], sigma * float(prob.e[r]), sigma):
                        return
            new_fix = False
            for r in range(len(prob.e)):
                if self.eq_dropped[r]:
                    continue
                row = prob.E[r]
                active = np.where((row != 0.0) & (self.lb < self.ub))[0]
                if len(active) == 0:
                    self.eq_dropped[r] = True  # constant and consistent (checked above)
                elif len(active) == 1:
                    j = int(active[0])
                    others = row != 0.0
                    others[j] = False
                    val = (float(prob.e[r]) - float(row[others] @ self.lb[others])) / float(row[j])
                    self.lb[j] = self.ub[j] = val
                    self.eq_dropped[r] = True
                    self.records.append(("eqrow", j, r))
                    new_fix = True
            if not new_fix:
                return


def _steplen(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-v[neg] / dv[neg]))


def _ipm_core(P, q, G, h, E, e, sc, tol, max_iter, x0=None):
    """Predictor-corrector loop. Returns (status, x, z, y, iters).

    status: "optimal", "stalled" (primal residual stopped improving, possible
    infeasibility), "unconverged".
    """
    nv, mi, me = len(q), len(h), len(e)
    if mi == 0:
        K = np.zeros((nv + me, nv + me))
        K[:nv, :nv] = P
        K[:nv, nv:] = E.T
        K[nv:, :nv] = E
        rhs = np.concatenate([-q, e])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        return "optimal", sol[:nv], np.zeros(0), sol[nv:], 1

    x = np.zeros(nv) if x0 is None else x0.copy()
    y = np.zeros(me)
    s = np.maximum(1.0, h - G @ x)
    z = np.ones(mi)
    best_pinf, since_best = np.inf, 0
    for it in range(1, max_iter + 1):
        rd = P @ x + q + G.T @ z + (E.T @ y if me else 0.0)
        rp = G @ x + s - h
        re = E @ x - e if me else np.zeros(0)
        mu = float(s @ z) / mi
        pinf = max(np.abs(rp).max(initial=0.0), np.abs(re).max(initial=0.0))
        if np.abs(rd).max(initial=0.0) <= tol * sc and pinf <= tol * sc and mu <= tol * sc:
            return "optimal", x, z, y, it
        if pinf < 0.5 * best_pinf:
            best_pinf, since_best = pinf, 0
        else:
            since_best += 1
        if it > 15 and pinf > max(1e-6 * sc, 1e3 * tol * sc) and since_best >= 8:
            return "stalled", x, z, y, it
        if max(np.abs(z).max(initial=0.0), np.abs(y).max(initial=0.0)) > 1e13 * sc:
            return "stalled", x, z, y, it

        D = z / s
        K = np.zeros((nv + me, nv + me))
        K[:nv, :nv] = P + (G.T * D) @ G
        if me:
            K[:nv, nv:] = E.T
            K[nv:, :nv] = E

        def solve_kkt(rx, re_):
            rhs = np.concatenate([rx, re_])
            reg = 0.0
            for _ in range(6):
                Kr = K
                if reg:
                    Kr = K + np.diag(np.concatenate([np.full(nv, reg), np.full(me, -reg)]))
                try:
                    sol = np.linalg.solve(Kr, rhs)
                except np.linalg.LinAlgError:
                    reg = max(10 * reg, 1e-12 * sc)
                    continue
                if np.all(np.isfinite(sol)):
                    return sol[:nv], sol[nv:]
                reg = max(10 * reg, 1e-12 * sc)
            sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
            return sol[:nv], sol[nv:]

        # affine scaling direction
        rx = -rd + G.T @ (z - D * rp)
        dxa, dya = solve_kkt(rx, -re)
        dsa = -rp - G @ dxa
        dza = -z - D * dsa
        ap = min(1.0, _steplen(s, dsa))
        ad = min(1.0, _steplen(z, dza))
        mu_aff = float((s + ap * dsa) @ (z + ad * dza)) / mi
        sigma = min(max((max(mu_aff, 0.0) / mu) ** 3, 1e-8), 1.0 - 1e-8)
        # corrector
        rc = s * z + dsa * dza - sigma * mu
        rx = -rd + G.T @ (rc / s - D * rp)
        dx, dy = solve_kkt(rx, -re)
        ds = -rp - G @ dx
        dz = -rc / s - D * ds
        eta = 0.99 if mu > 1e-6 * sc else 0.999
        ap = min(1.0, eta * _steplen(s, ds))
        ad = min(1.0, eta * _steplen(z, dz))
        x += ap * dx
        s += ap * ds
        z += ad * dz
        if me:
            y += ad * dy
    return "unconverged", x, z, y, max_iter


def _phase1(G, h, E, e, sc, tol):
    """min t s.t. Gx - t <= h, Ex = e, -t <= 1. Returns (status, t*, x, z_rows, y_eq)."""
    nv, mi, me = G.shape[1], len(h), len(e)
    G1 = np.hstack([G, -np.ones((mi, 1))])
    trow = np.zeros((1, nv + 1))
    trow[0, nv] = -1.0
    G1 = np.vstack([G1, trow])
    h1 = np.concatenate([h, [1.0]])
    E1 = np.hstack([E, np.zeros((me, 1))]) if me else np.zeros((0, nv + 1))
    q1 = np.zeros(nv + 1)
    q1[nv] = 1.0
    status, xa, za, ya, _ = _ipm_core(np.zeros((nv + 1, nv + 1)), q1, G1, h1, E1, e,
                                      sc, tol, 80)
    return status, float(xa[nv]), xa[:nv], za[:mi], ya


def solve_cqp(prob: CqpProblem, tol: float = 1e-9, max_iter: int = 60) -> CqpSolution:
    """Solve the problem; statuses are "optimal", "infeasible", "unconverged".

    "optimal" is only reported when the scaled KKT residual (stationarity,
    feasibility, complementarity) is at most 1e-8. Infeasible problems carry
    a verified FarkasCertificate. Indefinite H beyond the 1e-9 scaled slack
    raises NonconvexError; a within-slack deficiency is absorbed by a
    diagonal shift.
    """
    nv = prob.nv
    sc = prob.data_scale()
    Hs = (prob.H + prob.H.T) / 2.0
    lam_min = float(np.linalg.eigvalsh(Hs)[0]) if nv else 0.0
    if lam_min < -1e-9 * sc:
        raise NonconvexError(f"quadratic term has eigenvalue {lam_min:.3e} "
                             f"(slack {-1e-9 * sc:.1e}); pick a larger diagonal shift")
    if lam_min < 0.0:
        Hs = Hs + (-lam_min + 1e-9) * np.eye(nv)

    eps = 1e-9 * sc
    pre = _Presolve(prob, eps)
    if pre.farkas is not None:
        return CqpSolution(status="infeasible", x=None, value=None, farkas=pre.farkas,
                           ineq_mult=np.zeros(len(prob.h)), eq_mult=np.zeros(len(prob.e)),
                           lb_mult=np.zeros(nv), ub_mult=np.zeros(nv))

    free = pre.lb < pre.ub
    fixed_vals = np.where(free, 0.0, pre.lb)
    P_full = 2.0 * Hs
    iters = 0
    if np.any(free):
        F = np.where(free)[0]
        P = P_full[np.ix_(F, F)]
        qv = prob.g[F] + P_full[np.ix_(F, ~free)] @ fixed_vals[~free] if np.any(~free) else prob.g[F].copy()
        G = prob.G[:, F]
        h = prob.h - prob.G[:, ~free] @ fixed_vals[~free] if np.any(~free) else prob.h.copy()
        keep_g = np.any(G != 0.0, axis=1)
        eq_keep = ~pre.eq_dropped
        E = prob.E[np.ix_(eq_keep, F)]
        e = prob.e[eq_keep] - prob.E[np.ix_(eq_keep, ~free)] @ fixed_vals[~free] if np.any(~free) \
            else prob.e[eq_keep].copy()
        # finite bounds of free variables become rows after the model rows
        fin_lb = np.where(np.isfinite(pre.lb[F]))[0]
        fin_ub = np.where(np.isfinite(pre.ub[F]))[0]
        nF = len(F)
        Bl = np.zeros((len(fin_lb), nF))
        Bl[np.arange(len(fin_lb)), fin_lb] = -1.0
        Bu = np.zeros((len(fin_ub), nF))
        Bu[np.arange(len(fin_ub)), fin_ub] = 1.0
        Gall = np.vstack([G[keep_g], Bl, Bu])
        hall = np.concatenate([h[keep_g], -pre.lb[F][fin_lb], pre.ub[F][fin_ub]])

        status, xr, zr, yr, iters = _ipm_core(P, qv, Gall, hall, E, e, sc, tol, max_iter)
        if status == "stalled":
            p1_status, tstar, x1, z1, y1 = _phase1(Gall, hall, E, e, sc, max(tol, 1e-10))
            if p1_status == "optimal" and tstar > 1e-7 * sc:
                cert = _assemble_farkas(prob, pre, F, keep_g, fin_lb, fin_ub, z1, y1, eq_keep)
                if cert.verify(prob):
                    return CqpSolution(status="infeasible", x=None, value=None, farkas=cert,
                                       ineq_mult=np.zeros(len(prob.h)),
                                       eq_mult=np.zeros(len(prob.e)),
                                       lb_mult=np.zeros(nv), ub_mult=np.zeros(nv),
                                       iterations=iters)
                return CqpSolution(status="unconverged", x=None, value=None, iterations=iters)
            if p1_status == "optimal":
                status, xr, zr, yr, it2 = _ipm_core(P, qv, Gall, hall, E, e, sc, tol,
                                                    max_iter, x0=x1)
                iters += it2
        if status != "optimal":
            return CqpSolution(status="unconverged", x=None, value=None, iterations=iters)

        x = fixed_vals.copy()
        x[F] = xr
        z_full = np.zeros(len(prob.h))
        z_full[keep_g] = zr[: int(keep_g.sum())]
        lb_mult = np.zeros(nv)
        ub_mult = np.zeros(nv)
        off = int(keep_g.sum())
        lb_mult[F[fin_lb]] = zr[off: off + len(fin_lb)]
        ub_mult[F[fin_ub]] = zr[off + len(fin_lb):]
        y_full = np.zeros(len(prob.e))
        y_full[eq_keep] = yr
    else:
        x = fixed_vals
        z_full = np.zeros(len(prob.h))
        y_full = np.zeros(len(prob.e))
        lb_mult = np.zeros(nv)
        ub_mult = np.zeros(nv)

    # attribute stationarity residuals of eliminated variables to whatever
    # fixed them, most recent elimination first
    for rec in reversed(pre.records):
        j = rec[1]
        gam = float(P_full[j] @ x + prob.g[j] + prob.G[:, j] @ z_full + prob.E[:, j] @ y_full
                    - lb_mult[j] + ub_mult[j])
        if rec[0] == "eqrow":
            r = rec[2]
            y_full[r] = -gam / float(prob.E[r, j])
        else:
            lb_mult[j] += max(gam, 0.0)
            ub_mult[j] += max(-gam, 0.0)

    kkt = _kkt_residual(prob, P_full, x, z_full, y_full, lb_mult, ub_mult, sc)
    status = "optimal" if kkt <= 1e-8 else "unconverged"
    return CqpSolution(status=status, x=x, value=prob.value(x), ineq_mult=z_full,
                       eq_mult=y_full, lb_mult=lb_mult, ub_mult=ub_mult,
                       kkt_residual=kkt, iterations=iters)


def _assemble_farkas(prob, pre, F, keep_g, fin_lb, fin_ub, z1, y1, eq_keep):
    """Map phase-1 duals (reduced space) to a certificate over original rows."""
    nv = prob.nv
    mi = len(prob.h)
    rw = np.zeros(mi)
    rw[np.where(keep_g)[0]] = np.maximum(z1[: int(keep_g.sum())], 0.0)
    off = int(keep_g.sum())
    lbw = np.zeros(nv)
    ubw = np.zeros(nv)
    lbw[F[fin_lb]] = np.maximum(z1[off: off + len(fin_lb)], 0.0)
    ubw[F[fin_ub]] = np.maximum(z1[off + len(fin_lb):], 0.0)
    ew = np.zeros(len(prob.e))
    ew[eq_keep] = y1
    # cancel what the combination leaves on eliminated variables
    agg = prob.G.T @ rw + prob.E.T @ ew - lbw + ubw
    fixed = pre.lb >= pre.ub
    resid = np.where(fixed, agg, 0.0)
    lbw2, ubw2 = _bound_cert_weights(resid, nv)
    return FarkasCertificate(row_weights=rw, eq_weights=ew,
                             lb_weights=lbw + lbw2, ub_weights=ubw + ubw2)


def _kkt_residual(prob, P_full, x, z, y, lb_mult, ub_mult, sc) -> float:
    r_stat = P_full @ x + prob.g + prob.G.T @ z + prob.E.T @ y - lb_mult + ub_mult
    slack_g = prob.h - prob.G @ x
    pri = [np.maximum(-slack_g, 0.0).max(initial=0.0),
           np.abs(prob.E @ x - prob.e).max(initial=0.0)]
    with np.errstate(invalid="ignore"):
        pri.append(np.nanmax(np.where(np.isfinite(prob.lb), prob.lb - x, 0.0), initial=0.0))
        pri.append(np.nanmax(np.where(np.isfinite(prob.ub), x - prob.ub, 0.0), initial=0.0))
    slack_lb = np.where(np.isfinite(prob.lb), x - prob.lb, 0.0)
    slack_ub = np.where(np.isfinite(prob.ub), prob.ub - x, 0.0)
    comp = [np.abs(z * slack_g).max(initial=0.0),
            np.abs(lb_mult * slack_lb).max(initial=0.0),
            np.abs(ub_mult * slack_ub).max(initial=0.0)]
    return float(max(np.abs(r_stat).max(initial=0.0), max(pri), max(comp))) / sc
