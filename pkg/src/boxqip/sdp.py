"""Diagonal-shift selection and certified lower bounds for the relaxation.

The continuous relaxation's optimal value is a concave function of the
diagonal shift theta, and its best value over PSD-feasible shifts is a
semidefinite program. Because the Lagrangian is linear in the binaries, the
full certificate matrix has a zero block that forces the binary coupling to
vanish; what remains is a set of linear equations tying the multipliers to
theta plus an (n+1)-dimensional linear matrix inequality. solve_theta_sdp
follows the central path of that reduced problem directly (log-det barrier,
equality-constrained Newton steps), then re-derives the multiplier part of
the certificate from the QP dual at the selected theta, which pins the
certified bound to the relaxation value at QP accuracy.

A certificate is (theta, lam, tau): lam is nonnegative, one entry per row of
the dual row system (model rows with equalities split into <=/>= pairs, then
binary lower-bound rows, then upper-bound rows), and the certified bound is
tau - a'lam + offset.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .cqp import solve_cqp
from .reform import LESS, ReformModel, build_mbqp, relax_model
from .transform import CenteredProblem

log = logging.getLogger(__name__)


@dataclass(eq=False)
class DualRows:
    """The row system (A | B | a) that multipliers live on."""

    A: np.ndarray  # (M, n) coefficients on xt
    B: np.ndarray  # (M, q) coefficients on binaries
    a: np.ndarray  # (M,) right-hand sides
    n_model_rows: int  # rows coming from the model (after equality splitting)


@dataclass(eq=False)
class DualCertificate:
    theta: np.ndarray
    lam: np.ndarray  # nonnegative, one per dual-system row
    tau: float
    bound: float  # tau - a'lam + offset
    method: str  # "sdp", "eig", "zero"
    select_cut: bool
    n: int
    q: int


@dataclass
class CertificateReport:
    ok: bool
    min_eig: float  # smallest eigenvalue of the full certificate matrix (scaled tol -1e-7)
    lam_min: float
    bound_gap: float  # |bound - (tau - a'lam + offset)|


def dual_row_system(model: ReformModel) -> DualRows:
    """Model rows with each equality split in place into a <=/>= pair,
    followed by -b_j <= 0 rows and b_j <= 1 rows for every binary."""
    A_rows, B_rows, a = [], [], []
    for r in range(len(model.rhs)):
        A_rows.append(model.A[r])
        B_rows.append(model.B[r])
        a.append(model.rhs[r])
        if model.senses[r] != LESS:
            A_rows.append(-model.A[r])
            B_rows.append(-model.B[r])
            a.append(-model.rhs[r])
    n_model = len(a)
    q = model.q
    for j in range(q):
        row = np.zeros(q)
        row[j] = -1.0
        A_rows.append(np.zeros(model.n))
        B_rows.append(row)
        a.append(0.0)
    for j in range(q):
        row = np.zeros(q)
        row[j] = 1.0
        A_rows.append(np.zeros(model.n))
        B_rows.append(row)
        a.append(1.0)
    return DualRows(A=np.array(A_rows), B=np.array(B_rows), a=np.array(a),
                    n_model_rows=n_model)


def eig_shift_theta(cp: CenteredProblem) -> np.ndarray:
    """Uniform shift from the smallest eigenvalue: cheap, always PSD-feasible."""
    lam_min = float(np.linalg.eigvalsh(cp.Qc)[0])
    return np.full(cp.n, max(0.0, -lam_min) + 1e-8)


def evaluate_relaxation(cp: CenteredProblem, theta: np.ndarray,
                        select_cut: bool = True) -> float:
    """Optimal value of the continuous relaxation at theta, offset included."""
    model = build_mbqp(cp, theta, select_cut=select_cut)
    sol = solve_cqp(relax_model(model))
    if sol.status != "optimal":
        raise RuntimeError(f"relaxation solve returned {sol.status}")
    return sol.value + model.offset


def certify(cp: CenteredProblem, theta: np.ndarray, select_cut: bool = True,
            method: str = "eig") -> DualCertificate:
    """Bound certificate at a fixed theta from the QP dual of the relaxation.

    The relaxation is solved with binary bounds as explicit rows so the
    multipliers line up one-to-one with the dual row system.
    """
    theta = np.asarray(theta, dtype=float)
    model = build_mbqp(cp, theta, select_cut=select_cut)
    rows = dual_row_system(model)
    sol = solve_cqp(relax_model(model, bounds_as_rows=True))
    if sol.status != "optimal":
        raise RuntimeError(f"relaxation solve returned {sol.status}")
    lam = np.zeros(len(rows.a))
    gi = 0  # position among the <= rows of the relaxation problem
    pos = 0
    for r in range(len(model.rhs)):
        if model.senses[r] == LESS:
            lam[pos] = max(float(sol.ineq_mult[gi]), 0.0)
            gi += 1
            pos += 1
        else:
            nu = float(sol.eq_mult[np.sum(model.senses[:r] != LESS)])
            lam[pos] = max(nu, 0.0)
            lam[pos + 1] = max(-nu, 0.0)
            pos += 2
    q = model.q
    lam[rows.n_model_rows: rows.n_model_rows + q] = np.maximum(sol.ineq_mult[gi: gi + q], 0.0)
    lam[rows.n_model_rows + q:] = np.maximum(sol.ineq_mult[gi + q: gi + 2 * q], 0.0)
    tau = sol.value + float(rows.a @ lam)
    return DualCertificate(theta=theta, lam=lam, tau=tau,
                           bound=sol.value + model.offset, method=method,
                           select_cut=select_cut, n=cp.n, q=q)


def solve_theta_sdp(cp: CenteredProblem, select_cut: bool = True) -> DualCertificate:
    """Best-bound shift theta* with its certificate.

    Falls back to the eigenvalue shift (with a logged warning) if the
    barrier fails to converge; the pipeline never aborts here.
    """
    model = build_mbqp(cp, np.zeros(cp.n), select_cut=select_cut)
    rows = dual_row_system(model)
    theta, converged = _barrier_theta(cp, model, rows)
    if not converged:
        log.warning("shift selection barrier did not converge (n=%d); "
                    "falling back to the eigenvalue shift", cp.n)
        return certify(cp, eig_shift_theta(cp), select_cut=select_cut, method="eig")
    return certify(cp, theta, select_cut=select_cut, method="sdp")


def check_certificate(cert: DualCertificate, cp: CenteredProblem) -> CertificateReport:
    """Validate a certificate against the full matrix inequality.

    Builds the (1+n+q)-dimensional certificate matrix including the binary
    coupling block and checks its smallest eigenvalue, the sign of lam, and
    the arithmetic of the recorded bound.
    """
    model = build_mbqp(cp, cert.theta, select_cut=cert.select_cut)
    rows = dual_row_system(model)
    n, q = cp.n, model.q
    r_x = cp.cc + rows.A.T @ cert.lam
    r_b = -model.binary_cost() + rows.B.T @ cert.lam
    F = np.zeros((1 + n + q, 1 + n + q))
    F[0, 0] = -cert.tau
    F[0, 1: 1 + n] = r_x / 2.0
    F[1: 1 + n, 0] = r_x / 2.0
    F[0, 1 + n:] = r_b / 2.0
    F[1 + n:, 0] = r_b / 2.0
    F[1: 1 + n, 1: 1 + n] = cp.Qc + np.diag(cert.theta)
    sc = 1.0 + max(np.abs(cp.Qc).max(), np.abs(cp.cc).max(), np.abs(rows.a).max(),
                   abs(cert.tau), np.abs(cert.lam).max(initial=0.0))
    min_eig = float(np.linalg.eigvalsh(F)[0])
    lam_min = float(cert.lam.min(initial=0.0))
    bound_gap = abs(cert.bound - (cert.tau - float(rows.a @ cert.lam) + cp.offset))
    ok = (min_eig >= -1e-7 * sc and lam_min >= -1e-12 and bound_gap <= 1e-7 * sc)
    return CertificateReport(ok=ok, min_eig=min_eig, lam_min=lam_min, bound_gap=bound_gap)


def _barrier_theta(cp: CenteredProblem, model: ReformModel,
                   rows: DualRows) -> tuple[np.ndarray, bool]:
    """Central-path solve of the reduced shift-selection SDP.

    Variables are (lam, tau). theta is eliminated through the reference
    binary of each variable (its magnitude is 1, so theta_i = (B'lam) at
    that coordinate); the remaining binary coordinates contribute linear
    consistency equations C lam = 0. Returns (theta, converged).
    """
    n, q, M = cp.n, model.q, len(rows.a)
    layout = model.layout
    ref = np.array([int(layout.y_start[i]) for i in range(n)])

    # consistency equations: every non-reference binary coordinate of B'lam
    # must equal its squared magnitude times theta, z coordinates must vanish
    C_rows = []
    for i in range(n):
        mags = layout.mags[i]
        for k in range(1, len(mags)):
            jpos = int(layout.y_start[i]) + k
            C_rows.append(rows.B[:, jpos] - mags[k] ** 2 * rows.B[:, ref[i]])
        C_rows.append(rows.B[:, int(layout.z_pos[i])])
    C = np.array(C_rows) if C_rows else np.zeros((0, M))
    Ct = np.hstack([C, np.zeros((len(C), 1))])

    # affine map (lam, tau) -> (n+1) x (n+1) certificate block
    Fb = np.zeros((M + 1, n + 1, n + 1))
    for r in range(M):
        Fb[r, 0, 1:] = rows.A[r] / 2.0
        Fb[r, 1:, 0] = rows.A[r] / 2.0
        d = rows.B[r, ref]
        Fb[r, 1:, 1:][np.diag_indices(n)] += d
    Fb[M, 0, 0] = -1.0
    F0 = np.zeros((n + 1, n + 1))
    F0[0, 1:] = cp.cc / 2.0
    F0[1:, 0] = cp.cc / 2.0
    F0[1:, 1:] = cp.Qc

    # strictly feasible start: balance B'lam = Lmat theta0 through the bound rows
    lam0 = np.full(M, 0.01)
    lam0[rows.n_model_rows:] = 0.0
    theta0 = eig_shift_theta(cp) + 0.5
    target = model.Lmat @ theta0
    got = rows.B.T @ lam0
    w = target - got
    lam0[rows.n_model_rows: rows.n_model_rows + q] = np.maximum(-w, 0.0) + 0.1
    lam0[rows.n_model_rows + q:] = np.maximum(w, 0.0) + 0.1
    r0 = cp.cc + rows.A.T @ lam0
    Mth = cp.Qc + np.diag(rows.B.T @ lam0[:, None].ravel() @ np.zeros((0,)) if False else theta0)
    tau0 = -0.25 * float(r0 @ np.linalg.solve(Mth, r0)) - 1.0
    v = np.concatenate([lam0, [tau0]])

    a_ext = np.concatenate([rows.a, [-1.0]])  # gradient of -(tau - a'lam) is (a, -1)
    nu_bar = M + n + 1

    def assemble(vv):
        F = F0 + np.tensordot(vv, Fb, axes=(0, 0))
        try:
            L = np.linalg.cholesky(F)
        except np.linalg.LinAlgError:
            return None, None
        return F, L

    def phi(vv, t):
        F, L = assemble(vv)
        if F is None or np.any(vv[:M] <= 0.0):
            return np.inf
        return (t * float(a_ext @ vv) - float(np.sum(np.log(vv[:M])))
                - 2.0 * float(np.sum(np.log(np.diag(L)))))

    t = 1.0
    mu = 25.0
    converged = False
    for _stage in range(40):
        for _newton in range(40):
            F, L = assemble(v)
            if F is None:
                return v[rows.B.shape[1] and 0] * np.zeros(n), False  # unreachable guard
            W = np.linalg.inv(F)
            W = (W + W.T) / 2.0
            P = np.einsum("ab,rbc->rac", W, Fb, optimize=True)
            grad = t * a_ext - np.einsum("raa->r", P)
            grad[:M] -= 1.0 / v[:M] - 0.0
            # above: barrier gradient is -1/lam on the multiplier block
            Hb = np.einsum("rab,sba->rs", P, P, optimize=True)
            Hb[np.diag_indices(M + 1)[0][:M], np.diag_indices(M + 1)[1][:M]] += 1.0 / v[:M] ** 2
            mC = len(Ct)
            KKT = np.zeros((M + 1 + mC, M + 1 + mC))
            KKT[: M + 1, : M + 1] = Hb
            if mC:
                KKT[: M + 1, M + 1:] = Ct.T
                KKT[M + 1:, : M + 1] = Ct
            rhs = np.concatenate([-grad, np.zeros(mC)])
            try:
                sol = np.linalg.solve(KKT, rhs)
            except np.linalg.LinAlgError:
                KKT[: M + 1, : M + 1] += 1e-10 * np.eye(M + 1)
                sol = np.linalg.solve(KKT, rhs)
            dv = sol[: M + 1]
            dec2 = float(dv @ Hb @ dv)
            if dec2 <= 1e-10:
                break
            alpha = 1.0
            neg = dv[:M] < 0
            if np.any(neg):
                alpha = min(alpha, 0.99 * float(np.min(-v[:M][neg] / dv[:M][neg])))
            f_cur = phi(v, t)
            ok_step = False
            for _bt in range(60):
                cand = v + alpha * dv
                f_new = phi(cand, t)
                if f_new < f_cur - 1e-4 * alpha * float(grad @ dv) * -1.0:
                    v = cand
                    ok_step = True
                    break
                alpha *= 0.5
            if not ok_step:
                break
            if dec2 <= 1e-10 * max(1.0, t):
                break
        gap = nu_bar / t
        obj = -float(a_ext @ v)
        if gap <= 1e-9 * (1.0 + abs(obj)):
            converged = True
            break
        t *= mu
    theta = rows.B.T[ref] @ v[:M] if False else (rows.B[:, ref].T @ v[:M])
    return theta, converged
