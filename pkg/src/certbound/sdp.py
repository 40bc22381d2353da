"""Dense primal-dual interior-point solver for small block-diagonal SDPs.

Standard primal form over symmetric blocks:

    minimize    sum_b <C_b, X_b>
    subject to  sum_b <A_ib, X_b> = b_i   (i = 1..m),   X_b >= 0.

The dual is  max b'y  s.t.  C_b - sum_i y_i A_ib = S_b >= 0.

Path-following with Mehrotra predictor-corrector steps in the HKM
scaling direction; dense linear algebra throughout.  Deterministic for
identical inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

__all__ = ["SDPProblem", "SDPSolution", "SDPStatus", "solve_sdp", "write_sdp_dump"]


class SDPStatus(Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    STALLED = "Stalled"


@dataclass
class SDPProblem:
    """block_sizes[b] is the order of block b; A[b] has shape (m, s_b, s_b)
    holding the b-th block of every constraint matrix; C[b] is (s_b, s_b)."""
    block_sizes: list[int]
    C: list[np.ndarray]
    A: list[np.ndarray]
    b: np.ndarray

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        m = len(self.b)
        if m < 1:
            raise ValueError("need at least one constraint")
        for s, Cb, Ab in zip(self.block_sizes, self.C, self.A):
            if Cb.shape != (s, s) or Ab.shape != (m, s, s):
                raise ValueError("inconsistent block dimensions")
            if not np.allclose(Cb, Cb.T, atol=1e-12):
                raise ValueError("objective block not symmetric")

    @property
    def m(self) -> int:
        return len(self.b)

    @property
    def total_rows(self) -> int:
        return sum(self.block_sizes)


@dataclass
class SDPSolution:
    status: SDPStatus
    X: list[np.ndarray]
    y: np.ndarray
    S: list[np.ndarray]
    primal_obj: float
    dual_obj: float
    gap: float
    rel_gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    message: str = ""


def _apply_A(prob: SDPProblem, V: list[np.ndarray]) -> np.ndarray:
    out = np.zeros(prob.m)
    for Ab, Vb in zip(prob.A, V):
        out += Ab.reshape(prob.m, -1) @ Vb.reshape(-1)
    return out


def _apply_At(prob: SDPProblem, y: np.ndarray) -> list[np.ndarray]:
    return [np.tensordot(y, Ab, axes=1) for Ab in prob.A]


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def _max_step(X: list[np.ndarray], D: list[np.ndarray]) -> float:
    """Largest alpha with X + alpha*D psd (up to the boundary)."""
    alpha = np.inf
    for Xb, Db in zip(X, D):
        try:
            L = np.linalg.cholesky(Xb)
        except np.linalg.LinAlgError:
            return 0.0
        W = np.linalg.solve(L, Db)
        W = np.linalg.solve(L, W.T)
        lam_min = float(np.linalg.eigvalsh(_sym(W)).min())
        if lam_min < -1e-14:
            alpha = min(alpha, -1.0 / lam_min)
    return alpha


def solve_sdp(prob: SDPProblem, tol: float = 1e-8, max_iter: int = 200,
              ridge: float = 0.0) -> SDPSolution:
    """Solve the block SDP; returns Stalled rather than failing silently.

    A nonzero ridge adds ridge*scale(C) times the identity to every
    objective block.  This bounds the primal optimal face when equality
    constraint pairs make it unbounded (a common cause of stalls); the
    reported primal objective is always evaluated with the true C, so any
    primal-feasible iterate still supports a sound bound."""
    m = prob.m
    nu = float(prob.total_rows)
    b = prob.b
    norm_b = float(np.linalg.norm(b))
    true_C = prob.C
    if ridge > 0.0:
        scale = max(1.0, max(float(np.linalg.norm(Cb)) for Cb in true_C))
        prob = SDPProblem(prob.block_sizes,
                          [Cb + ridge * scale * np.eye(Cb.shape[0])
                           for Cb in true_C],
                          prob.A, prob.b)
    norm_C = max(float(np.linalg.norm(Cb)) for Cb in prob.C)
    norm_A = max((float(np.linalg.norm(Ab)) for Ab in prob.A), default=1.0)

    # infeasible start: multiples of the identity, scaled to the data
    xi = max(10.0, norm_b / (1.0 + norm_A))
    eta = max(10.0, norm_C, norm_A)
    X = [xi * np.eye(s) for s in prob.block_sizes]
    S = [eta * np.eye(s) for s in prob.block_sizes]
    y = np.zeros(m)

    A2d = [Ab.reshape(m, -1) for Ab in prob.A]
    status = SDPStatus.STALLED
    message = ""
    it = 0
    best_merit = np.inf
    best_iterate = None
    since_progress = 0

    for it in range(1, max_iter + 1):
        Rp = b - _apply_A(prob, X)
        Aty = _apply_At(prob, y)
        Rd = [Cb - Sb - Atyb for Cb, Sb, Atyb in zip(prob.C, S, Aty)]
        pobj = sum(float(np.tensordot(Cb, Xb)) for Cb, Xb in zip(prob.C, X))
        dobj = float(b @ y)
        gap = sum(float(np.tensordot(Xb, Sb)) for Xb, Sb in zip(X, S))
        err_p = float(np.linalg.norm(Rp)) / (1.0 + norm_b)
        err_d = max(float(np.linalg.norm(Rdb)) for Rdb in Rd) / (1.0 + norm_C)
        rel_gap = abs(gap) / (1.0 + abs(pobj) + abs(dobj))

        if rel_gap <= tol and err_p <= tol and err_d <= tol:
            status = SDPStatus.OPTIMAL
            break
        merit = max(rel_gap, err_p, err_d)
        if merit <= best_merit:
            best_iterate = ([Xb.copy() for Xb in X], y.copy(),
                            [Sb.copy() for Sb in S])
        if merit < 0.9 * best_merit:
            best_merit = merit
            since_progress = 0
        else:
            since_progress += 1
            if since_progress >= 15:
                message = "no progress over 15 iterations"
                break
            # numerical breakdown near the central-path floor: residuals
            # exploding past the best iterate will not recover
            if merit > 1e3 * best_merit:
                message = "residuals diverged past best iterate"
                break
        if abs(pobj) > 1e13 or abs(dobj) > 1e13 or float(np.linalg.norm(y)) > 1e13:
            status = SDPStatus.UNBOUNDED if dobj > 1e12 else SDPStatus.INFEASIBLE
            message = "iterates diverged"
            break

        try:
            Sinv = [np.linalg.inv(Sb) for Sb in S]
        except np.linalg.LinAlgError:
            message = "singular dual slack"
            break

        # Schur complement M_ij = sum_b tr(A_i X A_j S^-1)
        M = np.zeros((m, m))
        XAS = []  # X A_j S^-1 stacks, reused for rhs terms
        for Ab, A2, Xb, Sib in zip(prob.A, A2d, X, Sinv):
            T = Xb @ Ab @ Sib
            XAS.append(T)
            M += A2 @ T.transpose(0, 2, 1).reshape(m, -1).T
        M = 0.5 * (M + M.T)

        L_M = None
        reg = 0.0
        base = max(1.0, float(np.trace(M)) / m)
        for attempt in range(4):
            try:
                L_M = np.linalg.cholesky(M + reg * np.eye(m))
                break
            except np.linalg.LinAlgError:
                reg = base * (1e-12 if reg == 0.0 else reg / base * 100.0)
        if L_M is None:
            message = "Schur complement not positive definite"
            break

        def schur_solve(rhs: np.ndarray) -> np.ndarray:
            z = np.linalg.solve(L_M, rhs)
            return np.linalg.solve(L_M.T, z)

        mu = gap / nu

        def build_rhs(sigma_mu: float, cross: list[np.ndarray] | None) -> np.ndarray:
            rhs = b.copy()
            for A2, Xb, Rdb, Sib, blk in zip(A2d, X, Rd, Sinv, range(len(S))):
                term = (Xb @ Rdb) @ Sib
                if cross is not None:
                    term = term + cross[blk] @ Sib
                if sigma_mu != 0.0:
                    rhs -= sigma_mu * A2 @ Sib.reshape(-1)
                rhs += A2 @ term.reshape(-1)
            return rhs

        def directions(sigma_mu: float, cross: list[np.ndarray] | None):
            dy = schur_solve(build_rhs(sigma_mu, cross))
            Atdy = _apply_At(prob, dy)
            dS = [Rdb - Atdyb for Rdb, Atdyb in zip(Rd, Atdy)]
            dX = []
            for Xb, dSb, Sib, blk in zip(X, dS, Sinv, range(len(S))):
                G = -Xb - (Xb @ dSb) @ Sib
                if cross is not None:
                    G = G - cross[blk] @ Sib
                if sigma_mu != 0.0:
                    G = G + sigma_mu * Sib
                dX.append(_sym(G))
            return dy, dX, dS

        # predictor (affine scaling)
        dy_a, dX_a, dS_a = directions(0.0, None)
        ap = min(1.0, 0.98 * _max_step(X, dX_a))
        ad = min(1.0, 0.98 * _max_step(S, dS_a))
        gap_aff = sum(
            float(np.tensordot(Xb + ap * dXb, Sb + ad * dSb))
            for Xb, dXb, Sb, dSb in zip(X, dX_a, S, dS_a))
        sigma = (max(gap_aff, 0.0) / gap) ** 3 if gap > 0 else 0.1
        sigma = min(max(sigma, 1e-8), 1.0)

        # corrector with Mehrotra cross term
        cross = [dXb @ dSb for dXb, dSb in zip(dX_a, dS_a)]
        dy, dX, dS = directions(sigma * mu, cross)
        ap = min(1.0, 0.98 * _max_step(X, dX))
        ad = min(1.0, 0.98 * _max_step(S, dS))
        # Mehrotra safeguard: when the corrector cross term wrecks the step
        # length, fall back to a pure centering direction
        ap_pred = min(1.0, 0.98 * _max_step(X, dX_a))
        ad_pred = min(1.0, 0.98 * _max_step(S, dS_a))
        if min(ap, ad) < 0.3 * min(ap_pred, ad_pred):
            sigma = max(sigma, 0.5)
            dy, dX, dS = directions(sigma * mu, None)
            ap = min(1.0, 0.98 * _max_step(X, dX))
            ad = min(1.0, 0.98 * _max_step(S, dS))
        # while meaningfully infeasible, couple the two step lengths so the
        # complementarity gap cannot collapse ahead of the residuals (gap
        # near zero with large infeasibility makes the Schur system singular)
        if err_p > 1e3 * tol or err_d > 1e3 * tol:
            ap = ad = min(ap, ad)
        if ap < 1e-10 and ad < 1e-10:
            message = "step lengths collapsed"
            break

        X = [_sym(Xb + ap * dXb) for Xb, dXb in zip(X, dX)]
        S = [_sym(Sb + ad * dSb) for Sb, dSb in zip(S, dS)]
        y = y + ad * dy

    # the last iterate can be worse than the best one seen (breakdown as
    # the gap reaches its numerical floor); report the best
    if best_iterate is not None:
        po = sum(float(np.tensordot(Cb, Xb)) for Cb, Xb in zip(prob.C, X))
        do = float(b @ y)
        gp = sum(float(np.tensordot(Xb, Sb)) for Xb, Sb in zip(X, S))
        cur_merit = max(
            float(np.linalg.norm(b - _apply_A(prob, X))) / (1.0 + norm_b),
            max(float(np.linalg.norm(Cb - Sb - Atyb)) for Cb, Sb, Atyb
                in zip(prob.C, S, _apply_At(prob, y))) / (1.0 + norm_C),
            abs(gp) / (1.0 + abs(po) + abs(do)))
        if cur_merit > best_merit:
            X, y, S = best_iterate

    Rp = b - _apply_A(prob, X)
    Aty = _apply_At(prob, y)
    Rd = [Cb - Sb - Atyb for Cb, Sb, Atyb in zip(prob.C, S, Aty)]
    pobj = sum(float(np.tensordot(Cb, Xb)) for Cb, Xb in zip(prob.C, X))
    dobj = float(b @ y)
    gap = sum(float(np.tensordot(Xb, Sb)) for Xb, Sb in zip(X, S))
    err_p = float(np.linalg.norm(Rp)) / (1.0 + norm_b)
    err_d = max(float(np.linalg.norm(Rdb)) for Rdb in Rd) / (1.0 + norm_C)
    rel_gap = abs(gap) / (1.0 + abs(pobj) + abs(dobj))
    if status != SDPStatus.OPTIMAL and rel_gap <= tol and err_p <= tol and err_d <= tol:
        status = SDPStatus.OPTIMAL

    if ridge > 0.0:
        pobj = sum(float(np.tensordot(Cb, Xb)) for Cb, Xb in zip(true_C, X))
    return SDPSolution(
        status=status, X=X, y=y, S=S,
        primal_obj=pobj, dual_obj=dobj, gap=gap, rel_gap=rel_gap,
        primal_residual=err_p, dual_residual=err_d,
        iterations=it, message=message)


def write_sdp_dump(prob: SDPProblem, path: str) -> None:
    """Sparse text dump (constraint index 0 is the objective) for
    cross-checking against external solvers."""
    with open(path, "w") as fh:
        fh.write(f"blocks {' '.join(str(s) for s in prob.block_sizes)}\n")
        fh.write("rhs " + " ".join(repr(v) for v in prob.b) + "\n")
        for blk, Cb in enumerate(prob.C):
            for i in range(Cb.shape[0]):
                for j in range(i, Cb.shape[1]):
                    if Cb[i, j] != 0.0:
                        fh.write(f"0 {blk} {i} {j} {Cb[i, j]!r}\n")
        for blk, Ab in enumerate(prob.A):
            for k in range(prob.m):
                Mk = Ab[k]
                for i in range(Mk.shape[0]):
                    for j in range(i, Mk.shape[1]):
                        if Mk[i, j] != 0.0:
                            fh.write(f"{k + 1} {blk} {i} {j} {Mk[i, j]!r}\n")
