"""Dense convex quadratic programs with box and inequality constraints.

Problems have the shape::

    minimize    0.5 z'Qz + c'z
    subject to  A z <= b,   lower <= z <= upper

with Q symmetric positive semidefinite.  The solver is an operator-splitting
method: the box and the inequality rows are stacked into one clipped block,
a regularized KKT system is factored once per penalty setting, and the
iteration alternates the linear solve with the projection and a scaled dual
update.  On convergence candidates an active-set polish solves the reduced
equality system, which usually lands the residuals far below the requested
tolerance.  Iterations start from the origin with zero multipliers, so runs
are reproducible bit for bit; no randomness is involved anywhere.

``objective_trace`` records, at every residual check, the penalized merit of
the best iterate found so far (objective plus a fixed multiple of the
constraint violation), a sequence that is nonincreasing by construction.
"""

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 50_000

_SIGMA = 1e-6
_RELAX = 1.6
_CHECK_EVERY = 25
_RHO_HI = 2.0
_RHO_EVERY = 50
_RHO0 = 0.5
_EIG_CHECK_LIMIT = 400


class QPError(Exception):
    pass


@dataclass
class QPProblem:
    Q: np.ndarray
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.lower = np.asarray(self.lower, dtype=float).ravel()
        self.upper = np.asarray(self.upper, dtype=float).ravel()
        if self.Q.shape != (n, n):
            raise QPError(f"Q must be {n}x{n}, got {self.Q.shape}")
        if self.b.size != self.A.shape[0]:
            raise QPError("A and b row counts differ")
        if self.lower.size != n or self.upper.size != n:
            raise QPError("box bounds must match the variable count")
        if np.any(self.lower > self.upper):
            raise QPError("crossed box bounds")
        scale = max(1.0, float(np.abs(self.Q).max(initial=0.0)))
        if np.abs(self.Q - self.Q.T).max(initial=0.0) > 1e-10 * scale:
            raise QPError("Q is not symmetric")
        if n <= _EIG_CHECK_LIMIT:
            if np.linalg.eigvalsh(self.Q).min(initial=0.0) < -1e-8 * scale:
                raise QPError("Q is not positive semidefinite")
        else:
            try:
                np.linalg.cholesky(self.Q + 1e-8 * scale * np.eye(n))
            except np.linalg.LinAlgError:
                raise QPError("Q is not positive semidefinite")

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.b.size

    def objective(self, z: np.ndarray) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.Q @ z + self.c @ z)


@dataclass
class QPSolution:
    z: np.ndarray
    ineq_multipliers: np.ndarray
    lower_multipliers: np.ndarray
    upper_multipliers: np.ndarray
    objective: float
    status: str  # "solved" | "max_iterations" | "infeasible"
    iterations: int
    residuals: tuple  # (stationarity, primal, complementarity)
    objective_trace: list = field(default_factory=list)


def kkt_residuals(problem: QPProblem, solution: QPSolution) -> tuple:
    """Exact first-order residuals ``(stationarity, primal, complementarity)``."""
    z = solution.z
    lam = solution.ineq_multipliers
    eta_lo = solution.lower_multipliers
    eta_up = solution.upper_multipliers
    grad = problem.Q @ z + problem.c
    if problem.m:
        grad = grad + problem.A.T @ lam
    grad = grad - eta_lo + eta_up
    stationarity = float(np.abs(grad).max(initial=0.0))

    viol = 0.0
    if problem.m:
        viol = max(viol, float(np.maximum(problem.A @ z - problem.b, 0.0).max(initial=0.0)))
    lo_gap = np.where(np.isfinite(problem.lower), problem.lower - z, -np.inf)
    up_gap = np.where(np.isfinite(problem.upper), z - problem.upper, -np.inf)
    viol = max(viol, float(np.maximum(lo_gap, 0.0).max(initial=0.0)))
    viol = max(viol, float(np.maximum(up_gap, 0.0).max(initial=0.0)))

    comp = 0.0
    if problem.m:
        comp = float(np.abs(lam * (problem.A @ z - problem.b)).max(initial=0.0))
    return stationarity, viol, comp


def _box_complementarity(problem, z, eta_lo, eta_up) -> float:
    lo_gap = np.where(np.isfinite(problem.lower), z - problem.lower, 1.0)
    up_gap = np.where(np.isfinite(problem.upper), problem.upper - z, 1.0)
    out = 0.0
    if lo_gap.size:
        out = max(out, float(np.abs(eta_lo * lo_gap).max(initial=0.0)))
        out = max(out, float(np.abs(eta_up * up_gap).max(initial=0.0)))
    return out


def _violation_sum(problem, z) -> float:
    total = 0.0
    if problem.m:
        total += float(np.maximum(problem.A @ z - problem.b, 0.0).sum())
    lo = np.where(np.isfinite(problem.lower), problem.lower - z, 0.0)
    up = np.where(np.isfinite(problem.upper), z - problem.upper, 0.0)
    total += float(np.maximum(lo, 0.0).sum() + np.maximum(up, 0.0).sum())
    return total


def _split_stacked_multipliers(y, m):
    lam = np.maximum(y[:m], 0.0)
    ybox = y[m:]
    eta_up = np.maximum(ybox, 0.0)
    eta_lo = np.maximum(-ybox, 0.0)
    return lam, eta_lo, eta_up


def _candidate(problem, z, y):
    lam, eta_lo, eta_up = _split_stacked_multipliers(y, problem.m)
    sol = QPSolution(
        z=z.copy(),
        ineq_multipliers=lam,
        lower_multipliers=eta_lo,
        upper_multipliers=eta_up,
        objective=problem.objective(z),
        status="candidate",
        iterations=0,
        residuals=(np.inf, np.inf, np.inf),
    )
    stat, viol, comp = kkt_residuals(problem, sol)
    box_comp = _box_complementarity(problem, z, eta_lo, eta_up)
    sol.residuals = (stat, viol, comp)
    return sol, max(stat, viol, comp, box_comp)


def _equilibrate(Q, c, C):
    """Modified Ruiz scaling of the stacked system.

    Returns positive diagonals D (variables), E (stacked constraint rows)
    and a scalar cost factor gamma.  Iterating on the infinity norms of the
    symmetric block matrix [[Q, C.T], [C, 0]] evens out wildly different
    row and column magnitudes, which is what makes splitting iterations
    usable on badly conditioned kernel blocks.  All checks against the
    caller's tolerance happen in the original, unscaled problem.
    """
    n = Q.shape[0]
    mc = C.shape[0]
    D = np.ones(n)
    E = np.ones(mc)
    for _ in range(10):
        Qs = Q * D[:, None] * D[None, :]
        Cs = C * E[:, None] * D[None, :]
        col = np.maximum(
            np.abs(Qs).max(axis=0, initial=0.0),
            np.abs(Cs).max(axis=0, initial=0.0),
        )
        row = np.abs(Cs).max(axis=1, initial=0.0)
        dv = np.where(col > 1e-10, 1.0 / np.sqrt(np.clip(col, 1e-10, None)), 1.0)
        de = np.where(row > 1e-10, 1.0 / np.sqrt(np.clip(row, 1e-10, None)), 1.0)
        D *= np.clip(dv, 1e-3, 1e3)
        E *= np.clip(de, 1e-3, 1e3)
    D = np.clip(D, 1e-4, 1e4)
    E = np.clip(E, 1e-4, 1e4)
    Qs = Q * D[:, None] * D[None, :]
    qnorm = float(np.abs(Qs).max(axis=0, initial=0.0).mean()) if n else 0.0
    cnorm = float(np.abs(D * c).max(initial=0.0))
    denom = max(qnorm, cnorm)
    gamma = 1.0 if denom < 1e-12 else float(np.clip(1.0 / denom, 1e-6, 1e6))
    return D, E, gamma


def _polish(problem, z, y, tol=DEFAULT_TOL, max_rounds=8):
    """Refine an iterate by solving its guessed active set as equalities.

    A row enters the initial guess when its multiplier outweighs its slack,
    which stays meaningful however loosely the iterate has converged.  Each
    round then drops active rows whose multiplier has the wrong sign and
    adds rows the trial point violates, so a slightly wrong guess
    self-corrects.  Degenerate sets chatter at working precision, so both
    moves use a deadband well below the caller's tolerance; whatever noise
    the deadband admits stays two orders under ``tol``.  Returns None when
    no consistent set emerges within the round budget.
    """
    n, m = problem.n, problem.m
    flip_tol = max(1e-9, 0.01 * tol)
    if m:
        gap = problem.b - problem.A @ z
        act = y[:m] > np.maximum(gap, 0.0)
    else:
        act = np.zeros(0, dtype=bool)
    ybox = y[m:]
    # 0 inactive, +1 at upper, -1 at lower, 2 fixed (equal bounds)
    box_state = np.zeros(n, dtype=int)
    for i in range(n):
        at_up = np.isfinite(problem.upper[i]) and (
            ybox[i] > max(problem.upper[i] - z[i], 0.0)
        )
        at_lo = np.isfinite(problem.lower[i]) and (
            -ybox[i] > max(z[i] - problem.lower[i], 0.0)
        )
        if problem.lower[i] == problem.upper[i]:
            box_state[i] = 2
        elif at_up and at_lo:
            box_state[i] = 1 if (abs(problem.upper[i] - z[i])
                                 <= abs(z[i] - problem.lower[i])) else -1
        elif at_up:
            box_state[i] = 1
        elif at_lo:
            box_state[i] = -1

    reg = 1e-13
    prev_churn = None
    for _ in range(max_rounds):
        idx_rows = np.nonzero(act)[0] if m else np.array([], dtype=int)
        box_idx = np.nonzero(box_state != 0)[0]
        kr, kb = len(idx_rows), len(box_idx)
        k = kr + kb
        if k == 0:
            try:
                z_new = np.linalg.solve(problem.Q + reg * np.eye(n), -problem.c)
                z_new += np.linalg.solve(problem.Q + reg * np.eye(n),
                                         -problem.c - problem.Q @ z_new)
            except np.linalg.LinAlgError:
                return None
            nu_rows = np.zeros(0)
            nu_box = np.zeros(0)
        else:
            G = np.zeros((k, n))
            targets = np.zeros(k)
            if kr:
                G[:kr] = problem.A[idx_rows]
                targets[:kr] = problem.b[idx_rows]
            for j, i in enumerate(box_idx):
                G[kr + j, i] = 1.0
                targets[kr + j] = (problem.upper[i] if box_state[i] in (1, 2)
                                   else problem.lower[i])
            kkt = np.zeros((n + k, n + k))
            kkt[:n, :n] = problem.Q + reg * np.eye(n)
            kkt[:n, n:] = G.T
            kkt[n:, :n] = G
            kkt[n:, n:] = -reg * np.eye(k)
            rhs = np.concatenate([-problem.c, targets])
            try:
                lu = scipy.linalg.lu_factor(kkt)
                sol_vec = scipy.linalg.lu_solve(lu, rhs)
                # refine against the unregularized system
                big = np.zeros((n + k, n + k))
                big[:n, :n] = problem.Q
                big[:n, n:] = G.T
                big[n:, :n] = G
                for _ in range(2):
                    resid = rhs - big @ sol_vec
                    sol_vec = sol_vec + scipy.linalg.lu_solve(lu, resid)
            except (np.linalg.LinAlgError, ValueError):
                return None
            z_new = sol_vec[:n]
            nu_rows = sol_vec[n:n + kr]
            nu_box = sol_vec[n + kr:]

        churn = 0
        # wrong multiplier signs leave the set
        if kr:
            wrong = idx_rows[nu_rows < -flip_tol]
            if wrong.size:
                act[wrong] = False
                churn += wrong.size
        for j, i in enumerate(box_idx):
            st = box_state[i]
            if (st == 1 and nu_box[j] < -flip_tol) or (st == -1 and nu_box[j] > flip_tol):
                box_state[i] = 0
                churn += 1
        # violated rows join it
        if m:
            viol = (problem.A @ z_new - problem.b > flip_tol) & ~act
            if viol.any():
                act |= viol
                churn += int(viol.sum())
        up_viol = (box_state == 0) & np.isfinite(problem.upper) & (
            z_new > problem.upper + flip_tol
        )
        lo_viol = (box_state == 0) & np.isfinite(problem.lower) & (
            z_new < problem.lower - flip_tol
        )
        if up_viol.any():
            box_state[up_viol] = 1
            churn += int(up_viol.sum())
        if lo_viol.any():
            box_state[lo_viol] = -1
            churn += int(lo_viol.sum())
        if churn == 0:
            y_new = np.zeros(m + n)
            if kr:
                y_new[idx_rows] = np.maximum(nu_rows, 0.0)
            for j, i in enumerate(box_idx):
                y_new[m + i] = nu_box[j]
            return z_new, y_new
        # a set that keeps moving wholesale is oscillating, not converging
        if prev_churn is not None and churn >= prev_churn:
            return None
        prev_churn = churn
    return None


def problem_to_dict(problem: QPProblem) -> dict:
    return {
        "Q": problem.Q.tolist(),
        "c": problem.c.tolist(),
        "A": problem.A.tolist(),
        "b": problem.b.tolist(),
        "lower": [x if np.isfinite(x) else None for x in problem.lower],
        "upper": [x if np.isfinite(x) else None for x in problem.upper],
    }


def problem_from_dict(data: dict) -> QPProblem:
    lower = [(-np.inf if x is None else x) for x in data["lower"]]
    upper = [(np.inf if x is None else x) for x in data["upper"]]
    return QPProblem(
        Q=np.array(data["Q"], dtype=float),
        c=np.array(data["c"], dtype=float),
        A=np.array(data["A"], dtype=float).reshape(len(data["b"]), len(data["c"])),
        b=np.array(data["b"], dtype=float),
        lower=np.array(lower, dtype=float),
        upper=np.array(upper, dtype=float),
    )


def problem_to_json(problem: QPProblem) -> str:
    return json.dumps(problem_to_dict(problem), indent=2, sort_keys=True)


def problem_from_json(text: str) -> QPProblem:
    return problem_from_dict(json.loads(text))


def solution_to_dict(solution: QPSolution) -> dict:
    return {
        "z": solution.z.tolist(),
        "ineq_multipliers": solution.ineq_multipliers.tolist(),
        "lower_multipliers": solution.lower_multipliers.tolist(),
        "upper_multipliers": solution.upper_multipliers.tolist(),
        "objective": solution.objective,
        "status": solution.status,
        "iterations": solution.iterations,
        "residuals": list(solution.residuals),
    }


def solution_to_json(solution: QPSolution) -> str:
    return json.dumps(solution_to_dict(solution), indent=2, sort_keys=True)


def solve(problem: QPProblem, tol: float = DEFAULT_TOL,
          max_iter: int = DEFAULT_MAX_ITER) -> QPSolution:
    """Solve the program to KKT residuals below ``tol``.

    Returns status "solved" when every residual (stationarity, primal
    feasibility, complementarity including the box) is at most ``tol``;
    "max_iterations" with the best iterate otherwise, and "infeasible" when
    a separating certificate accumulates in the dual updates.
    """
    n, m = problem.n, problem.m
    # box rows are only stacked for variables with a finite bound; a free
    # variable's projection is the identity and its dual stays zero anyway
    bounded = np.isfinite(problem.lower) | np.isfinite(problem.upper)
    if not m and not bounded.any():
        bounded = np.ones(n, dtype=bool)
    idx_bounded = np.nonzero(bounded)[0]
    nb = len(idx_bounded)
    Ibox = np.zeros((nb, n))
    Ibox[np.arange(nb), idx_bounded] = 1.0
    C = np.vstack([problem.A, Ibox]) if m else Ibox
    lo = np.concatenate([np.full(m, -np.inf), problem.lower[idx_bounded]])
    hi = np.concatenate([problem.b, problem.upper[idx_bounded]])
    mc = m + nb

    # iterate on the equilibrated problem; every tolerance check below is
    # made on the original one
    D, E, gamma = _equilibrate(problem.Q, problem.c, C)
    Qs = gamma * (problem.Q * D[:, None] * D[None, :])
    cs = gamma * (D * problem.c)
    Cs = C * E[:, None] * D[None, :]
    los = E * lo
    his = E * hi

    CtC = Cs.T @ Cs
    rho = _RHO0
    factor = scipy.linalg.cho_factor(Qs + _SIGMA * np.eye(n) + rho * CtC)

    zb = np.zeros(n)
    wb = np.clip(np.zeros(mc), los, his)
    yb = np.zeros(mc)

    kappa = 1e4 * (1.0 + float(np.abs(problem.c).max(initial=0.0)))
    best_merit = np.inf
    best = None
    trace = []
    eps = max(tol * 0.1, 1e-12)
    last_rho_update = 0
    prev_yb = yb.copy()
    it = 0

    while it < max_iter:
        for _ in range(min(_CHECK_EVERY, max_iter - it)):
            rhs = _SIGMA * zb - cs + Cs.T @ (rho * wb - yb)
            zt = scipy.linalg.cho_solve(factor, rhs)
            Czt = Cs @ zt
            zb = _RELAX * zt + (1.0 - _RELAX) * zb
            w_hat = _RELAX * Czt + (1.0 - _RELAX) * wb
            wb = np.clip(w_hat + yb / rho, los, his)
            yb = yb + rho * (w_hat - wb)
            it += 1

        z = D * zb
        y_trim = (E * yb) / gamma
        y = np.zeros(m + n)
        y[:m] = y_trim[:m]
        y[m + idx_bounded] = y_trim[m:]
        Cz = C @ z
        Qz = problem.Q @ z
        r_prim = float(np.abs(Cz - wb / E).max(initial=0.0))
        r_dual = float(np.abs(Qz + problem.c + C.T @ y_trim).max(initial=0.0))

        # KKT scalars of the sanitized candidate, inline: the A-row duals
        # stay nonnegative under the update above, so r_dual already equals
        # the candidate's stationarity residual
        if m:
            gap = Cz[:m] - problem.b
            viol_rows = float(np.maximum(gap, 0.0).max(initial=0.0))
            comp = float(np.abs(np.maximum(y[:m], 0.0) * gap).max(initial=0.0))
        else:
            viol_rows = comp = 0.0
        lo_gap = np.where(np.isfinite(problem.lower), z - problem.lower, 1.0)
        up_gap = np.where(np.isfinite(problem.upper), problem.upper - z, 1.0)
        viol_box = float(np.maximum(np.maximum(-lo_gap, -up_gap), 0.0).max(initial=0.0))
        ybox = y[m:]
        box_comp = float(max(
            np.abs(np.maximum(-ybox, 0.0) * lo_gap).max(initial=0.0),
            np.abs(np.maximum(ybox, 0.0) * up_gap).max(initial=0.0),
        ))
        cand_max = max(r_dual, viol_rows, viol_box, comp, box_comp)

        merit = float(0.5 * z @ Qz + problem.c @ z) + kappa * _violation_sum(problem, z)
        if merit < best_merit:
            best_merit = merit
            best = (z.copy(), y.copy(), cand_max)
        trace.append(best_merit)

        settled = r_prim <= eps and r_dual <= eps
        # a refinement attempt only makes sense once the active set is
        # plausibly identified, i.e. the primal residual is in range of tol
        if cand_max <= tol or settled or (it % 1000 == 0 and r_prim <= 100 * tol):
            ret, ret_max = (None, np.inf)
            if cand_max <= tol:
                ret, ret_max = _candidate(problem, z, y)
            polished = _polish(problem, z, y, tol=tol)
            if polished is not None:
                pz, py = polished
                pcand, pmax = _candidate(problem, pz, py)
                pmerit = pcand.objective + kappa * _violation_sum(problem, pz)
                if pmerit < best_merit:
                    best_merit = pmerit
                    trace[-1] = best_merit
                if best is None or pmax < best[2]:
                    best = (pz, py, pmax)
                if pmax < ret_max:
                    ret, ret_max = pcand, pmax
            if ret is not None and ret_max <= tol:
                ret.status = "solved"
                ret.iterations = it
                ret.objective_trace = trace
                return ret
            if settled:
                eps = max(eps * 0.3, 1e-14)

        # infeasibility certificate from the accumulated dual direction
        v = E * (yb - prev_yb)
        prev_yb = yb.copy()
        vmax = float(np.abs(v).max(initial=0.0))
        if vmax > 1e-12 and r_prim > 10 * tol:
            vn = v / vmax
            pos, neg_ = np.maximum(vn, 0.0), np.minimum(vn, 0.0)
            sign_ok = bool(
                np.all(np.isfinite(hi) | (pos <= 1e-9))
                and np.all(np.isfinite(lo) | (neg_ >= -1e-9))
            )
            if sign_ok and float(np.abs(C.T @ vn).max(initial=0.0)) <= 1e-9:
                support = float(
                    np.where(pos > 0, np.where(np.isfinite(hi), hi, 0.0) * pos, 0.0).sum()
                    + np.where(neg_ < 0, np.where(np.isfinite(lo), lo, 0.0) * neg_, 0.0).sum()
                )
                if support < -1e-9:
                    inf_cand, _ = _candidate(problem, z, y)
                    inf_cand.status = "infeasible"
                    inf_cand.iterations = it
                    inf_cand.objective_trace = trace
                    return inf_cand

        # residual-balancing penalty updates on the scaled iterates
        if it - last_rho_update >= _RHO_EVERY and it % _RHO_EVERY == 0:
            rs_prim = float(np.abs(Cs @ zb - wb).max(initial=0.0))
            rs_dual = float(np.abs(Qs @ zb + cs + Cs.T @ yb).max(initial=0.0))
            ratio = (rs_prim + 1e-16) / (rs_dual + 1e-16)
            if ratio > _RHO_HI or ratio < 1.0 / _RHO_HI:
                rho = float(np.clip(rho * np.sqrt(ratio), 1e-6, 1e6))
                factor = scipy.linalg.cho_factor(
                    Qs + _SIGMA * np.eye(n) + rho * CtC
                )
                last_rho_update = it

    if best is not None:
        final, final_max = _candidate(problem, best[0], best[1])
    else:
        y_last = np.zeros(m + n)
        y_last[:m] = (E[:m] * yb[:m]) / gamma
        y_last[m + idx_bounded] = (E[m:] * yb[m:]) / gamma
        final, final_max = _candidate(problem, D * zb, y_last)
    final.status = "solved" if final_max <= tol else "max_iterations"
    final.iterations = it
    final.objective_trace = trace
    return final
