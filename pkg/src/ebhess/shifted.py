"""Restarted solver for shifted block systems (A + sigma I) X = C.

One basis per cycle serves every shift: each unconverged shift solves its
own small reduced system, the residual norm comes from the trailing-block
formula without touching A, converged shifts are deflated, and the next
cycle restarts from the (2m+1)-th basis block, which carries every residual.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .dense import pivot_block_solve, plu_factor
from .ebh import build_T, ebha_run, left_apply
from .errors import (
    Breakdown,
    DimensionMismatch,
    NotConverged,
    RankDeficient,
    ReducedSystemSingular,
)


@dataclass
class ShiftedProblem:
    """Shifted block systems (A + sigma I) X = C over a set of shifts."""

    A: object
    C: np.ndarray
    shifts: np.ndarray
    eps: float = 2e-8
    m: int = 10
    max_restarts: int = 20

    def __post_init__(self):
        self.C = np.asarray(self.C, dtype=float)
        if self.C.ndim == 1:
            self.C = self.C[:, None]
        self.shifts = np.atleast_1d(np.asarray(self.shifts, dtype=float))
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if len(self.shifts) < 1:
            raise ValueError("need at least one shift")
        if self.C.shape[0] != self.A.n:
            raise DimensionMismatch("C row count does not match the operator")


@dataclass
class ShiftedState:
    """Per-shift solutions, reductions and residual history."""

    shifts: np.ndarray
    X: np.ndarray                 # (K, n, p)
    beta0: np.ndarray             # (K, p, p) residual coordinates in the seed frame
    converged: np.ndarray         # (K,) bool
    residual_history: list        # K lists of formula residual norms
    restart_count: int = 0

    @property
    def converged_set(self):
        return self.shifts[self.converged]


@dataclass
class CycleRecord:
    """Snapshot passed to the observer after each cycle, for diagnostics."""

    cycle: int
    basis: object
    projected: object
    active: np.ndarray            # indices attempted this cycle
    Y: dict = field(repr=False)   # index -> reduced solution (solved ones only)
    residuals: dict = field(repr=False)  # index -> residual norm
    state: ShiftedState = None


def residual_direct(A, C, sigma, X):
    """Frobenius norm of C - (A + sigma I) X computed explicitly (audit path)."""
    C = np.asarray(C, dtype=float)
    X = np.asarray(X, dtype=float)
    if C.ndim == 1:
        C = C[:, None]
    if X.ndim == 1:
        X = X[:, None]
    return float(np.linalg.norm(C - (A.apply(X) + sigma * X)))


def solve_shifted(problem, observer=None):
    """Run the restarted shifted solver until every shift converges.

    Per cycle: build the basis from the current seed, solve the reduced
    system (T + sigma I) Y = E1 beta for each unconverged shift, measure the
    residual through the trailing-block formula, accumulate X, deflate
    converged shifts, and restart from the (2m+1)-th block with the reduced
    residual coordinates as the new right-hand sides.

    A shift whose reduced system is singular skips the cycle and is retried
    on the next basis with its residual reduced explicitly.  ``observer``,
    when given, is called with a :class:`CycleRecord` after every cycle.

    Raises :class:`NotConverged` (with the partial state attached) if the
    restart cap is hit first.
    """
    A, C = problem.A, problem.C
    n, p = C.shape
    sigmas = problem.shifts
    K = len(sigmas)
    m = problem.m

    state = ShiftedState(
        shifts=sigmas.copy(),
        X=np.zeros((K, n, p)),
        beta0=np.repeat(np.eye(p)[None, :, :], K, axis=0),
        converged=np.zeros(K, dtype=bool),
        residual_history=[[] for _ in range(K)],
    )
    # beta0 holds residual coordinates relative to the current seed block:
    # R_sigma = seed @ beta0[sigma].  The first seed is C itself, so the
    # initial coordinates are the identity.  in_frame goes false only for
    # shifts that stalled on a singular reduced system.
    seed = C
    in_frame = np.ones(K, dtype=bool)
    stalled_resid = {}  # index -> explicit residual block (n, p)

    if 2 * (m + 1) * p > n:
        _invariant_subspace_solve(problem, state, seed, None)
        return state

    I2mp = np.eye(2 * m * p)
    while True:
        active = np.where(~state.converged)[0]
        if len(active) == 0:
            return state
        if state.restart_count >= problem.max_restarts:
            never_solved = [
                k for k in active
                if state.residual_history[k] and not np.isfinite(state.residual_history[k]).any()
            ]
            if never_solved:
                raise ReducedSystemSingular(
                    sigmas[never_solved[0]],
                    f"reduced system singular in every cycle for shifts "
                    f"{sigmas[never_solved].tolist()}",
                )
            raise NotConverged(sigmas[active], state)

        try:
            basis = ebha_run(A, seed, m)
        except Breakdown as exc:
            _invariant_subspace_solve(problem, state, seed, exc)
            return state
        proj = build_T(basis)
        Vb = basis.matrix(2 * m)
        next_seed = basis.blocks[2 * m]
        g11 = basis.gamma11

        Yrec, Rrec = {}, {}
        for k in active:
            if in_frame[k]:
                rhs = np.zeros((2 * m * p, p))
                rhs[:p] = g11 @ state.beta0[k]
            else:
                rhs = left_apply(basis, stalled_resid[k], 2 * m)
            reduced = proj.T + sigmas[k] * I2mp
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")  # exact singularity handled below
                lu, piv = sla.lu_factor(reduced)
            d = np.abs(np.diag(lu))
            if d.min() <= np.finfo(float).eps * d.max() * reduced.shape[0]:
                # sigma hit a Ritz value; freeze this shift's residual
                # (R = seed @ beta0 in the seed frame) and retry against the
                # next cycle's basis.
                if in_frame[k]:
                    stalled_resid[k] = seed @ state.beta0[k]
                    in_frame[k] = False
                state.residual_history[k].append(np.inf)
                continue
            Y = sla.lu_solve((lu, piv), rhs)
            beta_next = -proj.tau @ Y[-2 * p :, :]
            if in_frame[k]:
                state.X[k] += Vb @ Y
                state.beta0[k] = beta_next
                res = float(np.linalg.norm(next_seed @ beta_next))
            else:
                # Off-frame update: the residual formula does not apply, so
                # measure directly, and accept the step only if it helps (a
                # stalled shift can sit on an indefinite shifted operator,
                # where a Galerkin step may grow the residual without bound).
                W = Vb @ Y
                R = stalled_resid[k] - (A.apply(W) + sigmas[k] * W)
                res = float(np.linalg.norm(R))
                if res < np.linalg.norm(stalled_resid[k]):
                    state.X[k] += W
                    stalled_resid[k] = R
                else:
                    res = float(np.linalg.norm(stalled_resid[k]))
            state.residual_history[k].append(res)
            Yrec[k] = Y
            Rrec[k] = res
            if res < problem.eps:
                state.converged[k] = True
                stalled_resid.pop(k, None)

        state.restart_count += 1
        if observer is not None:
            observer(
                CycleRecord(state.restart_count, basis, proj, active, Yrec, Rrec, state)
            )
        seed = next_seed


def _invariant_subspace_solve(problem, state, seed, original):
    """Finish the solve when the seed spans an A-invariant subspace.

    This happens when the inverse action of the first block stays inside its
    own span (an eigenspace seed): the projection onto that block is then
    exact and every shift solves in one small system.  If the invariance
    check fails, the original breakdown is re-raised.
    """
    A = problem.A
    try:
        f = plu_factor(seed)
    except RankDeficient as exc:
        raise original if original is not None else Breakdown(1) from exc
    V1, g11, p1 = f.permuted_unit_lower, f.upper, f.pivot_rows
    AinvV1 = A.solve(V1)
    coeff = pivot_block_solve(V1, p1, AinvV1)
    leftover = AinvV1 - V1 @ coeff
    scale = max(np.linalg.norm(AinvV1), np.finfo(float).tiny)
    if np.linalg.norm(leftover) > 1e-12 * scale:
        if original is not None:
            raise original
        raise DimensionMismatch(
            "operator too small for one step and seed subspace is not invariant"
        )
    T1 = pivot_block_solve(V1, p1, A.apply(V1))
    p = V1.shape[1]
    unresolved = []
    for k in np.where(~state.converged)[0]:
        # Commit only updates that actually converge: the projection here is
        # exact, so anything else (sigma on the invariant block's spectrum,
        # stalled off-frame shifts) must not pollute X.
        try:
            Y = np.linalg.solve(T1 + problem.shifts[k] * np.eye(p), g11 @ state.beta0[k])
        except np.linalg.LinAlgError:
            unresolved.append(k)
            continue
        X_trial = state.X[k] + V1 @ Y
        res = residual_direct(A, problem.C, problem.shifts[k], X_trial)
        if np.isfinite(res) and res < problem.eps:
            state.X[k] = X_trial
            state.residual_history[k].append(res)
            state.converged[k] = True
        else:
            unresolved.append(k)
    state.restart_count += 1
    if unresolved:
        raise NotConverged(problem.shifts[unresolved], state)
