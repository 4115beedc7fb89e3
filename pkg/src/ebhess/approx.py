"""Drivers approximating f(A)V through the projected small problem.

Both methods run their basis process, evaluate f on the projected matrix and
lift the first block column back: approximation = basis * f(T)[:, :p] * Gamma11.
"""

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .dense import SMALL_DIM_LIMIT, norms
from .ebh import build_T, ebha_run
from .eba import eba_run
from .errors import AssumptionViolated, DimensionMismatch
from .matfun import expm, funm


def _as_block(V):
    V = np.asarray(V, dtype=float)
    return V[:, None] if V.ndim == 1 else V


@dataclass
class ApproxResult:
    """Approximation of f(A)V with diagnostics."""

    approximation: np.ndarray
    m: int
    relative_error: float | None = None
    bound: float | None = None
    wall_time: float = 0.0


def _finish(app, m, reference, t0, bound=None):
    rel = None
    if reference is not None:
        denom = np.linalg.norm(reference)
        rel = float(np.linalg.norm(app - reference) / max(denom, np.finfo(float).tiny))
    return ApproxResult(app, m, rel, bound, time.perf_counter() - t0)


def mf_ebh(A, V, m, spec, *, reference=None, compute_bound=False,
           joint_start=False, reorthogonalize=False):
    """Approximate f(A)V with the pivoted extended block Hessenberg method.

    ``reference`` (the exact value, when affordable) fills ``relative_error``;
    ``compute_bound`` additionally evaluates the a-priori exp error bound
    (exp only, needs a dissipative operator).
    """
    V = _as_block(V)
    t0 = time.perf_counter()
    basis = ebha_run(A, V, m, joint_start=joint_start, reorthogonalize=reorthogonalize)
    proj = build_T(basis)
    F = funm(spec, proj.T)
    app = basis.matrix(2 * m) @ (F[:, : basis.p] @ proj.gamma11)
    bound = None
    if compute_bound and spec.tag == "exp":
        bound, _, _ = exp_error_bound(A, basis, proj)
    return _finish(app, m, reference, t0, bound)


def mf_eba(A, V, m, spec, *, reference=None):
    """Approximate f(A)V with the extended block Arnoldi baseline."""
    V = _as_block(V)
    t0 = time.perf_counter()
    basis = eba_run(A, V, m)
    F = funm(spec, basis.T_arnoldi)
    app = basis.matrix(2 * m) @ (F[:, : basis.p] @ basis.lambda11)
    return _finish(app, m, reference, t0)


def exact_dense(A_small, V, spec, small_dim_limit=SMALL_DIM_LIMIT):
    """Reference value f(A)V for a dense A within the small-dimension limit."""
    A_small = np.asarray(A_small, dtype=float)
    if A_small.shape[0] != A_small.shape[1]:
        raise DimensionMismatch("exact_dense expects a square matrix")
    if A_small.shape[0] > small_dim_limit:
        raise DimensionMismatch(
            f"n={A_small.shape[0]} exceeds small_dim_limit {small_dim_limit}"
        )
    V = _as_block(V)
    return funm(spec, A_small) @ V


def rot2_reference(A, V, spec):
    """Exact f(A)V for 2x2 block-diagonal rotation-like operators.

    Each block [[a, c], [-c, a]] represents the complex number a + ic, so
    f acts blockwise through the scalar values u + iv = f(a + ic).
    """
    if A.rot2 is None:
        raise DimensionMismatch("operator does not carry 2x2 block-diagonal structure")
    a, c = A.rot2
    V = _as_block(V)
    w = spec.scalar_eval(a + 1j * c)
    u, v = np.real(w), np.imag(w)
    Ve, Vo = V[0::2], V[1::2]
    out = np.empty_like(V)
    out[0::2] = u[:, None] * Ve + v[:, None] * Vo
    out[1::2] = -v[:, None] * Ve + u[:, None] * Vo
    return out


def reference_matfun(A, V, spec, small_dim_limit=SMALL_DIM_LIMIT):
    """Best available exact value of f(A)V: blockwise for rot2 operators,
    dense evaluation below the small-dimension limit, error otherwise."""
    if A.rot2 is not None:
        return rot2_reference(A, V, spec)
    return exact_dense(A.to_dense(small_dim_limit), V, spec, small_dim_limit)


def exp_error_bound(A, basis, proj, grid=65):
    """A-priori bound on the exp approximation error for dissipative A.

    Requires mu2 = lambda_max((A + A^T)/2) <= 0.  Returns
    ``(bound, coupling_norm, mu2)``.  The error admits an integral
    representation over exp(s T) for s in [0, 1], so the coupling constant is
    the maximum over that interval (sampled on ``grid`` points) of the
    spectral norm of the trailing-block term; the bound multiplies it by
    (1 - e^mu2)/(-mu2), with the limit value 1 at mu2 = 0.  Taking the
    trailing term at s = 1 alone is not an upper bound.
    """
    mu = A.mu2()
    if mu > 1e-12:
        raise AssumptionViolated(f"mu2(A) = {mu:.3e} > 0; the bound needs x^T A x <= 0")
    p = proj.p
    V_next = basis.blocks[2 * basis.m]
    coupling = 0.0
    for s in np.linspace(0.0, 1.0, grid):
        E = expm(s * proj.T)
        core = proj.tau @ (E[-2 * p :, :p] @ proj.gamma11)
        coupling = max(coupling, norms(V_next @ core)[1])
    factor = 1.0 if mu == 0.0 else float(np.expm1(mu) / mu)
    return coupling * factor, coupling, mu


def initial_block_angle(A, V):
    """Largest principal angle between the sequential and joint two-block starts.

    Parity diagnostic: both startup paths must span the same subspace, so the
    angle should sit at roundoff level.
    """
    V = _as_block(V)
    seq = ebha_run(A, V, 1, joint_start=False)
    joint = ebha_run(A, V, 1, joint_start=True)
    angles = sla.subspace_angles(seq.matrix(2), joint.matrix(2))
    return float(angles.max()) if angles.size else 0.0
