"""Extended block Arnoldi process: the orthonormal-basis baseline.

Builds the same extended block Krylov space as the pivoted Hessenberg process
but with block classical Gram-Schmidt (one full reorthogonalization pass) and
QR normalization, and projects A by a direct product with the basis.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import Breakdown, DimensionMismatch


@dataclass
class OrthoBasis:
    """Jointly orthonormal blocks U_1..U_{2m+2} with the projected matrix."""

    n: int
    p: int
    m: int
    blocks: list = field(repr=False)
    T_arnoldi: np.ndarray = field(repr=False)
    lambda11: np.ndarray = field(repr=False)

    def matrix(self, k_blocks):
        return np.hstack(self.blocks[:k_blocks])


def _qr_normalize(W, step, rank_tol=1e-13):
    scale = np.abs(W).max(initial=0.0)
    Q, R = np.linalg.qr(W)
    d = np.abs(np.diag(R))
    if scale == 0.0 or d.min() <= rank_tol * scale * W.shape[0]:
        raise Breakdown(step)
    return Q, R


def eba_run(A, V, m):
    """Run m steps of the extended block Arnoldi process.

    Mirrors the pivoted process block for block; orthonormality replaces the
    pivoting invariants and the projected matrix is computed directly as the
    basis-transposed product with A applied to the basis, masked to its block
    upper Hessenberg pattern.
    """
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    n, p = V.shape
    if n != A.n:
        raise DimensionMismatch(f"V has {n} rows, operator is {A.n}")
    if 2 * (m + 1) * p > n:
        raise DimensionMismatch(f"2(m+1)p = {2 * (m + 1) * p} exceeds n = {n}")
    if m < 1:
        raise DimensionMismatch("need at least one step")

    U1, lam11 = _qr_normalize(V, 1)
    blocks = [U1]

    def orthogonalize(W, step):
        raw_scale = np.abs(W).max(initial=0.0)
        Ub = np.hstack(blocks)
        W = W - Ub @ (Ub.T @ W)
        W = W - Ub @ (Ub.T @ W)  # one full reorthogonalization pass
        if np.abs(W).max(initial=0.0) <= 1e-13 * raw_scale:
            raise Breakdown(step)
        Q, _ = _qr_normalize(W, step)
        return Q

    blocks.append(orthogonalize(A.solve(V), 2))
    for j in range(1, m + 1):
        blocks.append(orthogonalize(A.apply(blocks[2 * j - 2]), 2 * j + 1))
        blocks.append(orthogonalize(A.solve(blocks[2 * j - 1]), 2 * j + 2))

    Ub = np.hstack(blocks[: 2 * m])
    T = Ub.T @ A.apply(Ub)
    _mask_hessenberg(T, p)
    return OrthoBasis(n, p, m, blocks, T, lam11)


def _mask_hessenberg(T, p):
    # Zero everything below the 2p-block subdiagonal; those entries are
    # structural zeros contaminated only by orthogonalization roundoff.
    k = T.shape[0] // p
    for r in range(k):
        for c in range(k):
            if (r // 2) > (c // 2) + 1:
                T[r * p : (r + 1) * p, c * p : (c + 1) * p] = 0.0
