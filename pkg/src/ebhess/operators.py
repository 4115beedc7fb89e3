"""Operator abstraction, problem gallery, Matrix Market ingestion, flop estimates.

A :class:`FactorizedOperator` bundles the forward product ``A @ B`` with a
precomputed inverse action ``A^{-1} B``: the inverse is factorized once and
reused, which is what every driver in this package relies on.
"""

import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dense import SMALL_DIM_LIMIT
from .errors import (
    BadDimension,
    DimensionMismatch,
    ParseError,
    SingularOperator,
    UnknownGallery,
    UnsupportedField,
)

# Bands at most this wide go through the LAPACK banded factorization; wider
# patterns use sparse or dense LU depending on size.
_BAND_CUTOFF = 16
_DENSE_FALLBACK_N = 2000


@dataclass(frozen=True)
class GallerySpec:
    """Named test problem.

    ``size`` is the matrix dimension for ``toeplitz_inv_dist``,
    ``rot2_blockdiag`` and ``tridiag_scaled``, and the number of interior
    grid points per side for the convection-diffusion problems (n = size^2).
    ``path`` selects the file for ``matrix_market``.
    """

    name: str
    size: int = 0
    path: str | None = None


@dataclass
class MatrixMarketFile:
    """Parsed Matrix Market coordinate file with its header comments."""

    matrix: sp.csr_matrix
    comments: list
    symmetry: str


class FactorizedOperator:
    """Nonsingular operator exposing ``apply`` (A B) and ``solve`` (A^{-1} B).

    Construct through one of the classmethods; the inverse strategy is chosen
    from the structure: closed-form 2x2 block inverses, banded LU, dense LU
    below n = 2000, sparse LU otherwise.
    """

    def __init__(self, n, nnz, apply_fn, solve_fn, sparse_fn, structure, rot2=None):
        self.n = int(n)
        self.nnz = int(nnz)
        self.structure = structure
        self.rot2 = rot2  # (a, c) arrays for 2x2 block-diagonal operators
        self._apply = apply_fn
        self._solve = solve_fn
        self._sparse = sparse_fn

    def _check(self, B):
        B = np.asarray(B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        if B.shape[0] != self.n:
            raise DimensionMismatch(f"operand has {B.shape[0]} rows, operator is {self.n}")
        return B

    def apply(self, B):
        """Forward product A @ B."""
        return self._apply(self._check(B))

    def solve(self, B):
        """Inverse action A^{-1} B using the precomputed factorization."""
        return self._solve(self._check(B))

    def to_sparse(self):
        """CSR view of the forward operator."""
        return self._sparse()

    def to_dense(self, limit=SMALL_DIM_LIMIT):
        if self.n > limit:
            raise DimensionMismatch(f"refusing to densify n={self.n} > {limit}")
        return np.asarray(self.to_sparse().todense())

    def mu2(self):
        """Logarithmic 2-norm: largest eigenvalue of (A + A^T)/2."""
        S = self.to_sparse()
        B = (S + S.T) * 0.5
        if self.n <= SMALL_DIM_LIMIT:
            return float(np.linalg.eigvalsh(B.toarray()).max())
        return _sym_lambda_max(B)

    @classmethod
    def identity(cls, n):
        return cls.from_sparse(sp.eye(n, format="csr"))

    @classmethod
    def from_dense(cls, M):
        M = np.asarray(M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DimensionMismatch("operator matrix must be square")
        lu, piv = _checked_lu(M)
        nnz = int(np.count_nonzero(M))
        return cls(
            M.shape[0],
            nnz,
            lambda B: M @ B,
            lambda B: sla.lu_solve((lu, piv), B),
            lambda: sp.csr_matrix(M),
            structure="dense",
        )

    @classmethod
    def from_sparse(cls, S):
        S = sp.csr_matrix(S).astype(float)
        if S.shape[0] != S.shape[1]:
            raise DimensionMismatch("operator matrix must be square")
        n = S.shape[0]
        bl, bu = _bandwidths(S)
        if bl + bu <= _BAND_CUTOFF:
            solve_fn = _banded_solver(S, bl, bu)
            structure = "banded"
        elif n < _DENSE_FALLBACK_N:
            lu, piv = _checked_lu(S.toarray())
            solve_fn = lambda B: sla.lu_solve((lu, piv), B)
            structure = "sparse-dense-lu"
        else:
            try:
                factor = spla.splu(S.tocsc())
            except RuntimeError as exc:
                raise SingularOperator(str(exc)) from exc
            solve_fn = factor.solve
            structure = "sparse"
        return cls(n, S.nnz, lambda B: S @ B, solve_fn, lambda: S, structure=structure)

    @classmethod
    def from_rot2(cls, a, c):
        """Block diagonal operator with 2x2 blocks [[a_i, c], [-c, a_i]]."""
        a = np.asarray(a, dtype=float)
        c = float(c)
        det = a * a + c * c
        if (det == 0.0).any():
            raise SingularOperator("a 2x2 block has zero determinant")
        n = 2 * len(a)

        def apply_fn(B):
            Be, Bo = B[0::2], B[1::2]
            out = np.empty_like(B)
            out[0::2] = a[:, None] * Be + c * Bo
            out[1::2] = -c * Be + a[:, None] * Bo
            return out

        def solve_fn(B):
            Be, Bo = B[0::2], B[1::2]
            out = np.empty_like(B)
            out[0::2] = (a[:, None] * Be - c * Bo) / det[:, None]
            out[1::2] = (c * Be + a[:, None] * Bo) / det[:, None]
            return out

        def sparse_fn():
            i = np.arange(n)
            rows = np.concatenate([i, i[0::2], i[1::2]])
            cols = np.concatenate([i, i[0::2] + 1, i[1::2] - 1])
            vals = np.concatenate([np.repeat(a, 2), np.full(n // 2, c), np.full(n // 2, -c)])
            return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))

        nnz = n + 2 * (n // 2) if c != 0.0 else n
        return cls(n, nnz, apply_fn, solve_fn, sparse_fn, structure="rot2", rot2=(a, c))


def _checked_lu(M):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu, piv = sla.lu_factor(M)
    d = np.abs(np.diag(lu))
    if d.size and d.min() <= np.finfo(float).tiny:
        raise SingularOperator("zero pivot in LU factorization")
    return lu, piv


def _bandwidths(S):
    coo = S.tocoo()
    if coo.nnz == 0:
        return 0, 0
    d = coo.row - coo.col
    return int(max(d.max(), 0)), int(max(-d.min(), 0))


def _banded_solver(S, bl, bu):
    n = S.shape[0]
    ab = np.zeros((2 * bl + bu + 1, n))
    coo = S.tocoo()
    ab[bl + bu + coo.row - coo.col, coo.col] = coo.data
    gbtrf, gbtrs = sla.get_lapack_funcs(("gbtrf", "gbtrs"), (ab,))
    lu_band, ipiv, info = gbtrf(ab, bl, bu)
    if info != 0:
        raise SingularOperator(f"banded LU failed with info={info}")

    def solve_fn(B):
        x, info = gbtrs(lu_band, bl, bu, B, ipiv)
        if info != 0:
            raise SingularOperator(f"banded solve failed with info={info}")
        return x

    return solve_fn


def _sym_lambda_max(B):
    # Shifted power iteration: B + cI is PSD for c >= rho(B), so the dominant
    # eigenvalue of the shifted matrix is lambda_max(B) + c.
    n = B.shape[0]
    c = float(abs(B).sum(axis=1).max())
    rng = np.random.default_rng(0xB0B)
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(5000):
        y = B @ x + c * x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return -c
        x = y / ny
        new = float(x @ (B @ x))
        if abs(new - lam) <= 1e-10 * max(1.0, abs(new)):
            lam = new
            break
        lam = new
    return lam


# ---------------------------------------------------------------------------
# problem gallery


def toeplitz_inv_dist(n):
    """Symmetric positive definite Toeplitz matrix a_ij = 1/(1 + |i-j|)."""
    if n < 1:
        raise BadDimension("toeplitz_inv_dist needs n >= 1")
    col = 1.0 / (1.0 + np.arange(n))
    return FactorizedOperator.from_dense(sla.toeplitz(col))


def rot2_blockdiag(n):
    """Block diagonal with 2x2 blocks [[a_i, 1/2], [-1/2, a_i]], a_i = (2i-1)/(n+1)."""
    if n < 2 or n % 2 != 0:
        raise BadDimension("rot2_blockdiag needs even n >= 2")
    a = (2.0 * np.arange(1, n // 2 + 1) - 1.0) / (n + 1.0)
    return FactorizedOperator.from_rot2(a, 0.5)


def tridiag_scaled(n):
    """n^2 * tridiag(-1, 2, -1), the scaled 1-D Laplacian."""
    if n < 2:
        raise BadDimension("tridiag_scaled needs n >= 2")
    S = sp.diags(
        [np.full(n - 1, -1.0), np.full(n, 2.0), np.full(n - 1, -1.0)],
        [-1, 0, 1],
        format="csr",
    ) * float(n) ** 2
    return FactorizedOperator.from_sparse(S)


def convdiff(k, kind):
    """Centered finite differences for -Lap(u) + w.grad(u) on the unit square.

    Homogeneous Dirichlet boundary, k interior points per side (n = k^2),
    uniform grid with h = 1/(k+1), x the fast index.  ``kind`` 1 takes
    w = (10, 0); kind 2 takes w = (50(x+y), 50(x+y)).
    """
    if k < 2:
        raise BadDimension("convdiff needs at least 2 interior points per side")
    h = 1.0 / (k + 1)
    n = k * k
    idx = np.arange(n)
    xi = idx % k
    yi = idx // k
    if kind == 1:
        wx = np.full(n, 10.0)
        wy = np.zeros(n)
    elif kind == 2:
        coef = 50.0 * ((xi + 1) * h + (yi + 1) * h)
        wx = coef
        wy = coef.copy()
    else:
        raise UnknownGallery(f"convdiff kind {kind}")
    rows = [idx]
    cols = [idx]
    vals = [np.full(n, 4.0 / h**2)]
    east = xi < k - 1
    rows.append(idx[east]); cols.append(idx[east] + 1)
    vals.append(np.full(east.sum(), -1.0 / h**2) + wx[east] / (2 * h))
    west = xi > 0
    rows.append(idx[west]); cols.append(idx[west] - 1)
    vals.append(np.full(west.sum(), -1.0 / h**2) - wx[west] / (2 * h))
    north = yi < k - 1
    rows.append(idx[north]); cols.append(idx[north] + k)
    vals.append(np.full(north.sum(), -1.0 / h**2) + wy[north] / (2 * h))
    south = yi > 0
    rows.append(idx[south]); cols.append(idx[south] - k)
    vals.append(np.full(south.sum(), -1.0 / h**2) - wy[south] / (2 * h))
    S = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return FactorizedOperator.from_sparse(S)


def gallery(spec):
    """Build the named operator from a :class:`GallerySpec`."""
    name = spec.name.lower()
    if name == "toeplitz_inv_dist":
        return toeplitz_inv_dist(spec.size)
    if name == "rot2_blockdiag":
        return rot2_blockdiag(spec.size)
    if name == "tridiag_scaled":
        return tridiag_scaled(spec.size)
    if name == "convdiff_l1":
        return convdiff(spec.size, 1)
    if name == "convdiff_l2":
        return convdiff(spec.size, 2)
    if name == "matrix_market":
        if not spec.path:
            raise BadDimension("matrix_market gallery needs a file path")
        return FactorizedOperator.from_sparse(read_matrix_market(spec.path).matrix)
    raise UnknownGallery(spec.name)


# ---------------------------------------------------------------------------
# Matrix Market coordinate format


def read_matrix_market(path):
    """Parse a Matrix Market coordinate file (real, general or symmetric).

    Returns a :class:`MatrixMarketFile`; symmetric storage is expanded to the
    full pattern and header comments are kept verbatim.
    """
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        banner = fh.readline()
        if not banner.startswith("%%MatrixMarket"):
            raise ParseError("missing %%MatrixMarket banner")
        tokens = banner.strip().split()
        if len(tokens) < 5:
            raise ParseError("banner must name object, format, field and symmetry")
        _, obj, fmt, field, symmetry = (t.lower() for t in tokens[:5])
        if obj != "matrix":
            raise UnsupportedField(f"object '{obj}' not supported")
        if fmt != "coordinate":
            raise UnsupportedField(f"format '{fmt}' not supported (need coordinate)")
        if field not in ("real", "integer"):
            raise UnsupportedField(f"field '{field}' not supported")
        if symmetry not in ("general", "symmetric"):
            raise UnsupportedField(f"symmetry '{symmetry}' not supported")

        comments = []
        line = fh.readline()
        while line and line.lstrip().startswith("%"):
            comments.append(line.rstrip("\n"))
            line = fh.readline()
        if not line:
            raise ParseError("missing size line")
        parts = line.split()
        if len(parts) != 3:
            raise ParseError(f"bad size line: {line.strip()!r}")
        try:
            nrows, ncols, nnz = (int(t) for t in parts)
        except ValueError as exc:
            raise ParseError(f"bad size line: {line.strip()!r}") from exc
        if nrows != ncols:
            raise ParseError("only square matrices are supported")

        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=float)
        for k in range(nnz):
            line = fh.readline()
            if not line:
                raise ParseError(f"file truncated: expected {nnz} entries, got {k}")
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(f"bad entry line: {line.strip()!r}")
            try:
                i, j = int(parts[0]), int(parts[1])
                v = float(parts[2])
            except ValueError as exc:
                raise ParseError(f"bad entry line: {line.strip()!r}") from exc
            if not (1 <= i <= nrows and 1 <= j <= ncols):
                raise ParseError(f"index out of range on entry line {k + 1}")
            rows[k], cols[k], vals[k] = i - 1, j - 1, v

    if symmetry == "symmetric":
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    A = sp.csr_matrix((vals, (rows, cols)), shape=(nrows, ncols))
    A.sum_duplicates()
    return MatrixMarketFile(A, comments, symmetry)


# ---------------------------------------------------------------------------
# operation counts


def flop_estimate(n, p, m, nnz):
    """Flop count for m steps of the basis recursion.

    ``summed`` accumulates the elementary costs step by step and is the
    authoritative figure; ``closed_form`` evaluates the collapsed expression
    and is returned alongside so discrepancies stay visible.  Both are exact
    rationals evaluated in integer arithmetic before conversion.
    """
    n, p, m, nnz = (Fraction(int(v)) for v in (n, p, m, nnz))

    def c3(cols):  # LU factorization of an n-by-cols block
        return cols**2 * (n - cols / 3)

    c1 = p * nnz                # forward product
    c2 = n * (n + 1) * p        # inverse action
    c4 = Fraction(5, 3) * p**3 + p**2   # one projection coefficient
    c5 = n * p**2               # one block update

    summed = c3(2 * p)
    for j in range(1, int(m) + 1):
        summed += c1 + (2 * j) * (c4 + c5) + c3(p)
        summed += c2 + (2 * j + 1) * (c4 + c5) + c3(p)

    closed = (
        m * p * nnz
        + n * (n + 1) * p * m
        + (4 * p**2 * (n - 2 * p / 3) + m * p**2 * (n - p / 3))
        + p**2 * m * (3 * n + 5 * p + 3) * (2 * m + 3) / 3
    )
    return float(summed), float(closed)
