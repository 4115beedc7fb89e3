"""Matrix functions of small dense matrices, plus Laurent polynomial actions.

The projected matrices this module sees are nonnormal, so the general path
(complex eigendecomposition) carries a conditioning guard and the named
functions get dedicated kernels: scaling-and-squaring for exp, a
Denman-Beavers iteration for the square root, inverse scaling-and-squaring
for the logarithm, and a direct solve for the resolvent.
"""

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .errors import (
    BranchCutViolation,
    DimensionMismatch,
    IllConditionedEigenbasis,
    NoConvergence,
    Overflow,
)

# Eigenvector-basis condition numbers beyond this are not trusted.
EIGENBASIS_COND_LIMIT = 1e8


@dataclass(frozen=True)
class FunctionSpec:
    """A scalar function to be lifted to matrix argument.

    Build instances through the classmethods; ``coeffs`` holds (power, weight)
    pairs for Laurent polynomials, ``shift`` the resolvent shift, ``scalar``
    a user callable for the custom tag.
    """

    tag: str
    shift: float = 0.0
    coeffs: tuple = ()
    scalar: Callable | None = None

    @classmethod
    def exp(cls):
        return cls("exp")

    @classmethod
    def sqrt(cls):
        return cls("sqrt")

    @classmethod
    def log(cls):
        return cls("log")

    @classmethod
    def exp_neg_sqrt(cls):
        return cls("expnegsqrt")

    @classmethod
    def exp_neg_over_x(cls):
        return cls("expinvx")

    @classmethod
    def resolvent(cls, sigma):
        return cls("resolvent", shift=float(sigma))

    @classmethod
    def laurent(cls, coeffs):
        """Laurent polynomial sum(c_j x^j) from a {power: coefficient} mapping."""
        items = tuple(sorted((int(k), float(v)) for k, v in dict(coeffs).items()))
        return cls("laurent", coeffs=items)

    @classmethod
    def custom(cls, fn):
        """Wrap a scalar callable; it must map conjugate pairs to conjugates."""
        return cls("custom", scalar=fn)

    @classmethod
    def from_name(cls, name):
        try:
            return {
                "exp": cls.exp,
                "sqrt": cls.sqrt,
                "log": cls.log,
                "expnegsqrt": cls.exp_neg_sqrt,
                "expinvx": cls.exp_neg_over_x,
            }[name]()
        except KeyError:
            raise ValueError(f"unknown function name {name!r}") from None

    def scalar_eval(self, z):
        """Evaluate the scalar function at z (scalar or array, complex ok)."""
        z = np.asarray(z)
        if self.tag == "exp":
            return np.exp(z)
        if self.tag == "sqrt":
            return np.sqrt(z.astype(complex))
        if self.tag == "log":
            return np.log(z.astype(complex))
        if self.tag == "expnegsqrt":
            return np.exp(-np.sqrt(z.astype(complex)))
        if self.tag == "expinvx":
            return np.exp(-z) / z
        if self.tag == "resolvent":
            return 1.0 / (z + self.shift)
        if self.tag == "laurent":
            zc = z.astype(complex)
            out = np.zeros_like(zc)
            for j, c in self.coeffs:
                out = out + c * zc**j
            return out
        if self.tag == "custom":
            return self.scalar(z)
        raise ValueError(f"unknown tag {self.tag!r}")


def _square(M, name):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} expects a square matrix")
    return M


def expm(M):
    """Matrix exponential by scaling and squaring with a diagonal Pade kernel."""
    M = _square(M, "expm")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # overflow becomes our typed error below
        E = sla.expm(M)
    if not np.isfinite(E).all():
        raise Overflow("matrix exponential overflowed")
    return E


def _check_branch(M, what):
    w = np.linalg.eigvals(M)
    scale = max(np.abs(w).max(), np.finfo(float).tiny)
    on_cut = (w.real <= 0.0) & (np.abs(w.imag) <= 1e-14 * scale)
    if on_cut.any():
        bad = w[np.argmax(on_cut)]
        raise BranchCutViolation(
            f"{what}: eigenvalue {bad.real:.6g} on the closed negative real axis"
        )
    return w


def sqrtm(M):
    """Principal matrix square root by the Denman-Beavers iteration."""
    M = _square(M, "sqrtm")
    _check_branch(M, "sqrtm")
    X = M.copy()
    Y = np.eye(M.shape[0])
    for _ in range(100):
        Xi = np.linalg.inv(X)
        Yi = np.linalg.inv(Y)
        Xn = 0.5 * (X + Yi)
        Yn = 0.5 * (Y + Xi)
        delta = np.linalg.norm(Xn - X) / max(np.linalg.norm(Xn), np.finfo(float).tiny)
        X, Y = Xn, Yn
        if delta < 1e-14:
            return X
    raise NoConvergence("Denman-Beavers iteration did not converge")


def logm(M):
    """Principal matrix logarithm by inverse scaling and squaring.

    Square roots are taken until the iterate is close to the identity, the
    small logarithm is summed from its alternating series, and the result is
    scaled back.
    """
    M = _square(M, "logm")
    _check_branch(M, "logm")
    X = M.copy()
    s = 0
    while np.linalg.norm(X - np.eye(X.shape[0])) > 0.3 and s < 60:
        X = sqrtm(X)
        s += 1
    E = X - np.eye(X.shape[0])
    term = E.copy()
    out = E.copy()
    for k in range(2, 80):
        term = term @ E
        inc = ((-1.0) ** (k + 1) / k) * term
        out += inc
        if np.linalg.norm(inc) <= 1e-17 * max(np.linalg.norm(out), 1e-300):
            break
    return out * 2.0**s


def _funm_eig(fn, M, what):
    w, X = np.linalg.eig(M)
    cond = np.linalg.cond(X)
    if not np.isfinite(cond) or cond > EIGENBASIS_COND_LIMIT:
        raise IllConditionedEigenbasis(
            f"{what}: eigenvector basis condition {cond:.3e} exceeds {EIGENBASIS_COND_LIMIT:.0e}"
        )
    F = (X * fn(w)) @ np.linalg.inv(X)
    return F.real if np.isrealobj(M) else F


def funm(spec, M):
    """Evaluate f(M) for a :class:`FunctionSpec` on a small square matrix.

    exp, sqrt and log go through their dedicated kernels, the resolvent is a
    direct shifted solve, Laurent polynomials are evaluated by explicit
    matrix powers, and everything else uses the eigendecomposition path with
    the conditioning guard.
    """
    M = _square(M, "funm")
    tag = spec.tag
    if tag == "exp":
        return expm(M)
    if tag == "sqrt":
        return sqrtm(M)
    if tag == "log":
        return logm(M)
    if tag == "expnegsqrt":
        _check_branch(M, "funm(expnegsqrt)")
        return _funm_eig(spec.scalar_eval, M, "funm(expnegsqrt)")
    if tag == "expinvx":
        _check_pole_at_zero(M, "funm(expinvx)")
        return _funm_eig(spec.scalar_eval, M, "funm(expinvx)")
    if tag == "resolvent":
        shifted = M + spec.shift * np.eye(M.shape[0])
        return _checked_inverse(shifted, "resolvent pole on the spectrum")
    if tag == "laurent":
        return _laurent_matrix(spec.coeffs, M)
    if tag == "custom":
        return _funm_eig(spec.scalar_eval, M, "funm(custom)")
    raise ValueError(f"unknown tag {tag!r}")


def _checked_inverse(M, pole_message):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            lu = sla.lu_factor(M)
        except sla.LinAlgError as exc:
            raise BranchCutViolation(pole_message) from exc
    d = np.abs(np.diag(lu[0]))
    if d.size == 0 or d.min() <= np.finfo(float).eps * max(d.max(), np.finfo(float).tiny) * M.shape[0]:
        raise BranchCutViolation(pole_message)
    return sla.lu_solve(lu, np.eye(M.shape[0]))


def _check_pole_at_zero(M, what):
    w = np.linalg.eigvals(M)
    scale = max(np.abs(w).max(), np.finfo(float).tiny)
    if np.abs(w).min() <= 1e-14 * scale:
        raise BranchCutViolation(f"{what}: eigenvalue at the pole 0")


def _laurent_matrix(coeffs, M):
    n = M.shape[0]
    out = np.zeros_like(M)
    pos = [j for j, _ in coeffs if j > 0]
    neg = [-j for j, _ in coeffs if j < 0]
    cmap = dict(coeffs)
    if 0 in cmap:
        out += cmap[0] * np.eye(n)
    if pos:
        P = np.eye(n)
        for j in range(1, max(pos) + 1):
            P = M @ P
            if j in cmap:
                out += cmap[j] * P
    if neg:
        Minv = _checked_inverse(M, "negative powers need a nonsingular matrix")
        P = np.eye(n)
        for j in range(1, max(neg) + 1):
            P = Minv @ P
            if -j in cmap:
                out += cmap[-j] * P
    return out


def laurent_apply(coeffs, A, V):
    """Exact Laurent polynomial action sum(c_j A^j V) by repeated apply/solve.

    This is the exactness oracle for the projection drivers: positive powers
    use the forward product, negative powers the factored inverse action.
    """
    coeffs = dict(FunctionSpec.laurent(coeffs).coeffs)
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    out = np.zeros_like(V)
    if 0 in coeffs:
        out += coeffs[0] * V
    pos = [j for j in coeffs if j > 0]
    neg = [-j for j in coeffs if j < 0]
    if pos:
        W = V
        for j in range(1, max(pos) + 1):
            W = A.apply(W)
            if j in coeffs:
                out += coeffs[j] * W
    if neg:
        W = V
        for j in range(1, max(neg) + 1):
            W = A.solve(W)
            if -j in coeffs:
                out += coeffs[-j] * W
    return out
