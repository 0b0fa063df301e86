"""Orthogonal and column-orthogonal matrices from unconstrained parameters.

Three maps are provided: the Lie exponential of a skew-symmetric matrix
(exact and surjective onto SO(n)), the Cayley transform, and the iterative
Björck orthogonalization.  The exponential is the one used to build
paraunitary factors; the other two are kept for comparison.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NonConvergenceError, SingularityError

__all__ = [
    "EPS_ORTHO",
    "SkewParams",
    "exp_skew",
    "cayley",
    "bjorck",
    "column_ortho",
    "init_scheme",
    "ortho_residual",
    "INIT_SCHEMES",
]

#: Orthogonality tolerance ``max|Q^T Q - I|`` per floating format.
EPS_ORTHO = {np.dtype(np.float64): 1e-12, np.dtype(np.float32): 1e-5}

INIT_SCHEMES = ("identity", "permutation", "uniform", "torus")

# Diagonal Pade [13/13] coefficients for exp, lowest order first, and the
# largest 1-norm for which [13/13] is accurate to double precision.
_PADE = [
    math.factorial(26 - k) * math.factorial(13)
    / (math.factorial(26) * math.factorial(k) * math.factorial(13 - k))
    for k in range(14)
]
_THETA_13 = 5.371920351148152


@dataclass(frozen=True)
class SkewParams:
    """Strict upper triangle (row-major) of a skew-symmetric matrix."""

    dim: int
    coeffs: np.ndarray

    def __post_init__(self):
        if int(self.dim) < 1:
            raise InvalidInputError(f"dim must be >= 1, got {self.dim}")
        coeffs = np.asarray(self.coeffs, dtype=np.float64).reshape(-1)
        n_expected = self.dim * (self.dim - 1) // 2
        if coeffs.size != n_expected:
            raise InvalidInputError(
                f"dim {self.dim} needs {n_expected} coefficients, got {coeffs.size}"
            )
        if not np.all(np.isfinite(coeffs)):
            raise InvalidInputError("skew coefficients must be finite")
        coeffs.setflags(write=False)
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zeros(cls, dim: int) -> "SkewParams":
        return cls(dim, np.zeros(dim * (dim - 1) // 2))

    @classmethod
    def random(cls, dim: int, rng: np.random.Generator, low=-np.pi, high=np.pi) -> "SkewParams":
        return cls(dim, rng.uniform(low, high, size=dim * (dim - 1) // 2))

    @classmethod
    def from_matrix(cls, a) -> "SkewParams":
        a = np.asarray(a, dtype=np.float64)
        iu = np.triu_indices(a.shape[0], k=1)
        return cls(a.shape[0], a[iu])

    def matrix(self) -> np.ndarray:
        a = np.zeros((self.dim, self.dim))
        iu = np.triu_indices(self.dim, k=1)
        a[iu] = self.coeffs
        return a - a.T


def ortho_residual(q) -> float:
    """``max |Q^T Q - I|`` for a (possibly rectangular) column-orthogonal Q."""
    q = np.asarray(q)
    if q.size == 0:
        return 0.0
    return float(np.max(np.abs(q.T @ q - np.eye(q.shape[1]))))


def _expm_pade(a: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    norm1 = np.linalg.norm(a, 1)
    squarings = 0
    if norm1 > _THETA_13:
        squarings = int(math.ceil(math.log2(norm1 / _THETA_13)))
    x = a / (2.0 ** squarings)
    b = _PADE
    ident = np.eye(n)
    x2 = x @ x
    x4 = x2 @ x2
    x6 = x4 @ x2
    odd = x @ (x6 @ (b[13] * x6 + b[11] * x4 + b[9] * x2)
               + b[7] * x6 + b[5] * x4 + b[3] * x2 + b[1] * ident)
    even = (x6 @ (b[12] * x6 + b[10] * x4 + b[8] * x2)
            + b[6] * x6 + b[4] * x4 + b[2] * x2 + b[0] * ident)
    r = np.linalg.solve(even - odd, even + odd)
    for _ in range(squarings):
        r = r @ r
    return r


def exp_skew(params: SkewParams) -> np.ndarray:
    """Matrix exponential of the skew-symmetric matrix given by ``params``.

    Uses scaling and squaring with a diagonal [13/13] Pade approximant; the
    number of squarings is the smallest ``s`` with
    ``||A / 2**s||_1 <= 5.37``.  For skew-symmetric ``A`` the Pade
    denominator is the transpose of the numerator, so the approximant is
    orthogonal up to rounding, and every squaring roughly doubles that
    rounding error; keeping ``s`` small is what keeps ``Q^T Q`` at the
    1e-15 level.

    Parameters
    ----------
    params : SkewParams

    Returns
    -------
    (dim, dim) ndarray
        Special orthogonal matrix ``exp(A)``.
    """
    if not isinstance(params, SkewParams):
        raise InvalidInputError("exp_skew expects SkewParams")
    if params.dim == 1:
        return np.ones((1, 1))
    return _expm_pade(params.matrix())


def cayley(params: SkewParams, max_cond: float = 1e12) -> np.ndarray:
    """Cayley transform ``(I - A)(I + A)^{-1}``; never has eigenvalue -1."""
    if not isinstance(params, SkewParams):
        raise InvalidInputError("cayley expects SkewParams")
    a = params.matrix()
    ident = np.eye(params.dim)
    plus = ident + a
    cond = np.linalg.cond(plus)
    if not np.isfinite(cond) or cond > max_cond:
        raise SingularityError(f"I + A is numerically singular (cond={cond:.3g})")
    # (I - A)(I + A)^{-1} == ((I + A)^{-T} (I - A)^T)^T, and (I + A)^T = I - A
    return np.linalg.solve(plus.T, (ident - a).T).T


def _bjorck_coeffs(order: int) -> list[float]:
    # (-1)^j * binom(-1/2, j)
    coeffs = [1.0]
    for j in range(1, order + 1):
        coeffs.append(coeffs[-1] * (2 * j - 1) / (2 * j))
    return coeffs


def bjorck(initial, steps: int = 30, order: int = 1, scale_above: float = 1.5,
           return_trace: bool = False):
    """Björck orthogonalization of ``initial`` towards its polar factor.

    Iterates ``U <- U (I + P/2 + 3/8 P^2 + ...)`` with ``P = I - U^T U``,
    truncated after ``order`` terms.  Inputs whose spectral norm exceeds
    ``scale_above`` are first rescaled to unit spectral norm, which keeps
    every singular value inside the convergence region (0, sqrt(3)).

    Raises NonConvergenceError when ``||P||`` grows three steps in a row.
    """
    u = np.array(initial, dtype=np.float64, copy=True)
    if u.ndim != 2 or u.shape[0] < u.shape[1]:
        raise InvalidInputError("bjorck expects a tall or square 2-D matrix")
    if steps < 0 or order < 1:
        raise InvalidInputError("steps must be >= 0 and order >= 1")
    sigma = np.linalg.svd(u, compute_uv=False)
    if sigma[-1] <= 0 or not np.all(np.isfinite(sigma)):
        raise InvalidInputError("bjorck requires a finite full-rank matrix")
    if sigma[0] > scale_above:
        u = u / sigma[0]
    coeffs = _bjorck_coeffs(order)
    ident = np.eye(u.shape[1])
    trace = []
    increases = 0
    prev = np.inf
    for _ in range(steps):
        p = ident - u.T @ u
        pnorm = float(np.linalg.norm(p, 2))
        trace.append(pnorm)
        # rounding noise near convergence is not divergence
        increases = increases + 1 if pnorm > max(prev, 1e-10) else 0
        if increases >= 3 or not np.isfinite(pnorm):
            raise NonConvergenceError("Björck iteration diverged")
        prev = pnorm
        if pnorm == 0.0:
            break
        poly = coeffs[-1] * ident
        for c in reversed(coeffs[:-1]):
            poly = c * ident + p @ poly
        u = u @ poly
    if return_trace:
        return u, trace
    return u


def column_ortho(params: SkewParams, cols: int) -> np.ndarray:
    """First ``cols`` columns of ``exp_skew(params)``.

    ``cols = 0`` gives an empty ``(dim, 0)`` matrix, whose projector
    ``U U^T`` is zero.
    """
    if not 0 <= cols <= params.dim:
        raise InvalidInputError(f"cols must be in [0, {params.dim}], got {cols}")
    if cols == 0:
        return np.zeros((params.dim, 0))
    return np.ascontiguousarray(exp_skew(params)[:, :cols])


def init_scheme(name: str, dim: int, seed=None) -> np.ndarray:
    """Orthogonal matrix from a named initialization scheme.

    ``identity`` and ``permutation`` are the usual choices; ``uniform``
    exponentiates coefficients drawn from U[-pi, pi]; ``torus`` stacks 2x2
    rotations with uniform angles along the diagonal (a trailing 1 for odd
    ``dim``).
    """
    if dim < 1:
        raise InvalidInputError(f"dim must be >= 1, got {dim}")
    if name not in INIT_SCHEMES:
        raise InvalidInputError(f"unknown init scheme {name!r}; choose from {INIT_SCHEMES}")
    if name == "identity":
        return np.eye(dim)
    if seed is None:
        raise InvalidInputError(f"init scheme {name!r} requires a seed")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if name == "permutation":
        return np.eye(dim)[rng.permutation(dim)]
    if name == "uniform":
        return exp_skew(SkewParams.random(dim, rng))
    q = np.eye(dim)
    for k in range(dim // 2):
        theta = rng.uniform(-np.pi, np.pi)
        c, s = np.cos(theta), np.sin(theta)
        q[2 * k:2 * k + 2, 2 * k:2 * k + 2] = [[c, -s], [s, c]]
    return q
