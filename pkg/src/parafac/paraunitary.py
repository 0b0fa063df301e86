"""Paraunitary systems from (column-)orthogonal matrices.

Every finite-length 1D paraunitary system factors as

    H(z) = V(z; U_{-Lm}) ... V(z; U_{-1}) Q V(1/z; U_1) ... V(1/z; U_{Lp})

with ``V(z; U) = (I - U U^T) + U U^T z``, ``Q`` orthogonal and each ``U``
column-orthogonal.  Building the product therefore gives an unconstrained
parameterization of all paraunitary filters of a given support; separable
2D systems are products of two 1D systems in different variables.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .ortho import SkewParams, column_ortho, exp_skew, init_scheme
from .polymat import MatrixSeq, array_from_b64, array_to_b64, seq_mul

__all__ = [
    "ParaunitaryFactors",
    "Separable2D",
    "Taps2D",
    "v_block",
    "build_1d",
    "init_reduced",
    "build_2d",
    "unitarity_residual_2d",
    "random_factors",
    "initialized_factors",
    "factors_to_dict",
    "factors_from_dict",
    "save_factors",
    "load_factors",
]


@dataclass(frozen=True)
class ParaunitaryFactors:
    """Parameters ``(Q, {U_-l}, {U_l})`` of one 1D paraunitary system.

    ``neg_factors[l - 1]`` is ``U_{-l}`` (anticausal side) and
    ``pos_factors[l - 1]`` is ``U_l`` (causal side).
    """

    q: np.ndarray
    neg_factors: tuple = field(default_factory=tuple)
    pos_factors: tuple = field(default_factory=tuple)

    def __post_init__(self):
        q = np.array(self.q, dtype=np.float64)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise InvalidInputError(f"Q must be square, got shape {q.shape}")
        channels = q.shape[0]
        q.setflags(write=False)
        object.__setattr__(self, "q", q)
        for name in ("neg_factors", "pos_factors"):
            mats = []
            for u in getattr(self, name):
                u = np.array(u, dtype=np.float64)
                if u.ndim != 2 or u.shape[0] != channels or u.shape[1] > channels:
                    raise InvalidInputError(
                        f"{name} entry has shape {u.shape}; expected ({channels}, k) with k <= {channels}"
                    )
                u.setflags(write=False)
                mats.append(u)
            object.__setattr__(self, name, tuple(mats))

    @property
    def channels(self) -> int:
        return self.q.shape[0]

    @property
    def degrees(self) -> tuple[int, int]:
        return len(self.neg_factors), len(self.pos_factors)


@dataclass(frozen=True)
class Separable2D:
    horizontal: ParaunitaryFactors
    vertical: ParaunitaryFactors

    def __post_init__(self):
        if self.horizontal.channels != self.vertical.channels:
            raise InvalidInputError(
                f"channel mismatch: {self.horizontal.channels} vs {self.vertical.channels}"
            )


@dataclass(frozen=True, eq=False)
class Taps2D:
    """2D taps ``g[m, n]`` for ``m in [-lo1, hi1]``, ``n in [-lo2, hi2]``."""

    lo1: int
    hi1: int
    lo2: int
    hi2: int
    taps: np.ndarray  # (M, N, T, S)

    def tap(self, m: int, n: int) -> np.ndarray:
        return self.taps[m + self.lo1, n + self.lo2]

    def eval_z(self, z1: complex, z2: complex) -> np.ndarray:
        p1 = complex(z1) ** (-np.arange(-self.lo1, self.hi1 + 1, dtype=float))
        p2 = complex(z2) ** (-np.arange(-self.lo2, self.hi2 + 1, dtype=float))
        return np.einsum("m,n,mnts->ts", p1, p2, self.taps)

    def freq_grid(self, k1: int, k2: int) -> np.ndarray:
        """Transfer matrix on a ``k1 x k2`` DFT grid, shape ``(k1, k2, T, S)``."""
        folded = np.zeros((k1, k2) + self.taps.shape[2:])
        m = np.mod(np.arange(-self.lo1, self.hi1 + 1), k1)
        n = np.mod(np.arange(-self.lo2, self.hi2 + 1), k2)
        np.add.at(folded, (m[:, None], n[None, :]), self.taps)
        return np.fft.fft2(folded, axes=(0, 1))


def v_block(u, direction: str = "z^-1") -> MatrixSeq:
    """Degree-one paraunitary block ``(I - U U^T) + U U^T z^{+-1}``.

    ``direction='z'`` puts the projector at ``n = -1`` (anticausal);
    ``direction='z^-1'`` puts it at ``n = 1``.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2 or u.shape[1] > u.shape[0]:
        raise InvalidInputError(f"U must be (channels, k) with k <= channels, got {u.shape}")
    proj = u @ u.T
    ident = np.eye(u.shape[0])
    if direction == "z":
        return MatrixSeq.from_taps(np.stack([proj, ident - proj]), start=-1)
    if direction in ("z^-1", "z-1", "zinv"):
        return MatrixSeq.from_taps(np.stack([ident - proj, proj]), start=0)
    raise InvalidInputError(f"direction must be 'z' or 'z^-1', got {direction!r}")


def build_1d(factors: ParaunitaryFactors) -> MatrixSeq:
    """Multiply out the factorization as a left fold over the factor list."""
    chain = [v_block(u, "z") for u in reversed(factors.neg_factors)]
    chain.append(MatrixSeq(0, 0, factors.q[None]))
    chain.extend(v_block(u, "z^-1") for u in factors.pos_factors)
    h = chain[0]
    for g in chain[1:]:
        h = seq_mul(h, g)
    return h


def init_reduced(q, pos_factors) -> ParaunitaryFactors:
    """Factors with ``U_{-l} = Q U_l``, for which the product collapses to ``Q``.

    This lets any orthogonal-matrix initialization seed a convolution of
    arbitrary support.
    """
    q = np.asarray(q, dtype=np.float64)
    neg = []
    for u in pos_factors:
        u = np.asarray(u, dtype=np.float64)
        if u.ndim != 2 or u.shape[0] != q.shape[0]:
            raise InvalidInputError(f"factor shape {u.shape} does not match Q {q.shape}")
        neg.append(q @ u)
    return ParaunitaryFactors(q, tuple(neg), tuple(pos_factors))


def build_2d(sep: Separable2D) -> Taps2D:
    """Taps ``g[m, n] = h1[m] h2[n]`` of ``H1(z1) H2(z2)``."""
    h1 = build_1d(sep.horizontal)
    h2 = build_1d(sep.vertical)
    taps = np.einsum("mab,nbc->mnac", h1.taps, h2.taps)
    return Taps2D(h1.lo, h1.hi, h2.lo, h2.hi, taps)


def unitarity_residual_2d(taps: Taps2D, k1: int = 16, k2: int = 16) -> float:
    """``max ||H^H H - I||_max`` over a ``k1 x k2`` frequency grid."""
    grid = taps.freq_grid(k1, k2)
    gram = np.matmul(np.conj(np.swapaxes(grid, -1, -2)), grid)
    return float(np.max(np.abs(gram - np.eye(grid.shape[-1]))))


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def random_factors(channels: int, lo: int, hi: int, seed=None, cols=None) -> ParaunitaryFactors:
    """Independent uniform factors (all coefficients from U[-pi, pi]).

    ``cols`` is the rank of each ``U`` (default ``channels // 2``, at least
    1 when ``channels > 1``); pass a callable ``cols(rng)`` to draw ranks.
    """
    rng = _rng(seed)

    def rank():
        if callable(cols):
            return int(cols(rng))
        if cols is None:
            return max(channels // 2, 1) if channels > 1 else 0
        return int(cols)

    q = exp_skew(SkewParams.random(channels, rng))
    neg = tuple(column_ortho(SkewParams.random(channels, rng), rank()) for _ in range(lo))
    pos = tuple(column_ortho(SkewParams.random(channels, rng), rank()) for _ in range(hi))
    return ParaunitaryFactors(q, neg, pos)


def initialized_factors(scheme: str, channels: int, degree: int, seed=None, cols=None) -> ParaunitaryFactors:
    """Factors of support ``[-degree, degree]`` seeded by an init scheme.

    ``uniform`` draws every factor independently; ``identity``,
    ``permutation`` and ``torus`` pick ``Q`` from the scheme and use the
    reduction ``U_{-l} = Q U_l`` so the filter starts as the 1x1 conv ``Q``.
    """
    rng = _rng(seed)
    if scheme == "uniform":
        return random_factors(channels, degree, degree, rng, cols)
    q = init_scheme(scheme, channels, rng)
    k = (max(channels // 2, 1) if channels > 1 else 0) if cols is None else int(cols)
    pos = [column_ortho(SkewParams.random(channels, rng), k) for _ in range(degree)]
    return init_reduced(q, pos)


# -- serialization ---------------------------------------------------------

def _mat_to_dict(m: np.ndarray) -> dict:
    return {"rows": m.shape[0], "cols": m.shape[1], "dtype": "f64", "order": "row-major",
            "data": array_to_b64(m)}


def _mat_from_dict(d: dict) -> np.ndarray:
    return array_from_b64(d["data"], np.float64, (d["rows"], d["cols"]))


def factors_to_dict(factors: ParaunitaryFactors) -> dict:
    return {
        "channels": factors.channels,
        "q": _mat_to_dict(factors.q),
        "neg_factors": [_mat_to_dict(u) for u in factors.neg_factors],
        "pos_factors": [_mat_to_dict(u) for u in factors.pos_factors],
    }


def factors_from_dict(d: dict) -> ParaunitaryFactors:
    f = ParaunitaryFactors(
        _mat_from_dict(d["q"]),
        tuple(_mat_from_dict(u) for u in d["neg_factors"]),
        tuple(_mat_from_dict(u) for u in d["pos_factors"]),
    )
    if f.channels != d["channels"]:
        raise InvalidInputError("channel count in header does not match Q")
    return f


def save_factors(path: str, factors: ParaunitaryFactors) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(factors_to_dict(factors), fh, sort_keys=True)


def load_factors(path: str) -> ParaunitaryFactors:
    with open(path, encoding="utf-8") as fh:
        return factors_from_dict(json.load(fh))
