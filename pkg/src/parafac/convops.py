"""Circular 1D convolutions and their orthogonal constructions.

Signals are arrays of shape ``(..., N, S)``: ``N`` circularly indexed
samples of ``S`` channels, with any number of leading batch axes.  Filters
are :class:`~parafac.polymat.MatrixSeq` objects with ``T x S`` taps.

Each variant has a transfer object that must be paraunitary for the layer
to be orthogonal:

==============  ======================================  =================
kind            spatial form                            transfer object
==============  ======================================  =================
standard        y[i] = sum h[n] x[i - n]                H(z)
dilated         y[i] = sum h_up[n] x[i - n]             H(z^R)
strided_down    y[i] = sum h[n] x[R i - n]              reflected polyphase
strided_up      y[i] = sum h[n] x_up[i - n]             stacked polyphase
==============  ======================================  =================

Group convolutions apply one filter per channel group (block diagonal
transfer matrix) and combine with any of the kinds above.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidInputError, ResourceError
from .multirate import polyphase_matrix, upsample
from .ortho import bjorck
from .paraunitary import (
    ParaunitaryFactors,
    build_1d,
    factors_from_dict,
    factors_to_dict,
    initialized_factors,
)
from .polymat import MatrixSeq, freq_grid, is_paraunitary, seq_from_dict, seq_to_dict

__all__ = [
    "KINDS",
    "ConvSpec",
    "OrthoReport",
    "RunningStats",
    "check_constraints",
    "conv_standard",
    "conv_dilated",
    "conv_strided_down",
    "conv_strided_up",
    "conv_group",
    "apply",
    "transfer_objects",
    "spectral_residual",
    "build_orthogonal",
    "circulant_oracle",
    "verify_orthogonality",
    "svcm_project",
    "rko_project",
    "spec_to_dict",
    "spec_from_dict",
    "save_spec",
    "load_spec",
    "CSV_FIELDS",
]

KINDS = ("standard", "dilated", "strided_down", "strided_up")
ORACLE_GUARD = 4096
DEFAULT_TOL = {"f64": 1e-12, "f32": 1e-6}


# -- raw convolutions ------------------------------------------------------

def _as_signal(x, channels: int) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim < 2:
        raise InvalidInputError(f"signal must have shape (..., N, S), got {x.shape}")
    if x.shape[-1] != channels:
        raise InvalidInputError(f"filter expects {channels} input channels, signal has {x.shape[-1]}")
    return x


def _gather_conv(filt: MatrixSeq, x: np.ndarray, out_len: int, step: int = 1, dil: int = 1) -> np.ndarray:
    """``y[i] = sum_n h[n] x[(step*i - dil*n) mod N]`` for ``i < out_len``."""
    n_in = x.shape[-2]
    taps = filt.taps.astype(np.result_type(x.dtype, np.float32), copy=False)
    base = step * np.arange(out_len)
    y = np.zeros(x.shape[:-2] + (out_len, filt.rows), dtype=np.result_type(x.dtype, taps.dtype))
    for k, n in enumerate(filt.indices):
        if not np.any(taps[k]):
            continue
        idx = np.mod(base - dil * n, n_in)
        y += np.take(x, idx, axis=-2) @ taps[k].T
    return y


def conv_standard(filt: MatrixSeq, x) -> np.ndarray:
    """Circular convolution ``y[i] = sum_n h[n] x[i - n]``."""
    x = _as_signal(x, filt.cols)
    n = x.shape[-2]
    if filt.length > n:
        raise InvalidInputError(f"filter support {filt.length} exceeds signal length {n}")
    return _gather_conv(filt, x, n)


def conv_dilated(filt: MatrixSeq, rate: int, x) -> np.ndarray:
    """Convolution with the zero-inserted filter ``h_up[n]``."""
    x = _as_signal(x, filt.cols)
    n = x.shape[-2]
    if rate < 1:
        raise InvalidInputError("rate must be >= 1")
    if rate * (filt.length - 1) + 1 > n:
        raise InvalidInputError(
            f"dilated support {rate * (filt.length - 1) + 1} exceeds signal length {n}"
        )
    return _gather_conv(filt, x, n, dil=rate)


def conv_strided_down(filt: MatrixSeq, rate: int, x) -> np.ndarray:
    """``y[i] = sum_n h[n] x[R i - n]``; output length ``N / R``."""
    x = _as_signal(x, filt.cols)
    n = x.shape[-2]
    if rate < 1 or n % rate:
        raise InvalidInputError(f"rate {rate} must divide signal length {n}")
    if filt.length > n:
        raise InvalidInputError(f"filter support {filt.length} exceeds signal length {n}")
    return _gather_conv(filt, x, n // rate, step=rate)


def conv_strided_up(filt: MatrixSeq, rate: int, x) -> np.ndarray:
    """``y[i] = sum_n h[n] x_up[i - n]``; output length ``N R``."""
    x = _as_signal(x, filt.cols)
    if rate < 1:
        raise InvalidInputError("rate must be >= 1")
    n = x.shape[-2] * rate
    if filt.length > n:
        raise InvalidInputError(f"filter support {filt.length} exceeds output length {n}")
    xu = np.zeros(x.shape[:-2] + (n, x.shape[-1]), dtype=x.dtype)
    xu[..., ::rate, :] = x
    return _gather_conv(filt, xu, n)


_KIND_FN = {
    "standard": lambda f, r, x: conv_standard(f, x),
    "dilated": conv_dilated,
    "strided_down": conv_strided_down,
    "strided_up": conv_strided_up,
}


def conv_group(filters, x, kind: str = "standard", rate: int = 1) -> np.ndarray:
    """Apply ``filters[g]`` to channel group ``g`` and concatenate."""
    filters = list(filters)
    if not filters:
        raise InvalidInputError("need at least one group filter")
    if kind not in _KIND_FN:
        raise InvalidInputError(f"unknown kind {kind!r}")
    s_g = filters[0].cols
    if any(f.shape != filters[0].shape for f in filters):
        raise InvalidInputError("all group filters must have the same shape")
    x = np.asarray(x)
    if x.shape[-1] != s_g * len(filters):
        raise InvalidInputError(
            f"{len(filters)} groups of {s_g} channels do not match {x.shape[-1]} input channels"
        )
    outs = [_KIND_FN[kind](f, rate, x[..., g * s_g:(g + 1) * s_g]) for g, f in enumerate(filters)]
    return outs[0] if len(outs) == 1 else np.concatenate(outs, axis=-1)


# -- specs -----------------------------------------------------------------

def check_constraints(kind: str, in_channels: int, out_channels: int | None = None,
                      rate: int = 1, groups: int = 1) -> int:
    """Validate an orthogonal-construction request; returns ``out_channels``.

    Raises InvalidInputError naming the violated relation.
    """
    if kind not in KINDS:
        raise InvalidInputError(f"unknown kind {kind!r}; expected one of {KINDS}")
    if in_channels < 1 or groups < 1 or rate < 1:
        raise InvalidInputError("channels, groups and rate must be positive")
    if kind in ("standard", "dilated"):
        expected = in_channels
        relation = "out_channels == in_channels"
    elif kind == "strided_down":
        expected = rate * in_channels
        relation = f"out_channels == rate * in_channels ({rate} * {in_channels})"
    else:
        if in_channels % rate:
            raise InvalidInputError(
                f"rate {rate} does not divide in_channels {in_channels} (strided_up needs in_channels == rate * out_channels)"
            )
        expected = in_channels // rate
        relation = f"in_channels == rate * out_channels ({in_channels} == {rate} * out_channels)"
    if out_channels is None:
        out_channels = expected
    if out_channels != expected:
        raise InvalidInputError(f"{kind} violates {relation}: got out_channels {out_channels}")
    if in_channels % groups:
        raise InvalidInputError(f"groups {groups} does not divide in_channels {in_channels}")
    if out_channels % groups:
        raise InvalidInputError(f"groups {groups} does not divide out_channels {out_channels}")
    if kind == "standard" and rate != 1:
        raise InvalidInputError("standard convolution has rate 1")
    return out_channels


@dataclass(frozen=True, eq=False)
class ConvSpec:
    """A (group) convolution: kind, rate and one filter per group."""

    kind: str
    filters: tuple
    rate: int = 1
    factors: tuple | None = None
    construction: str = "scfac"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown kind {self.kind!r}")
        filters = tuple(self.filters)
        if not filters or any(not isinstance(f, MatrixSeq) for f in filters):
            raise InvalidInputError("filters must be a non-empty sequence of MatrixSeq")
        if any(f.shape != filters[0].shape for f in filters):
            raise InvalidInputError("all group filters must have the same shape")
        if self.rate < 1 or (self.kind == "standard" and self.rate != 1):
            raise InvalidInputError(f"invalid rate {self.rate} for {self.kind}")
        object.__setattr__(self, "filters", filters)
        if self.factors is not None:
            object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def groups(self) -> int:
        return len(self.filters)

    @property
    def in_channels(self) -> int:
        return self.filters[0].cols * self.groups

    @property
    def out_channels(self) -> int:
        return self.filters[0].rows * self.groups

    def out_length(self, n: int) -> int:
        if self.kind == "strided_down":
            return n // self.rate
        if self.kind == "strided_up":
            return n * self.rate
        return n

    def __call__(self, x) -> np.ndarray:
        return apply(self, x)

    def astype(self, dtype) -> "ConvSpec":
        return ConvSpec(self.kind, tuple(f.astype(dtype) for f in self.filters), self.rate,
                        self.factors, self.construction)


def apply(spec: ConvSpec, x) -> np.ndarray:
    return conv_group(spec.filters, x, spec.kind, spec.rate)


def transfer_objects(spec: ConvSpec) -> list[MatrixSeq]:
    """Per-group transfer matrices whose paraunitarity is equivalent to orthogonality."""
    out = []
    for f in spec.filters:
        if spec.kind == "standard":
            out.append(f)
        elif spec.kind == "dilated":
            out.append(upsample(f, spec.rate))
        elif spec.kind == "strided_down":
            out.append(polyphase_matrix(f, spec.rate, "reflected"))
        else:
            out.append(polyphase_matrix(f, spec.rate, "stacked"))
    return out


def spectral_residual(spec: ConvSpec) -> float:
    return max(is_paraunitary(t)[1] for t in transfer_objects(spec))


def _filter_from_reflected(p: MatrixSeq, rate: int, s_g: int) -> MatrixSeq:
    # block column r of p[m] is h[m R - r]
    first = -p.lo * rate - (rate - 1)
    last = p.hi * rate
    taps = np.zeros((last - first + 1, p.rows, s_g))
    for k, m in enumerate(p.indices):
        for r in range(rate):
            taps[m * rate - r - first] = p.taps[k][:, r * s_g:(r + 1) * s_g]
    return MatrixSeq.from_taps(taps, start=first)


def _filter_from_stacked(p: MatrixSeq, rate: int, t_g: int) -> MatrixSeq:
    # block row r of p[m] is h[m R + r]
    first = -p.lo * rate
    last = p.hi * rate + rate - 1
    taps = np.zeros((last - first + 1, t_g, p.cols))
    for k, m in enumerate(p.indices):
        for r in range(rate):
            taps[m * rate + r - first] = p.taps[k][r * t_g:(r + 1) * t_g, :]
    return MatrixSeq.from_taps(taps, start=first)


def build_orthogonal(kind: str, in_channels: int, out_channels: int | None = None, rate: int = 1,
                     groups: int = 1, degrees=(1, 1), init: str = "uniform", seed=None,
                     factors=None, cols=None) -> ConvSpec:
    """Orthogonal convolution of the requested kind from paraunitary factors.

    The paraunitary system is built in the transfer domain of the variant:
    directly for standard and dilated kinds, and as the (square) polyphase
    matrix for strided kinds, whose taps are then scattered back to the
    filter by the polyphase index maps.

    Parameters
    ----------
    kind : {'standard', 'dilated', 'strided_down', 'strided_up'}
    in_channels, out_channels : int
        ``out_channels`` defaults to the only value allowed by ``kind``.
    rate : int
        Dilation or stride.
    groups : int
        Number of channel groups; one independent system per group.
    degrees : (int, int)
        ``(L-, L+)`` of each paraunitary system.  Non-uniform init schemes
        need ``L- == L+``.
    init : str
        ``uniform`` draws every factor; ``identity``, ``permutation`` and
        ``torus`` use the reduced initialization (filter starts as a 1x1
        orthogonal conv).
    seed : int or Generator
    factors : sequence of ParaunitaryFactors, optional
        Explicit factors (one per group); overrides ``init``.
    """
    out_channels = check_constraints(kind, in_channels, out_channels, rate, groups)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    s_g = in_channels // groups
    t_g = out_channels // groups
    if kind == "strided_down":
        size = t_g
    else:
        size = s_g
    lo, hi = degrees
    if factors is None:
        if init == "uniform":
            from .paraunitary import random_factors

            factors = [random_factors(size, lo, hi, rng, cols) for _ in range(groups)]
        else:
            if lo != hi:
                raise InvalidInputError(f"init {init!r} needs symmetric degrees, got {degrees}")
            factors = [initialized_factors(init, size, lo, rng, cols) for _ in range(groups)]
    factors = list(factors)
    if len(factors) != groups or any(f.channels != size for f in factors):
        raise InvalidInputError(f"need {groups} factor sets of {size} channels")
    filters = []
    for f in factors:
        p = build_1d(f)
        if kind == "strided_down":
            filters.append(_filter_from_reflected(p, rate, s_g))
        elif kind == "strided_up":
            filters.append(_filter_from_stacked(p, rate, t_g))
        else:
            filters.append(p)
    return ConvSpec(kind, tuple(filters), rate, tuple(factors))


# -- dense oracle ----------------------------------------------------------

def circulant_oracle(spec: ConvSpec, n: int, guard: int = ORACLE_GUARD):
    """Dense operator ``C`` with ``vec(y) = C vec(x)`` and ``max|C^T C - I|``.

    Built entry by entry from the index definition of each kind, without
    calling the convolution routines.  Vectors are sample-major:
    ``vec(x)[i * S + s] = x[i, s]``.
    """
    s, t, r = spec.in_channels, spec.out_channels, spec.rate
    n_out = spec.out_length(n)
    if spec.kind == "strided_down" and n % r:
        raise InvalidInputError(f"rate {r} must divide N = {n}")
    if max(n * s, n_out * t) > guard:
        raise ResourceError(f"dense operator {n_out * t} x {n * s} exceeds guard {guard}")
    c = np.zeros((n_out * t, n * s))
    s_g, t_g = spec.filters[0].cols, spec.filters[0].rows
    for g, filt in enumerate(spec.filters):
        for k, m in enumerate(filt.indices):
            block = filt.taps[k]
            for i in range(n_out):
                if spec.kind == "standard":
                    j = (i - m) % n
                elif spec.kind == "dilated":
                    j = (i - r * m) % n
                elif spec.kind == "strided_down":
                    j = (r * i - m) % n
                else:
                    pos = (i - m) % (n * r)
                    if pos % r:
                        continue
                    j = pos // r
                rows = slice(i * t + g * t_g, i * t + (g + 1) * t_g)
                cols = slice(j * s + g * s_g, j * s + (g + 1) * s_g)
                c[rows, cols] += block
    gram = c.T @ c
    residual = float(np.max(np.abs(gram - np.eye(gram.shape[0]))))
    return c, residual


# -- verification ----------------------------------------------------------

@dataclass
class RunningStats:
    """Mergeable count/mean/M2 accumulator (Chan et al. pairwise update)."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    abs_sum: float = 0.0
    abs_max: float = 0.0

    @classmethod
    def from_values(cls, values) -> "RunningStats":
        v = np.asarray(values, dtype=np.float64).ravel()
        if v.size == 0:
            return cls()
        mean = float(np.mean(v))
        return cls(int(v.size), mean, float(np.sum((v - mean) ** 2)),
                   float(np.sum(np.abs(v))), float(np.max(np.abs(v))))

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.count == 0:
            return RunningStats(**asdict(self))
        if self.count == 0:
            return RunningStats(**asdict(other))
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta ** 2 * self.count * other.count / n
        return RunningStats(n, mean, m2, self.abs_sum + other.abs_sum,
                            max(self.abs_max, other.abs_max))

    @property
    def std(self) -> float:
        return math.sqrt(self.m2 / (self.count - 1)) if self.count > 1 else 0.0

    @property
    def abs_mean(self) -> float:
        return self.abs_sum / self.count if self.count else 0.0


CSV_FIELDS = ("kind", "R", "G", "dtype", "mean_dev", "std_dev", "spectral_residual", "oracle_residual")


@dataclass
class OrthoReport:
    """Statistics of ``||Conv(x)|| / ||x|| - 1`` over Gaussian trials."""

    kind: str
    rate: int
    groups: int
    dtype: str
    n: int
    trials: int
    ratio_dev_mean: float
    ratio_dev_std: float
    ratio_dev_abs_mean: float
    ratio_dev_abs_max: float
    spectral_residual: float
    oracle_residual: float | None = None
    tol: float = 1e-12
    construction: str = "scfac"
    orthogonal: bool = field(init=False)

    def __post_init__(self):
        self.orthogonal = bool(self.ratio_dev_abs_max <= self.tol)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def csv_row(self) -> dict:
        return {
            "kind": self.kind,
            "R": self.rate,
            "G": self.groups,
            "dtype": self.dtype,
            "mean_dev": repr(self.ratio_dev_mean),
            "std_dev": repr(self.ratio_dev_std),
            "spectral_residual": repr(self.spectral_residual),
            "oracle_residual": "" if self.oracle_residual is None else repr(self.oracle_residual),
        }

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        if header:
            writer.writeheader()
        writer.writerow(self.csv_row())
        return buf.getvalue()


_DTYPES = {"f64": np.float64, "f32": np.float32}


def verify_orthogonality(spec: ConvSpec, n: int, trials: int = 100, seed=0, dtype: str = "f64",
                         oracle: bool = False, tol: float | None = None,
                         batch: int = 25) -> OrthoReport:
    """Norm-ratio statistics of ``spec`` on standard Gaussian inputs.

    Everything, the norms and their ratio included, is evaluated in
    ``dtype`` (``'f64'`` or ``'f32'``), so in f32 the deviation sits at the
    unit-roundoff scale of an end-to-end single-precision pipeline.  ``oracle=True`` adds the dense ``C^T C`` residual when the
    size guard allows it.
    """
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    if dtype not in _DTYPES:
        raise InvalidInputError(f"dtype must be 'f64' or 'f32', got {dtype!r}")
    np_dtype = _DTYPES[dtype]
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    layer = spec.astype(np_dtype)
    stats = RunningStats()
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        x = rng.standard_normal((b, n, spec.in_channels)).astype(np_dtype)
        y = apply(layer, x)
        xn = np.sqrt(np.sum(x * x, axis=(-2, -1), dtype=np_dtype))
        yn = np.sqrt(np.sum(y * y, axis=(-2, -1), dtype=np_dtype))
        stats = stats.merge(RunningStats.from_values(yn / xn - np_dtype(1.0)))
        done += b
    oracle_res = None
    if oracle:
        try:
            oracle_res = circulant_oracle(spec, n)[1]
        except ResourceError:
            oracle_res = None
    if tol is None:
        tol = DEFAULT_TOL[dtype]
    return OrthoReport(
        kind=spec.kind, rate=spec.rate, groups=spec.groups, dtype=dtype, n=n, trials=trials,
        ratio_dev_mean=stats.mean, ratio_dev_std=stats.std, ratio_dev_abs_mean=stats.abs_mean,
        ratio_dev_abs_max=stats.abs_max, spectral_residual=spectral_residual(spec),
        oracle_residual=oracle_res, tol=tol, construction=spec.construction,
    )


# -- baselines -------------------------------------------------------------

def svcm_project(filt: MatrixSeq, n_freq: int, mask_to_support: bool = False) -> MatrixSeq:
    """Clip every singular value of ``H`` to 1 on an ``n_freq``-point grid.

    The clipped response is transformed back to ``n_freq`` circular taps,
    laid out so the original support is contained.  With
    ``mask_to_support`` the taps outside the original support are dropped,
    which no longer gives a unitary response.
    """
    if n_freq < filt.length:
        raise InvalidInputError(f"n_freq {n_freq} is smaller than the filter support {filt.length}")
    grid = freq_grid(filt, n_freq)
    u, _, vh = np.linalg.svd(grid, full_matrices=False)
    clipped = u @ vh
    circ = np.fft.ifft(clipped, axis=0).real
    extra = n_freq - filt.length
    lo = filt.lo + extra // 2
    hi = filt.hi + extra - extra // 2
    if mask_to_support:
        lo, hi = filt.lo, filt.hi
    idx = np.mod(np.arange(-lo, hi + 1), n_freq)
    return MatrixSeq.from_taps(circ[idx], start=-lo)


def rko_project(filt: MatrixSeq, steps: int = 50) -> MatrixSeq:
    """Orthonormalize the rows of the reshaped ``T x (S L)`` kernel matrix."""
    mat = np.concatenate(list(filt.taps), axis=1)
    if mat.shape[0] > mat.shape[1]:
        raise InvalidInputError("reshaped kernel must be wide (T <= S * L)")
    ortho = bjorck(mat.T, steps=steps).T
    taps = np.stack(np.split(ortho, filt.length, axis=1))
    return MatrixSeq.from_taps(taps, start=-filt.lo)


# -- serialization ---------------------------------------------------------

def spec_to_dict(spec: ConvSpec) -> dict:
    d = {
        "kind": spec.kind,
        "rate": spec.rate,
        "groups": spec.groups,
        "in_channels": spec.in_channels,
        "out_channels": spec.out_channels,
        "construction": spec.construction,
        "filters": [seq_to_dict(f) for f in spec.filters],
    }
    if spec.factors is not None:
        d["factors"] = [factors_to_dict(f) for f in spec.factors]
    return d


def spec_from_dict(d: dict) -> ConvSpec:
    filters = tuple(seq_from_dict(f) for f in d["filters"])
    factors = None
    if d.get("factors") is not None:
        factors = tuple(factors_from_dict(f) for f in d["factors"])
    spec = ConvSpec(d["kind"], filters, d.get("rate", 1), factors, d.get("construction", "scfac"))
    if spec.in_channels != d.get("in_channels", spec.in_channels) or \
            spec.out_channels != d.get("out_channels", spec.out_channels):
        raise InvalidInputError("channel counts in header do not match the filters")
    return spec


def save_spec(path: str, spec: ConvSpec) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec_to_dict(spec), fh, sort_keys=True)


def load_spec(path: str) -> ConvSpec:
    with open(path, encoding="utf-8") as fh:
        return spec_from_dict(json.load(fh))
