"""Finite-support matrix sequences and their Z-transforms.

A :class:`MatrixSeq` holds real ``T x S`` taps ``h[n]`` for ``n`` in
``[-lo, hi]`` (with ``lo, hi >= 0``, so the support always contains 0).
Its transfer matrix is ``H(z) = sum_n h[n] z^{-n}``.  Multiplying transfer
matrices is convolving tap sequences, and ``H~(z) = H(1/z)^T`` is the
paraconjugate; a sequence is paraunitary when ``H~(z) H(z) = I``.
"""
from __future__ import annotations

import base64
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, PoleError

__all__ = [
    "MatrixSeq",
    "TRIM_TOL",
    "eval_z",
    "seq_mul",
    "seq_add",
    "paraconjugate",
    "freq_grid",
    "is_paraunitary",
    "autocorrelation",
    "reg_residual_spatial",
    "reg_residual_spectral",
    "seq_to_dict",
    "seq_from_dict",
    "save_seq",
    "load_seq",
]

TRIM_TOL = 1e-15


@dataclass(frozen=True, eq=False)
class MatrixSeq:
    """Taps of a polynomial matrix; ``taps[k] = h[k - lo]``.

    Construct with :meth:`from_taps` to get canonical (trimmed) support.
    The tap array is read-only.
    """

    lo: int
    hi: int
    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps)
        if taps.ndim != 3:
            raise InvalidInputError(f"taps must be (n_taps, T, S), got shape {taps.shape}")
        if self.lo < 0 or self.hi < 0 or taps.shape[0] != self.lo + self.hi + 1:
            raise InvalidInputError(
                f"support [-{self.lo}, {self.hi}] does not match {taps.shape[0]} taps"
            )
        if taps.shape[1] < 1 or taps.shape[2] < 1:
            raise InvalidInputError("rows and cols must be positive")
        if not np.issubdtype(taps.dtype, np.floating):
            taps = taps.astype(np.float64)
        if taps.flags.writeable:
            taps = taps.copy()
            taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)
        object.__setattr__(self, "lo", int(self.lo))
        object.__setattr__(self, "hi", int(self.hi))

    @classmethod
    def from_taps(cls, taps, start: int = 0, trim: float = TRIM_TOL) -> "MatrixSeq":
        """Build from taps ``h[start], h[start+1], ...``.

        The support is extended with zeros to contain 0 and then trimmed of
        leading/trailing taps whose entries are all within ``trim`` of zero.
        """
        taps = np.asarray(taps)
        if taps.ndim == 1:
            taps = taps[:, None, None]
        elif taps.ndim == 2:
            taps = taps[None]
        if not np.issubdtype(taps.dtype, np.floating):
            taps = taps.astype(np.float64)
        n = taps.shape[0]
        end = start + n - 1
        first, last = min(start, 0), max(end, 0)
        full = np.zeros((last - first + 1,) + taps.shape[1:], dtype=taps.dtype)
        full[start - first:start - first + n] = taps
        if trim is not None and full.shape[0] > 1:
            big = np.max(np.abs(full), axis=(1, 2)) > trim
            zero = -first
            keep_lo = zero
            keep_hi = zero
            nz = np.flatnonzero(big)
            if nz.size:
                keep_lo = min(nz[0], zero)
                keep_hi = max(nz[-1], zero)
            full = full[keep_lo:keep_hi + 1]
            first += keep_lo
        return cls(-first, full.shape[0] - 1 + first, full)

    @classmethod
    def identity(cls, channels: int) -> "MatrixSeq":
        return cls(0, 0, np.eye(channels)[None])

    @classmethod
    def monomial(cls, matrix, n: int) -> "MatrixSeq":
        """Single tap ``matrix`` at index ``n``."""
        return cls.from_taps(np.asarray(matrix, dtype=np.float64)[None], start=n, trim=None)

    @property
    def rows(self) -> int:
        return self.taps.shape[1]

    @property
    def cols(self) -> int:
        return self.taps.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.taps.shape[1:]

    @property
    def dtype(self):
        return self.taps.dtype

    @property
    def length(self) -> int:
        """Number of taps in the support."""
        return self.lo + self.hi + 1

    @property
    def indices(self) -> np.ndarray:
        return np.arange(-self.lo, self.hi + 1)

    def tap(self, n: int) -> np.ndarray:
        """``h[n]``, zero outside the support."""
        if -self.lo <= n <= self.hi:
            return self.taps[n + self.lo]
        return np.zeros(self.shape, dtype=self.dtype)

    def padded(self, lo: int, hi: int) -> np.ndarray:
        """Taps over the wider support ``[-lo, hi]`` (zero filled)."""
        if lo < self.lo or hi < self.hi:
            raise InvalidInputError("padded support must contain the current support")
        out = np.zeros((lo + hi + 1,) + self.shape, dtype=self.dtype)
        out[lo - self.lo:lo + self.hi + 1] = self.taps
        return out

    def shift(self, k: int) -> "MatrixSeq":
        """Sequence ``g[n] = h[n + k]``."""
        return MatrixSeq.from_taps(self.taps, start=-self.lo - k, trim=None)

    def transpose(self) -> "MatrixSeq":
        return MatrixSeq(self.lo, self.hi, np.swapaxes(self.taps, 1, 2))

    def astype(self, dtype) -> "MatrixSeq":
        return MatrixSeq(self.lo, self.hi, self.taps.astype(dtype))

    def __matmul__(self, other: "MatrixSeq") -> "MatrixSeq":
        return seq_mul(self, other)

    def __repr__(self):
        return f"MatrixSeq({self.rows}x{self.cols}, support=[{-self.lo}, {self.hi}])"


def eval_z(seq: MatrixSeq, z: complex) -> np.ndarray:
    """``H(z) = sum_n h[n] z^{-n}`` at a single point."""
    z = complex(z)
    if z == 0:
        if seq.hi > 0 and np.any(seq.taps[seq.lo + 1:] != 0):
            raise PoleError("H(z) has a pole at z = 0")
        # only non-positive powers of z^{-1} remain; z^{+m} vanish at 0
        return seq.tap(0).astype(complex)
    powers = z ** (-seq.indices.astype(float))
    return np.tensordot(powers, seq.taps, axes=(0, 0))


def seq_mul(a: MatrixSeq, b: MatrixSeq) -> MatrixSeq:
    """Tap sequence of ``A(z) B(z)``: ``c[n] = sum_k a[k] b[n - k]``."""
    if a.cols != b.rows:
        raise InvalidInputError(f"cannot multiply {a.rows}x{a.cols} by {b.rows}x{b.cols}")
    dtype = np.result_type(a.dtype, b.dtype)
    out = np.zeros((a.length + b.length - 1, a.rows, b.cols), dtype=dtype)
    for i in range(a.length):
        out[i:i + b.length] += np.matmul(a.taps[i], b.taps)
    return MatrixSeq.from_taps(out, start=-(a.lo + b.lo))


def seq_add(a: MatrixSeq, b: MatrixSeq) -> MatrixSeq:
    if a.shape != b.shape:
        raise InvalidInputError("shape mismatch in seq_add")
    lo, hi = max(a.lo, b.lo), max(a.hi, b.hi)
    return MatrixSeq.from_taps(a.padded(lo, hi) + b.padded(lo, hi), start=-lo)


def paraconjugate(seq: MatrixSeq) -> MatrixSeq:
    """``g[n] = h[-n]^T``, the taps of ``H(1/z)^T``."""
    return MatrixSeq(seq.hi, seq.lo, np.swapaxes(seq.taps[::-1], 1, 2))


def freq_grid(seq: MatrixSeq, points: int) -> np.ndarray:
    """``H(e^{i w_k})`` at ``w_k = 2 pi k / points``, shape ``(points, T, S)``.

    Taps are folded modulo ``points`` before the FFT, which is exact at the
    grid frequencies for any support length.
    """
    if points < 1:
        raise InvalidInputError("points must be positive")
    folded = np.zeros((points,) + seq.shape, dtype=seq.dtype)
    np.add.at(folded, np.mod(seq.indices, points), seq.taps)
    return np.fft.fft(folded, axis=0)


def _min_grid(seq: MatrixSeq) -> int:
    return 2 * (seq.lo + seq.hi) + 1


def is_paraunitary(seq: MatrixSeq, grid_size: int | None = None, tol: float = 1e-12):
    """Check ``H^H H = I`` on the unit circle.

    ``H^H H - I`` is a trigonometric polynomial with coefficients in
    ``[-(lo+hi), lo+hi]``, so it vanishes identically iff it vanishes on any
    grid of at least ``2(lo+hi)+1`` points.

    Returns
    -------
    (bool, float)
        Whether the max residual ``max_k ||H_k^H H_k - I||_max`` is within
        ``tol``, and the residual itself.
    """
    k = _min_grid(seq) if grid_size is None else int(grid_size)
    if k < _min_grid(seq):
        raise InvalidInputError(f"grid_size must be >= {_min_grid(seq)} for this support")
    h = freq_grid(seq, k)
    gram = np.matmul(np.conj(np.swapaxes(h, 1, 2)), h)
    residual = float(np.max(np.abs(gram - np.eye(seq.cols))))
    return residual <= tol, residual


def autocorrelation(seq: MatrixSeq, rate: int = 1, transposed: bool = False) -> MatrixSeq:
    """Decimated autocorrelation ``d[i] = sum_n h[n]^T h[n - R i]``.

    With ``transposed=True`` the terms are ``h[n] h[n - R i]^T``.  The
    result is indexed by the decimated lag ``i``.
    """
    if rate < 1:
        raise InvalidInputError("rate must be >= 1")
    taps = seq.taps
    length = seq.length
    max_lag = (length - 1) // rate
    dim = seq.rows if transposed else seq.cols
    out = np.zeros((2 * max_lag + 1, dim, dim), dtype=seq.dtype)
    for i in range(-max_lag, max_lag + 1):
        shift = rate * i
        acc = np.zeros((dim, dim), dtype=seq.dtype)
        # n ranges over taps where both h[n] and h[n - shift] exist
        for k in range(max(0, shift), min(length, length + shift)):
            if transposed:
                acc += taps[k] @ taps[k - shift].T
            else:
                acc += taps[k].T @ taps[k - shift]
        out[i + max_lag] = acc
    return MatrixSeq.from_taps(out, start=-max_lag, trim=None)


def reg_residual_spatial(seq: MatrixSeq, rate: int = 1, transposed: bool = False) -> float:
    """``sum_i || sum_n h[n]^T h[n - R i] - delta[i] I ||_F^2``.

    With ``transposed=True`` the row form ``h[n] h[n - R i]^T`` is used.
    """
    d = autocorrelation(seq, rate, transposed)
    taps = np.array(d.taps)
    taps[d.lo] -= np.eye(taps.shape[1])
    return float(np.sum(taps ** 2))


def reg_residual_spectral(seq: MatrixSeq, rate: int = 1, grid_size: int | None = None,
                          transposed: bool = False) -> float:
    """Mean over a uniform frequency grid of ``||P^H P - I||_F^2``.

    ``P`` is the stacked polyphase matrix of ``seq`` (or, with
    ``transposed=True``, ``||P P^H - I||`` for the reflected polyphase
    matrix).  The integrand is a trigonometric polynomial, so the grid
    mean equals the integral once the grid is large enough; the default
    grid is chosen accordingly.
    """
    from .multirate import polyphase_matrix

    flavor = "reflected" if transposed else "stacked"
    poly = polyphase_matrix(seq, rate, flavor)
    need = 4 * (poly.lo + poly.hi) + 1
    k = max(need, 4 * (seq.lo + seq.hi) + 1) if grid_size is None else int(grid_size)
    if k < need:
        raise InvalidInputError(f"grid_size must be >= {need} for exact quadrature")
    p = freq_grid(poly, k)
    ph = np.conj(np.swapaxes(p, 1, 2))
    gram = np.matmul(p, ph) if transposed else np.matmul(ph, p)
    diff = gram - np.eye(gram.shape[-1])
    return float(np.mean(np.sum(np.abs(diff) ** 2, axis=(1, 2))))


# -- serialization ---------------------------------------------------------

_DTYPES = {"f64": np.dtype("<f8"), "f32": np.dtype("<f4")}


def _dtype_tag(dtype) -> str:
    for tag, dt in _DTYPES.items():
        if np.dtype(dtype) == dt.newbyteorder("="):
            return tag
    raise InvalidInputError(f"unsupported dtype {dtype}")


def array_to_b64(a) -> str:
    a = np.asarray(a)
    return base64.b64encode(np.ascontiguousarray(a, dtype=a.dtype.newbyteorder("<")).tobytes()).decode("ascii")


def array_from_b64(data: str, dtype, shape) -> np.ndarray:
    raw = base64.b64decode(data.encode("ascii"))
    return np.frombuffer(raw, dtype=np.dtype(dtype).newbyteorder("<")).reshape(shape).astype(np.dtype(dtype).newbyteorder("="))


def seq_to_dict(seq: MatrixSeq, sidecar: str | None = None) -> dict:
    """JSON-ready header for ``seq``; taps inline as base64 unless ``sidecar``."""
    header = {
        "rows": seq.rows,
        "cols": seq.cols,
        "lo": seq.lo,
        "hi": seq.hi,
        "dtype": _dtype_tag(seq.dtype),
        "order": "row-major, n-major",
    }
    if sidecar is None:
        header["data"] = array_to_b64(seq.taps)
    else:
        header["sidecar"] = os.path.basename(sidecar)
    return header


def seq_from_dict(header: dict, base_dir: str | None = None) -> MatrixSeq:
    dtype = _DTYPES[header.get("dtype", "f64")]
    shape = (header["lo"] + header["hi"] + 1, header["rows"], header["cols"])
    if "data" in header:
        taps = array_from_b64(header["data"], dtype, shape)
    else:
        path = os.path.join(base_dir or ".", header["sidecar"])
        taps = np.fromfile(path, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    return MatrixSeq(header["lo"], header["hi"], taps)


def save_seq(path: str, seq: MatrixSeq, sidecar: bool = False) -> None:
    """Write ``seq`` as JSON, optionally with taps in ``<path>.bin``."""
    bin_path = None
    if sidecar:
        bin_path = path + ".bin"
        np.ascontiguousarray(seq.taps, dtype=seq.dtype.newbyteorder("<")).tofile(bin_path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(seq_to_dict(seq, bin_path), fh, sort_keys=True)


def load_seq(path: str) -> MatrixSeq:
    with open(path, encoding="utf-8") as fh:
        header = json.load(fh)
    return seq_from_dict(header, os.path.dirname(os.path.abspath(path)))
