"""Up-sampling, polyphase components and polyphase matrices.

Sequences are :class:`~parafac.polymat.MatrixSeq` objects (vector signals
are ``S x 1`` matrix sequences).  Plain arrays of shape ``(N,)``,
``(N, S)`` or ``(N, T, S)`` are also accepted; they are read as sequences
starting at index 0 and the array-valued results keep that convention.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidInputError
from .polymat import MatrixSeq, freq_grid

__all__ = [
    "as_seq",
    "upsample",
    "polyphase_component",
    "polyphase_split",
    "interleave",
    "polyphase_matrix",
    "parseval_check",
]


def _check_rate(rate):
    if int(rate) != rate or rate < 1:
        raise InvalidInputError(f"rate must be a positive integer, got {rate}")
    return int(rate)


def as_seq(x) -> MatrixSeq:
    """Coerce an array or MatrixSeq to a MatrixSeq (arrays start at n = 0)."""
    if isinstance(x, MatrixSeq):
        return x
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None, None]
    elif a.ndim == 2:
        a = a[:, :, None]
    elif a.ndim != 3:
        raise InvalidInputError(f"cannot interpret shape {a.shape} as a sequence")
    return MatrixSeq.from_taps(a, start=0, trim=None)


def upsample(x, rate: int):
    """Zero insertion: ``x_up[n] = x[n / R]`` when ``R | n``, else 0.

    For arrays the result has length ``N * R`` (trailing zeros included),
    matching the circular-signal view.
    """
    rate = _check_rate(rate)
    if not isinstance(x, MatrixSeq):
        a = np.asarray(x)
        out = np.zeros((a.shape[0] * rate,) + a.shape[1:], dtype=np.result_type(a, np.float64))
        out[::rate] = a
        return out
    out = np.zeros(((x.length - 1) * rate + 1,) + x.shape, dtype=x.dtype)
    out[::rate] = x.taps
    return MatrixSeq.from_taps(out, start=-x.lo * rate, trim=None)


def _component_direct(x: MatrixSeq, r: int, rate: int) -> MatrixSeq:
    # n with -lo <= n*R + r <= hi
    n_first = -((x.lo + r) // rate)
    n_last = (x.hi - r) // rate
    if n_last < n_first:
        return MatrixSeq.from_taps(np.zeros((1,) + x.shape, dtype=x.dtype))
    idx = np.arange(n_first, n_last + 1) * rate + r + x.lo
    return MatrixSeq.from_taps(x.taps[idx], start=n_first, trim=None)


def polyphase_component(x, r: int, rate: int) -> MatrixSeq:
    """``x^{[r|R]}[n] = x[n R + r]`` for any integer phase ``r``.

    Phases outside ``[0, R)`` are reduced with
    ``x^{[r + kR|R]}[n] = x^{[r|R]}[n + k]``.
    """
    rate = _check_rate(rate)
    x = as_seq(x)
    k, r0 = divmod(int(r), rate)
    comp = _component_direct(x, r0, rate)
    return comp.shift(k) if k else comp


def polyphase_split(x, rate: int):
    """All ``R`` polyphase components ``x^{[r|R]}``, ``r = 0 .. R-1``.

    Arrays give a list of arrays ``x[r::R]``; MatrixSeq input gives a list
    of MatrixSeq.
    """
    rate = _check_rate(rate)
    if not isinstance(x, MatrixSeq):
        a = np.asarray(x)
        return [a[r::rate] for r in range(rate)]
    return [polyphase_component(x, r, rate) for r in range(rate)]


def interleave(components):
    """Inverse of :func:`polyphase_split`."""
    rate = len(components)
    if rate == 0:
        raise InvalidInputError("need at least one component")
    if not isinstance(components[0], MatrixSeq):
        arrays = [np.asarray(c) for c in components]
        total = sum(a.shape[0] for a in arrays)
        out = np.zeros((total,) + arrays[0].shape[1:], dtype=np.result_type(*arrays))
        for r, a in enumerate(arrays):
            out[r::rate][:a.shape[0]] = a
        return out
    lo = max(c.lo for c in components)
    hi = max(c.hi for c in components)
    shape = components[0].shape
    out = np.zeros(((lo + hi + 1) * rate,) + shape, dtype=components[0].dtype)
    for r, c in enumerate(components):
        out[r::rate] = c.padded(lo, hi)
    return MatrixSeq.from_taps(out, start=-lo * rate)


def polyphase_matrix(filt, rate: int, flavor: str = "stacked") -> MatrixSeq:
    """Polyphase matrix of a filter.

    ``stacked``: ``R T x S`` with block row ``r`` equal to ``H^{[r|R]}``.
    ``reflected``: ``T x R S`` with block column ``r`` equal to
    ``H^{[-r|R]}``, i.e. taps ``h[m R - r]``.
    """
    rate = _check_rate(rate)
    filt = as_seq(filt)
    if flavor == "stacked":
        comps = [polyphase_component(filt, r, rate) for r in range(rate)]
        axis = 1
    elif flavor == "reflected":
        comps = [polyphase_component(filt, -r, rate) for r in range(rate)]
        axis = 2
    else:
        raise InvalidInputError(f"flavor must be 'stacked' or 'reflected', got {flavor!r}")
    lo = max(c.lo for c in comps)
    hi = max(c.hi for c in comps)
    taps = np.concatenate([c.padded(lo, hi) for c in comps], axis=axis)
    return MatrixSeq.from_taps(taps, start=-lo)


def parseval_check(x, rate: int = 1, grid_size: int | None = None):
    """Sequence energy computed spatially and from the polyphase spectrum.

    Returns ``(sum_n ||x[n]||^2, mean_k ||X^{[R]}(e^{i w_k})||_F^2)``.  The
    spectral integrand is a trigonometric polynomial with coefficients in
    ``[-(lo+hi), lo+hi]`` of the polyphase matrix, so a grid of at least
    ``2(lo+hi)+1`` points integrates it exactly.
    """
    rate = _check_rate(rate)
    seq = as_seq(x)
    spatial = float(np.sum(np.asarray(seq.taps, dtype=np.float64) ** 2))
    poly = polyphase_matrix(seq, rate, "stacked")
    need = 2 * (poly.lo + poly.hi) + 1
    k = need if grid_size is None else int(grid_size)
    if k < need:
        raise InvalidInputError(f"grid_size must be >= {need}")
    spec = freq_grid(poly, k)
    spectral = float(np.mean(np.sum(np.abs(spec) ** 2, axis=(1, 2))))
    return spatial, spectral
