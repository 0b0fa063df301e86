"""1-Lipschitz building blocks: GroupSort, residual blocks, margins.

Everything here is a callable on signals of shape ``(..., N, S)``.  A chain
is a sequence of such callables applied left to right; an empty chain is
the identity.  Orthogonal :class:`~parafac.convops.ConvSpec` objects are
callables too, so chains mix convolutions, activations and blocks freely.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .convops import load_spec
from .errors import InvalidInputError

__all__ = [
    "group_sort",
    "GroupSort",
    "Chain",
    "ResidualBlock",
    "residual_apply",
    "MarginResult",
    "margin_and_radius",
    "empirical_lipschitz",
    "load_chain",
]


def group_sort(x, group_size: int) -> np.ndarray:
    """Sort channels ascending within contiguous groups of ``group_size``."""
    x = np.asarray(x)
    s = x.shape[-1]
    if group_size < 1 or s % group_size:
        raise InvalidInputError(f"group size {group_size} does not divide {s} channels")
    grouped = x.reshape(x.shape[:-1] + (s // group_size, group_size))
    return np.sort(grouped, axis=-1).reshape(x.shape)


@dataclass(frozen=True)
class GroupSort:
    group_size: int = 2

    def __call__(self, x):
        return group_sort(x, self.group_size)


class Chain:
    """Left-to-right composition of callables."""

    def __init__(self, layers=()):
        self.layers = tuple(layers)

    def __call__(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def __len__(self):
        return len(self.layers)


def _as_callable(branch):
    if callable(branch):
        return branch
    return Chain(branch)


@dataclass(frozen=True, eq=False)
class ResidualBlock:
    """Two-branch block, additive or concatenative.

    ``additive``: ``alpha f1(x) + (1 - alpha) f2(x)``, with ``alpha``
    clamped to [0, 1] when applied.  ``concatenative``: split the channels
    at ``split``, run ``f1`` on the first part and ``f2`` on the rest,
    concatenate and permute, so output channel ``c`` is concatenated
    channel ``perm[c]``.
    """

    kind: str
    branches: tuple
    alpha: float = 0.5
    split: int | None = None
    perm: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("additive", "concatenative"):
            raise InvalidInputError(f"unknown block kind {self.kind!r}")
        branches = tuple(self.branches)
        if len(branches) != 2:
            raise InvalidInputError("a residual block has exactly two branches")
        object.__setattr__(self, "branches", tuple(_as_callable(b) for b in branches))
        if self.kind == "additive":
            if not math.isfinite(self.alpha):
                raise InvalidInputError("alpha must be finite")
        else:
            if self.split is None or self.split < 0:
                raise InvalidInputError("concatenative block needs a nonnegative split point")
            if self.perm is not None:
                perm = tuple(int(p) for p in self.perm)
                if sorted(perm) != list(range(len(perm))):
                    raise InvalidInputError("perm must be a permutation of 0..C-1")
                object.__setattr__(self, "perm", perm)

    def __call__(self, x):
        return residual_apply(self, x)


def residual_apply(block: ResidualBlock, x) -> np.ndarray:
    x = np.asarray(x)
    f1, f2 = block.branches
    if block.kind == "additive":
        a = min(max(float(block.alpha), 0.0), 1.0)
        y1, y2 = f1(x), f2(x)
        if np.shape(y1) != np.shape(y2):
            raise InvalidInputError(f"branch outputs differ in shape: {np.shape(y1)} vs {np.shape(y2)}")
        if a == 1.0:
            return np.asarray(y1)
        if a == 0.0:
            return np.asarray(y2)
        return a * y1 + (1.0 - a) * y2
    if block.split > x.shape[-1]:
        raise InvalidInputError(f"split {block.split} exceeds {x.shape[-1]} channels")
    y1 = np.asarray(f1(x[..., :block.split]))
    y2 = np.asarray(f2(x[..., block.split:]))
    if y1.shape[:-1] != y2.shape[:-1]:
        raise InvalidInputError(f"branch outputs differ in shape: {y1.shape} vs {y2.shape}")
    y = np.concatenate([y1, y2], axis=-1)
    if block.perm is None:
        return y
    if len(block.perm) != y.shape[-1]:
        raise InvalidInputError(f"perm has {len(block.perm)} entries for {y.shape[-1]} channels")
    return y[..., list(block.perm)]


@dataclass(frozen=True)
class MarginResult:
    margin: float
    certified_radius: float
    label: int


def margin_and_radius(logits, label: int, lipschitz: float = 1.0) -> MarginResult:
    """Output margin of ``label`` and the radius ``margin / (sqrt(2) L)``."""
    logits = np.asarray(logits, dtype=np.float64).ravel()
    if logits.size < 2:
        raise InvalidInputError("need at least two logits")
    if not 0 <= label < logits.size:
        raise InvalidInputError(f"label {label} out of range for {logits.size} logits")
    if not lipschitz > 0:
        raise InvalidInputError("Lipschitz constant must be positive")
    others = np.delete(logits, label)
    margin = max(0.0, float(logits[label] - np.max(others)))
    return MarginResult(margin, margin / (math.sqrt(2.0) * lipschitz), int(label))


def empirical_lipschitz(chain, trials: int, seed=None, shape=(16, 4), scale=None) -> float:
    """Largest ``||F(x') - F(x)|| / ||x' - x||`` over random pairs.

    ``x`` is standard Gaussian of ``shape``; the offset ``x' - x`` is a
    Gaussian direction scaled by ``10**u``, ``u ~ U[-3, 1]`` (or by the
    fixed ``scale``), so both local and large displacements are probed.
    The result is a lower bound on the Lipschitz constant.
    """
    if trials < 2:
        raise InvalidInputError("trials must be >= 2")
    f = _as_callable(chain)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    best = 0.0
    for _ in range(trials):
        x = rng.standard_normal(shape)
        step = scale if scale is not None else 10.0 ** rng.uniform(-3.0, 1.0)
        d = step * rng.standard_normal(shape)
        num = np.linalg.norm(np.asarray(f(x + d)) - np.asarray(f(x)))
        den = np.linalg.norm((x + d) - x)
        if den > 0:
            best = max(best, float(num / den))
    return best


def _layer_from_dict(d: dict, base: str):
    kind = d.get("type")
    if kind == "conv":
        path = d["spec"]
        return load_spec(path if os.path.isabs(path) else os.path.join(base, path))
    if kind == "groupsort":
        return GroupSort(int(d.get("group_size", 2)))
    if kind in ("additive", "concatenative"):
        branches = [Chain(_layer_from_dict(x, base) for x in b) for b in d["branches"]]
        return ResidualBlock(kind, tuple(branches), float(d.get("alpha", 0.5)),
                             d.get("split"), d.get("perm"))
    raise InvalidInputError(f"unknown layer type {kind!r}")


def load_chain(path: str) -> Chain:
    """Chain from a JSON list of layer specs.

    Layer entries: ``{"type": "conv", "spec": "<ConvSpec file>"}``,
    ``{"type": "groupsort", "group_size": g}``,
    ``{"type": "additive", "alpha": a, "branches": [[...], [...]]}`` and
    ``{"type": "concatenative", "split": k, "perm": [...], "branches": ...}``.
    Relative spec paths are resolved against the chain file's directory.
    """
    with open(path, encoding="utf-8") as fh:
        layers = json.load(fh)
    if not isinstance(layers, list):
        raise InvalidInputError("chain file must hold a JSON list")
    base = os.path.dirname(os.path.abspath(path))
    return Chain(_layer_from_dict(d, base) for d in layers)
