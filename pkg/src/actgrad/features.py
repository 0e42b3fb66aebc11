"""Sparse feature vectors and observation encoders.

All learners in this package are linear in a feature map.  States are
encoded into one-hot :class:`SparseVec` instances by an :class:`Encoder`
(Boxes partition for Cart Pole, a uniform grid for the lander, plain
one-hot for tabular MDPs), and state-action features use a block layout
``x(s, a) = x(s) (x) onehot(a)`` so index ``a * state_dim + j`` holds
component ``j`` of ``x(s)``.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "EncodingError",
    "SparseVec",
    "Encoder",
    "encode",
    "state_action_features",
    "cartpole_boxes",
    "lander_grid",
    "tabular",
]


class EncodingError(ValueError):
    """Raised when an observation cannot be encoded."""


class SparseVec:
    """Sparse real vector with strictly increasing indices and no stored zeros."""

    __slots__ = ("indices", "values", "dim")

    def __init__(self, indices, values, dim: int, check: bool = True):
        self.indices = np.asarray(indices, dtype=np.intp)
        self.values = np.asarray(values, dtype=float)
        self.dim = int(dim)
        if check:
            self._validate()

    def _validate(self):
        if self.dim <= 0:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if self.indices.ndim != 1 or self.indices.shape != self.values.shape:
            raise ValueError("indices and values must be 1-d and of equal length")
        if self.indices.size:
            if self.indices[0] < 0 or self.indices[-1] >= self.dim:
                raise ValueError("index out of range")
            if np.any(np.diff(self.indices) <= 0):
                raise ValueError("indices must be strictly increasing")
            if np.any(self.values == 0.0):
                raise ValueError("zero-valued entries must not be stored")

    @classmethod
    def onehot(cls, index: int, dim: int) -> "SparseVec":
        if not 0 <= index < dim:
            raise ValueError(f"index {index} out of range for dim {dim}")
        return cls(np.array([index]), np.array([1.0]), dim, check=False)

    @classmethod
    def from_entries(cls, entries: Iterable[tuple[int, float]], dim: int) -> "SparseVec":
        """Build from (index, value) pairs; duplicates are summed, zeros dropped."""
        acc: dict[int, float] = {}
        for i, v in entries:
            acc[int(i)] = acc.get(int(i), 0.0) + float(v)
        items = sorted((i, v) for i, v in acc.items() if v != 0.0)
        return cls([i for i, _ in items], [v for _, v in items], dim)

    @classmethod
    def from_dense(cls, dense) -> "SparseVec":
        dense = np.asarray(dense, dtype=float)
        idx = np.flatnonzero(dense)
        return cls(idx, dense[idx], dense.size, check=False)

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def entries(self) -> list[tuple[int, float]]:
        return [(int(i), float(v)) for i, v in zip(self.indices, self.values)]

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def dot(self, other) -> float:
        """Inner product with another SparseVec or a dense vector."""
        if isinstance(other, SparseVec):
            if other.dim != self.dim:
                raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
            common, ia, ib = np.intersect1d(
                self.indices, other.indices, assume_unique=True, return_indices=True
            )
            if common.size == 0:
                return 0.0
            return float(self.values[ia] @ other.values[ib])
        other = np.asarray(other)
        if other.shape != (self.dim,):
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.shape}")
        return float(other[self.indices] @ self.values)

    def __eq__(self, other):
        if not isinstance(other, SparseVec):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.dim, self.indices.tobytes(), self.values.tobytes()))

    def __repr__(self):
        return f"SparseVec({self.entries()}, dim={self.dim})"


KINDS = ("boxes", "uniform-grid", "tabular-one-hot")


@dataclass(frozen=True)
class Encoder:
    """Immutable observation encoder.

    ``cuts[d]`` holds the interior region boundaries for dimension ``d``; a
    value ``v`` falls in region ``bisect_right(cuts[d], v)``, so intervals are
    closed on the left.  Out-of-bounds values land in the boundary regions.
    ``bounds`` is kept for serialization and for the uniform-grid kind,
    where cuts are derived from ``bounds`` and ``bins``.
    """

    kind: str
    bounds: tuple[tuple[float, float], ...]
    cuts: tuple[tuple[float, ...], ...] = ()
    bins: tuple[int, ...] = ()
    num_states: int = 0
    _strides: tuple[int, ...] = field(default=(), init=False, repr=False, compare=False)
    _onehots: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.kind == "tabular-one-hot":
            if self.num_states <= 0:
                raise ValueError("tabular-one-hot encoder needs num_states > 0")
            object.__setattr__(self, "bounds", ((0.0, float(self.num_states - 1)),))
            return
        if self.kind == "uniform-grid":
            if len(self.bins) != len(self.bounds):
                raise ValueError("bins and bounds must have equal length")
            cuts = []
            for (lo, hi), n in zip(self.bounds, self.bins):
                if n < 1 or not hi > lo:
                    raise ValueError(f"bad grid dimension bounds=({lo}, {hi}) bins={n}")
                cuts.append(tuple(lo + (hi - lo) * k / n for k in range(1, n)))
            object.__setattr__(self, "cuts", tuple(cuts))
        else:
            if len(self.cuts) != len(self.bounds):
                raise ValueError("cuts and bounds must have equal length")
            for c in self.cuts:
                if any(b <= a for a, b in zip(c, c[1:])):
                    raise ValueError("cuts must be strictly increasing")
            object.__setattr__(self, "bins", tuple(len(c) + 1 for c in self.cuts))
        strides = []
        s = 1
        for n in reversed(self.bins):
            strides.append(s)
            s *= n
        object.__setattr__(self, "_strides", tuple(reversed(strides)))

    @property
    def obs_dim(self) -> int:
        return len(self.bounds)

    @property
    def output_dim(self) -> int:
        if self.kind == "tabular-one-hot":
            return self.num_states
        return math.prod(self.bins)

    def cell_index(self, observation: Sequence[float]) -> int:
        if len(observation) != self.obs_dim:
            raise EncodingError(
                f"observation has {len(observation)} components, expected {self.obs_dim}"
            )
        if self.kind == "tabular-one-hot":
            v = observation[0]
            if not math.isfinite(v) or v != int(v) or not 0 <= v < self.num_states:
                raise EncodingError(f"invalid tabular state {v!r}")
            return int(v)
        index = 0
        for v, c, stride in zip(observation, self.cuts, self._strides):
            if not math.isfinite(v):
                raise EncodingError(f"non-finite observation component {v!r}")
            index += bisect_right(c, v) * stride
        return index

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "tabular-one-hot":
            d["num_states"] = self.num_states
        elif self.kind == "uniform-grid":
            d["bounds"] = [list(b) for b in self.bounds]
            d["bins"] = list(self.bins)
        else:
            d["bounds"] = [list(b) for b in self.bounds]
            d["cuts"] = [list(c) for c in self.cuts]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Encoder":
        kind = d.get("kind")
        if kind == "tabular-one-hot":
            return cls(kind, (), num_states=int(d["num_states"]))
        bounds = tuple(tuple(float(x) for x in b) for b in d["bounds"])
        if kind == "uniform-grid":
            return cls(kind, bounds, bins=tuple(int(n) for n in d["bins"]))
        if kind == "boxes":
            cuts = tuple(tuple(float(x) for x in c) for c in d["cuts"])
            return cls(kind, bounds, cuts=cuts)
        raise ValueError(f"unknown encoder kind {kind!r}")


def encode(encoder: Encoder, observation: Sequence[float]) -> SparseVec:
    """One-hot feature vector of the cell containing ``observation``.

    Vectors are cached per cell; treat the returned object as read-only.
    """
    i = encoder.cell_index(observation)
    x = encoder._onehots.get(i)
    if x is None:
        x = encoder._onehots[i] = SparseVec.onehot(i, encoder.output_dim)
    return x


def state_action_features(state_features: SparseVec, action: int, num_actions: int) -> SparseVec:
    if not 0 <= action < num_actions:
        raise ValueError(f"action {action} out of range for {num_actions} actions")
    d = state_features.dim
    return SparseVec(
        state_features.indices + action * d, state_features.values, d * num_actions, check=False
    )


def cartpole_boxes() -> Encoder:
    """The 162-cell Boxes partition (3 x 3 x 6 x 3) for Cart Pole."""
    deg = math.pi / 180.0
    return Encoder(
        "boxes",
        bounds=((-2.4, 2.4), (-3.0, 3.0), (-12 * deg, 12 * deg), (-200 * deg, 200 * deg)),
        cuts=(
            (-0.8, 0.8),
            (-0.5, 0.5),
            (-6 * deg, -1 * deg, 0.0, 1 * deg, 6 * deg),
            (-50 * deg, 50 * deg),
        ),
    )


def lander_grid() -> Encoder:
    return Encoder(
        "uniform-grid",
        bounds=(
            (-1.5, 1.5),
            (0.0, 1.5),
            (-2.0, 2.0),
            (-2.0, 2.0),
            (-math.pi, math.pi),
            (-4.0, 4.0),
            (0.0, 1.0),
            (0.0, 1.0),
        ),
        bins=(5, 5, 4, 4, 4, 4, 2, 2),
    )


def tabular(num_states: int) -> Encoder:
    return Encoder("tabular-one-hot", (), num_states=num_states)
