"""Observed-node selection, the masking operator and the four weight classes."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .spectral import EigenBasis

TIE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ObservationMask:
    observed: np.ndarray

    def __post_init__(self):
        obs = np.asarray(self.observed, dtype=bool).copy()
        if obs.ndim != 1:
            raise ValidationError("mask must be one-dimensional")
        if not obs.any():
            raise ValidationError("mask must observe at least one node")
        obs.setflags(write=False)
        object.__setattr__(self, "observed", obs)

    @classmethod
    def from_indices(cls, n: int, indices) -> "ObservationMask":
        obs = np.zeros(n, dtype=bool)
        obs[list(indices)] = True
        return cls(obs)

    @property
    def n_nodes(self) -> int:
        return self.observed.size

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.observed)

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.observed.astype(float))

    def __eq__(self, other):
        return isinstance(other, ObservationMask) and np.array_equal(self.observed, other.observed)

    def __hash__(self):
        return hash(self.observed.tobytes())

    def to_csv_line(self) -> str:
        return ",".join("1" if b else "0" for b in self.observed)

    @classmethod
    def from_csv_line(cls, line: str) -> "ObservationMask":
        flags = [tok.strip() for tok in line.strip().split(",")]
        if any(f not in ("0", "1") for f in flags):
            raise ValidationError("mask CSV must contain only 0/1 flags")
        return cls(np.array([f == "1" for f in flags]))


def write_mask(mask: ObservationMask, path) -> None:
    Path(path).write_text(mask.to_csv_line() + "\n")


def read_mask(path) -> ObservationMask:
    return ObservationMask.from_csv_line(Path(path).read_text())


class WeightClass(enum.IntEnum):
    W1 = 0  # v observed, j observed
    W2 = 1  # v observed, j missing
    W3 = 2  # v missing, j observed
    W4 = 3  # both missing


def classify_pair(mask: ObservationMask, v: int, j: int) -> WeightClass:
    v_obs, j_obs = bool(mask.observed[v]), bool(mask.observed[j])
    if v_obs:
        return WeightClass.W1 if j_obs else WeightClass.W2
    return WeightClass.W3 if j_obs else WeightClass.W4


def class_matrix(mask: ObservationMask) -> np.ndarray:
    """``C[v, j]`` = weight class index of the ordered pair (v, j)."""
    obs = mask.observed
    return 2 * (~obs)[:, None].astype(int) + (~obs)[None, :].astype(int)


def apply_mask(mask: ObservationMask, x: np.ndarray) -> np.ndarray:
    """Zero the unobserved rows of ``x`` (a vector or an N x R batch)."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != mask.n_nodes:
        raise ValidationError(f"signal has {x.shape[0]} rows, mask has {mask.n_nodes}")
    obs = mask.observed if x.ndim == 1 else mask.observed[:, None]
    return np.where(obs, x, 0.0)


def default_bandwidth(n: int, cutoff_ratio: float = 0.4) -> int:
    return max(1, math.ceil(cutoff_ratio * n - 1e-9))


def selection_score(block: np.ndarray, bandwidth: int) -> tuple[float, int, float]:
    """Greedy key for a row block of the first ``bandwidth`` eigenvectors.

    ``(sigma_min, rank, product of nonzero singular values)``, where
    ``sigma_min`` counts all ``bandwidth`` singular values and is therefore 0
    until the block has at least ``bandwidth`` independent rows.
    """
    sv = np.linalg.svd(block, compute_uv=False)
    tol = max(block.shape) * np.finfo(float).eps * (sv[0] if sv.size else 0.0)
    nonzero = sv[sv > tol]
    sigma_min = float(sv[-1]) if sv.size == bandwidth and nonzero.size == bandwidth else 0.0
    prod = float(np.prod(nonzero)) if nonzero.size else 0.0
    return sigma_min, int(nonzero.size), prod


def _best(scores: list[tuple[float, int, float]], candidates: list[int]) -> int:
    """Lexicographic argmax with relative tolerance; smallest index wins ties."""
    alive = list(range(len(candidates)))
    for key in range(3):
        top = max(scores[i][key] for i in alive)
        slack = TIE_TOL * max(1.0, abs(top))
        alive = [i for i in alive if scores[i][key] >= top - slack]
    return min(candidates[i] for i in alive)


def greedy_select(basis: EigenBasis, m: int, bandwidth: int | None = None, trace: list | None = None) -> ObservationMask:
    """Grow the observed set one node at a time, each step taking the node
    that maximises :func:`selection_score` of the low-frequency block."""
    n = basis.n
    F = default_bandwidth(n) if bandwidth is None else bandwidth
    if not 1 <= F <= n:
        raise ValidationError(f"bandwidth {F} outside [1, {n}]")
    if not F <= m <= n:
        raise ValidationError(f"observed count {m} must satisfy {F} <= m <= {n}")
    UF = basis.eigenvectors[:, :F]
    selected: list[int] = []
    remaining = list(range(n))
    for _ in range(m):
        scores = [selection_score(UF[selected + [c]], F) for c in remaining]
        pick = _best(scores, remaining)
        if trace is not None:
            trace.append((pick, dict(zip(remaining, scores))))
        selected.append(pick)
        remaining.remove(pick)
    return ObservationMask.from_indices(n, selected)
