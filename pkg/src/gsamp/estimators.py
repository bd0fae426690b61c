"""Online estimators for time-varying graph signals.

Every estimator exposes ``step(state, y) -> state``: it consumes the masked
observation ``y[t]`` and returns the estimate for ``t + 1``. Estimates may be
a length-N vector or an ``N x R`` batch (one column per Monte-Carlo trial);
all operations act column-wise.

GSAMP updates each node with a message aggregated from its neighbours'
errors, ``x[t+1] = x[t] + m[t]``. The adaptive-GSP baselines apply a global
filter instead, ``x[t+1] = x[t] + mu * B e[t]``.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np

from .errors import NumericalError, ValidationError
from .graph import Graph
from .sampling import ObservationMask, WeightClass, apply_mask, class_matrix, classify_pair
from .spectral import FilterOperator, LocalSmoother

log = logging.getLogger(__name__)


class ErrorMode(enum.Enum):
    LMS = 2
    SIGN = 1


@dataclass(frozen=True)
class WeightScheme:
    w1: float
    w2: float
    w3: float
    w4: float
    normalize: bool = False  # divide neighbour weights of the sum by d_v
    include_self: bool = False  # own error enters sum/median with the self weight

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise ValidationError(f"weights must be finite: {self}")

    @classmethod
    def of(cls, weights, normalize: bool = False, include_self: bool = False) -> "WeightScheme":
        w = [float(x) for x in weights]
        if len(w) != 4:
            raise ValidationError(f"expected four weights, got {len(w)}")
        return cls(*w, normalize=normalize, include_self=include_self)

    def as_array(self) -> np.ndarray:
        return np.array([self.w1, self.w2, self.w3, self.w4], dtype=float)

    def weight(self, cls_: WeightClass) -> float:
        return float(self.as_array()[int(cls_)])

    def self_weight(self, observed: bool) -> float:
        # a node paired with itself shares one status: W1 or W4
        return self.w1 if observed else self.w4

    def status_weight(self, observed: bool) -> float:
        return self.w1 if observed else self.w3

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.as_array())))


SUM_WEIGHTS = WeightScheme(1.0, 0.0, 2.0, 0.0)
MEDIAN_WEIGHTS = WeightScheme(0.7, 0.0, 0.7, 0.0)
SMOOTH_WEIGHTS = WeightScheme(0.7, 0.0, 1.95, 0.0)


@dataclass(frozen=True, eq=False)
class EstimatorState:
    estimate: np.ndarray
    t: int = 0


def _check_finite(name: str, x: np.ndarray) -> None:
    bad = ~np.isfinite(x)
    if np.any(bad):
        node = int(np.argwhere(bad)[0][0])
        raise NumericalError(f"non-finite {name} at node {node}")


def error_signal(mode: ErrorMode, mask: ObservationMask, y, xhat) -> np.ndarray:
    """Masked residual ``M(y - xhat)``, or its sign in SIGN mode.

    The residual points from the estimate toward the observation so that an
    additive update is a descent step.
    """
    y = np.asarray(y, dtype=float)
    xhat = np.asarray(xhat, dtype=float)
    if y.shape != xhat.shape:
        raise ValidationError(f"observation shape {y.shape} != estimate shape {xhat.shape}")
    _check_finite("observation", y)
    _check_finite("estimate", xhat)
    r = apply_mask(mask, y - xhat)
    if mode is ErrorMode.SIGN:
        return np.sign(r)
    return r


def _self_weights(mask: ObservationMask, scheme: WeightScheme) -> np.ndarray:
    return np.array([scheme.self_weight(bool(o)) for o in mask.observed])


def _pair_weights(graph: Graph, mask: ObservationMask, scheme: WeightScheme) -> np.ndarray:
    """Dense ``W[v, j]`` = class weight on edges, 0 elsewhere; the self
    weight sits on the diagonal when ``include_self`` is set."""
    W = scheme.as_array()[class_matrix(mask)] * graph.adjacency
    if scheme.normalize:
        d = graph.degrees.astype(float)
        W = W / np.where(d > 0, d, 1.0)[:, None]
    if scheme.include_self:
        W = W + np.diag(_self_weights(mask, scheme))
    return W


class SumAggregator:
    """Weighted sum of neighbour values."""

    name = "sum"

    def __init__(self, graph: Graph, mask: ObservationMask, scheme: WeightScheme):
        self.scheme = scheme
        self.matrix = _pair_weights(graph, mask, scheme)

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return self.matrix @ z


class MedianAggregator:
    """Median of eligible neighbour values scaled by the receiver's status weight.

    A neighbour is eligible when its pair class carries a nonzero weight; with
    ``include_self`` the node's own value joins the candidates when its self
    weight is nonzero.
    """

    name = "median"

    def __init__(self, graph: Graph, mask: ObservationMask, scheme: WeightScheme):
        self.scheme = scheme
        n = graph.n_nodes
        w = scheme.as_array()
        selfw = _self_weights(mask, scheme)
        lists = []
        for v in range(n):
            own = [v] if scheme.include_self and selfw[v] != 0.0 else []
            lists.append(own + [j for j in graph.neighbors(v) if w[classify_pair(mask, v, j)] != 0.0])
        width = max((len(l) for l in lists), default=0)
        self.index = np.zeros((n, max(width, 1)), dtype=np.intp)
        self.valid = np.zeros((n, max(width, 1)), dtype=bool)
        for v, l in enumerate(lists):
            self.index[v, : len(l)] = l
            self.valid[v, : len(l)] = True
        self.has_any = self.valid.any(axis=1)
        self.scale = np.array([scheme.status_weight(bool(o)) for o in mask.observed])

    def __call__(self, z: np.ndarray) -> np.ndarray:
        vals = z[self.index]
        valid = self.valid if z.ndim == 1 else self.valid[:, :, None]
        vals = np.where(valid, vals, np.nan)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            med = np.nanmedian(vals, axis=1)
        has = self.has_any if z.ndim == 1 else self.has_any[:, None]
        scale = self.scale if z.ndim == 1 else self.scale[:, None]
        return np.where(has, scale * np.where(has, med, 0.0), 0.0)


class SmoothAggregator:
    """Row ``theta_v`` of the local low-pass projector applied to the
    weighted values on v's closed neighbourhood."""

    name = "smooth"

    def __init__(
        self,
        graph: Graph,
        mask: ObservationMask,
        scheme: WeightScheme,
        smoothers: Mapping[int, LocalSmoother],
    ):
        self.scheme = scheme
        n = graph.n_nodes
        S = np.zeros((n, n))
        obs = mask.observed
        for v in range(n):
            sm = smoothers.get(v)
            expected = (v,) + graph.neighbors(v)
            if sm is None or tuple(sm.member_order) != expected:
                raise ValidationError(f"local smoother for node {v} does not match the graph")
            wv = [scheme.self_weight(bool(obs[v]))]
            wv += [scheme.weight(classify_pair(mask, v, j)) for j in expected[1:]]
            S[v, list(expected)] = sm.theta_row * np.array(wv)
        self.matrix = S

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return self.matrix @ z


class GlobalFilterAggregator:
    """``mu * B z``: the whole-graph filter written as a message."""

    name = "global"

    def __init__(self, operator: FilterOperator, mu: float):
        self.B = operator.matrix
        self.mu = mu

    def __call__(self, z: np.ndarray) -> np.ndarray:
        return self.mu * (self.B @ z)


def aggregate_sum(e, graph, mask, scheme) -> np.ndarray:
    return SumAggregator(graph, mask, scheme)(np.asarray(e, dtype=float))


def aggregate_median(e, graph, mask, scheme) -> np.ndarray:
    return MedianAggregator(graph, mask, scheme)(np.asarray(e, dtype=float))


def aggregate_smooth(e, graph, mask, scheme, smoothers) -> np.ndarray:
    return SmoothAggregator(graph, mask, scheme, smoothers)(np.asarray(e, dtype=float))


def _guard(m: np.ndarray, xhat: np.ndarray) -> np.ndarray:
    """Shrink messages with ``||m||^2 > ||xhat||^2`` back onto that boundary."""
    mn = np.linalg.norm(m, axis=0)
    xn = np.linalg.norm(xhat, axis=0)
    over = mn > xn
    if not np.any(over):
        return m
    log.debug("stability guard rescaled %d message(s)", int(np.sum(over)))
    factor = np.where(over, xn / np.where(over, mn, 1.0), 1.0)
    return m * factor


class Estimator:
    """Shared step logic: error, message, additive update."""

    name = "estimator"
    mode: ErrorMode
    mask: ObservationMask

    def message(self, e: np.ndarray, xhat: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def init_state(self, x0) -> EstimatorState:
        return EstimatorState(estimate=np.array(x0, dtype=float), t=0)

    def step(self, state: EstimatorState, y, check_finite: bool = True) -> EstimatorState:
        xhat = state.estimate
        if check_finite:
            e = error_signal(self.mode, self.mask, y, xhat)
        else:
            r = apply_mask(self.mask, np.asarray(y, dtype=float) - xhat)
            e = np.sign(r) if self.mode is ErrorMode.SIGN else r
        new = xhat + self.message(e, xhat)
        if check_finite and not np.all(np.isfinite(new)):
            node = int(np.argwhere(~np.isfinite(new))[0][0])
            raise NumericalError(f"{self.name}: non-finite update at node {node}, t={state.t}")
        return replace(state, estimate=new, t=state.t + 1)

    def run(self, x0, observations) -> np.ndarray:
        """Feed ``observations[t]`` in order; returns the stacked estimates."""
        state = self.init_state(x0)
        out = [state.estimate]
        for y in observations:
            state = self.step(state, y)
            out.append(state.estimate)
        return np.array(out)


class Gsamp(Estimator):
    """Adaptive message passing with a pluggable aggregator.

    ``khop`` applies the aggregator that many times before the update, so the
    message at a node sees errors up to ``khop`` hops away.
    """

    def __init__(self, mask, mode: ErrorMode, aggregator, khop: int = 1, guard: bool = False, name: str | None = None):
        if khop < 1:
            raise ValidationError(f"khop must be >= 1, got {khop}")
        self.mask = mask
        self.mode = mode
        self.aggregator = aggregator
        self.khop = khop
        self.guard = guard
        label = "LMS" if mode is ErrorMode.LMS else "Sign"
        self.name = name or f"GSAMP-{label}({aggregator.name})"

    def message(self, e, xhat):
        m = e
        for _ in range(self.khop):
            m = self.aggregator(m)
        if self.guard:
            m = _guard(m, xhat)
        return m


class AdaptiveGsp(Estimator):
    """Global-filter adaptive estimator ``x + mu * B f(M(y - x))``.

    With an exact low-pass ``B`` this is GLMS (LMS mode) or G-Sign (SIGN
    mode); with a Chebyshev surrogate it is GDLMS or GSD.
    """

    def __init__(self, mask, operator: FilterOperator, mu: float, mode: ErrorMode, name: str | None = None):
        self.mask = mask
        self.B = operator.matrix
        self.operator = operator
        self.mu = float(mu)
        self.mode = mode
        if name is None:
            exact = operator.kind == "exact"
            if mode is ErrorMode.LMS:
                name = "GLMS" if exact else "GDLMS"
            else:
                name = "G-Sign" if exact else "GSD"
        self.name = name

    def message(self, e, xhat):
        return self.mu * (self.B @ e)


def glms(mask, operator, mu=1.6) -> AdaptiveGsp:
    return AdaptiveGsp(mask, operator, mu, ErrorMode.LMS)


def gsign(mask, operator, mu=1.3) -> AdaptiveGsp:
    return AdaptiveGsp(mask, operator, mu, ErrorMode.SIGN)


def gdlms(mask, cheb_operator, mu=1.6) -> AdaptiveGsp:
    return AdaptiveGsp(mask, cheb_operator, mu, ErrorMode.LMS)


def gsd(mask, cheb_operator, mu=1.6) -> AdaptiveGsp:
    return AdaptiveGsp(mask, cheb_operator, mu, ErrorMode.SIGN)


def diffusion_init(graph: Graph, mask: ObservationMask, y0) -> np.ndarray:
    """Fill missing nodes with the mean of already-known neighbours.

    Each pass fills every still-empty node that has a known neighbour, using
    values known before the pass; passes repeat until nothing changes.
    Nodes never reached get the mean of the observed values.
    """
    y0 = np.asarray(y0, dtype=float)
    x = apply_mask(mask, y0)
    known = mask.observed.copy()
    while True:
        fill = {}
        for v in np.flatnonzero(~known):
            src = [j for j in graph.neighbors(v) if known[j]]
            if src:
                fill[v] = x[src].mean(axis=0)
        if not fill:
            break
        for v, val in fill.items():
            x[v] = val
            known[v] = True
    if not known.all():
        x[~known] = x[mask.observed].mean(axis=0)
    return x
