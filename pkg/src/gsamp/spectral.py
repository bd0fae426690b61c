"""Laplacian eigendecomposition, ideal and Chebyshev low-pass operators, and
the per-node local smoothing rows used by the smooth aggregator."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.polynomial import chebyshev as C

from .errors import NumericalError, ValidationError
from .graph import Graph, induced_neighborhood

log = logging.getLogger(__name__)

MAX_SWEEPS = 100
OFF_DIAG_TOL = 1e-12
DEGENERACY_TOL = 1e-9
CHEB_FIT_POINTS = 256
DENSE_ROTATION_MAX = 64


@dataclass(frozen=True, eq=False)
class EigenBasis:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = 0

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    def gft(self, x: np.ndarray) -> np.ndarray:
        return self.eigenvectors.T @ x

    def igft(self, xf: np.ndarray) -> np.ndarray:
        return self.eigenvectors @ xf


def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Tournament schedule: n-1 rounds (n even) of disjoint (p, q) pairs
    covering every unordered pair exactly once."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            a, b = players[i], players[m - 1 - i]
            if a < n and b < n:
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0]] + [players[-1]] + players[1:-1]
    return rounds


def _fix_signs(V: np.ndarray) -> np.ndarray:
    for i in range(V.shape[1]):
        col = V[:, i]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0:
            V[:, i] = -col
    return V


def jacobi_eigh(S: np.ndarray, max_sweeps: int = MAX_SWEEPS, tol: float = OFF_DIAG_TOL):
    """Cyclic Jacobi rotations on a symmetric matrix.

    Each sweep visits every off-diagonal pair once in a fixed round-robin
    order; pairs within a round are disjoint, so a round is applied as one
    vectorised batch of rotations. Returns ``(w, V, sweeps)`` unsorted.
    """
    A = np.array(S, dtype=float, copy=True)
    n = A.shape[0]
    V = np.eye(n)
    if n == 1:
        return A.diagonal().copy(), V, 0
    threshold = tol * max(np.linalg.norm(A), np.finfo(float).tiny)
    rounds = _round_robin(n)

    offmask = ~np.eye(n, dtype=bool)
    # small matrices: one BLAS product per round beats per-column gathers
    dense = n <= DENSE_ROTATION_MAX

    def off(M):
        return float(np.linalg.norm(M[offmask]))

    for sweep in range(max_sweeps + 1):
        if off(A) <= threshold:
            return A.diagonal().copy(), V, sweep
        if sweep == max_sweeps:
            break
        for P, Q in rounds:
            apq = A[P, Q]
            # rotating away an entry already at ~ulp scale would overflow theta
            active = np.abs(apq) > 1e-300
            if not np.any(active):
                continue
            P, Q, apq = P[active], Q[active], apq[active]
            theta = (A[Q, Q] - A[P, P]) / (2.0 * apq)
            big = np.abs(theta) > 1e150
            theta_safe = np.where(big, 1.0, theta)
            t = np.sign(theta_safe) / (np.abs(theta_safe) + np.sqrt(theta_safe * theta_safe + 1.0))
            t = np.where(big, 0.5 / np.where(big, theta, 1.0), t)
            t[theta == 0.0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # A <- J^T A J with J[p,p]=J[q,q]=c, J[p,q]=s, J[q,p]=-s
            if dense:
                J = np.eye(n)
                J[P, P] = c
                J[Q, Q] = c
                J[P, Q] = s
                J[Q, P] = -s
                A = J.T @ A @ J
                V = V @ J
            else:
                Ap, Aq = A[:, P], A[:, Q]
                A[:, P] = c * Ap - s * Aq
                A[:, Q] = s * Ap + c * Aq
                Ap, Aq = A[P, :], A[Q, :]
                A[P, :] = c[:, None] * Ap - s[:, None] * Aq
                A[Q, :] = s[:, None] * Ap + c[:, None] * Aq
                Vp, Vq = V[:, P], V[:, Q]
                V[:, P] = c * Vp - s * Vq
                V[:, Q] = s * Vp + c * Vq
            A[P, Q] = 0.0
            A[Q, P] = 0.0
    raise NumericalError(
        f"Jacobi did not converge in {max_sweeps} sweeps (off-diagonal norm {off(A):.3e})"
    )


def eigendecompose(laplacian, method: Literal["jacobi", "lapack"] = "jacobi") -> EigenBasis:
    """Orthonormal eigenbasis with ascending eigenvalues and deterministic signs.

    ``method="lapack"`` defers to :func:`numpy.linalg.eigh`; it is kept as an
    independent cross-check of the Jacobi path.
    """
    L = np.asarray(laplacian, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {L.shape}")
    if L.size and np.max(np.abs(L - L.T)) > 1e-10:
        raise ValidationError("matrix is not symmetric within 1e-10")
    if method == "jacobi":
        w, V, sweeps = jacobi_eigh(L)
    elif method == "lapack":
        w, V = np.linalg.eigh(L)
        sweeps = 0
    else:
        raise ValidationError(f"unknown eigensolver {method!r}")
    order = np.argsort(w, kind="stable")
    w = w[order]
    V = _fix_signs(np.ascontiguousarray(V[:, order]))
    w.setflags(write=False)
    V.setflags(write=False)
    return EigenBasis(eigenvalues=w, eigenvectors=V, sweeps=sweeps)


def _passband_length(eigenvalues: np.ndarray, l: int) -> int:
    """Widen ``l`` so the passband never splits a repeated eigenvalue."""
    n = eigenvalues.size
    while l < n and abs(eigenvalues[l] - eigenvalues[l - 1]) <= DEGENERACY_TOL:
        l += 1
    return l


@dataclass(frozen=True, eq=False)
class SpectralFilter:
    cutoff_ratio: float
    response: np.ndarray
    requested: int | None = None  # passband length before widening

    @property
    def widened(self) -> bool:
        return self.requested is not None and self.requested != self.passband

    @property
    def passband(self) -> int:
        return int(self.response.sum())

    @classmethod
    def by_count(cls, eigenvalues: np.ndarray, l: int, cutoff_ratio: float = float("nan")):
        """Keep the first ``l`` eigenvalues (at least one)."""
        n = eigenvalues.size
        l0 = min(max(1, l), n)
        l = _passband_length(eigenvalues, l0)
        h = np.zeros(n)
        h[:l] = 1.0
        return cls(cutoff_ratio=cutoff_ratio, response=h, requested=l0)

    @classmethod
    def by_frequency(cls, eigenvalues: np.ndarray, cutoff_ratio: float):
        """Pass every eigenvalue ``<= cutoff_ratio * lambda_max``."""
        _check_ratio(cutoff_ratio)
        lam_max = float(eigenvalues[-1])
        l = int(np.count_nonzero(eigenvalues <= cutoff_ratio * lam_max + DEGENERACY_TOL))
        return cls.by_count(eigenvalues, l, cutoff_ratio)


@dataclass(frozen=True, eq=False)
class FilterOperator:
    matrix: np.ndarray
    kind: str
    order: int | None = None
    damping: str | None = None

    def __matmul__(self, x):
        return self.matrix @ x


def _check_ratio(rho: float) -> None:
    if not 0.0 < rho <= 1.0:
        raise ValidationError(f"cutoff ratio {rho} outside (0, 1]")


def filter_operator(basis: EigenBasis, response: np.ndarray) -> FilterOperator:
    U = basis.eigenvectors
    keep = np.flatnonzero(response)
    Uk = U[:, keep]
    B = (Uk * response[keep]) @ Uk.T
    B = 0.5 * (B + B.T)
    B.setflags(write=False)
    return FilterOperator(matrix=B, kind="exact")


def ideal_lowpass_operator(basis: EigenBasis, cutoff_ratio: float = 0.4) -> FilterOperator:
    """``U diag(h) U^T`` with ``h`` passing eigenvalues up to ``cutoff_ratio * lambda_max``."""
    filt = SpectralFilter.by_frequency(basis.eigenvalues, cutoff_ratio)
    if filt.widened:
        log.warning(
            "passband widened from %d to %d to keep a repeated eigenvalue whole",
            filt.requested,
            filt.passband,
        )
    return filter_operator(basis, filt.response)


def ideal_response(cutoff_ratio: float):
    """0/1 low-pass response as a function of eigenvalue, given ``lambda_max``."""

    def h(lam, lam_max):
        return (np.asarray(lam) <= cutoff_ratio * lam_max + DEGENERACY_TOL).astype(float)

    return h


def chebyshev_coefficients(response, lam_max: float, order: int) -> np.ndarray:
    """Least-squares fit on Chebyshev points of ``[0, lam_max]``."""
    k = np.arange(CHEB_FIT_POINTS)
    x = np.cos(np.pi * (k + 0.5) / CHEB_FIT_POINTS)
    lam = (x + 1.0) * lam_max / 2.0
    return C.chebfit(x, response(lam, lam_max), order)


def jackson_damping(order: int) -> np.ndarray:
    """Jackson kernel factors ``g_0..g_K``; damped series of a [0, 1]-valued
    response stay (up to fit error) inside [0, 1]."""
    M = order + 2
    k = np.arange(order + 1)
    a = np.pi / M
    return ((M - k) * np.cos(a * k) + np.sin(a * k) / np.tan(a)) / M


def chebyshev_operator(
    laplacian,
    cutoff_ratio: float = 0.4,
    order: int = 20,
    lambda_max: float | None = None,
    response=None,
    damping: str | None = None,
) -> FilterOperator:
    """Truncated Chebyshev expansion ``sum_k c_k T_k(2L/lambda_max - I)``.

    ``response(lam, lam_max)`` overrides the ideal low-pass target.
    ``damping="jackson"`` multiplies the coefficients by the Jackson kernel,
    trading sharpness at the cutoff for a response without Gibbs over- and
    undershoot.
    """
    if order < 1:
        raise ValidationError(f"Chebyshev order must be >= 1, got {order}")
    L = np.asarray(laplacian, dtype=float)
    if lambda_max is None:
        lambda_max = eigendecompose(L).lambda_max
    if not lambda_max > 0:
        raise ValidationError(f"lambda_max must be positive, got {lambda_max}")
    if response is None:
        _check_ratio(cutoff_ratio)
        response = ideal_response(cutoff_ratio)
    c = chebyshev_coefficients(response, lambda_max, order)
    if damping == "jackson":
        c = c * jackson_damping(order)
    elif damping is not None:
        raise ValidationError(f"unknown damping {damping!r}")

    n = L.shape[0]
    I = np.eye(n)
    Lt = 2.0 * L / lambda_max - I
    T_prev, T_cur = I, Lt
    B = c[0] * T_prev + c[1] * T_cur
    for ck in c[2:]:
        T_prev, T_cur = T_cur, 2.0 * Lt @ T_cur - T_prev
        B = B + ck * T_cur
    B = 0.5 * (B + B.T)
    B.setflags(write=False)
    return FilterOperator(matrix=B, kind="chebyshev", order=order, damping=damping)


@dataclass(frozen=True, eq=False)
class LocalSmoother:
    node: int
    member_order: tuple[int, ...]
    theta_row: np.ndarray


def local_passband(size: int, cutoff_ratio: float) -> int:
    # small epsilon keeps ratios like 0.4 * 5 from rounding up past the integer
    return max(1, math.ceil(cutoff_ratio * size - 1e-9))


def precompute_local_smoothers(g: Graph, cutoff_ratio: float = 0.4) -> dict[int, LocalSmoother]:
    """For each node, the row of its local low-pass projector that belongs to it."""
    _check_ratio(cutoff_ratio)
    table = {}
    widened = []
    for v in range(g.n_nodes):
        nb = induced_neighborhood(g, v)
        try:
            basis = eigendecompose(nb.local_laplacian())
        except NumericalError as exc:
            raise NumericalError(f"node {v}: {exc}") from exc
        filt = SpectralFilter.by_count(
            basis.eigenvalues, local_passband(len(nb.members), cutoff_ratio), cutoff_ratio
        )
        if filt.widened:
            widened.append(v)
        B = filter_operator(basis, filt.response).matrix
        row = np.array(B[0], copy=True)
        row.setflags(write=False)
        table[v] = LocalSmoother(node=v, member_order=nb.members, theta_row=row)
    if widened:
        log.warning(
            "local passband widened at %d node(s) to keep repeated eigenvalues whole (first: %s)",
            len(widened),
            widened[:5],
        )
    return table
