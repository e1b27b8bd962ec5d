"""Constraint-violation metrics over trajectories.

Clipping is always applied to the *accumulated* congestion, never to
individual steps. Running sums use Neumaier compensated summation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError
from .pricing import Schedule

KINDS = ("anccvc", "weighted_ccv", "ergodic_violation", "per_resource_congestion")


@dataclass(frozen=True)
class MetricSeries:
    t: np.ndarray
    value: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown metric kind {self.kind!r}", kind=self.kind)


def compensated_cumsum(a) -> np.ndarray:
    """Running sums along axis 0 with Neumaier error compensation."""
    a = np.asarray(a, dtype=float)
    out = np.empty_like(a)
    s = np.zeros(a.shape[1:])
    comp = np.zeros(a.shape[1:])
    for k in range(a.shape[0]):
        x = a[k]
        tot = s + x
        big = np.abs(s) >= np.abs(x)
        comp += np.where(big, (s - tot) + x, (x - tot) + s)
        s = tot
        out[k] = s + comp
    return out


def _check_t(traj, t: int) -> None:
    if not 1 <= t <= len(traj):
        raise DomainError("t out of range", t=t, T=len(traj))


def _weights(traj, gamma) -> np.ndarray:
    """Per-step weights: the trajectory's own gamma, a Schedule, or an array."""
    if gamma is None:
        return np.asarray(traj.gamma, dtype=float)
    if isinstance(gamma, Schedule):
        return gamma.values(len(traj))
    w = np.broadcast_to(np.asarray(gamma, dtype=float), (len(traj),))
    return np.array(w)


def anccvc_series(traj) -> np.ndarray:
    """ANCCVC_t for t = 1..T: ||[sum_{tau<t} phi_tau]_+||_2 / t."""
    S = compensated_cumsum(traj.phi)
    t = np.arange(1, len(traj) + 1)
    return np.linalg.norm(np.maximum(S, 0.0), axis=1) / t


def anccvc(traj, t: Optional[int] = None) -> float:
    t = len(traj) if t is None else t
    _check_t(traj, t)
    total = np.array([math.fsum(traj.phi[:t, r]) for r in range(traj.n_resources)])
    return float(np.linalg.norm(np.maximum(total, 0.0)) / t)


def weighted_ccv(traj, t: Optional[int] = None, gamma=None) -> float:
    """||[sum_{tau<t} gamma_tau phi_tau]_+||_2^2, the quantity bounded by the main theorem."""
    t = len(traj) if t is None else t
    _check_t(traj, t)
    w = _weights(traj, gamma)[:t]
    total = np.array([math.fsum(w * traj.phi[:t, r]) for r in range(traj.n_resources)])
    return float(np.sum(np.maximum(total, 0.0) ** 2))


def ergodic_average(traj, t: Optional[int] = None, gamma=None) -> np.ndarray:
    """Gamma-weighted average of X_0..X_{t-1}."""
    t = len(traj) if t is None else t
    _check_t(traj, t)
    w = _weights(traj, gamma)[:t]
    wsum = math.fsum(w)
    if not wsum > 0:
        raise DomainError("weights sum to zero", t=t)
    X = traj.actions[:t]
    return np.array([math.fsum(w * X[:, k]) for k in range(X.shape[1])]) / wsum


def ergodic_series(traj, A, b, gamma=None) -> np.ndarray:
    """||[A xbar_t - b]_+||_2 for every prefix t = 1..T."""
    w = _weights(traj, gamma)
    num = compensated_cumsum(w[:, None] * traj.actions)
    den = compensated_cumsum(w[:, None])
    if np.any(den <= 0):
        raise DomainError("weights sum to zero on some prefix")
    xbar = num / den
    return np.linalg.norm(np.maximum(xbar @ np.asarray(A).T - np.asarray(b), 0.0), axis=1)


def ergodic_violation(traj, A, b, t: Optional[int] = None, gamma=None) -> float:
    xbar = ergodic_average(traj, t, gamma)
    return float(np.linalg.norm(np.maximum(np.asarray(A) @ xbar - np.asarray(b), 0.0)))


def average_congestion(traj, t: Optional[int] = None) -> np.ndarray:
    """Per-resource time average of phi over the first t steps."""
    t = len(traj) if t is None else t
    _check_t(traj, t)
    return np.array([math.fsum(traj.phi[:t, r]) for r in range(traj.n_resources)]) / t


def decay_fit(values: Sequence[float], horizons: Sequence[float]) -> float:
    """Least-squares slope of log(value) against log(horizon)."""
    v = np.asarray(values, dtype=float)
    T = np.asarray(horizons, dtype=float)
    if v.shape != T.shape or v.ndim != 1:
        raise DomainError("values and horizons must be equal-length vectors")
    if len(v) < 3:
        raise DomainError("need at least three horizons for a decay fit", n=len(v))
    if np.any(v <= 0) or np.any(T <= 0):
        raise DomainError("decay fit needs strictly positive values and horizons",
                          values=v.tolist(), horizons=T.tolist())
    lx, ly = np.log(T), np.log(v)
    lx = lx - lx.mean()
    return float(np.dot(lx, ly - ly.mean()) / np.dot(lx, lx))
