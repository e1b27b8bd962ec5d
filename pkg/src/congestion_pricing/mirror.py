"""Regularizers, their mirror maps, and the Fenchel coupling.

Two canonical cases are supported:

* ``entropy_on_simplex``: psi(x) = sum x_k log x_k, 1-strongly convex w.r.t. l1.
  The mirror map is the logit choice (softmax).
* ``squared_euclidean_on_box``: psi(x) = ||x||^2 / 2, 1-strongly convex w.r.t.
  l2. The mirror map clips the score to the box.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, check_dim
from .game import BOX, SIMPLEX, ActionSet, GameSpec

ENTROPY = "entropy_on_simplex"
SQ_EUCLIDEAN = "squared_euclidean_on_box"


@dataclass(frozen=True)
class Regularizer:
    kind: str
    dim: int
    K: float = 1.0
    lo: Optional[tuple] = None
    hi: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in (ENTROPY, SQ_EUCLIDEAN):
            raise DomainError(f"unknown regularizer {self.kind!r}", kind=self.kind)
        if not self.K > 0:
            raise DomainError("strong convexity K must be positive", K=self.K)
        if self.kind == SQ_EUCLIDEAN:
            box = ActionSet.box(self.dim, self.lo if self.lo is not None else 0.0,
                                self.hi if self.hi is not None else 1.0)
            object.__setattr__(self, "lo", box.lo)
            object.__setattr__(self, "hi", box.hi)

    @classmethod
    def entropy(cls, dim: int) -> "Regularizer":
        return cls(ENTROPY, dim)

    @classmethod
    def squared_euclidean(cls, dim: int, lo=0.0, hi=1.0) -> "Regularizer":
        return cls(SQ_EUCLIDEAN, dim, 1.0, lo, hi)

    @classmethod
    def for_action_set(cls, s: ActionSet) -> "Regularizer":
        if s.kind == SIMPLEX:
            return cls.entropy(s.dim)
        return cls.squared_euclidean(s.dim, s.lo, s.hi)

    @property
    def action_set(self) -> ActionSet:
        if self.kind == ENTROPY:
            return ActionSet.simplex(self.dim)
        return ActionSet.box(self.dim, self.lo, self.hi)

    @property
    def dual_norm_order(self):
        return np.inf if self.kind == ENTROPY else 2

    @property
    def norm_order(self):
        return 1 if self.kind == ENTROPY else 2

    def psi(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == ENTROPY:
            # 0 log 0 = 0
            with np.errstate(divide="ignore", invalid="ignore"):
                terms = np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)
            return terms.sum(axis=-1)
        return 0.5 * np.sum(x * x, axis=-1)

    def psi_range(self) -> float:
        """max psi - min psi over the action set, in closed form."""
        if self.kind == ENTROPY:
            return float(np.log(self.dim))
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        top = 0.5 * np.maximum(lo * lo, hi * hi)
        bottom = np.where((lo <= 0) & (hi >= 0), 0.0, 0.5 * np.minimum(lo * lo, hi * hi))
        return float(np.sum(top - bottom))


def _check_scores(y, reg: Regularizer) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    check_dim("score vector", y.shape[-1], reg.dim)
    if not np.all(np.isfinite(y)):
        raise DomainError("score vector has non-finite entries", y=np.asarray(y).tolist())
    return y


def mirror_map(y, reg: Regularizer) -> np.ndarray:
    """argmax over the action set of <y, x> - psi(x).

    Works on a single score vector or a stack of them (last axis).
    """
    y = _check_scores(y, reg)
    if reg.kind == ENTROPY:
        z = np.exp(y - y.max(axis=-1, keepdims=True))
        return z / z.sum(axis=-1, keepdims=True)
    return np.clip(y, reg.lo, reg.hi)


def _log_mirror(y: np.ndarray) -> np.ndarray:
    return y - logsumexp(y, axis=-1, keepdims=True)


def conjugate(y, reg: Regularizer) -> np.ndarray:
    """psi*(y) = <y, Phi(y)> - psi(Phi(y))."""
    y = _check_scores(y, reg)
    if reg.kind == ENTROPY:
        x = mirror_map(y, reg)
        # psi(Phi(y)) via the log-softmax so tiny probabilities do not underflow
        return np.sum(x * y, axis=-1) - np.sum(x * _log_mirror(y), axis=-1)
    x = mirror_map(y, reg)
    return np.sum(x * y, axis=-1) - reg.psi(x)


def fenchel_coupling(p, y, reg: Regularizer, tol: float = 1e-6) -> float:
    """F(p, y) = psi(p) + psi*(y) - <y, p>, which is >= 0.

    For the entropy this is KL(p || Phi(y)); it is evaluated in that form to
    avoid cancellation.
    """
    p = np.asarray(p, dtype=float)
    y = _check_scores(y, reg)
    if p.shape != y.shape:
        check_dim("p", p.shape[-1], reg.dim)
    if not reg.action_set.contains(p, tol):
        raise DomainError("point lies outside the action set", p=p.tolist(), tol=tol)
    if reg.kind == ENTROPY:
        logq = _log_mirror(y)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p > 0, p * (np.log(np.where(p > 0, p, 1.0)) - logq), 0.0)
        value = float(terms.sum())
    else:
        value = float(reg.psi(p) + conjugate(y, reg) - np.dot(y, p))
    # exact arithmetic gives >= 0; drop the rounding residue
    return max(value, 0.0)


def default_regularizers(game: GameSpec) -> list:
    return [Regularizer.for_action_set(s) for s in game.action_sets]


def _check_blocks(y, regs: Sequence[Regularizer]) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    check_dim("joint score vector", y.shape[-1], sum(r.dim for r in regs))
    return y


def total_mirror(y, regs: Sequence[Regularizer]) -> np.ndarray:
    """Block-wise mirror map for the whole population."""
    y = _check_blocks(y, regs)
    first = regs[0]
    if all(r == first for r in regs):
        # homogeneous population: one vectorized call
        n, d = len(regs), first.dim
        return mirror_map(y.reshape(y.shape[:-1] + (n, d)), first).reshape(y.shape)
    out, k = [], 0
    for r in regs:
        out.append(mirror_map(y[..., k:k + r.dim], r))
        k += r.dim
    return np.concatenate(out, axis=-1)


def total_fenchel(x, y, regs: Sequence[Regularizer], tol: float = 1e-6) -> float:
    """Sum of the players' Fenchel couplings."""
    x = _check_blocks(x, regs)
    y = _check_blocks(y, regs)
    total, k = 0.0, 0
    for r in regs:
        total += fenchel_coupling(x[k:k + r.dim], y[k:k + r.dim], r, tol)
        k += r.dim
    return total
