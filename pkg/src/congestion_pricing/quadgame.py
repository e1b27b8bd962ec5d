"""Quadratic task-allocation benchmark game.

N players split one unit of work over D resources (each plays on the
D-simplex). Player i's cost is

    J_i(x) = 1/2 <x_i, Q x_i> + <C sigma(x) + c_i, x_i>,   sigma(x) = mean_j x_j,

and utilities are u_i = -J_i. Each resource r carries load 4 * sum_i x_i[r]
against capacity b[r] (16 by default).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CongestionPricingError, DimensionError, DomainError, check_dim
from .game import ActionSet, GameSpec, ResourceConstraints, register_oracle

LOAD_PER_UNIT = 4.0
DEFAULT_CAPACITY = 16.0


@dataclass(frozen=True)
class QuadGameParams:
    n: int
    d: int
    Q: np.ndarray = field(repr=False)
    Cmat: np.ndarray = field(repr=False)
    c: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    build_seed: int = 0
    capacity: float = DEFAULT_CAPACITY

    def blocks(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        check_dim("x", x.shape[-1], self.n * self.d)
        return x.reshape(x.shape[:-1] + (self.n, self.d))

    def to_dict(self) -> dict:
        return {"kind": "quadratic", "n": self.n, "d": self.d,
                "build_seed": self.build_seed, "capacity": self.capacity}


def psd_sqrt(G: np.ndarray, clamp: float = 1e-12) -> np.ndarray:
    """Symmetric square root of a PSD matrix via eigendecomposition.

    Eigenvalues in [-clamp, 0) are roundoff and are set to zero; anything more
    negative means the input was not PSD.
    """
    G = 0.5 * (G + G.T)
    w, V = np.linalg.eigh(G)
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    if w.min(initial=0.0) < -clamp * scale:
        raise CongestionPricingError("matrix square root of a non-PSD matrix",
                                     min_eigenvalue=float(w.min()))
    w = np.clip(w, 0.0, None)
    R = (V * np.sqrt(w)) @ V.T
    return 0.5 * (R + R.T)


def make_params(n: int, d: int, seed: int = 0, capacity: Optional[float] = None) -> QuadGameParams:
    if n < 1 or d < 1:
        raise DomainError("need n >= 1 and d >= 1", n=n, d=d)
    rng = np.random.default_rng(seed)
    Qt = rng.standard_normal((d, d))
    Q = 2.0 * psd_sqrt(Qt.T @ Qt) + np.eye(d)
    cap = DEFAULT_CAPACITY if capacity is None else float(capacity)
    A = LOAD_PER_UNIT * np.kron(np.ones((1, n)), np.eye(d))
    return QuadGameParams(n, d, Q, 4.0 * np.eye(d), np.zeros(n * d), A,
                          np.full(d, cap), int(seed), cap)


def quad_gradient(x, params: QuadGameParams) -> np.ndarray:
    """v(x) = -grad_i J_i, block by block in O(N D^2).

    Block i is -(Q x_i + C sigma(x) + c_i + C^T x_i / N). Leading batch axes
    are allowed.
    """
    X = params.blocks(x)
    n = params.n
    sigma = X.mean(axis=-2, keepdims=True)
    c = params.c.reshape(n, params.d)
    G = X @ params.Q.T + sigma @ params.Cmat.T + c + (X @ params.Cmat) / n
    return -G.reshape(np.shape(x))


def quad_cost(i: int, x, params: QuadGameParams) -> float:
    X = params.blocks(x)
    if not 0 <= i < params.n:
        raise DimensionError(f"player index {i} out of range", player=i, n_players=params.n)
    xi = X[i]
    sigma = X.mean(axis=0)
    ci = params.c.reshape(params.n, params.d)[i]
    return float(0.5 * xi @ params.Q @ xi + (params.Cmat @ sigma + ci) @ xi)


def kron_matrix(params: QuadGameParams) -> np.ndarray:
    """The explicit ND x ND matrix M with v(x) = M x - c."""
    n, I = params.n, np.eye(params.n)
    return -(np.kron(I, params.Q) + np.kron(np.ones((n, n)), params.Cmat) / n
             + np.kron(I, params.Cmat.T) / n)


def game_from_params(params: QuadGameParams) -> GameSpec:
    sets = tuple(ActionSet.simplex(params.d) for _ in range(params.n))
    uniform = np.full(params.n * params.d, 1.0 / params.d)
    slater = uniform if np.all(params.A @ uniform - params.b < 0) else None
    rc = ResourceConstraints(params.A, params.b, slater)
    game = GameSpec(sets, lambda x: quad_gradient(x, params), rc,
                    affine=(kron_matrix(params), -params.c), oracle=params.to_dict())
    object.__setattr__(game, "params", params)
    return game


def make_quadratic_game(n: int, d: int, seed: int = 0, capacity: Optional[float] = None) -> GameSpec:
    """Build the benchmark game.

    Q = 2 sqrt(Qt^T Qt) + I with Qt standard normal drawn from ``seed``,
    C = 4 I, c = 0, A = 4 (1_N^T kron I_D), b = capacity * 1_D.
    The parameters stay reachable as ``game.params``.
    """
    return game_from_params(make_params(n, d, seed, capacity))


@register_oracle("quadratic")
def _rebuild(desc: dict) -> GameSpec:
    return make_quadratic_game(int(desc["n"]), int(desc["d"]), int(desc.get("build_seed", 0)),
                               desc.get("capacity"))
