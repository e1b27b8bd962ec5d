"""Independent reference implementations used as test oracles."""

from fractions import Fraction

import numpy as np

GRID_STEP = 1e-3


def simplex_grid(dim: int, step: float = GRID_STEP) -> np.ndarray:
    """All points of the probability simplex with coordinates on a regular grid."""
    m = int(round(1 / step))
    if dim == 2:
        i = np.arange(m + 1)
        return np.stack([i, m - i], axis=1) / m
    if dim == 3:
        i, j = np.meshgrid(np.arange(m + 1), np.arange(m + 1), indexing="ij")
        keep = i + j <= m
        i, j = i[keep], j[keep]
        return np.stack([i, j, m - i - j], axis=1) / m
    raise ValueError("grid oracle only for 2- and 3-simplices")


def entropy(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0).sum(axis=-1)


def grid_mirror(Y: np.ndarray, grid: np.ndarray, chunk: int = 16) -> np.ndarray:
    """argmax over the grid of <y, x> - psi(x), one row per score in Y."""
    psi = entropy(grid)
    out = np.empty((len(Y), grid.shape[1]))
    for s in range(0, len(Y), chunk):
        vals = grid @ Y[s:s + chunk].T - psi[:, None]
        out[s:s + chunk] = grid[np.argmax(vals, axis=0)]
    return out


def plain_omd(game, gamma: float, T: int, y0=None) -> np.ndarray:
    """Unpriced noiseless logit dynamics Y <- Y + gamma v(Phi(Y)), block softmax by hand."""
    dims = game.dims
    Y = np.zeros(game.dim) if y0 is None else np.array(y0, dtype=float)
    X = np.empty((T, game.dim))
    for t in range(T):
        parts, o = [], 0
        for d in dims:
            z = np.exp(Y[o:o + d] - Y[o:o + d].max())
            parts.append(z / z.sum())
            o += d
        X[t] = np.concatenate(parts)
        Y = Y + gamma * game.gradient(X[t])
    return X


def exact_weighted_ccv(phi: np.ndarray, weights) -> float:
    """||[sum w_t phi_t]_+||_2^2 with every product and sum done in rationals."""
    total = 0
    for r in range(phi.shape[1]):
        s = sum(Fraction(float(w)) * Fraction(float(p)) for w, p in zip(weights, phi[:, r]))
        if s > 0:
            total += s * s
    return float(total)
