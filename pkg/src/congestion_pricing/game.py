"""Games with coupled affine resource constraints and noisy gradient feedback."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .errors import DimensionError, DomainError, check_dim

SIMPLEX = "simplex"
BOX = "box"

GradientOracle = Callable[[np.ndarray], np.ndarray]


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ActionSet:
    """A player's compact convex action set: the probability simplex or a box.

    The simplex carries the l1 norm (dual: l-infinity), the box the l2 norm.
    """

    kind: str
    dim: int
    lo: Optional[tuple] = None
    hi: Optional[tuple] = None

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError("action set dimension must be >= 1", dim=self.dim)
        if self.kind == SIMPLEX:
            if self.lo is not None or self.hi is not None:
                raise DomainError("simplex takes no bounds")
        elif self.kind == BOX:
            lo = tuple(float(v) for v in np.broadcast_to(self.lo if self.lo is not None else 0.0, (self.dim,)))
            hi = tuple(float(v) for v in np.broadcast_to(self.hi if self.hi is not None else 1.0, (self.dim,)))
            if not all(np.isfinite(lo)) or not all(np.isfinite(hi)):
                raise DomainError("box bounds must be finite (compact action set)", lo=lo, hi=hi)
            if any(l > h for l, h in zip(lo, hi)):
                raise DomainError("box lower bound exceeds upper bound", lo=lo, hi=hi)
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)
        else:
            raise DomainError(f"unknown action set kind {self.kind!r}", kind=self.kind)

    @classmethod
    def simplex(cls, dim: int) -> "ActionSet":
        return cls(SIMPLEX, dim)

    @classmethod
    def box(cls, dim: int, lo=0.0, hi=1.0) -> "ActionSet":
        return cls(BOX, dim, lo, hi)

    @property
    def norm_order(self) -> float:
        return 1 if self.kind == SIMPLEX else 2

    @property
    def dual_norm_order(self) -> float:
        return np.inf if self.kind == SIMPLEX else 2

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,) or not np.all(np.isfinite(x)):
            return False
        if self.kind == SIMPLEX:
            return bool(np.all(x >= -tol) and abs(x.sum() - 1.0) <= tol)
        return bool(np.all(x >= np.asarray(self.lo) - tol) and np.all(x <= np.asarray(self.hi) + tol))

    def vertices(self) -> np.ndarray:
        """Extreme points, one per row."""
        if self.kind == SIMPLEX:
            return np.eye(self.dim)
        return np.array(list(itertools.product(*zip(self.lo, self.hi))), dtype=float)

    def n_vertices(self) -> int:
        return self.dim if self.kind == SIMPLEX else 2**self.dim

    def center(self) -> np.ndarray:
        if self.kind == SIMPLEX:
            return np.full(self.dim, 1.0 / self.dim)
        return 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))

    def project(self, x) -> np.ndarray:
        """Euclidean projection onto the set."""
        x = np.asarray(x, dtype=float)
        if self.kind == BOX:
            return np.clip(x, self.lo, self.hi)
        # sort-based projection onto the probability simplex
        u = np.sort(x)[::-1]
        css = np.cumsum(u) - 1.0
        k = np.arange(1, self.dim + 1)
        rho = np.nonzero(u - css / k > 0)[0][-1]
        theta = css[rho] / (rho + 1.0)
        return np.maximum(x - theta, 0.0)

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        """Uniform samples from the set."""
        shape = (self.dim,) if size is None else (size, self.dim)
        if self.kind == SIMPLEX:
            return rng.dirichlet(np.ones(self.dim), size=size)
        return rng.uniform(self.lo, self.hi, size=shape)

    def diameter(self) -> float:
        """Diameter in the set's own norm (l1 for the simplex, l2 for the box)."""
        if self.kind == SIMPLEX:
            return 2.0 if self.dim > 1 else 0.0
        return float(np.linalg.norm(np.asarray(self.hi) - np.asarray(self.lo)))

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind, "dim": self.dim}
        if self.kind == BOX:
            d["lo"] = list(self.lo)
            d["hi"] = list(self.hi)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ActionSet":
        if d["kind"] == BOX:
            return cls.box(int(d["dim"]), d.get("lo", 0.0), d.get("hi", 1.0))
        return cls(d["kind"], int(d["dim"]))


@dataclass(frozen=True)
class ResourceConstraints:
    """Affine congestion map ``phi(x) = A x - b`` with R resources."""

    A: np.ndarray
    b: np.ndarray
    slater_point: Optional[np.ndarray] = None

    def __post_init__(self):
        A = _frozen(self.A)
        b = _frozen(self.b).reshape(-1)
        if A.ndim != 2:
            raise DimensionError("A must be a matrix", shape=A.shape)
        if A.shape[0] < 1:
            raise DimensionError("need at least one resource", shape=A.shape)
        check_dim("b", b.shape[0], A.shape[0])
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if self.slater_point is not None:
            xs = _frozen(self.slater_point).reshape(-1)
            check_dim("slater_point", xs.shape[0], A.shape[1])
            if not np.all(A @ xs - b < 0):
                raise DomainError("slater_point is not strictly feasible", phi=(A @ xs - b).tolist())
            object.__setattr__(self, "slater_point", xs)

    @property
    def n_resources(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.A.shape[1]


def congestion(x, rc: ResourceConstraints) -> np.ndarray:
    """Per-resource overload ``A x - b``; positive entries mean overuse."""
    x = np.asarray(x, dtype=float)
    check_dim("x", x.shape[-1], rc.dim)
    return x @ rc.A.T - rc.b


@dataclass(frozen=True)
class GameSpec:
    """An N-player continuous game with coupled resource constraints.

    ``gradient`` maps a joint action in R^D to the stacked utility gradients
    v(x). When v is affine, ``affine = (M, c)`` with ``v(x) = M x + c`` may be
    attached; the constants module uses it to bound sup ||v||.
    ``oracle`` is an optional JSON-able descriptor from which ``gradient`` can
    be rebuilt (see :func:`game_from_dict`).
    """

    action_sets: tuple
    gradient: GradientOracle = field(repr=False, compare=False)
    resources: ResourceConstraints = field(repr=False)
    affine: Optional[tuple] = field(default=None, repr=False, compare=False)
    oracle: Optional[dict] = None

    def __post_init__(self):
        sets = tuple(self.action_sets)
        if not sets:
            raise DomainError("a game needs at least one player")
        object.__setattr__(self, "action_sets", sets)
        offs = np.concatenate([[0], np.cumsum([s.dim for s in sets])])
        object.__setattr__(self, "_offsets", tuple(int(o) for o in offs))
        check_dim("resource matrix columns", self.resources.dim, sum(s.dim for s in sets))
        if self.affine is not None:
            M, c = self.affine
            M, c = _frozen(M), _frozen(c).reshape(-1)
            if M.shape != (self.dim, self.dim):
                raise DimensionError("affine M must be D x D", shape=M.shape, D=self.dim)
            check_dim("affine c", c.shape[0], self.dim)
            object.__setattr__(self, "affine", (M, c))

    @property
    def n_players(self) -> int:
        return len(self.action_sets)

    @property
    def dims(self) -> tuple:
        return tuple(s.dim for s in self.action_sets)

    @property
    def dim(self) -> int:
        return self._offsets[-1]

    @property
    def n_resources(self) -> int:
        return self.resources.n_resources

    def block(self, i: int) -> slice:
        return slice(self._offsets[i], self._offsets[i + 1])

    def blocks(self, x) -> list:
        x = np.asarray(x)
        return [x[..., self.block(i)] for i in range(self.n_players)]

    def v(self, x) -> np.ndarray:
        """Exact gradient map with dimension checks."""
        x = np.asarray(x, dtype=float)
        check_dim("x", x.shape[-1], self.dim)
        out = np.asarray(self.gradient(x), dtype=float)
        check_dim("gradient output", out.shape[-1], self.dim)
        return out

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            return False
        return all(s.contains(x[self.block(i)], tol) for i, s in enumerate(self.action_sets))

    def project(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.concatenate([s.project(x[self.block(i)]) for i, s in enumerate(self.action_sets)])

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        parts = [s.sample(rng, size) for s in self.action_sets]
        return np.concatenate(parts, axis=-1)

    def center(self) -> np.ndarray:
        return np.concatenate([s.center() for s in self.action_sets])

    def dual_norm(self, y) -> np.ndarray:
        """Product dual norm ``sqrt(sum_i ||y_i||_{i,*}^2)`` (last axis)."""
        y = np.asarray(y, dtype=float)
        sq = [np.linalg.norm(y[..., self.block(i)], ord=s.dual_norm_order, axis=-1) ** 2
              for i, s in enumerate(self.action_sets)]
        return np.sqrt(np.sum(sq, axis=0))

    def primal_norm(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        sq = [np.linalg.norm(x[..., self.block(i)], ord=s.norm_order, axis=-1) ** 2
              for i, s in enumerate(self.action_sets)]
        return np.sqrt(np.sum(sq, axis=0))


@dataclass(frozen=True)
class NoiseModel:
    """Additive gradient noise: nothing, or i.i.d. N(0, sigma^2) per coordinate."""

    kind: str = "none"
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian_iid"):
            raise DomainError(f"unknown noise kind {self.kind!r}", kind=self.kind)
        if not (self.sigma >= 0 and np.isfinite(self.sigma)):
            raise DomainError("sigma must be finite and >= 0", sigma=self.sigma)

    @classmethod
    def gaussian(cls, sigma: float) -> "NoiseModel":
        return cls("gaussian_iid", float(sigma))

    @property
    def active(self) -> bool:
        return self.kind == "gaussian_iid"

    def draw(self, rng: np.random.Generator, dim: int) -> np.ndarray:
        if not self.active:
            return np.zeros(dim)
        return self.sigma * rng.standard_normal(dim)


def noisy_gradient(x, game: GameSpec, noise: NoiseModel, rng: np.random.Generator,
                   return_noise: bool = False):
    """First-order feedback ``v(x) + xi``.

    With ``noise.kind == "none"`` no random numbers are consumed and the exact
    gradient is returned.
    """
    v = game.v(x)
    if not noise.active:
        return (v, np.zeros_like(v)) if return_noise else v
    xi = noise.draw(rng, game.dim)
    return (v + xi, xi) if return_noise else v + xi


# -- serialization ---------------------------------------------------------

_ORACLE_BUILDERS: dict[str, Callable[[dict], GameSpec]] = {}


def register_oracle(kind: str):
    """Register a builder that rebuilds a GameSpec from its oracle descriptor."""
    def deco(fn):
        _ORACLE_BUILDERS[kind] = fn
        return fn
    return deco


def game_to_dict(game: GameSpec, noise: Optional[NoiseModel] = None) -> dict:
    rc = game.resources
    d: dict[str, Any] = {
        "n_players": game.n_players,
        "dims": list(game.dims),
        "action_sets": [s.to_dict() for s in game.action_sets],
        "n_resources": rc.n_resources,
        "A": rc.A.reshape(-1).tolist(),
        "b": rc.b.tolist(),
    }
    if rc.slater_point is not None:
        d["slater_point"] = rc.slater_point.tolist()
    if game.oracle is not None:
        d["oracle"] = dict(game.oracle)
    noise = noise or NoiseModel()
    d["noise"] = {"kind": noise.kind, "sigma": noise.sigma}
    return d


def game_from_dict(d: dict, gradient: Optional[GradientOracle] = None,
                   affine: Optional[tuple] = None) -> tuple:
    """Inverse of :func:`game_to_dict`; returns ``(game, noise)``.

    The gradient oracle is rebuilt from the ``oracle`` descriptor when one is
    registered for it, otherwise ``gradient`` must be passed.
    """
    noise = NoiseModel(**d.get("noise", {}))
    dims = [int(v) for v in d["dims"]]
    if len(dims) != int(d["n_players"]):
        raise DimensionError("dims length differs from n_players", dims=dims, n_players=d["n_players"])
    sets = tuple(ActionSet.from_dict(s) for s in d["action_sets"])
    if [s.dim for s in sets] != dims:
        raise DimensionError("action set dims disagree with dims", dims=dims)
    R, D = int(d["n_resources"]), sum(dims)
    A = np.asarray(d["A"], dtype=float)
    check_dim("A entries", A.size, R * D)
    rc = ResourceConstraints(A.reshape(R, D), d["b"], d.get("slater_point"))
    oracle = d.get("oracle")
    if gradient is None:
        if oracle is None or oracle.get("kind") not in _ORACLE_BUILDERS:
            raise DomainError("no gradient oracle supplied and none can be rebuilt", oracle=oracle)
        built = _ORACLE_BUILDERS[oracle["kind"]](oracle)
        if not np.array_equal(built.resources.A, rc.A) or not np.array_equal(built.resources.b, rc.b):
            raise DomainError("rebuilt oracle's resources disagree with the document")
        return GameSpec(sets, built.gradient, rc, built.affine, oracle), noise
    return GameSpec(sets, gradient, rc, affine, oracle), noise


def game_to_json(game: GameSpec, noise: Optional[NoiseModel] = None) -> str:
    return json.dumps(game_to_dict(game, noise), indent=2, sort_keys=True)


def game_from_json(text: str, gradient: Optional[GradientOracle] = None) -> tuple:
    return game_from_dict(json.loads(text), gradient)


def make_game(action_sets: Sequence[ActionSet], gradient: GradientOracle, A, b,
              slater_point=None, affine=None) -> GameSpec:
    return GameSpec(tuple(action_sets), gradient, ResourceConstraints(A, b, slater_point), affine)
