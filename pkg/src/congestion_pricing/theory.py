"""Checkable theory: game constants, the trackability condition, the
expected-violation bound, and a constrained variational-inequality oracle.

Norm conventions. Player i's action space carries l1 (simplex) or l2 (box);
the joint space carries ``||x|| = sqrt(sum_i ||x_i||_i^2)`` and its dual
``||y||_* = sqrt(sum_i ||y_i||_{i,*}^2)``. With this product norm the sum of
the players' regularizers is K-strongly convex with K = min_i K_i.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate, special

from .errors import ConvergenceError, DomainError, HypothesisError, check_dim
from .game import BOX, SIMPLEX, GameSpec, NoiseModel
from .mirror import Regularizer, default_regularizers
from .pricing import ScheduleSet

ENUM_LIMIT = 10**6


@dataclass(frozen=True)
class GameConstants:
    """Constants entering the trackability condition and the bound.

    C1: ||A^T lam||_* <= C1 ||lam||_2;  C2: sup ||v(x)||_*;  C3: sup ||Ax - b||_2;
    K: min strong convexity;  delta_psi: sum of regularizer ranges;
    C_tilde2: bound on ||lambda*||_2 (plus one) from the VI oracle;
    sigma_star: sqrt of the noise second moment E||xi||_*^2.
    ``exact`` records which of C1, C2, C3 were attained rather than bounded.
    """

    C1: float
    C2: float
    C3: float
    K: float
    delta_psi: float
    C_tilde2: Optional[float] = None
    sigma_star: Optional[float] = None
    exact: dict = field(default_factory=dict)

    @property
    def C_tilde1(self) -> float:
        return 2.0 * (self.C2**2 / self.K + 2.0 * self.C3**2)

    def with_(self, **kw) -> "GameConstants":
        d = asdict(self)
        d.update(kw)
        return GameConstants(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["C_tilde1"] = self.C_tilde1
        return d


# -- constants ----------------------------------------------------------------

def _groups(game: GameSpec) -> list:
    """Players with identical action set and identical A-block, as (set, A_i, count)."""
    A = game.resources.A
    groups: dict = {}
    order = []
    for i, s in enumerate(game.action_sets):
        Ai = A[:, game.block(i)]
        key = (s, Ai.tobytes())
        if key not in groups:
            groups[key] = [s, Ai, 0]
            order.append(key)
        groups[key][2] += 1
    return [tuple(groups[k]) for k in order]


def _compositions(n: int, k: int) -> np.ndarray:
    """All count vectors of length k summing to n (multisets of size n over k items)."""
    rows = [np.bincount(c, minlength=k) for c in itertools.combinations_with_replacement(range(k), n)]
    return np.array(rows, dtype=float).reshape(-1, k)


def _multiset_count(n: int, k: int) -> int:
    return math.comb(n + k - 1, k - 1)


def _sum_over_choices(parts: list) -> np.ndarray:
    """All sums picking one row from each array in ``parts``."""
    total = parts[0]
    for p in parts[1:]:
        total = (total[:, None, ...] + p[None, :, ...]).reshape((-1,) + p.shape[1:])
    return total


def _c1(game: GameSpec, limit: int) -> tuple:
    A = game.resources.A
    R = A.shape[0]
    fixed = np.zeros((R, R))
    simplex_groups = []
    bound_sq = 0.0
    for s, Ai, n in _groups(game):
        if s.kind == BOX:
            fixed += n * Ai @ Ai.T  # ||A_i^T lam||_2^2
        else:
            simplex_groups.append((Ai, n))
            bound_sq += n * float(np.max(np.sum(Ai * Ai, axis=0)))
    count = 1
    for Ai, n in simplex_groups:
        count *= _multiset_count(n, Ai.shape[1])
    if not simplex_groups:
        return float(np.sqrt(max(np.linalg.eigvalsh(fixed)[-1], 0.0))), True
    if count <= limit:
        # ||A_i^T lam||_inf^2 = max_k (a_ik . lam)^2: choose one column per player,
        # then the sup over unit lam is the top eigenvalue of the chosen Gram sum.
        parts = []
        for Ai, n in simplex_groups:
            outer = np.einsum("rk,sk->krs", Ai, Ai)
            parts.append(np.einsum("ck,krs->crs", _compositions(n, Ai.shape[1]), outer))
        mats = _sum_over_choices(parts) + fixed
        top = np.linalg.eigvalsh(mats)[:, -1].max()
        return float(np.sqrt(max(top, 0.0))), True
    top_fixed = np.linalg.eigvalsh(fixed)[-1] if np.any(fixed) else 0.0
    return float(np.sqrt(bound_sq + max(top_fixed, 0.0))), False


def _c3(game: GameSpec, limit: int) -> tuple:
    A, b = game.resources.A, game.resources.b
    groups = _groups(game)
    count = 1
    for s, Ai, n in groups:
        count *= _multiset_count(n, s.n_vertices())
    if count <= limit:
        parts = []
        for s, Ai, n in groups:
            W = s.vertices() @ Ai.T  # load of each vertex
            parts.append(_compositions(n, len(W)) @ W)
        loads = _sum_over_choices(parts)
        return float(np.sqrt(np.max(np.sum((loads - b) ** 2, axis=1)))), True
    # per-resource extremes of a linear function over a product set are separable
    hi = -b.copy()
    lo = -b.copy()
    for s, Ai, n in groups:
        W = s.vertices() @ Ai.T
        hi += n * W.max(axis=0)
        lo += n * W.min(axis=0)
    return float(np.sqrt(np.sum(np.maximum(hi, -lo) ** 2))), False


def _all_vertices(game: GameSpec, chunk: int = 4096):
    """Yield chunks of joint vertices (product of the players' vertex sets)."""
    vs = [s.vertices() for s in game.action_sets]
    it = itertools.product(*[range(len(v)) for v in vs])
    while True:
        idx = list(itertools.islice(it, chunk))
        if not idx:
            return
        idx = np.array(idx)
        yield np.concatenate([vs[i][idx[:, i]] for i in range(len(vs))], axis=1)


def _c2(game: GameSpec, limit: int) -> tuple:
    if game.affine is None:
        raise DomainError("sup ||v|| needs an affine gradient representation or an explicit C2")
    M, c = game.affine
    count = 1
    for s in game.action_sets:
        count *= s.n_vertices()
    if count <= limit:
        # ||Mx + c||_* is convex, so its max over the polytope sits at a vertex
        best = 0.0
        for V in _all_vertices(game):
            best = max(best, float(np.max(game.dual_norm(V @ M.T + c))))
        return best, True
    # separable per-coordinate extremes, then the block dual norms
    hi, lo = c.copy(), c.copy()
    for j, s in enumerate(game.action_sets):
        P = s.vertices() @ M[:, game.block(j)].T
        hi += P.max(axis=0)
        lo += P.min(axis=0)
    mag = np.maximum(hi, -lo)
    sq = 0.0
    for i, s in enumerate(game.action_sets):
        m = mag[game.block(i)]
        sq += float(m.max()) ** 2 if s.kind == SIMPLEX else float(np.sum(m * m))
    return math.sqrt(sq), False


def gaussian_max_square(d: int) -> float:
    """E[max_k Z_k^2] for d i.i.d. standard normals."""
    if d == 1:
        return 1.0
    f = lambda u: 2.0 * u * (1.0 - special.erf(u / math.sqrt(2.0)) ** d)
    val, _ = integrate.quad(f, 0.0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    return float(val)


def noise_second_moment(game: GameSpec, noise: NoiseModel) -> float:
    """E||xi||_*^2 in the product dual norm."""
    if not noise.active:
        return 0.0
    total = 0.0
    for s in game.action_sets:
        total += gaussian_max_square(s.dim) if s.kind == SIMPLEX else float(s.dim)
    return noise.sigma**2 * total


def compute_constants(game: GameSpec, regs: Optional[Sequence[Regularizer]] = None,
                      noise: Optional[NoiseModel] = None, C_tilde2: Optional[float] = None,
                      C2: Optional[float] = None, limit: int = ENUM_LIMIT) -> GameConstants:
    """Evaluate C1, C2, C3, K, delta_psi (and sigma_star when ``noise`` is given).

    Extrema are enumerated exactly over vertices when the count, after merging
    identical players, stays within ``limit``; otherwise certified upper bounds
    are returned and ``exact`` says so.
    """
    regs = default_regularizers(game) if regs is None else list(regs)
    check_dim("regularizers", len(regs), game.n_players)
    for r, s in zip(regs, game.action_sets):
        if r.action_set != s:
            raise DomainError("regularizer domain differs from the action set", reg=r.kind, set=s.kind)
    c1, e1 = _c1(game, limit)
    if C2 is None:
        c2, e2 = _c2(game, limit)
    else:
        c2, e2 = float(C2), False
    c3, e3 = _c3(game, limit)
    sigma_star = None if noise is None else math.sqrt(noise_second_moment(game, noise))
    return GameConstants(
        C1=c1, C2=c2, C3=c3, K=min(r.K for r in regs),
        delta_psi=math.fsum(r.psi_range() for r in regs),
        C_tilde2=C_tilde2, sigma_star=sigma_star, exact={"C1": e1, "C2": e2, "C3": e3},
    )


# -- trackability ----------------------------------------------------------------

def _tc_lhs(gamma: float, eta: float, C1: float, K: float) -> Fraction:
    g, e, c, k = (Fraction(float(v)) for v in (gamma, eta, C1, K))
    return e * e - e / 4 + g * g * c * c / (4 * k)


def trackability_check(gamma_t: float, eta_t: float, consts: GameConstants) -> bool:
    """eta^2 - eta/4 + gamma^2 C1^2 / (4K) <= 0, in exact rational arithmetic."""
    return _tc_lhs(gamma_t, eta_t, consts.C1, consts.K) <= 0


def eta_interval(gamma_t: float, consts: GameConstants) -> Optional[tuple]:
    """The closed interval of eta passing the trackability check, or None.

    Endpoints are the quadratic's roots (1/4 -+ sqrt(1/16 - gamma^2 C1^2/K)) / 2,
    snapped to the outermost floats that still pass the exact check, so that
    membership and ``trackability_check`` agree on every float.
    """
    if gamma_t < 0:
        raise DomainError("gamma must be >= 0", gamma=gamma_t)
    ok = lambda e: _tc_lhs(gamma_t, e, consts.C1, consts.K) <= 0
    # the parabola's vertex is eta = 1/8; if that fails every eta fails
    if not ok(0.125):
        return None
    root = math.sqrt(max(1.0 / 16.0 - gamma_t**2 * consts.C1**2 / consts.K, 0.0))
    lo = _edge(ok, (0.25 - root) / 2.0, -1.0)
    hi = _edge(ok, (0.25 + root) / 2.0, +1.0)
    return lo, hi


def _edge(ok, guess: float, direction: float) -> float:
    """Outermost float passing ``ok`` on one side of the vertex 1/8."""
    if ok(guess):
        inside, delta = guess, max(abs(guess), 1.0) * 1e-16
        outside = guess + direction * delta
        while ok(outside):
            delta *= 2.0
            inside, outside = outside, guess + direction * delta
    else:
        inside, outside = 0.125, guess
    while True:
        mid = 0.5 * (inside + outside)
        if mid == inside or mid == outside:
            return inside
        if ok(mid):
            inside = mid
        else:
            outside = mid


def gamma_limits(consts: GameConstants) -> dict:
    """Largest gamma for which some eta passes the trackability check.

    ``discriminant`` = sqrt(K) / (4 C1) follows from the quadratic; ``stated``
    = sqrt(K/2) / (4 C1) is the more conservative figure quoted with the
    condition. Both are reported.
    """
    if consts.C1 == 0:
        return {"discriminant": math.inf, "stated": math.inf}
    return {"discriminant": math.sqrt(consts.K) / (4 * consts.C1),
            "stated": math.sqrt(consts.K / 2) / (4 * consts.C1)}


# -- the bound ------------------------------------------------------------------

SecondMoment = Union[None, float, Sequence[float], Callable[[int], float]]


def _moments(second_moment: SecondMoment, t: int, consts: GameConstants) -> np.ndarray:
    if second_moment is None:
        m = 0.0 if consts.sigma_star is None else consts.sigma_star**2
        return np.full(t, m)
    if callable(second_moment):
        return np.array([float(second_moment(k)) for k in range(1, t + 1)])
    arr = np.asarray(second_moment, dtype=float)
    if arr.ndim == 0:
        return np.full(t, float(arr))
    if len(arr) < t:
        raise DomainError("second-moment schedule shorter than t", t=t, n=len(arr))
    return arr[:t]


def check_bound_hypotheses(t: int, schedules: ScheduleSet, consts: GameConstants) -> None:
    """Raise HypothesisError naming the first step where beta != 2, zeta != gamma, or TC fails."""
    a = schedules.arrays(t)
    for tau in range(t):
        if a["beta"][tau] != 2.0:
            raise HypothesisError(f"beta must equal 2 (step {tau})", tau=tau, beta=float(a["beta"][tau]))
        if a["zeta"][tau] != a["gamma"][tau]:
            raise HypothesisError(f"zeta must equal gamma (step {tau})", tau=tau)
    for tau in range(t):
        if not trackability_check(a["gamma"][tau], a["eta"][tau], consts):
            raise HypothesisError(f"trackability condition fails at step {tau}", tau=tau,
                                  gamma=float(a["gamma"][tau]), eta=float(a["eta"][tau]))


def theorem1_bound(t: int, schedules: ScheduleSet, consts: GameConstants,
                   second_moment: SecondMoment = None) -> float:
    """Upper bound on E||[sum_{tau<t} gamma_tau (A X_tau - b)]_+||_2^2 for Y_0 = 0, Lambda_0 = 0.

    2 etabar (delta_psi + Ct1 sum gamma^2) + etabar^2 (Ct2^2 + (4/K) sum gamma^2 E||xi||_*^2)
    with etabar = 1 + sum eta. ``second_moment`` is E||xi_tau||_*^2: a constant,
    a per-step sequence, a callable of the 1-based step, or None for sigma_star^2.
    """
    if t < 1:
        raise DomainError("t must be >= 1", t=t)
    if consts.C_tilde2 is None:
        raise DomainError("C_tilde2 is unset; solve the constrained VI or pass an override")
    check_bound_hypotheses(t, schedules, consts)
    a = schedules.arrays(t)
    g2 = a["gamma"] ** 2
    etabar = math.fsum(a["eta"]) + 1.0
    sg2 = math.fsum(g2)
    noise_term = math.fsum(g2 * _moments(second_moment, t, consts))
    return (2.0 * etabar * (consts.delta_psi + consts.C_tilde1 * sg2)
            + etabar**2 * (consts.C_tilde2**2 + 4.0 / consts.K * noise_term))


# -- constrained VI / KKT oracle ----------------------------------------------------

@dataclass(frozen=True)
class KKTResidual:
    stationarity: float
    primal: float
    complementarity: float
    dual: float

    @property
    def max(self) -> float:
        return max(self.stationarity, self.primal, self.complementarity, self.dual)

    def ok(self, tol: float) -> bool:
        return self.max <= tol


@dataclass(frozen=True)
class VISolution:
    x_star: np.ndarray
    lambda_star: np.ndarray
    residuals: KKTResidual
    iterations: int
    cap: float

    def to_dict(self) -> dict:
        return {"x_star": self.x_star.tolist(), "lambda_star": self.lambda_star.tolist(),
                "residuals": asdict(self.residuals), "iterations": self.iterations, "cap": self.cap}


def _projector(game: GameSpec) -> Callable[[np.ndarray], np.ndarray]:
    sets = game.action_sets
    s0 = sets[0]
    if s0.kind == SIMPLEX and all(s == s0 for s in sets):
        n, d = game.n_players, s0.dim

        def proj(x):
            Y = x.reshape(n, d)
            U = -np.sort(-Y, axis=1)
            css = np.cumsum(U, axis=1) - 1.0
            k = np.arange(1, d + 1)
            rho = np.sum(U - css / k > 0, axis=1)
            theta = css[np.arange(n), rho - 1] / rho
            return np.maximum(Y - theta[:, None], 0.0).reshape(-1)
        return proj
    return game.project


def tilde_v(x, lam, game: GameSpec) -> tuple:
    """The Lagrangian-extended field (v(x) - A^T lam, A x - b)."""
    A, b = game.resources.A, game.resources.b
    return game.v(x) - lam @ A, A @ x - b


def kkt_residual(x, lam, game: GameSpec) -> KKTResidual:
    """Residuals of the KKT system for VI(Q, v) at (x, lam).

    stationarity: ||x - Pi_X(x + v(x) - A^T lam)||_2 (natural map);
    primal: ||[Ax - b]_+||_2; complementarity: |lam . (Ax - b)|; dual: ||[-lam]_+||_2.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    check_dim("x", x.shape[-1], game.dim)
    check_dim("lambda", lam.shape[-1], game.n_resources)
    gx, phi = tilde_v(x, lam, game)
    stat = float(np.linalg.norm(x - game.project(x + gx)))
    return KKTResidual(
        stationarity=stat,
        primal=float(np.linalg.norm(np.maximum(phi, 0.0))),
        complementarity=abs(float(lam @ phi)),
        dual=float(np.linalg.norm(np.maximum(-lam, 0.0))),
    )


def _estimate_lipschitz(game: GameSpec, cap: float, rng: np.random.Generator, n: int = 256) -> float:
    R = game.n_resources
    X1, X2 = game.sample(rng, n), game.sample(rng, n)
    L1, L2 = rng.uniform(0, cap, (n, R)), rng.uniform(0, cap, (n, R))
    best = 0.0
    for x1, x2, l1, l2 in zip(X1, X2, L1, L2):
        a1, b1 = tilde_v(x1, l1, game)
        a2, b2 = tilde_v(x2, l2, game)
        num = math.sqrt(np.sum((a1 - a2) ** 2) + np.sum((b1 - b2) ** 2))
        den = math.sqrt(np.sum((x1 - x2) ** 2) + np.sum((l1 - l2) ** 2))
        if den > 0:
            best = max(best, num / den)
    return best


def _initial_cap(game: GameSpec) -> float:
    try:
        c2, _ = _c2(game, ENUM_LIMIT)
    except DomainError:
        c2 = float(np.max(game.dual_norm(game.v(game.sample(np.random.default_rng(0), 256)))))
    diam = math.sqrt(sum(s.diameter() ** 2 for s in game.action_sets))
    return 2.0 * (c2 * diam + 1.0)


def solve_constrained_vi(game: GameSpec, tol: float = 1e-8, max_iters: int = 2_000_000,
                         check_every: int = 50, seed: int = 0, max_doublings: int = 10) -> VISolution:
    """Solve VI(Q, v) through its Lagrangian extension with extragradient.

    Iterates on z = (x, lam) over X x [0, cap]^R. The step starts at 0.5/L for
    a sampled Lipschitz estimate L and is halved whenever the KKT residual
    fails to decrease between checks. If a multiplier ends at the cap, the cap
    doubles and the solve continues (at most ``max_doublings`` times).
    """
    rng = np.random.default_rng(seed)
    A, b = game.resources.A, game.resources.b
    proj = _projector(game)
    cap = _initial_cap(game)
    L = _estimate_lipschitz(game, cap, rng)
    step = 0.5 / max(L, 1e-12)
    x = game.center()
    lam = np.zeros(game.n_resources)
    it = 0
    for _ in range(max_doublings + 1):
        best = math.inf
        while it < max_iters:
            for _ in range(check_every):
                gx = game.v(x) - lam @ A
                gl = A @ x - b
                xh = proj(x + step * gx)
                lh = np.clip(lam + step * gl, 0.0, cap)
                gx = game.v(xh) - lh @ A
                gl = A @ xh - b
                x = proj(x + step * gx)
                lam = np.clip(lam + step * gl, 0.0, cap)
            it += check_every
            res = kkt_residual(x, lam, game)
            if res.ok(tol):
                break
            if res.max > best:
                step *= 0.5
            best = min(best, res.max)
        else:
            raise ConvergenceError("extragradient did not converge", iterations=it,
                                   residuals=asdict(res), cap=cap)
        if np.all(lam < cap * (1.0 - 1e-9)):
            return VISolution(x, lam, res, it, cap)
        cap *= 2.0
    raise ConvergenceError("multiplier cap kept binding", cap=cap, residuals=asdict(res))


def sample_feasible(game: GameSpec, n: int, rng: np.random.Generator, anchor=None) -> np.ndarray:
    """Points of Q = {x in X : Ax <= b}.

    Uniform draws from X are kept when feasible; infeasible ones are pulled
    toward ``anchor`` (the Slater point by default) to the boundary of Q.
    """
    A, b = game.resources.A, game.resources.b
    if anchor is None:
        anchor = game.resources.slater_point
    if anchor is None:
        raise DomainError("need a feasible anchor point to sample Q")
    anchor = np.asarray(anchor, dtype=float)
    if np.any(A @ anchor - b > 1e-12):
        raise DomainError("anchor is infeasible")
    X = game.sample(rng, n)
    out = np.empty_like(X)
    da = A @ anchor - b
    for k, x in enumerate(X):
        dx = A @ x - b
        if np.all(dx <= 0):
            out[k] = x
            continue
        # phi(anchor + s (x - anchor)) = da + s (dx - da) <= 0
        grow = dx - da > 0
        s = min(1.0, float(np.min(-da[grow] / (dx - da)[grow])))
        out[k] = anchor + s * (x - anchor)
    return out


def vi_slack(x_star, game: GameSpec, points) -> float:
    """min over points of -<x - x*, v(x*)>; nonnegative iff the VI holds on the sample."""
    x_star = np.asarray(x_star, dtype=float)
    v = game.v(x_star)
    return float(-np.max((np.asarray(points) - x_star) @ v))
