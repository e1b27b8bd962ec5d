"""Simulation loop: priced online mirror descent for a population of agents.

Each step t (0-based) runs, in order:

1. every agent plays X_t = Phi(Y_t);
2. agents observe v_hat_t = v(X_t) + xi and the current effective prices,
   and update Y_{t+1} = Y_t + gamma_t (v_hat_t - A^T Lambda~_t);
3. resources read phi_t = A X_t - b and update their prices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, DomainError, SimulationError, check_dim
from .game import GameSpec, NoiseModel, congestion, noisy_gradient
from .mirror import Regularizer, default_regularizers, total_fenchel, total_mirror
from .pricing import PriceState, ScheduleSet, score_update, update_price


@dataclass(frozen=True)
class SimConfig:
    game: GameSpec
    schedules: ScheduleSet
    horizon: int
    seed: int = 0
    noise: NoiseModel = field(default_factory=NoiseModel)
    regularizers: Optional[Sequence[Regularizer]] = None
    y0: Optional[np.ndarray] = None
    lambda0: Optional[np.ndarray] = None
    record_scores: bool = False
    record_noise: bool = False

    def __post_init__(self):
        if self.horizon < 1:
            raise DomainError("horizon must be >= 1", horizon=self.horizon)
        regs = self.regularizers
        if regs is None:
            regs = default_regularizers(self.game)
        regs = tuple(regs)
        if [r.dim for r in regs] != list(self.game.dims):
            raise DimensionError("regularizer dims disagree with the game",
                                 regs=[r.dim for r in regs], dims=list(self.game.dims))
        object.__setattr__(self, "regularizers", regs)
        y0 = np.zeros(self.game.dim) if self.y0 is None else np.array(self.y0, dtype=float)
        check_dim("y0", y0.shape[-1], self.game.dim)
        lam0 = np.zeros(self.game.n_resources) if self.lambda0 is None else np.array(self.lambda0, dtype=float)
        check_dim("lambda0", lam0.shape[-1], self.game.n_resources)
        if np.any(lam0 < 0):
            raise DomainError("initial prices must be nonnegative", lambda0=lam0.tolist())
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "lambda0", lam0)
        self.schedules.validate(self.horizon)


@dataclass
class SimState:
    Y: np.ndarray
    price: PriceState
    t: int = 0


@dataclass
class Trajectory:
    """Per-step records of one run; row t holds step t = 0..T-1.

    ``prices[t]`` is Lambda_t, the price in force while X_t is played;
    ``final_prices`` is Lambda_T after the last pricing round.
    """

    actions: np.ndarray
    prices: np.ndarray
    effective_prices: np.ndarray
    phi: np.ndarray
    gamma: np.ndarray
    zeta: np.ndarray
    eta: np.ndarray
    beta: np.ndarray
    final_prices: np.ndarray
    final_effective_prices: np.ndarray
    final_scores: np.ndarray
    scores: Optional[np.ndarray] = None
    noise: Optional[np.ndarray] = None
    seed: Optional[int] = None

    def __len__(self) -> int:
        return self.actions.shape[0]

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    @property
    def n_resources(self) -> int:
        return self.phi.shape[1]

    def prefix(self, t: int) -> "Trajectory":
        """The first t records, as if the run had horizon t."""
        if not 1 <= t <= len(self):
            raise DomainError("prefix length out of range", t=t, T=len(self))
        if t == len(self):
            return self

        def cut(a):
            return None if a is None else a[:t].copy()

        # Y_t is only known when scores were recorded
        y_t = self.scores[t].copy() if self.scores is not None else np.full_like(self.final_scores, np.nan)
        return Trajectory(
            cut(self.actions), cut(self.prices), cut(self.effective_prices), cut(self.phi),
            cut(self.gamma), cut(self.zeta), cut(self.eta), cut(self.beta),
            self.prices[t].copy(), self.effective_prices[t].copy(), y_t,
            cut(self.scores), cut(self.noise), self.seed,
        )


def initial_state(cfg: SimConfig) -> SimState:
    beta0 = cfg.schedules.beta.value(1)
    lam = np.array(cfg.lambda0, dtype=float)
    return SimState(np.array(cfg.y0, dtype=float), PriceState(lam, beta0 * lam), 0)


def step(state: SimState, cfg: SimConfig, rng: np.random.Generator):
    """Advance one round. Returns ``(next_state, record)``."""
    if state.t >= cfg.horizon:
        raise DomainError("step past the horizon", t=state.t, T=cfg.horizon)
    game = cfg.game
    gamma, zeta, eta, beta = cfg.schedules.at(state.t + 1)
    X = total_mirror(state.Y, cfg.regularizers)
    v_hat, xi = noisy_gradient(X, game, cfg.noise, rng, return_noise=True)
    Y = score_update(state.Y, v_hat, state.price.effective_prices, game.resources.A, gamma)
    phi = congestion(X, game.resources)
    price = update_price(state.price, phi, eta, zeta, beta)
    for name, arr in (("scores", Y), ("prices", price.prices), ("gradient", v_hat)):
        if not np.all(np.isfinite(arr)):
            raise SimulationError(f"non-finite {name} at step {state.t}", t=state.t, field=name,
                                  seed=cfg.seed)
    record = {
        "t": state.t, "X": X, "Y": state.Y, "Lambda": state.price.prices,
        "Lambda_eff": state.price.effective_prices, "phi": phi, "xi": xi,
        "gamma": gamma, "zeta": zeta, "eta": eta, "beta": beta,
    }
    return SimState(Y, price, state.t + 1), record


def run(cfg: SimConfig) -> Trajectory:
    """Run the full horizon; deterministic given ``cfg.seed``."""
    T, D, R = cfg.horizon, cfg.game.dim, cfg.game.n_resources
    rng = np.random.default_rng(cfg.seed)
    actions = np.empty((T, D))
    prices, eff, phis = np.empty((T, R)), np.empty((T, R)), np.empty((T, R))
    sched = {k: np.empty(T) for k in ("gamma", "zeta", "eta", "beta")}
    scores = np.empty((T, D)) if cfg.record_scores else None
    noise = np.empty((T, D)) if cfg.record_noise else None
    state = initial_state(cfg)
    for t in range(T):
        state, rec = step(state, cfg, rng)
        actions[t], prices[t], eff[t], phis[t] = rec["X"], rec["Lambda"], rec["Lambda_eff"], rec["phi"]
        for k in sched:
            sched[k][t] = rec[k]
        if scores is not None:
            scores[t] = rec["Y"]
        if noise is not None:
            noise[t] = rec["xi"]
    return Trajectory(actions, prices, eff, phis, sched["gamma"], sched["zeta"], sched["eta"],
                      sched["beta"], state.price.prices, state.price.effective_prices, state.Y,
                      scores, noise, cfg.seed)


def energy_diagnostic(traj: Trajectory, z_star, regs: Sequence[Regularizer]) -> np.ndarray:
    """E1_t = F(x*, Y_t) + ||Lambda_t - lambda*||^2 / 2 for t = 0..T.

    Needs a run with ``record_scores=True``. Purely observational.
    """
    if traj.scores is None:
        raise DomainError("trajectory was recorded without scores")
    x_star, lam_star = (np.asarray(a, dtype=float) for a in z_star)
    check_dim("x*", x_star.shape[-1], traj.actions.shape[1])
    check_dim("lambda*", lam_star.shape[-1], traj.n_resources)
    Ys = np.vstack([traj.scores, traj.final_scores[None]])
    Ls = np.vstack([traj.prices, traj.final_prices[None]])
    out = np.empty(len(Ys))
    for k, (Y, L) in enumerate(zip(Ys, Ls)):
        out[k] = total_fenchel(x_star, Y, regs) + 0.5 * float(np.sum((L - lam_star) ** 2))
    return out


def noise_accumulators(traj: Trajectory, x, game: GameSpec) -> tuple:
    """Running S_t(x) = sum gamma <X - x, xi> and R_t = sum gamma^2 ||xi||_*^2.

    Needs a run with ``record_noise=True``. Both arrays have length T.
    """
    if traj.noise is None:
        raise DomainError("trajectory was recorded without noise draws")
    x = np.asarray(x, dtype=float)
    S = np.cumsum(traj.gamma * np.sum((traj.actions - x) * traj.noise, axis=1))
    R = np.cumsum(traj.gamma ** 2 * game.dual_norm(traj.noise) ** 2)
    return S, R
