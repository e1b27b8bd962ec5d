"""Resource-side price controller and the priced score update."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, check_dim


@dataclass(frozen=True)
class Schedule:
    """A step-size sequence: ``c`` or ``c * t**(-p)`` for t = 1, 2, ...

    Step index t is 1-based: the simulation's step tau = 0, 1, ... reads
    ``value(tau + 1)``.
    """

    kind: str = "constant"
    c: float = 0.0
    p: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "power_law"):
            raise DomainError(f"unknown schedule kind {self.kind!r}", kind=self.kind)
        if not np.isfinite(self.c) or self.c < 0:
            raise DomainError("schedule scale must be finite and >= 0", c=self.c)
        if not np.isfinite(self.p) or self.p < 0:
            raise DomainError("schedule exponent must be finite and >= 0", p=self.p)

    @classmethod
    def constant(cls, c: float) -> "Schedule":
        return cls("constant", float(c), 0.0)

    @classmethod
    def power_law(cls, c: float, p: float) -> "Schedule":
        return cls("power_law", float(c), float(p))

    def value(self, t: int) -> float:
        if t < 1:
            raise DomainError("schedules are indexed from t = 1", t=t)
        if self.kind == "constant":
            return self.c
        return self.c * float(t) ** (-self.p)

    def values(self, T: int) -> np.ndarray:
        """Values for t = 1..T."""
        if self.kind == "constant":
            return np.full(T, self.c)
        return self.c * np.arange(1, T + 1, dtype=float) ** (-self.p)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "c": self.c, "p": self.p}

    @classmethod
    def from_dict(cls, d) -> "Schedule":
        if isinstance(d, (int, float)):
            return cls.constant(d)
        return cls(d.get("kind", "constant"), float(d["c"]), float(d.get("p", 0.0)))


@dataclass(frozen=True)
class ScheduleSet:
    """Agents' rate gamma, resources' rate zeta, progressivity eta, sensitivity beta.

    ``zeta=None`` ties the resources' rate to the agents' rate (zeta_t = gamma_t).
    """

    gamma: Schedule
    eta: Schedule
    beta: Schedule
    zeta: Optional[Schedule] = None

    @property
    def zeta_is_gamma(self) -> bool:
        return self.zeta is None or self.zeta == self.gamma

    def at(self, t: int) -> tuple:
        """(gamma_t, zeta_t, eta_t, beta_t) for 1-based step t."""
        g = self.gamma.value(t)
        z = g if self.zeta is None else self.zeta.value(t)
        return g, z, self.eta.value(t), self.beta.value(t)

    def arrays(self, T: int) -> dict:
        g = self.gamma.values(T)
        return {
            "gamma": g,
            "zeta": g.copy() if self.zeta is None else self.zeta.values(T),
            "eta": self.eta.values(T),
            "beta": self.beta.values(T),
        }

    def validate(self, T: int) -> None:
        """Check the ranges the pricing loop requires for t = 1..T."""
        a = self.arrays(T)
        checks = [
            ("gamma", a["gamma"] > 0, "gamma_t > 0"),
            ("zeta", (a["zeta"] > 0) & (a["zeta"] < 1), "0 < zeta_t < 1"),
            ("eta", (a["eta"] >= 0) & (a["eta"] <= 1), "0 <= eta_t <= 1"),
            ("beta", a["beta"] >= 0, "beta_t >= 0"),
        ]
        for name, ok, rule in checks:
            if not np.all(ok):
                t = int(np.argmin(ok)) + 1
                raise DomainError(f"schedule {name} violates {rule} at t={t}",
                                  schedule=name, t=t, value=float(a[name][t - 1]))

    def to_dict(self) -> dict:
        d = {"gamma": self.gamma.to_dict(), "eta": self.eta.to_dict(), "beta": self.beta.to_dict()}
        d["zeta"] = None if self.zeta is None else self.zeta.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScheduleSet":
        z = d.get("zeta")
        return cls(Schedule.from_dict(d["gamma"]), Schedule.from_dict(d["eta"]),
                   Schedule.from_dict(d["beta"]), None if z is None else Schedule.from_dict(z))


@dataclass(frozen=True)
class PriceState:
    prices: np.ndarray
    effective_prices: np.ndarray

    @classmethod
    def initial(cls, prices, beta: float) -> "PriceState":
        lam = np.array(prices, dtype=float)
        if np.any(lam < 0):
            raise DomainError("initial prices must be nonnegative", prices=lam.tolist())
        return cls(lam, beta * lam)


def update_price(state: PriceState, phi, eta_t: float, zeta_t: float, beta_t: float) -> PriceState:
    """One pricing round, independently per resource.

    ``Lambda' = max(0, (1 - eta) Lambda + zeta phi)`` and ``Lambda~' = beta Lambda'``.
    """
    phi = np.asarray(phi, dtype=float)
    check_dim("congestion", phi.shape[-1], state.prices.shape[-1])
    if eta_t < 0 or zeta_t < 0 or beta_t < 0:
        raise DomainError("eta, zeta and beta must be nonnegative",
                          eta=eta_t, zeta=zeta_t, beta=beta_t)
    if eta_t > 1:
        raise DomainError("eta must not exceed 1", eta=eta_t)
    lam = np.maximum(0.0, (1.0 - eta_t) * state.prices + zeta_t * phi)
    return PriceState(lam, beta_t * lam)


def score_update(Y, v_hat, eff_prices, A, gamma_t: float) -> np.ndarray:
    """Priced dual-averaging step ``Y + gamma (v_hat - A^T Lambda~)``.

    The price enters as a cost, so overloaded resources lose score.
    """
    Y = np.asarray(Y, dtype=float)
    v_hat = np.asarray(v_hat, dtype=float)
    eff_prices = np.asarray(eff_prices, dtype=float)
    A = np.asarray(A, dtype=float)
    check_dim("v_hat", v_hat.shape[-1], Y.shape[-1])
    check_dim("A columns", A.shape[1], Y.shape[-1])
    check_dim("effective prices", eff_prices.shape[-1], A.shape[0])
    return Y + gamma_t * (v_hat - eff_prices @ A)
