"""Non-uniform residual-shifting noise schedule for n conditions.

The total shift Sum-eta grows monotonically from ~0 at t=1 to a terminal
value just under 1 at t=T, following a geometric progression in its square
root with a power-law exponent ladder.  A simplex weight partition splits
the total across conditions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidInputError

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class ScheduleConfig:
    """Ladder shape (T, p), noise scale kappa, endpoints, and weights.

    eta_1_sum overrides the default starting level min((0.04/kappa)^2, 0.001)
    when set.  weights must be a simplex vector, one entry per condition.
    """

    T: int = 20
    kappa: float = 2.0
    p: float = 0.3
    eta_T_sum: float = 0.99
    weights: tuple[float, ...] = (0.5, 0.5)
    eta_1_sum: float | None = None

    def __post_init__(self):
        if self.T < 2:
            raise ConfigError(f"ScheduleConfig: T must be >= 2, got {self.T}")
        if not self.kappa > 0.0:
            raise ConfigError(f"ScheduleConfig: kappa must be positive, got {self.kappa}")
        if not self.p > 0.0:
            raise ConfigError(f"ScheduleConfig: p must be positive, got {self.p}")
        if not 0.0 < self.eta_T_sum < 1.0:
            raise ConfigError(
                f"ScheduleConfig: eta_T_sum must lie in (0, 1), got {self.eta_T_sum}"
            )
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1:
            raise ConfigError("ScheduleConfig: weights must be a non-empty vector")
        if np.any(w < 0.0) or abs(float(w.sum()) - 1.0) > WEIGHT_TOL:
            raise ConfigError(
                f"ScheduleConfig: weights must be non-negative and sum to 1, got {self.weights}"
            )
        start = self.start_level()
        if not 0.0 < start < self.eta_T_sum:
            raise ConfigError(
                f"ScheduleConfig: starting level {start} must lie in (0, eta_T_sum)"
            )

    def start_level(self) -> float:
        if self.eta_1_sum is not None:
            return self.eta_1_sum
        return min((0.04 / self.kappa) ** 2, 0.001)


@dataclass(frozen=True)
class NoiseSchedule:
    """Precomputed ladder, indexed by t = 0..T (eta_sum[0] is 0).

    eta[t, i] = weights[i] * eta_sum[t];  alpha[t] = eta[t] - eta[t-1], with
    alpha[0] = 0 so that alpha[1] = eta[1].
    """

    eta_sum: np.ndarray
    eta: np.ndarray
    alpha: np.ndarray
    weights: np.ndarray
    kappa: float

    @property
    def T(self) -> int:
        return len(self.eta_sum) - 1

    @property
    def n_conditions(self) -> int:
        return self.weights.size

    def alpha_sum(self, t: int) -> float:
        return float(self.eta_sum[t] - self.eta_sum[t - 1])

    def posterior_sigma(self, t: int) -> float:
        """Reverse-transition noise SD at step t (0 at t <= 1)."""
        if t <= 1:
            return 0.0
        var = self.kappa**2 * self.eta_sum[t - 1] * self.alpha_sum(t) / self.eta_sum[t]
        return float(np.sqrt(var))


def build_schedule(cfg: ScheduleConfig) -> NoiseSchedule:
    """Materialize the ladder: exact endpoints, geometric-in-sqrt interior."""
    T = cfg.T
    eta_1 = cfg.start_level()
    eta_T = cfg.eta_T_sum
    b0 = np.exp(np.log(eta_T / eta_1) / (2.0 * (T - 1)))

    eta_sum = np.zeros(T + 1, dtype=np.float64)
    eta_sum[1] = eta_1
    eta_sum[T] = eta_T
    ts = np.arange(2, T)
    beta = ((ts - 1) / (T - 1)) ** cfg.p * (T - 1)
    eta_sum[2:T] = (np.sqrt(eta_1) * b0**beta) ** 2

    if np.any(np.diff(eta_sum[1:]) <= 0.0):
        raise ConfigError("build_schedule: ladder is not strictly increasing")

    weights = np.asarray(cfg.weights, dtype=np.float64)
    eta = eta_sum[:, None] * weights[None, :]
    alpha = np.zeros_like(eta)
    alpha[1:] = eta[1:] - eta[:-1]
    return NoiseSchedule(eta_sum=eta_sum, eta=eta, alpha=alpha, weights=weights, kappa=cfg.kappa)


def partition_weights(tau_hat: float) -> tuple[float, float]:
    """Two-condition simplex weights (1 - tau_hat, tau_hat).

    tau_hat = 0 puts all terminal mass on the first condition, matching a
    middle frame that coincides with it.
    """
    if not np.isfinite(tau_hat) or not 0.0 <= tau_hat <= 1.0:
        raise InvalidInputError(f"partition_weights: tau_hat must lie in [0, 1], got {tau_hat}")
    return (1.0 - tau_hat, tau_hat)
