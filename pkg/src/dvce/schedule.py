"""Variance schedules and the closed-form forward noising process.

Timesteps are 1-based: t in {1, ..., T}, with the convention alpha_bar(0) = 1
so that posterior formulas need no special case at t = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_T = 200
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step variances beta_t, alpha_t = 1 - beta_t, the cumulative
    products alpha_bar_t, and the Bayes posterior variances
    beta_tilde_t = (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t.

    The formula gives beta_tilde_1 = 0 exactly (alpha_bar_0 = 1); that entry
    is replaced by beta_1 so all posterior variances stay positive.
    """

    betas: np.ndarray                       # shape (T,), index t-1
    alphas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)   # shape (T+1,), alpha_bars[0] = 1
    posterior_vars: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=float)
        if betas.ndim != 1 or betas.size < 1:
            raise ValueError("betas must be a non-empty 1-D array")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ValueError("betas must lie in (0, 1)")
        object.__setattr__(self, "betas", betas)
        alphas = 1.0 - betas
        abar = np.concatenate([[1.0], np.cumprod(alphas)])
        pv = (1.0 - abar[:-1]) / (1.0 - abar[1:]) * betas
        pv[0] = betas[0]  # exact formula gives 0 at t=1
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "alpha_bars", abar)
        object.__setattr__(self, "posterior_vars", pv)
        # construction-time invariant checks
        if np.any(np.diff(abar) >= 0.0):
            raise ValueError("alpha_bar must be strictly decreasing")
        if not np.allclose(abar[1:], alphas * abar[:-1], rtol=0, atol=0):
            raise AssertionError("alpha_bar product identity violated")
        if np.any(pv <= 0.0) or np.any(pv > betas * (1 + 1e-12)):
            raise AssertionError("posterior variances out of (0, beta_t]")

    @property
    def T(self) -> int:
        return self.betas.size

    def _check_t(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.T:
            raise IndexError(f"timestep {t} outside 1..{self.T}")
        return t

    def beta(self, t: int) -> float:
        return float(self.betas[self._check_t(t) - 1])

    def alpha(self, t: int) -> float:
        return float(self.alphas[self._check_t(t) - 1])

    def alpha_bar(self, t: int) -> float:
        if t == 0:
            return 1.0
        return float(self.alpha_bars[self._check_t(t)])

    def posterior_var(self, t: int) -> float:
        return float(self.posterior_vars[self._check_t(t) - 1])

    def step_var(self, t: int, variance_mode: str = "fixed-small") -> float:
        """Reverse-step variance: beta_tilde_t (fixed-small) or beta_t
        (fixed-large)."""
        if variance_mode == "fixed-small":
            return self.posterior_var(t)
        if variance_mode == "fixed-large":
            return self.beta(t)
        raise ValueError(f"unknown variance_mode {variance_mode!r}")


def build_linear_schedule(T: int = DEFAULT_T,
                          beta_start: float = DEFAULT_BETA_START,
                          beta_end: float = DEFAULT_BETA_END) -> NoiseSchedule:
    """Linearly spaced betas. The default range is the standard DDPM one;
    only T = 200 is pinned by the method, the beta range is a choice."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError("need 0 < beta_start <= beta_end < 1")
    return NoiseSchedule(np.linspace(beta_start, beta_end, T))


def forward_sample(s: NoiseSchedule, x0: np.ndarray, t: int,
                   eps: np.ndarray) -> np.ndarray:
    """Closed-form q(x_t | x_0): sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    x0 = np.asarray(x0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if x0.shape != eps.shape:
        raise ValueError("x0 and eps must have identical shapes")
    a = s.alpha_bar(s._check_t(t))
    return np.sqrt(a) * x0 + np.sqrt(1.0 - a) * eps


def q_posterior_mean(s: NoiseSchedule, x0: np.ndarray, xt: np.ndarray,
                     t: int) -> np.ndarray:
    """Mean of q(x_{t-1} | x_t, x_0) via Bayes theorem."""
    t = s._check_t(t)
    ab_t = s.alpha_bar(t)
    ab_prev = s.alpha_bar(t - 1)
    beta = s.beta(t)
    alpha = s.alpha(t)
    c0 = np.sqrt(ab_prev) * beta / (1.0 - ab_t)
    ct = np.sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab_t)
    return c0 * np.asarray(x0, dtype=float) + ct * np.asarray(xt, dtype=float)
