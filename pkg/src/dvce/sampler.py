"""Reverse-diffusion loops: unconditional ancestral sampling and guided
counterfactual generation with late start and cone-projected guidance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifier import ClassifierModel
from .denoiser import EpsilonModel, f_dn, reverse_mean_mu_theta
from .guidance import (GuidanceConfig, adaptive_mean, cone_project,
                       distance_subgradient, distance_value, guidance_update)
from .numerics import Rng
from .schedule import NoiseSchedule, forward_sample


@dataclass
class VceResult:
    """One generated counterfactual with its per-step trace."""

    x: np.ndarray
    target_class: int
    confidence: float
    trace: list[tuple[int, float, float]]   # (t, confidence, distance to origin)
    seed: int
    origin: np.ndarray | None = None
    method: str = "dvce"
    cone_angles: list[float] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


def _check_finite(x: np.ndarray, t: int, what: str = "state"):
    if not np.all(np.isfinite(x)):
        raise RuntimeError(f"non-finite {what} at step t={t}")


def sample_unconditional(m: EpsilonModel, s: NoiseSchedule, rng: Rng,
                         variance_mode: str = "fixed-small",
                         x_init: np.ndarray | None = None) -> np.ndarray:
    """Ancestral sampling from the learned reverse chain, starting at
    standard normal noise (or a supplied state); the final step returns the
    mean without injected noise."""
    x = rng.standard_normal(m.dim) if x_init is None else np.asarray(x_init, dtype=float).copy()
    for t in range(s.T, 0, -1):
        mu = reverse_mean_mu_theta(m, s, x, t)
        if t > 1:
            sig = s.step_var(t, variance_mode)
            x = mu + np.sqrt(sig) * rng.standard_normal(m.dim)
        else:
            x = mu
        _check_finite(x, t)
    return x


def sample_unconditional_batch(m: EpsilonModel, s: NoiseSchedule, n: int,
                               rng: Rng,
                               variance_mode: str = "fixed-small") -> np.ndarray:
    """Vectorized ancestral sampling of n independent chains (one shared
    stream; used for moment checks, not for reproducible per-chain runs)."""
    X = rng.standard_normal(n, m.dim)
    for t in range(s.T, 0, -1):
        beta = s.beta(t)
        a = s.alpha_bar(t)
        eps = m.predict(s, X, t).eps_hat
        mu = (X - beta / np.sqrt(1.0 - a) * eps) / np.sqrt(1.0 - beta)
        if t > 1:
            sig = s.step_var(t, variance_mode)
            X = mu + np.sqrt(sig) * rng.standard_normal(n, m.dim)
        else:
            X = mu
        _check_finite(X, t)
    return X


def late_start_init(s: NoiseSchedule, xhat: np.ndarray, eta: float,
                    rng: Rng) -> tuple[np.ndarray, int]:
    """Noise the original input to timestep T_start = round(eta * T) with a
    fresh draw and return (state, T_start)."""
    if not 0.0 < eta <= 1.0:
        raise ValueError("eta must lie in (0, 1]")
    xhat = np.asarray(xhat, dtype=float)
    t_start = max(1, int(round(eta * s.T)))
    eps = rng.standard_normal(xhat.size)
    return forward_sample(s, xhat, t_start, eps), t_start


def generate_dvce(xhat: np.ndarray, y: int, target: ClassifierModel,
                  robust: ClassifierModel | None, m: EpsilonModel,
                  s: NoiseSchedule, cfg: GuidanceConfig, rng: Rng) -> VceResult:
    """Guided reverse diffusion toward target class y, started from a noised
    copy of xhat.

    Per step, classifier and distance gradients are taken through the
    denoised estimate; when a robust guide is present its gradient is
    projected onto the cone around the target's gradient. With no robust
    model (or an inherently robust target) the single classifier's gradient
    is used directly and the cone is omitted.
    """
    xhat = np.asarray(xhat, dtype=float)
    use_cone = robust is not None
    if cfg.cone_mode == "cone" and robust is None:
        raise ValueError("cone mode requested but no robust model supplied")
    if cfg.cone_mode == "off":
        use_cone = False
    x, t_start = late_start_init(s, xhat, cfg.eta, rng)
    trace: list[tuple[int, float, float]] = []
    cone_angles: list[float] = []
    for t in range(t_start, 0, -1):
        x0hat = f_dn(m, s, x, t)
        conf = target.confidence(x0hat, y)
        dist = distance_value(cfg.distance_kind, x0hat, xhat)
        trace.append((t, conf, dist))

        grad_target = m.f_dn_vjp(s, x, t, target.grad_log_prob(x0hat, y))
        if use_cone:
            grad_guide = m.f_dn_vjp(s, x, t, robust.grad_log_prob(x0hat, y))
            if (np.linalg.norm(grad_target) <= cfg.norm_floor
                    or np.linalg.norm(grad_guide) <= cfg.norm_floor):
                g_proj = grad_target   # saturated gradients: nothing to project
            else:
                g_proj = cone_project(grad_guide, grad_target,
                                      cfg.cone_angle_deg, cfg.norm_floor)
                ng = np.linalg.norm(g_proj)
                nt = np.linalg.norm(grad_target)
                if ng > cfg.norm_floor:
                    cosv = np.clip(np.dot(g_proj, grad_target) / (ng * nt), -1, 1)
                    cone_angles.append(float(np.degrees(np.arccos(cosv))))
        else:
            g_proj = grad_target

        grad_dist = m.f_dn_vjp(
            s, x, t, distance_subgradient(cfg.distance_kind, x0hat, xhat))
        g_update = guidance_update(cfg, g_proj, grad_dist)

        mu_theta = reverse_mean_mu_theta(m, s, x, t)
        sig = s.step_var(t, cfg.variance_mode)
        sigma_diag = np.full(xhat.size, sig)
        mu_t = adaptive_mean(mu_theta, sigma_diag, g_update)
        if t > 1:
            x = mu_t + np.sqrt(sig) * rng.standard_normal(xhat.size)
        else:
            x = mu_t
        if not np.all(np.isfinite(x)):
            raise RuntimeError(
                f"non-finite state at step t={t}; trace so far: {trace}")
    return VceResult(x=x, target_class=int(y),
                     confidence=target.confidence(x, y), trace=trace,
                     seed=rng.seed, origin=xhat, method="dvce",
                     cone_angles=cone_angles)
