"""Core guidance machinery: angular cone projection, distance subgradients,
the normalized adaptive update, and the raw (unnormalized) baseline shift.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NORM_FLOOR = 1e-12

DISTANCE_KINDS = ("l1", "l2", "l1.5")
VARIANCE_MODES = ("fixed-small", "fixed-large")


@dataclass
class GuidanceConfig:
    """Hyperparameters of the guided reverse process. Defaults are the
    paper-independent working point used throughout: classifier weight 0.1,
    distance weight 0.15, 30 degree cone, start halfway into the chain."""

    cc: float = 0.1                  # classifier coefficient
    cd: float = 0.15                 # distance coefficient
    cone_angle_deg: float = 30.0
    eta: float = 0.5                 # late-start fraction T_start / T
    distance_kind: str = "l1"
    variance_mode: str = "fixed-small"
    norm_floor: float = NORM_FLOOR
    cone_mode: str = "auto"          # auto | cone | off

    def __post_init__(self):
        if self.cc < 0 or self.cd < 0:
            raise ValueError("coefficients must be nonnegative")
        if not 0.0 < self.cone_angle_deg < 90.0:
            raise ValueError("cone angle must lie in (0, 90) degrees")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        if self.distance_kind not in DISTANCE_KINDS:
            raise ValueError(f"unknown distance kind {self.distance_kind!r}")
        if self.variance_mode not in VARIANCE_MODES:
            raise ValueError(f"unknown variance mode {self.variance_mode!r}")
        if self.cone_mode not in ("auto", "cone", "off"):
            raise ValueError(f"unknown cone mode {self.cone_mode!r}")


def cone_project(w: np.ndarray, v: np.ndarray, alpha_deg: float,
                 norm_floor: float = NORM_FLOOR) -> np.ndarray:
    """Euclidean projection of w onto the convex cone of half-angle
    alpha_deg around v.

    Inside the cone w is returned unchanged. Outside, the projection is
    max(<u, w>, 0) * u with u the unit vector at angle alpha from v in the
    span of v and w; the clamp at 0 covers directions more than 90 + alpha
    degrees from v, where the two-case formula alone would produce a
    descent direction. A nonzero result is never a descent direction for v.
    """
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    if not 0.0 < alpha_deg < 90.0:
        raise ValueError("cone angle must lie in (0, 90) degrees")
    nw = np.linalg.norm(w)
    nv = np.linalg.norm(v)
    if nv <= norm_floor or nw <= norm_floor:
        raise ValueError("cone_project requires nonzero v and w")
    alpha = np.deg2rad(alpha_deg)
    dot = float(np.dot(w, v))
    cos_theta = np.clip(dot / (nw * nv), -1.0, 1.0)
    if np.arccos(cos_theta) <= alpha:
        return w.copy()
    perp = w - (dot / (nv * nv)) * v
    nperp = np.linalg.norm(perp)
    if nperp <= norm_floor:
        # w antiparallel to v; the projection collapses to the apex
        return np.zeros_like(w)
    u = np.sin(alpha) * perp / nperp + np.cos(alpha) * v / nv
    return max(float(np.dot(u, w)), 0.0) * u


def lp15_value(delta: np.ndarray) -> float:
    """(sum |delta_i|^1.5)^(2/3)."""
    return float(np.sum(np.abs(delta) ** 1.5) ** (2.0 / 3.0))


def distance_value(kind: str, x: np.ndarray, xhat: np.ndarray) -> float:
    delta = np.asarray(x, dtype=float) - np.asarray(xhat, dtype=float)
    if kind == "l1":
        return float(np.sum(np.abs(delta)))
    if kind == "l2":
        return float(np.linalg.norm(delta))
    if kind == "l1.5":
        return lp15_value(delta)
    raise ValueError(f"unknown distance kind {kind!r}")


def distance_subgradient(kind: str, x: np.ndarray, xhat: np.ndarray) -> np.ndarray:
    """Subgradient of d(x, xhat) w.r.t. x; minimum-norm choice (0) at
    nondifferentiable points."""
    delta = np.asarray(x, dtype=float) - np.asarray(xhat, dtype=float)
    if delta.shape != np.shape(x):
        raise ValueError("x and xhat must have equal lengths")
    if kind == "l1":
        return np.sign(delta)
    if kind == "l2":
        n = np.linalg.norm(delta)
        return delta / n if n > 0.0 else np.zeros_like(delta)
    if kind == "l1.5":
        total = np.sum(np.abs(delta) ** 1.5)
        if total == 0.0:
            return np.zeros_like(delta)
        # d/ddelta of total^(2/3)
        return total ** (-1.0 / 3.0) * np.sqrt(np.abs(delta)) * np.sign(delta)
    raise ValueError(f"unknown distance kind {kind!r}")


def _unit_or_zero(g: np.ndarray, floor: float) -> np.ndarray:
    n = np.linalg.norm(g)
    return g / n if n > floor else np.zeros_like(g)


def guidance_update(cfg: GuidanceConfig, grad_cls: np.ndarray,
                    grad_dist: np.ndarray) -> np.ndarray:
    """Normalized combination cc * g_cls/|g_cls| - cd * g_dist/|g_dist|.
    Terms with vanishing norm contribute zero; the result norm is bounded
    by cc + cd and is invariant to positive rescaling of either input."""
    gc = _unit_or_zero(np.asarray(grad_cls, dtype=float), cfg.norm_floor)
    gd = _unit_or_zero(np.asarray(grad_dist, dtype=float), cfg.norm_floor)
    return cfg.cc * gc - cfg.cd * gd


def adaptive_mean(mu_theta: np.ndarray, sigma_diag: np.ndarray,
                  g_update: np.ndarray) -> np.ndarray:
    """Guided mean mu_theta + sigma_diag * |mu_theta|_2 * g_update; the
    |mu_theta| factor makes the coefficients transfer across inputs."""
    mu = np.asarray(mu_theta, dtype=float)
    return mu + np.asarray(sigma_diag, dtype=float) * np.linalg.norm(mu) \
        * np.asarray(g_update, dtype=float)


def raw_guided_mean(mu_theta: np.ndarray, sigma_diag: np.ndarray,
                    grad_combined: np.ndarray) -> np.ndarray:
    """Unnormalized baseline shift mu_theta + sigma_diag * grad; linear in
    the gradient, in contrast to the scale-invariant adaptive update."""
    return np.asarray(mu_theta, dtype=float) \
        + np.asarray(sigma_diag, dtype=float) * np.asarray(grad_combined, dtype=float)
