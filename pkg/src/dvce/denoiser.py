"""Noise-prediction models, the denoised estimate, and the reverse-step mean.

Two model variants: an analytic one backed by a labeled isotropic Gaussian
mixture (exact E[x0 | xt] via conjugate-Gaussian responsibilities, used as
ground truth everywhere) and a trainable MLP with a small time embedding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Adam, Rng, SmallNet, load_net, save_net
from .schedule import NoiseSchedule, forward_sample

ALPHA_BAR_FLOOR = 1e-12


@dataclass(frozen=True)
class GaussianMixture:
    """Isotropic mixture: K weights, K mean vectors, shared component
    variance var, and a class label per component."""

    weights: np.ndarray   # (K,)
    means: np.ndarray     # (K, d)
    var: float            # sigma0^2
    labels: np.ndarray    # (K,) ints

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.atleast_2d(np.asarray(self.means, dtype=float))
        lab = np.asarray(self.labels, dtype=int)
        if np.any(w <= 0.0):
            raise ValueError("weights must be positive")
        if abs(w.sum() - 1.0) > 1e-12:
            w = w / w.sum()
        if self.var <= 0.0:
            raise ValueError("component variance must be positive")
        if m.shape[0] != w.size or lab.size != w.size:
            raise ValueError("weights/means/labels disagree on K")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "labels", lab)

    @property
    def K(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    def sample(self, n: int, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
        ks = rng.choice(np.arange(self.K), size=n) if self.K > 1 else np.zeros(n, int)
        x = self.means[ks] + np.sqrt(self.var) * rng.standard_normal(n, self.dim)
        return x, self.labels[ks]


def _logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    return (m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))).squeeze(axis)


def noised_log_responsibilities(g: GaussianMixture, a_bar: float,
                                x: np.ndarray) -> np.ndarray:
    """log r_k(x) under x = sqrt(a_bar) x0 + sqrt(1-a_bar) eps, x0 ~ mixture.

    x may be (d,) or (n, d); returns (K,) or (n, K). Computed in log space.
    """
    x2 = np.atleast_2d(np.asarray(x, dtype=float))
    c = a_bar * g.var + (1.0 - a_bar)       # marginal per-component variance
    centered = x2[:, None, :] - np.sqrt(a_bar) * g.means[None, :, :]
    logp = np.log(g.weights)[None, :] - np.sum(centered ** 2, axis=-1) / (2.0 * c)
    logr = logp - _logsumexp(logp, axis=1)[:, None]
    return logr if np.ndim(x) == 2 else logr[0]


def noised_log_density(g: GaussianMixture, a_bar: float, x: np.ndarray):
    """Unnormalized-by-nothing log density of the mixture pushed through the
    closed-form forward process at cumulative product a_bar (a_bar = 1 gives
    the data density)."""
    x2 = np.atleast_2d(np.asarray(x, dtype=float))
    d = g.dim
    c = a_bar * g.var + (1.0 - a_bar)
    centered = x2[:, None, :] - np.sqrt(a_bar) * g.means[None, :, :]
    logp = (np.log(g.weights)[None, :]
            - np.sum(centered ** 2, axis=-1) / (2.0 * c)
            - 0.5 * d * np.log(2.0 * np.pi * c))
    out = _logsumexp(logp, axis=1)
    return out if np.ndim(x) == 2 else float(out[0])


def gmm_posterior_x0_mean(g: GaussianMixture, s: NoiseSchedule,
                          xt: np.ndarray, t: int) -> np.ndarray:
    """Exact E[x0 | x_t] under the mixture prior."""
    a = s.alpha_bar(s._check_t(t))
    return _posterior_x0_mean_at(g, a, xt)


def _posterior_x0_mean_at(g: GaussianMixture, a: float, xt: np.ndarray) -> np.ndarray:
    x2 = np.atleast_2d(np.asarray(xt, dtype=float))
    sres = 1.0 - a
    c = a * g.var + sres
    r = np.exp(noised_log_responsibilities(g, a, x2))      # (n, K)
    # per-component posterior mean: (sres * m_k + sqrt(a) var * x) / c
    mbar = r @ g.means                                     # (n, d)
    out = (np.sqrt(a) * g.var / c) * x2 + (sres / c) * mbar
    return out if np.ndim(xt) == 2 else out[0]


def _posterior_x0_vjp_at(g: GaussianMixture, a: float, xt: np.ndarray,
                         u: np.ndarray) -> np.ndarray:
    """u^T d(E[x0|xt])/d(xt) for a single vector xt."""
    xt = np.asarray(xt, dtype=float)
    u = np.asarray(u, dtype=float)
    sres = 1.0 - a
    c = a * g.var + sres
    r = np.exp(noised_log_responsibilities(g, a, xt))      # (K,)
    mu_k = (sres * g.means + np.sqrt(a) * g.var * xt[None, :]) / c   # (K, d)
    mbar = r @ g.means
    # grad of r_k w.r.t. xt: r_k * sqrt(a)/c * (m_k - mbar)
    coeff = r * (mu_k @ u) * (np.sqrt(a) / c)              # (K,)
    return (np.sqrt(a) * g.var / c) * u + coeff @ (g.means - mbar[None, :])


@dataclass(frozen=True)
class DenoiserOutput:
    eps_hat: np.ndarray
    log_var: np.ndarray | None = None


class EpsilonModel:
    """Interface: predict the source noise for (x_t, t)."""

    variant: str
    dim: int

    def predict(self, s: NoiseSchedule, xt: np.ndarray, t: int) -> DenoiserOutput:
        raise NotImplementedError

    def f_dn_vjp(self, s: NoiseSchedule, xt: np.ndarray, t: int,
                 u: np.ndarray) -> np.ndarray:
        """u^T Jacobian of the denoised estimate w.r.t. x_t."""
        raise NotImplementedError


class AnalyticGmmDenoiser(EpsilonModel):
    """Exact noise predictor obtained by inverting the closed-form forward
    process around E[x0 | xt] of a known mixture."""

    variant = "analytic-gmm"

    def __init__(self, mixture: GaussianMixture):
        self.mixture = mixture
        self.dim = mixture.dim

    def predict(self, s: NoiseSchedule, xt: np.ndarray, t: int) -> DenoiserOutput:
        a = s.alpha_bar(s._check_t(t))
        x0 = _posterior_x0_mean_at(self.mixture, a, xt)
        eps = (np.asarray(xt, dtype=float) - np.sqrt(a) * x0) / np.sqrt(1.0 - a)
        return DenoiserOutput(eps_hat=eps)

    def f_dn_vjp(self, s: NoiseSchedule, xt: np.ndarray, t: int,
                 u: np.ndarray) -> np.ndarray:
        # denoised estimate coincides with E[x0 | xt]; use its closed-form
        # Jacobian directly
        a = s.alpha_bar(s._check_t(t))
        return _posterior_x0_vjp_at(self.mixture, a, xt, u)


def time_embedding(t: int, T: int) -> np.ndarray:
    """t/T plus one (sin, cos) frequency; appended to the net input."""
    u = t / T
    return np.array([u, np.sin(2.0 * np.pi * u), np.cos(2.0 * np.pi * u)])


TIME_EMBED_DIM = 3


class TrainedDenoiser(EpsilonModel):
    variant = "trained-net"

    def __init__(self, net: SmallNet, T: int):
        if net.in_dim != net.out_dim + TIME_EMBED_DIM:
            raise ValueError("net input must be data dim + time embedding")
        self.net = net
        self.T = T
        self.dim = net.out_dim
        self.final_val_loss: float | None = None

    def _inputs(self, xt: np.ndarray, t: int) -> np.ndarray:
        x2 = np.atleast_2d(np.asarray(xt, dtype=float))
        emb = np.broadcast_to(time_embedding(t, self.T), (x2.shape[0], TIME_EMBED_DIM))
        return np.concatenate([x2, emb], axis=1)

    def predict(self, s: NoiseSchedule, xt: np.ndarray, t: int) -> DenoiserOutput:
        s._check_t(t)
        out = self.net.forward_batch(self._inputs(xt, t))
        eps = out if np.ndim(xt) == 2 else out[0]
        return DenoiserOutput(eps_hat=eps)

    def f_dn_vjp(self, s: NoiseSchedule, xt: np.ndarray, t: int,
                 u: np.ndarray) -> np.ndarray:
        a = s.alpha_bar(s._check_t(t))
        _, dx = self.net.backward(np.concatenate([xt, time_embedding(t, self.T)]),
                                  np.asarray(u, dtype=float))
        return (np.asarray(u, dtype=float) - np.sqrt(1.0 - a) * dx[:self.dim]) / np.sqrt(a)


def predict_epsilon(m: EpsilonModel, s: NoiseSchedule, xt: np.ndarray,
                    t: int) -> DenoiserOutput:
    return m.predict(s, xt, t)


def f_dn(m: EpsilonModel, s: NoiseSchedule, xt: np.ndarray, t: int) -> np.ndarray:
    """One-shot estimate of x0 from x_t:
    xt / sqrt(abar_t) - sqrt(1 - abar_t) eps_hat / sqrt(abar_t)."""
    a = s.alpha_bar(s._check_t(t))
    if a < ALPHA_BAR_FLOOR:
        raise ValueError(f"alpha_bar({t}) = {a} too small for the denoised estimate")
    eps = m.predict(s, xt, t).eps_hat
    return (np.asarray(xt, dtype=float) - np.sqrt(1.0 - a) * eps) / np.sqrt(a)


def reverse_mean_mu_theta(m: EpsilonModel, s: NoiseSchedule, xt: np.ndarray,
                          t: int) -> np.ndarray:
    """Mean of the learned reverse transition:
    (xt - beta_t / sqrt(1 - abar_t) eps_hat) / sqrt(1 - beta_t)."""
    t = s._check_t(t)
    beta = s.beta(t)
    a = s.alpha_bar(t)
    eps = m.predict(s, xt, t).eps_hat
    return (np.asarray(xt, dtype=float) - beta / np.sqrt(1.0 - a) * eps) / np.sqrt(1.0 - beta)


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 1e-3
    hidden_dims: tuple[int, ...] = (64, 64)
    activation: str = "tanh"
    val_fraction: float = 0.1


def train_denoiser(data: np.ndarray, s: NoiseSchedule, cfg: TrainConfig,
                   rng: Rng) -> TrainedDenoiser:
    """Noise-prediction regression: uniform t, fresh standard-normal eps,
    squared error against eps. Final validation loss is stored on the model."""
    X = np.atleast_2d(np.asarray(data, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("empty training set")
    n, d = X.shape
    n_val = max(1, int(round(cfg.val_fraction * n)))
    perm = rng.permutation(n)
    X_val, X_tr = X[perm[:n_val]], X[perm[n_val:]]
    net = SmallNet([d + TIME_EMBED_DIM, *cfg.hidden_dims, d], cfg.activation, rng)
    model = TrainedDenoiser(net, s.T)
    opt = Adam(net, cfg.learning_rate)

    def batch_inputs(xb):
        nb = xb.shape[0]
        ts = rng.integers(1, s.T + 1, nb)
        eps = rng.standard_normal(nb, d)
        ab = s.alpha_bars[ts]
        xt = np.sqrt(ab)[:, None] * xb + np.sqrt(1.0 - ab)[:, None] * eps
        u = ts / s.T
        emb = np.stack([u, np.sin(2 * np.pi * u), np.cos(2 * np.pi * u)], axis=1)
        return np.concatenate([xt, emb], axis=1), eps

    for _ in range(cfg.epochs):
        order = rng.permutation(X_tr.shape[0])
        for start in range(0, X_tr.shape[0], cfg.batch_size):
            xb = X_tr[order[start:start + cfg.batch_size]]
            inp, eps = batch_inputs(xb)
            pred = net.forward_batch(inp)
            upstream = 2.0 * (pred - eps) / xb.shape[0]
            grads, _ = net.backward_batch(inp, upstream)
            loss = float(np.mean(np.sum((pred - eps) ** 2, axis=1)))
            if not np.isfinite(loss):
                raise RuntimeError(f"denoiser training diverged (loss={loss})")
            opt.step(net, grads)

    inp, eps = batch_inputs(X_val)
    pred = net.forward_batch(inp)
    model.final_val_loss = float(np.mean(np.sum((pred - eps) ** 2, axis=1)))
    return model


def save_denoiser(path, model: TrainedDenoiser, s: NoiseSchedule) -> None:
    save_net(path, model.net, {
        "role": "epsilon",
        "T": str(s.T),
        "beta_start": format(float(s.betas[0]), ".17g"),
        "beta_end": format(float(s.betas[-1]), ".17g"),
    })


def load_denoiser(path, s: NoiseSchedule) -> TrainedDenoiser:
    net, extra = load_net(path)
    if extra.get("role") != "epsilon":
        raise ValueError(f"checkpoint role {extra.get('role')!r} is not 'epsilon'")
    fp = (int(extra["T"]), float(extra["beta_start"]), float(extra["beta_end"]))
    here = (s.T, float(s.betas[0]), float(s.betas[-1]))
    if fp != here:
        raise ValueError(f"schedule fingerprint mismatch: checkpoint {fp}, runtime {here}")
    return TrainedDenoiser(net, s.T)
