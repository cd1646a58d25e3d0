"""Probabilistic classifiers with input-gradient access.

Variants: the exact Bayes posterior of a labeled Gaussian mixture (analytic
fixture), a cross-entropy-trained MLP, and a PGD-l2 adversarially trained
MLP serving as the robust guide. Classifiers always consume clean /
denoised inputs, never noisy diffusion states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .denoiser import GaussianMixture, _logsumexp
from .numerics import Adam, Rng, SmallNet, load_net, save_net


class ClassifierModel:
    variant: str
    n_classes: int
    dim: int

    def class_log_probs(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad_log_prob(self, x: np.ndarray, y: int) -> np.ndarray:
        raise NotImplementedError

    def confidence(self, x: np.ndarray, y: int) -> float:
        return float(np.exp(self.class_log_probs(x)[int(y)]))

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        return np.array([int(np.argmax(self.class_log_probs(x))) for x in np.atleast_2d(X)])


class BayesGmmClassifier(ClassifierModel):
    """Exact posterior p(y | x) of a labeled isotropic Gaussian mixture."""

    variant = "bayes-gmm"

    def __init__(self, mixture: GaussianMixture):
        self.mixture = mixture
        self.n_classes = mixture.n_classes
        self.dim = mixture.dim

    def _component_logs(self, x: np.ndarray) -> np.ndarray:
        g = self.mixture
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected input of dim {self.dim}")
        return np.log(g.weights) - np.sum((x - g.means) ** 2, axis=1) / (2.0 * g.var)

    def class_log_probs(self, x: np.ndarray) -> np.ndarray:
        logs = self._component_logs(x)
        total = _logsumexp(logs)
        out = np.full(self.n_classes, -np.inf)
        for y in range(self.n_classes):
            mask = self.mixture.labels == y
            if mask.any():
                out[y] = _logsumexp(logs[mask]) - total
        return out

    def grad_log_prob(self, x: np.ndarray, y: int) -> np.ndarray:
        g = self.mixture
        logs = self._component_logs(x)
        mask = g.labels == int(y)
        if not mask.any():
            raise ValueError(f"class {y} has no mixture components")
        r = np.exp(logs - _logsumexp(logs))            # responsibilities
        # within-class responsibilities, normalized in log space so the
        # gradient stays defined even where p(y|x) underflows to zero
        ry = np.zeros_like(r)
        ry[mask] = np.exp(logs[mask] - _logsumexp(logs[mask]))
        # x-terms cancel between the class-conditional and marginal scores
        return (ry @ g.means - r @ g.means) / g.var


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


class NetClassifier(ClassifierModel):
    variant = "trained-net"

    def __init__(self, net: SmallNet):
        self.net = net
        self.n_classes = net.out_dim
        self.dim = net.in_dim

    def class_log_probs(self, x: np.ndarray) -> np.ndarray:
        return _log_softmax(self.net.forward(x))

    def grad_log_prob(self, x: np.ndarray, y: int) -> np.ndarray:
        logits = self.net.forward(x)
        p = np.exp(_log_softmax(logits))
        upstream = -p
        upstream[int(y)] += 1.0
        _, dx = self.net.backward(x, upstream)
        return dx

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.net.forward_batch(np.atleast_2d(X)), axis=1)


@dataclass
class AdvTrainConfig:
    """PGD-l2 adversarial training parameters (data-space units)."""

    pgd_radius: float = 0.5
    pgd_steps: int = 5
    pgd_step_size: float = 0.2
    epochs: int = 40
    learning_rate: float = 1e-3
    batch_size: int = 64
    hidden_dims: tuple[int, ...] = (32, 32)
    activation: str = "tanh"

    def __post_init__(self):
        if min(self.pgd_radius, self.pgd_step_size, self.epochs,
               self.pgd_steps, self.learning_rate) <= 0:
            raise ValueError("AdvTrainConfig values must be positive")


def _ce_loss_and_grads(net: SmallNet, X: np.ndarray, Y: np.ndarray):
    logits = net.forward_batch(X)
    logp = _log_softmax(logits)
    n = X.shape[0]
    loss = -float(np.mean(logp[np.arange(n), Y]))
    upstream = np.exp(logp)
    upstream[np.arange(n), Y] -= 1.0
    upstream /= n
    grads, dX = net.backward_batch(X, upstream)
    return loss, grads, dX


def pgd_attack_l2(model: ClassifierModel, X: np.ndarray, Y: np.ndarray,
                  radius: float, steps: int, step_size: float) -> np.ndarray:
    """Batched PGD ascent on cross-entropy inside the l2 ball of `radius`."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=int)
    if isinstance(model, NetClassifier):
        net = model.net
    else:
        raise ValueError("PGD attack needs a net-backed classifier")
    delta = np.zeros_like(X)
    for _ in range(steps):
        _, _, dX = _ce_loss_and_grads(net, X + delta, Y)
        norms = np.linalg.norm(dX, axis=1, keepdims=True)
        dirs = np.where(norms > 1e-12, dX / np.maximum(norms, 1e-12), 0.0)
        delta = delta + step_size * dirs
        dn = np.linalg.norm(delta, axis=1, keepdims=True)
        scale = np.minimum(1.0, radius / np.maximum(dn, 1e-12))
        delta = delta * scale
    return X + delta


def _train_net_classifier(X, Y, n_classes, epochs, batch_size, lr, hidden,
                          activation, rng, adversary=None,
                          loss_history=None) -> NetClassifier:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=int)
    d = X.shape[1]
    net = SmallNet([d, *hidden, n_classes], activation, rng)
    clf = NetClassifier(net)
    opt = Adam(net, lr)
    for _ in range(epochs):
        order = rng.permutation(X.shape[0])
        epoch_loss = 0.0
        nb = 0
        for start in range(0, X.shape[0], batch_size):
            idx = order[start:start + batch_size]
            xb, yb = X[idx], Y[idx]
            if adversary is not None:
                xb = adversary(clf, xb, yb)
            loss, grads, _ = _ce_loss_and_grads(net, xb, yb)
            if not np.isfinite(loss):
                raise RuntimeError(f"classifier training diverged (loss={loss})")
            opt.step(net, grads)
            epoch_loss += loss
            nb += 1
        if loss_history is not None:
            loss_history.append(epoch_loss / nb)
    return clf


def train_classifier(X: np.ndarray, Y: np.ndarray, cfg, rng: Rng,
                     loss_history: list | None = None) -> NetClassifier:
    """Cross-entropy training of an MLP classifier (cfg: TrainConfig)."""
    Y = np.asarray(Y, dtype=int)
    n_classes = int(Y.max()) + 1
    if len(np.unique(Y)) < 2:
        raise ValueError("need at least two classes in the training data")
    return _train_net_classifier(X, Y, n_classes, cfg.epochs, cfg.batch_size,
                                 cfg.learning_rate, cfg.hidden_dims,
                                 cfg.activation, rng, loss_history=loss_history)


def adversarial_train(X: np.ndarray, Y: np.ndarray, cfg: AdvTrainConfig,
                      rng: Rng) -> NetClassifier:
    """PGD-l2 adversarial training; the resulting model plays the role of
    the robust guide whose input gradients are perceptually aligned."""
    Y = np.asarray(Y, dtype=int)
    n_classes = int(Y.max()) + 1

    def adversary(clf, xb, yb):
        return pgd_attack_l2(clf, xb, yb, cfg.pgd_radius, cfg.pgd_steps,
                             cfg.pgd_step_size)

    return _train_net_classifier(X, Y, n_classes, cfg.epochs, cfg.batch_size,
                                 cfg.learning_rate, cfg.hidden_dims,
                                 cfg.activation, rng, adversary=adversary)


def accuracy(model: ClassifierModel, X: np.ndarray, Y: np.ndarray) -> float:
    return float(np.mean(model.predict_batch(X) == np.asarray(Y, dtype=int)))


def robust_accuracy(model: NetClassifier, X: np.ndarray, Y: np.ndarray,
                    radius: float, steps: int = 10,
                    step_size: float | None = None) -> float:
    Xadv = pgd_attack_l2(model, X, Y, radius, steps,
                         step_size if step_size is not None else radius / 4.0)
    return accuracy(model, Xadv, Y)


def save_classifier(path, model: NetClassifier) -> None:
    save_net(path, model.net, {"role": "classifier",
                               "classes": str(model.n_classes)})


def load_classifier(path) -> NetClassifier:
    net, extra = load_net(path)
    if extra.get("role") != "classifier":
        raise ValueError(f"checkpoint role {extra.get('role')!r} is not 'classifier'")
    if int(extra.get("classes", net.out_dim)) != net.out_dim:
        raise ValueError("class count header disagrees with net output dim")
    return NetClassifier(net)
