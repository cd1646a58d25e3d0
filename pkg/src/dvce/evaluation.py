"""Closeness / validity / realism metrics and the crossover evaluation
protocol: counterfactuals are generated only across a class partition so
that leaving the input unchanged cannot score well on realism.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifier import ClassifierModel
from .guidance import lp15_value
from .numerics import Rng
from .sampler import VceResult

COV_REG = 1e-6


def closeness(x: np.ndarray, xhat: np.ndarray) -> tuple[float, float, float]:
    """(l1, l1.5, l2) distances between a counterfactual and its origin."""
    delta = np.asarray(x, dtype=float) - np.asarray(xhat, dtype=float)
    return (float(np.sum(np.abs(delta))),
            lp15_value(delta),
            float(np.linalg.norm(delta)))


def validity(m: ClassifierModel, pairs) -> float:
    """Mean target-class confidence over (x, y) pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("validity needs at least one pair")
    return float(np.mean([m.confidence(x, y) for x, y in pairs]))


def _gaussian_fit(X: np.ndarray, reg: float = COV_REG):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    mu = X.mean(axis=0)
    if X.shape[0] > 1:
        cov = np.cov(X, rowvar=False).reshape(X.shape[1], X.shape[1])
    else:
        cov = np.zeros((X.shape[1], X.shape[1]))
    return mu, cov + reg * np.eye(X.shape[1])


def _psd_sqrt(S: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh((S + S.T) / 2.0)
    if np.min(vals) < -1e-8 * max(1.0, float(np.max(np.abs(vals)))):
        raise ValueError("matrix is not PSD after regularization")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def frechet_gaussian(A: np.ndarray, B: np.ndarray, reg: float = COV_REG) -> float:
    """Frechet distance between Gaussian fits of the two sample sets:
    |mu_A - mu_B|^2 + tr(S_A + S_B - 2 (S_A S_B)^(1/2)), with the cross term
    evaluated through the symmetric eigendecomposition of
    S_A^(1/2) S_B S_A^(1/2)."""
    mu_a, S_a = _gaussian_fit(A, reg)
    mu_b, S_b = _gaussian_fit(B, reg)
    root_a = _psd_sqrt(S_a)
    inner = root_a @ S_b @ root_a
    vals = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    if np.min(vals) < -1e-8 * max(1.0, float(np.max(np.abs(vals)))):
        raise ValueError("cross matrix is not PSD")
    cross = np.sum(np.sqrt(np.clip(vals, 0.0, None)))
    val = float(np.sum((mu_a - mu_b) ** 2) + np.trace(S_a) + np.trace(S_b) - 2.0 * cross)
    return max(val, 0.0)


@dataclass
class MethodStats:
    mean_l1: float
    mean_l15: float
    mean_l2: float
    median_l1: float
    median_l2: float
    mean_conf: float
    frechet: float
    n: int


@dataclass
class EvalReport:
    """Per-method aggregates of the crossover protocol plus run metadata."""

    methods: dict[str, MethodStats] = field(default_factory=dict)
    config_hash: str = ""
    seeds: tuple[int, ...] = ()

    CSV_HEADER = ("method,n,mean_l1,mean_l15,mean_l2,median_l1,median_l2,"
                  "mean_conf,frechet")

    def csv_rows(self) -> list[str]:
        rows = [self.CSV_HEADER]
        for name in sorted(self.methods):
            m = self.methods[name]
            rows.append(
                f"{name},{m.n},{m.mean_l1:.17g},{m.mean_l15:.17g},"
                f"{m.mean_l2:.17g},{m.median_l1:.17g},{m.median_l2:.17g},"
                f"{m.mean_conf:.17g},{m.frechet:.17g}")
        return rows

    def text_summary(self) -> str:
        lines = [f"{'method':<10} {'closeness l1':>13} {'l1.5':>9} {'l2':>9} "
                 f"{'validity':>9} {'realism':>9}"]
        for name in sorted(self.methods):
            m = self.methods[name]
            lines.append(f"{name:<10} {m.mean_l1:13.4f} {m.mean_l15:9.4f} "
                         f"{m.mean_l2:9.4f} {m.mean_conf:9.4f} {m.frechet:9.4f}")
        return "\n".join(lines)


def crossover_evaluation(xs: np.ndarray, ys: np.ndarray, generators: dict,
                         partition: tuple[set, set], classifier: ClassifierModel,
                         rng: Rng, train_xs: np.ndarray | None = None,
                         train_ys: np.ndarray | None = None,
                         n_per_method: int | None = None) -> EvalReport:
    """Generate counterfactuals only across the class partition (sources in
    one side target classes on the other) and report, per generator, the
    closeness and validity aggregates plus the average of the two
    directionwise Frechet-Gaussian scores against the reference samples.

    generators maps a method name to f(xhat, target_class, rng) -> VceResult.
    train_xs/train_ys default to (xs, ys) when no held-out set is supplied.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.asarray(ys, dtype=int)
    side_a, side_b = set(partition[0]), set(partition[1])
    if not side_a or not side_b or side_a & side_b:
        raise ValueError("partition sides must be nonempty and disjoint")
    if train_xs is None:
        train_xs, train_ys = xs, ys
    train_xs = np.atleast_2d(np.asarray(train_xs, dtype=float))
    train_ys = np.asarray(train_ys, dtype=int)
    train_a = train_xs[np.isin(train_ys, list(side_a))]
    train_b = train_xs[np.isin(train_ys, list(side_b))]

    order = [i for i in range(xs.shape[0]) if ys[i] in side_a | side_b]
    if n_per_method is not None:
        order = order[:n_per_method]

    report = EvalReport(seeds=(rng.seed,))
    for mi, (name, gen) in enumerate(sorted(generators.items())):
        into_a, into_b = [], []
        c1s, c15s, c2s, confs = [], [], [], []
        for j, i in enumerate(order):
            src = ys[i]
            targets = sorted(side_b) if src in side_a else sorted(side_a)
            target = targets[j % len(targets)]
            res: VceResult = gen(xs[i], target, rng.stream(1000 * mi + j))
            (into_a if target in side_a else into_b).append(res.x)
            l1, l15, l2 = closeness(res.x, xs[i])
            c1s.append(l1)
            c15s.append(l15)
            c2s.append(l2)
            confs.append(classifier.confidence(res.x, target))
        scores = []
        if into_a:
            scores.append(frechet_gaussian(np.array(into_a), train_a))
        if into_b:
            scores.append(frechet_gaussian(np.array(into_b), train_b))
        report.methods[name] = MethodStats(
            mean_l1=float(np.mean(c1s)), mean_l15=float(np.mean(c15s)),
            mean_l2=float(np.mean(c2s)), median_l1=float(np.median(c1s)),
            median_l2=float(np.median(c2s)), mean_conf=float(np.mean(confs)),
            frechet=float(np.mean(scores)), n=len(order))
    return report
