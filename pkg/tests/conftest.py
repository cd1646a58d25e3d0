"""Shared fixtures: analytic mixture setups that are cheap to build, plus the
trained shapes16 model stack (denoiser, robust guide, overfit target) that the
benchmark and ablation tests share.

Set DVCE_TEST_CACHE to a directory to persist the trained checkpoints between
test runs; without it every session trains from scratch (~12 minutes for the
wide denoiser).
"""

import os
from pathlib import Path

import numpy as np
import pytest

import dvce
from dvce.classifier import AdvTrainConfig, load_classifier, save_classifier
from dvce.denoiser import TrainConfig, load_denoiser, save_denoiser


@pytest.fixture(scope="session")
def schedule():
    """Default linear schedule: T=200, beta 1e-4 -> 0.02."""
    return dvce.build_linear_schedule(200, 1e-4, 0.02)


@pytest.fixture(scope="session")
def mixed_schedule():
    """Linear schedule with alpha_bar_T ~ 3e-5, i.e. x_T is essentially pure
    noise; this is the T=200 analogue of the standard 1000-step range."""
    return dvce.build_linear_schedule(200, 1e-4, 0.1)


@pytest.fixture(scope="session")
def gmm2_dataset():
    """Well-separated 2-class mixture (means 8 apart, sigma0=0.5)."""
    return dvce.make_gmm2d(2, 4.0, 0.5, 400, dvce.Rng(0).stream(1))


@pytest.fixture(scope="session")
def gmm2(gmm2_dataset):
    return gmm2_dataset.mixture


@pytest.fixture(scope="session")
def _cache_dir():
    path = os.environ.get("DVCE_TEST_CACHE")
    if not path:
        return None
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


@pytest.fixture(scope="session")
def shapes_dataset():
    return dvce.make_shapes16(1200, 0.05, dvce.Rng(0).stream(1))


@pytest.fixture(scope="session")
def shapes_denoiser(shapes_dataset, schedule, _cache_dir):
    """Wide single-hidden-layer epsilon model on shapes16 (the benchmark
    denoiser; ~12 min to train uncached)."""
    if _cache_dir is not None:
        f = _cache_dir / "den1024.txt"
        if f.exists():
            return load_denoiser(f, schedule)
    den = dvce.train_denoiser(
        shapes_dataset.xs, schedule,
        TrainConfig(epochs=3000, batch_size=64, learning_rate=1e-3,
                    hidden_dims=(1024,)),
        dvce.Rng(0).stream(2))
    if _cache_dir is not None:
        save_denoiser(_cache_dir / "den1024.txt", den, schedule)
    return den


@pytest.fixture(scope="session")
def shapes_robust(shapes_dataset, _cache_dir):
    """PGD-l2 adversarially trained guide on shapes16."""
    if _cache_dir is not None:
        f = _cache_dir / "rob05.txt"
        if f.exists():
            return load_classifier(f)
    rob = dvce.adversarial_train(
        shapes_dataset.xs, shapes_dataset.ys,
        AdvTrainConfig(pgd_radius=0.5, pgd_steps=5, pgd_step_size=0.2,
                       epochs=80, learning_rate=1e-3, batch_size=64,
                       hidden_dims=(64,)),
        dvce.Rng(0).stream(4))
    if _cache_dir is not None:
        save_classifier(_cache_dir / "rob05.txt", rob)
    return rob


@pytest.fixture(scope="session")
def shapes_std(shapes_dataset, _cache_dir):
    """Standard (non-robust) shapes16 classifier."""
    if _cache_dir is not None:
        f = _cache_dir / "clf.txt"
        if f.exists():
            return load_classifier(f)
    clf = dvce.train_classifier(
        shapes_dataset.xs, shapes_dataset.ys,
        TrainConfig(epochs=60, learning_rate=1e-3, batch_size=64,
                    hidden_dims=(64,)),
        dvce.Rng(0).stream(3))
    if _cache_dir is not None:
        save_classifier(_cache_dir / "clf.txt", clf)
    return clf


@pytest.fixture(scope="session")
def shapes_target(shapes_dataset, _cache_dir):
    """Non-robust relu classifier trained to interpolation; its raw input
    gradients are noisy, which is what the cone-projection ablation needs."""
    if _cache_dir is not None:
        f = _cache_dir / "clf_overfit.txt"
        if f.exists():
            return load_classifier(f)
    clf = dvce.train_classifier(
        shapes_dataset.xs, shapes_dataset.ys,
        TrainConfig(epochs=300, hidden_dims=(128, 128), activation="relu"),
        dvce.Rng(0).stream(3))
    if _cache_dir is not None:
        save_classifier(_cache_dir / "clf_overfit.txt", clf)
    return clf


def clip01(x: np.ndarray) -> np.ndarray:
    return np.clip(x, 0.0, 1.0)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion; the lines are
    echoed in the terminal summary so the verdicts survive output capture."""
    def report(num: int, label: str, ok: bool, detail: str = ""):
        verdict = "PASS" if ok else "FAIL"
        line = f"ACCEPTANCE {num} {label}: {verdict}"
        if detail:
            line += f"  ({detail})"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
