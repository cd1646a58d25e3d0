"""Synthetic ground-truth datasets: labeled 2-D Gaussian mixtures with the
exact generating mixture retained for analytic oracles, and 16x16
procedural shape images (square / disk / cross) in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .denoiser import GaussianMixture
from .numerics import Rng

DATA_MAGIC = "DVCE-DATA v1"
SHAPE_CLASSES = ("square", "disk", "cross")
SHAPES_SIDE = 16


@dataclass
class ToyDataset:
    kind: str                      # gmm2d | shapes16
    xs: np.ndarray                 # (n, d)
    ys: np.ndarray                 # (n,)
    mixture: GaussianMixture | None = None
    bounds: tuple[float, float] | None = None

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.ys.max()) + 1


def _balanced_labels(n: int, k: int) -> np.ndarray:
    return np.arange(n) % k


def make_gmm2d(K: int, separation: float, sigma0: float, n: int,
               rng: Rng) -> ToyDataset:
    """K class means on a circle of radius `separation`, isotropic noise of
    std sigma0, balanced class counts (within one)."""
    if K < 2:
        raise ValueError("need at least two classes")
    if separation <= 0 or sigma0 <= 0:
        raise ValueError("separation and sigma0 must be positive")
    angles = 2.0 * np.pi * np.arange(K) / K
    means = separation * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    mixture = GaussianMixture(weights=np.full(K, 1.0 / K), means=means,
                              var=sigma0 ** 2, labels=np.arange(K))
    ys = _balanced_labels(n, K)
    xs = means[ys] + sigma0 * rng.standard_normal(n, 2)
    return ToyDataset(kind="gmm2d", xs=xs, ys=ys, mixture=mixture)


def gmm2d_density(mixture: GaussianMixture, x: np.ndarray) -> np.ndarray:
    """Mixture density on 2-D points (rows)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    sq = np.sum((x[:, None, :] - mixture.means[None, :, :]) ** 2, axis=-1)
    return np.sum(mixture.weights[None, :] * np.exp(-sq / (2 * mixture.var))
                  / (2 * np.pi * mixture.var), axis=1)


def _draw_square(img: np.ndarray, rng: Rng):
    side = int(rng.integers(4, 9))
    r = int(rng.integers(2, SHAPES_SIDE - 2 - side + 1))
    c = int(rng.integers(2, SHAPES_SIDE - 2 - side + 1))
    img[r:r + side, c:c + side] = 1.0


def _draw_disk(img: np.ndarray, rng: Rng):
    rad = int(rng.integers(2, 6))
    cr = int(rng.integers(2 + rad, SHAPES_SIDE - 2 - rad))
    cc = int(rng.integers(2 + rad, SHAPES_SIDE - 2 - rad))
    ii, jj = np.ogrid[:SHAPES_SIDE, :SHAPES_SIDE]
    img[(ii - cr) ** 2 + (jj - cc) ** 2 <= rad * rad] = 1.0


def _draw_cross(img: np.ndarray, rng: Rng):
    arm = int(rng.integers(3, 6))
    cr = int(rng.integers(2 + arm, SHAPES_SIDE - 2 - arm))
    cc = int(rng.integers(2 + arm, SHAPES_SIDE - 2 - arm))
    img[cr - arm:cr + arm + 1, cc - 1:cc + 1] = 1.0
    img[cr - 1:cr + 1, cc - arm:cc + arm + 1] = 1.0


_DRAWERS = {"square": _draw_square, "disk": _draw_disk, "cross": _draw_cross}


def make_shapes16(n: int, noise: float, rng: Rng,
                  classes=SHAPE_CLASSES) -> ToyDataset:
    """Procedural 16x16 shape images flattened to 256-dim vectors in [0, 1].
    Shapes stay at least 2 px from the border; additive noise is clipped."""
    if not 0.0 <= noise <= 0.2:
        raise ValueError("noise must lie in [0, 0.2]")
    for c in classes:
        if c not in _DRAWERS:
            raise ValueError(f"unknown shape class {c!r}")
    ys = _balanced_labels(n, len(classes))
    xs = np.empty((n, SHAPES_SIDE * SHAPES_SIDE))
    for i in range(n):
        img = np.zeros((SHAPES_SIDE, SHAPES_SIDE))
        _DRAWERS[classes[ys[i]]](img, rng)
        if noise > 0.0:
            img = np.clip(img + noise * rng.standard_normal(SHAPES_SIDE, SHAPES_SIDE),
                          0.0, 1.0)
        xs[i] = img.ravel()
    return ToyDataset(kind="shapes16", xs=xs, ys=ys, bounds=(0.0, 1.0))


def save_dataset(path, ds: ToyDataset) -> None:
    lines = [f"{DATA_MAGIC} {ds.kind} {ds.dim} {ds.n} {ds.n_classes}"]
    for x, y in zip(ds.xs, ds.ys):
        lines.append(str(int(y)) + " " + " ".join(format(v, ".17g") for v in x))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset(path) -> ToyDataset:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    head = lines[0].split()
    if " ".join(head[:2]) != DATA_MAGIC:
        raise ValueError(f"not a {DATA_MAGIC} file: {path}")
    kind, d, n, k = head[2], int(head[3]), int(head[4]), int(head[5])
    xs = np.empty((n, d))
    ys = np.empty(n, dtype=int)
    for i in range(n):
        parts = lines[1 + i].split()
        ys[i] = int(parts[0])
        xs[i] = [float(v) for v in parts[1:]]
    if int(ys.max()) + 1 > k:
        raise ValueError("labels exceed declared class count")
    bounds = (0.0, 1.0) if kind == "shapes16" else None
    return ToyDataset(kind=kind, xs=xs, ys=ys, bounds=bounds)


def write_pgm(path, image: np.ndarray, maxval: int = 255) -> None:
    """Plain-text PGM (P2) export of a [0, 1] grayscale image."""
    img = np.asarray(image, dtype=float)
    if img.ndim == 1:
        side = int(round(np.sqrt(img.size)))
        img = img.reshape(side, side)
    pix = np.clip(np.round(img * maxval), 0, maxval).astype(int)
    lines = ["P2", f"{pix.shape[1]} {pix.shape[0]}", str(maxval)]
    lines += [" ".join(str(v) for v in row) for row in pix]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def tile_grid(images, cols: int, pad: int = 1) -> np.ndarray:
    """Tile flattened square images into one grid image with padding."""
    imgs = [np.asarray(im, dtype=float) for im in images]
    side = int(round(np.sqrt(imgs[0].size)))
    imgs = [im.reshape(side, side) for im in imgs]
    rows = (len(imgs) + cols - 1) // cols
    grid = np.zeros((rows * (side + pad) - pad, cols * (side + pad) - pad))
    for idx, im in enumerate(imgs):
        r, c = divmod(idx, cols)
        grid[r * (side + pad):r * (side + pad) + side,
             c * (side + pad):c * (side + pad) + side] = im
    return grid
