"""Command-line entry point: datasets, training, counterfactual generation,
ablation grids, and the crossover evaluation, all driven by a flat
``key = value`` config file and a seed, writing static artifacts into a run
directory that suffices to replay the run bit-identically.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__
from .baselines import blended_vce, scaled_radius_grid, svce
from .classifier import (AdvTrainConfig, BayesGmmClassifier, NetClassifier,
                         adversarial_train, load_classifier, save_classifier,
                         train_classifier)
from .denoiser import (AnalyticGmmDenoiser, TrainConfig, load_denoiser,
                       save_denoiser, train_denoiser)
from .datasets import (load_dataset, make_gmm2d, make_shapes16, save_dataset,
                       tile_grid, write_pgm)
from .evaluation import crossover_evaluation
from .guidance import GuidanceConfig
from .numerics import Rng
from .sampler import generate_dvce
from .schedule import build_linear_schedule

DEFAULTS = {
    "schedule.T": "200",
    "schedule.beta_start": "0.0001",
    "schedule.beta_end": "0.02",
    "guidance.cc": "0.1",
    "guidance.cd": "0.15",
    "guidance.cone_angle": "30",
    "guidance.eta": "0.5",
    "guidance.distance": "l1",
    "guidance.variance_mode": "fixed-small",
    "data.kind": "gmm2d",
    "data.n": "200",
    "data.classes": "2",
    "data.separation": "1.5",
    "data.sigma0": "1.0",
    "data.noise": "0.05",
    "train.epochs": "100",
    "train.batch_size": "64",
    "train.lr": "0.001",
    "train.hidden": "64,64",
    "adv.radius": "0.5",
    "adv.steps": "5",
    "adv.step_size": "0.2",
    "generate.count": "20",
    "blended.cc": "800",
    "blended.cd": "4",
    "eval.count": "30",
}


def parse_config_text(text: str) -> dict[str, str]:
    cfg: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line {lineno}: {raw!r}")
        key, _, value = line.partition("=")
        cfg[key.strip()] = value.strip()
    return cfg


def load_config(path: str | None) -> tuple[dict[str, str], str]:
    text = ""
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    cfg = dict(DEFAULTS)
    overrides = parse_config_text(text)
    for key in overrides:
        if key not in DEFAULTS:
            raise ValueError(f"unknown config key {key!r}")
    cfg.update(overrides)
    return cfg, text


def _guidance_config(cfg: dict[str, str]) -> GuidanceConfig:
    return GuidanceConfig(cc=float(cfg["guidance.cc"]),
                          cd=float(cfg["guidance.cd"]),
                          cone_angle_deg=float(cfg["guidance.cone_angle"]),
                          eta=float(cfg["guidance.eta"]),
                          distance_kind=cfg["guidance.distance"],
                          variance_mode=cfg["guidance.variance_mode"])


def _schedule(cfg: dict[str, str]):
    return build_linear_schedule(int(cfg["schedule.T"]),
                                 float(cfg["schedule.beta_start"]),
                                 float(cfg["schedule.beta_end"]))


def _make_dataset(cfg: dict[str, str], rng: Rng):
    if cfg["data.kind"] == "gmm2d":
        return make_gmm2d(int(cfg["data.classes"]), float(cfg["data.separation"]),
                          float(cfg["data.sigma0"]), int(cfg["data.n"]), rng)
    if cfg["data.kind"] == "shapes16":
        return make_shapes16(int(cfg["data.n"]), float(cfg["data.noise"]), rng)
    raise ValueError(f"unknown data.kind {cfg['data.kind']!r}")


def _train_config(cfg: dict[str, str]) -> TrainConfig:
    hidden = tuple(int(v) for v in cfg["train.hidden"].split(","))
    return TrainConfig(epochs=int(cfg["train.epochs"]),
                       batch_size=int(cfg["train.batch_size"]),
                       learning_rate=float(cfg["train.lr"]),
                       hidden_dims=hidden)


def _file_sha(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _write_run_metadata(out_dir: str, cfg: dict[str, str], cfg_text: str,
                        seed: int, checkpoints: dict[str, str]):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(cfg_text)
    with open(os.path.join(out_dir, "effective.cfg"), "w", encoding="utf-8") as fh:
        fh.write(f"# dvce {__version__}, seed = {seed}\n")
        for key in sorted(cfg):
            fh.write(f"{key} = {cfg[key]}\n")
    with open(os.path.join(out_dir, "versions.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"dvce {__version__}\nseed {seed}\n")
        for name, path in checkpoints.items():
            fh.write(f"{name} {path} sha256:{_file_sha(path)}\n")


def _build_models(cfg: dict[str, str], args, schedule, dataset):
    """Resolve (denoiser, target classifier, robust classifier) from
    checkpoints when given, falling back to the analytic fixtures of a
    gmm2d dataset."""
    checkpoints: dict[str, str] = {}
    if getattr(args, "denoiser", None):
        model = load_denoiser(args.denoiser, schedule)
        checkpoints["denoiser"] = args.denoiser
    elif dataset.mixture is not None:
        model = AnalyticGmmDenoiser(dataset.mixture)
    else:
        raise ValueError("a trained denoiser checkpoint is required for this dataset")
    if getattr(args, "classifier", None):
        target = load_classifier(args.classifier)
        checkpoints["classifier"] = args.classifier
    elif dataset.mixture is not None:
        target = BayesGmmClassifier(dataset.mixture)
    else:
        raise ValueError("a classifier checkpoint is required for this dataset")
    robust = None
    if getattr(args, "robust", None):
        robust = load_classifier(args.robust)
        checkpoints["robust"] = args.robust
    return model, target, robust, checkpoints


def _vce_csv(path, results, origins):
    lines = ["index,method,seed,target,confidence,l1,l15,l2"]
    from .evaluation import closeness
    for i, (res, origin) in enumerate(zip(results, origins)):
        l1, l15, l2 = closeness(res.x, origin)
        lines.append(f"{i},{res.method},{res.seed},{res.target_class},"
                     f"{res.confidence:.17g},{l1:.17g},{l15:.17g},{l2:.17g}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _parallel_map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(*it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, *it) for it in items]
        return [f.result() for f in futures]


def _pick_targets(dataset, count):
    """(index, source class, target class) triples cycling over the data."""
    k = dataset.n_classes
    triples = []
    for j in range(count):
        i = j % dataset.n
        src = int(dataset.ys[i])
        triples.append((i, src, (src + 1 + j // dataset.n) % k))
    return triples


def cmd_make_data(args) -> int:
    cfg, _ = load_config(args.config)
    ds = _make_dataset(cfg, Rng(args.seed))
    save_dataset(args.out, ds)
    print(f"wrote {ds.kind} dataset ({ds.n} x {ds.dim}) to {args.out}")
    return 0


def cmd_train_denoiser(args) -> int:
    cfg, _ = load_config(args.config)
    schedule = _schedule(cfg)
    ds = load_dataset(args.data)
    model = train_denoiser(ds.xs, schedule, _train_config(cfg), Rng(args.seed))
    save_denoiser(args.out, model, schedule)
    print(f"trained denoiser, validation loss {model.final_val_loss:.4f}; "
          f"saved to {args.out}")
    return 0


def cmd_train_classifier(args) -> int:
    cfg, _ = load_config(args.config)
    ds = load_dataset(args.data)
    model = train_classifier(ds.xs, ds.ys, _train_config(cfg), Rng(args.seed))
    save_classifier(args.out, model)
    print(f"trained classifier saved to {args.out}")
    return 0


def cmd_train_robust(args) -> int:
    cfg, _ = load_config(args.config)
    ds = load_dataset(args.data)
    tc = _train_config(cfg)
    adv = AdvTrainConfig(pgd_radius=float(cfg["adv.radius"]),
                         pgd_steps=int(cfg["adv.steps"]),
                         pgd_step_size=float(cfg["adv.step_size"]),
                         epochs=tc.epochs, learning_rate=tc.learning_rate,
                         batch_size=tc.batch_size, hidden_dims=tc.hidden_dims)
    model = adversarial_train(ds.xs, ds.ys, adv, Rng(args.seed))
    save_classifier(args.out, model)
    print(f"adversarially trained classifier saved to {args.out}")
    return 0


def cmd_generate(args) -> int:
    cfg, cfg_text = load_config(args.config)
    schedule = _schedule(cfg)
    gcfg = _guidance_config(cfg)
    rng = Rng(args.seed)
    dataset = load_dataset(args.data) if args.data else _make_dataset(cfg, rng.stream(0))
    model, target, robust, checkpoints = _build_models(cfg, args, schedule, dataset)
    count = int(cfg["generate.count"])
    triples = _pick_targets(dataset, count)

    def one(j, i, tgt):
        return generate_dvce(dataset.xs[i], tgt, target, robust, model,
                             schedule, gcfg, rng.stream(j + 1))

    results = _parallel_map(one, [(j, i, t) for j, (i, _, t) in enumerate(triples)],
                            args.jobs)
    _write_run_metadata(args.out, cfg, cfg_text, args.seed, checkpoints)
    _vce_csv(os.path.join(args.out, "vce.csv"), results,
             [dataset.xs[i] for i, _, _ in triples])
    if dataset.kind == "shapes16":
        write_pgm(os.path.join(args.out, "grid.pgm"),
                  tile_grid([r.x for r in results], cols=min(8, len(results))))
    print(f"wrote {len(results)} counterfactuals to {args.out}/vce.csv")
    return 0


def cmd_evaluate(args) -> int:
    cfg, cfg_text = load_config(args.config)
    schedule = _schedule(cfg)
    gcfg = _guidance_config(cfg)
    rng = Rng(args.seed)
    dataset = load_dataset(args.data) if args.data else _make_dataset(cfg, rng.stream(0))
    model, target, robust, checkpoints = _build_models(cfg, args, schedule, dataset)
    guide = robust if robust is not None else target
    bounds = dataset.bounds
    radius = scaled_radius_grid(dataset.dim)[-1]

    def clip(res):
        if bounds is None:
            return res
        return replace(res, x=np.clip(res.x, bounds[0], bounds[1]))

    def gen_dvce(xhat, tgt, r):
        return clip(generate_dvce(xhat, tgt, guide, None, model, schedule,
                                  gcfg, r))

    def gen_svce(xhat, tgt, r):
        return svce(xhat, tgt, guide, radius, clip_bounds=bounds, seed=r.seed)

    def gen_blended(xhat, tgt, r):
        return clip(blended_vce(xhat, tgt, guide, model, schedule,
                                float(cfg["blended.cc"]),
                                float(cfg["blended.cd"]),
                                gcfg.eta, r, gcfg.variance_mode))

    k = dataset.n_classes
    side_a = set(range(k // 2 + k % 2))
    side_b = set(range(k // 2 + k % 2, k))
    report = crossover_evaluation(
        dataset.xs, dataset.ys,
        {"dvce": gen_dvce, "svce": gen_svce, "blended": gen_blended},
        (side_a, side_b), guide, rng.stream(9999),
        n_per_method=int(cfg["eval.count"]))
    _write_run_metadata(args.out, cfg, cfg_text, args.seed, checkpoints)
    with open(os.path.join(args.out, "report.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(report.csv_rows()) + "\n")
    with open(os.path.join(args.out, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.text_summary() + "\n")
    print(report.text_summary())
    return 0


ABLATION_AXES = {"cone-angle": "guidance.cone_angle", "cd": "guidance.cd",
                 "eta": "guidance.eta"}


def cmd_ablate(args) -> int:
    cfg, cfg_text = load_config(args.config)
    if args.axis not in ABLATION_AXES:
        raise ValueError(f"unknown ablation axis {args.axis!r}")
    key = ABLATION_AXES[args.axis]
    grid = [v.strip() for v in args.grid.split(",") if v.strip()]
    schedule = _schedule(cfg)
    rng = Rng(args.seed)
    dataset = load_dataset(args.data) if args.data else _make_dataset(cfg, rng.stream(0))
    model, target, robust, checkpoints = _build_models(cfg, args, schedule, dataset)
    guide_robust = robust if robust is not None else (
        target if args.axis == "cone-angle" else None)
    count = int(cfg["generate.count"])
    triples = _pick_targets(dataset, count)

    lines = ["axis,value,mean_conf,median_l1,median_l2"]
    for value in grid:
        cfg_v = dict(cfg)
        cfg_v[key] = value
        gcfg = _guidance_config(cfg_v)
        confs, l1s, l2s = [], [], []
        for j, (i, _, tgt) in enumerate(triples):
            res = generate_dvce(dataset.xs[i], tgt, target, guide_robust,
                                model, schedule, gcfg, rng.stream(10_000 + j))
            confs.append(res.confidence)
            delta = res.x - dataset.xs[i]
            l1s.append(float(np.sum(np.abs(delta))))
            l2s.append(float(np.linalg.norm(delta)))
        lines.append(f"{args.axis},{value},{np.mean(confs):.17g},"
                     f"{np.median(l1s):.17g},{np.median(l2s):.17g}")
    _write_run_metadata(args.out, cfg, cfg_text, args.seed, checkpoints)
    with open(os.path.join(args.out, "ablation.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dvce",
                                description="diffusion counterfactuals on "
                                            "synthetic benchmarks")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True, models=True, out_dir=True):
        sp.add_argument("--config", default=None, help="key = value config file")
        sp.add_argument("--seed", type=int, default=0)
        if data:
            sp.add_argument("--data", default=None, help="DVCE-DATA v1 file")
        if models:
            sp.add_argument("--denoiser", default=None)
            sp.add_argument("--classifier", default=None)
            sp.add_argument("--robust", default=None)
        if out_dir:
            sp.add_argument("--out", required=True, help="run directory")

    sp = sub.add_parser("make-data")
    sp.add_argument("--config", default=None)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(fn=cmd_make_data)

    for name, fn in (("train-denoiser", cmd_train_denoiser),
                     ("train-classifier", cmd_train_classifier),
                     ("train-robust", cmd_train_robust)):
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--data", required=True)
        sp.add_argument("--out", required=True)
        sp.set_defaults(fn=fn)

    sp = sub.add_parser("generate")
    common(sp)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(fn=cmd_generate)

    sp = sub.add_parser("evaluate")
    common(sp)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(fn=cmd_evaluate)

    sp = sub.add_parser("ablate")
    common(sp)
    sp.add_argument("--axis", required=True)
    sp.add_argument("--grid", required=True)
    sp.set_defaults(fn=cmd_ablate)
    return p


def run(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.fn(args)
    except (ValueError, OSError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))
