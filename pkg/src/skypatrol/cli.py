"""Command-line entry points for every pipeline stage.

Exit codes: 0 on success, 2 for usage/config mistakes, 3 for runtime
failures. Every subcommand takes --config/--seed/--out plus a few direct
overrides for its most common knobs.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, build_world, load_config
from .dataset import DatasetError, LabeledDataset, config_hash, tree_hash
from .navigator import PursuitConfig
from .seeding import rng_for

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3


class CliError(Exception):
    """Runtime failure with a user-facing message."""


def _write_json(path, payload: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")


def _require(cfg: dict, key: str):
    value = cfg.get(key)
    if not value:
        raise ConfigError(f"missing required config value: {key}")
    return value


def cmd_generate(cfg: dict, out: str) -> dict:
    from .runs import CollectConfig, collect_run, save_runs

    world = build_world(cfg["world"])
    c = cfg["collect"]
    collect = CollectConfig(
        pursuit=PursuitConfig(**c["pursuit"]), dt=c["dt"],
        frame_period_s=c["frame_period_s"], nav_speed=c["nav_speed"],
        altitude=c["altitude"], max_frames=c["max_frames"],
        route_min_length=c["route_min_length"],
        corner_radius=tuple(c["corner_radius"]) if c["corner_radius"] else None)
    seed = cfg["seed"]
    runs = []
    for i in range(int(cfg["runs"])):
        frames = collect_run(world, collect, seed=seed + i)
        if len(frames) < 2:
            raise CliError(f"run {i} lost tracking at frame {len(frames)}")
        runs.append(frames)
    world_path = Path(out) / "world.json"
    Path(out).mkdir(parents=True, exist_ok=True)
    world.save(world_path)
    save_runs(out, runs, header={
        "kind": "runs", "seed": seed, "config": cfg,
        "config_hash": config_hash(cfg), "created_unix": int(time.time()),
    })
    digest = tree_hash(out)
    return {"runs": len(runs), "frames": [len(r) for r in runs],
            "content_hash": digest, "out": str(out)}


def cmd_label(cfg: dict, out: str) -> dict:
    from .augment import augment
    from .geometry import GeometryError
    from .labeling import LabelConfig, label_sequence
    from .runs import initial_box, load_runs

    runs_dir = _require(cfg, "runs_dir")
    runs, header = load_runs(runs_dir)
    label_cfg = LabelConfig(**cfg["label"])
    seed = cfg["seed"]
    merged = None
    for i, frames in enumerate(runs):
        try:
            ds = label_sequence(frames, initial_box(frames[0]), label_cfg,
                               seed=seed + i)
        except GeometryError as exc:
            raise CliError(f"run {i}: {exc}") from exc
        for s in ds.samples:
            s.diag["run"] = i
        if merged is None:
            merged = ds
            merged.rejections = [dict(r, run=i) for r in ds.rejections]
        else:
            merged.samples.extend(ds.samples)
            merged.rejections.extend(dict(r, run=i) for r in ds.rejections)
    if merged is None:
        raise CliError("no runs to label")
    if cfg["augment"]:
        merged = augment(merged, cfg["augment"], seed=seed)
    merged.header["source_runs"] = str(runs_dir)
    merged.header["source_config_hash"] = header.get("config_hash")
    merged.save(out)
    return {"samples": len(merged.samples), "rejections": len(merged.rejections),
            "content_hash": tree_hash(out), "out": str(out)}


def cmd_train(cfg: dict, out: str) -> dict:
    from .net import NetConfig
    from .train import TrainConfig, save_training_run, train

    dataset = LabeledDataset.load(_require(cfg, "dataset"))
    n = cfg["net"]
    net_cfg = NetConfig(
        input_width=n["input_width"], input_height=n["input_height"],
        pool=n["pool"], stem_channels=n["stem_channels"],
        block_channels=n["block_channels"], dir_hidden=tuple(n["dir_hidden"]),
        trans_hidden=tuple(n["trans_hidden"]), dropout=n["dropout"])
    train_cfg = TrainConfig(seed=cfg["seed"], **cfg["train"])
    weights, history = train(dataset, train_cfg, net_cfg)
    save_training_run(weights, history, train_cfg, out)
    return {"epochs": len(history), "final": history[-1] if history else None,
            "out": str(out)}


def cmd_eval(cfg: dict, out: str) -> dict:
    from .metrics import (EvalError, _predicted_direction, evaluate,
                          labeling_error_histogram, random_baseline)
    from .net import (GmmParams, Prediction, load_weights, predict_arrays,
                      preprocess)

    dataset = LabeledDataset.load(_require(cfg, "dataset"))
    if not dataset.samples:
        raise CliError("dataset has no samples to evaluate")
    labels = dataset.samples
    mode = cfg["mode"]
    if cfg["self_eval"]:
        preds = [Prediction(
            gmm=GmmParams(phi=np.array([1.0, 0.0, 0.0]),
                          mu=np.array([s.d, 0.0, 0.0]), sigma=0.1),
            t_hat=s.t) for s in labels]
        weights_hash = None
    else:
        weights = load_weights(_require(cfg, "weights"))
        x = np.stack([preprocess(s.frame, weights.config) for s in labels])
        phi, mu, t_hat = predict_arrays(weights, x)
        preds = [Prediction(gmm=GmmParams(phi=phi[i], mu=mu[i],
                                          sigma=weights.sigma),
                            t_hat=float(t_hat[i])) for i in range(len(labels))]
        weights_hash = config_hash(weights.config.to_dict())
    report = evaluate(preds, labels, mode=mode)
    baseline = random_baseline(labels, seed=cfg["seed"], mode=mode)
    payload = {"report": report.to_dict(), "baseline": baseline.to_dict(),
               "weights_hash": weights_hash, "mode": mode}
    try:
        payload["label_histogram"] = labeling_error_histogram(dataset)
    except EvalError:
        payload["label_histogram"] = None  # dataset without ground truth
    out_dir = Path(out)
    _write_json(out_dir / "report.json", payload)
    rows = ["d,t,d_pred,t_hat"]
    for p, s in zip(preds, labels):
        d_pred = _predicted_direction(p, s.d, mode, 0.5, 256)
        rows.append(f"{s.d:.9g},{s.t:.9g},{d_pred:.9g},{p.t_hat:.9g}")
    (out_dir / "predictions.csv").write_text("\n".join(rows) + "\n")
    return {"acc_d": report.acc_d, "acc_t": report.acc_t,
            "baseline_acc_d": baseline.acc_d, "out": str(out)}


def _load_schedule(path) -> tuple:
    from .controller import UserInstruction

    entries = []
    with open(path) as f:
        for ln, line in enumerate(f):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if row.get("type") not in (None, "instruct"):
                raise CliError(f"schedule line {ln}: unsupported type {row.get('type')!r}")
            instr = UserInstruction(
                x=float(row["x"]), y=float(row["y"]), du=float(row["du"]),
                radius=float(row.get("radius", 1000.0)),
                ident=int(row.get("id", ln)))
            entries.append((int(row.get("tick", 0)), instr))
    return tuple(entries)


def cmd_patrol(cfg: dict, out: str) -> dict:
    from .drone import DronePose
    from .metrics import score_patrol
    from .net import load_weights
    from .runs import PatrolConfig, patrol_run

    weights = load_weights(_require(cfg, "weights"))
    world = build_world(cfg["world"])
    p = cfg["patrol"]
    patrol_cfg = PatrolConfig(
        dt=p["dt"], control_period_s=p["control_period_s"],
        altitude=p["altitude"], max_steps=p["max_steps"],
        lost_threshold_m=p["lost_threshold_m"], s_max=p["s_max"],
        texture_seed=p["texture_seed"])
    schedule = _load_schedule(cfg["schedule"]) if cfg["schedule"] else ()
    start = None
    if cfg["start"] is not None:
        s = cfg["start"]
        start = DronePose(float(s["x"]), float(s["y"]), float(s["yaw"]),
                          p["altitude"])
    trace = patrol_run(world, weights, patrol_cfg, schedule=schedule,
                       seed=cfg["seed"], start=start)
    score = score_patrol(trace.poses, world,
                         lost_threshold_m=p["lost_threshold_m"])
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "trace.jsonl", "w") as f:
        for pose, tele in zip(trace.poses[1:], trace.telemetry):
            f.write(json.dumps({
                "tick": tele["tick"], "x": round(pose.x, 9), "y": round(pose.y, 9),
                "yaw": round(pose.yaw, 9), "chosen": tele["chosen"],
                "candidates": tele["candidates"], "command": tele["command"],
                "instruction": tele["instruction"],
            }, sort_keys=True, separators=(",", ":")) + "\n")
    _write_json(out_dir / "score.json", {
        "lost": trace.lost, "ticks": trace.ticks, **score.to_dict()})
    return {"direction_score": score.direction_score,
            "translation_score": score.translation_score,
            "lost": trace.lost, "steps": len(trace.telemetry), "out": str(out)}


def cmd_serve(cfg: dict, out: str | None) -> dict:
    from .service import serve

    return serve(cfg)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skypatrol",
        description="drone patrol laboratory: simulate, label, train, patrol")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, help="override config seed")
        p.add_argument("--out", required=out_required, help="output directory")

    p = sub.add_parser("generate", help="film seeded tracking runs")
    common(p)
    p.add_argument("--world", dest="world_kind", help="world kind override")
    p.add_argument("--runs", dest="runs_n", type=int, help="number of runs")

    p = sub.add_parser("label", help="auto-label a run directory")
    common(p)
    p.add_argument("--runs", dest="runs_dir", help="generate output to label")

    p = sub.add_parser("train", help="train the patrol network")
    common(p)
    p.add_argument("--dataset", help="labeled dataset directory")
    p.add_argument("--epochs", type=int, help="override epoch count")

    p = sub.add_parser("eval", help="score predictions on a dataset")
    common(p)
    p.add_argument("--dataset", help="labeled dataset directory")
    p.add_argument("--weights", help="trained weights file")
    p.add_argument("--mode", choices=("nearest", "argmax"))
    p.add_argument("--self", dest="self_eval", action="store_true",
                   help="evaluate the labels against themselves")

    p = sub.add_parser("patrol", help="closed-loop patrol run")
    common(p)
    p.add_argument("--weights", help="trained weights file")
    p.add_argument("--world", dest="world_kind", help="world kind override")
    p.add_argument("--schedule", help="instruction schedule JSONL")

    p = sub.add_parser("serve", help="live session over a websocket")
    common(p, out_required=False)
    p.add_argument("--port", type=int)
    p.add_argument("--weights", help="weights for patrol mode")
    p.add_argument("--world", dest="world_kind", help="world kind override")
    p.add_argument("--mode", choices=("track", "patrol", "paused"))
    return parser


_OVERRIDE_PATHS = {
    "seed": "seed", "world_kind": "world.kind", "runs_n": "runs",
    "runs_dir": "runs_dir", "dataset": "dataset", "weights": "weights",
    "epochs": "train.epochs", "mode": "mode", "schedule": "schedule",
    "port": "port", "self_eval": "self_eval",
}

_HANDLERS = {
    "generate": cmd_generate, "label": cmd_label, "train": cmd_train,
    "eval": cmd_eval, "patrol": cmd_patrol, "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    overrides = []
    for attr, dotted in _OVERRIDE_PATHS.items():
        value = getattr(args, attr, None)
        if attr == "mode" and args.subcommand == "serve":
            dotted = "mode"
        if attr == "self_eval" and not value:
            continue
        if value is not None:
            overrides.append((dotted, value))
    try:
        cfg = load_config(args.subcommand, args.config, overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        result = _HANDLERS[args.subcommand](cfg, args.out)
    except (ConfigError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CliError, DatasetError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(result, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
