"""Command line: ``mmodom {generate,train,eval,masks,export-traj}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
The log level is read from ``MMODOM_LOG_LEVEL`` (default INFO).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .errors import ConfigError, DataError, NumericalError
from .evalkit import aggregate, predict_scene, write_report
from .experiment import evaluate_scenes, training_weights
from .fusion import MODALITIES, effective_mask
from .geom import write_trajectory
from .head import PoseWeights
from .learn.checkpoint import Checkpoint, load_checkpoint
from .learn.model import ModelConfig, param_shapes
from .learn.train import train, untrained_checkpoint, write_loss_csv
from .scene import find_scenes, read_scene, write_scene
from .synthsim import WEATHERS, generate_scene

log = logging.getLogger("mmodom")


def _scene_dirs(cfg: RunConfig, split: str, override: str | None) -> list[Path]:
    root = Path(override) if override else Path(cfg.scenes_dir) / split
    dirs = find_scenes(root)
    if not dirs:
        raise DataError(f"no scenes found under {root}")
    return dirs


def _load_scenes(dirs):
    return [read_scene(d) for d in dirs]


def cmd_generate(cfg: RunConfig, args) -> int:
    out = Path(args.out or cfg.scenes_dir)
    for split, sc in cfg.scenarios():
        scene = generate_scene(sc)
        d = write_scene(scene, out / split / sc.name)
        length = scene.trajectory().cumulative_arclength[-1]
        print(f"{split:5s} {sc.name:16s} weather={scene.weather:8s} frames={len(scene):4d} "
              f"path={length:7.1f} m -> {d}")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    scenes = _load_scenes(_scene_dirs(cfg, "train", args.scenes))
    weights = training_weights(cfg, scenes)
    run = Path(args.out or cfg.run_dir)
    run.mkdir(parents=True, exist_ok=True)
    resume = load_checkpoint(args.resume, cfg.train.dtype) if args.resume else None
    log.info("training on %d scenes, pose weights %s", len(scenes), np.round(weights.weights, 4).tolist())
    res = train(scenes, cfg.model, cfg.train, weights, resume=resume, checkpoint_path=run / "checkpoint.bin")
    write_loss_csv(res.step_losses, run / "loss.csv")
    with open(run / "epoch_loss.csv", "w") as fh:
        fh.write("epoch,loss\n")
        for i, l in enumerate(res.epoch_losses, 1):
            fh.write(f"{i},{l!r}\n")
    print(f"trained {len(res.epoch_losses)} epochs: loss {res.epoch_losses[0]:.6g} -> "
          f"{res.epoch_losses[-1]:.6g}; checkpoint {run / 'checkpoint.bin'}")
    return 0


def checkpoint_model(ck: Checkpoint) -> ModelConfig:
    try:
        m = dict(ck.config["model"])
        return ModelConfig(**m)
    except (KeyError, TypeError) as e:
        raise DataError(f"checkpoint has no usable model configuration: {e}") from e


def _check_compatible(ck: Checkpoint, mc: ModelConfig, scenes):
    want = dict(param_shapes(mc))
    got = {k: tuple(v.shape) for k, v in ck.params.items()}
    if want != got:
        raise DataError("checkpoint tensors do not match its declared model dimensions")
    for s in scenes:
        if (s.n_keypoints, s.desc_dim, s.image_shape) != (mc.n_keypoints, mc.desc_dim, mc.image_size):
            raise DataError(
                f"scene {s.name!r} has N={s.n_keypoints}, D={s.desc_dim}, image {s.image_shape}; "
                f"checkpoint expects N={mc.n_keypoints}, D={mc.desc_dim}, image {mc.image_size}"
            )


def _load_model(path, cfg: RunConfig, scenes):
    if path == "untrained":
        ck = untrained_checkpoint(cfg.model, cfg.train, PoseWeights())
    else:
        ck = load_checkpoint(path)
    mc = checkpoint_model(ck)
    _check_compatible(ck, mc, scenes)
    return ck, mc


def _side_by_side(ours, base) -> str:
    lines = ["group,t_err_ours,t_err_base,r_err_ours_deg_per_100m,r_err_base_deg_per_100m"]
    b = {r[0]: r for r in base.rows()}
    for g, t, r, _ in ours.rows():
        if g in b:
            lines.append(f"{g},{t!r},{b[g][1]!r},{r!r},{b[g][2]!r}")
    return "\n".join(lines) + "\n"


def cmd_eval(cfg: RunConfig, args) -> int:
    scenes = _load_scenes(_scene_dirs(cfg, "test", args.scenes))
    out = Path(args.out or cfg.reports_dir)
    out.mkdir(parents=True, exist_ok=True)
    weathers = [w for w in WEATHERS if any(s.weather == w for s in scenes)]
    if args.oracle:
        ck = mc = None
    else:
        if not args.checkpoint:
            raise ConfigError("eval needs --checkpoint (or --oracle)")
        ck, mc = _load_model(args.checkpoint, cfg, scenes)
    samples = evaluate_scenes(ck, mc, scenes, cfg.lengths, out / "trajectories")
    by_len = aggregate(samples, "length")
    by_w = aggregate(samples, "weather", weathers)
    write_report(by_len, out / "by_length.csv")
    write_report(by_w, out / "by_weather.csv")
    if args.baseline_checkpoint:
        bck, bmc = _load_model(args.baseline_checkpoint, cfg, scenes)
        bs = evaluate_scenes(bck, bmc, scenes, cfg.lengths, out / "trajectories", tag="baseline")
        b_len, b_w = aggregate(bs, "length"), aggregate(bs, "weather", weathers)
        write_report(b_len, out / "by_length_baseline.csv")
        write_report(b_w, out / "by_weather_baseline.csv")
        (out / "table_by_length.csv").write_text(_side_by_side(by_len, b_len))
        (out / "table_by_weather.csv").write_text(_side_by_side(by_w, b_w))
    print(by_len.to_csv() + "\n" + by_w.to_csv(), end="")
    return 0


def mask_rows(scene, masks: dict[str, np.ndarray]) -> list[str]:
    rows = []
    names = list(masks)
    T = next(iter(masks.values())).shape[0]
    for t in range(T):
        for k in names:
            v = masks[k][t]
            rows.append(f"{scene.name},{scene.weather},{t},{k},{float(v.mean())!r},{' '.join(repr(float(x)) for x in v)}")
    for k in names:
        rows.append(f"{scene.name},{scene.weather},summary,{k},{float(masks[k].mean())!r},")
    for m in MODALITIES:
        rows.append(f"{scene.name},{scene.weather},summary,effective_{m},{float(effective_mask(masks, m).mean())!r},")
    return rows


def cmd_masks(cfg: RunConfig, args) -> int:
    dirs = [Path(p) for p in args.scene] if args.scene else _scene_dirs(cfg, "test", None)
    scenes = _load_scenes(dirs)
    ck, mc = _load_model(args.checkpoint or "untrained", cfg, scenes)
    out = Path(args.out or Path(cfg.reports_dir) / "masks.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = ["scene,weather,frame,mask,mean,values"]
    for s in scenes:
        p = predict_scene(ck.params, s, mc)
        lines += mask_rows(s, p.masks)
        summ = ", ".join(f"{m}={effective_mask(p.masks, m).mean():.4f}" for m in MODALITIES)
        print(f"{s.name} ({s.weather}): mean effective mask {summ}")
    out.write_text("\n".join(lines) + "\n")
    return 0


def cmd_export_traj(cfg: RunConfig, args) -> int:
    scene = read_scene(args.scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory(scene.trajectory(), out / f"{scene.name}_gt.txt")
    if args.checkpoint:
        ck, mc = _load_model(args.checkpoint, cfg, [scene])
        write_trajectory(predict_scene(ck.params, scene, mc).trajectory, out / f"{scene.name}_pred.txt")
    print(f"wrote trajectories for {scene.name} to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmodom", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="YAML run configuration")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field, e.g. train.epochs=3 (repeatable)")
    common.add_argument("--seed", type=int, help="shorthand for --set seed=N")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write synthetic scenes")
    g.add_argument("--out", help="scene root (default: scenes_dir)")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", parents=[common], help="train on <scenes>/train")
    t.add_argument("--scenes", help="directory of training scenes")
    t.add_argument("--out", help="run directory (default: run_dir)")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common], help="drift reports on <scenes>/test")
    e.add_argument("--checkpoint", help="checkpoint path, or 'untrained'")
    e.add_argument("--baseline-checkpoint", help="second checkpoint for side-by-side columns")
    e.add_argument("--oracle", action="store_true", help="use ground-truth poses as the prediction")
    e.add_argument("--scenes", help="directory of evaluation scenes")
    e.add_argument("--out", help="report directory (default: reports_dir)")
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("masks", parents=[common], help="dump attention masks per frame")
    m.add_argument("--checkpoint", help="checkpoint path (default: untrained)")
    m.add_argument("--scene", action="append", help="scene directory (repeatable)")
    m.add_argument("--out", help="CSV path (default: <reports_dir>/masks.csv)")
    m.set_defaults(func=cmd_masks)

    x = sub.add_parser("export-traj", parents=[common], help="export trajectories of one scene")
    x.add_argument("--scene", required=True)
    x.add_argument("--checkpoint")
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_export_traj)
    return p


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("MMODOM_LOG_LEVEL", "INFO").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        overrides = list(args.set) + ([f"seed={args.seed}"] if args.seed is not None else [])
        cfg = load_config(args.config, overrides)
        return args.func(cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return 3
    except NumericalError as e:
        print(f"numerical failure (stage {e.stage}): {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
