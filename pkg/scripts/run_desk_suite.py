#!/usr/bin/env python3
"""Generate the weather suite, train both fusion modes and print the A/B tables.

    python scripts/run_desk_suite.py -c configs/desk.yaml --out runs/desk
"""
import argparse
import logging
from pathlib import Path

from mmodom.config import load_config
from mmodom.experiment import run_desk_suite
from mmodom.fusion import MODALITIES


def table(title, reports):
    names = list(reports)
    rows = {name: {r[0]: r for r in rep.rows()} for name, rep in reports.items()}
    groups = list(rows[names[0]])
    head = f"{'':10s}" + "".join(f"{n + ' t%':>16s}{n + ' r':>16s}" for n in names)
    lines = [title, head]
    for g in groups:
        cells = "".join(f"{rows[n][g][1]:16.2f}{rows[n][g][2]:16.2f}" if g in rows[n] else " " * 32 for n in names)
        lines.append(f"{g:10s}{cells}")
    return "\n".join(lines)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("-c", "--config", default="configs/desk.yaml")
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--modes", nargs="+", default=["two_stage", "baseline"])
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = load_config(args.config, args.set)
    res = run_desk_suite(cfg, args.out, tuple(args.modes))

    out = []
    by_len = {"untrained": res.untrained_by_length, **{m: r.by_length for m, r in res.modes.items()}}
    by_w = {"untrained": res.untrained_by_weather, **{m: r.by_weather for m, r in res.modes.items()}}
    out.append(table("drift by length (t_err %, r_err deg/100 m)", by_len))
    out.append(table("drift by weather (t_err %, r_err deg/100 m)", by_w))
    for mode, r in res.modes.items():
        losses = r.train.epoch_losses
        block = [f"{mode}: {len(losses)} epochs in {r.seconds:.0f} s, loss {losses[0]:.4g} -> {losses[-1]:.4g}",
                 "  mean effective masks"]
        block += [f"  {w:10s}" + "".join(f"  {k}={m[k]:.4f}" for k in MODALITIES) for w, m in r.masks.items()]
        out.append("\n".join(block))
    text = "\n\n".join(out) + "\n"
    print(text)
    Path(args.out, "summary.txt").write_text(text)


if __name__ == "__main__":
    main()
