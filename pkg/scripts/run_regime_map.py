#!/usr/bin/env python3
"""Run the default bias map and summarize its regime structure.

Produces the sweep CSV plus a terminal summary: regime populations, the
blocked-regime field orientation, the passing-regime direction span and the
field-magnitude ratio between passing and blocked regimes.

Usage:
    python scripts/run_regime_map.py [--config FILE] [--jobs N] [--out PREFIX]
"""

from __future__ import annotations

import argparse
import math
import sys
import time

import numpy as np

from pillartune.config import load_run_config
from pillartune.device import build_geometry, generate_mesh
from pillartune.tuner import run_bias_sweep, write_sweep_csv


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--config")
    ap.add_argument("--jobs", type=int, default=4)
    ap.add_argument("--out", default="regime_map")
    args = ap.parse_args()

    cfg = load_run_config(args.config)
    mesh = generate_mesh(build_geometry(cfg.geometry), cfg.mesh_edge)
    print(f"mesh: {mesh.n_nodes} nodes, {mesh.n_cells} cells")

    t0 = time.perf_counter()
    result = run_bias_sweep(
        cfg.sweep, mesh, cfg.materials, cfg.exciton, cfg.solver,
        jobs=args.jobs, extra_meta={"config_hash": cfg.config_hash},
    )
    print(f"sweep: {len(result.records)} cells in {time.perf_counter() - t0:.1f} s, "
          f"{result.metadata['n_failed']} failed")

    path = f"{args.out}_{cfg.config_hash}.csv"
    write_sweep_csv(result, path)
    print(f"written: {path}")

    recs = result.ok_records()
    counts = {k: sum(1 for r in recs if r.region == k) for k in (1, 2, 3, 4)}
    print(f"regimes: {counts}")

    uc = np.array([
        math.cos(cfg.geometry.ridge_angles[2]),
        math.sin(cfg.geometry.ridge_angles[2]),
    ])
    blocked = [r for r in recs if r.region == 1 and r.va <= 0 and r.vb <= 0]
    blocked.sort(key=lambda r: -np.hypot(r.ex, r.ey))
    devs = []
    for r in blocked[:20]:
        e = np.array([r.ex, r.ey])
        norm = np.linalg.norm(e)
        if norm > 0:
            devs.append(math.degrees(math.asin(min(abs(float(e @ uc)) / norm, 1.0))))
    if devs:
        print(f"blocked-regime field vs normal-to-C: worst {max(devs):.2f} deg "
              f"over {len(devs)} points")

    angles = np.sort(np.mod(
        [math.atan2(r.ey, r.ex) for r in recs if r.region == 2], 2 * math.pi
    ))
    if len(angles) > 1:
        gaps = np.diff(angles, append=angles[0] + 2 * math.pi)
        print(f"region-2 direction span: {(2 * math.pi - gaps.max()) / math.pi:.3f} pi")

    passing = max(np.hypot(r.ex, r.ey) for r in recs if r.region in (2, 3, 4))
    blocked_max = max(np.hypot(r.ex, r.ey) for r in recs if r.region == 1)
    print(f"field ratio passing/blocked: {passing / blocked_max:.2f}")
    print(f"peak current: {max((abs(r.ia) + abs(r.ib)) for r in recs) * 1e6:.1f} uA")
    return 0


if __name__ == "__main__":
    sys.exit(main())
