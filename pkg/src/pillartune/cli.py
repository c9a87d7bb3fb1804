"""Command-line front end.

Subcommands: solve, sweep, fit, synth-scan, tune, iso-fss.  All artifacts
are written atomically (temp file + rename) and carry the hash of the fully
resolved configuration, so outputs from different calibrations never
collide.  Exit codes: 0 success, 2 config/input error, 3 solver failure,
4 fit failure, 5 tuner did not reach tolerance.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile

from . import __version__
from .config import ConfigError, RunConfig, load_run_config
from .device import GeometryError, MeshError, build_geometry, generate_mesh
from .exciton import exciton_state
from .solver import (
    BiasPoint,
    ConvergenceError,
    SheetSystem,
    SolverError,
    classify_regime,
)
from .spectro import (
    FitError,
    ScanInputError,
    fit_fss_sine,
    scan_from_csv,
    scan_to_csv,
    synth_polarization_scan,
)
from .tuner import (
    SweepResult,
    find_zero_fss,
    iso_fss_points,
    read_sweep_csv,
    run_bias_sweep,
    write_sweep_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_FIT = 4
EXIT_TUNER = 5


def _atomic_write(path: str, writer) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix=".part")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _write_json(path: str, payload: dict) -> None:
    def write(tmp: str) -> None:
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")

    _atomic_write(path, write)


def _parse_bias_value(text: str) -> float | None:
    if text.strip().lower() == "floating":
        return None
    return float(text)


def _load(args) -> RunConfig:
    return load_run_config(args.config)


def _mesh(cfg: RunConfig):
    return generate_mesh(build_geometry(cfg.geometry), cfg.mesh_edge)


def _bias_from_args(args, cfg: RunConfig) -> BiasPoint:
    vc = args.vc if args.vc is not None else cfg.sweep.vc
    return BiasPoint(args.va, args.vb, vc)


def cmd_solve(args) -> int:
    cfg = _load(args)
    mesh = _mesh(cfg)
    system = SheetSystem(mesh, cfg.materials)
    bias = _bias_from_args(args, cfg)
    try:
        sol = system.solve(bias, cfg.solver)
    except ConvergenceError as exc:
        print(f"solve failed: {exc}", file=sys.stderr)
        history = ", ".join(f"{r:.3e}" for r in exc.residual_history[-12:])
        print(f"residual history (tail): {history}", file=sys.stderr)
        return EXIT_SOLVER

    state = exciton_state(cfg.exciton, (sol.e_inplane[0], sol.e_inplane[1], sol.e_z))
    region = classify_regime(sol, cfg.solver.regime_threshold)
    lines = [
        ("config_hash", cfg.config_hash),
        ("va_v", bias.v_a),
        ("vb_v", bias.v_b),
        ("vc_v", "floating" if bias.v_c is None else bias.v_c),
        ("ex_v_per_m", sol.e_inplane[0]),
        ("ey_v_per_m", sol.e_inplane[1]),
        ("ez_v_per_m", sol.e_z),
        ("i_a_a", sol.i_a),
        ("i_b_a", sol.i_b),
        ("i_c_a", sol.i_c),
        ("i_junction_a", sol.i_junction),
        ("region", region),
        ("newton_iters", sol.newton_iters),
        ("residual", sol.residual),
        ("fss_uev", state.fss),
        ("theta0_rad", "undefined" if state.theta0 is None else state.theta0),
        ("mean_energy_ev", state.mean_energy),
    ]
    for key, value in lines:
        print(f"{key} = {value}")

    if args.phi_out:
        def write(tmp: str) -> None:
            with open(tmp, "w", newline="") as fh:
                fh.write("node_id,phi_v\n")
                for i, phi in enumerate(sol.phi):
                    fh.write(f"{i},{float(phi)!r}\n")

        _atomic_write(args.phi_out, write)
        print(f"potential written to {args.phi_out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    mesh = _mesh(cfg)
    result = run_bias_sweep(
        cfg.sweep,
        mesh,
        cfg.materials,
        cfg.exciton,
        cfg.solver,
        jobs=args.jobs,
        extra_meta={"config_hash": cfg.config_hash, "version": __version__},
    )
    prefix = args.out or "sweep"
    csv_path = f"{prefix}_{cfg.config_hash}.csv"
    meta_path = f"{prefix}_{cfg.config_hash}.meta.json"
    _atomic_write(csv_path, lambda tmp: write_sweep_csv(result, tmp))
    _write_json(meta_path, result.metadata)
    print(f"sweep written to {csv_path}")
    print(f"metadata written to {meta_path}")
    failed = result.metadata["n_failed"]
    if failed:
        print(f"warning: {failed} cells failed to converge", file=sys.stderr)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _load(args)
    scan = scan_from_csv(args.scan)
    result = fit_fss_sine(scan)
    print(
        f"delta_fss = {result.delta_fss:.6g} +/- {result.uncertainties[0]:.3g} ueV"
    )
    print(
        f"theta0 = {result.theta0:.6g} +/- {result.uncertainties[1]:.3g} rad"
    )
    print(f"offset = {result.offset:.6g} ueV")
    print(f"residual_rms = {result.residual_rms:.6g} ueV")
    payload = result.to_dict()
    payload["config_hash"] = cfg.config_hash
    payload["scan_file"] = os.path.basename(args.scan)
    out = args.out or f"{os.path.splitext(args.scan)[0]}_fit_{cfg.config_hash}.json"
    _write_json(out, payload)
    print(f"fit written to {out}")
    return EXIT_OK


def cmd_synth_scan(args) -> int:
    cfg = _load(args)
    mesh = _mesh(cfg)
    system = SheetSystem(mesh, cfg.materials)
    bias = _bias_from_args(args, cfg)
    sol = system.solve(bias, cfg.solver)
    seed = args.seed if args.seed is not None else cfg.seed
    scan = synth_polarization_scan(
        cfg.exciton,
        (sol.e_inplane[0], sol.e_inplane[1], sol.e_z),
        linewidth=args.linewidth,
        noise_sigma=args.noise,
        n_angles=args.n_angles,
        seed=seed,
    )
    state = exciton_state(cfg.exciton, (sol.e_inplane[0], sol.e_inplane[1], sol.e_z))
    out = args.out or f"scan_{cfg.config_hash}.csv"
    _atomic_write(out, lambda tmp: scan_to_csv(scan, tmp))
    theta = "undefined" if state.theta0 is None else f"{state.theta0:.6g}"
    print(f"true fss = {state.fss:.6g} ueV, true theta0 = {theta} rad")
    print(f"scan written to {out}")
    return EXIT_OK


def cmd_tune(args) -> int:
    cfg = _load(args)
    mesh = _mesh(cfg)
    start = BiasPoint(args.va, args.vb, args.vc if args.vc is not None else cfg.sweep.vc)
    free = tuple(t.strip().upper() for t in args.free.split(",") if t.strip())
    bounds = (
        min(cfg.sweep.va_start, cfg.sweep.vb_start),
        max(cfg.sweep.va_stop, cfg.sweep.vb_stop),
    )
    result = find_zero_fss(
        start,
        free,
        args.tol,
        mesh,
        cfg.materials,
        cfg.exciton,
        cfg.solver,
        bounds=bounds,
    )
    payload = result.to_dict()
    payload["config_hash"] = cfg.config_hash
    out = args.out or f"tune_{cfg.config_hash}.json"
    _write_json(out, payload)
    print(
        f"best point: va={result.bias[0]:.4f} vb={result.bias[1]:.4f} "
        f"fss={result.achieved_fss:.4g} ueV "
        f"(eigenaxis swap {'verified' if result.crossing_verified else 'not verified'})"
    )
    print(f"tune report written to {out}")
    if not result.converged:
        print(
            f"tuner did not reach tol={args.tol} ueV; best candidate emitted",
            file=sys.stderr,
        )
        return EXIT_TUNER
    return EXIT_OK


def cmd_iso_fss(args) -> int:
    cfg = _load(args)
    if args.sweep_csv:
        records = read_sweep_csv(args.sweep_csv)
        sweep = SweepResult(spec=cfg.sweep, records=records, metadata={})
    else:
        mesh = _mesh(cfg)
        sweep = run_bias_sweep(
            cfg.sweep, mesh, cfg.materials, cfg.exciton, cfg.solver, jobs=args.jobs
        )
    pairs = iso_fss_points(
        sweep, args.target, args.min_separation, max_pairs=args.max_pairs
    )
    payload = {
        "config_hash": cfg.config_hash,
        "target_fss_uev": args.target,
        "min_energy_separation_uev": args.min_separation,
        "n_pairs": len(pairs),
        "pairs": [p.to_dict() for p in pairs],
    }
    out = args.out or f"iso_fss_{cfg.config_hash}.json"
    _write_json(out, payload)
    print(f"{len(pairs)} pair(s) found; report written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pillartune",
        description="Three-contact micropillar device simulator and exciton tuner",
    )
    parser.add_argument("--config", help="config file (default: packaged calibration)")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one bias point")
    p.add_argument("--va", type=float, required=True)
    p.add_argument("--vb", type=float, required=True)
    p.add_argument("--vc", type=_parse_bias_value, default=None,
                   help="voltage or 'floating' (default: sweep section)")
    p.add_argument("--phi-out", help="write the full node potential as CSV")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="run the configured bias grid")
    p.add_argument("--out", help="output prefix (default 'sweep')")
    p.add_argument("--jobs", type=int, default=1, help="parallel rows")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="fit a polarization scan CSV")
    p.add_argument("scan", help="CSV with angle_rad,energy_ueV,sigma_ueV")
    p.add_argument("--out", help="output JSON path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("synth-scan", help="synthesize a polarization scan")
    p.add_argument("--va", type=float, required=True)
    p.add_argument("--vb", type=float, required=True)
    p.add_argument("--vc", type=_parse_bias_value, default=None)
    p.add_argument("--linewidth", type=float, default=60.0, help="FWHM in ueV")
    p.add_argument("--noise", type=float, default=0.3, help="noise sigma in ueV")
    p.add_argument("--n-angles", type=int, default=36)
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--out", help="output CSV path")
    p.set_defaults(func=cmd_synth_scan)

    p = sub.add_parser("tune", help="search for a zero-splitting bias point")
    p.add_argument("--tol", type=float, default=1.5, help="target fss in ueV")
    p.add_argument("--va", type=float, default=0.0, help="start V_A")
    p.add_argument("--vb", type=float, default=0.0, help="start V_B")
    p.add_argument("--vc", type=_parse_bias_value, default=None)
    p.add_argument("--free", default="A,B", help="free terminals, e.g. A,B")
    p.add_argument("--out", help="output JSON path")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("iso-fss", help="find equal-splitting pairs at distinct energies")
    p.add_argument("--target", type=float, required=True, help="target fss in ueV")
    p.add_argument("--min-separation", type=float, required=True,
                   help="minimum mean-energy separation in ueV")
    p.add_argument("--sweep-csv", help="reuse an existing sweep CSV")
    p.add_argument("--max-pairs", type=int, default=50)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="output JSON path")
    p.set_defaults(func=cmd_iso_fss)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GeometryError, MeshError, ScanInputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except FitError as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT


if __name__ == "__main__":
    sys.exit(main())
