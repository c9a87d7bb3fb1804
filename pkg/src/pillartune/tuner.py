"""Bias-space orchestration: grid sweeps and zero-splitting search.

Sweeps walk the (V_A, V_B) grid row by row; inside a row each solve warm
starts from its neighbour (serpentine direction alternates per row), and
rows are independent of each other, so row-parallel execution produces
byte-identical output to a serial run.  The zero-splitting search is a
multi-start simplex minimisation of the splitting norm, which is non-smooth
exactly at the sought point.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .device import MaterialParams, Mesh
from .exciton import ExcitonParams, ExcitonState, exciton_state, stark_shift
from .solver import (
    BiasPoint,
    ConvergenceError,
    FieldSolution,
    SheetSystem,
    SolverConfig,
    SolverError,
    classify_regime,
)
from .spectro import algebraic_fss

OUTPUT_GROUPS = {
    "fields": ("ex", "ey", "ez"),
    "currents": ("ia", "ib", "ic", "i_junction"),
    "regime": ("region",),
    "fss": ("fss",),
    "theta0": ("theta0",),
    "algebraic_fss": ("algebraic_fss",),
    "stark": ("mean_energy", "stark"),
}

ALL_OUTPUTS = tuple(OUTPUT_GROUPS)

_BASE_COLUMNS = ("va", "vb", "vc", "status", "iters", "residual")


class TunerError(RuntimeError):
    pass


@dataclass(frozen=True)
class SweepSpec:
    """Rectangular (V_A, V_B) grid with a fixed or floating V_C."""

    va_start: float = -1.0
    va_stop: float = 6.0
    va_step: float = 0.175
    vb_start: float = -1.0
    vb_stop: float = 6.0
    vb_step: float = 0.175
    vc: float | None = None
    outputs: tuple[str, ...] = ALL_OUTPUTS

    def __post_init__(self) -> None:
        for start, stop, step, name in (
            (self.va_start, self.va_stop, self.va_step, "va"),
            (self.vb_start, self.vb_stop, self.vb_step, "vb"),
        ):
            if not (step > 0.0):
                raise ValueError(f"{name}_step must be positive")
            if stop < start:
                raise ValueError(f"{name} range is empty")
        unknown = set(self.outputs) - set(ALL_OUTPUTS)
        if unknown:
            raise ValueError(f"unknown sweep outputs: {sorted(unknown)}")

    @staticmethod
    def _axis(start: float, stop: float, step: float) -> np.ndarray:
        n = int(math.floor((stop - start) / step * (1.0 + 1e-12))) + 1
        return start + np.arange(n) * step

    def va_values(self) -> np.ndarray:
        return self._axis(self.va_start, self.va_stop, self.va_step)

    def vb_values(self) -> np.ndarray:
        return self._axis(self.vb_start, self.vb_stop, self.vb_step)

    def columns(self) -> tuple[str, ...]:
        cols = list(_BASE_COLUMNS)
        for group in ALL_OUTPUTS:  # fixed order, independent of request order
            if group in self.outputs:
                cols.extend(OUTPUT_GROUPS[group])
        return tuple(cols)


@dataclass
class CellRecord:
    """One grid cell: solver outputs plus derived exciton quantities."""

    va: float
    vb: float
    vc: float | None
    status: str = "ok"
    iters: int = 0
    residual: float = float("nan")
    ex: float = float("nan")
    ey: float = float("nan")
    ez: float = float("nan")
    ia: float = float("nan")
    ib: float = float("nan")
    ic: float = float("nan")
    i_junction: float = float("nan")
    region: int | None = None
    fss: float = float("nan")
    theta0: float | None = None
    mean_energy: float = float("nan")
    stark: float = float("nan")
    algebraic_fss: float = float("nan")

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class SweepResult:
    spec: SweepSpec
    records: list[CellRecord]          # row-major: vb outer, va inner
    metadata: dict = field(default_factory=dict)

    def grid_shape(self) -> tuple[int, int]:
        return (len(self.spec.vb_values()), len(self.spec.va_values()))

    def record(self, i_vb: int, i_va: int) -> CellRecord:
        return self.records[i_vb * self.grid_shape()[1] + i_va]

    def ok_records(self) -> list[CellRecord]:
        return [r for r in self.records if r.ok]


@dataclass
class TuneResult:
    bias: tuple[float, float, float | None]
    achieved_fss: float
    theta_before: float | None
    theta_after: float | None
    rotation: float | None
    crossing_verified: bool
    mean_energy: float
    iterations: int
    converged: bool

    def to_dict(self) -> dict:
        va, vb, vc = self.bias
        return {
            "va": va,
            "vb": vb,
            "vc": "floating" if vc is None else vc,
            "achieved_fss_uev": self.achieved_fss,
            "theta_before_rad": self.theta_before,
            "theta_after_rad": self.theta_after,
            "rotation_rad": self.rotation,
            "crossing_verified": self.crossing_verified,
            "mean_energy_ev": self.mean_energy,
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class RotationCheck:
    rotation: float | None     # rad, folded to [0, pi/2]
    crossing: bool
    status: str                # "ok" or "indeterminate"


@dataclass(frozen=True)
class IsoFssPair:
    index_a: int
    index_b: int
    bias_a: tuple[float, float, float | None]
    bias_b: tuple[float, float, float | None]
    fss_a: float
    fss_b: float
    energy_separation_uev: float

    def to_dict(self) -> dict:
        def b(t):
            return {"va": t[0], "vb": t[1], "vc": "floating" if t[2] is None else t[2]}

        return {
            "index_a": self.index_a,
            "index_b": self.index_b,
            "bias_a": b(self.bias_a),
            "bias_b": b(self.bias_b),
            "fss_a_uev": self.fss_a,
            "fss_b_uev": self.fss_b,
            "energy_separation_uev": self.energy_separation_uev,
        }


def _fill_record(
    rec: CellRecord,
    sol: FieldSolution,
    state: ExcitonState,
    params: ExcitonParams,
    theta_ref: float,
    i_threshold: float,
) -> None:
    rec.iters = sol.newton_iters
    rec.residual = sol.residual
    rec.ex, rec.ey = sol.e_inplane
    rec.ez = sol.e_z
    rec.ia, rec.ib, rec.ic = sol.i_a, sol.i_b, sol.i_c
    rec.i_junction = sol.i_junction
    rec.region = classify_regime(sol, i_threshold)
    rec.fss = state.fss
    rec.theta0 = state.theta0
    rec.mean_energy = state.mean_energy
    rec.stark = stark_shift(params, sol.e_z)
    rec.algebraic_fss = algebraic_fss(
        state, (theta_ref, theta_ref + 0.5 * math.pi)
    )


def zero_bias_reference(
    system: SheetSystem,
    exciton_params: ExcitonParams,
    cfg: SolverConfig,
    vc: float | None,
) -> tuple[float, ExcitonState]:
    """Eigenaxis at V_A = V_B = 0, used as the fixed algebraic basis."""
    bias = BiasPoint(0.0, 0.0, None if vc is None else 0.0)
    sol = system.solve(bias, cfg)
    state = exciton_state(
        exciton_params, (sol.e_inplane[0], sol.e_inplane[1], sol.e_z)
    )
    theta_ref = state.theta0 if state.theta0 is not None else 0.0
    return theta_ref, state


def run_bias_sweep(
    spec: SweepSpec,
    mesh: Mesh,
    materials: MaterialParams,
    exciton_params: ExcitonParams,
    cfg: SolverConfig,
    jobs: int = 1,
    extra_meta: dict | None = None,
) -> SweepResult:
    """Evaluate the grid; failed cells keep an error status instead of aborting."""
    t_start = time.perf_counter()
    system = SheetSystem(mesh, materials)
    va = spec.va_values()
    vb = spec.vb_values()
    theta_ref, state0 = zero_bias_reference(system, exciton_params, cfg, spec.vc)

    def run_row(i_row: int) -> list[CellRecord]:
        order = range(len(va)) if i_row % 2 == 0 else range(len(va) - 1, -1, -1)
        row: list[CellRecord | None] = [None] * len(va)
        phi_prev: np.ndarray | None = None
        for i_col in order:
            bias = BiasPoint(float(va[i_col]), float(vb[i_row]), spec.vc)
            rec = CellRecord(va=bias.v_a, vb=bias.v_b, vc=spec.vc)
            try:
                sol = system.solve(bias, cfg, phi0=phi_prev)
                state = exciton_state(
                    exciton_params, (sol.e_inplane[0], sol.e_inplane[1], sol.e_z)
                )
                _fill_record(
                    rec, sol, state, exciton_params, theta_ref, cfg.regime_threshold
                )
                phi_prev = sol.phi
            except SolverError as exc:
                rec.status = f"error:{type(exc).__name__}"
                phi_prev = None
            row[i_col] = rec
        return row  # type: ignore[return-value]

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_row, range(len(vb))))
    else:
        rows = [run_row(i) for i in range(len(vb))]

    records = [rec for row in rows for rec in row]
    meta = {
        "grid": [len(vb), len(va)],
        "theta_ref_rad": theta_ref,
        "zero_bias_fss_uev": state0.fss,
        "regime_threshold_a": cfg.regime_threshold,
        "mesh_nodes": mesh.n_nodes,
        "mesh_cells": mesh.n_cells,
        "n_failed": sum(1 for r in records if not r.ok),
        "elapsed_s": time.perf_counter() - t_start,
    }
    if extra_meta:
        meta.update(extra_meta)
    return SweepResult(spec=spec, records=records, metadata=meta)


# -- CSV round trip ----------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))  # builtin repr even for numpy scalars
    return str(value)


def write_sweep_csv(result: SweepResult, path: str) -> None:
    cols = result.spec.columns()
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(cols)
        for rec in result.records:
            row = []
            for col in cols:
                if col == "vc":
                    row.append("floating" if rec.vc is None else repr(float(rec.vc)))
                else:
                    row.append(_fmt(getattr(rec, col)))
            out.writerow(row)


def read_sweep_csv(path: str) -> list[CellRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TunerError(f"{path}: empty sweep CSV")
        known = set(_BASE_COLUMNS) | {
            c for cols in OUTPUT_GROUPS.values() for c in cols
        }
        bad = [h for h in header if h not in known]
        if bad:
            raise TunerError(f"{path}: unknown sweep columns {bad}")
        for row in reader:
            if not row:
                continue
            data = dict(zip(header, row))
            rec = CellRecord(
                va=float(data["va"]),
                vb=float(data["vb"]),
                vc=None if data["vc"] == "floating" else float(data["vc"]),
                status=data.get("status", "ok"),
            )
            for name in ("iters",):
                if data.get(name):
                    rec.iters = int(data[name])
            for name in (
                "residual",
                "ex",
                "ey",
                "ez",
                "ia",
                "ib",
                "ic",
                "i_junction",
                "fss",
                "mean_energy",
                "stark",
                "algebraic_fss",
            ):
                if data.get(name):
                    setattr(rec, name, float(data[name]))
            if data.get("region"):
                rec.region = int(data["region"])
            if data.get("theta0"):
                rec.theta0 = float(data["theta0"])
            records.append(rec)
    return records


# -- zero-splitting search ---------------------------------------------------


def _fold_rotation(theta_a: float, theta_b: float) -> float:
    d = abs(theta_a - theta_b) % math.pi
    return min(d, math.pi - d)


class _Objective:
    """Splitting norm versus free terminal voltages, with warm-started solves."""

    def __init__(
        self,
        system: SheetSystem,
        exciton_params: ExcitonParams,
        cfg: SolverConfig,
        start: BiasPoint,
        free: tuple[str, ...],
        bounds: tuple[float, float],
    ):
        self.system = system
        self.params = exciton_params
        self.cfg = cfg
        self.start = start
        self.free = free
        self.bounds = bounds
        self.phi_prev: np.ndarray | None = None
        self.evals = 0

    def bias_at(self, x) -> BiasPoint:
        values = {
            "A": self.start.v_a,
            "B": self.start.v_b,
            "C": self.start.v_c,
        }
        for name, v in zip(self.free, x):
            values[name] = float(v)
        return BiasPoint(values["A"], values["B"], values["C"])

    def state_at(self, x) -> ExcitonState:
        sol = self.system.solve(self.bias_at(x), self.cfg, phi0=self.phi_prev)
        self.phi_prev = sol.phi
        return exciton_state(
            self.params, (sol.e_inplane[0], sol.e_inplane[1], sol.e_z)
        )

    def __call__(self, x) -> float:
        self.evals += 1
        lo, hi = self.bounds
        clipped = np.clip(x, lo, hi)
        penalty = 1e3 * float(np.sum(np.abs(np.asarray(x) - clipped)))
        try:
            return self.state_at(clipped).fss + penalty
        except SolverError:
            self.phi_prev = None
            return 1e9 + penalty


def find_zero_fss(
    start: BiasPoint,
    free_terminals,
    tol: float,
    mesh: Mesh,
    materials: MaterialParams,
    exciton_params: ExcitonParams,
    cfg: SolverConfig | None = None,
    bounds: tuple[float, float] = (-1.0, 6.0),
    grid_points: int = 5,
    n_starts: int = 3,
    probe_step: float = 0.05,
) -> TuneResult:
    """Search the free terminal voltages for a splitting below ``tol`` (ueV).

    Derivative-free simplex minimisation restarted from the best points of a
    coarse grid over ``bounds``.  The eigenaxis swap is verified by probing
    one ``probe_step`` either side of the optimum along the approach
    direction.  A failed search returns the best candidate with
    ``converged=False``.
    """
    if not (tol > 0.0):
        raise ValueError("tol must be positive")
    free = tuple(free_terminals)
    if not free or any(t not in ("A", "B", "C") for t in free):
        raise ValueError("free_terminals must be a non-empty subset of A, B, C")
    for t in free:
        if start.terminal(t) is None:
            raise ValueError(f"free terminal {t} is floating in the start bias")
    cfg = cfg or SolverConfig()

    system = SheetSystem(mesh, materials)
    objective = _Objective(system, exciton_params, cfg, start, free, bounds)

    grid_axis = np.linspace(bounds[0], bounds[1], grid_points)
    if len(free) == 1:
        seeds = [(v,) for v in grid_axis]
    else:
        mesh_axes = np.meshgrid(*[grid_axis] * len(free), indexing="ij")
        seeds = list(zip(*(ax.ravel() for ax in mesh_axes)))
    seed_scores = [(objective(np.array(s)), s) for s in seeds]
    seed_scores.sort(key=lambda t: t[0])

    best_x = np.array(seed_scores[0][1], dtype=float)
    best_f = seed_scores[0][0]
    spacing = (bounds[1] - bounds[0]) / (grid_points - 1)

    approach = None
    for score, seed in seed_scores[:n_starts]:
        if score >= 1e9:
            continue
        x0 = np.array(seed, dtype=float)
        simplex = [x0]
        for k in range(len(free)):
            vertex = x0.copy()
            vertex[k] += 0.5 * spacing
            simplex.append(vertex)
        res = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={
                "initial_simplex": np.array(simplex),
                "xatol": 1e-4,
                "fatol": min(1e-3, 0.01 * tol),
                "maxfev": 600,
            },
        )
        if res.fun < best_f:
            best_f = float(res.fun)
            best_x = np.array(res.x, dtype=float)
            approach = best_x - x0
        if best_f < 0.25 * tol:
            break

    best_x = np.clip(best_x, bounds[0], bounds[1])
    best_state = objective.state_at(best_x)
    achieved = best_state.fss

    if approach is None or not np.any(np.abs(approach) > 1e-12):
        approach = np.ones(len(free))
    direction = approach / np.linalg.norm(approach)

    theta_before = theta_after = None
    rotation = None
    crossing = False
    try:
        state_lo = objective.state_at(best_x - probe_step * direction)
        state_hi = objective.state_at(best_x + probe_step * direction)
        theta_before, theta_after = state_lo.theta0, state_hi.theta0
        if theta_before is not None and theta_after is not None:
            rotation = _fold_rotation(theta_before, theta_after)
            crossing = rotation >= 0.5 * math.pi - 0.1
    except SolverError:
        pass

    bias = objective.bias_at(best_x)
    return TuneResult(
        bias=(bias.v_a, bias.v_b, bias.v_c),
        achieved_fss=achieved,
        theta_before=theta_before,
        theta_after=theta_after,
        rotation=rotation,
        crossing_verified=crossing,
        mean_energy=best_state.mean_energy,
        iterations=objective.evals,
        converged=achieved <= tol,
    )


def eigenaxis_rotation_check(
    path: tuple[BiasPoint, BiasPoint],
    mesh: Mesh,
    materials: MaterialParams,
    exciton_params: ExcitonParams,
    cfg: SolverConfig | None = None,
) -> RotationCheck:
    """Eigenaxis rotation between the two endpoints of a bias segment.

    The rotation is folded to [0, pi/2]; a crossing is flagged when it
    reaches pi/2 - 0.1 rad.  Degenerate endpoints give an indeterminate
    result.
    """
    cfg = cfg or SolverConfig()
    system = SheetSystem(mesh, materials)
    states = []
    for bias in path:
        sol = system.solve(bias, cfg)
        states.append(
            exciton_state(
                exciton_params, (sol.e_inplane[0], sol.e_inplane[1], sol.e_z)
            )
        )
    if any(s.theta0 is None for s in states):
        return RotationCheck(rotation=None, crossing=False, status="indeterminate")
    rotation = _fold_rotation(states[0].theta0, states[1].theta0)
    return RotationCheck(
        rotation=rotation,
        crossing=rotation >= 0.5 * math.pi - 0.1,
        status="ok",
    )


def iso_fss_points(
    sweep: SweepResult,
    target_fss: float,
    min_energy_separation: float,
    max_pairs: int | None = None,
) -> list[IsoFssPair]:
    """Grid-point pairs with similar splitting at well-separated mean energies.

    Both members must lie within 10 % of ``target_fss``; the pair qualifies
    when the mean transition energies differ by at least
    ``min_energy_separation`` (ueV).  An empty list is a valid outcome.
    """
    if not (target_fss > 0.0):
        raise ValueError("target_fss must be positive")
    candidates = [
        (i, rec)
        for i, rec in enumerate(sweep.records)
        if rec.ok
        and math.isfinite(rec.fss)
        and abs(rec.fss - target_fss) <= 0.1 * target_fss
    ]
    pairs = []
    for a in range(len(candidates)):
        ia, ra = candidates[a]
        for b in range(a + 1, len(candidates)):
            ib, rb = candidates[b]
            sep = abs(ra.mean_energy - rb.mean_energy) * 1e6
            if sep >= min_energy_separation:
                pairs.append(
                    IsoFssPair(
                        index_a=ia,
                        index_b=ib,
                        bias_a=(ra.va, ra.vb, ra.vc),
                        bias_b=(rb.va, rb.vb, rb.vc),
                        fss_a=ra.fss,
                        fss_b=rb.fss,
                        energy_separation_uev=sep,
                    )
                )
    pairs.sort(key=lambda p: (-p.energy_separation_uev, p.index_a, p.index_b))
    if max_pairs is not None:
        pairs = pairs[:max_pairs]
    return pairs
