"""Stationary potential on the conductive sheet with a distributed junction.

The top sheet conducts laterally (sheet conductance per square); every node
also drains vertically through a Shockley junction into the grounded
substrate.  Contacts are lumped: the tagged pad-edge nodes of a driven
terminal connect to the terminal voltage through one series resistance per
ridge, split evenly over the pad nodes.  A floating terminal simply has no
such connection, so it carries exactly zero current.

Discretisation is node-centred finite volume on the triangle mesh (P1
stiffness for the lateral term, lumped nodal areas for the junction term).
Newton iterations are damped with step halving; bias continuation from
equilibrium handles strongly forward-biased points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .device import MaterialParams, Mesh, cell_areas

EXP_CLAMP = 40.0
_E_CLAMP = math.exp(EXP_CLAMP)

# Fraction of the current floor below which the node-balance sum must fall
# before a solve is declared converged; keeps the Kirchhoff check at
# 1e-8 * max(|I|, current_floor) satisfiable with margin.
_KIRCHHOFF_FRACTION = 1e-9

TERMINALS = ("A", "B", "C")

FLOATING = None


class SolverError(RuntimeError):
    """Base class for solver failures."""


class ConvergenceError(SolverError):
    """Newton iteration did not reach tolerance; carries the residual history."""

    def __init__(self, message: str, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


class NumericalError(SolverError):
    """NaN or infinity appeared in the residual."""


@dataclass(frozen=True)
class BiasPoint:
    """Applied terminal potentials; ``None`` marks a floating terminal."""

    v_a: float | None
    v_b: float | None
    v_c: float | None = FLOATING

    def __post_init__(self) -> None:
        values = (self.v_a, self.v_b, self.v_c)
        if all(v is None for v in values):
            raise ValueError("at least one terminal must be driven")
        for v in values:
            if v is not None and not math.isfinite(v):
                raise ValueError("bias values must be finite")

    def terminal(self, name: str) -> float | None:
        return {"A": self.v_a, "B": self.v_b, "C": self.v_c}[name]

    def scaled(self, s: float) -> "BiasPoint":
        def f(v):
            return None if v is None else s * v

        return BiasPoint(f(self.v_a), f(self.v_b), f(self.v_c))

    def max_drive(self) -> float:
        return max(abs(v) for v in (self.v_a, self.v_b, self.v_c) if v is not None)


@dataclass(frozen=True)
class SolverConfig:
    newton_tol: float = 1e-11
    max_iters: int = 80
    damping: float = 1.0
    continuation_steps: int = 8
    current_floor: float = 1e-6     # A, smallest terminal current scale resolved
    regime_threshold: float = 5.2e-7  # A, default I_th for regime labelling

    def __post_init__(self) -> None:
        if not (self.newton_tol > 0.0):
            raise ValueError("newton_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not (0.0 < self.damping <= 1.0):
            raise ValueError("damping must lie in (0, 1]")
        if self.continuation_steps < 1:
            raise ValueError("continuation_steps must be at least 1")
        if not (self.current_floor > 0.0):
            raise ValueError("current_floor must be positive")


@dataclass(frozen=True)
class FieldSolution:
    """Converged solve at one bias point, with QD fields and terminal currents."""

    bias: BiasPoint
    phi: np.ndarray
    e_inplane: tuple[float, float]    # V/m at the QD node
    e_z: float                        # V/m at the QD node
    i_a: float
    i_b: float
    i_c: float
    i_junction: float
    newton_iters: int
    residual: float                   # scaled infinity norm at convergence

    @property
    def currents(self) -> tuple[float, float, float]:
        return (self.i_a, self.i_b, self.i_c)


def _exp_clamped(u: np.ndarray) -> np.ndarray:
    """exp(u) for u <= EXP_CLAMP, continued linearly (C^1) beyond."""
    u = np.asarray(u, dtype=float)
    out = np.exp(np.minimum(u, EXP_CLAMP))
    over = u > EXP_CLAMP
    if np.any(over):
        out = np.where(over, _E_CLAMP * (1.0 + (u - EXP_CLAMP)), out)
    return out


def _exp_clamped_deriv(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return np.exp(np.minimum(u, EXP_CLAMP))


def diode_current_density(materials: MaterialParams, phi_local):
    """Vertical junction current density (A/um^2) at sheet potential ``phi_local``.

    Shockley law with an overflow-guarded exponential: the argument is
    clamped at ``EXP_CLAMP`` and extended linearly beyond, which keeps the
    law strictly increasing and C^1 everywhere.
    """
    nvt = materials.ideality * materials.thermal_voltage
    u = np.asarray(phi_local, dtype=float) / nvt
    j = materials.saturation_current_density * (_exp_clamped(u) - 1.0)
    return j if j.shape else float(j)


def _diode_conductance(materials: MaterialParams, phi_local):
    nvt = materials.ideality * materials.thermal_voltage
    u = np.asarray(phi_local, dtype=float) / nvt
    return materials.saturation_current_density * _exp_clamped_deriv(u) / nvt


class SheetSystem:
    """Assembled operators for one mesh/material pair, reusable across solves."""

    def __init__(self, mesh: Mesh, materials: MaterialParams):
        self.mesh = mesh
        self.materials = materials
        self.n = mesh.n_nodes
        self._build_stiffness()
        self._build_node_areas()
        self._build_contacts()
        self._build_qd_gradient()

    # -- assembly -----------------------------------------------------------

    def _build_stiffness(self) -> None:
        nodes, cells = self.mesh.nodes, self.mesh.cells
        p0, p1, p2 = nodes[cells[:, 0]], nodes[cells[:, 1]], nodes[cells[:, 2]]
        area2 = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (
            p2[:, 0] - p0[:, 0]
        ) * (p1[:, 1] - p0[:, 1])
        area = 0.5 * area2
        # P1 gradients: grad N_i = (b_i, c_i)
        b = np.stack(
            [
                p1[:, 1] - p2[:, 1],
                p2[:, 1] - p0[:, 1],
                p0[:, 1] - p1[:, 1],
            ],
            axis=1,
        ) / area2[:, None]
        c = np.stack(
            [
                p2[:, 0] - p1[:, 0],
                p0[:, 0] - p2[:, 0],
                p1[:, 0] - p0[:, 0],
            ],
            axis=1,
        ) / area2[:, None]

        rows, cols, vals = [], [], []
        for i in range(3):
            for j in range(3):
                rows.append(cells[:, i])
                cols.append(cells[:, j])
                vals.append(area * (b[:, i] * b[:, j] + c[:, i] * c[:, j]))
        k = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n, self.n),
        ).tocsr()
        self.conduction = (self.materials.sheet_conductance * k).tocsr()
        self._grad_b, self._grad_c, self._cell_area = b, c, area

    def _build_node_areas(self) -> None:
        area = cell_areas(self.mesh)
        node_area = np.zeros(self.n)
        for i in range(3):
            np.add.at(node_area, self.mesh.cells[:, i], area / 3.0)
        self.node_area = node_area
        self.total_area = float(area.sum())

    def _build_contacts(self) -> None:
        self.pad_nodes: dict[str, np.ndarray] = {}
        self.pad_conductance: dict[str, float] = {}
        for name, r in zip(TERMINALS, self.materials.contact_resistance):
            ids = self.mesh.pad_nodes(f"PAD_{name}")
            self.pad_nodes[name] = ids
            # Series resistance split evenly across the pad-edge nodes.
            self.pad_conductance[name] = (
                1.0 / (r * len(ids)) if len(ids) else 0.0
            )

    def _build_qd_gradient(self) -> None:
        qd = self.mesh.qd_node
        mask = np.any(self.mesh.cells == qd, axis=1)
        tris = np.nonzero(mask)[0]
        wsum = float(self._cell_area[tris].sum())
        gx = np.zeros(self.n)
        gy = np.zeros(self.n)
        for t in tris:
            for v in range(3):
                n = self.mesh.cells[t, v]
                gx[n] += self._cell_area[t] * self._grad_b[t, v] / wsum
                gy[n] += self._cell_area[t] * self._grad_c[t, v] / wsum
        keep = np.nonzero((gx != 0.0) | (gy != 0.0))[0]
        self._qd_support = keep
        self._qd_gx = gx[keep]
        self._qd_gy = gy[keep]

    # -- physics ------------------------------------------------------------

    def _driven(self, bias: BiasPoint) -> list[tuple[str, float]]:
        out = []
        for name in TERMINALS:
            v = bias.terminal(name)
            if v is not None:
                if len(self.pad_nodes[name]) == 0:
                    raise SolverError(
                        f"terminal {name} is driven but has no contact nodes"
                    )
                out.append((name, v))
        return out

    def residual(self, phi: np.ndarray, bias: BiasPoint) -> np.ndarray:
        f = self.conduction @ phi
        f += diode_current_density(self.materials, phi) * self.node_area
        for name, v in self._driven(bias):
            ids = self.pad_nodes[name]
            f[ids] += self.pad_conductance[name] * (phi[ids] - v)
        return f

    def jacobian(self, phi: np.ndarray, bias: BiasPoint) -> sp.csr_matrix:
        diag = _diode_conductance(self.materials, phi) * self.node_area
        for name, _ in self._driven(bias):
            diag[self.pad_nodes[name]] += self.pad_conductance[name]
        return (self.conduction + sp.diags(diag)).tocsr()

    def terminal_currents(self, phi: np.ndarray, bias: BiasPoint):
        out = {}
        for name in TERMINALS:
            v = bias.terminal(name)
            if v is None:
                out[name] = 0.0
            else:
                ids = self.pad_nodes[name]
                out[name] = float(
                    np.sum(self.pad_conductance[name] * (v - phi[ids]))
                )
        i_junction = float(
            np.sum(diode_current_density(self.materials, phi) * self.node_area)
        )
        return out["A"], out["B"], out["C"], i_junction

    def field_at_qd(self, phi: np.ndarray) -> tuple[float, float]:
        """In-plane field (V/m) from the area-weighted P1 gradient at qd_node."""
        ex = -float(self._qd_gx @ phi[self._qd_support]) * 1e6
        ey = -float(self._qd_gy @ phi[self._qd_support]) * 1e6
        return ex, ey

    # -- Newton -------------------------------------------------------------

    def _residual_scale(self, bias: BiasPoint, cfg: SolverConfig) -> float:
        drive = bias.max_drive()
        return max(
            self.materials.sheet_conductance * (1.0 + drive),
            self.materials.saturation_current_density * self.total_area,
            1e-3 * cfg.current_floor,
        )

    def _newton(self, bias: BiasPoint, phi0: np.ndarray, cfg: SolverConfig):
        scale = self._residual_scale(bias, cfg)
        tol = cfg.newton_tol * scale
        balance_tol = _KIRCHHOFF_FRACTION * cfg.current_floor

        phi = phi0.copy()
        f = self.residual(phi, bias)
        norm = float(np.max(np.abs(f)))
        if not math.isfinite(norm):
            raise NumericalError("NaN in residual at Newton start")
        history = [norm / scale]

        iters = 0
        while iters < cfg.max_iters:
            if norm <= tol and abs(float(f.sum())) <= balance_tol:
                return phi, True, iters, history
            delta = spla.spsolve(self.jacobian(phi, bias).tocsc(), -f)
            if not np.all(np.isfinite(delta)):
                raise NumericalError("NaN in Newton step")
            lam = cfg.damping
            accepted = False
            while lam >= 2.0**-24:
                phi_try = phi + lam * delta
                f_try = self.residual(phi_try, bias)
                norm_try = float(np.max(np.abs(f_try)))
                if math.isfinite(norm_try) and norm_try < norm:
                    accepted = True
                    break
                lam *= 0.5
            if not accepted:
                return phi, False, iters, history
            phi, f, norm = phi_try, f_try, norm_try
            iters += 1
            history.append(norm / scale)

        converged = norm <= tol and abs(float(f.sum())) <= balance_tol
        return phi, converged, iters, history

    def solve(
        self, bias: BiasPoint, cfg: SolverConfig, phi0: np.ndarray | None = None
    ) -> FieldSolution:
        history_all: list[float] = []
        total_iters = 0

        if phi0 is not None:
            phi, ok, iters, history = self._newton(bias, np.asarray(phi0, float), cfg)
            history_all += history
            total_iters += iters
            if ok:
                return self._finalize(bias, phi, total_iters, history_all)

        # Bias continuation from equilibrium.
        phi = np.zeros(self.n)
        s_done = 0.0
        ds = 1.0 / cfg.continuation_steps
        while s_done < 1.0 - 1e-12:
            s_try = min(1.0, s_done + ds)
            phi_new, ok, iters, history = self._newton(bias.scaled(s_try), phi, cfg)
            history_all += history
            total_iters += iters
            if ok:
                phi = phi_new
                s_done = s_try
                ds = min(2.0 * ds, 1.0)
            else:
                ds *= 0.5
                if ds < 2.0**-16:
                    raise ConvergenceError(
                        f"no convergence at bias {bias} "
                        f"(continuation stalled at s={s_done:.4f}, "
                        f"last residual {history_all[-1]:.3e})",
                        history_all,
                    )
        return self._finalize(bias, phi, total_iters, history_all)

    def _finalize(
        self, bias: BiasPoint, phi: np.ndarray, iters: int, history: list[float]
    ) -> FieldSolution:
        i_a, i_b, i_c, i_j = self.terminal_currents(phi, bias)
        ex, ey = self.field_at_qd(phi)
        mesh = self.mesh
        e_z = (mesh.built_in_voltage - float(phi[mesh.qd_node])) / (
            mesh.intrinsic_thickness_nm * 1e-9
        )
        return FieldSolution(
            bias=bias,
            phi=phi,
            e_inplane=(ex, ey),
            e_z=e_z,
            i_a=i_a,
            i_b=i_b,
            i_c=i_c,
            i_junction=i_j,
            newton_iters=iters,
            residual=history[-1] if history else 0.0,
        )


def assemble_system(
    mesh: Mesh, materials: MaterialParams, bias: BiasPoint, phi: np.ndarray
):
    """One-shot residual and Jacobian at ``phi`` (for testing and inspection)."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (mesh.n_nodes,):
        raise ValueError(
            f"phi has length {phi.shape}, expected ({mesh.n_nodes},)"
        )
    system = SheetSystem(mesh, materials)
    return system.residual(phi, bias), system.jacobian(phi, bias)


def solve_bias_point(
    mesh: Mesh,
    materials: MaterialParams,
    bias: BiasPoint,
    cfg: SolverConfig,
    phi0: np.ndarray | None = None,
) -> FieldSolution:
    """Solve one bias point on a fresh system (see ``SheetSystem`` for reuse)."""
    return SheetSystem(mesh, materials).solve(bias, cfg, phi0)


def terminal_currents(solution: FieldSolution):
    return solution.i_a, solution.i_b, solution.i_c, solution.i_junction


def classify_regime(solution: FieldSolution, i_threshold: float) -> int:
    """Bias-plane regime: 1 none passing, 2 both, 3 only A, 4 only B."""
    if not (i_threshold > 0.0):
        raise ValueError("i_threshold must be positive")
    a = solution.i_a >= i_threshold
    b = solution.i_b >= i_threshold
    if a and b:
        return 2
    if a:
        return 3
    if b:
        return 4
    return 1


def kirchhoff_error(solution: FieldSolution) -> float:
    return abs(
        solution.i_a + solution.i_b + solution.i_c - solution.i_junction
    )


def kirchhoff_bound(solution: FieldSolution, cfg: SolverConfig) -> float:
    return 1e-8 * max(
        abs(solution.i_a),
        abs(solution.i_b),
        abs(solution.i_c),
        cfg.current_floor,
    )
