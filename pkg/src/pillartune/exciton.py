"""Electric-field control of the bright-exciton doublet.

The splitting is carried as a two-component vector: its norm is the
observable splitting, half its polar angle is the high-energy eigenaxis.
The local field enters linearly (in-plane through a 2x2 coupling, vertical
through a 2-vector), which is the minimal model with two independent
non-parallel controls and therefore supports exact cancellation.  The mean
transition energy shifts with the vertical field through dipole and
polarizability terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Splitting below which the eigenaxis angle is ill-conditioned and reported
# as undefined (ueV).
AXIS_TOLERANCE_UEV = 0.01

# |det M| below which the in-plane coupling is flagged non-invertible,
# in (ueV per V/m)^2.
DET_THRESHOLD = 1e-12


@dataclass(frozen=True)
class ExcitonParams:
    """Zero-field doublet and field couplings.

    Energies in eV, splittings in ueV, couplings in ueV per (V/m) and the
    polarizability in ueV per (V/m)^2.  ``inplane_coupling`` is row-major
    ((m11, m12), (m21, m22)) acting on (E_x, E_y); it need not be symmetric.
    """

    zero_field_energy: float = 1.34
    zero_field_splitting: tuple[float, float] = (7.38, 3.06)
    inplane_coupling: tuple[tuple[float, float], tuple[float, float]] = (
        (5.0e-2, 0.0),
        (0.0, 5.0e-2),
    )
    vertical_coupling: tuple[float, float] = (-2.05e-6, -8.5e-7)
    dipole: float = 0.0
    polarizability: float = 1.0e-12

    def __post_init__(self) -> None:
        values = [
            self.zero_field_energy,
            *self.zero_field_splitting,
            *self.inplane_coupling[0],
            *self.inplane_coupling[1],
            *self.vertical_coupling,
            self.dipole,
            self.polarizability,
        ]
        if not all(math.isfinite(v) for v in values):
            raise ValueError("exciton parameters must be finite")

    def coupling_matrix(self) -> np.ndarray:
        return np.array(self.inplane_coupling, dtype=float)

    @property
    def inplane_invertible(self) -> bool:
        return abs(float(np.linalg.det(self.coupling_matrix()))) >= DET_THRESHOLD


@dataclass(frozen=True)
class ExcitonState:
    """Doublet observables at one field point.

    ``theta0`` is the polarization angle of the high-energy line in the
    detection frame, folded to [0, pi); ``None`` when the splitting is
    below ``AXIS_TOLERANCE_UEV``.
    """

    fss: float                 # ueV, >= 0
    theta0: float | None       # rad in [0, pi)
    mean_energy: float         # eV
    e_high: float              # eV
    e_low: float               # eV

    @property
    def degenerate(self) -> bool:
        return self.theta0 is None


def fss_vector(params: ExcitonParams, field) -> tuple[float, float]:
    """Splitting vector (delta_x, delta_y) in ueV for field (E_x, E_y, E_z) in V/m."""
    ex, ey, ez = (float(v) for v in field)
    m = params.coupling_matrix()
    gx, gy = params.vertical_coupling
    d0x, d0y = params.zero_field_splitting
    dx = d0x + m[0, 0] * ex + m[0, 1] * ey + gx * ez
    dy = d0y + m[1, 0] * ex + m[1, 1] * ey + gy * ez
    return dx, dy


def splitting_hamiltonian(delta: tuple[float, float]) -> np.ndarray:
    """2x2 exchange block in the linear-polarization basis (ueV)."""
    dx, dy = delta
    return 0.5 * np.array([[dx, dy], [dy, -dx]])


def stark_shift(params: ExcitonParams, e_z: float) -> float:
    """Mean-energy shift (ueV) relative to the zero-field energy."""
    return -params.dipole * e_z - params.polarizability * e_z * e_z


def exciton_state(params: ExcitonParams, field) -> ExcitonState:
    """Closed-form doublet observables for the given field (V/m)."""
    dx, dy = fss_vector(params, field)
    fss = math.hypot(dx, dy)
    if fss > AXIS_TOLERANCE_UEV:
        theta0 = 0.5 * math.atan2(dy, dx) % math.pi
    else:
        theta0 = None
    e_z = float(field[2])
    mean = params.zero_field_energy + 1e-6 * stark_shift(params, e_z)
    half = 0.5e-6 * fss
    return ExcitonState(
        fss=fss,
        theta0=theta0,
        mean_energy=mean,
        e_high=mean + half,
        e_low=mean - half,
    )
