"""Simulator for electric-field control of a quantum dot in a three-contact
micropillar device: sheet/junction field solver, exciton fine-structure map,
polarization-scan synthesis and fitting, and bias-space tuning."""

__version__ = "0.1.0"

from .device import (
    DeviceGeometry,
    Footprint,
    GeometryError,
    MaterialParams,
    Mesh,
    MeshError,
    build_geometry,
    export_mesh_csv,
    generate_mesh,
    make_strip_mesh,
)
from .exciton import (
    AXIS_TOLERANCE_UEV,
    ExcitonParams,
    ExcitonState,
    exciton_state,
    fss_vector,
    stark_shift,
)
from .solver import (
    FLOATING,
    BiasPoint,
    ConvergenceError,
    FieldSolution,
    NumericalError,
    SheetSystem,
    SolverConfig,
    SolverError,
    assemble_system,
    classify_regime,
    diode_current_density,
    solve_bias_point,
    terminal_currents,
)
from .spectro import (
    FitError,
    FitResult,
    PolarizationScan,
    ScanInputError,
    SpectrumModel,
    algebraic_fss,
    fit_fss_sine,
    hwp_to_detection_angle,
    peak_centroid,
    scan_from_csv,
    scan_to_csv,
    synth_polarization_scan,
)
from .tuner import (
    CellRecord,
    IsoFssPair,
    RotationCheck,
    SweepResult,
    SweepSpec,
    TuneResult,
    eigenaxis_rotation_check,
    find_zero_fss,
    iso_fss_points,
    read_sweep_csv,
    run_bias_sweep,
    write_sweep_csv,
    zero_bias_reference,
)
from .config import ConfigError, RunConfig, load_run_config, parse_config_text
