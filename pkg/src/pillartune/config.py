"""Run configuration: strict key-value config files and hashing.

Files are INI-style sections of ``key = value`` pairs.  Parsing is strict:
unknown sections or keys abort with a message naming the offender, so a
typo in a calibration file cannot silently fall back to defaults.  Missing
keys take the documented defaults.  Every output produced from a config
carries a short hash of the fully resolved values.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources

from .device import DeviceGeometry, MaterialParams
from .exciton import ExcitonParams
from .solver import SolverConfig
from .tuner import ALL_OUTPUTS, SweepSpec


class ConfigError(ValueError):
    """Invalid, unknown or malformed configuration content."""


def _parse_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError("value must be finite")
    return value


def _parse_int(text: str) -> int:
    return int(text, 10)


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(_parse_float(p) for p in text.split(","))


def _parse_vc(text: str) -> float | None:
    if text.strip().lower() == "floating":
        return None
    return _parse_float(text)


def _parse_outputs(text: str) -> tuple[str, ...]:
    items = tuple(p.strip() for p in text.split(",") if p.strip())
    unknown = set(items) - set(ALL_OUTPUTS)
    if unknown:
        raise ValueError(f"unknown outputs {sorted(unknown)}")
    return items


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "seed": (_parse_int, 20260401),
    },
    "device": {
        "pillar_diameter_um": (_parse_float, 10.0),
        "ridge_width_um": (_parse_float, 3.0),
        "ridge_length_um": (_parse_float, 50.0),
        "ridge_angles_deg": (_parse_float_list, (0.0, 130.0, 65.0)),
        "pad_size_um": (_parse_float, 20.0),
        "intrinsic_thickness_nm": (_parse_float, 270.0),
        "built_in_voltage_v": (_parse_float, 1.4),
        "disc_segments": (_parse_int, 64),
        "mesh_edge_um": (_parse_float, 1.0),
    },
    "materials": {
        "sheet_conductance_s": (_parse_float, 2.0e-3),
        "saturation_current_a_per_um2": (_parse_float, 1.3e-18),
        "ideality": (_parse_float, 2.0),
        "thermal_voltage_v": (_parse_float, 0.02585),
        "contact_resistance_a_ohm": (_parse_float, 9.0e5),
        "contact_resistance_b_ohm": (_parse_float, 1.4e6),
        "contact_resistance_c_ohm": (_parse_float, 9.0e5),
    },
    "exciton": {
        "zero_field_energy_ev": (_parse_float, 1.34),
        "zero_field_splitting_uev": (_parse_float_list, (7.38, 3.06)),
        "inplane_coupling_uev_m_per_v": (
            _parse_float_list,
            (5.0e-2, 0.0, 0.0, 5.0e-2),
        ),
        "vertical_coupling_uev_m_per_v": (_parse_float_list, (-2.05e-6, -8.5e-7)),
        "dipole_uev_m_per_v": (_parse_float, 0.0),
        "polarizability_uev_m2_per_v2": (_parse_float, 1.0e-12),
    },
    "solver": {
        "newton_tol": (_parse_float, 1e-11),
        "max_iters": (_parse_int, 80),
        "damping": (_parse_float, 1.0),
        "continuation_steps": (_parse_int, 8),
        "current_floor_a": (_parse_float, 1e-6),
        "regime_threshold_a": (_parse_float, 5.2e-7),
    },
    "sweep": {
        "va_start_v": (_parse_float, -1.0),
        "va_stop_v": (_parse_float, 6.0),
        "va_step_v": (_parse_float, 0.175),
        "vb_start_v": (_parse_float, -1.0),
        "vb_stop_v": (_parse_float, 6.0),
        "vb_step_v": (_parse_float, 0.175),
        "vc_v": (_parse_vc, None),
        "outputs": (_parse_outputs, ALL_OUTPUTS),
    },
}


@dataclass(frozen=True)
class RunConfig:
    geometry: DeviceGeometry
    mesh_edge: float
    materials: MaterialParams
    exciton: ExcitonParams
    solver: SolverConfig
    sweep: SweepSpec
    seed: int
    resolved: dict
    config_hash: str


def _resolve(parser: configparser.ConfigParser, source: str) -> dict:
    resolved: dict[str, dict] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key in parser[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(
                    f"{source}: unknown key '{key}' in section [{section}]"
                )
    for section, keys in SCHEMA.items():
        resolved[section] = {}
        for key, (parse, default) in keys.items():
            if parser.has_option(section, key):
                raw = parser.get(section, key)
                try:
                    resolved[section][key] = parse(raw)
                except (ValueError, TypeError) as exc:
                    raise ConfigError(
                        f"{source}: bad value for '{key}' in [{section}]: {exc}"
                    ) from exc
            else:
                resolved[section][key] = default
    return resolved


def _canonical(resolved: dict) -> str:
    def encode(value):
        if isinstance(value, tuple):
            return list(value)
        return value

    payload = {
        s: {k: encode(v) for k, v in keys.items()} for s, keys in resolved.items()
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def config_hash(resolved: dict) -> str:
    return hashlib.sha256(_canonical(resolved).encode("utf-8")).hexdigest()[:12]


def _build(resolved: dict) -> RunConfig:
    dev = resolved["device"]
    angles = tuple(math.radians(a) for a in dev["ridge_angles_deg"])
    if len(angles) != 3:
        raise ConfigError("device: ridge_angles_deg needs exactly three angles")
    try:
        geometry = DeviceGeometry(
            pillar_diameter=dev["pillar_diameter_um"],
            ridge_width=dev["ridge_width_um"],
            ridge_length=dev["ridge_length_um"],
            ridge_angles=angles,  # type: ignore[arg-type]
            pad_size=dev["pad_size_um"],
            intrinsic_thickness_nm=dev["intrinsic_thickness_nm"],
            built_in_voltage=dev["built_in_voltage_v"],
            disc_segments=dev["disc_segments"],
        )
        mat = resolved["materials"]
        materials = MaterialParams(
            sheet_conductance=mat["sheet_conductance_s"],
            saturation_current_density=mat["saturation_current_a_per_um2"],
            ideality=mat["ideality"],
            thermal_voltage=mat["thermal_voltage_v"],
            contact_resistance=(
                mat["contact_resistance_a_ohm"],
                mat["contact_resistance_b_ohm"],
                mat["contact_resistance_c_ohm"],
            ),
        )
        exc = resolved["exciton"]
        d0 = exc["zero_field_splitting_uev"]
        m = exc["inplane_coupling_uev_m_per_v"]
        gz = exc["vertical_coupling_uev_m_per_v"]
        if len(d0) != 2 or len(m) != 4 or len(gz) != 2:
            raise ConfigError(
                "exciton: zero_field_splitting needs 2 values, "
                "inplane_coupling 4, vertical_coupling 2"
            )
        exciton = ExcitonParams(
            zero_field_energy=exc["zero_field_energy_ev"],
            zero_field_splitting=(d0[0], d0[1]),
            inplane_coupling=((m[0], m[1]), (m[2], m[3])),
            vertical_coupling=(gz[0], gz[1]),
            dipole=exc["dipole_uev_m_per_v"],
            polarizability=exc["polarizability_uev_m2_per_v2"],
        )
        sol = resolved["solver"]
        solver_cfg = SolverConfig(
            newton_tol=sol["newton_tol"],
            max_iters=sol["max_iters"],
            damping=sol["damping"],
            continuation_steps=sol["continuation_steps"],
            current_floor=sol["current_floor_a"],
            regime_threshold=sol["regime_threshold_a"],
        )
        sw = resolved["sweep"]
        sweep = SweepSpec(
            va_start=sw["va_start_v"],
            va_stop=sw["va_stop_v"],
            va_step=sw["va_step_v"],
            vb_start=sw["vb_start_v"],
            vb_stop=sw["vb_stop_v"],
            vb_step=sw["vb_step_v"],
            vc=sw["vc_v"],
            outputs=sw["outputs"],
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc

    return RunConfig(
        geometry=geometry,
        mesh_edge=dev["mesh_edge_um"],
        materials=materials,
        exciton=exciton,
        solver=solver_cfg,
        sweep=sweep,
        seed=resolved["run"]["seed"],
        resolved=resolved,
        config_hash=config_hash(resolved),
    )


def parse_config_text(text: str, source: str = "<string>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    parser.optionxform = str  # keys are case-sensitive
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    return _build(_resolve(parser, source))


def default_config_text() -> str:
    return (
        resources.files("pillartune.configs").joinpath("default.cfg").read_text("utf-8")
    )


def load_run_config(path: str | None = None) -> RunConfig:
    """Load a config file, or the packaged default calibration when ``path`` is None."""
    if path is None:
        return parse_config_text(default_config_text(), source="<default>")
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, source=path)
