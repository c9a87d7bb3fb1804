"""Lateral device layout and meshing.

The device is a circular pillar connected through three narrow ridges to
three remote contact pads.  The vertical layer stack is collapsed into two
scalar parameters carried by the geometry (intrinsic thickness and built-in
voltage); everything else here is purely two-dimensional.

The mesh is built block-structured: a polar disc mesh for the pillar, a
rectangular grid per ridge and per pad, joined node-by-node at shared rows.
Each ridge attaches to the pillar on a flat chord whose half-width equals
half the ridge width, so the attachment geometry does not depend on mesh
resolution.  All blocks are generated in a ridge-local frame and rotated
into place, which keeps a 120-degree-symmetric layout symmetric to floating
point rounding.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

PAD_TAGS = ("PAD_A", "PAD_B", "PAD_C")


class GeometryError(ValueError):
    """Raised for invalid or self-intersecting device layouts."""


class MeshError(RuntimeError):
    """Raised when a footprint cannot be meshed or a mesh check fails."""


@dataclass(frozen=True)
class DeviceGeometry:
    """Lateral layout parameters (lengths in micrometres, angles in radians).

    ``intrinsic_thickness_nm`` and ``built_in_voltage`` describe the
    collapsed vertical junction; they feed the vertical-field readout only.
    """

    # Default ridge placement keeps the driven arms A and B mirror-symmetric
    # about the unconnected arm C, with C in the gap between them.  The
    # C-arm junction then steers the passing-regime field outward past the
    # A-B cone, spanning the near-pi range of in-plane directions; an
    # equally spaced layout pins the span well below that.  Exact placement
    # in the fabricated device is not published.
    pillar_diameter: float = 10.0
    ridge_width: float = 3.0
    ridge_length: float = 50.0
    ridge_angles: tuple[float, float, float] = (
        0.0,
        math.radians(130.0),
        math.radians(65.0),
    )
    pad_size: float = 20.0
    intrinsic_thickness_nm: float = 270.0
    built_in_voltage: float = 1.4
    disc_segments: int = 64

    def __post_init__(self) -> None:
        if not (self.pillar_diameter > 0.0):
            raise GeometryError("pillar_diameter must be positive")
        if not (0.0 < self.ridge_width < self.pillar_diameter):
            raise GeometryError("ridge_width must lie in (0, pillar_diameter)")
        if not (self.ridge_length > 0.0):
            raise GeometryError("ridge_length must be positive (degenerate ridge)")
        if not (self.pad_size > 0.0):
            raise GeometryError("pad_size must be positive")
        if len(self.ridge_angles) != 3:
            raise GeometryError("exactly three ridge_angles are required")
        for a in self.ridge_angles:
            if not math.isfinite(a):
                raise GeometryError("ridge_angles must be finite")
        for i in range(3):
            for j in range(i + 1, 3):
                if _circ_dist(self.ridge_angles[i], self.ridge_angles[j]) < 1e-9:
                    raise GeometryError(
                        "ridge_angles must be pairwise distinct modulo 2*pi"
                    )
        if not (self.intrinsic_thickness_nm > 0.0):
            raise GeometryError("intrinsic_thickness_nm must be positive")
        if not (self.built_in_voltage > 0.0):
            raise GeometryError("built_in_voltage must be positive")
        if self.disc_segments < 12:
            raise GeometryError("disc_segments must be at least 12")

    @property
    def pillar_radius(self) -> float:
        return 0.5 * self.pillar_diameter

    @property
    def attach_half_angle(self) -> float:
        """Half-angle subtended by a ridge attachment chord at the centre."""
        return math.asin(0.5 * self.ridge_width / self.pillar_radius)

    @property
    def chord_distance(self) -> float:
        """Distance from the pillar centre to an attachment chord."""
        return self.pillar_radius * math.cos(self.attach_half_angle)


@dataclass(frozen=True)
class MaterialParams:
    """Electrical parameters of the sheet and the distributed junction.

    ``sheet_conductance`` is per square of the conductive top layer.
    ``saturation_current_density`` may be zero to disable the junction
    entirely (pure-Laplace validation runs); everything else is strictly
    positive.  ``contact_resistance`` is one lumped series resistance per
    terminal, in the order (A, B, C).
    """

    sheet_conductance: float = 2.0e-3          # S per square
    saturation_current_density: float = 1.3e-18  # A / um^2
    ideality: float = 2.0
    thermal_voltage: float = 0.02585           # V
    contact_resistance: tuple[float, float, float] = (9.0e5, 1.4e6, 9.0e5)

    def __post_init__(self) -> None:
        if not (self.sheet_conductance > 0.0):
            raise ValueError("sheet_conductance must be positive")
        if self.saturation_current_density < 0.0:
            raise ValueError("saturation_current_density must be >= 0")
        if not (1.0 <= self.ideality <= 2.0):
            raise ValueError("ideality must lie in [1, 2]")
        if not (self.thermal_voltage > 0.0):
            raise ValueError("thermal_voltage must be positive")
        if len(self.contact_resistance) != 3:
            raise ValueError("contact_resistance needs one value per terminal")
        for r in self.contact_resistance:
            if not (r > 0.0):
                raise ValueError("contact resistances must be positive")


@dataclass(frozen=True)
class Footprint:
    """Polygonal outline of the device: pillar disc, three ridges, three pads."""

    geometry: DeviceGeometry
    pillar: np.ndarray                 # (disc_segments, 2)
    ridges: tuple[np.ndarray, ...]     # three (4, 2) rectangles
    pads: tuple[np.ndarray, ...]       # three (4, 2) squares

    def polygons(self) -> list[np.ndarray]:
        return [self.pillar, *self.ridges, *self.pads]

    def component_area(self) -> float:
        """Sum of component polygon areas (attachment overlaps not removed)."""
        return float(sum(abs(_polygon_area(p)) for p in self.polygons()))


@dataclass
class Mesh:
    """Conforming triangle mesh with tagged contact nodes.

    ``boundary_tags`` maps PAD_A/PAD_B/PAD_C/FREE to node-index arrays; the
    pad tags sit on the outer edge of each pad, FREE is the remaining
    boundary.  ``qd_node`` is the node of interest at the pillar centre.
    The two vertical-stack scalars are copied from the generating geometry
    so field post-processing does not need the geometry object.
    """

    nodes: np.ndarray                  # (N, 2) float64, um
    cells: np.ndarray                  # (M, 3) int32, CCW
    boundary_tags: dict[str, np.ndarray]
    qd_node: int
    built_in_voltage: float = 1.4
    intrinsic_thickness_nm: float = 270.0
    target_edge: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def n_cells(self) -> int:
        return int(self.cells.shape[0])

    def pad_nodes(self, tag: str) -> np.ndarray:
        return self.boundary_tags.get(tag, np.empty(0, dtype=np.int32))


def _circ_dist(a: float, b: float) -> float:
    d = math.fmod(a - b, TWO_PI)
    if d < 0.0:
        d += TWO_PI
    return min(d, TWO_PI - d)


def _unit(angle: float) -> np.ndarray:
    return np.array([math.cos(angle), math.sin(angle)])


def _perp(angle: float) -> np.ndarray:
    return np.array([-math.sin(angle), math.cos(angle)])


def _polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _convex_overlap(p: np.ndarray, q: np.ndarray, tol: float = 1e-9) -> bool:
    """Separating-axis test for two convex polygons (strict interior overlap)."""
    for poly in (p, q):
        n = len(poly)
        for i in range(n):
            edge = poly[(i + 1) % n] - poly[i]
            axis = np.array([-edge[1], edge[0]])
            norm = np.hypot(axis[0], axis[1])
            if norm == 0.0:
                continue
            axis /= norm
            p_proj = p @ axis
            q_proj = q @ axis
            if p_proj.max() <= q_proj.min() + tol or q_proj.max() <= p_proj.min() + tol:
                return False
    return True


def build_geometry(config: DeviceGeometry) -> Footprint:
    """Assemble the footprint polygons and validate that components fit.

    Raises ``GeometryError`` when ridge attachment windows overlap on the
    pillar rim or when ridge/pad rectangles of different arms intersect.
    """
    r = config.pillar_radius
    beta = config.attach_half_angle
    d = config.chord_distance
    w = config.ridge_width
    length = config.ridge_length
    pad = config.pad_size

    for i in range(3):
        for j in range(i + 1, 3):
            sep = _circ_dist(config.ridge_angles[i], config.ridge_angles[j])
            if sep <= 2.0 * beta + 1e-9:
                raise GeometryError(
                    "ridge attachment windows overlap on the pillar rim "
                    f"(ridges {i} and {j}, separation {sep:.4f} rad <= {2 * beta:.4f})"
                )

    theta = np.arange(config.disc_segments) * (TWO_PI / config.disc_segments)
    pillar = np.column_stack([r * np.cos(theta), r * np.sin(theta)])

    ridges = []
    pads = []
    for alpha in config.ridge_angles:
        u, v = _unit(alpha), _perp(alpha)
        ridges.append(
            np.array(
                [
                    d * u - 0.5 * w * v,
                    (d + length) * u - 0.5 * w * v,
                    (d + length) * u + 0.5 * w * v,
                    d * u + 0.5 * w * v,
                ]
            )
        )
        pads.append(
            np.array(
                [
                    (d + length) * u - 0.5 * pad * v,
                    (d + length + pad) * u - 0.5 * pad * v,
                    (d + length + pad) * u + 0.5 * pad * v,
                    (d + length) * u + 0.5 * pad * v,
                ]
            )
        )

    for i in range(3):
        for j in range(i + 1, 3):
            for a_poly, a_name in ((ridges[i], f"ridge {i}"), (pads[i], f"pad {i}")):
                for b_poly, b_name in ((ridges[j], f"ridge {j}"), (pads[j], f"pad {j}")):
                    if _convex_overlap(a_poly, b_poly):
                        raise GeometryError(
                            f"{a_name} and {b_name} overlap; ridge_angles too close"
                        )

    return Footprint(
        geometry=config,
        pillar=pillar,
        ridges=tuple(ridges),
        pads=tuple(pads),
    )


def _subdiv(length: float, edge: float) -> int:
    return max(1, int(math.ceil(length / edge - 1e-9)))


def generate_mesh(footprint: Footprint, target_edge_length: float) -> Mesh:
    """Triangulate the footprint with a block-structured conforming mesh.

    Maximum element edge stays below twice ``target_edge_length``.  The
    pillar-centre node is index 0 and becomes ``qd_node``.
    """
    if not (target_edge_length > 0.0):
        raise MeshError("target_edge_length must be positive")

    g = footprint.geometry
    r = g.pillar_radius
    beta = g.attach_half_angle
    d = g.chord_distance
    w = g.ridge_width
    edge = float(target_edge_length)

    order = sorted(range(3), key=lambda k: g.ridge_angles[k] % TWO_PI)
    sorted_angles = [g.ridge_angles[k] % TWO_PI for k in order]

    n_chord = _subdiv(w, edge)
    t_chord = np.linspace(-0.5 * w, 0.5 * w, n_chord + 1)

    # Angular grid around the rim: chord windows at each ridge, arcs between.
    slot_angle: list[float] = []
    slot_kind: list[tuple] = []  # ("chord", ridge_index, t) or ("arc",)
    for pos, k in enumerate(order):
        alpha = sorted_angles[pos]
        for t in t_chord:
            slot_angle.append(alpha + math.atan2(t, d))
            slot_kind.append(("chord", k, float(t)))
        alpha_next = sorted_angles[(pos + 1) % 3] + (TWO_PI if pos == 2 else 0.0)
        arc_span = (alpha_next - beta) - (alpha + beta)
        if arc_span <= 0.0:
            raise MeshError("ridge windows overlap; footprint is unmeshable")
        n_arc = _subdiv(r * arc_span, edge)
        for i in range(1, n_arc):
            slot_angle.append(alpha + beta + arc_span * i / n_arc)
            slot_kind.append(("arc",))

    n_theta = len(slot_angle)
    n_rings = max(2, _subdiv(r, edge))

    # Rim position per slot; inner rings are radially scaled copies.
    rim = np.empty((n_theta, 2))
    for j, kind in enumerate(slot_kind):
        if kind[0] == "chord":
            _, k, t = kind
            alpha = g.ridge_angles[k]
            rim[j] = d * _unit(alpha) + t * _perp(alpha)
        else:
            rim[j] = r * _unit(slot_angle[j])

    nodes: list[np.ndarray] = [np.zeros(2)]
    cells: list[tuple[int, int, int]] = []

    ring_index = np.empty((n_rings, n_theta), dtype=np.int64)
    for i in range(n_rings):
        f = (i + 1) / n_rings
        for j in range(n_theta):
            ring_index[i, j] = len(nodes)
            nodes.append(f * rim[j])

    for j in range(n_theta):
        jn = (j + 1) % n_theta
        cells.append((0, ring_index[0, j], ring_index[0, jn]))
    for i in range(n_rings - 1):
        for j in range(n_theta):
            jn = (j + 1) % n_theta
            a, b = ring_index[i, j], ring_index[i, jn]
            c, e = ring_index[i + 1, jn], ring_index[i + 1, j]
            cells.append((a, b, c))
            cells.append((a, c, e))

    # Chord slots on the outermost ring, per ridge, ordered by t.
    chord_slots: dict[int, list[tuple[float, int]]] = {0: [], 1: [], 2: []}
    for j, kind in enumerate(slot_kind):
        if kind[0] == "chord":
            chord_slots[kind[1]].append((kind[2], ring_index[n_rings - 1, j]))
    for k in chord_slots:
        chord_slots[k].sort()

    boundary_tags: dict[str, np.ndarray] = {}
    length, pad = g.ridge_length, g.pad_size
    n_s = _subdiv(length, edge)
    n_p = _subdiv(pad, edge)
    n_e = _subdiv(0.5 * (pad - w), edge) if pad > w else 0

    for k in range(3):
        alpha = g.ridge_angles[k]
        u, v = _unit(alpha), _perp(alpha)
        t_vals = np.array([t for t, _ in chord_slots[k]])
        root_ids = [idx for _, idx in chord_slots[k]]

        rows = [root_ids]
        for m in range(1, n_s + 1):
            s = d + length * m / n_s
            row = []
            for t in t_vals:
                row.append(len(nodes))
                nodes.append(s * u + t * v)
            rows.append(row)
        _stitch_rows(cells, rows)

        # Pad grid: ridge t-values extended symmetrically to the pad width.
        if n_e > 0:
            ext = np.linspace(0.5 * w, 0.5 * pad, n_e + 1)[1:]
            t_pad = np.concatenate([-ext[::-1], t_vals, ext])
        else:
            t_pad = t_vals
        mid_lo = len(t_pad[t_pad < t_vals[0] - 1e-12])

        pad_rows = []
        first = []
        for jj, t in enumerate(t_pad):
            if mid_lo <= jj < mid_lo + len(t_vals):
                first.append(rows[-1][jj - mid_lo])
            else:
                first.append(len(nodes))
                nodes.append((d + length) * u + t * v)
        pad_rows.append(first)
        for m in range(1, n_p + 1):
            s = d + length + pad * m / n_p
            row = []
            for t in t_pad:
                row.append(len(nodes))
                nodes.append(s * u + t * v)
            pad_rows.append(row)
        _stitch_rows(cells, pad_rows)

        boundary_tags[PAD_TAGS[k]] = np.array(sorted(pad_rows[-1]), dtype=np.int32)

    node_arr = np.array(nodes)
    cell_arr = np.array(cells, dtype=np.int32)
    cell_arr = _orient_ccw(node_arr, cell_arr)

    mesh = Mesh(
        nodes=node_arr,
        cells=cell_arr,
        boundary_tags=boundary_tags,
        qd_node=0,
        built_in_voltage=g.built_in_voltage,
        intrinsic_thickness_nm=g.intrinsic_thickness_nm,
        target_edge=edge,
        meta={"n_theta": n_theta, "n_rings": n_rings},
    )
    mesh.boundary_tags["FREE"] = _free_boundary(mesh)
    validate_mesh(mesh, require_all_pads=True)
    return mesh


def _stitch_rows(cells: list, rows: list[list[int]]) -> None:
    """Triangulate the quads between consecutive equal-length node rows."""
    for m in range(len(rows) - 1):
        lo, hi = rows[m], rows[m + 1]
        for j in range(len(lo) - 1):
            cells.append((lo[j], lo[j + 1], hi[j + 1]))
            cells.append((lo[j], hi[j + 1], hi[j]))


def _orient_ccw(nodes: np.ndarray, cells: np.ndarray) -> np.ndarray:
    p0 = nodes[cells[:, 0]]
    p1 = nodes[cells[:, 1]]
    p2 = nodes[cells[:, 2]]
    area2 = (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (
        p2[:, 0] - p0[:, 0]
    ) * (p1[:, 1] - p0[:, 1])
    flip = area2 < 0.0
    out = cells.copy()
    out[flip, 1], out[flip, 2] = cells[flip, 2], cells[flip, 1]
    return out


def cell_areas(mesh: Mesh) -> np.ndarray:
    p0 = mesh.nodes[mesh.cells[:, 0]]
    p1 = mesh.nodes[mesh.cells[:, 1]]
    p2 = mesh.nodes[mesh.cells[:, 2]]
    return 0.5 * (
        (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
        - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])
    )


def _boundary_nodes(mesh: Mesh) -> np.ndarray:
    """Nodes on edges that belong to exactly one triangle."""
    edges = {}
    for tri in mesh.cells:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            edges[key] = edges.get(key, 0) + 1
    out = set()
    for (a, b), count in edges.items():
        if count == 1:
            out.add(int(a))
            out.add(int(b))
    return np.array(sorted(out), dtype=np.int32)


def _free_boundary(mesh: Mesh) -> np.ndarray:
    tagged = set()
    for tag in PAD_TAGS:
        tagged.update(int(i) for i in mesh.boundary_tags.get(tag, ()))
    free = [int(i) for i in _boundary_nodes(mesh) if int(i) not in tagged]
    return np.array(free, dtype=np.int32)


def validate_mesh(mesh: Mesh, require_all_pads: bool = True) -> None:
    """Check structural invariants; raises ``MeshError`` on violation."""
    areas = cell_areas(mesh)
    if not np.all(areas > 0.0):
        raise MeshError("mesh contains non-positive-area cells")

    if mesh.target_edge > 0.0:
        p = mesh.nodes[mesh.cells]
        for i, j in ((0, 1), (1, 2), (2, 0)):
            lengths = np.hypot(
                p[:, i, 0] - p[:, j, 0], p[:, i, 1] - p[:, j, 1]
            )
            if lengths.max() > 2.0 * mesh.target_edge + 1e-9:
                raise MeshError("mesh edge exceeds twice the target edge length")

    # Connectivity by union-find over cell edges.
    parent = np.arange(mesh.n_nodes)

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for tri in mesh.cells:
        ra = find(int(tri[0]))
        for b in (int(tri[1]), int(tri[2])):
            rb = find(b)
            if ra != rb:
                parent[rb] = ra
    roots = {find(i) for i in range(mesh.n_nodes)}
    if len(roots) != 1:
        raise MeshError("mesh is not connected")

    present = [tag for tag in PAD_TAGS if len(mesh.pad_nodes(tag)) > 0]
    if require_all_pads and len(present) != 3:
        raise MeshError("every pad tag must be non-empty")
    seen: set[int] = set()
    for tag in present:
        ids = {int(i) for i in mesh.pad_nodes(tag)}
        if seen & ids:
            raise MeshError("pad tags are not disjoint")
        seen |= ids


def make_strip_mesh(
    length: float,
    width: float,
    edge: float,
    built_in_voltage: float = 1.4,
    intrinsic_thickness_nm: float = 270.0,
) -> Mesh:
    """Rectangular two-contact strip used for Laplace-limit validation.

    PAD_A spans the x=0 edge, PAD_B the x=length edge; there is no PAD_C.
    The probe node sits closest to the strip centre.
    """
    if length <= 0.0 or width <= 0.0 or edge <= 0.0:
        raise MeshError("strip dimensions and edge must be positive")
    nx = _subdiv(length, edge)
    ny = _subdiv(width, edge)
    xs = np.linspace(0.0, length, nx + 1)
    ys = np.linspace(0.0, width, ny + 1)

    nodes = np.array([[x, y] for y in ys for x in xs])
    idx = lambda i, j: j * (nx + 1) + i  # noqa: E731

    cells = []
    for j in range(ny):
        for i in range(nx):
            a, b = idx(i, j), idx(i + 1, j)
            c, e = idx(i + 1, j + 1), idx(i, j + 1)
            cells.append((a, b, c))
            cells.append((a, c, e))

    centre = np.array([0.5 * length, 0.5 * width])
    qd = int(np.argmin(np.hypot(nodes[:, 0] - centre[0], nodes[:, 1] - centre[1])))

    mesh = Mesh(
        nodes=nodes,
        cells=np.array(cells, dtype=np.int32),
        boundary_tags={
            "PAD_A": np.array([idx(0, j) for j in range(ny + 1)], dtype=np.int32),
            "PAD_B": np.array([idx(nx, j) for j in range(ny + 1)], dtype=np.int32),
            "PAD_C": np.empty(0, dtype=np.int32),
        },
        qd_node=qd,
        built_in_voltage=built_in_voltage,
        intrinsic_thickness_nm=intrinsic_thickness_nm,
        target_edge=edge,
    )
    mesh.boundary_tags["FREE"] = _free_boundary(mesh)
    validate_mesh(mesh, require_all_pads=False)
    return mesh


def export_mesh_csv(mesh: Mesh, directory: str, prefix: str = "mesh") -> dict[str, str]:
    """Write nodes, cells and tags as three CSV files; returns their paths."""
    os.makedirs(directory, exist_ok=True)
    paths = {
        "nodes": os.path.join(directory, f"{prefix}_nodes.csv"),
        "cells": os.path.join(directory, f"{prefix}_cells.csv"),
        "tags": os.path.join(directory, f"{prefix}_tags.csv"),
    }
    with open(paths["nodes"], "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["node_id", "x_um", "y_um"])
        for i, (x, y) in enumerate(mesh.nodes):
            out.writerow([i, repr(float(x)), repr(float(y))])
    with open(paths["cells"], "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["cell_id", "n0", "n1", "n2"])
        for i, (a, b, c) in enumerate(mesh.cells):
            out.writerow([i, int(a), int(b), int(c)])
    with open(paths["tags"], "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["tag", "node_id"])
        for tag in (*PAD_TAGS, "FREE"):
            for i in mesh.boundary_tags.get(tag, ()):
                out.writerow([tag, int(i)])
    return paths
