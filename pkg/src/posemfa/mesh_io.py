"""Corresponded triangle-mesh sequences: OBJ I/O, unit-box normalization,
and assembly of the stacked per-vertex data vectors.

All shapes of a sequence share one triangle list and one vertex count.
Normalization applies a single uniform scale and translation computed from
the joint bounding box of all shapes, so that inter-shape translations are
preserved.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CorrespondenceError,
    DegenerateExtent,
    IoError,
    ParseError,
    TooFewShapes,
)

# Fixed palette for label colors in OBJ output (23 entries, RGB in [0,1]).
LABEL_PALETTE = np.array([
    (0.894, 0.102, 0.110), (0.216, 0.494, 0.722), (0.302, 0.686, 0.290),
    (0.596, 0.306, 0.639), (1.000, 0.498, 0.000), (1.000, 1.000, 0.200),
    (0.651, 0.337, 0.157), (0.969, 0.506, 0.749), (0.600, 0.600, 0.600),
    (0.121, 0.471, 0.706), (0.682, 0.780, 0.910), (0.200, 0.627, 0.173),
    (0.698, 0.875, 0.541), (0.984, 0.604, 0.600), (0.890, 0.102, 0.110),
    (0.992, 0.749, 0.435), (0.792, 0.698, 0.839), (0.416, 0.239, 0.604),
    (1.000, 1.000, 0.600), (0.694, 0.349, 0.157), (0.000, 0.000, 0.000),
    (0.500, 0.000, 0.500), (0.000, 0.500, 0.500),
])


@dataclass
class Mesh:
    """A triangle mesh: (n_v, 3) float vertices and (n_t, 3) int triangles."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ParseError("vertices must be an (n_v, 3) array")
        if self.triangles.size:
            if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
                raise ParseError("triangle index out of range")
            a, b, c = self.triangles.T
            if np.any((a == b) | (b == c) | (a == c)):
                raise ParseError("degenerate triangle (repeated vertex index)")

    @property
    def n_v(self) -> int:
        return len(self.vertices)


@dataclass
class ScaleRecord:
    """Affine normalization v_norm = (v - offset) * scale, scale > 0."""

    scale: float
    offset: np.ndarray

    def apply(self, vertices: np.ndarray) -> np.ndarray:
        return (vertices - self.offset) * self.scale

    def invert(self, vertices: np.ndarray) -> np.ndarray:
        return vertices / self.scale + self.offset


IDENTITY_SCALE = ScaleRecord(1.0, np.zeros(3))


@dataclass
class TrainingSet:
    """n_s corresponded shapes with shared connectivity."""

    shapes: list[Mesh]
    scale_record: ScaleRecord = field(default_factory=lambda: ScaleRecord(1.0, np.zeros(3)))

    @property
    def n_s(self) -> int:
        return len(self.shapes)

    @property
    def n_v(self) -> int:
        return self.shapes[0].n_v

    @property
    def triangles(self) -> np.ndarray:
        return self.shapes[0].triangles

    def vertex_array(self) -> np.ndarray:
        """All vertex positions as an (n_s, n_v, 3) array."""
        return np.stack([s.vertices for s in self.shapes])


def read_obj(path: str) -> Mesh:
    """Read an OBJ file (v/f records; f indices 1-based, triangles only)."""
    vertices = []
    faces = []
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                parts = line.split()
                if not parts or parts[0].startswith("#"):
                    continue
                if parts[0] == "v":
                    if len(parts) < 4:
                        raise ParseError(f"{path}:{lineno}: bad vertex record")
                    try:
                        vertices.append([float(x) for x in parts[1:4]])
                    except ValueError as exc:
                        raise ParseError(f"{path}:{lineno}: {exc}") from exc
                elif parts[0] == "f":
                    if len(parts) != 4:
                        raise ParseError(f"{path}:{lineno}: only triangle faces supported")
                    try:
                        idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                    except ValueError as exc:
                        raise ParseError(f"{path}:{lineno}: {exc}") from exc
                    faces.append(idx)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not vertices:
        raise ParseError(f"{path}: no vertices")
    return Mesh(np.array(vertices, dtype=float), np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_obj(mesh: Mesh, path: str, colors: np.ndarray | None = None) -> None:
    """Write an OBJ file, optionally with per-vertex RGB colors."""
    try:
        with open(path, "w") as fh:
            for j, v in enumerate(mesh.vertices):
                if colors is not None:
                    c = colors[j]
                    fh.write(f"v {v[0]:.12g} {v[1]:.12g} {v[2]:.12g} "
                             f"{c[0]:.4f} {c[1]:.4f} {c[2]:.4f}\n")
                else:
                    fh.write(f"v {v[0]:.12g} {v[1]:.12g} {v[2]:.12g}\n")
            for t in mesh.triangles:
                fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_sequence(paths: list[str]) -> TrainingSet:
    """Load a corresponded mesh sequence, validating shared connectivity."""
    if len(paths) < 2:
        raise TooFewShapes(f"need at least 2 mesh files, got {len(paths)}")
    shapes = [read_obj(p) for p in paths]
    ref = shapes[0]
    for p, m in zip(paths[1:], shapes[1:]):
        if m.n_v != ref.n_v:
            raise CorrespondenceError(
                f"{p}: vertex count {m.n_v} != {ref.n_v} of {paths[0]}")
        if m.triangles.shape != ref.triangles.shape or not np.array_equal(
                m.triangles, ref.triangles):
            raise CorrespondenceError(f"{p}: connectivity differs from {paths[0]}")
    return TrainingSet(shapes)


def normalize_unit_box(tset: TrainingSet) -> TrainingSet:
    """Map every vertex of every shape into [0, 1]^3 with one uniform
    scale + translation computed from the joint bounding box.
    """
    allv = tset.vertex_array().reshape(-1, 3)
    lo = allv.min(axis=0)
    hi = allv.max(axis=0)
    extent = float((hi - lo).max())
    if extent <= 0.0:
        raise DegenerateExtent("joint bounding box has zero extent")
    record = ScaleRecord(1.0 / extent, lo)
    shapes = [Mesh(record.apply(s.vertices), s.triangles) for s in tset.shapes]
    return TrainingSet(shapes, record)


def assemble_data(tset: TrainingSet) -> np.ndarray:
    """Stack per-vertex coordinates across shapes into an (n_v, 3*n_s) array.

    Row j is the data vector h_j: shape i occupies columns [3i, 3i+3).
    """
    return np.concatenate([s.vertices for s in tset.shapes], axis=1)


def unstack_data(data: np.ndarray) -> np.ndarray:
    """Inverse of assemble_data: (n_v, 3*n_s) -> (n_s, n_v, 3)."""
    n_v, d = data.shape
    n_s = d // 3
    return data.reshape(n_v, n_s, 3).transpose(1, 0, 2)


def boundary_triangles(triangles: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Boolean mask of triangles whose vertices span two or more labels."""
    tl = np.asarray(labels)[triangles]
    return (tl[:, 0] != tl[:, 1]) | (tl[:, 1] != tl[:, 2]) | (tl[:, 0] != tl[:, 2])


def write_labeled_mesh(mesh: Mesh, labels, path: str) -> None:
    """Write a mesh with per-vertex part labels.

    Emits the OBJ with vertex colors from the fixed palette, a ``.labels``
    sidecar (one integer label per line, 0-based part ids) and a
    ``.boundary`` sidecar listing the indices of triangles whose vertices
    span two or more labels.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (mesh.n_v,):
        raise IoError(f"labels length {labels.shape} does not match n_v={mesh.n_v}")
    colors = LABEL_PALETTE[labels % len(LABEL_PALETTE)]
    write_obj(mesh, path, colors=colors)
    base = os.path.splitext(path)[0]
    try:
        with open(base + ".labels", "w") as fh:
            fh.write("\n".join(str(l) for l in labels) + "\n")
        bmask = boundary_triangles(mesh.triangles, labels)
        with open(base + ".boundary", "w") as fh:
            fh.write("\n".join(str(i) for i in np.flatnonzero(bmask)) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write sidecar for {path}: {exc}") from exc


def read_labels(path: str) -> np.ndarray:
    """Read a ``.labels`` sidecar file."""
    try:
        with open(path) as fh:
            return np.array([int(line) for line in fh if line.strip()], dtype=np.int64)
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot read labels {path}: {exc}") from exc
