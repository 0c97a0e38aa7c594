"""Binary model artifact: a single self-contained file holding the fitted
mixture, labels, latent reference geometry, connectivity, normalization
record, and the normalized training vertices.

Layout (little-endian, version 1):
  magic "PMFA", uint32 version,
  uint32 m, n_s, n_v, n_t,
  float64 scale, float64[3] offset,
  per component: float64 weight, float64[3] scale diag,
                 float64[n_s*9] rotations, float64[n_s*3] means,
                 float64[n_s] noise,
  int32[n_v] labels, float64[n_v*3] latent positions,
  int32[n_t*3] triangles, float64[n_s*n_v*3] vertices.

Writing the same artifact twice produces identical bytes, and a
load/save round trip is bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import IoError, ParseError
from .hierarchy import LatentShape
from .mesh_io import ScaleRecord
from .mfa import FactorAnalyzer, MixtureModel, responsibilities

MAGIC = b"PMFA"
VERSION = 1


@dataclass
class ModelArtifact:
    """Everything needed to segment, reconstruct, and interpolate."""

    model: MixtureModel
    latent: LatentShape
    triangles: np.ndarray
    scale_record: ScaleRecord
    vertices: np.ndarray  # (n_s, n_v, 3) normalized training vertices

    def data(self) -> np.ndarray:
        """Stacked (n_v, 3*n_s) data vectors of the training vertices."""
        n_s, n_v, _ = self.vertices.shape
        return self.vertices.transpose(1, 0, 2).reshape(n_v, 3 * n_s)


def _f64(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def _i32(a) -> bytes:
    return np.ascontiguousarray(a, dtype="<i4").tobytes()


def save_model(artifact: ModelArtifact, path: str) -> None:
    model = artifact.model
    n_s = model.n_s
    n_v = len(artifact.latent.labels)
    n_t = len(artifact.triangles)
    chunks = [MAGIC, struct.pack("<IIIII", VERSION, model.m, n_s, n_v, n_t),
              struct.pack("<d", artifact.scale_record.scale),
              _f64(artifact.scale_record.offset)]
    for fa in model.components:
        chunks.append(struct.pack("<d", fa.weight))
        chunks.append(_f64(fa.scale))
        chunks.append(_f64(fa.rotations))
        chunks.append(_f64(fa.mean))
        chunks.append(_f64(fa.noise))
    chunks.append(_i32(artifact.latent.labels))
    chunks.append(_f64(artifact.latent.positions))
    chunks.append(_i32(artifact.triangles))
    chunks.append(_f64(artifact.vertices))
    try:
        with open(path, "wb") as fh:
            fh.write(b"".join(chunks))
    except OSError as exc:
        raise IoError(f"cannot write model {path}: {exc}") from exc


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ParseError("truncated model file")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def f64(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        return np.frombuffer(self.take(8 * n), dtype="<f8").reshape(shape).copy()

    def i32(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        return np.frombuffer(self.take(4 * n), dtype="<i4").reshape(shape).astype(np.int64)


def load_model(path: str) -> ModelArtifact:
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read model {path}: {exc}") from exc
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise ParseError(f"{path}: not a model artifact")
    version, m, n_s, n_v, n_t = struct.unpack("<IIIII", r.take(20))
    if version != VERSION:
        raise ParseError(f"{path}: unsupported version {version}")
    scale = struct.unpack("<d", r.take(8))[0]
    offset = r.f64(3)
    comps = []
    for _ in range(m):
        weight = struct.unpack("<d", r.take(8))[0]
        sc = r.f64(3)
        rot = r.f64((n_s, 3, 3))
        mean = r.f64((n_s, 3))
        noise = r.f64(n_s)
        comps.append(FactorAnalyzer(rotations=rot, scale=sc, mean=mean,
                                    noise=noise, weight=weight))
    labels = r.i32(n_v)
    latent_pos = r.f64((n_v, 3))
    triangles = r.i32((n_t, 3))
    vertices = r.f64((n_s, n_v, 3))
    if r.pos != len(buf):
        raise ParseError(f"{path}: trailing bytes")

    artifact = ModelArtifact(
        model=MixtureModel(components=comps, labels=labels),
        latent=LatentShape(positions=latent_pos, labels=labels),
        triangles=triangles,
        scale_record=ScaleRecord(scale, offset),
        vertices=vertices)
    artifact.model.responsibilities = responsibilities(artifact.data(), comps)
    return artifact
