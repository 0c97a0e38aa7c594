"""Ground-truth articulated chain generator and independent brute-force
oracles used by the test and acceptance suites.

The oracles deliberately form dense matrices and invert them directly so
they share no code path with the block-structured production routines.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import DegenerateConfiguration, SingularCovariance
from .mesh_io import Mesh, TrainingSet


@dataclass
class ChainSpec:
    """Articulated chain of axis-aligned boxes joined by hinges.

    parts:  list of ((lx, ly, lz), vertex_count); counts must be >= 12 and
            are rounded up to a multiple of 8 (vertices sit on 8-point
            cross-section rings along x).
    joints: per consecutive part pair, (hinge_axis, angles) with one angle
            (radians) per pose.
    """

    parts: list
    joints: list
    n_poses: int
    noise_sigma: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if len(self.joints) != len(self.parts) - 1:
            raise ValueError("need exactly one joint per consecutive part pair")
        for _, count in self.parts:
            if count < 12:
                raise ValueError("each part needs at least 12 vertices")
        for _, angles in self.joints:
            if len(angles) != self.n_poses:
                raise ValueError("each joint needs one angle per pose")


@dataclass
class ChainTruth:
    """Ground truth emitted alongside a generated chain."""

    labels: np.ndarray             # (n_v,)
    rotations: np.ndarray          # (n_parts, n_poses, 3, 3)
    translations: np.ndarray       # (n_parts, n_poses, 3)
    reference: np.ndarray          # (n_v, 3) rest-pose vertices
    pivots: np.ndarray             # (n_parts - 1, 3) hinge pivot points
    spec: ChainSpec = None


def default_chain_spec(noise_sigma: float = 1e-3, rng_seed: int = 0) -> ChainSpec:
    """3 parts x 80 vertices, 5 poses, hinge sweeps >= 60 degrees."""
    deg = np.pi / 180.0
    return ChainSpec(
        parts=[((0.3, 0.1, 0.12), 80)] * 3,
        joints=[
            ((0.0, 0.0, 1.0), list(np.array([0.0, 18.0, 36.0, 54.0, 70.0]) * deg)),
            ((0.0, 1.0, 0.0), list(np.array([0.0, -16.0, -33.0, -50.0, -65.0]) * deg)),
        ],
        n_poses=5,
        noise_sigma=noise_sigma,
        rng_seed=rng_seed,
    )


def _ring(y_half: float, z_half: float) -> np.ndarray:
    """8 points on the boundary of the rectangular cross-section."""
    return np.array([
        (-y_half, -z_half), (0.0, -z_half), (y_half, -z_half), (y_half, 0.0),
        (y_half, z_half), (0.0, z_half), (-y_half, z_half), (-y_half, 0.0),
    ])


def _part_mesh(dims, count, x0):
    """Tube of 8-point rings along x; rings stay clear of the part ends so
    no vertex sits on a hinge pivot (pivot points are motion-ambiguous)."""
    lx, ly, lz = dims
    n_rings = max(2, int(np.ceil(count / 8)))
    xs = np.linspace(x0 + 0.08 * lx, x0 + 0.92 * lx, n_rings)
    ring = _ring(ly / 2.0, lz / 2.0)
    verts = np.array([(x, y, z) for x in xs for y, z in ring])
    tris = []
    for r in range(n_rings - 1):
        a, b = 8 * r, 8 * (r + 1)
        for c in range(8):
            d = (c + 1) % 8
            tris.append((a + c, a + d, b + c))
            tris.append((a + d, b + d, b + c))
    return verts, np.array(tris, dtype=np.int64)


def _weld_triangles(last_ring_start: int, first_ring_start: int) -> np.ndarray:
    """Triangles bridging the facing rings of two consecutive parts."""
    tris = []
    a, b = last_ring_start, first_ring_start
    for c in range(8):
        d = (c + 1) % 8
        tris.append((a + c, a + d, b + c))
        tris.append((a + d, b + d, b + c))
    return np.array(tris, dtype=np.int64)


def _axis_rotation(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return Rotation.from_rotvec(axis * angle).as_matrix()


def generate_chain(spec: ChainSpec):
    """Sample an articulated box chain under the rigid forward model.

    Returns (TrainingSet, ChainTruth). Pose i applies cumulative hinge
    rotations down the chain about the rest-pose pivots, then adds
    isotropic Gaussian noise of scale noise_sigma per vertex coordinate.
    The returned set is in model units (not normalized).
    """
    rng = np.random.default_rng(spec.rng_seed)
    n_parts = len(spec.parts)

    verts_parts, tris_all, labels = [], [], []
    x0 = 0.0
    pivots = []
    offset = 0
    ring_counts = []
    for k, (dims, count) in enumerate(spec.parts):
        v, t = _part_mesh(dims, count, x0)
        tris_all.append(t + offset)
        verts_parts.append(v)
        labels.extend([k] * len(v))
        ring_counts.append(len(v))
        if k < n_parts - 1:
            pivots.append((x0 + dims[0], 0.0, 0.0))
        x0 += dims[0]
        offset += len(v)
    # weld consecutive parts: last ring of k to first ring of k+1
    start = 0
    for k in range(n_parts - 1):
        last_ring = start + ring_counts[k] - 8
        first_ring = start + ring_counts[k]
        tris_all.append(_weld_triangles(last_ring, first_ring))
        start += ring_counts[k]

    reference = np.concatenate(verts_parts)
    triangles = np.concatenate(tris_all)
    labels = np.array(labels, dtype=np.int64)
    pivots = np.array(pivots)

    rotations = np.zeros((n_parts, spec.n_poses, 3, 3))
    translations = np.zeros((n_parts, spec.n_poses, 3))
    for i in range(spec.n_poses):
        R = np.eye(3)
        t = np.zeros(3)
        rotations[0, i] = R
        translations[0, i] = t
        for k in range(n_parts - 1):
            axis, angles = spec.joints[k]
            A = _axis_rotation(axis, angles[i])
            p = pivots[k]
            t = t + R @ (p - A @ p)
            R = R @ A
            rotations[k + 1, i] = R
            translations[k + 1, i] = t

    shapes = []
    for i in range(spec.n_poses):
        v = np.empty_like(reference)
        for k in range(n_parts):
            sel = labels == k
            v[sel] = reference[sel] @ rotations[k, i].T + translations[k, i]
        if spec.noise_sigma > 0:
            v = v + rng.normal(0.0, spec.noise_sigma, size=v.shape)
        shapes.append(Mesh(v, triangles))

    truth = ChainTruth(labels=labels, rotations=rotations,
                       translations=translations, reference=reference,
                       pivots=pivots, spec=spec)
    return TrainingSet(shapes), truth


def dense_gaussian_oracle(h: np.ndarray, b: np.ndarray, A: np.ndarray,
                          phi_diag: np.ndarray):
    """Dense-matrix evaluation of the factor-analyzer Gaussian.

    Forms the full covariance A A^T + diag(phi) and inverts it directly.
    Returns (log_density, posterior_mean, posterior_covariance). Intended
    for small instances in tests only.
    """
    h = np.asarray(h, dtype=float)
    b = np.asarray(b, dtype=float)
    A = np.asarray(A, dtype=float)
    d = len(h)
    sigma = A @ A.T + np.diag(phi_diag)
    sign, logdet = np.linalg.slogdet(sigma)
    if sign <= 0:
        raise SingularCovariance("dense covariance not positive definite")
    diff = h - b
    sol = np.linalg.solve(sigma, diff)
    logp = -0.5 * (d * np.log(2.0 * np.pi) + logdet + diff @ sol)
    beta = A.T @ np.linalg.inv(sigma)
    mean = beta @ diff
    cov = np.eye(A.shape[1]) - beta @ A
    return logp, mean, cov


def kabsch_oracle(P: np.ndarray, Q: np.ndarray):
    """Best-fit proper rigid alignment R, t minimizing ||R P + t - Q||.

    Returns (R, t, rms). Used to check latent-shape congruence up to the
    per-part gauge; independent of the mixture code.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if len(P) < 3 or len(P) != len(Q):
        raise DegenerateConfiguration("need >= 3 point pairs")
    pc = P.mean(axis=0)
    qc = Q.mean(axis=0)
    Pc = P - pc
    Qc = Q - qc
    H = Pc.T @ Qc
    sv = np.linalg.svd(H, compute_uv=False)
    if sv[1] < 1e-12 * max(sv[0], 1.0):
        raise DegenerateConfiguration("points are collinear")
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    t = qc - R @ pc
    rms = float(np.sqrt(np.mean(np.sum((Pc @ R.T - Qc) ** 2, axis=1))))
    return R, t, rms
