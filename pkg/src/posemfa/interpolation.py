"""Pose interpolation: part adjacency graph with joint contact points,
quaternion SLERP of per-part rotations, and translation propagation that
keeps adjacent parts in contact.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from . import mfa
from .errors import IndexOutOfRange
from .hierarchy import LatentShape
from .mesh_io import Mesh, ScaleRecord


@dataclass
class JointEdge:
    """Adjacency between two parts across boundary triangles.

    contact_points: (n_s, 3) per-shape mass centers of the boundary
    region; latent_p / latent_c are its latent-space images under the two
    incident components.
    """

    parts: tuple
    contact_points: np.ndarray
    latent_p: np.ndarray
    latent_c: np.ndarray


@dataclass
class PartGraph:
    nodes: list
    edges: dict = field(default_factory=dict)  # (p, c) sorted tuple -> JointEdge

    def neighbors(self, k: int):
        for (p, c) in self.edges:
            if p == k:
                yield c
            elif c == k:
                yield p

    def edge(self, a: int, b: int) -> JointEdge:
        return self.edges[(min(a, b), max(a, b))]

    def connected_components(self) -> list:
        seen = set()
        comps = []
        for start in self.nodes:
            if start in seen:
                continue
            comp = []
            queue = deque([start])
            seen.add(start)
            while queue:
                c = queue.popleft()
                comp.append(c)
                for nb in self.neighbors(c):
                    if nb not in seen:
                        seen.add(nb)
                        queue.append(nb)
            comps.append(comp)
        return comps


@dataclass
class PoseBlend:
    """Interpolated per-part pose between two training shapes."""

    source: int
    target: int
    t: float
    rotations: dict      # part -> 3x3
    translations: dict   # part -> (3,)
    parent: dict         # BFS spanning forest, roots map to themselves
    roots: list
    joint_residuals: dict  # edge -> contact mismatch norm
    part_angles: dict      # part -> geodesic angle between endpoint rotations


def rotation_angle(R: np.ndarray) -> float:
    """Geodesic rotation angle of a single rotation matrix."""
    c = (np.trace(R) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def slerp(Ra: np.ndarray, Rb: np.ndarray, t: float) -> np.ndarray:
    """Spherical linear interpolation between two rotation matrices.

    Quaternions take the shortest arc (sign flip on negative dot); nearly
    parallel quaternions fall back to normalized linear interpolation.
    """
    qa = Rotation.from_matrix(Ra).as_quat()
    qb = Rotation.from_matrix(Rb).as_quat()
    dot = float(np.dot(qa, qb))
    if dot < 0.0:
        qb = -qb
        dot = -dot
    dot = min(dot, 1.0)
    theta = np.arccos(dot)
    if theta < 1e-6:
        q = (1.0 - t) * qa + t * qb
    else:
        s = np.sin(theta)
        q = np.sin((1.0 - t) * theta) / s * qa + np.sin(t * theta) / s * qb
    q = q / np.linalg.norm(q)
    return Rotation.from_quat(q).as_matrix()


def build_part_graph(vertex_blocks: np.ndarray, triangles: np.ndarray,
                     labels: np.ndarray, model: mfa.MixtureModel,
                     joint_point_mode: str = "vertex-mean") -> PartGraph:
    """Part adjacency from triangles whose vertices span several labels.

    vertex_blocks is (n_s, n_v, 3) in normalized coordinates. For each
    adjacent pair the contact point on shape i is the mean of either the
    spanning triangles' vertex positions ("vertex-mean") or their
    centroids ("centroid-mean"). A triangle with three distinct labels
    contributes to all three pairwise edges.
    """
    if joint_point_mode not in ("vertex-mean", "centroid-mean"):
        raise ValueError(f"unknown joint point mode {joint_point_mode!r}")
    labels = np.asarray(labels)
    nodes = sorted(int(k) for k in np.unique(labels))
    edge_tris: dict = {}
    tl = labels[triangles]
    for ti in range(len(triangles)):
        uniq = sorted(set(int(x) for x in tl[ti]))
        if len(uniq) < 2:
            continue
        for a in range(len(uniq)):
            for b in range(a + 1, len(uniq)):
                edge_tris.setdefault((uniq[a], uniq[b]), []).append(ti)

    graph = PartGraph(nodes=nodes)
    for (p, c), tris in edge_tris.items():
        tri_idx = np.array(tris)
        if joint_point_mode == "vertex-mean":
            vids = np.unique(triangles[tri_idx].reshape(-1))
            contact = vertex_blocks[:, vids, :].mean(axis=1)  # (n_s, 3)
        else:
            centroids = vertex_blocks[:, triangles[tri_idx], :].mean(axis=2)
            contact = centroids.mean(axis=1)
        h = contact.reshape(-1)
        # latent-space images Lambda * E(z|J); the scale is needed so the
        # contact constraint R_t @ image + b_t lives in physical units,
        # consistent with how vertices are reconstructed
        zp, _ = mfa.posterior_moments(h, model.components[p])
        zc, _ = mfa.posterior_moments(h, model.components[c])
        lat_p = zp * model.components[p].scale
        lat_c = zc * model.components[c].scale
        graph.edges[(p, c)] = JointEdge((p, c), contact, lat_p, lat_c)
    return graph


def interpolate_pose(model: mfa.MixtureModel, graph: PartGraph,
                     latent: LatentShape, residuals: np.ndarray,
                     triangles: np.ndarray, i: int, j: int, t: float,
                     scale_record: ScaleRecord | None = None):
    """Blend between training shapes i and j at parameter t in [0, 1].

    Per connected component of the part graph, the root is the part whose
    rotation changes least between the two shapes; translations of the
    other parts follow from the joint-contact constraint along a BFS
    spanning tree. Muscle residuals are blended in each part's latent
    frame. Returns (PoseBlend, Mesh); the mesh is de-normalized when a
    scale record is given.
    """
    n_s = model.n_s
    if not (0 <= i < n_s and 0 <= j < n_s):
        raise IndexOutOfRange(f"shape indices ({i}, {j}) outside [0, {n_s})")
    if not 0.0 <= t <= 1.0:
        raise IndexOutOfRange(f"t={t} outside [0, 1]")

    comps = model.components
    R_t: dict = {}
    b_t: dict = {}
    parent: dict = {}
    roots = []
    part_angles = {k: rotation_angle(comps[k].rotations[i] @ comps[k].rotations[j].T)
                   for k in graph.nodes}

    for cc in graph.connected_components():
        r = min(cc, key=lambda k: (part_angles[k], k))
        roots.append(r)
        parent[r] = r
        queue = deque([r])
        seen = {r}
        order = []
        while queue:
            c = queue.popleft()
            order.append(c)
            for nb in graph.neighbors(c):
                if nb not in seen:
                    seen.add(nb)
                    parent[nb] = c
                    queue.append(nb)
        for c in order:
            fa = comps[c]
            R_t[c] = slerp(fa.rotations[i], fa.rotations[j], t)
            if parent[c] == c:
                b_t[c] = (1.0 - t) * fa.mean[i] + t * fa.mean[j]
            else:
                p = parent[c]
                edge = graph.edge(p, c)
                ep = edge.latent_p if edge.parts[0] == p else edge.latent_c
                ec = edge.latent_c if edge.parts[1] == c else edge.latent_p
                b_t[c] = R_t[p] @ ep + b_t[p] - R_t[c] @ ec

    joint_residuals = {}
    for key, edge in graph.edges.items():
        p, c = key
        if p in R_t and c in R_t:
            lhs = R_t[p] @ edge.latent_p + b_t[p]
            rhs = R_t[c] @ edge.latent_c + b_t[c]
            joint_residuals[key] = float(np.linalg.norm(lhs - rhs))

    labels = latent.labels
    verts = np.zeros((len(labels), 3))
    for k in graph.nodes:
        sel = labels == k
        if not np.any(sel):
            continue
        fa = comps[k]
        eps_lat = ((1.0 - t) * residuals[i][sel] @ fa.rotations[i]
                   + t * residuals[j][sel] @ fa.rotations[j])
        eps_t = eps_lat @ R_t[k].T
        verts[sel] = latent.positions[sel] @ R_t[k].T + b_t[k] + eps_t

    if scale_record is not None:
        verts = scale_record.invert(verts)

    blend = PoseBlend(source=i, target=j, t=t, rotations=R_t,
                      translations=b_t, parent=parent, roots=roots,
                      joint_residuals=joint_residuals, part_angles=part_angles)
    return blend, Mesh(verts, triangles)
