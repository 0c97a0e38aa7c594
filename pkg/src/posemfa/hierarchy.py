"""Coarse-to-fine refinement of the mixture, vertex labeling, latent
reference geometry, and rigid reconstruction.

The refinement fits a coarse mixture, then re-fits each coarse part with
an increasing number of sub-components until the mean residual variance
err = sum_k trace(Phi_k) / (3 n_s m_k) falls below the threshold or stops
decreasing, and finally re-runs the global fit from the refined labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mfa
from .mesh_io import Mesh, TrainingSet

# Refinement knobs: threshold on err, relative plateau tolerance, cap on
# sub-components per coarse part, and the smallest part worth splitting.
DEFAULT_REFINE_THRESHOLD = 1e-5
PLATEAU_RTOL = 1e-3
MAX_SUBSPLIT = 8


def min_split_size(n_s: int) -> int:
    """Parts below this vertex count are not split further."""
    return 3 * (3 * n_s + 1)


@dataclass
class PartRefinement:
    """Per-coarse-part refinement record."""

    part: int
    history: list  # list of (m_k, err)
    chosen_m: int
    reason: str    # "threshold" | "plateau" | "cap" | "too_small"


@dataclass
class RefinementReport:
    initial_m: int
    final_n: int = 0
    parts: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "initial_m": self.initial_m,
            "final_n": self.final_n,
            "parts": [
                {"part": p.part, "history": [[m, e] for m, e in p.history],
                 "chosen_m": p.chosen_m, "reason": p.reason}
                for p in self.parts
            ],
        }


@dataclass
class LatentShape:
    """Per-vertex reference positions in the latent space, with labels."""

    positions: np.ndarray  # (n_v, 3)
    labels: np.ndarray     # (n_v,)


def assign_labels(data: np.ndarray, model: mfa.MixtureModel) -> np.ndarray:
    """Maximum-responsibility part id per vertex; ties go to the lowest k."""
    gamma = mfa.responsibilities(data, model.components)
    return np.argmax(gamma, axis=0)


def residual_error(model: mfa.MixtureModel) -> float:
    """Mean residual variance err = sum_k trace(Phi_k) / (3 n_s m)."""
    total = sum(float(np.sum(c.noise)) * 3.0 for c in model.components)
    return total / (3.0 * model.n_s * model.m)


def _refine_part(sub_data: np.ndarray, threshold: float, seed: int):
    """Grow the sub-component count until err converges; returns the best
    model plus the (m_k, err) history and the stopping reason."""
    history = []
    best_model = None
    best_err = None
    reason = "cap"
    for m_k in range(1, MAX_SUBSPLIT + 1):
        gamma0 = mfa.kmeans_responsibilities(sub_data, m_k, seed=seed)
        model = mfa.aecm_fit(sub_data, gamma0)
        err = residual_error(model)
        history.append((m_k, err))
        if best_err is not None and err >= best_err * (1.0 - PLATEAU_RTOL):
            reason = "plateau"
            break
        best_model, best_err = model, err
        if err < threshold:
            reason = "threshold"
            break
    return best_model, history, reason


def hierarchical_fit(tset: TrainingSet, m_init: int, seed: int = 0,
                     refine_threshold: float = DEFAULT_REFINE_THRESHOLD,
                     max_iter: int = 200, tol: float = 1e-7):
    """Coarse fit, per-part refinement, and final label-initialized fit.

    Returns (MixtureModel, RefinementReport). The TrainingSet must already
    be normalized to the unit box.
    """
    from .mesh_io import assemble_data

    data = assemble_data(tset)
    report = RefinementReport(initial_m=m_init)

    gamma0 = mfa.kmeans_responsibilities(data, m_init, seed=seed)
    coarse = mfa.aecm_fit(data, gamma0, max_iter=max_iter, tol=tol)
    coarse_labels = coarse.labels

    refined = np.zeros(tset.n_v, dtype=np.int64)
    next_label = 0
    for k in range(coarse.m):
        idx = np.flatnonzero(coarse_labels == k)
        if idx.size == 0:
            continue
        if idx.size < min_split_size(tset.n_s):
            refined[idx] = next_label
            report.parts.append(PartRefinement(
                part=k, history=[], chosen_m=1, reason="too_small"))
            next_label += 1
            continue
        sub_model, history, reason = _refine_part(data[idx], refine_threshold, seed)
        sub_labels = sub_model.labels
        # compact sub-label ids in case a sub-component was dropped
        uniq = np.unique(sub_labels)
        remap = {int(u): next_label + n for n, u in enumerate(uniq)}
        refined[idx] = [remap[int(l)] for l in sub_labels]
        next_label += len(uniq)
        report.parts.append(PartRefinement(
            part=k, history=history, chosen_m=len(uniq), reason=reason))

    gamma_final = mfa.labels_to_responsibilities(refined, next_label)
    final = mfa.aecm_fit(data, gamma_final, max_iter=max_iter, tol=tol)
    report.final_n = final.m
    return final, report


def latent_shape(data: np.ndarray, model: mfa.MixtureModel) -> LatentShape:
    """Reference positions v_ref_j = L_{I_j} E(z | h_j, Theta_{I_j})."""
    labels = model.labels
    positions = np.zeros((len(labels), 3))
    for k, fa in enumerate(model.components):
        sel = labels == k
        if not np.any(sel):
            continue
        mean, _ = mfa.posterior_moments(np.atleast_2d(data)[sel], fa)
        positions[sel] = mean * fa.scale[None, :]
    return LatentShape(positions=positions, labels=np.asarray(labels))


def reconstruct(model: mfa.MixtureModel, latent: LatentShape, i: int,
                triangles: np.ndarray) -> Mesh:
    """Rigid reconstruction of shape i: R_{I_j}^i v_ref_j + b_{I_j}^i."""
    if not 0 <= i < model.n_s:
        raise IndexError(f"shape index {i} outside [0, {model.n_s})")
    verts = np.zeros((len(latent.labels), 3))
    for k, fa in enumerate(model.components):
        sel = latent.labels == k
        if not np.any(sel):
            continue
        verts[sel] = latent.positions[sel] @ fa.rotations[i].T + fa.mean[i]
    return Mesh(verts, triangles)


def reconstruction_residuals(model: mfa.MixtureModel, latent: LatentShape,
                             data: np.ndarray) -> np.ndarray:
    """Per-shape per-vertex residuals eps_j^i = v_j^i - (R v_ref + b).

    Returns an (n_s, n_v, 3) array; these are the muscle-movement terms
    blended during pose interpolation.
    """
    blocks = mfa.unstack(data)
    res = np.empty_like(blocks)
    for i in range(blocks.shape[0]):
        rec = reconstruct(model, latent, i, np.empty((0, 3), dtype=np.int64))
        res[i] = blocks[i] - rec.vertices
    return res
