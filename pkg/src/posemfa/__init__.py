"""Articulated pose learning from corresponded mesh populations via
rotation-constrained mixtures of factor analyzers."""

__version__ = "0.1.0"

from . import errors, hierarchy, interpolation, mesh_io, mfa, model_io, synthetic
from .hierarchy import (
    LatentShape,
    assign_labels,
    hierarchical_fit,
    latent_shape,
    reconstruct,
    reconstruction_residuals,
)
from .interpolation import PartGraph, build_part_graph, interpolate_pose, slerp
from .mesh_io import (
    Mesh,
    TrainingSet,
    assemble_data,
    load_sequence,
    normalize_unit_box,
    write_labeled_mesh,
)
from .mfa import FactorAnalyzer, MixtureModel, aecm_fit
from .model_io import ModelArtifact, load_model, save_model
from .synthetic import ChainSpec, default_chain_spec, generate_chain
