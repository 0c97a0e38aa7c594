import numpy as np
import pytest

import posemfa as pm
import posemfa.mfa as mfa


@pytest.fixture(scope="session")
def default_chain():
    """Normalized default chain (noise 1e-3) with ground truth and data."""
    tset, truth = pm.generate_chain(pm.default_chain_spec(rng_seed=0))
    tset = pm.normalize_unit_box(tset)
    return tset, truth, pm.assemble_data(tset)


@pytest.fixture(scope="session")
def noiseless_chain():
    tset, truth = pm.generate_chain(pm.default_chain_spec(noise_sigma=0.0))
    tset = pm.normalize_unit_box(tset)
    return tset, truth, pm.assemble_data(tset)


@pytest.fixture(scope="session")
def fitted_chain(default_chain):
    """Ground-truth-label-initialized AECM fit of the default chain."""
    tset, truth, data = default_chain
    model = pm.aecm_fit(data, mfa.labels_to_responsibilities(truth.labels))
    return tset, truth, data, model


def permuted_label_accuracy(pred, true, n_true):
    """Best label agreement over permutations of predicted part ids."""
    import itertools

    pred = np.asarray(pred)
    true = np.asarray(true)
    ids = np.unique(pred)
    best = 0
    for perm in itertools.permutations(range(n_true), min(len(ids), n_true)):
        hits = sum(np.sum((pred == a) & (true == b)) for a, b in zip(ids, perm))
        best = max(best, hits)
    return best / len(true)
