"""Rotation-constrained mixtures of factor analyzers and the two-cycle
AECM optimizer.

Each mixture component k models the stacked trajectory h of a vertex as

    h = A_k z + b_k + eps,   A_k = [R_k^1 L_k; ...; R_k^{n_s} L_k],

with z ~ N(0, I_3), L_k a non-negative diagonal 3x3 scale, R_k^i proper
rotations, and isotropic per-shape noise eps ~ N(0, diag(s_k^1 I_3, ...)).
The marginal covariance A_k A_k^T + Phi_k couples all shape blocks
through the shared latent z, but its rank-3 structure lets the Woodbury
identity and the matrix determinant lemma reduce densities and latent
posteriors to 3x3 rotation products and diagonal 3-vector algebra, so
the dense 3n_s x 3n_s matrix is never formed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from sklearn.cluster import KMeans

from .errors import (
    AllZeroLikelihood,
    EmptyComponent,
    NegativeEigenvalue,
    SingularCovariance,
)

# Floor on the per-shape noise variance; keeps covariances invertible on
# noiseless synthetic data.
EPS_VAR = 1e-12

# A component whose responsibility mass drops below EPS_EMPTY * n_v is
# dropped and the remaining weights renormalized.
EPS_EMPTY = 1e-6

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class FactorAnalyzer:
    """One mixture component.

    rotations: (n_s, 3, 3) proper rotations R_k^i.
    scale:     (3,) diagonal of L_k, non-negative, descending.
    mean:      (n_s, 3) per-shape translation b_k^i.
    noise:     (n_s,) per-shape isotropic variances s_k^i (>= EPS_VAR).
    weight:    mixing proportion pi_k.
    """

    rotations: np.ndarray
    scale: np.ndarray
    mean: np.ndarray
    noise: np.ndarray
    weight: float

    @property
    def n_s(self) -> int:
        return len(self.rotations)

    def mean_flat(self) -> np.ndarray:
        """b_k as a single stacked (3*n_s,) vector."""
        return self.mean.reshape(-1)

    def loading_flat(self) -> np.ndarray:
        """A_k = stacked R_k^i L_k as a dense (3*n_s, 3) matrix."""
        return (self.rotations * self.scale[None, None, :]).reshape(-1, 3)

    def phi_flat(self) -> np.ndarray:
        """Diagonal of Phi_k as a (3*n_s,) vector."""
        return np.repeat(self.noise, 3)


@dataclass
class MixtureModel:
    """Fitted mixture: components, responsibilities, labels, likelihood trace."""

    components: list[FactorAnalyzer]
    responsibilities: np.ndarray = None
    labels: np.ndarray = None
    log_likelihood_trace: list[float] = field(default_factory=list)

    @property
    def m(self) -> int:
        return len(self.components)

    @property
    def n_s(self) -> int:
        return self.components[0].n_s

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.components])


def _as_blocks(data: np.ndarray) -> np.ndarray:
    """(n, 3*n_s) data rows -> (n, n_s, 3) per-shape blocks."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    return data.reshape(data.shape[0], -1, 3)


def component_log_density(data: np.ndarray, fa: FactorAnalyzer) -> np.ndarray:
    """log N(h; b_k, A_k A_k^T + Phi_k) for each row of data.

    The full covariance couples all shape blocks through the shared
    3-dimensional latent variable, so it is never formed; the Woodbury
    identity and the matrix determinant lemma reduce everything to
    per-shape 3x3 rotations plus diagonal 3-vector algebra:

        quad   = sum_i |x_i|^2 / s_i - sum_d u_d^2 / (1 + g_d),
        logdet = sum_i 3 log s_i + sum_d log(1 + g_d),

    with u = L sum_i R_i^T x_i / s_i and g = diag(L)^2 sum_i 1/s_i.

    Accepts a single (3*n_s,) vector or an (n, 3*n_s) array; returns a
    scalar or an (n,) array accordingly.
    """
    single = np.asarray(data).ndim == 1
    blocks = _as_blocks(data) - fa.mean[None, :, :]
    if np.any(fa.noise <= 0.0) or not np.all(np.isfinite(fa.noise)):
        raise SingularCovariance("non-positive noise variance")
    g = fa.scale**2 * np.sum(1.0 / fa.noise)  # (3,)
    y = np.einsum("nid,ide->nie", blocks, fa.rotations)  # R_i^T x_i
    u = np.sum(y / fa.noise[None, :, None], axis=1) * fa.scale[None, :]
    quad = (np.sum(blocks * blocks / fa.noise[None, :, None], axis=(1, 2))
            - np.sum(u * u / (1.0 + g)[None, :], axis=1))
    logdet = 3.0 * float(np.sum(np.log(fa.noise))) + float(np.sum(np.log1p(g)))
    out = -0.5 * (3 * fa.n_s * LOG_2PI + logdet + quad)
    return out[0] if single else out


def posterior_moments(data: np.ndarray, fa: FactorAnalyzer):
    """Latent posterior moments E(z|h) and the conditional covariance.

    Returns (mean, cond_cov) where mean is (n, 3) (or (3,) for a single
    vector) and cond_cov is the shared 3x3 conditional covariance
    I - beta_k A_k, which here is diagonal. The posterior second moment of
    row n is cond_cov + mean[n] mean[n]^T.

    The Woodbury identity reduces beta_k to 3x3 diagonal algebra:
    with g = scale^2 * sum_i 1/noise_i,
        E(z|h) = (I + g)^{-1} L sum_i R_i^T (h_i - b_i) / noise_i,
        I - beta A = (I + g)^{-1}.
    """
    single = np.asarray(data).ndim == 1
    blocks = _as_blocks(data) - fa.mean[None, :, :]
    if np.any(fa.noise <= 0.0):
        raise SingularCovariance("non-positive noise variance")
    g = fa.scale**2 * np.sum(1.0 / fa.noise)  # (3,)
    denom = 1.0 + g
    y = np.einsum("nid,ide->nie", blocks, fa.rotations)  # R_i^T x_i
    proj = np.sum(y / fa.noise[None, :, None], axis=1) * fa.scale[None, :]
    mean = proj / denom[None, :]
    cond_cov = np.diag(1.0 / denom)
    if single:
        return mean[0], cond_cov
    return mean, cond_cov


def log_joint(data: np.ndarray, components: list[FactorAnalyzer]) -> np.ndarray:
    """(m, n) matrix of log(pi_k) + log P(h_j | Theta_k)."""
    rows = []
    for fa in components:
        w = fa.weight
        logw = np.log(w) if w > 0 else -np.inf
        rows.append(logw + component_log_density(data, fa))
    return np.vstack(rows)


def responsibilities(data: np.ndarray, components: list[FactorAnalyzer]) -> np.ndarray:
    """Posterior component probabilities gamma_{kj}, columns summing to 1."""
    lj = log_joint(data, components)
    norm = logsumexp(lj, axis=0)
    if not np.all(np.isfinite(norm)):
        raise AllZeroLikelihood("all components underflowed for some vertex")
    return np.exp(lj - norm[None, :])


def log_likelihood(data: np.ndarray, components: list[FactorAnalyzer]) -> float:
    """Total data log-likelihood sum_j log sum_k pi_k P(h_j | Theta_k)."""
    return float(np.sum(logsumexp(log_joint(data, components), axis=0)))


def update_pi_b(gamma: np.ndarray, data: np.ndarray):
    """Cycle-1 CM step: mixing weights and weighted means.

    Returns (pi, b) with pi (m,) and b (m, 3*n_s). Raises EmptyComponent
    when a component's responsibility mass falls below the drop threshold.
    """
    gamma = np.asarray(gamma)
    n_v = gamma.shape[1]
    mass = gamma.sum(axis=1)
    if np.any(mass < EPS_EMPTY * n_v):
        k = int(np.argmin(mass))
        raise EmptyComponent(f"component {k} mass {mass[k]:.3e} below threshold")
    pi = mass / n_v
    b = (gamma @ np.atleast_2d(data)) / mass[:, None]
    return pi, b


def mixture_covariance(weights: np.ndarray, shape_vertices: np.ndarray,
                       b_i: np.ndarray) -> np.ndarray:
    """Weighted 3x3 scatter of one shape about its component mean.

    weights are the normalized responsibilities gamma_kj / sum_j gamma_kj;
    shape_vertices is (n_v, 3) and b_i the component's mean on that shape.
    """
    x = shape_vertices - b_i[None, :]
    return (weights[:, None] * x).T @ x


def update_lambda(cov_blocks: np.ndarray) -> np.ndarray:
    """Diagonal scale from per-shape scatter matrices.

    Eigenvalues of each 3x3 block are sorted descending, averaged across
    shapes, and square-rooted. Small negative eigenvalues (round-off) are
    clamped to zero; larger ones raise NegativeEigenvalue.
    """
    eig = np.linalg.eigvalsh(cov_blocks)  # ascending per block
    eig = eig[..., ::-1]
    if np.any(eig < -1e-12):
        raise NegativeEigenvalue(f"eigenvalue {eig.min():.3e} below tolerance")
    eig = np.clip(eig, 0.0, None)
    return np.sqrt(eig.mean(axis=0))


def constrained_rotation(B: np.ndarray) -> np.ndarray:
    """Proper rotation maximizing trace(B @ R).

    With B = U D V^T (singular values descending), the maximizer over
    right-handed rotations is V U^T, or V diag(1,1,-1) U^T when V U^T is
    left-handed; the attained value is trace(D) or trace(D diag(1,1,-1)).
    """
    U, _, Vt = np.linalg.svd(B)
    R = Vt.T @ U.T
    if np.linalg.det(R) < 0.0:
        R = (Vt.T * np.array([1.0, 1.0, -1.0])[None, :]) @ U.T
    return R


def update_rotations(weights: np.ndarray, latent_mean: np.ndarray,
                     shape_blocks: np.ndarray, b: np.ndarray,
                     scale: np.ndarray) -> np.ndarray:
    """Per-shape Procrustes rotations for one component.

    weights: (n_v,) responsibilities; latent_mean: (n_v, 3) posterior
    means; shape_blocks: (n_s, n_v, 3); b: (n_s, 3); scale: (3,).
    For each shape, B_i = L sum_j w_j E(z|h_j) (v_j^i - b^i)^T and the
    rotation is the constrained Procrustes maximizer of trace(B_i R).
    """
    wz = weights[:, None] * latent_mean  # (n_v, 3)
    x = shape_blocks - b[:, None, :]
    Bs = scale[None, :, None] * np.einsum("jz,ijd->izd", wz, x)
    return np.stack([constrained_rotation(B) for B in Bs])


def update_phi(weights: np.ndarray, latent_mean: np.ndarray, cond_cov: np.ndarray,
               shape_blocks: np.ndarray, b: np.ndarray, rotations: np.ndarray,
               scale: np.ndarray, mass: float) -> np.ndarray:
    """Per-shape isotropic noise variances for one component.

    Computes the diagonal of the residual second moment
        sum_j (w_j / mass) [x x^T - 2 x (A E(z))^T + A E(zz^T) A^T]
    per shape, averages the three diagonal entries, and floors at EPS_VAR.
    """
    w = weights / mass
    x = shape_blocks - b[:, None, :]  # (n_s, n_v, 3)
    A = rotations * scale[None, None, :]  # (n_s, 3, 3)
    d1 = np.einsum("j,ijd->id", w, x * x)
    az = np.einsum("ide,je->ijd", A, latent_mean)  # A_i E(z|h_j)
    d2 = -2.0 * np.einsum("j,ijd->id", w, x * az)
    # sum_j w_j E(zz^T) = mass-normalized cond_cov + weighted outer products
    mbar = cond_cov * w.sum() + (w[:, None] * latent_mean).T @ latent_mean
    d3 = np.einsum("ide,ef,idf->id", A, mbar, A)
    diag = d1 + d2 + d3
    return np.maximum(diag.mean(axis=1), EPS_VAR)


def _init_components(data: np.ndarray, gamma: np.ndarray) -> list[FactorAnalyzer]:
    """Initial parameters from a starting responsibility matrix.

    Rotations start at identity; the scale comes from the eigenvalue
    average of the per-shape scatter and the noise from the within-cluster
    variance.
    """
    blocks = unstack(data)
    pi, b = update_pi_b(gamma, data)
    comps = []
    for k in range(gamma.shape[0]):
        mass = gamma[k].sum()
        w = gamma[k] / mass
        bk = b[k].reshape(-1, 3)
        covs = np.stack([mixture_covariance(w, blocks[i], bk[i])
                         for i in range(blocks.shape[0])])
        scale = update_lambda(covs)
        noise = np.maximum(np.trace(covs, axis1=1, axis2=2) / 3.0, EPS_VAR)
        comps.append(FactorAnalyzer(
            rotations=np.tile(np.eye(3), (blocks.shape[0], 1, 1)),
            scale=scale, mean=bk, noise=noise, weight=float(pi[k])))
    return comps


def unstack(data: np.ndarray) -> np.ndarray:
    """(n_v, 3*n_s) -> (n_s, n_v, 3) per-shape vertex blocks."""
    data = np.atleast_2d(data)
    return data.reshape(data.shape[0], -1, 3).transpose(1, 0, 2)


def kmeans_responsibilities(data: np.ndarray, m: int, seed: int = 0) -> np.ndarray:
    """One-hot responsibilities from k-means++ on the data vectors."""
    data = np.atleast_2d(data)
    n_v = data.shape[0]
    m = min(m, n_v)
    if m == 1:
        return np.ones((1, n_v))
    km = KMeans(n_clusters=m, n_init=5, random_state=seed)
    labels = km.fit_predict(data)
    return labels_to_responsibilities(labels, m)


def labels_to_responsibilities(labels: np.ndarray, m: int | None = None) -> np.ndarray:
    """One-hot (m, n_v) responsibility matrix from integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    if m is None:
        m = int(labels.max()) + 1
    gamma = np.zeros((m, len(labels)))
    gamma[labels, np.arange(len(labels))] = 1.0
    return gamma


def _drop_empty(gamma: np.ndarray, components: list[FactorAnalyzer]):
    """Drop components below the mass threshold and renormalize weights."""
    n_v = gamma.shape[1]
    mass = gamma.sum(axis=1)
    keep = mass >= EPS_EMPTY * n_v
    if np.all(keep):
        return gamma, components, False
    components = [c for c, k in zip(components, keep) if k]
    total = sum(c.weight for c in components)
    for c in components:
        c.weight /= total
    return None, components, True


def aecm_fit(data: np.ndarray, gamma0: np.ndarray, max_iter: int = 200,
             tol: float = 1e-7) -> MixtureModel:
    """Two-cycle AECM fit from a starting responsibility matrix.

    Each iteration runs Cycle 1 (E-step, then weights and means) and
    Cycle 2 (E-step with the updated weights/means, then scale, rotations
    and noise), recording the data log-likelihood after the full
    iteration. Stops when the relative likelihood change drops below tol.
    Components that lose their responsibility mass are dropped.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    blocks = unstack(data)
    n_s = blocks.shape[0]
    components = _init_components(data, gamma0)
    trace: list[float] = []
    ll_prev = None
    gamma = gamma0

    for _ in range(max(1, max_iter)):
        # Cycle 1
        gamma = responsibilities(data, components)
        gamma, components, dropped = _drop_empty(gamma, components)
        if dropped:
            gamma = responsibilities(data, components)
        pi, b = update_pi_b(gamma, data)
        for k, fa in enumerate(components):
            fa.weight = float(pi[k])
            fa.mean = b[k].reshape(-1, 3)

        # Cycle 2
        gamma = responsibilities(data, components)
        gamma, components, dropped = _drop_empty(gamma, components)
        if dropped:
            gamma = responsibilities(data, components)
        for k, fa in enumerate(components):
            mass = gamma[k].sum()
            w = gamma[k] / mass
            covs = np.stack([mixture_covariance(w, blocks[i], fa.mean[i])
                             for i in range(n_s)])
            latent_mean, cond_cov = posterior_moments(data, fa)
            fa.scale = update_lambda(covs)
            fa.rotations = update_rotations(gamma[k], latent_mean, blocks,
                                            fa.mean, fa.scale)
            fa.noise = update_phi(gamma[k], latent_mean, cond_cov, blocks,
                                  fa.mean, fa.rotations, fa.scale, mass)

        ll = log_likelihood(data, components)
        trace.append(ll)
        if ll_prev is not None and abs(ll - ll_prev) <= tol * abs(ll_prev):
            break
        ll_prev = ll

    gamma = responsibilities(data, components)
    labels = np.argmax(gamma, axis=0)
    return MixtureModel(components=components, responsibilities=gamma,
                        labels=labels, log_likelihood_trace=trace)
