"""Set-level and paired metrics over embeddings and class posteriors."""

from __future__ import annotations

import logging
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg

from Engine.errors import NumericError, ParameterError


logger = logging.getLogger(__name__)

FD_EPS = 1e-6
KL_EPS = 1e-10


def _as_set(vectors: Sequence | np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ParameterError(f"{name} must be a set of vectors, got shape {x.shape}")
    if x.shape[0] < 2:
        raise ParameterError(f"{name} needs at least 2 vectors, got {x.shape[0]}")
    return x


def _psd_sqrt(sigma: np.ndarray) -> np.ndarray:
    w, v = linalg.eigh(sigma)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_distance(emb_a: Sequence | np.ndarray, emb_b: Sequence | np.ndarray, eps: float = FD_EPS) -> float:
    """Squared Frechet distance between Gaussian fits; eps * I regularizes both covariances.

    The cross term is tr sqrt(S_a^1/2 S_b S_a^1/2), taken from symmetric
    eigendecompositions so rank-deficient sets stay real and non-negative.
    """
    a, b = _as_set(emb_a, "emb_a"), _as_set(emb_b, "emb_b")
    if a.shape[1] != b.shape[1]:
        raise ParameterError(f"embedding dims differ: {a.shape[1]} vs {b.shape[1]}")
    d = a.shape[1]
    if min(a.shape[0], b.shape[0]) < d + 1:
        logger.debug("fewer than d+1 vectors for d=%d; covariance is rank deficient", d)

    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    sigma_a = np.atleast_2d(np.cov(a, rowvar=False)) + eps * np.eye(d)
    sigma_b = np.atleast_2d(np.cov(b, rowvar=False)) + eps * np.eye(d)

    root_a = _psd_sqrt(sigma_a)
    inner = root_a @ sigma_b @ root_a
    cross = float(np.sqrt(np.clip(linalg.eigvalsh(0.5 * (inner + inner.T)), 0.0, None)).sum())
    diff = mu_a - mu_b
    scale = float(np.trace(sigma_a) + np.trace(sigma_b))
    fd = float(diff @ diff) + scale - 2.0 * cross
    if fd < -1e-6 * max(scale, 1.0):
        raise NumericError(f"Frechet distance came out negative ({fd})")
    return max(fd, 0.0)


def _as_distribution(p: np.ndarray, name: str) -> np.ndarray:
    if np.any(p < 0) or abs(float(p.sum()) - 1.0) > 1e-6:
        raise ParameterError(f"{name} is not a probability vector (sum {p.sum()})")
    return p


def paired_kl(
    p_ref: Sequence[float] | Mapping[str, float] | np.ndarray,
    p_est: Sequence[float] | Mapping[str, float] | np.ndarray,
    eps: float = KL_EPS,
) -> float:
    """KL(p_ref || p_est) over one label set, with eps-floored and renormalized probabilities."""
    if isinstance(p_ref, Mapping) or isinstance(p_est, Mapping):
        if not (isinstance(p_ref, Mapping) and isinstance(p_est, Mapping)) or set(p_ref) != set(p_est):
            raise ParameterError("posteriors are over different label sets")
        labels = sorted(p_ref)
        p_ref = [p_ref[k] for k in labels]
        p_est = [p_est[k] for k in labels]
    p = _as_distribution(np.asarray(p_ref, dtype=np.float64).reshape(-1), "p_ref")
    q = _as_distribution(np.asarray(p_est, dtype=np.float64).reshape(-1), "p_est")
    if p.shape != q.shape:
        raise ParameterError(f"posteriors have {p.size} and {q.size} classes")
    p = np.maximum(p, eps)
    q = np.maximum(q, eps)
    p, q = p / p.sum(), q / q.sum()
    return max(float(np.sum(p * np.log(p / q))), 0.0)


def embedding_cosine(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    a = np.asarray(getattr(a, "data", a), dtype=np.float64).reshape(-1)
    b = np.asarray(getattr(b, "data", b), dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ParameterError(f"embedding dims differ: {a.size} vs {b.size}")
    norm_a, norm_b = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise NumericError("cosine of a zero-norm embedding")
    return float(np.clip(a @ b / (norm_a * norm_b), -1.0, 1.0))
