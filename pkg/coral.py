"""Correlation alignment transforms.

Covariance estimation, the regularized whiten/re-color transform, the
closed-form low-rank solution, and the feature-space and weight-space
ways of applying either of them. Features are rows; a transform A acts as
F @ A.
"""
from dataclasses import dataclass, replace

import numpy as np

from classifier import LinearModel
from errors import InsufficientSamplesError, InvalidInputError, ShapeError, SingularCovarianceError
from linalg import (
    as_matrix,
    matrix_power,
    numerical_rank,
    pseudo_inverse_sqrt,
    sym_eig,
    truncated_reconstruction,
)


DEFAULT_LAMBDA = 1.0
REGULARIZED = "regularized"
ANALYTICAL = "analytical"


@dataclass(frozen=True)
class CoralTransform:
    matrix: np.ndarray
    lam: float
    mode: str
    rank: int

    @property
    def dim(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class NormalizationStats:
    means: np.ndarray
    stds: np.ndarray


def _check_samples(F, name):
    if F.shape[0] < 2:
        raise InsufficientSamplesError(f"{name} needs at least 2 rows, got {F.shape[0]}")


def _check_pair(source, target):
    S = as_matrix(source, "source")
    T = as_matrix(target, "target")
    if S.shape[1] != T.shape[1]:
        raise ShapeError(f"source has {S.shape[1]} features, target has {T.shape[1]}")
    _check_samples(S, "source")
    _check_samples(T, "target")
    return S, T


def estimate_covariance(features, lam=0.0):
    """Sample covariance (n - 1 denominator) plus lam on the diagonal."""
    F = as_matrix(features, "features")
    _check_samples(F, "covariance estimate")
    if lam < 0:
        raise InvalidInputError(f"lambda must be non-negative, got {lam}")
    C = np.atleast_2d(np.cov(F, rowvar=False))
    C = (C + C.T) / 2.0
    return C + lam * np.eye(C.shape[0])


def coral_regularized(source, target, lam=DEFAULT_LAMBDA):
    """Whiten the source with (C_S + lam I)^(-1/2), re-color with (C_T + lam I)^(1/2)."""
    S, T = _check_pair(source, target)
    cov_source = estimate_covariance(S, lam)
    cov_target = estimate_covariance(T, lam)

    if lam == 0:
        for name, cov in (("source", cov_source), ("target", cov_target)):
            rank = numerical_rank(sym_eig(cov))
            if rank < cov.shape[0]:
                raise SingularCovarianceError(
                    f"{name} covariance has rank {rank} < {cov.shape[0]} and lambda is 0; "
                    f"use the analytical mode or a positive lambda"
                )

    A = matrix_power(cov_source, -0.5) @ matrix_power(cov_target, 0.5)
    transform = CoralTransform(matrix=A, lam=float(lam), mode=REGULARIZED, rank=A.shape[0])
    return apply_transform(S, transform), transform


def coral_analytical(source, target, rank_tol=None):
    """Closed-form minimizer of ||A^T C_S A - C_T||_F for possibly rank-deficient covariances.

    A = U_S (Sigma_S^+)^(1/2) U_S^T . U_T[:r] Sigma_T[:r]^(1/2) U_T[:r]^T with
    r = min(rank C_S, rank C_T).

    It is a minimizer, reaching the truncated target covariance, only when the kept target
    eigenvectors lie inside range(C_S). Otherwise the part of U_T[:r] outside
    the source range is projected away: for disjoint ranges A is zero and the
    residual is ||C_T||_F, not the truncation error.
    """
    S, T = _check_pair(source, target)
    eig_source = sym_eig(estimate_covariance(S))
    eig_target = sym_eig(estimate_covariance(T))
    r = min(numerical_rank(eig_source, rank_tol), numerical_rank(eig_target, rank_tol))

    whitening = pseudo_inverse_sqrt(eig_source, rank_tol)
    head = eig_target.vectors[:, :r]
    recoloring = (head * np.sqrt(np.clip(eig_target.values[:r], 0.0, None))) @ head.T
    return CoralTransform(matrix=whitening @ recoloring, lam=0.0, mode=ANALYTICAL, rank=r)


def aligned_target_covariance(target, transform):
    """The covariance the analytical transform reproduces: C_T truncated to the transform's rank."""
    return truncated_reconstruction(sym_eig(estimate_covariance(target)), transform.rank)


def apply_transform(features, transform):
    F = as_matrix(features, "features")
    if F.shape[1] != transform.dim:
        raise ShapeError(f"features have {F.shape[1]} columns, transform is {transform.dim}x{transform.dim}")
    return F @ transform.matrix


def pull_back_weights(model, transform):
    """Fold the transform into the classifier: scores on u equal the original model's scores on u @ A."""
    if model.dim != transform.dim:
        raise ShapeError(f"model has {model.dim} features, transform is {transform.dim}x{transform.dim}")
    # each direction w becomes A w; biases untouched
    return replace(model, weights=model.weights @ transform.matrix.T, biases=model.biases.copy())


def whiten(features, lam=DEFAULT_LAMBDA):
    """Map features to identity covariance with (C + lam I)^(-1/2); lam = 0 whitens the numerical range only."""
    F = as_matrix(features, "features")
    cov = estimate_covariance(F, lam)
    if lam == 0:
        W = pseudo_inverse_sqrt(sym_eig(cov))
    else:
        W = matrix_power(cov, -0.5)
    return F @ W


def normalize_features(features):
    """Per-column zero mean and unit sample standard deviation; constant columns become zero."""
    F = as_matrix(features, "features")
    _check_samples(F, "normalization")
    means = F.mean(axis=0)
    stds = F.std(axis=0, ddof=1)
    stds[np.ptp(F, axis=0) == 0] = 0.0
    stats = NormalizationStats(means=means, stds=stds)
    return apply_normalization(F, stats), stats


def apply_normalization(features, stats):
    F = as_matrix(features, "features")
    if F.shape[1] != stats.means.shape[0]:
        raise ShapeError(f"features have {F.shape[1]} columns, statistics cover {stats.means.shape[0]}")
    constant = stats.stds == 0
    out = (F - stats.means) / np.where(constant, 1.0, stats.stds)
    out[:, constant] = 0.0
    return out
