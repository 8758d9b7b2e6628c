"""Dense symmetric-matrix primitives.

Everything here is a pure function of its inputs. Eigendecompositions are
returned with eigenvalues sorted non-increasing and eigenvectors sign-fixed
so that the first clearly nonzero entry of each column is positive.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from errors import (
    InvalidInputError,
    InvalidRankError,
    NotPSDError,
    ShapeError,
    UnsupportedPowerError,
)


SYMMETRY_RTOL = 1e-9
PSD_RTOL = 1e-8
CLAMP_FACTOR = 1e-12
SIGN_TOL = 1e-12
SUPPORTED_POWERS = (0.5, -0.5)


@dataclass(frozen=True)
class EigenDecomposition:
    vectors: np.ndarray
    values: np.ndarray

    @property
    def dim(self):
        return self.values.shape[0]

    def recompose(self):
        return _symmetrize((self.vectors * self.values) @ self.vectors.T)


def as_matrix(values, name="matrix"):
    """Validate a non-empty, finite 2-D float array and return it as float64."""
    try:
        arr = np.asarray(values, dtype=np.float64)
    except (TypeError, ValueError) as ex:
        raise InvalidInputError(f"{name} is not numeric: {ex}") from ex
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    finite = np.isfinite(arr)
    if not finite.all():
        row, col = np.argwhere(~finite)[0]
        raise InvalidInputError(f"{name} has a non-finite entry at row {row}, column {col}")
    return arr


def as_symmetric(values, name="matrix"):
    S = as_matrix(values, name)
    if S.shape[0] != S.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {S.shape}")
    if np.any(np.abs(S - S.T) > SYMMETRY_RTOL * (1.0 + np.abs(S))):
        raise InvalidInputError(f"{name} is not symmetric")
    return _symmetrize(S)


def _symmetrize(S):
    return (S + S.T) / 2.0


def _fix_signs(vectors):
    dim = vectors.shape[1]
    first = np.argmax(np.abs(vectors) > SIGN_TOL, axis=0)
    signs = np.sign(vectors[first, np.arange(dim)])
    signs[signs == 0] = 1.0
    return vectors * signs


def sym_eig(S):
    S = as_symmetric(S)
    values, vectors = eigh(S)
    values = values[::-1].copy()
    vectors = _fix_signs(np.ascontiguousarray(vectors[:, ::-1]))
    return EigenDecomposition(vectors=vectors, values=values)


def default_rank_tol(dim):
    return dim * np.finfo(np.float64).eps


def _rank_threshold(E, rank_tol):
    if rank_tol is None:
        rank_tol = default_rank_tol(E.dim)
    return rank_tol * max(float(E.values.max()), 0.0)


def numerical_rank(E, rank_tol=None):
    """Count eigenvalues above rank_tol times the largest (non-negative) eigenvalue."""
    return int(np.count_nonzero(E.values > _rank_threshold(E, rank_tol)))


def matrix_power(S, p):
    if p not in SUPPORTED_POWERS:
        raise UnsupportedPowerError(f"matrix power {p} is not supported; use one of {SUPPORTED_POWERS}")
    E = sym_eig(S)
    top = max(float(E.values.max()), 0.0)
    if E.values.min() < -PSD_RTOL * top:
        raise NotPSDError(f"matrix is not positive semi-definite (smallest eigenvalue {E.values.min():.3e})")

    if p > 0:
        powered = np.sqrt(np.clip(E.values, 0.0, None))
    else:
        # clamp keeps near-singular covariances finite
        clamp = CLAMP_FACTOR * max(top, 1.0)
        powered = 1.0 / np.sqrt(np.maximum(E.values, clamp))
    return _symmetrize((E.vectors * powered) @ E.vectors.T)


def pseudo_inverse_sqrt(E, rank_tol=None):
    """U (Sigma^+)^(1/2) U^T: inverse square roots on the numerical range, zero elsewhere."""
    keep = E.values > _rank_threshold(E, rank_tol)
    powered = np.zeros_like(E.values)
    powered[keep] = 1.0 / np.sqrt(E.values[keep])
    return _symmetrize((E.vectors * powered) @ E.vectors.T)


def truncated_reconstruction(E, r):
    if isinstance(r, bool) or not isinstance(r, (int, np.integer)) or not 0 <= r <= E.dim:
        raise InvalidRankError(f"rank {r!r} is outside [0, {E.dim}]")
    head = E.vectors[:, :r]
    return _symmetrize((head * E.values[:r]) @ head.T)


def frobenius_distance(X, Y):
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    if X.shape != Y.shape:
        raise ShapeError(f"cannot compare matrices of shape {X.shape} and {Y.shape}")
    return float(np.linalg.norm(X - Y, "fro"))


def spectrum_summary(S, rank_tol=None):
    E = sym_eig(S)
    top = float(E.values[0])
    bottom = float(E.values[-1])
    return {
        "top_eigenvalue": top,
        "rank": numerical_rank(E, rank_tol),
        "condition": top / bottom if bottom > 0 else float("inf"),
    }
