"""One-vs-rest linear SVM base classifier, C selection and scoring."""
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.metrics import accuracy_score
from sklearn.model_selection import StratifiedKFold
from sklearn.svm import LinearSVC

from console import log
from errors import (
    DegenerateLabelsError,
    InputError,
    InvalidInputError,
    ShapeError,
    StratificationError,
)
from linalg import as_matrix


DEFAULT_C_GRID = (0.001, 0.01, 0.1, 1.0, 10.0)
DEFAULT_FOLDS = 5
MAX_ITER = 5000
SOLVER_TOL = 1e-5


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def class_counts(self):
        return np.bincount(self.labels, minlength=self.n_classes)

    def take(self, indices):
        return LabeledDataset(self.features[indices], self.labels[indices], self.n_classes)

    def with_features(self, features):
        return LabeledDataset(as_matrix(features, "features"), self.labels, self.n_classes)


@dataclass(frozen=True)
class LinearModel:
    """Per-direction weights (rows) and biases; a binary model stores one direction."""

    weights: np.ndarray
    biases: np.ndarray
    C: float
    n_classes: int

    @property
    def dim(self):
        return self.weights.shape[1]


def make_dataset(features, labels, n_classes=None):
    F = as_matrix(features, "features")
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ShapeError(f"labels must be one-dimensional, got shape {y.shape}")
    if y.shape[0] != F.shape[0]:
        raise ShapeError(f"{y.shape[0]} labels for {F.shape[0]} feature rows")
    if not np.issubdtype(y.dtype, np.integer):
        if not (np.issubdtype(y.dtype, np.floating) and np.all(np.isfinite(y)) and np.all(y == np.round(y))):
            raise InvalidInputError("labels must be integers")
    y = y.astype(np.int64)
    if y.size and y.min() < 0:
        raise InvalidInputError(f"labels must be non-negative, found {y.min()}")
    top = int(y.max()) + 1 if y.size else 0
    if n_classes is None:
        n_classes = top
    elif n_classes < top:
        raise InvalidInputError(f"label {top - 1} does not fit in {n_classes} classes")
    return LabeledDataset(F, y, int(n_classes))


def _check_trainable(data):
    counts = data.class_counts()
    if np.count_nonzero(counts) < 2:
        raise DegenerateLabelsError("training needs at least two distinct classes")
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise DegenerateLabelsError(f"class {missing[0]} has no training examples")


def _fit_direction(X, positive, C, seed):
    svm = LinearSVC(C=C, loss="hinge", dual=True, tol=SOLVER_TOL, max_iter=MAX_ITER, random_state=seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ConvergenceWarning)
        svm.fit(X, positive.astype(np.int64))
    if any(issubclass(w.category, ConvergenceWarning) for w in caught):
        log(f"[WARN] [svm] solver hit {MAX_ITER} iterations before converging (C={C})")
    return svm.coef_[0].copy(), float(svm.intercept_[0])


def train_linear_svm(data, C, seed=0, binary_as_ovr=False):
    """Train one hinge-loss direction per class (a single direction for binary problems)."""
    if not C > 0:
        raise InvalidInputError(f"C must be positive, got {C}")
    _check_trainable(data)

    if data.n_classes == 2 and not binary_as_ovr:
        directions = [1]
    else:
        directions = range(data.n_classes)

    weights, biases = [], []
    for c in directions:
        w, b = _fit_direction(data.features, data.labels == c, C, seed)
        weights.append(w)
        biases.append(b)
    return LinearModel(np.vstack(weights), np.asarray(biases), float(C), data.n_classes)


def decision_scores(model, features):
    F = as_matrix(features, "features")
    if F.shape[1] != model.dim:
        raise ShapeError(f"features have {F.shape[1]} columns, model expects {model.dim}")
    return F @ model.weights.T + model.biases


def predict(model, features):
    scores = decision_scores(model, features)
    if scores.shape[1] == 1:
        return (scores[:, 0] > 0).astype(np.int64)
    # argmax returns the first maximum, so ties go to the smallest class
    return np.argmax(scores, axis=1).astype(np.int64)


def accuracy(predicted, truth):
    predicted = np.asarray(predicted).ravel()
    truth = np.asarray(truth).ravel()
    if predicted.shape != truth.shape:
        raise ShapeError(f"{predicted.shape[0]} predictions for {truth.shape[0]} labels")
    if predicted.size == 0:
        raise InputError("accuracy needs at least one label")
    return float(accuracy_score(truth, predicted))


def cross_validate_C(data, grid=DEFAULT_C_GRID, folds=DEFAULT_FOLDS, seed=0):
    """Pick the C with the best mean stratified k-fold accuracy; ties go to the smaller C."""
    if isinstance(folds, bool) or not isinstance(folds, (int, np.integer)) or folds < 2:
        raise InputError(f"folds must be an integer >= 2, got {folds!r}")
    grid = sorted(float(c) for c in grid)
    if not grid:
        raise InputError("C grid is empty")
    if grid[0] <= 0:
        raise InputError(f"C grid values must be positive, got {grid[0]}")

    counts = data.class_counts()
    short = np.flatnonzero(counts < folds)
    if short.size:
        c = short[0]
        raise StratificationError(f"class {c} has {counts[c]} examples, fewer than {folds} folds")

    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    splits = list(splitter.split(data.features, data.labels))

    best_C, best_score = None, -1.0
    for C in grid:
        scores = []
        for train_idx, test_idx in splits:
            model = train_linear_svm(data.take(train_idx), C, seed=seed)
            scores.append(accuracy(predict(model, data.features[test_idx]), data.labels[test_idx]))
        mean_score = float(np.mean(scores))
        if mean_score > best_score:
            best_C, best_score = C, mean_score
    return best_C
