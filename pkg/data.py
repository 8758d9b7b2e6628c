"""Feature/label/model files, the subsampling protocol, and synthetic domain shifts.

File formats
------------
text matrix : first line ``n D``, then n lines of D numbers separated by spaces
binary matrix : ``CORL``, u32 n, u32 D (little-endian), n*D little-endian float64, row-major
labels : one non-negative integer per line
model : ``CMDL``, u32 L, u32 D, L*D weights, L biases, C (all little-endian float64)
"""
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from classifier import DEFAULT_C_GRID, DEFAULT_FOLDS, LabeledDataset, LinearModel, make_dataset
from errors import InvalidInputError, ParseError, ProtocolError
from linalg import as_matrix


MATRIX_MAGIC = b"CORL"
MODEL_MAGIC = b"CMDL"
HEADER = struct.Struct("<4sII")
FORMATS = ("text", "bin")
MAP_KINDS = ("random", "identity", "scaled")
MAX_MAP_CONDITION = 1e12


def _read_bytes(path):
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as ex:
        raise ParseError(f"{path}: cannot read file ({ex.strerror or ex})") from ex


def _check_finite(values, path):
    finite = np.isfinite(values)
    if not finite.all():
        row, col = np.argwhere(~finite)[0]
        raise ParseError(f"{path}: non-finite value at row {row + 1}, column {col + 1}")


def _parse_text_matrix(raw, path):
    lines = raw.decode("utf-8", errors="replace").splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise ParseError(f"{path}: empty file, expected an 'n D' header")

    header = lines[0].split()
    try:
        if len(header) != 2:
            raise ValueError
        n, dim = int(header[0]), int(header[1])
    except ValueError:
        raise ParseError(f"{path}: malformed header {lines[0]!r}, expected 'n D'") from None
    if n < 1 or dim < 1:
        raise ParseError(f"{path}: header declares an empty matrix ({n} x {dim})")
    rows = lines[1:]
    if len(rows) != n:
        raise ParseError(f"{path}: header declares {n} rows, found {len(rows)}")

    values = np.empty((n, dim), dtype=np.float64)
    for i, line in enumerate(rows):
        cells = line.split()
        if len(cells) != dim:
            raise ParseError(f"{path}: row {i + 1} has {len(cells)} values, expected {dim}")
        try:
            values[i] = np.array(cells, dtype=np.float64)
        except ValueError:
            for j, cell in enumerate(cells):
                try:
                    float(cell)
                except ValueError:
                    raise ParseError(f"{path}: non-numeric cell {cell!r} at row {i + 1}, column {j + 1}") from None
            raise ParseError(f"{path}: row {i + 1} is not numeric") from None
    _check_finite(values, path)
    return values


def _parse_binary_matrix(raw, path):
    if len(raw) < HEADER.size:
        raise ParseError(f"{path}: truncated header")
    magic, n, dim = HEADER.unpack_from(raw)
    if magic != MATRIX_MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}, expected {MATRIX_MAGIC!r}")
    if n < 1 or dim < 1:
        raise ParseError(f"{path}: header declares an empty matrix ({n} x {dim})")
    expected = HEADER.size + 8 * n * dim
    if len(raw) != expected:
        raise ParseError(f"{path}: expected {expected} bytes for {n} x {dim}, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<f8", count=n * dim, offset=HEADER.size).reshape(n, dim)
    values = values.astype(np.float64)
    _check_finite(values, path)
    return values


def load_features(path, fmt=None):
    """Read a feature matrix; with fmt=None the binary format is recognised by its magic bytes."""
    raw = _read_bytes(path)
    if fmt is None:
        fmt = "bin" if raw[:4] == MATRIX_MAGIC else "text"
    if fmt == "bin":
        return _parse_binary_matrix(raw, path)
    if fmt == "text":
        return _parse_text_matrix(raw, path)
    raise ParseError(f"unknown matrix format {fmt!r}; expected one of {FORMATS}")


def save_features(path, features, fmt="text"):
    F = as_matrix(features, "features")
    n, dim = F.shape
    if fmt == "bin":
        with open(path, "wb") as f:
            f.write(HEADER.pack(MATRIX_MAGIC, n, dim))
            f.write(F.astype("<f8").tobytes())
    elif fmt == "text":
        # %.17g round-trips float64 exactly
        np.savetxt(path, F, fmt="%.17g", delimiter=" ", header=f"{n} {dim}", comments="")
    else:
        raise InvalidInputError(f"unknown matrix format {fmt!r}; expected one of {FORMATS}")


def load_labels(path):
    lines = _read_bytes(path).decode("utf-8", errors="replace").splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise ParseError(f"{path}: empty labels file")
    labels = np.empty(len(lines), dtype=np.int64)
    for i, line in enumerate(lines):
        try:
            labels[i] = int(line.strip())
        except ValueError:
            raise ParseError(f"{path}: line {i + 1} is not an integer label: {line.strip()!r}") from None
        if labels[i] < 0:
            raise ParseError(f"{path}: line {i + 1} has negative label {labels[i]}")
    return labels


def save_labels(path, labels):
    with open(path, "w", encoding="utf-8") as f:
        for label in np.asarray(labels).ravel():
            f.write(f"{int(label)}\n")


def load_labeled(features_path, labels_path, fmt=None):
    features = load_features(features_path, fmt)
    labels = load_labels(labels_path)
    if labels.shape[0] != features.shape[0]:
        raise ParseError(
            f"{labels_path}: {labels.shape[0]} labels for {features.shape[0]} rows in {features_path}"
        )
    return make_dataset(features, labels)


def save_model(path, model):
    rows, dim = model.weights.shape
    with open(path, "wb") as f:
        f.write(HEADER.pack(MODEL_MAGIC, rows, dim))
        f.write(model.weights.astype("<f8").tobytes())
        f.write(model.biases.astype("<f8").tobytes())
        f.write(struct.pack("<d", model.C))


def load_model(path):
    raw = _read_bytes(path)
    if len(raw) < HEADER.size:
        raise ParseError(f"{path}: truncated model header")
    magic, rows, dim = HEADER.unpack_from(raw)
    if magic != MODEL_MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}, expected {MODEL_MAGIC!r}")
    if rows < 1 or dim < 1:
        raise ParseError(f"{path}: model declares {rows} directions over {dim} features")
    count = rows * dim + rows + 1
    if len(raw) != HEADER.size + 8 * count:
        raise ParseError(f"{path}: expected {HEADER.size + 8 * count} bytes, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=HEADER.size).astype(np.float64)
    if not np.isfinite(values).all():
        raise ParseError(f"{path}: model holds non-finite values")
    weights = values[: rows * dim].reshape(rows, dim)
    biases = values[rows * dim: rows * dim + rows]
    # a single stored direction is a binary model
    n_classes = 2 if rows == 1 else rows
    return LinearModel(weights=weights, biases=biases, C=float(values[-1]), n_classes=n_classes)


@dataclass(frozen=True)
class ProtocolSpec:
    mode: str = "subsampled"
    per_class: int = 20
    trials: int = 20
    seed: int = 0
    lam: float = 1.0
    c_grid: tuple = DEFAULT_C_GRID
    folds: int = DEFAULT_FOLDS
    per_domain: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("subsampled", "full"):
            raise ProtocolError(f"protocol mode must be 'subsampled' or 'full', got {self.mode!r}")
        if self.trials < 1:
            raise ProtocolError(f"protocol needs at least one trial, got {self.trials}")
        if self.mode == "subsampled":
            counts = [self.per_class, *self.per_domain.values()]
            if min(counts) < 1:
                raise ProtocolError(f"per-class sample counts must be >= 1, got {min(counts)}")
        if self.lam < 0:
            raise ProtocolError(f"lambda must be non-negative, got {self.lam}")
        if not self.c_grid or min(self.c_grid) <= 0:
            raise ProtocolError(f"C grid must hold positive values, got {self.c_grid}")
        if self.folds < 2:
            raise ProtocolError(f"folds must be >= 2, got {self.folds}")

    def per_class_for(self, domain):
        return self.per_domain.get(domain, self.per_class)

    def trial_seed(self, trial):
        return self.seed + trial


def subsample(data, per_class, seed):
    """Draw exactly per_class examples of every present class, without replacement."""
    if per_class < 1:
        raise ProtocolError(f"per_class must be >= 1, got {per_class}")
    rng = np.random.default_rng(seed)
    picked = []
    for c in np.flatnonzero(data.class_counts()):
        members = np.flatnonzero(data.labels == c)
        if members.size < per_class:
            raise ProtocolError(f"class {c} has {members.size} examples, cannot sample {per_class}")
        picked.append(rng.permutation(members)[:per_class])
    return data.take(np.concatenate(picked))


@dataclass(frozen=True)
class ShiftSpec:
    dim: int
    n_classes: int
    per_class: int
    separation: float
    target_map: np.ndarray
    noise: float
    seed: int

    def __post_init__(self):
        if self.dim < 1 or self.n_classes < 2 or self.per_class < 2:
            raise InvalidInputError(
                f"shift spec needs dim >= 1, classes >= 2, per_class >= 2 "
                f"(got {self.dim}, {self.n_classes}, {self.per_class})"
            )
        if self.target_map.shape != (self.dim, self.dim):
            raise InvalidInputError(f"target map must be {self.dim}x{self.dim}, got {self.target_map.shape}")
        if not self.condition_number < MAX_MAP_CONDITION:
            raise InvalidInputError("target map is not invertible")
        if self.noise < 0:
            raise InvalidInputError(f"noise scale must be non-negative, got {self.noise}")

    @property
    def condition_number(self):
        return float(np.linalg.cond(self.target_map))


def _bounded_rotation(rng, dim, max_angle):
    """exp of a random skew-symmetric matrix scaled to spectral norm max_angle; no plane turns further."""
    if dim < 2 or max_angle == 0:
        return np.eye(dim)
    G = rng.standard_normal((dim, dim))
    skew = (G - G.T) / 2.0
    return expm(skew * (max_angle / np.linalg.norm(skew, 2)))


def _stretch_coloring(rng, dim, stretch):
    direction = rng.standard_normal(dim)
    direction /= np.linalg.norm(direction)
    return np.eye(dim) + (stretch - 1.0) * np.outer(direction, direction)


def make_shift_spec(dim=10, n_classes=4, per_class=500, separation=4.0, noise=0.1, seed=0,
                    map_kind="random", map_scale=1.0, stretch=40.0, max_angle=0.05):
    """Build a ShiftSpec whose target map is drawn from `seed`.

    The random map is a rotation of at most max_angle radians composed with an SPD
    coloring that stretches one random direction by `stretch`.
    """
    if map_kind == "identity":
        target_map = np.eye(dim)
    elif map_kind == "scaled":
        target_map = map_scale * np.eye(dim)
    elif map_kind == "random":
        if stretch <= 0:
            raise InvalidInputError(f"stretch must be positive, got {stretch}")
        if not 0 <= max_angle <= np.pi:
            raise InvalidInputError(f"max_angle must lie in [0, pi], got {max_angle}")
        rng = np.random.default_rng([seed, 1])
        coloring = _stretch_coloring(rng, dim, stretch)
        rotation = _bounded_rotation(rng, dim, max_angle)
        target_map = map_scale * rotation @ coloring
    else:
        raise InvalidInputError(f"unknown target map kind {map_kind!r}; expected one of {MAP_KINDS}")
    return ShiftSpec(dim=dim, n_classes=n_classes, per_class=per_class, separation=float(separation),
                     target_map=np.asarray(target_map, dtype=np.float64), noise=float(noise), seed=int(seed))


def generate_shift(spec):
    """Gaussian class blobs for the source; fresh draws of the same blobs, mapped and noised, for the target."""
    rng = np.random.default_rng(spec.seed)
    means = spec.separation * rng.standard_normal((spec.n_classes, spec.dim))
    labels = np.repeat(np.arange(spec.n_classes), spec.per_class)
    n = labels.shape[0]

    source = means[labels] + rng.standard_normal((n, spec.dim))
    fresh = means[labels] + rng.standard_normal((n, spec.dim))
    target = fresh @ spec.target_map.T + spec.noise * rng.standard_normal((n, spec.dim))
    return (
        LabeledDataset(source, labels, spec.n_classes),
        LabeledDataset(target, labels.copy(), spec.n_classes),
    )
