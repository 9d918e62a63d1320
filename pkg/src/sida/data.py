"""Domain-shift datasets: synthetic generators and feature-file I/O.

A :class:`DomainPair` holds a labeled source set and an unlabeled target
set. Target labels, when known, live in ``UnlabeledSet.hidden_y`` and are
only consulted by evaluation code.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import derive_rng


class FeatureFileError(ValueError):
    """A feature CSV is malformed. ``line`` is 1-based (header = 1)."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


@dataclass
class LabeledSet:
    X: np.ndarray
    y: np.ndarray
    n_classes: int = None

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=int).ravel()
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError(f"{self.X.shape[0]} rows but {self.y.shape[0]} labels")
        if self.n_classes is None:
            self.n_classes = int(self.y.max()) + 1 if self.y.size else 0
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")

    def __len__(self):
        return self.X.shape[0]

    def class_indices(self):
        return [np.flatnonzero(self.y == c) for c in range(self.n_classes)]


@dataclass
class UnlabeledSet:
    X: np.ndarray
    hidden_y: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if self.hidden_y is not None:
            self.hidden_y = np.asarray(self.hidden_y, dtype=int).ravel()
            if self.hidden_y.shape[0] != self.X.shape[0]:
                raise ValueError("hidden_y length does not match X")

    def __len__(self):
        return self.X.shape[0]


@dataclass
class DomainPair:
    source: LabeledSet
    target: UnlabeledSet
    n_classes: int

    def __post_init__(self):
        if self.source.X.shape[1] != self.target.X.shape[1]:
            raise ValueError(
                f"source has {self.source.X.shape[1]} features, "
                f"target has {self.target.X.shape[1]}"
            )
        self.source.n_classes = self.n_classes


@dataclass
class SyntheticSpec:
    """Parameters of a synthetic domain pair.

    ``shift`` is a rotation angle in degrees for ``"two-moons"`` and a
    translation vector (or scalar applied to the first axis) for
    ``"gaussian-blobs"``. ``n`` is the number of samples per domain.
    """

    family: str = "two-moons"
    n: int = 600
    shift: object = 35.0
    noise: float = 0.1
    seed: int = 0
    n_classes: int = 2
    separation: float = 10.0

    def __post_init__(self):
        if self.family not in ("two-moons", "gaussian-blobs"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")


def _moons(n_per_class, noise, rng):
    t_outer = rng.uniform(0.0, np.pi, n_per_class)
    t_inner = rng.uniform(0.0, np.pi, n_per_class)
    outer = np.column_stack([np.cos(t_outer), np.sin(t_outer)])
    inner = np.column_stack([1.0 - np.cos(t_inner), 0.5 - np.sin(t_inner)])
    X = np.vstack([outer, inner])
    y = np.repeat([0, 1], n_per_class)
    if noise > 0:
        X = X + rng.normal(scale=noise, size=X.shape)
    return X, y


def rotate_about_centroid(X, degrees):
    theta = np.deg2rad(degrees)
    R = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    c = X.mean(axis=0)
    return (X - c) @ R.T + c


def gen_two_moons_pair(spec):
    """Two-moons source and a copy rotated about its centroid as target.

    Class 0 is the upper arc (unit circle, y >= 0), class 1 the lower arc
    centred at (1, 0.5). Each domain gets exactly ``n / 2`` points per class.
    """
    if spec.family != "two-moons":
        raise ValueError("spec.family must be 'two-moons'")
    if spec.n < 4 or spec.n % 2:
        raise ValueError(f"n must be even and >= 4 (got {spec.n})")
    half = spec.n // 2
    Xs, ys = _moons(half, spec.noise, derive_rng(spec.seed, "data/source"))
    Xt, yt = _moons(half, spec.noise, derive_rng(spec.seed, "data/target"))
    Xt = rotate_about_centroid(Xt, float(spec.shift))
    return DomainPair(LabeledSet(Xs, ys, 2), UnlabeledSet(Xt, yt), 2)


def blob_means(n_classes, separation):
    # means on a circle, adjacent classes exactly `separation` apart
    if n_classes == 1:
        return np.zeros((1, 2))
    radius = separation / (2.0 * np.sin(np.pi / n_classes))
    ang = 2.0 * np.pi * np.arange(n_classes) / n_classes
    return radius * np.column_stack([np.cos(ang), np.sin(ang)])


def gen_gaussian_blobs_pair(spec):
    """Isotropic Gaussian classes; target class means moved by ``spec.shift``.

    ``noise`` is the per-axis standard deviation. ``separation`` is the
    distance between neighbouring class means, in units of ``noise`` when
    ``noise > 0``.
    """
    if spec.family != "gaussian-blobs":
        raise ValueError("spec.family must be 'gaussian-blobs'")
    k = spec.n_classes
    if spec.n < 2 * k or spec.n % k:
        raise ValueError(f"n must be a multiple of n_classes={k} (got {spec.n})")
    shift = np.zeros(2)
    s = np.atleast_1d(np.asarray(spec.shift, dtype=float))
    shift[: s.size] = s[:2]
    sigma = spec.noise
    means = blob_means(k, spec.separation * (sigma if sigma > 0 else 1.0))
    per = spec.n // k
    y = np.repeat(np.arange(k), per)

    def draw(label, offset):
        rng = derive_rng(spec.seed, label)
        return means[y] + offset + rng.normal(scale=sigma, size=(y.size, 2))

    Xs = draw("data/source", 0.0)
    Xt = draw("data/target", shift)
    return DomainPair(LabeledSet(Xs, y, k), UnlabeledSet(Xt, y.copy()), k)


def generate_pair(spec):
    if spec.family == "two-moons":
        return gen_two_moons_pair(spec)
    return gen_gaussian_blobs_pair(spec)


def class_balanced_batches(labeled, batch, n_batches, rng):
    """Index batches with ``batch // n_classes`` draws from every class.

    Draws are uniform with replacement inside each class. Returns an
    ``(n_batches, batch)`` int array; within a batch the indices are grouped
    by class in ascending class order.
    """
    k = labeled.n_classes
    if batch <= 0 or batch % k:
        raise ValueError(f"batch={batch} is not a positive multiple of n_classes={k}")
    per = batch // k
    members = labeled.class_indices()
    for c, idx in enumerate(members):
        if idx.size == 0:
            raise ValueError(f"class {c} has no samples")
    out = np.empty((n_batches, batch), dtype=int)
    for c, idx in enumerate(members):
        picks = rng.integers(0, idx.size, size=(n_batches, per))
        out[:, c * per:(c + 1) * per] = idx[picks]
    return out


def write_feature_csv(path, X, y=None):
    """Write features (and optionally labels) in the feature CSV format."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    d = X.shape[1]
    header = [f"f{j}" for j in range(d)]
    if y is not None:
        header.append("label")
        y = np.asarray(y, dtype=int).ravel()
    lines = [",".join(header)]
    for i, row in enumerate(X):
        cells = [repr(float(v)) for v in row]
        if y is not None:
            cells.append(str(int(y[i])))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_feature_csv(path):
    """Parse a feature CSV into ``(X, y_or_None)``."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"feature file not found: {path}")
    text = path.read_text(encoding="utf-8")
    rows = text.split("\n")
    if rows and rows[-1] == "":
        rows.pop()
    if not rows:
        raise FeatureFileError(path, 1, "missing header row")

    header = rows[0].split(",")
    has_label = header[-1] == "label"
    feat = header[:-1] if has_label else header
    expected = [f"f{j}" for j in range(len(feat))]
    if not feat or feat != expected:
        raise FeatureFileError(path, 1, f"header must be f0..f{{d-1}}[,label], got {rows[0]!r}")

    width = len(header)
    X = np.empty((len(rows) - 1, len(feat)))
    y = np.empty(len(rows) - 1, dtype=int) if has_label else None
    for lineno, raw in enumerate(rows[1:], start=2):
        cells = raw.split(",")
        if len(cells) != width:
            raise FeatureFileError(path, lineno, f"expected {width} fields, found {len(cells)}")
        try:
            X[lineno - 2] = [float(c) for c in cells[: len(feat)]]
        except ValueError:
            raise FeatureFileError(path, lineno, "non-numeric feature value") from None
        if not np.all(np.isfinite(X[lineno - 2])):
            raise FeatureFileError(path, lineno, "non-finite feature value")
        if has_label:
            try:
                y[lineno - 2] = int(cells[-1])
            except ValueError:
                raise FeatureFileError(path, lineno, f"label {cells[-1]!r} is not an integer") from None
            if y[lineno - 2] < 0:
                raise FeatureFileError(path, lineno, "negative label")
    return X, y


def load_feature_csv(path, role):
    """Load a source (``LabeledSet``) or target (``UnlabeledSet``) file.

    A target file may carry a label column; it is kept as ``hidden_y``.
    """
    if role not in ("source", "target"):
        raise ValueError(f"role must be 'source' or 'target', got {role!r}")
    X, y = read_feature_csv(path)
    if role == "source":
        if y is None:
            raise FeatureFileError(path, 1, "source file needs a 'label' column")
        return LabeledSet(X, y)
    return UnlabeledSet(X, y)


def write_pair(directory, pair):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_feature_csv(directory / "source.csv", pair.source.X, pair.source.y)
    write_feature_csv(directory / "target.csv", pair.target.X, pair.target.hidden_y)
    return directory / "source.csv", directory / "target.csv"


def load_pair(source_path, target_path, n_classes=None):
    src = load_feature_csv(source_path, "source")
    tgt = load_feature_csv(target_path, "target")
    k = n_classes or src.n_classes
    if tgt.hidden_y is not None and tgt.hidden_y.size and tgt.hidden_y.max() >= k:
        raise FeatureFileError(target_path, None, f"target label outside [0, {k})")
    return DomainPair(LabeledSet(src.X, src.y, k), tgt, k)
