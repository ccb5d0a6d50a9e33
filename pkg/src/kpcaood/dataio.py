"""Feature/logit matrix files, dataset bundles, and synthetic data generation.

On-disk binary layout (little-endian), 24-byte header then payload:
    magic   4 bytes  b"KPCF"
    version u16      1
    dtype   u8       0 (float32)
    role    u8       0 features, 1 logits
    rows    u64
    cols    u64
    payload rows*cols float32, row-major

CSV files are comma-separated, no header, one sample per line. Storage is
float32; in-memory arithmetic is float64.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, FormatError, LengthError, ShapeError, UsageError
from .linalg import SeededRng

MATRIX_MAGIC = b"KPCF"
MATRIX_VERSION = 1
_HEADER = struct.Struct("<4sHBBQQ")

ROLE_FEATURES = "features"
ROLE_LOGITS = "logits"
_ROLE_CODES = {ROLE_FEATURES: 0, ROLE_LOGITS: 1}
_CODE_ROLES = {v: k for k, v in _ROLE_CODES.items()}


@dataclass
class FeatureMatrix:
    """Dense sample matrix (rows = samples) tagged with its role."""

    data: np.ndarray
    role: str = ROLE_FEATURES

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ShapeError(f"feature matrix must be 2-D, got {self.data.shape}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise LengthError(f"feature matrix must be at least 1x1, got {self.data.shape}")
        if self.role not in _ROLE_CODES:
            raise DataError(f"unknown role {self.role!r}")
        if not np.all(np.isfinite(self.data)):
            bad = np.argwhere(~np.isfinite(self.data))[0]
            raise DataError(f"non-finite entry at row {bad[0]}, col {bad[1]}")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


@dataclass
class DatasetBundle:
    """Training/test/OoD matrices sharing one feature dimension.

    Logit members are optional companions (class-score matrices) keyed the
    same way as their feature counterparts.
    """

    ind_train: FeatureMatrix | None = None
    ind_test: FeatureMatrix | None = None
    ood_sets: dict = field(default_factory=dict)
    ind_train_logits: FeatureMatrix | None = None
    ind_test_logits: FeatureMatrix | None = None
    ood_logits: dict = field(default_factory=dict)

    def __post_init__(self):
        members = [("ind_train", self.ind_train), ("ind_test", self.ind_test)] + [
            (f"ood_sets[{name!r}]", fm) for name, fm in self.ood_sets.items()
        ]
        present = [(label, fm) for label, fm in members if fm is not None]
        if not present:
            return
        m = present[0][1].cols
        for label, fm in present[1:]:
            if fm.cols != m:
                raise ShapeError(f"{label} has {fm.cols} columns, expected {m}")


def read_matrix(path, fmt: str = "binary", role: str = ROLE_FEATURES) -> FeatureMatrix:
    """Read a feature/logit matrix from ``path`` in the given format.

    Binary files carry their own role tag; ``role`` only applies to CSV.
    """
    if fmt == "binary":
        return _read_binary(path)
    if fmt == "csv":
        return _read_csv(path, role)
    raise UsageError(f"unknown matrix format {fmt!r}")


def write_matrix(matrix: FeatureMatrix, path, fmt: str = "binary") -> None:
    """Write a matrix so that read_matrix round-trips it (bit-exact for binary)."""
    with np.errstate(over="ignore"):
        payload32 = matrix.data.astype(np.float32)
    if not np.all(np.isfinite(payload32)):
        bad = np.argwhere(~np.isfinite(payload32))[0]
        raise DataError(
            f"entry at row {bad[0]}, col {bad[1]} is not representable as float32"
        )
    if fmt == "binary":
        header = _HEADER.pack(
            MATRIX_MAGIC,
            MATRIX_VERSION,
            0,
            _ROLE_CODES[matrix.role],
            matrix.rows,
            matrix.cols,
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload32.tobytes(order="C"))
    elif fmt == "csv":
        with open(path, "w") as fh:
            for row in payload32:
                # shortest decimal that round-trips through float32
                fh.write(",".join(np.format_float_positional(v, unique=True) for v in row))
                fh.write("\n")
    else:
        raise UsageError(f"unknown matrix format {fmt!r}")


def _read_binary(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise LengthError(f"{path}: file shorter than the {_HEADER.size}-byte header")
    magic, version, dtype, role_code, rows, cols = _HEADER.unpack_from(raw)
    if magic != MATRIX_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != MATRIX_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    if dtype != 0:
        raise FormatError(f"{path}: unsupported dtype code {dtype}")
    if role_code not in _CODE_ROLES:
        raise FormatError(f"{path}: unknown role code {role_code}")
    if rows < 1 or cols < 1:
        raise LengthError(f"{path}: header declares empty matrix {rows}x{cols}")
    expected = rows * cols * 4
    payload = raw[_HEADER.size :]
    if len(payload) != expected:
        raise LengthError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(rows, cols)
    if not np.all(np.isfinite(data)):
        bad = np.argwhere(~np.isfinite(data))[0]
        raise DataError(f"{path}: non-finite entry at row {bad[0]}, col {bad[1]}")
    return FeatureMatrix(data.astype(np.float64), _CODE_ROLES[role_code])


def _read_csv(path, role: str) -> FeatureMatrix:
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise FormatError(
                    f"{path}: row {lineno} has {len(parts)} columns, expected {width}"
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise FormatError(f"{path}: row {lineno}: {exc}") from exc
    if not rows:
        raise LengthError(f"{path}: no data rows")
    data = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        bad = np.argwhere(~np.isfinite(data))[0]
        raise DataError(f"{path}: non-finite entry at row {bad[0]}, col {bad[1]}")
    return FeatureMatrix(data, role)


# ---------------------------------------------------------------------------
# Synthetic datasets
# ---------------------------------------------------------------------------

SYNTHETIC_KINDS = ("clusters", "swiss-roll", "shifted-norms")


def gen_synthetic(
    kind: str,
    n_ind: int,
    n_ood: int,
    dim: int,
    seed: int,
    displacement: float = 1.5,
) -> DatasetBundle:
    """Generate a deterministic desk-scale detection bundle.

    ``n_ind`` is the training-set size; the in-distribution test split gets
    ``max(2, n_ind // 2)`` fresh draws from the same process. Every split
    comes with class-anchor logits so energy-based workflows run end to end.

    kinds:
      clusters       Gaussian blobs on unit directions; OoD blobs displaced
                     in direction and norm by ``displacement`` (0 makes OoD
                     draws statistically identical to InD).
      swiss-roll     InD on a rolled 2-D band (spiral over a sphere plus a
                     transverse width); OoD interleaved between the turns.
      shifted-norms  OoD lies inside the span of the InD cluster directions
                     but at 3x the feature norm.
    """
    if n_ind < 2 or n_ood < 2:
        raise UsageError("n_ind and n_ood must both be at least 2")
    if dim < 2:
        raise UsageError("dim must be at least 2")
    if kind not in SYNTHETIC_KINDS:
        raise UsageError(f"unknown synthetic kind {kind!r}; choose from {SYNTHETIC_KINDS}")
    rng = SeededRng(seed)
    n_test = max(2, n_ind // 2)
    if kind == "clusters":
        return _gen_clusters(rng, n_ind, n_test, n_ood, dim, displacement)
    if kind == "swiss-roll":
        return _gen_swiss_roll(rng, n_ind, n_test, n_ood, dim)
    return _gen_shifted_norms(rng, n_ind, n_test, n_ood, dim)


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _anchor_logits(features: np.ndarray, anchors: np.ndarray, sharpness: float) -> FeatureMatrix:
    # cosine-head classifier: confidence follows direction, not norm
    logits = sharpness * (_unit_rows(features) @ _unit_rows(anchors).T)
    return FeatureMatrix(logits, ROLE_LOGITS)


def _bundle(kind, train, test, ood, anchors, sharpness):
    return DatasetBundle(
        ind_train=FeatureMatrix(train),
        ind_test=FeatureMatrix(test),
        ood_sets={kind: FeatureMatrix(ood)},
        ind_train_logits=_anchor_logits(train, anchors, sharpness),
        ind_test_logits=_anchor_logits(test, anchors, sharpness),
        ood_logits={kind: _anchor_logits(ood, anchors, sharpness)},
    )


def _gen_clusters(rng, n_train, n_test, n_ood, dim, displacement):
    k = 4
    centers = _unit_rows(rng.normal(k * dim).reshape(k, dim))
    offsets = _unit_rows(rng.normal(k * dim).reshape(k, dim))
    ood_centers = _unit_rows(centers + displacement * offsets) * (1.0 + 0.5 * displacement)
    spread = 0.15

    def draw(n, table):
        which = np.minimum((rng.uniform01(n) * k).astype(np.int64), k - 1)
        return table[which] + spread * rng.normal(n * dim).reshape(n, dim)

    train = draw(n_train, centers)
    test = draw(n_test, centers)
    ood = draw(n_ood, ood_centers)
    return _bundle("clusters", train, test, ood, centers, sharpness=4.0)


def _gen_swiss_roll(rng, n_train, n_test, n_ood, dim):
    if dim < 4:
        raise UsageError("swiss-roll needs dim >= 4")
    turns = 3
    polar_margin = 0.35
    polar_span = np.pi - 2.0 * polar_margin
    band_width = 0.10
    noise = 0.02
    rotation = _random_rotation(rng, dim)

    def embed(t, gap_offset):
        n = t.shape[0]
        theta = 2.0 * np.pi * turns * t
        phi = polar_margin + polar_span * t + gap_offset
        base = np.zeros((n, dim))
        base[:, 0] = np.sin(phi) * np.cos(theta)
        base[:, 1] = np.sin(phi) * np.sin(theta)
        base[:, 2] = np.cos(phi)
        base[:, 3] = band_width * rng.uniform(n, -1.0, 1.0)
        radius = 1.0 + 0.05 * rng.normal(n)
        pts = radius[:, None] * base + noise * rng.normal(n * dim).reshape(n, dim)
        return pts @ rotation.T

    half_gap = 0.5 * polar_span / turns
    train = embed(rng.uniform01(n_train), 0.0)
    test = embed(rng.uniform01(n_test), 0.0)
    ood = embed(rng.uniform(n_ood, 0.0, 1.0 - 1.0 / turns), half_gap)

    anchor_t = np.array([0.125, 0.375, 0.625, 0.875])
    theta = 2.0 * np.pi * turns * anchor_t
    phi = polar_margin + polar_span * anchor_t
    anchors = np.zeros((4, dim))
    anchors[:, 0] = np.sin(phi) * np.cos(theta)
    anchors[:, 1] = np.sin(phi) * np.sin(theta)
    anchors[:, 2] = np.cos(phi)
    anchors = anchors @ rotation.T
    return _bundle("swiss-roll", train, test, ood, anchors, sharpness=4.0)


def _gen_shifted_norms(rng, n_train, n_test, n_ood, dim):
    k = 6
    norm_factor = 3.0
    directions = _unit_rows(rng.normal(k * dim).reshape(k, dim))
    angular = 0.05
    ambient = 0.02

    def radii(n):
        # lognormal radius spread keeps every norm direction inside the
        # high-variance span a linear subspace retains
        return np.exp(0.25 * rng.normal(n))

    def draw_ind(n):
        which = np.minimum((rng.uniform01(n) * k).astype(np.int64), k - 1)
        dirs = _unit_rows(directions[which] + angular * rng.normal(n * dim).reshape(n, dim))
        return radii(n)[:, None] * dirs + ambient * rng.normal(n * dim).reshape(n, dim)

    def draw_ood(n):
        # mixture directions stay inside span(directions), so a linear
        # subspace fitted on InD also reconstructs OoD; only the norm and
        # the position on the unit sphere differ
        weights = -np.log(np.maximum(rng.uniform01(n * k).reshape(n, k), 1e-300))
        weights /= np.sum(weights, axis=1, keepdims=True)
        dirs = _unit_rows(weights @ directions)
        return norm_factor * radii(n)[:, None] * dirs + ambient * rng.normal(n * dim).reshape(n, dim)

    train = draw_ind(n_train)
    test = draw_ind(n_test)
    ood = draw_ood(n_ood)
    return _bundle("shifted-norms", train, test, ood, directions, sharpness=4.0)


def _random_rotation(rng, dim):
    gauss = rng.normal(dim * dim).reshape(dim, dim)
    q, r = np.linalg.qr(gauss)
    return q * np.sign(np.diag(r))
