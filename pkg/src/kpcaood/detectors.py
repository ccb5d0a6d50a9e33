"""End-to-end detector pipelines and the on-disk model format.

Every method scores with the "higher = in-distribution" orientation:

    pca        -reconstruction error on raw features
    kpca-rff   -reconstruction error after cosine map + random Fourier map
    kpca-nys   -reconstruction error after cosine map + landmark map
    knn        -distance to the nearest l2-normalized training feature
    msp        max softmax probability of the logits
    maxlogit   max logit
    energy     T * logsumexp(logits / T)

Model file layout (little-endian): magic b"KPCM", version u16 = 1, method
u8, flags u8, seed u64, then the blocks the flags announce (map, subspace,
knn bank, clip, temperature). All numeric payloads are f64 with u64 length
prefixes.
"""

import dataclasses
import struct
from dataclasses import dataclass

import numpy as np

from .approx import (
    NystromMap,
    RffMap,
    apply_nystrom,
    apply_rff,
    energy_scores,
    fit_nystrom,
    fit_rff,
    select_landmarks,
)
from .dataio import ROLE_LOGITS, DatasetBundle, FeatureMatrix
from .errors import (
    DataError,
    DegenerateInputError,
    DegenerateKernelError,
    FormatError,
    ParameterError,
    ShapeError,
    UsageError,
)
from .kernels import KernelSpec, cos_map
from .linalg import SeededRng
from .subspace import SubspaceModel, fit_subspace, reconstruction_error

METHODS = ("pca", "kpca-rff", "kpca-nys", "knn", "msp", "maxlogit", "energy")
FEATURE_METHODS = ("pca", "kpca-rff", "kpca-nys", "knn")
LOGIT_METHODS = ("msp", "maxlogit", "energy")
COSINE_METHODS = ("kpca-rff", "kpca-nys", "knn")

DEFAULT_EVR = {"pca": 0.99, "kpca-rff": 0.90, "kpca-nys": 0.99}
DEFAULT_N_RFF = 4096
DEFAULT_N_LANDMARKS = 2048

MODEL_MAGIC = b"KPCM"
MODEL_VERSION = 1


@dataclass
class DetectorConfig:
    """Hyper-parameters for fit_detector.

    gamma is either a positive float or "median" for the self-tuning
    heuristic; kernel overrides the default cosine-gaussian spec entirely
    (for alternative-kernel studies). evr_threshold of None picks the
    per-method default.
    """

    method: str
    gamma: float | str = "median"
    n_rff: int = DEFAULT_N_RFF
    n_landmarks: int = DEFAULT_N_LANDMARKS
    evr_threshold: float | None = None
    sampling: str = "low-energy"
    temperature: float = 1.0
    clip_percentile: float | None = None
    kernel: KernelSpec | None = None


@dataclass
class DetectorModel:
    method: str
    seed: int
    feature_map: RffMap | NystromMap | None = None
    subspace: SubspaceModel | None = None
    knn_bank: np.ndarray | None = None
    clip_thresholds: np.ndarray | None = None
    clip_percentile: float | None = None
    temperature: float | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}")
        wants_map = self.method in ("kpca-rff", "kpca-nys")
        if wants_map != (self.feature_map is not None):
            raise DataError(f"{self.method} model must carry a feature map iff kpca-*")
        wants_subspace = self.method in ("pca", "kpca-rff", "kpca-nys")
        if wants_subspace != (self.subspace is not None):
            raise DataError(f"{self.method} model subspace presence is inconsistent")
        if (self.method == "knn") != (self.knn_bank is not None):
            raise DataError(f"{self.method} model bank presence is inconsistent")
        if self.method == "energy" and self.temperature is None:
            raise DataError("energy model must carry a temperature")


def clip_thresholds(features: np.ndarray, percentile: float) -> np.ndarray:
    """Per-dimension clipping thresholds: the ceil(p/100 * n)-th order statistic."""
    if not 0.0 < percentile <= 100.0:
        raise ParameterError(f"percentile must be in (0, 100], got {percentile}")
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    k = int(np.ceil(percentile * n / 100.0))
    k = min(max(k, 1), n)
    return np.sort(features, axis=0)[k - 1]


def apply_clip(features: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    if thresholds.shape[0] != features.shape[1]:
        raise ShapeError(
            f"{thresholds.shape[0]} thresholds for {features.shape[1]} feature dims"
        )
    return np.minimum(features, thresholds)


def clip_features(features: FeatureMatrix, percentile: float) -> FeatureMatrix:
    """Clip each column of ``features`` at its own percentile order statistic."""
    thresholds = clip_thresholds(features.data, percentile)
    return FeatureMatrix(apply_clip(features.data, thresholds), features.role)


def median_gamma(points: np.ndarray, rng: SeededRng, n_pairs: int = 1000) -> float:
    """Self-tuning kernel width: 1 / (2 * median squared pair distance).

    Pairs are drawn uniformly (distinct indices) from the given rows.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < 2:
        raise DataError("need at least 2 rows to estimate a kernel width")
    u = rng.uniform01(2 * n_pairs)
    first = np.minimum((u[:n_pairs] * n).astype(np.int64), n - 1)
    second = np.minimum((u[n_pairs:] * (n - 1)).astype(np.int64), n - 2)
    second = second + (second >= first)
    diffs = points[first] - points[second]
    med = float(np.median(np.sum(diffs * diffs, axis=1)))
    if med <= 0.0:
        raise DegenerateKernelError("median pairwise distance is zero; set gamma explicitly")
    return 1.0 / (2.0 * med)


def _resolve_kernel(config: DetectorConfig, normalized: np.ndarray, rng: SeededRng) -> KernelSpec:
    if config.kernel is not None:
        return config.kernel
    if config.gamma == "median":
        gamma = median_gamma(normalized, rng)
    else:
        gamma = float(config.gamma)
        if not gamma > 0:
            raise ParameterError(f"gamma must be positive, got {gamma}")
    return KernelSpec(base="gaussian", gamma=gamma, cosine_prefix=True)


def _require(condition, exc, message):
    if not condition:
        raise exc(message)


def fit_detector(config: DetectorConfig, bundle: DatasetBundle, rng: SeededRng) -> DetectorModel:
    """Fit a detector on the bundle's training split.

    Deterministic for a fixed config and rng seed; the logit-only methods
    need no training data at all.
    """
    method = config.method
    if method not in METHODS:
        raise ParameterError(f"unknown method {method!r}")
    evr = config.evr_threshold if config.evr_threshold is not None else DEFAULT_EVR.get(method)

    if method in LOGIT_METHODS:
        if config.temperature <= 0:
            raise ParameterError(f"temperature must be positive, got {config.temperature}")
        if config.clip_percentile is not None:
            raise UsageError(f"feature clipping does not apply to the {method} method")
        return DetectorModel(method=method, seed=rng.seed, temperature=config.temperature)

    _require(bundle.ind_train is not None, UsageError, f"{method} requires training features")
    train = bundle.ind_train.data
    thresholds = None
    if config.clip_percentile is not None:
        thresholds = clip_thresholds(train, config.clip_percentile)
        train = apply_clip(train, thresholds)

    if method == "pca":
        sub = fit_subspace(train, evr)
        return DetectorModel(method=method, seed=rng.seed, subspace=sub,
                             clip_thresholds=thresholds, clip_percentile=config.clip_percentile)

    if method == "knn":
        bank = cos_map(train)
        return DetectorModel(method=method, seed=rng.seed, knn_bank=bank,
                             clip_thresholds=thresholds, clip_percentile=config.clip_percentile)

    if method == "kpca-rff":
        normalized = cos_map(train)
        spec = _resolve_kernel(config, normalized, rng)
        rff = fit_rff(spec, normalized.shape[1], config.n_rff, rng)
        mapped = apply_rff(rff, normalized)
        sub = fit_subspace(mapped, evr)
        return DetectorModel(method=method, seed=rng.seed, feature_map=rff, subspace=sub,
                             clip_thresholds=thresholds, clip_percentile=config.clip_percentile)

    # kpca-nys
    if config.sampling in ("low-energy", "high-energy"):
        _require(bundle.ind_train_logits is not None, UsageError,
                 f"{config.sampling} sampling requires training logits")
        _require(bundle.ind_train_logits.rows == bundle.ind_train.rows, ShapeError,
                 "training logits row count must match training features")
        energies = energy_scores(bundle.ind_train_logits, config.temperature)
    else:
        energies = None
    indices = select_landmarks(bundle.ind_train, energies, config.n_landmarks,
                               config.sampling, rng)
    normalized = cos_map(train)
    spec = _resolve_kernel(config, normalized, rng)
    nys = dataclasses.replace(fit_nystrom(spec, FeatureMatrix(normalized[indices])),
                              sampling=config.sampling)
    mapped = apply_nystrom(nys, normalized)
    sub = fit_subspace(mapped, evr)
    return DetectorModel(method=method, seed=rng.seed, feature_map=nys, subspace=sub,
                         clip_thresholds=thresholds, clip_percentile=config.clip_percentile)


def _knn_scores(bank: np.ndarray, queries: np.ndarray, block: int = 16384) -> np.ndarray:
    normalized = cos_map(queries)
    best = np.full(normalized.shape[0], np.inf)
    for start in range(0, bank.shape[0], block):
        chunk = bank[start : start + block]
        d2 = 2.0 - 2.0 * (normalized @ chunk.T)
        np.minimum(best, np.min(d2, axis=1), out=best)
    return -np.sqrt(np.maximum(best, 0.0))


def score(model: DetectorModel, features: FeatureMatrix | None,
          logits: FeatureMatrix | None = None) -> np.ndarray:
    """Score samples, higher = more in-distribution.

    Feature methods consume ``features``; msp/maxlogit/energy consume
    ``logits``. Raises DegenerateInputError (with the row index) if a
    cosine-based method meets a zero feature row.
    """
    method = model.method
    if method in LOGIT_METHODS:
        _require(logits is not None, UsageError, f"{method} scoring requires logits")
        _require(logits.role == ROLE_LOGITS, UsageError,
                 f"{method} scoring requires a logits-role matrix")
        data = logits.data
        if method == "maxlogit":
            return np.max(data, axis=1)
        if method == "msp":
            peak = np.max(data, axis=1, keepdims=True)
            return 1.0 / np.sum(np.exp(data - peak), axis=1)
        return energy_scores(logits, model.temperature).values

    _require(features is not None, UsageError, f"{method} scoring requires features")
    data = features.data
    if model.clip_thresholds is not None:
        data = apply_clip(data, model.clip_thresholds)

    if method == "knn":
        _require(data.shape[1] == model.knn_bank.shape[1], ShapeError,
                 f"query dim {data.shape[1]} != bank dim {model.knn_bank.shape[1]}")
        return _knn_scores(model.knn_bank, data)
    if method == "pca":
        return -reconstruction_error(model.subspace, data)
    normalized = cos_map(data)
    if method == "kpca-rff":
        mapped = apply_rff(model.feature_map, normalized)
    else:
        mapped = apply_nystrom(model.feature_map, normalized)
    return -reconstruction_error(model.subspace, mapped)


def score_with_rejects(model: DetectorModel, features: FeatureMatrix | None,
                       logits: FeatureMatrix | None = None):
    """Like score(), but zero-norm rows under cosine methods are skipped.

    Returns (scores, kept_indices, rejected_indices); order follows the
    input rows.
    """
    if model.method in COSINE_METHODS and features is not None:
        norms = np.linalg.norm(features.data, axis=1)
        rejected = np.flatnonzero(norms == 0.0)
        kept = np.flatnonzero(norms != 0.0)
        if rejected.size:
            if kept.size == 0:
                raise DegenerateInputError("every query row has zero norm")
            subset = FeatureMatrix(features.data[kept], features.role)
            return score(model, subset, logits), kept, rejected
        return score(model, features, logits), kept, rejected
    values = score(model, features, logits)
    return values, np.arange(values.shape[0]), np.array([], dtype=np.int64)


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

_METHOD_CODES = {name: i for i, name in enumerate(METHODS)}
_CODE_METHODS = {i: name for name, i in _METHOD_CODES.items()}
_BASE_CODES = {"gaussian": 0, "laplacian": 1, "polynomial": 2, "linear": 3, "cosine": 4}
_CODE_BASES = {v: k for k, v in _BASE_CODES.items()}
_SAMPLING_CODES = {"low-energy": 0, "high-energy": 1, "uniform": 2}
_CODE_SAMPLINGS = {v: k for k, v in _SAMPLING_CODES.items()}

_FLAG_MAP, _FLAG_SUBSPACE, _FLAG_BANK, _FLAG_CLIP, _FLAG_T = 1, 2, 4, 8, 16

_HEADER = struct.Struct("<4sHBBQ")
_SPEC = struct.Struct("<BddIB")


def _pack_array(out: list, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    out.append(struct.pack("<Q", arr.size))
    out.append(arr.tobytes())


def _pack_matrix(out: list, arr: np.ndarray) -> None:
    out.append(struct.pack("<QQ", arr.shape[0], arr.shape[1]))
    out.append(np.ascontiguousarray(arr, dtype=np.float64).tobytes())


def _pack_spec(out: list, spec: KernelSpec) -> None:
    out.append(_SPEC.pack(_BASE_CODES[spec.base], spec.gamma or 0.0, spec.c,
                          spec.d, int(spec.cosine_prefix)))


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf = buf
        self.off = 0
        self.path = path

    def take(self, fmt: struct.Struct):
        if self.off + fmt.size > len(self.buf):
            raise FormatError(f"{self.path}: truncated model file")
        vals = fmt.unpack_from(self.buf, self.off)
        self.off += fmt.size
        return vals

    def array(self, count: int) -> np.ndarray:
        nbytes = count * 8
        if self.off + nbytes > len(self.buf):
            raise FormatError(f"{self.path}: truncated model payload")
        arr = np.frombuffer(self.buf, dtype="<f8", count=count, offset=self.off).copy()
        self.off += nbytes
        return arr


def save_model(model: DetectorModel, path) -> None:
    """Serialize a fitted detector; round-trips to an identical model."""
    flags = 0
    if model.feature_map is not None:
        flags |= _FLAG_MAP
    if model.subspace is not None:
        flags |= _FLAG_SUBSPACE
    if model.knn_bank is not None:
        flags |= _FLAG_BANK
    if model.clip_thresholds is not None:
        flags |= _FLAG_CLIP
    if model.temperature is not None:
        flags |= _FLAG_T
    out = [_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, _METHOD_CODES[model.method],
                        flags, model.seed)]
    fmap = model.feature_map
    if fmap is not None:
        if isinstance(fmap, RffMap):
            out.append(struct.pack("<B", 0))
            _pack_spec(out, fmap.spec)
            out.append(struct.pack("<Q", fmap.seed))
            _pack_matrix(out, fmap.omega)
            _pack_array(out, fmap.u)
        else:
            out.append(struct.pack("<B", 1))
            _pack_spec(out, fmap.spec)
            out.append(struct.pack("<B", _SAMPLING_CODES[fmap.sampling]))
            _pack_matrix(out, fmap.landmarks)
            _pack_matrix(out, fmap.u_tilde)
            _pack_array(out, fmap.lambda_tilde)
    sub = model.subspace
    if sub is not None:
        out.append(struct.pack("<Qd", sub.q, sub.evr_threshold))
        _pack_array(out, sub.mean)
        _pack_matrix(out, sub.projection)
        _pack_array(out, sub.spectrum)
    if model.knn_bank is not None:
        _pack_matrix(out, model.knn_bank)
    if model.clip_thresholds is not None:
        out.append(struct.pack("<d", model.clip_percentile))
        _pack_array(out, model.clip_thresholds)
    if model.temperature is not None:
        out.append(struct.pack("<d", model.temperature))
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


def load_model(path) -> DetectorModel:
    """Read a model file written by save_model."""
    with open(path, "rb") as fh:
        reader = _Reader(fh.read(), path)
    magic, version, method_code, flags, seed = reader.take(_HEADER)
    if magic != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model version {version}")
    if method_code not in _CODE_METHODS:
        raise FormatError(f"{path}: unknown method code {method_code}")
    method = _CODE_METHODS[method_code]

    feature_map = None
    if flags & _FLAG_MAP:
        (kind,) = reader.take(struct.Struct("<B"))
        base_code, gamma, c, d, prefix = reader.take(_SPEC)
        if base_code not in _CODE_BASES:
            raise FormatError(f"{path}: unknown kernel base code {base_code}")
        spec = KernelSpec(base=_CODE_BASES[base_code], gamma=gamma or None,
                          c=c, d=d, cosine_prefix=bool(prefix))
        if kind == 0:
            (map_seed,) = reader.take(struct.Struct("<Q"))
            rows, cols = reader.take(struct.Struct("<QQ"))
            omega = reader.array(rows * cols).reshape(rows, cols)
            (ulen,) = reader.take(struct.Struct("<Q"))
            u = reader.array(ulen)
            feature_map = RffMap(omega, u, cols, spec, map_seed)
        elif kind == 1:
            (sampling_code,) = reader.take(struct.Struct("<B"))
            if sampling_code not in _CODE_SAMPLINGS:
                raise FormatError(f"{path}: unknown sampling code {sampling_code}")
            rows, cols = reader.take(struct.Struct("<QQ"))
            landmarks = reader.array(rows * cols).reshape(rows, cols)
            urows, ucols = reader.take(struct.Struct("<QQ"))
            u_tilde = reader.array(urows * ucols).reshape(urows, ucols)
            (llen,) = reader.take(struct.Struct("<Q"))
            lam = reader.array(llen)
            feature_map = NystromMap(landmarks, u_tilde, lam, ucols, spec,
                                     _CODE_SAMPLINGS[sampling_code])
        else:
            raise FormatError(f"{path}: unknown map kind {kind}")

    sub = None
    if flags & _FLAG_SUBSPACE:
        q, evr = reader.take(struct.Struct("<Qd"))
        (mlen,) = reader.take(struct.Struct("<Q"))
        mean = reader.array(mlen)
        rows, cols = reader.take(struct.Struct("<QQ"))
        projection = reader.array(rows * cols).reshape(rows, cols)
        (slen,) = reader.take(struct.Struct("<Q"))
        spectrum = reader.array(slen)
        sub = SubspaceModel(mean, projection, spectrum, q, evr)

    bank = None
    if flags & _FLAG_BANK:
        rows, cols = reader.take(struct.Struct("<QQ"))
        bank = reader.array(rows * cols).reshape(rows, cols)

    thresholds = None
    percentile = None
    if flags & _FLAG_CLIP:
        (percentile,) = reader.take(struct.Struct("<d"))
        (tlen,) = reader.take(struct.Struct("<Q"))
        thresholds = reader.array(tlen)

    temperature = None
    if flags & _FLAG_T:
        (temperature,) = reader.take(struct.Struct("<d"))

    if reader.off != len(reader.buf):
        raise FormatError(f"{path}: {len(reader.buf) - reader.off} trailing bytes")
    return DetectorModel(method=method, seed=seed, feature_map=feature_map,
                         subspace=sub, knn_bank=bank, clip_thresholds=thresholds,
                         clip_percentile=percentile, temperature=temperature)
