"""Measurement data: CSV ingest, synthetic generation, normalization, splits.

Feature columns always follow the order ``[lat, lon, rss, aux...]`` so that
location sits in columns 0-1 and RSS in column 2 everywhere in the package.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from ._validation import DimensionError, as_rng, check_matrix

LAT, LON, RSS = 0, 1, 2

# metres per degree, planar approximation
_M_PER_DEG_LAT = 110_540.0
_M_PER_DEG_LON = 111_320.0


class SchemaError(ValueError):
    """A CSV file does not contain the columns the schema maps."""


class DataError(ValueError):
    """A row fails to parse or violates a measurement invariant."""


class ConfigError(ValueError):
    """Invalid generator configuration."""


@dataclass(frozen=True)
class Measurement:
    user_id: int
    lat: float
    lon: float
    rss: float
    aux: tuple[float, ...] = ()


@dataclass
class Dataset:
    """A labelled collection of measurements held column-wise.

    ``features`` is ``n x m`` in raw units with the fixed column order;
    ``user_ids`` are dense integer labels in ``[0, k)`` and ``user_labels``
    maps each integer back to the label found in the source.
    """

    features: np.ndarray
    user_ids: np.ndarray
    feature_names: tuple[str, ...]
    user_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        self.features = check_matrix(self.features, "features")
        self.user_ids = np.asarray(self.user_ids, dtype=np.int64)
        self.feature_names = tuple(self.feature_names)
        if self.features.shape[1] < 3:
            raise DimensionError("a dataset needs at least lat, lon and rss columns")
        if len(self.feature_names) != self.features.shape[1]:
            raise DimensionError("feature_names length does not match the feature count")
        if self.user_ids.shape != (self.features.shape[0],):
            raise DimensionError("user_ids must have one entry per measurement")
        if self.user_ids.min() < 0:
            raise DataError("user ids must be non-negative")
        if self.user_labels is None:
            self.user_labels = tuple(str(i) for i in range(int(self.user_ids.max()) + 1))
        self.user_labels = tuple(self.user_labels)
        if self.user_ids.max() >= len(self.user_labels):
            raise DataError("user id out of range of user_labels")
        _check_ranges(self.features)

    @property
    def k(self) -> int:
        return len(self.user_labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def m(self) -> int:
        return self.features.shape[1]

    def __len__(self):
        return self.n

    @property
    def measurements(self) -> list[Measurement]:
        return [
            Measurement(int(u), float(r[LAT]), float(r[LON]), float(r[RSS]), tuple(float(v) for v in r[3:]))
            for u, r in zip(self.user_ids, self.features)
        ]

    @classmethod
    def from_measurements(cls, measurements: Sequence[Measurement], aux_names=None) -> "Dataset":
        if not measurements:
            raise DataError("no measurements")
        n_aux = len(measurements[0].aux)
        if any(len(ms.aux) != n_aux for ms in measurements):
            raise DataError("all measurements must have the same number of aux features")
        names = ["lat", "lon", "rss"] + list(aux_names or [f"aux{i}" for i in range(n_aux)])
        feats = np.array([[ms.lat, ms.lon, ms.rss, *ms.aux] for ms in measurements], dtype=np.float64)
        return cls(feats, np.array([ms.user_id for ms in measurements]), names)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.user_ids[idx], self.feature_names, self.user_labels)

    def to_csv(self, path) -> None:
        """Write with header ``user,<feature names>``; floats use ``repr`` so reloads are exact."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["user", *self.feature_names])
            for u, row in zip(self.user_ids, self.features):
                w.writerow([self.user_labels[u], *(repr(float(v)) for v in row)])


def _check_ranges(features: np.ndarray) -> None:
    bad = np.flatnonzero((np.abs(features[:, LAT]) > 90) | (np.abs(features[:, LON]) > 180))
    if bad.size:
        i = int(bad[0])
        raise DataError(
            f"row {i}: location ({features[i, LAT]}, {features[i, LON]}) outside lat [-90, 90] / lon [-180, 180]"
        )


@dataclass(frozen=True)
class CsvSchema:
    """Maps CSV header names onto the measurement fields."""

    user: str = "user"
    lat: str = "lat"
    lon: str = "lon"
    rss: str = "rss"
    aux: tuple[str, ...] = ()

    @classmethod
    def from_dict(cls, d: dict) -> "CsvSchema":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown CSV schema keys: {sorted(unknown)}")
        d["aux"] = tuple(d.get("aux", ()))
        return cls(**d)


def _dense_labels(raw: list[str]) -> tuple[np.ndarray, tuple[str, ...]]:
    uniq = set(raw)
    try:
        order = sorted(uniq, key=lambda s: (float(s), s))
    except ValueError:
        order = sorted(uniq)
    index = {lab: i for i, lab in enumerate(order)}
    return np.array([index[r] for r in raw], dtype=np.int64), tuple(order)


def load_csv(path, schema: CsvSchema | None = None) -> Dataset:
    """Read a CSV of measurements.

    User labels are re-indexed densely to ``0..k-1`` (numeric order when all
    labels are numbers, lexicographic otherwise); row order is preserved.
    Row numbers in error messages count data rows from 1.
    """
    schema = schema or CsvSchema()
    cols = [schema.lat, schema.lon, schema.rss, *schema.aux]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in [schema.user, *cols] if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}; header is {header}")
        users, rows = [], []
        for lineno, rec in enumerate(reader, start=1):
            try:
                vals = [float(rec[c]) for c in cols]
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}: row {lineno} does not parse: {exc}") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}: row {lineno} has a non-finite value")
            if abs(vals[0]) > 90 or abs(vals[1]) > 180:
                raise DataError(f"{path}: row {lineno} location ({vals[0]}, {vals[1]}) out of range")
            user = (rec[schema.user] or "").strip()
            if not user:
                raise DataError(f"{path}: row {lineno} has an empty user label")
            users.append(user)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    ids, labels = _dense_labels(users)
    if len(labels) < 2:
        raise DataError(f"{path}: need at least 2 distinct users, found {len(labels)}")
    names = ("lat", "lon", "rss", *schema.aux)
    return Dataset(np.array(rows, dtype=np.float64), ids, names, labels)


@dataclass
class SynthConfig:
    """Generator geometry.

    Users live in Gaussian clusters around home points scattered over a square
    of side ``area_deg`` (degrees). RSS comes from the strongest of the base
    stations under log-distance path loss, or from a planted linear model when
    ``rss_model == "linear"``.
    """

    center_lat: float = 35.51
    center_lon: float = 24.02
    area_deg: float = 0.05
    clusters_per_user: int = 2
    cluster_std_deg: float = 0.0025
    base_stations: list | None = None
    n_base_stations: int = 4
    p0: float = -40.0
    eta: float = 3.0
    d0: float = 10.0
    shadowing_std: float = 4.0
    rss_model: str = "pathloss"
    linear_coef: tuple[float, float, float, float] = (-80.0, 12.0, -6.0, 3.0)
    n_aux: int = 2
    share_decay: float = 0.5
    user_shares: list | None = None

    @classmethod
    def from_dict(cls, d: dict | None) -> "SynthConfig":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synthetic config keys: {sorted(unknown)}")
        if "linear_coef" in d:
            d["linear_coef"] = tuple(d["linear_coef"])
        return cls(**d)

    def validate(self) -> None:
        if self.eta <= 0:
            raise ConfigError("path-loss exponent eta must be > 0")
        if self.d0 <= 0:
            raise ConfigError("reference distance d0 must be > 0")
        if self.base_stations is not None and len(self.base_stations) == 0:
            raise ConfigError("at least one base station is required")
        if self.base_stations is None and self.n_base_stations < 1:
            raise ConfigError("at least one base station is required")
        if self.shadowing_std < 0 or self.cluster_std_deg < 0 or self.area_deg <= 0:
            raise ConfigError("spreads must be non-negative and area positive")
        if self.clusters_per_user < 1:
            raise ConfigError("clusters_per_user must be >= 1")
        if self.n_aux < 0:
            raise ConfigError("n_aux must be >= 0")
        if self.rss_model not in ("pathloss", "linear"):
            raise ConfigError(f"unknown rss_model {self.rss_model!r}")


def path_loss_rss(lat, lon, bs_lat, bs_lon, p0, eta, d0) -> np.ndarray:
    """Log-distance path loss ``p0 - 10 eta log10(max(d, d0) / d0)`` from one base station."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    dy = (lat - bs_lat) * _M_PER_DEG_LAT
    dx = (lon - bs_lon) * _M_PER_DEG_LON * math.cos(math.radians(bs_lat))
    d = np.hypot(dx, dy)
    return p0 - 10.0 * eta * np.log10(np.maximum(d, d0) / d0)


def _user_counts(k: int, n: int, cfg: SynthConfig) -> np.ndarray:
    if cfg.user_shares is not None:
        shares = np.asarray(cfg.user_shares, dtype=np.float64)
        if shares.shape != (k,) or np.any(shares <= 0):
            raise ConfigError("user_shares must hold k positive values")
    else:
        shares = 1.0 / np.arange(1, k + 1) ** cfg.share_decay
    shares = shares / shares.sum()
    counts = np.floor(shares * n).astype(np.int64)
    # hand out the remainder to the largest fractional parts, ties to lower ids
    rem = n - counts.sum()
    frac = shares * n - counts
    counts[np.argsort(-frac, kind="stable")[:rem]] += 1
    return counts


def synthesize(k: int, n: int, seed: int = 0, geom: SynthConfig | dict | None = None) -> Dataset:
    """Generate a synthetic crowdsourced RSS dataset; a pure function of ``(k, n, seed, geom)``."""
    cfg = geom if isinstance(geom, SynthConfig) else SynthConfig.from_dict(geom)
    cfg.validate()
    if k < 2:
        raise ConfigError("k must be >= 2")
    if n < 10 * k:
        raise ConfigError("n must be >= 10 * k")
    rng = np.random.default_rng(seed)

    half = cfg.area_deg / 2
    if cfg.base_stations is not None:
        bs = np.asarray(cfg.base_stations, dtype=np.float64).reshape(-1, 2)
    else:
        bs = np.column_stack([
            cfg.center_lat + rng.uniform(-half, half, cfg.n_base_stations),
            cfg.center_lon + rng.uniform(-half, half, cfg.n_base_stations),
        ])

    counts = _user_counts(k, n, cfg)
    homes = rng.uniform(-half, half, size=(k, cfg.clusters_per_user, 2))
    user_ids = np.repeat(np.arange(k), counts)
    cluster = rng.integers(0, cfg.clusters_per_user, size=n)
    offsets = homes[user_ids, cluster] + rng.normal(0.0, cfg.cluster_std_deg, size=(n, 2))
    lat = cfg.center_lat + offsets[:, 0]
    lon = cfg.center_lon + offsets[:, 1]

    shadow = rng.normal(0.0, cfg.shadowing_std, size=n) if cfg.shadowing_std > 0 else np.zeros(n)
    aux_cols, aux_names = [], []
    if cfg.n_aux >= 1:
        # altitude-like feature that rises with latitude
        aux_cols.append(50.0 + 4000.0 * offsets[:, 0] + rng.normal(0.0, 10.0, size=n))
        aux_names.append("alt")
    for j in range(1, cfg.n_aux):
        aux_cols.append(rng.normal(0.0, 1.0, size=n))
        aux_names.append("noise" if j == 1 else f"noise{j}")

    if cfg.rss_model == "pathloss":
        per_bs = np.stack([path_loss_rss(lat, lon, b[0], b[1], cfg.p0, cfg.eta, cfg.d0) for b in bs])
        rss = per_bs.max(axis=0) + shadow
    else:
        c0, c_lat, c_lon, c_alt = cfg.linear_coef
        rss = c0 + c_lat * offsets[:, 0] / half + c_lon * offsets[:, 1] / half + shadow
        if cfg.n_aux >= 1:
            rss = rss + c_alt * (aux_cols[0] - 50.0) / 100.0

    feats = np.column_stack([lat, lon, rss, *aux_cols])
    perm = rng.permutation(n)
    return Dataset(feats[perm], user_ids[perm], ("lat", "lon", "rss", *aux_names), tuple(str(i) for i in range(k)))


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}


@dataclass
class FeatureMatrix:
    """Normalized ``n x m`` feature block; user ids ride alongside, never inside ``values``."""

    values: np.ndarray
    user_ids: np.ndarray | None = None

    def __post_init__(self):
        self.values = check_matrix(self.values, "values")
        if self.user_ids is not None:
            self.user_ids = np.asarray(self.user_ids, dtype=np.int64)
            if self.user_ids.shape != (self.values.shape[0],):
                raise DimensionError("user_ids must have one entry per row")

    def __len__(self):
        return self.values.shape[0]

    @property
    def locations(self) -> np.ndarray:
        return self.values[:, [LAT, LON]]

    def take(self, idx) -> "FeatureMatrix":
        return FeatureMatrix(self.values[idx], None if self.user_ids is None else self.user_ids[idx])


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    test: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))


def fit_normalizer(d: Dataset | np.ndarray, idx=None) -> NormStats:
    """Per-feature mean and population std over the rows ``idx`` (all rows if ``None``).

    Zero-variance features get std 1 so they normalize to zeros.
    """
    x = d.features if isinstance(d, Dataset) else check_matrix(d)
    if idx is not None:
        x = x[idx]
    if x.shape[0] == 0:
        raise ValueError("cannot fit a normalizer on zero rows")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return NormStats(mean, std)


def normalize(d: Dataset | np.ndarray, s: NormStats) -> FeatureMatrix:
    if isinstance(d, Dataset):
        x, ids = d.features, d.user_ids
    else:
        x, ids = check_matrix(d), None
    if x.shape[1] != s.mean.shape[0]:
        raise DimensionError(f"data has {x.shape[1]} features, stats have {s.mean.shape[0]}")
    return FeatureMatrix((x - s.mean) / s.std, ids)


def denormalize(f: FeatureMatrix | np.ndarray, s: NormStats) -> np.ndarray:
    v = f.values if isinstance(f, FeatureMatrix) else np.asarray(f, dtype=np.float64)
    if v.shape[-1] != s.mean.shape[0]:
        raise DimensionError(f"data has {v.shape[-1]} features, stats have {s.mean.shape[0]}")
    return v * s.std + s.mean


def split(d: Dataset | int, fraction: float = 0.7, seed=0) -> Split:
    """Shuffled train/test partition with ``round(fraction * n)`` training rows."""
    n = d if isinstance(d, (int, np.integer)) else len(d)
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    perm = as_rng(seed).permutation(n)
    n_train = int(round(fraction * n))
    return Split(np.sort(perm[:n_train]), np.sort(perm[n_train:]))


def batch_iter(f: FeatureMatrix, batch_size: int = 1024) -> Iterator[FeatureMatrix]:
    """Consecutive row blocks of ``batch_size``; the last partial block is kept."""
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    for start in range(0, len(f), batch_size):
        yield f.take(slice(start, start + batch_size))


def rss_grid(d: Dataset, bins: int = 20) -> list[tuple[float, float, float, int]]:
    """Bin measurements on a lat/lon grid; returns ``(lat_center, lon_center, mean_rss, count)`` per non-empty cell."""
    lat, lon, rss = d.features[:, LAT], d.features[:, LON], d.features[:, RSS]
    lat_edges = np.linspace(lat.min(), lat.max(), bins + 1)
    lon_edges = np.linspace(lon.min(), lon.max(), bins + 1)
    sums, _, _ = np.histogram2d(lat, lon, bins=[lat_edges, lon_edges], weights=rss)
    counts, _, _ = np.histogram2d(lat, lon, bins=[lat_edges, lon_edges])
    lat_c = (lat_edges[:-1] + lat_edges[1:]) / 2
    lon_c = (lon_edges[:-1] + lon_edges[1:]) / 2
    out = []
    for i, j in zip(*np.nonzero(counts)):
        out.append((float(lat_c[i]), float(lon_c[j]), float(sums[i, j] / counts[i, j]), int(counts[i, j])))
    return out


def write_rss_grid(d: Dataset, path, bins: int = 20) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["lat", "lon", "mean_rss", "count"])
        w.writerows(rss_grid(d, bins))


def read_dataset_source(source: dict, base_dir=None) -> Dataset:
    """Build a dataset from a config ``dataset`` section.

    ``{"csv": path, "schema": {...}}`` loads a file (relative paths resolve
    against ``base_dir``); ``{"synthetic": {"k", "n", "seed", ...}}`` calls
    :func:`synthesize` with the remaining keys as :class:`SynthConfig` fields.
    """
    if "csv" in source:
        path = Path(source["csv"])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return load_csv(path, CsvSchema.from_dict(source.get("schema", {})))
    if "synthetic" in source:
        opts = dict(source["synthetic"])
        k, n, seed = int(opts.pop("k", 5)), int(opts.pop("n", 5000)), int(opts.pop("seed", 0))
        return synthesize(k, n, seed, SynthConfig.from_dict(opts))
    raise ConfigError("dataset section needs a 'csv' or 'synthetic' entry")
