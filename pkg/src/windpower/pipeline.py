"""SCADA ingestion and 30-minute feature engineering.

Raw 10-minute turbine records are parsed from CSV, restricted to fully
operational periods and aggregated into 30-minute instants carrying the
seven explanatory variables used by every model in the package:

    w, d_cos, d_sin, t, w_var, d_var_re, d_var_im

plus the mean turbine power ``y``.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Iterable, Sequence, TextIO

import numpy as np

FEATURES = ("w", "d_cos", "d_sin", "t", "w_var", "d_var_re", "d_var_im")
N_FEATURES = len(FEATURES)

SCADA_COLUMNS = (
    "timestamp",
    "turbine_id",
    "state",
    "wind_speed_heated",
    "wind_speed",
    "wind_direction_deg",
    "temperature_c",
    "power_kw",
)

_TEN_MINUTES = timedelta(minutes=10)
_MIN_POWER_KW = -50.0
_DEGENERATE_RESULTANT = 1e-12


class SchemaError(ValueError):
    """The CSV header does not carry a mandatory column."""


class DegenerateMeanError(ValueError):
    """Angles whose mean resultant vector vanishes have no mean direction."""


class TurbineState(enum.Enum):
    FULL_OPERATION = "FULL"
    START = "START"
    STOP = "STOP"
    MAINTENANCE = "MAINT"
    UNKNOWN = "UNKNOWN"

    @classmethod
    def parse(cls, code: str) -> "TurbineState":
        key = code.strip().upper()
        aliases = {
            "FULL": cls.FULL_OPERATION,
            "FULLOPERATION": cls.FULL_OPERATION,
            "FULL_OPERATION": cls.FULL_OPERATION,
            "START": cls.START,
            "STOP": cls.STOP,
            "MAINT": cls.MAINTENANCE,
            "MAINTENANCE": cls.MAINTENANCE,
            "UNKNOWN": cls.UNKNOWN,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown state code {code!r}") from None


@dataclass(frozen=True)
class RawRecord:
    timestamp: datetime
    turbine_id: str
    wind_speed: float
    wind_direction: float
    temperature: float
    power: float
    state: TurbineState


@dataclass(frozen=True)
class FeatureRow:
    timestamp: datetime
    w: float
    d_cos: float
    d_sin: float
    t: float
    w_var: float
    d_var_re: float
    d_var_im: float
    y: float

    def features(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURES])


@dataclass
class TurbineDataset:
    """Time-ordered 30-minute feature rows for one turbine.

    Stored column-wise: ``timestamps`` is a ``datetime64[s]`` array, ``X`` has
    one column per entry of :data:`FEATURES` and ``y`` is the mean power (kW).
    """

    turbine_id: str
    timestamps: np.ndarray
    X: np.ndarray
    y: np.ndarray
    skipped_windows: int = 0

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype="datetime64[s]")
        self.X = np.asarray(self.X, dtype=float).reshape(-1, N_FEATURES)
        self.y = np.asarray(self.y, dtype=float)
        if not (len(self.timestamps) == len(self.X) == len(self.y)):
            raise ValueError("timestamps, X and y must have equal length")
        if len(self.timestamps) > 1 and np.any(np.diff(self.timestamps) <= np.timedelta64(0, "s")):
            raise ValueError("rows must be strictly increasing in time")

    def __len__(self) -> int:
        return len(self.y)

    def rows(self) -> list[FeatureRow]:
        out = []
        for ts, x, y in zip(self.timestamps, self.X, self.y):
            when = ts.astype("datetime64[s]").astype(datetime).replace(tzinfo=timezone.utc)
            out.append(FeatureRow(when, *map(float, x), float(y)))
        return out

    @classmethod
    def from_rows(cls, turbine_id: str, rows: Sequence[FeatureRow], skipped_windows: int = 0):
        ts = [_to_datetime64(r.timestamp) for r in rows]
        X = np.array([r.features() for r in rows]).reshape(-1, N_FEATURES)
        y = np.array([r.y for r in rows], dtype=float)
        return cls(turbine_id, np.array(ts, dtype="datetime64[s]"), X, y, skipped_windows)


@dataclass
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray
    names: tuple[str, ...] = FEATURES

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(), "names": list(self.names)}

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationStats":
        return cls(np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float), tuple(d["names"]))


@dataclass
class ParseResult:
    records: list[RawRecord]
    rejections: list[tuple[int, str]] = field(default_factory=list)

    @property
    def n_rejected(self) -> int:
        return len(self.rejections)


# --------------------------------------------------------------------------
# parsing


def _parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        return ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _to_datetime64(ts: datetime) -> np.datetime64:
    if ts.tzinfo is not None:
        ts = ts.astimezone(timezone.utc).replace(tzinfo=None)
    return np.datetime64(ts, "s")


def parse_scada(source: TextIO | str, schema: dict[str, str] | None = None) -> ParseResult:
    """Parse a SCADA CSV stream into :class:`RawRecord` objects.

    Parameters
    ----------
    source : text stream or str
        Header-bearing CSV text (a ``str`` is treated as the content itself).
    schema : dict, optional
        Maps the canonical column names of :data:`SCADA_COLUMNS` to the
        names used in the file header.

    Returns
    -------
    ParseResult
        Accepted records plus ``(line_number, reason)`` for each rejected line.
        Line numbers are 1-based and count the header as line 1.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    colmap = {c: c for c in SCADA_COLUMNS}
    if schema:
        colmap.update(schema)

    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("empty SCADA stream: no header line") from None
    # the classical anemometer column is carried but unused
    mandatory = [c for c in SCADA_COLUMNS if c != "wind_speed"]
    missing = [colmap[c] for c in mandatory if colmap[c] not in header]
    if missing:
        raise SchemaError(f"missing mandatory column(s): {', '.join(missing)}")
    pos = {c: header.index(colmap[c]) for c in mandatory}

    result = ParseResult([])
    last_seen: dict[str, datetime] = {}
    for lineno, fields in enumerate(reader, start=2):
        if not fields or all(not f.strip() for f in fields):
            continue
        try:
            get = lambda c: fields[pos[c]]  # noqa: E731
            try:
                ts = _parse_timestamp(get("timestamp"))
            except ValueError:
                raise ValueError(f"unparseable timestamp {get('timestamp')!r}") from None
            if ts.second or ts.microsecond or ts.minute % 10:
                raise ValueError("timestamp not on a 10-minute boundary")
            turbine = get("turbine_id").strip()
            state = TurbineState.parse(get("state"))
            speed = _parse_float(get("wind_speed_heated"), "wind_speed_heated")
            direction = _parse_float(get("wind_direction_deg"), "wind_direction_deg")
            temperature = _parse_float(get("temperature_c"), "temperature_c")
            power = _parse_float(get("power_kw"), "power_kw")
            if speed < 0:
                raise ValueError("negative wind speed")
            if not 0.0 <= direction < 360.0:
                raise ValueError("wind direction outside [0, 360)")
            if power < _MIN_POWER_KW:
                raise ValueError(f"power below {_MIN_POWER_KW} kW")
            prev = last_seen.get(turbine)
            if prev is not None and ts <= prev:
                raise ValueError("timestamp not strictly increasing for turbine")
        except IndexError:
            result.rejections.append((lineno, "too few fields"))
            continue
        except ValueError as exc:
            result.rejections.append((lineno, str(exc)))
            continue
        last_seen[turbine] = ts
        result.records.append(RawRecord(ts, turbine, speed, direction, temperature, power, state))
    return result


def _parse_float(text: str, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValueError(f"non-numeric {column} {text!r}") from None
    if not math.isfinite(value):
        raise ValueError(f"non-finite {column}")
    return value


def write_rejections(path, rejections: Iterable[tuple[int, str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["line", "reason"])
        writer.writerows(rejections)


def write_scada(fh: TextIO, records: Iterable[RawRecord], heated_offset: float = 0.0) -> None:
    """Write records in the SCADA CSV schema.

    The classical anemometer column is filled with the heated reading plus
    ``heated_offset``; it is never read back.
    """
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(SCADA_COLUMNS)
    for r in records:
        writer.writerow([
            r.timestamp.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"),
            r.turbine_id,
            r.state.value,
            f"{r.wind_speed:.4f}",
            f"{r.wind_speed + heated_offset:.4f}",
            f"{r.wind_direction:.4f}",
            f"{r.temperature:.4f}",
            f"{r.power:.4f}",
        ])


# --------------------------------------------------------------------------
# aggregation


def filter_operational(records: Iterable[RawRecord]) -> list[RawRecord]:
    return [r for r in records if r.state is TurbineState.FULL_OPERATION]


def circular_mean(angles) -> float:
    """Mean direction in degrees, in ``[0, 360)``.

    Raises :class:`DegenerateMeanError` when the mean resultant vector is
    shorter than 1e-12 (e.g. two opposite angles).
    """
    theta = np.deg2rad(np.asarray(angles, dtype=float).ravel())
    if theta.size == 0:
        raise ValueError("circular_mean of an empty sequence")
    c, s = np.cos(theta).mean(), np.sin(theta).mean()
    if math.hypot(c, s) < _DEGENERATE_RESULTANT:
        raise DegenerateMeanError("mean resultant vector vanishes; direction undefined")
    deg = math.degrees(math.atan2(s, c)) % 360.0
    # -tiny % 360 rounds to 360.0
    return 0.0 if deg >= 360.0 else deg


def direction_pseudo_variance(angles) -> complex:
    """Complex second moment of unit direction vectors about their mean.

    ``sum((z - zbar)**2) / (n - 1)`` with ``z = exp(i*theta)``. Unlike the
    conjugate form ``|z - zbar|**2`` this is genuinely complex-valued.
    """
    z = np.exp(1j * np.deg2rad(np.asarray(angles, dtype=float)))
    if z.size < 2:
        raise ValueError("need at least 2 angles")
    dz = z - z.mean()
    return complex(np.sum(dz * dz) / (z.size - 1))


def aggregate_30min(records: Sequence[RawRecord]) -> TurbineDataset:
    """Aggregate operational 10-minute records into 30-minute feature rows.

    Windows start at :00 and :30 UTC. A window is emitted only when all three
    of its 10-minute records are present; incomplete windows and windows whose
    directions have no defined mean are counted in ``skipped_windows``.
    """
    if not records:
        return TurbineDataset("", np.array([], dtype="datetime64[s]"), np.empty((0, N_FEATURES)), np.empty(0))
    ids = {r.turbine_id for r in records}
    if len(ids) > 1:
        raise ValueError(f"records mix turbines: {sorted(ids)}")
    turbine_id = ids.pop()

    windows: dict[datetime, list[RawRecord]] = {}
    for r in records:
        ts = r.timestamp
        start = ts.replace(minute=ts.minute - ts.minute % 30, second=0, microsecond=0)
        windows.setdefault(start, []).append(r)

    stamps, rows, targets = [], [], []
    skipped = 0
    for start in sorted(windows):
        group = windows[start]
        offsets = sorted((r.timestamp - start) // _TEN_MINUTES for r in group)
        if offsets != [0, 1, 2]:
            skipped += 1
            continue
        group = sorted(group, key=lambda r: r.timestamp)
        speeds = np.array([r.wind_speed for r in group])
        dirs = np.array([r.wind_direction for r in group])
        try:
            mean_dir = math.radians(circular_mean(dirs))
        except DegenerateMeanError:
            skipped += 1
            continue
        pv = direction_pseudo_variance(dirs)
        rows.append([
            speeds.mean(),
            math.cos(mean_dir),
            math.sin(mean_dir),
            float(np.mean([r.temperature for r in group])),
            speeds.var(ddof=1),
            pv.real,
            pv.imag,
        ])
        targets.append(float(np.mean([r.power for r in group])))
        stamps.append(_to_datetime64(start))

    return TurbineDataset(
        turbine_id,
        np.array(stamps, dtype="datetime64[s]"),
        np.array(rows, dtype=float).reshape(-1, N_FEATURES),
        np.array(targets, dtype=float),
        skipped,
    )


def build_datasets(records: Iterable[RawRecord]) -> dict[str, TurbineDataset]:
    """Filter and aggregate a multi-turbine record stream, one dataset per turbine."""
    by_turbine: dict[str, list[RawRecord]] = {}
    for r in filter_operational(records):
        by_turbine.setdefault(r.turbine_id, []).append(r)
    return {tid: aggregate_30min(recs) for tid, recs in sorted(by_turbine.items())}


# --------------------------------------------------------------------------
# farm-level views


def _common_timestamps(farm: Sequence[TurbineDataset]) -> np.ndarray:
    common = farm[0].timestamps
    for ds in farm[1:]:
        common = np.intersect1d(common, ds.timestamps, assume_unique=True)
    return common


def _average_features(stack: np.ndarray) -> np.ndarray:
    """Average a ``(n_turbines, T, 7)`` feature stack over turbines."""
    avg = stack.mean(axis=0)
    norm = np.hypot(avg[:, 1], avg[:, 2])
    if np.any(norm < _DEGENERATE_RESULTANT):
        raise DegenerateMeanError("turbine directions cancel; farm mean direction undefined")
    avg[:, 1] /= norm
    avg[:, 2] /= norm
    return avg


def virtual_sensor_average(farm: Sequence[TurbineDataset]) -> TurbineDataset:
    """Farm-averaged "virtual sensor" features on the common timestamps.

    Scalar features are arithmetic means over turbines. Direction uses the
    resultant of the per-turbine ``(d_cos, d_sin)`` rescaled to unit length.
    The target is left as NaN: power is still predicted per turbine.
    """
    if not farm:
        raise ValueError("empty farm")
    common = _common_timestamps(farm)
    if common.size == 0:
        raise ValueError("turbines share no timestamps")
    stack = np.stack([ds.X[np.isin(ds.timestamps, common)] for ds in farm])
    return TurbineDataset("virtual", common, _average_features(stack), np.full(common.size, np.nan))


@dataclass
class FarmData:
    """Per-turbine features and targets on a shared time axis.

    ``X`` has shape ``(n_turbines, T, 7)`` and ``y`` ``(n_turbines, T)``.
    """

    turbine_ids: list[str]
    timestamps: np.ndarray
    X: np.ndarray
    y: np.ndarray

    @property
    def n_turbines(self) -> int:
        return len(self.turbine_ids)

    def __len__(self) -> int:
        return len(self.timestamps)

    @classmethod
    def align(cls, farm: Sequence[TurbineDataset]) -> "FarmData":
        if not farm:
            raise ValueError("empty farm")
        common = _common_timestamps(farm)
        X = np.stack([ds.X[np.isin(ds.timestamps, common)] for ds in farm])
        y = np.stack([ds.y[np.isin(ds.timestamps, common)] for ds in farm])
        return cls([ds.turbine_id for ds in farm], common, X, y)

    def virtual(self) -> "FarmData":
        """Same farm with every turbine's features replaced by the farm average."""
        avg = _average_features(self.X.copy())
        X = np.broadcast_to(avg, self.X.shape).copy()
        return FarmData(list(self.turbine_ids), self.timestamps, X, self.y)

    def total_power(self) -> np.ndarray:
        return self.y.sum(axis=0)

    def head(self, n: int) -> "FarmData":
        return FarmData(list(self.turbine_ids), self.timestamps[:n], self.X[:, :n], self.y[:, :n])


# --------------------------------------------------------------------------
# standardization


def compute_stats(X, names: Sequence[str] = FEATURES) -> StandardizationStats:
    """Column means and ``ddof=1`` standard deviations of a training matrix."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise ValueError("need at least 2 rows to standardize")
    names = tuple(names)[: X.shape[1]] if len(names) >= X.shape[1] else tuple(f"x{j}" for j in range(X.shape[1]))
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=1)
    const = [names[j] for j in np.flatnonzero(~(std > 0))]
    if const:
        raise ValueError(f"constant column(s) cannot be standardized: {', '.join(const)}")
    return StandardizationStats(mean, std, names)


def apply_stats(stats: StandardizationStats, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return stats.apply(X)


class FeatureSet(str, enum.Enum):
    WIND_ONLY = "wind"
    ALL = "all"

    @property
    def n_features(self) -> int:
        return 1 if self is FeatureSet.WIND_ONLY else N_FEATURES


def select_features(X, feature_set: FeatureSet | str) -> np.ndarray:
    """Restrict a full 7-column feature matrix to ``feature_set``.

    A matrix that already has the feature set's width is returned unchanged.
    """
    fs = FeatureSet(feature_set)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :] if X.size == N_FEATURES else X[:, None]
    if X.shape[1] == fs.n_features:
        return X
    if X.shape[1] == N_FEATURES and fs is FeatureSet.WIND_ONLY:
        return X[:, :1]
    raise ValueError(f"{X.shape[1]}-column input does not match feature set {fs.value!r}")


def farm_from_records(records: Iterable[RawRecord]) -> FarmData:
    """Full pipeline: filter, aggregate per turbine, align on common instants."""
    datasets = build_datasets(records)
    if not datasets:
        raise ValueError("no operational records")
    return FarmData.align([datasets[k] for k in sorted(datasets)])
