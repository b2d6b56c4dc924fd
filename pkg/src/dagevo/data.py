"""Dataset ingestion, synthetic series for desk-scale experiments, run configs.

CSV layout: UTF-8, comma-separated, header row, optional leading `timestamp`
column (ignored for the math), every other cell a decimal float. Config files
are flat `key = value` text with dotted section prefixes; `#` starts a comment.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigError, DomainError, MissingValueError, ParseError
from .evolution import EvolutionConfig, MutationConfig
from .nn.network import TrainConfig


@dataclass(frozen=True)
class Dataset:
    name: str
    y: np.ndarray            # (T, N) targets
    x: np.ndarray | None     # (T, F) optional flattened features
    frequency: str
    lag: int
    horizon: int

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        if y.ndim != 2:
            raise ParseError(f"target matrix must be 2-D, got shape {y.shape}")
        if not np.all(np.isfinite(y)):
            raise MissingValueError("target matrix contains NaN or infinite entries")
        if self.x is not None and not np.all(np.isfinite(self.x)):
            raise MissingValueError("feature matrix contains NaN or infinite entries")
        if y.shape[0] <= self.lag + self.horizon:
            raise ParseError(
                f"series length {y.shape[0]} must exceed lag+horizon={self.lag + self.horizon}"
            )
        object.__setattr__(self, "y", y)

    @property
    def length(self) -> int:
        return self.y.shape[0]

    @property
    def n_series(self) -> int:
        return self.y.shape[1]


def load_csv(path, lag: int, horizon: int, name: str | None = None,
             frequency: str = "unknown", feature_columns: tuple = ()) -> Dataset:
    """Read a numeric CSV into a Dataset; rows are assumed chronological.

    Columns listed in `feature_columns` land in the feature matrix instead of
    the targets. A column named `timestamp` is skipped.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        header = [h.strip() for h in header]
        unknown = set(feature_columns) - set(header)
        if unknown:
            raise ParseError(f"feature columns {sorted(unknown)} not in header", line=1)
        y_cols = [
            i for i, h in enumerate(header) if h != "timestamp" and h not in feature_columns
        ]
        x_cols = [i for i, h in enumerate(header) if h in feature_columns]
        if not y_cols:
            raise ParseError("no target columns in header", line=1)
        y_rows, x_rows = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} cells, got {len(row)}", line=line_no)
            values = []
            for col in y_cols + x_cols:
                cell = row[col].strip()
                if cell == "":
                    raise MissingValueError(f"empty cell at line {line_no}, column {header[col]!r}")
                try:
                    value = float(cell)
                except ValueError:
                    raise ParseError(
                        f"non-numeric cell {cell!r}", line=line_no, field=header[col]
                    ) from None
                if math.isnan(value):
                    raise MissingValueError(f"NaN at line {line_no}, column {header[col]!r}")
                values.append(value)
            y_rows.append(values[: len(y_cols)])
            x_rows.append(values[len(y_cols) :])
    y = np.array(y_rows, dtype=np.float64)
    x = np.array(x_rows, dtype=np.float64) if x_cols else None
    return Dataset(
        name=name or str(path),
        y=y,
        x=x,
        frequency=frequency,
        lag=lag,
        horizon=horizon,
    )


def write_csv(dataset: Dataset, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"y{i}" for i in range(dataset.n_series)])
        for row in dataset.y:
            writer.writerow([repr(float(v)) for v in row])


SYNTH_KINDS = ("sine", "ar1", "trend_noise")


def synth(kind: str, params: dict, t: int, seed: int,
          lag: int = 24, horizon: int = 12) -> Dataset:
    """Deterministic synthetic series: sine, AR(1) or linear trend, plus Gaussian noise."""
    if t < 16:
        raise DomainError(f"synthetic series needs t >= 16, got {t}")
    rng = np.random.default_rng(seed)
    sigma = float(params.get("sigma", 0.1))
    noise = rng.normal(0.0, sigma, size=t) if sigma > 0 else np.zeros(t)
    if kind == "sine":
        amplitude = float(params.get("amplitude", 1.0))
        period = float(params.get("period", 24.0))
        y = amplitude * np.sin(2 * np.pi * np.arange(t) / period) + noise
    elif kind == "ar1":
        phi = float(params.get("phi", 0.8))
        if abs(phi) >= 1:
            raise DomainError(f"ar1 needs |phi| < 1, got {phi}")
        y = np.empty(t)
        y[0] = noise[0]
        for i in range(1, t):
            y[i] = phi * y[i - 1] + noise[i]
    elif kind == "trend_noise":
        slope = float(params.get("slope", 0.01))
        y = slope * np.arange(t) + noise
    else:
        raise DomainError(f"unknown synthetic kind {kind!r}, pick one of {SYNTH_KINDS}")
    return Dataset(
        name=f"synth-{kind}",
        y=y[:, None],
        x=None,
        frequency="synthetic",
        lag=lag,
        horizon=horizon,
    )


@dataclass(frozen=True)
class DataConfig:
    kind: str = "synthetic"          # synthetic | csv
    path: str = ""
    synth_kind: str = "sine"
    t: int = 600
    seed: int = 0
    amplitude: float = 1.0
    period: float = 24.0
    sigma: float = 0.1
    phi: float = 0.8
    slope: float = 0.01
    feature_columns: tuple = ()
    lag: int = 24
    horizon: int = 12
    valid_fraction: float = 0.15
    test_fraction: float = 0.15


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    out_dir: str = "runs/out"

    def load_dataset(self) -> Dataset:
        d = self.data
        if d.kind == "csv":
            return load_csv(d.path, d.lag, d.horizon, feature_columns=d.feature_columns)
        params = {
            "amplitude": d.amplitude,
            "period": d.period,
            "sigma": d.sigma,
            "phi": d.phi,
            "slope": d.slope,
        }
        return synth(d.synth_kind, params, d.t, d.seed, lag=d.lag, horizon=d.horizon)


_SECTION_TYPES = {
    "data": DataConfig,
    "evolution": EvolutionConfig,
    "mutation": MutationConfig,
    "train": TrainConfig,
    "output": None,
}

_FIELD_PARSERS = {int: int, float: float, str: str}


def _parse_value(raw: str, target_type, key: str):
    if target_type is tuple:
        return tuple(part.strip() for part in raw.split(",") if part.strip())
    if target_type is int:
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"key {key!r}: expected an integer, got {raw!r}") from None
    if target_type is float:
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"key {key!r}: expected a number, got {raw!r}") from None
    return raw


def config_keys() -> dict[str, list[str]]:
    """Documented key list per section, for CLI help."""
    out = {}
    for section, cls in _SECTION_TYPES.items():
        if cls is None:
            out[section] = ["dir"]
        else:
            out[section] = [f.name for f in fields(cls) if f.name != "mutation"]
    return out


def parse_config(path) -> RunConfig:
    """Parse and validate a flat `section.key = value` run configuration."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot open config {path}: {exc}") from exc
    values: dict[str, dict[str, object]] = {name: {} for name in _SECTION_TYPES}
    out_dir = None
    for line_no, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {text!r}")
        key, raw = (part.strip() for part in text.split("=", 1))
        if "." not in key:
            raise ConfigError(f"unknown key {key!r} (keys use a section prefix, e.g. data.lag)")
        section, name = key.split(".", 1)
        if section not in _SECTION_TYPES:
            raise ConfigError(f"unknown key {key!r}")
        if section == "output":
            if name != "dir":
                raise ConfigError(f"unknown key {key!r}")
            out_dir = raw
            continue
        cls = _SECTION_TYPES[section]
        valid = {f.name: f.type for f in fields(cls) if f.name != "mutation"}
        if name not in valid:
            raise ConfigError(f"unknown key {key!r}")
        annotation = valid[name]
        if isinstance(annotation, str):
            annotation = {"int": int, "float": float, "str": str, "tuple": tuple}.get(
                annotation, str
            )
        values[section][name] = _parse_value(raw, annotation, key)
    try:
        mutation = MutationConfig(**values["mutation"])
        evolution = EvolutionConfig(mutation=mutation, **values["evolution"])
        cfg = RunConfig(
            data=DataConfig(**values["data"]),
            evolution=evolution,
            train=TrainConfig(**values["train"]),
            out_dir=out_dir or "runs/out",
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    _validate_run_config(cfg)
    return cfg


def _validate_run_config(cfg: RunConfig):
    d = cfg.data
    if d.kind not in ("synthetic", "csv"):
        raise ConfigError(f"key 'data.kind': must be synthetic or csv, got {d.kind!r}")
    if d.kind == "csv" and not d.path:
        raise ConfigError("key 'data.path': required when data.kind = csv")
    if d.kind == "synthetic" and d.synth_kind not in SYNTH_KINDS:
        raise ConfigError(f"key 'data.synth_kind': pick one of {SYNTH_KINDS}")
    if d.lag < 1 or d.horizon < 1:
        raise ConfigError("keys 'data.lag'/'data.horizon': must be >= 1")
    for key, value in (("valid_fraction", d.valid_fraction), ("test_fraction", d.test_fraction)):
        if not 0 <= value < 1:
            raise ConfigError(f"key 'data.{key}': must be in [0, 1)")
    cfg.evolution.validate()
    t = cfg.train
    if t.epochs < 0 or t.batch_size < 1 or t.learning_rate <= 0 or t.clip_norm <= 0:
        raise ConfigError("train settings must be positive (epochs may be 0)")
