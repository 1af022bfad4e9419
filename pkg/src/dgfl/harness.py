"""Experiment configuration, convergence detection, and metric persistence."""
from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .confidence import DtwOptions, default_dtw_options
from .errors import ConfigError, RangeError
from .tudata import GraphDataset, SyntheticSpec, gen_synthetic, parse_tudataset


@dataclass
class DatasetSource:
    kind: str = "synthetic"  # "tudataset" | "synthetic"
    path: str = ""
    name: str = "synthetic"
    # synthetic family knobs
    count_a: int = 50
    count_b: int = 50
    nodes_a: int = 10
    nodes_b: int = 10
    mean_degree_a: float = 2.0
    mean_degree_b: float = 6.0
    degree_cap: int = 16


@dataclass
class ConvergenceCriterion:
    window: int = 20
    tau: float = 0.01

    def __post_init__(self):
        if self.window < 2:
            raise RangeError("convergence.window must be >= 2")
        if self.tau <= 0:
            raise RangeError("convergence.tau must be > 0")


@dataclass
class ExperimentConfig:
    method: str = "dgfl"  # dgfl | fedavg | fedprox
    rounds: int = 200
    n_clients: int = 10
    test_fraction: float = 0.1
    unevenness: float = 1.0
    epochs: int = 5
    batch_size: int = 128
    lr: float = 0.001
    weight_decay: float = 5e-4
    mu: float = 0.01
    hidden: int = 64
    layers: int = 3
    eval_interval: int = 1
    seed: int = 0
    out_dir: str = "out"
    dataset: DatasetSource = field(default_factory=DatasetSource)
    convergence: ConvergenceCriterion = field(default_factory=ConvergenceCriterion)
    # DTW knobs: 0 means "derive from gradient length"
    dtw_band: int = 0
    dtw_stride: int = 0
    standardization: str = "squash"  # squash | minmax_round
    similarity: str = "dtw"  # dtw | cosine
    gradient_application: str = "delta"  # delta | adam

    def dtw_options(self, n_params: int) -> DtwOptions:
        auto = default_dtw_options(n_params)
        stride = self.dtw_stride or auto.stride
        band = self.dtw_band or auto.band_width
        return DtwOptions(band_width=band, stride=stride)

    def load_dataset(self) -> GraphDataset:
        src = self.dataset
        if src.kind == "tudataset":
            return parse_tudataset(src.path, src.name)
        if src.kind == "synthetic":
            spec = SyntheticSpec(src.count_a, src.count_b, src.nodes_a, src.nodes_b,
                                 src.mean_degree_a, src.mean_degree_b,
                                 src.degree_cap, src.name)
            return gen_synthetic(spec, self.seed)
        raise ConfigError(f"unknown dataset kind {src.kind!r}")


_RANGES = {
    "rounds": lambda v: v >= 0,
    "n_clients": lambda v: v >= 1,
    "test_fraction": lambda v: 0 < v < 1,
    "unevenness": lambda v: v >= 0,
    "epochs": lambda v: v >= 0,
    "batch_size": lambda v: v >= 1,
    "lr": lambda v: v > 0,
    "weight_decay": lambda v: v >= 0,
    "mu": lambda v: v >= 0,
    "hidden": lambda v: v >= 1,
    "layers": lambda v: v >= 1,
    "eval_interval": lambda v: v >= 1,
    "dtw_band": lambda v: v >= 0,
    "dtw_stride": lambda v: v >= 0,
}
_CHOICES = {
    "method": {"dgfl", "fedavg", "fedprox"},
    "standardization": {"squash", "minmax_round"},
    "similarity": {"dtw", "cosine"},
    "gradient_application": {"delta", "adam"},
}


def _fill(cls, table: dict, prefix: str):
    allowed = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in table.items():
        if key not in allowed:
            raise ConfigError(f"unknown config key {prefix}{key!r}")
        kwargs[key] = value
    return cls(**kwargs)


def load_config(path) -> ExperimentConfig:
    """Parse a TOML config; unknown keys rejected, defaults filled."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> ExperimentConfig:
    raw = dict(raw)
    dataset = _fill(DatasetSource, raw.pop("dataset", {}), "dataset.")
    convergence = _fill(ConvergenceCriterion, raw.pop("convergence", {}), "convergence.")
    cfg = _fill(ExperimentConfig, raw, "")
    cfg.dataset = dataset
    cfg.convergence = convergence
    for key, ok in _RANGES.items():
        v = getattr(cfg, key)
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not ok(v):
            raise RangeError(f"config key {key!r} out of range: {v!r}")
    for key, choices in _CHOICES.items():
        if getattr(cfg, key) not in choices:
            raise RangeError(f"config key {key!r} must be one of {sorted(choices)}")
    return cfg


def detect_convergence(acc_series, criterion: ConvergenceCriterion) -> int | None:
    """Smallest index t whose next W values fluctuate within tau; None if no
    window qualifies or the series is shorter than W."""
    series = list(acc_series)
    w = criterion.window
    if len(series) < w:
        return None
    for t in range(len(series) - w + 1):
        window = series[t: t + w]
        if max(window) - min(window) <= criterion.tau:
            return t
    return None


def _fmt(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".17g")


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def mean_accuracy_series(logs) -> list[float]:
    """Per evaluated round, the mean accuracy over clients."""
    out = []
    for log in logs:
        accs = [e.accuracy for e in log.entries.values() if e.accuracy is not None]
        if accs:
            out.append(sum(accs) / len(accs))
    return out


def emit_metrics(logs, out_dir, criterion: ConvergenceCriterion | None = None) -> dict:
    """Write metrics.csv and summary.json; byte-stable for identical logs."""
    if not logs:
        raise ConfigError("emit_metrics needs at least one round log")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    criterion = criterion or ConvergenceCriterion()

    lines = ["round,client,loss,accuracy,receiver,n_senders,grad_norm"]
    for log in sorted(logs, key=lambda lg: lg.round):
        for cid in sorted(log.entries):
            e = log.entries[cid]
            lines.append(",".join([
                str(log.round), str(cid), _fmt(e.loss), _fmt(e.accuracy),
                str(e.receiver), str(len(e.confidences)), _fmt(e.grad_norm)]))
    _atomic_write(out / "metrics.csv", "\n".join(lines) + "\n")

    series = mean_accuracy_series(logs)
    conv = detect_convergence(series, criterion)
    summary = {
        "final_mean_accuracy": float(series[-1]) if series else None,
        "convergence_round": conv,
        "total_wall_time_ms": int(sum(lg.wall_time_ms for lg in logs)),
        "rounds": len(logs),
    }
    _atomic_write(out / "summary.json",
                  json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
