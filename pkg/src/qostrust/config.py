"""Run configuration: one TOML document drives a whole reproduction run.

Grammar (every block optional, defaults shown in ``data/default.toml``)::

    [schema]                  # attribute name = "positive" | "negative", in column order
    response_time = "negative"

    [dataset]
    source = "synthetic"      # or "qws"
    path = "qws.csv"          # qws only; relative to the config file
    layout = "qws2"           # "qws2" or "plain" (attributes in the first m columns)
    split = [0.8, 0.2]
    seed = 0
    sizes = [250, 250, 250, 250]
    spread = 0.05
    n_feedback = 10
    feedback_noise = 0.1

    [dataset.ranges]          # synthetic only, for attributes outside the QWS set
    my_attr = [worst, best]

    [network]                 # hidden, learning_rate, max_epochs, acceptable_error,
                              # trainer, perturbation_step, stop_metric, init, seed
    [pnn]                     # sigma, prefactor, scaling
    [adversary]               # malicious_service_ratio, malicious_feedback_ratio,
                              # perturbation_scale, intensity, seed
    [experiment]              # axis, grid, trials, ideal, target, max_epochs
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import tomli

from . import datasets as ds
from . import network as nw
from . import pipeline as pl
from . import pnn
from .evaluation import DataSource, derive_seed
from .qos_model import AttributeSchema

CONFIG_DIR_ENV = "QOSTRUST_CONFIG_DIR"
DEFAULT_CONFIG_NAME = "qostrust.toml"

AXES = ("malicious_service_ratio", "malicious_feedback_ratio", "sigma", "learning_rate")
LAYOUTS = {"qws2": ds.QWS2_LAYOUT, "plain": ds.QwsLayout()}

_KEYS = {
    "dataset": {"source", "path", "layout", "split", "seed", "sizes", "spread", "n_feedback",
                "feedback_noise", "ranges"},
    "network": {"hidden", "learning_rate", "max_epochs", "acceptable_error", "trainer",
                "perturbation_step", "stop_metric", "init", "seed"},
    "pnn": {"sigma", "prefactor", "scaling"},
    "adversary": {"malicious_service_ratio", "malicious_feedback_ratio", "perturbation_scale",
                  "intensity", "seed"},
    "experiment": {"axis", "grid", "trials", "ideal", "target", "max_epochs"},
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    source: str = "synthetic"
    path: Optional[Path] = None
    layout: str = "qws2"
    split: tuple[float, float] = (0.8, 0.2)
    seed: int = 0
    sizes: tuple[int, ...] = (250, 250, 250, 250)
    spread: float = 0.05
    n_feedback: int = 10
    feedback_noise: float = 0.1
    ranges: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ExperimentConfig:
    axis: str = "malicious_service_ratio"
    grid: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
    trials: int = 5
    ideal: float = 1.0
    target: float = 0.10
    max_epochs: int = 2000


@dataclass(frozen=True)
class RunConfig:
    schema: AttributeSchema
    dataset: DatasetConfig
    pipeline: pl.PipelineConfig
    adversary: ds.AdversarySpec
    experiment: ExperimentConfig
    source_text: str = ""

    @property
    def seed(self) -> int:
        return self.dataset.seed

    def synthetic_spec(self) -> ds.SyntheticSpec:
        builtin = {a[0]: a for a in ds.QWS_ATTRIBUTES}
        attrs = []
        for name, pol in zip(self.schema.names, self.schema.polarities):
            if name in self.dataset.ranges:
                worst, best = self.dataset.ranges[name]
            elif name in builtin:
                if builtin[name][1] != pol.value:
                    raise ConfigError(f"schema polarity of {name!r} disagrees with its built-in range; set dataset.ranges")
                worst, best = builtin[name][2:]
            else:
                raise ConfigError(f"synthetic source has no value range for {name!r}; set dataset.ranges")
            attrs.append((name, pol.value, float(worst), float(best)))
        d = self.dataset
        return ds.SyntheticSpec(
            sizes=d.sizes, spread=d.spread, n_feedback=d.n_feedback,
            feedback_noise=d.feedback_noise, seed=d.seed, attributes=tuple(attrs),
        )

    def fingerprint(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        d = self.dataset
        return {
            "schema": self.schema.to_dict(),
            "dataset": {
                "source": d.source, "path": str(d.path) if d.path else None, "layout": d.layout,
                "split": list(d.split), "seed": d.seed, "sizes": list(d.sizes), "spread": d.spread,
                "n_feedback": d.n_feedback, "feedback_noise": d.feedback_noise,
                "ranges": {k: list(v) for k, v in sorted(d.ranges.items())},
            },
            "pipeline": self.pipeline.to_dict(),
            "adversary": dict(self.adversary.__dict__),
            "experiment": {**self.experiment.__dict__, "grid": list(self.experiment.grid)},
        }


def default_config_path() -> Path:
    """``$QOSTRUST_CONFIG_DIR/qostrust.toml`` when that exists, else the bundled default."""
    env = os.environ.get(CONFIG_DIR_ENV)
    if env:
        candidate = Path(env) / DEFAULT_CONFIG_NAME
        if candidate.is_file():
            return candidate
    return bundled_config("default.toml")


def bundled_config(name: str) -> Path:
    return Path(str(resources.files("qostrust").joinpath("data", name)))


def resolve_config_path(path: Optional[str]) -> Path:
    """A relative name missing from the working directory is looked up in
    ``$QOSTRUST_CONFIG_DIR`` and then among the bundled presets."""
    if path is None:
        return default_config_path()
    p = Path(path)
    if p.exists() or p.is_absolute():
        return p
    candidates = []
    if os.environ.get(CONFIG_DIR_ENV):
        candidates.append(Path(os.environ[CONFIG_DIR_ENV]) / p)
    candidates.append(bundled_config(str(p)))
    return next((c for c in candidates if c.is_file()), p)


def _block(doc: dict, name: str) -> dict:
    block = doc.get(name, {})
    if not isinstance(block, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = set(block) - _KEYS.get(name, set(block))
    if unknown:
        raise ConfigError(f"[{name}] has unknown keys: {', '.join(sorted(unknown))}")
    return block


def _check_ratio(name: str, value) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{name} must lie in [0, 1], got {value}")
    return value


def parse_config(text: str, base_dir: Path = Path("."), seed: Optional[int] = None) -> RunConfig:
    """Parse and fully validate a run config; ``seed`` overrides ``dataset.seed``."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    unknown = set(doc) - {"schema", *_KEYS}
    if unknown:
        raise ConfigError(f"unknown config blocks: {', '.join(sorted(unknown))}")
    try:
        return _build(doc, base_dir, seed, text)
    except ConfigError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc


def _build(doc: dict, base_dir: Path, seed: Optional[int], text: str) -> RunConfig:
    schema_block = doc.get("schema")
    schema = AttributeSchema.from_pairs(list(schema_block.items())) if schema_block else ds.qws_schema()

    d = _block(doc, "dataset")
    source = d.get("source", "synthetic")
    if source not in ("synthetic", "qws"):
        raise ConfigError(f"dataset.source must be 'synthetic' or 'qws', got {source!r}")
    layout = d.get("layout", "qws2")
    if layout not in LAYOUTS:
        raise ConfigError(f"dataset.layout must be one of {sorted(LAYOUTS)}")
    split = tuple(float(f) for f in d.get("split", (0.8, 0.2)))
    if len(split) != 2 or min(split) <= 0 or abs(sum(split) - 1.0) > 1e-9:
        raise ConfigError("dataset.split must be two positive fractions summing to 1")
    path = d.get("path")
    dataset = DatasetConfig(
        source=source,
        path=(base_dir / path) if path else None,
        layout=layout,
        split=split,
        seed=int(seed if seed is not None else d.get("seed", 0)),
        sizes=tuple(int(s) for s in d.get("sizes", (250, 250, 250, 250))),
        spread=float(d.get("spread", 0.05)),
        n_feedback=int(d.get("n_feedback", 10)),
        feedback_noise=float(d.get("feedback_noise", 0.1)),
        ranges={k: tuple(float(x) for x in v) for k, v in d.get("ranges", {}).items()},
    )
    if any(len(v) != 2 for v in dataset.ranges.values()):
        raise ConfigError("dataset.ranges entries must be [worst, best]")

    n = _block(doc, "network")
    net_seed = n.get("seed")
    training = nw.TrainingConfig(
        learning_rate=float(n.get("learning_rate", 0.1)),
        max_epochs=int(n.get("max_epochs", 500)),
        acceptable_error=float(n.get("acceptable_error", 0.01)),
        rng_seed=int(net_seed) if net_seed is not None else derive_seed(dataset.seed, 3),
        trainer=n.get("trainer", "backprop"),
        perturbation_step=float(n.get("perturbation_step", 0.05)),
        stop_metric=n.get("stop_metric", "mse"),
        init=n.get("init", "glorot_sigmoid"),
    )
    hidden = tuple(int(h) for h in n.get("hidden", (9, 9, 9, 9, 9)))
    if any(h < 1 for h in hidden):
        raise ConfigError("network.hidden sizes must be positive")

    p = _block(doc, "pnn")
    prefactor = p.get("prefactor", pnn.UNIVARIATE)
    if prefactor not in (pnn.UNIVARIATE, pnn.MULTIVARIATE):
        raise ConfigError(f"pnn.prefactor must be {pnn.UNIVARIATE!r} or {pnn.MULTIVARIATE!r}")
    pipeline = pl.PipelineConfig(
        hidden=hidden,
        training=training,
        sigma=float(p.get("sigma", 1.0)),
        prefactor=prefactor,
        pnn_scaling=p.get("scaling", "level"),
    )

    a = _block(doc, "adversary")
    adv_seed = a.get("seed")
    intensity = a.get("intensity", "uniform")
    if intensity not in ("uniform", "fixed"):
        raise ConfigError("adversary.intensity must be 'uniform' or 'fixed'")
    adversary = ds.AdversarySpec(
        malicious_service_ratio=_check_ratio("adversary.malicious_service_ratio", a.get("malicious_service_ratio", 0.0)),
        malicious_feedback_ratio=_check_ratio("adversary.malicious_feedback_ratio", a.get("malicious_feedback_ratio", 0.0)),
        perturbation_scale=float(a.get("perturbation_scale", 0.5)),
        intensity=intensity,
        rng_seed=int(adv_seed) if adv_seed is not None else derive_seed(dataset.seed, 1),
    )

    e = _block(doc, "experiment")
    axis = e.get("axis", "malicious_service_ratio")
    if axis not in AXES:
        raise ConfigError(f"experiment.axis must be one of {', '.join(AXES)}")
    grid = tuple(float(g) for g in e.get("grid", (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)))
    if not grid:
        raise ConfigError("experiment.grid must not be empty")
    if axis.startswith("malicious"):
        for g in grid:
            _check_ratio("experiment.grid value", g)
    elif any(g <= 0 for g in grid):
        raise ConfigError(f"experiment.grid values for {axis} must be positive")
    experiment = ExperimentConfig(
        axis=axis,
        grid=grid,
        trials=int(e.get("trials", 5)),
        ideal=float(e.get("ideal", 1.0)),
        target=float(e.get("target", 0.10)),
        max_epochs=int(e.get("max_epochs", 2000)),
    )
    if experiment.trials < 1:
        raise ConfigError("experiment.trials must be at least 1")

    cfg = RunConfig(schema, dataset, pipeline, adversary, experiment, text)
    if source == "synthetic":
        cfg.synthetic_spec()  # validates ranges against the schema
    elif dataset.path is None:
        raise ConfigError("dataset.path is required when dataset.source = 'qws'")
    return cfg


def load_config(path: Optional[str] = None, seed: Optional[int] = None) -> RunConfig:
    p = resolve_config_path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror or exc}") from exc
    return parse_config(text, p.parent, seed)


def data_source(cfg: RunConfig, records=None) -> DataSource:
    """Experiment data source: the synthetic generator, or the given records."""
    if records is None:
        return DataSource(synthetic=cfg.synthetic_spec())
    return DataSource(records=tuple(records), schema=cfg.schema)

