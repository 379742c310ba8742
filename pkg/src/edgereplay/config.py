"""Run configuration: flat ``section.key = value`` text files.

Blank lines and ``#`` comments are ignored. Unknown sections or keys are
errors. Lists are comma-separated. ``dump_config`` writes every key, so a
dumped file reloads to an identical configuration.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .evaluation import METHODS, MethodParams
from .features import Normalizer, WindowSpec
from .plant_sim import ThermalPlant
from .replay import STRATEGIES


class ConfigError(ValueError):
    pass


@dataclass
class RunSection:
    seed: int = 0
    strategy: str = "selection"
    methods: tuple[str, ...] = METHODS
    jobs: int = 1


@dataclass
class NnSection:
    hidden: tuple[int, ...] = (16, 8)
    learning_rate: float = 1e-3
    momentum: float = 0.9
    epochs_per_step: int = 1


@dataclass
class ReplaySection:
    buffer_size: int = 50
    icarl_exemplars: int = 25
    ewc_lambda: float = 22.5
    ewc_gamma: float = 0.8
    lwf_lambda: float = 0.1


@dataclass
class ThresholdSection:
    alpha: float = 0.99
    fit_hours: float = 4.0


@dataclass
class FeaturesSection:
    sample_period: float = 10.0
    window_len: int = 180
    current_min: float = 0.0
    current_max: float = 15.0
    temp_min: float = 20.0
    temp_max: float = 100.0


@dataclass
class PlantSection:
    t_amb: float = 25.0
    r_th: float = 1.0
    tau_th: float = 600.0
    loss_a: float = 0.8
    loss_b: float = 0.35
    anomaly_factor: float = 1.5
    phase_noise: float = 0.02
    inner_step: float = 1.0


@dataclass
class CorpusSection:
    healthy_hours: float = 26.0
    anomalous_hours: float = 21.0
    hold_s: float = 600.0
    p_stop: float = 0.5
    stop_s: float = 600.0


@dataclass
class EvalSection:
    parts: int = 8
    eval_every_minutes: float = 30.0
    offline_epochs: int = 100
    offline_batch: int = 32
    offline_lr: float = 1e-3
    classifier_anomalous_fraction: float = 0.5
    bench_steps: int = 1000


@dataclass
class MonitorSection:
    test_parts: int = 2  # trailing healthy parts held out for the test run
    train_during_test: bool = False


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    nn: NnSection = field(default_factory=NnSection)
    replay: ReplaySection = field(default_factory=ReplaySection)
    threshold: ThresholdSection = field(default_factory=ThresholdSection)
    features: FeaturesSection = field(default_factory=FeaturesSection)
    plant: PlantSection = field(default_factory=PlantSection)
    corpus: CorpusSection = field(default_factory=CorpusSection)
    eval: EvalSection = field(default_factory=EvalSection)
    monitor: MonitorSection = field(default_factory=MonitorSection)

    def validate(self) -> None:
        if self.run.strategy not in STRATEGIES:
            raise ConfigError(f"run.strategy: unknown strategy {self.run.strategy!r}")
        bad = [m for m in self.run.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"run.methods: unknown method(s) {', '.join(bad)}")
        if not self.run.methods:
            raise ConfigError("run.methods: at least one method is required")
        if self.run.jobs < 1:
            raise ConfigError("run.jobs must be >= 1")
        if self.nn.learning_rate <= 0:
            raise ConfigError("nn.learning_rate must be > 0")
        if not 0.0 <= self.nn.momentum < 1.0:
            raise ConfigError("nn.momentum must lie in [0, 1)")
        if self.replay.buffer_size < 1:
            raise ConfigError("replay.buffer_size must be >= 1")
        if not 0 <= self.replay.icarl_exemplars < self.replay.buffer_size:
            raise ConfigError("replay.icarl_exemplars must lie in [0, buffer_size)")
        if not 0.0 < self.threshold.alpha < 1.0:
            raise ConfigError("threshold.alpha must lie in (0, 1)")
        if self.features.window_len < 1 or self.features.sample_period <= 0:
            raise ConfigError("features: window_len and sample_period must be positive")
        if self.plant.tau_th <= 0:
            raise ConfigError("plant.tau_th must be > 0")
        if self.eval.parts < 2:
            raise ConfigError("eval.parts must be >= 2")
        if not 1 <= self.monitor.test_parts < self.eval.parts:
            raise ConfigError("monitor.test_parts must lie in [1, eval.parts)")

    # -- views for the library modules --

    def window_spec(self) -> WindowSpec:
        return WindowSpec(self.features.sample_period, self.features.window_len)

    def normalizer(self) -> Normalizer:
        f = self.features
        return Normalizer(f.current_min, f.current_max, f.temp_min, f.temp_max)

    def thermal_plant(self) -> ThermalPlant:
        return ThermalPlant(**dataclasses.asdict(self.plant), record_period=self.features.sample_period)

    def method_params(self) -> MethodParams:
        return MethodParams(
            hidden=self.nn.hidden,
            learning_rate=self.nn.learning_rate,
            momentum=self.nn.momentum,
            epochs_per_step=self.nn.epochs_per_step,
            buffer_size=self.replay.buffer_size,
            icarl_exemplars=self.replay.icarl_exemplars,
            ewc_lambda=self.replay.ewc_lambda,
            ewc_gamma=self.replay.ewc_gamma,
            lwf_lambda=self.replay.lwf_lambda,
            eval_every=max(1, round(self.eval.eval_every_minutes * 60.0 / self.features.sample_period)),
            sample_period=self.features.sample_period,
            offline_epochs=self.eval.offline_epochs,
            offline_batch=self.eval.offline_batch,
            offline_lr=self.eval.offline_lr,
            normalizer=self.normalizer(),
        )

    @property
    def fit_samples(self) -> int:
        return round(self.threshold.fit_hours * 3600.0 / self.features.sample_period)


def _sections(cfg: RunConfig) -> dict[str, object]:
    return {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)}


def _parse_value(raw: str, hint, key: str):
    origin = typing.get_origin(hint)
    try:
        if hint is bool:
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if hint is int:
            return int(raw)
        if hint is float:
            return float(raw)
        if hint is str:
            return raw
        if origin is tuple:
            inner = typing.get_args(hint)[0]
            items = [s.strip() for s in raw.split(",") if s.strip()]
            return tuple(inner(s) for s in items)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None
    raise ConfigError(f"{key}: unsupported type {hint}")


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def set_key(cfg: RunConfig, key: str, raw: str) -> None:
    section_name, _, name = key.partition(".")
    sections = _sections(cfg)
    if not name or section_name not in sections:
        raise ConfigError(f"unknown config key {key!r}")
    section = sections[section_name]
    hints = typing.get_type_hints(type(section))
    if name not in hints:
        raise ConfigError(f"unknown config key {key!r}")
    setattr(section, name, _parse_value(raw.strip(), hints[name], key))


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        if not sep:
            raise ConfigError(f"line {line_no}: expected 'section.key = value'")
        set_key(cfg, key.strip(), raw)
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for section_name, section in _sections(cfg).items():
        for f in dataclasses.fields(section):
            lines.append(f"{section_name}.{f.name} = {_format_value(getattr(section, f.name))}")
        lines.append("")
    return "\n".join(lines)
