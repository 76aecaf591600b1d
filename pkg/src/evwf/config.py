"""JSON run configuration with strict key checking."""
from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field

from .avdata import NOISE_LABELS, SNR_GRID, RATIOS_70_10_20, RATIOS_80_10_10, CorpusConfig
from .baselines import LogMmseConfig, SsConfig
from .dsp import StftConfig
from .enhance import EvwfConfig
from .neural import DESK_HIDDEN, FULL_HIDDEN, TrainConfig

SEED_ENV = "EVWF_SEED"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FilterbankSpec:
    channels: int = 23
    floor_eps: float = 1e-10
    ridge: float = 0.0


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "lstm"
    hidden: tuple = DESK_HIDDEN
    context: int = 8
    activation: str = "tanh"
    full_scale: bool = False

    def __post_init__(self):
        if self.kind not in ("lstm", "mlp"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.context < 0:
            raise ValueError("context must be >= 0")

    @property
    def layer_sizes(self) -> tuple:
        if self.full_scale and self.kind == "lstm":
            return FULL_HIDDEN
        return tuple(self.hidden)


@dataclass(frozen=True)
class MixSpec:
    snrs: tuple = SNR_GRID
    noise_label: str = "white"
    noise_file: str | None = None

    def __post_init__(self):
        if self.noise_label not in NOISE_LABELS:
            raise ValueError(f"unknown noise label {self.noise_label!r}")
        if self.noise_label == "file" and not self.noise_file:
            raise ValueError("noise_label 'file' needs noise_file")


@dataclass(frozen=True)
class SplitSpec:
    preset: str = "70-10-20"
    ratios: tuple | None = None

    def resolved(self) -> tuple:
        if self.ratios is not None:
            return tuple(self.ratios)
        try:
            return {"70-10-20": RATIOS_70_10_20, "80-10-10": RATIOS_80_10_10}[self.preset]
        except KeyError:
            raise ValueError(f"unknown split preset {self.preset!r}") from None


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    vps: float | None = None
    stft: StftConfig = field(default_factory=StftConfig)
    filterbank: FilterbankSpec = field(default_factory=FilterbankSpec)
    evwf: EvwfConfig = field(default_factory=EvwfConfig)
    ss: SsConfig = field(default_factory=SsConfig)
    lmmse: LogMmseConfig = field(default_factory=LogMmseConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    model: ModelSpec = field(default_factory=ModelSpec)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    mix: MixSpec = field(default_factory=MixSpec)
    split: SplitSpec = field(default_factory=SplitSpec)

    def stft_config(self) -> StftConfig:
        if self.vps:
            return StftConfig.for_vps(self.vps, self.corpus.sample_rate,
                                      self.stft.frame_len, self.stft.dft_size)
        return self.stft


# sections whose own seed follows the master seed unless set explicitly
_SEEDED = {"train": "rng_seed", "corpus": "seed"}


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
    kwargs = {}
    for key, value in data.items():
        if key not in fields:
            raise ConfigError(f"unknown key '{where}.{key}'" if where else f"unknown key '{key}'")
        ftype = fields[key].type
        sub = _SECTION_TYPES.get(ftype) if isinstance(ftype, str) else None
        if sub is not None:
            value = _build(sub, value, f"{where}.{key}" if where else key)
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


_SECTION_TYPES = {
    "StftConfig": StftConfig, "FilterbankSpec": FilterbankSpec, "EvwfConfig": EvwfConfig,
    "SsConfig": SsConfig, "LogMmseConfig": LogMmseConfig, "TrainConfig": TrainConfig,
    "ModelSpec": ModelSpec, "CorpusConfig": CorpusConfig, "MixSpec": MixSpec,
    "SplitSpec": SplitSpec,
}


def config_from_dict(data: dict, env=None) -> RunConfig:
    """Validate ``data`` and apply the master seed (``EVWF_SEED`` overrides it)."""
    env = os.environ if env is None else env
    data = json.loads(json.dumps(data or {}))
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if env.get(SEED_ENV):
        try:
            data["seed"] = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env[SEED_ENV]!r}") from None
    seed = data.get("seed", 0)
    for section, key in _SEEDED.items():
        sec = data.setdefault(section, {})
        if isinstance(sec, dict):
            sec.setdefault(key, seed)
    return _build(RunConfig, data, "")


def load_config(path=None, env=None) -> RunConfig:
    if path is None:
        return config_from_dict({}, env)
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data, env)


def config_to_dict(cfg: RunConfig) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(cfg)))
