"""Experiment configuration: a versioned JSON document with explicit defaults."""

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..detection import calibrate_tau

CONFIG_VERSION = 1

ATTACKS = (
    "wevade-w-i",
    "wevade-w-ii",
    "wevade-b-s",
    "wevade-b-q",
    "hopskipjump",
    "jpeg",
    "gaussian-noise",
    "gaussian-blur",
    "brightness-contrast",
)


def default_taus(n: int, eta: float) -> list:
    grid = [round(0.55 + 0.05 * k, 2) for k in range(9)] + [0.99]
    extra = [calibrate_tau(n, eta, m) for m in ("single", "double")]
    return sorted(set(grid) | set(extra))


@dataclass
class AttackSpec:
    """One attack in an experiment; ``params`` override the attack's config defaults."""

    name: str
    params: dict = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        if self.name not in ATTACKS:
            raise ValueError(f"unknown attack {self.name!r}; expected one of {ATTACKS}")
        if not self.label:
            if self.params:
                extras = ",".join(f"{k}={self.params[k]}" for k in sorted(self.params))
                self.label = f"{self.name}[{extras}]"
            else:
                self.label = self.name


@dataclass
class ExperimentConfig:
    codec: str
    output: str = "results"
    dataset: str | None = None  # None: synthetic test stream
    samples: int = 100
    seed: int = 0
    eta: float = 1e-4
    modes: list = field(default_factory=lambda: ["single", "double"])
    taus: list | None = None  # None: default grid plus the calibrated thresholds
    attacks: list = field(default_factory=list)
    surrogate: str | None = None
    # detector the query-based attacks talk to; tau None means calibrated
    oracle_mode: str = "double"
    oracle_tau: float | None = None
    epsilon: float = 0.01
    beta: float = 0.9
    workers: int = 1
    experiment_id: str = "exp"
    version: int = CONFIG_VERSION

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be at least 1")
        self.attacks = [a if isinstance(a, AttackSpec) else AttackSpec(**a) for a in self.attacks]
        labels = [a.label for a in self.attacks]
        if len(set(labels)) != len(labels):
            raise ValueError("attack labels must be unique")
        for m in self.modes:
            if m not in ("single", "double"):
                raise ValueError(f"unknown detector mode {m!r}")
        if self.taus is not None:
            for t in self.taus:
                if not (0.5 < t <= 1.0):
                    raise ValueError(f"tau {t} outside (0.5, 1]")
        if self.version > CONFIG_VERSION:
            raise ValueError(f"config version {self.version} is newer than supported")

    def resolved_taus(self, n: int) -> list:
        return sorted(self.taus) if self.taus is not None else default_taus(n, self.eta)

    def resolved_oracle_tau(self, n: int) -> float:
        return self.oracle_tau if self.oracle_tau is not None else calibrate_tau(n, self.eta, self.oracle_mode)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["attacks"] = [asdict(a) for a in self.attacks]
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_jsonable)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"cannot serialise {type(x).__name__}")
