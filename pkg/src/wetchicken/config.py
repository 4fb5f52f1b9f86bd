"""Experiment configuration: defaults, YAML file overlay, flag overrides.

One ``ExperimentConfig`` drives the whole sweep. Values resolve with
precedence: command-line flags > config file > built-in defaults. The
file format is YAML with one top-level mapping; unknown keys are
rejected so typos fail loudly instead of silently running defaults.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace

import yaml

from .baselines import NfqConfig
from .dagp import TrainConfig
from .errors import ContractViolation

METHODS = ("dagp", "gp", "nfq", "random")


@dataclass
class PolicySettings:
    """Rollout and optimizer knobs for policy search through a model."""

    horizon: int = 5
    samples: int = 20
    gamma: float = 0.9
    steps: int = 2000
    learning_rate: float = 1e-2

    def __post_init__(self):
        if self.horizon < 1 or self.samples < 1 or \
                not 0.0 <= self.gamma <= 1.0 or self.steps < 1 or \
                self.learning_rate <= 0.0:
            raise ContractViolation("invalid policy settings")


@dataclass
class NfqSettings:
    """Fitted-Q iteration knobs; mirrors NfqConfig plus the outer loop."""

    iterations: int = 20
    gamma: float = 0.9
    learning_rate: float = 1e-2
    max_fit_steps: int = 2000
    fit_tolerance: float = 1e-6

    def __post_init__(self):
        if self.iterations < 1:
            raise ContractViolation("nfq iterations must be >= 1")
        self.to_config(seed=0)

    def to_config(self, seed: int) -> NfqConfig:
        return NfqConfig(gamma=self.gamma, learning_rate=self.learning_rate,
                         max_fit_steps=self.max_fit_steps,
                         fit_tolerance=self.fit_tolerance, seed=seed)


@dataclass
class EvalSettings:
    """True-environment evaluation protocol."""

    horizon: int = 100
    rollouts: int = 1000
    gamma: float = 0.9

    def __post_init__(self):
        if self.horizon < 1 or self.rollouts < 1 or \
                not 0.0 <= self.gamma <= 1.0:
            raise ContractViolation("invalid evaluation settings")


@dataclass
class ExperimentConfig:
    """Full sweep description: dataset sizes x seeds x methods."""

    sizes: list = field(default_factory=lambda: [100, 250, 500, 1000,
                                                 2500, 5000])
    seeds: list = field(default_factory=lambda: list(range(10)))
    methods: list = field(default_factory=lambda: list(METHODS))
    model: TrainConfig = field(default_factory=TrainConfig)
    policy: PolicySettings = field(default_factory=PolicySettings)
    nfq: NfqSettings = field(default_factory=NfqSettings)
    evaluation: EvalSettings = field(default_factory=EvalSettings)

    def __post_init__(self):
        if not self.sizes or any(int(n) != n or n < 1 for n in self.sizes):
            raise ContractViolation("sizes must be a nonempty list of "
                                    "positive integers")
        if not self.seeds or any(int(s) != s for s in self.seeds):
            raise ContractViolation("seeds must be a nonempty list of "
                                    "integers")
        self.sizes = [int(n) for n in self.sizes]
        self.seeds = [int(s) for s in self.seeds]
        if not self.methods:
            raise ContractViolation("methods must be nonempty")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ContractViolation(
                f"unknown methods {sorted(unknown)}; valid: {METHODS}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ContractViolation("config document must be a mapping")
        sections = {"model": TrainConfig, "policy": PolicySettings,
                    "nfq": NfqSettings, "evaluation": EvalSettings}
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ContractViolation(
                f"unknown config keys {sorted(unknown)}")
        kwargs = {}
        for key, value in doc.items():
            if key in sections:
                kwargs[key] = _build_section(sections[key], value, key)
            else:
                kwargs[key] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ContractViolation(f"bad config structure: {exc}") from exc

    def save(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                doc = yaml.safe_load(fh)
            except yaml.YAMLError as exc:
                raise ContractViolation(f"unparseable config: {exc}") from exc
        return cls.from_dict(doc if doc is not None else {})

    def override(self, **updates) -> "ExperimentConfig":
        """New config with the given fields replaced (flag precedence)."""
        cleaned = {k: v for k, v in updates.items() if v is not None}
        return replace(self, **cleaned) if cleaned else self


def _build_section(section_cls, value, key: str):
    if isinstance(value, section_cls):
        return value
    if not isinstance(value, dict):
        raise ContractViolation(f"config section {key!r} must be a mapping")
    known = {f.name for f in fields(section_cls)}
    unknown = set(value) - known
    if unknown:
        raise ContractViolation(
            f"unknown keys {sorted(unknown)} in config section {key!r}")
    base = asdict(section_cls())
    base.update(value)
    return section_cls(**base)
