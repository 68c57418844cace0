"""Run configuration. Every default lives here.

Config files are flat JSON objects whose keys are field names below;
CLI flags override file values.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    k: int = 2
    # rank tests: an edge group is removed when every stratum has p above the removal threshold
    alpha: float = 0.0005
    # "significance": remove when p > alpha; "confidence": remove when p > 1 - alpha
    removal_rule: str = "confidence"
    rank_variant: str = "projected"
    # chi-square degrees of freedom: rank of the projected covariance, or of the full cell covariance
    dof_rule: str = "sigma"
    # which edges a rank-<=k verdict deletes: every S-S2 edge, or only the designated endpoint pair
    removal_scope: str = "all-cross"
    min_count: int = 50
    candidate_radius: int = 1
    max_level: int | None = None
    population_rank_tol: float = 1e-9
    # k-MixProd solver
    em_restarts: int = 20
    em_max_iter: int = 2000
    em_tol: float = 1e-9
    spectral_init: bool = True
    # within-class conditional independence on recovered tables
    ci_alpha: float = 0.01
    oracle_ci_tol: float = 1e-7
    alignment_tie_tol: float = 1e-6
    # run control
    seed: int = 0
    workers: int = 1
    phases: int = 3

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.k < 2:
            raise ConfigError("k must be >= 2")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.removal_rule not in ("significance", "confidence"):
            raise ConfigError(f"unknown removal_rule {self.removal_rule!r}")
        if self.rank_variant not in ("projected", "literal"):
            raise ConfigError(f"unknown rank_variant {self.rank_variant!r}")
        if self.dof_rule not in ("projected", "sigma"):
            raise ConfigError(f"unknown dof_rule {self.dof_rule!r}")
        if self.removal_scope not in ("all-cross", "endpoints"):
            raise ConfigError(f"unknown removal_scope {self.removal_scope!r}")
        if self.min_count < 1:
            raise ConfigError("min_count must be >= 1")
        if self.candidate_radius < 1:
            raise ConfigError("candidate_radius must be >= 1")
        if not 0 < self.ci_alpha < 1:
            raise ConfigError("ci_alpha must lie in (0, 1)")
        if self.em_restarts < 0 or self.em_max_iter < 1:
            raise ConfigError("EM restarts/iterations out of range")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.phases not in (1, 2, 3):
            raise ConfigError("phases must be 1, 2 or 3")

    @property
    def removal_threshold(self) -> float:
        return self.alpha if self.removal_rule == "significance" else 1.0 - self.alpha

    def replace(self, **changes) -> "RunConfig":
        data = asdict(self)
        data.update(changes)
        return RunConfig(**data)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            try:
                return cls.from_json(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"bad config JSON: {exc}") from None
