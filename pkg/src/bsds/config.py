"""Run configuration: a JSON document describing one experiment.

Example::

    {
      "seed": 0,
      "params": {"lam": 1.0, "gamma": 0.3},
      "budgets": [0.01, 0.02, 0.05, 0.1, 0.2, 0.5],
      "scores": {"ml": "scores.csv"},
      "proposers": [{"name": "Greedy", "kind": "greedy_ml"},
                    {"name": "Random", "kind": "random"}],
      "bootstrap": {"replicates": 1000, "level": 0.95, "jackknife_cap": 2000, "workers": 1},
      "sensitivity": {"lambdas": [...], "gammas": [...]},
      "deployment": {"unit_cost": 5, "hit_value": 50, "budgets": [50, 100]},
      "temperatures": [0.1, 0.2, 0.5, 1.0, 2.0],
      "settings": {"kb_fraction": 0.1, "fold_count": 5, "fold_mode": "random_stratified"}
    }

Relative score paths resolve against the config file's directory. The config
hash is the SHA-256 of the canonical JSON form (sorted keys, no whitespace)
of the fully defaulted config.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

from .errors import ArgumentError, InputError
from .metrics import DEFAULT_BUDGET_FRACTIONS, BsdsParams, BudgetGrid
from .proposers import CampaignSettings, ProposerConfig
from .resample import DEFAULT_GAMMA_GRID, DEFAULT_LAMBDA_GRID, BootstrapPlan

DEFAULT_TEMPERATURES = (0.1, 0.2, 0.5, 1.0, 2.0)


@dataclass(frozen=True)
class DeploymentEconomics:
    unit_cost: float = 5.0
    hit_value: float = 50.0
    budgets: tuple = (50, 100, 200, 500)

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        if not self.unit_cost > 0:
            raise ArgumentError("unit cost must be positive")
        if not self.hit_value >= 0:
            raise ArgumentError("hit value must be non-negative")
        if any(b < 1 for b in self.budgets):
            raise ArgumentError("deployment budgets must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    proposers: tuple = ()
    params: BsdsParams = BsdsParams()
    budgets: tuple = DEFAULT_BUDGET_FRACTIONS
    scores: dict = field(default_factory=dict)
    seed: int = 0
    bootstrap: BootstrapPlan = BootstrapPlan()
    lambdas: tuple = DEFAULT_LAMBDA_GRID
    gammas: tuple = DEFAULT_GAMMA_GRID
    deployment: DeploymentEconomics = DeploymentEconomics()
    temperatures: tuple = DEFAULT_TEMPERATURES
    settings: CampaignSettings = CampaignSettings()

    @property
    def grid(self) -> BudgetGrid:
        return BudgetGrid(self.budgets)

    @classmethod
    def from_dict(cls, d: dict, base_dir: str = ".") -> "RunConfig":
        known = {"proposers", "params", "budgets", "scores", "seed", "bootstrap", "sensitivity",
                 "deployment", "temperatures", "settings"}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        try:
            seed = int(d.get("seed", 0))
            boot = dict(d.get("bootstrap", {}))
            boot.setdefault("master_seed", seed)
            sens = d.get("sensitivity", {})
            scores = {
                k: v if os.path.isabs(v) else os.path.normpath(os.path.join(base_dir, v))
                for k, v in d.get("scores", {}).items()
            }
            settings = dict(d.get("settings", {}))
            return cls(
                proposers=tuple(ProposerConfig.from_dict(p) for p in d.get("proposers", [])),
                params=BsdsParams(**d.get("params", {})),
                budgets=tuple(float(f) for f in d.get("budgets", DEFAULT_BUDGET_FRACTIONS)),
                scores=scores,
                seed=seed,
                bootstrap=BootstrapPlan(**boot),
                lambdas=tuple(float(x) for x in sens.get("lambdas", DEFAULT_LAMBDA_GRID)),
                gammas=tuple(float(x) for x in sens.get("gammas", DEFAULT_GAMMA_GRID)),
                deployment=DeploymentEconomics(**d.get("deployment", {})),
                temperatures=tuple(float(t) for t in d.get("temperatures", DEFAULT_TEMPERATURES)),
                settings=CampaignSettings(**settings),
            )
        except TypeError as exc:
            raise InputError(f"bad config: {exc}") from exc

    def to_dict(self) -> dict:
        settings = {f.name: getattr(self.settings, f.name) for f in fields(self.settings)}
        settings["feature_columns"] = list(settings["feature_columns"])
        return {
            "proposers": [p.to_dict() for p in self.proposers],
            "params": {"lam": self.params.lam, "gamma": self.params.gamma},
            "budgets": list(self.budgets),
            "scores": dict(sorted(self.scores.items())),
            "seed": self.seed,
            "bootstrap": asdict(self.bootstrap),
            "sensitivity": {"lambdas": list(self.lambdas), "gammas": list(self.gammas)},
            "deployment": {"unit_cost": self.deployment.unit_cost, "hit_value": self.deployment.hit_value,
                           "budgets": list(self.deployment.budgets)},
            "temperatures": list(self.temperatures),
            "settings": settings,
        }

    def config_hash(self) -> str:
        d = self.to_dict()
        # scheduling does not change results, so it stays out of the hash
        del d["bootstrap"]["workers"]
        text = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_config(path: Optional[str]) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise InputError(f"config {path} must be a JSON object")
    return RunConfig.from_dict(d, os.path.dirname(os.path.abspath(path)))
