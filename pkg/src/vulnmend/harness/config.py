"""Run configuration and the standard ablation variants."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

SELECTION_STRATEGIES = ("poc_voting", "simple_voting")
INPUT_TYPES = ("issue_report", "sanitizer_log")
ENHANCE_STAGES = ("localization", "generation")

VARIANTS = ("base", "cpc", "spa", "full", "enhanceVulnLoc",
            "enhancePatchGen", "simpleVoting", "sanitizer")


@dataclass(frozen=True)
class RunConfig:
    top_files: int = 3
    context_margin: int = 10
    candidates: int = 5
    chunk_lines: int = 512
    element_limit: int = 10
    enable_cpc: bool = True
    enable_spa: bool = True
    enhance_stages: tuple = ("localization", "generation")
    selection_strategy: str = "poc_voting"
    input_type: str = "issue_report"
    cpc_max_steps: int = 25
    spa_max_steps: int = 40
    log_head_lines: int = 100
    log_tail_lines: int = 100
    script_output_cap: int = 8192
    poc_timeout: float = 300.0
    keep_workspaces: bool = False
    price_input_per_mtok: str = "3.00"
    price_output_per_mtok: str = "15.00"

    def validate(self) -> "RunConfig":
        for name in ("top_files", "context_margin", "candidates",
                     "chunk_lines", "element_limit", "cpc_max_steps",
                     "spa_max_steps", "log_head_lines", "log_tail_lines",
                     "script_output_cap"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.poc_timeout <= 0:
            raise ValueError("poc_timeout must be positive")
        if self.selection_strategy not in SELECTION_STRATEGIES:
            raise ValueError(
                f"selection_strategy must be one of "
                f"{SELECTION_STRATEGIES}, got {self.selection_strategy!r}")
        if self.input_type not in INPUT_TYPES:
            raise ValueError(f"input_type must be one of {INPUT_TYPES}, "
                             f"got {self.input_type!r}")
        stages = tuple(self.enhance_stages)
        if not set(stages) <= set(ENHANCE_STAGES):
            raise ValueError(f"enhance_stages must be a subset of "
                             f"{ENHANCE_STAGES}, got {stages}")
        if len(set(stages)) != len(stages):
            raise ValueError("enhance_stages has duplicates")
        from decimal import Decimal, InvalidOperation
        for name in ("price_input_per_mtok", "price_output_per_mtok"):
            try:
                Decimal(getattr(self, name))
            except InvalidOperation:
                raise ValueError(f"{name} is not a decimal number")
        return self

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["enhance_stages"] = list(self.enhance_stages)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "enhance_stages" in data:
            data = dict(data)
            data["enhance_stages"] = tuple(data["enhance_stages"])
        return cls(**data).validate()

    @classmethod
    def from_file(cls, path: Path | str) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def variant(name: str, base: RunConfig | None = None) -> RunConfig:
    """The standard ablations, expressed as deltas on a base config."""
    cfg = base or RunConfig()
    deltas = {
        "base": dict(enable_cpc=False, enable_spa=False,
                     enhance_stages=()),
        "cpc": dict(enable_cpc=True, enable_spa=False),
        "spa": dict(enable_cpc=False, enable_spa=True),
        "full": dict(enable_cpc=True, enable_spa=True),
        "enhanceVulnLoc": dict(enhance_stages=("localization",)),
        "enhancePatchGen": dict(enhance_stages=("generation",)),
        "simpleVoting": dict(selection_strategy="simple_voting"),
        "sanitizer": dict(input_type="sanitizer_log"),
    }
    if name not in deltas:
        raise ValueError(f"unknown variant {name!r}; known: {VARIANTS}")
    return dataclasses.replace(cfg, **deltas[name]).validate()
