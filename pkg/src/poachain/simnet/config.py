from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..consensus.node import Behavior


class ConfigInvalid(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LatencyModel(_Strict):
    min_ms: int = Field(20, ge=0)
    max_ms: int = Field(200, ge=0)
    distribution: Literal["uniform", "fixed", "exponential"] = "uniform"

    @model_validator(mode="after")
    def _ordered(self) -> LatencyModel:
        if self.max_ms < self.min_ms:
            raise ValueError("latency max_ms must be >= min_ms")
        return self


class PartitionSpec(_Strict):
    start: float = Field(ge=0)
    end: float
    groups: list[list[int]]

    @model_validator(mode="after")
    def _window(self) -> PartitionSpec:
        if self.end <= self.start:
            raise ValueError("partition end must be after start")
        return self


class AnchorSettings(_Strict):
    enabled: bool = True
    node: int = 0
    interval_seconds: int = Field(30, gt=0)
    depth: int | None = None
    retry_base_seconds: float = Field(1.0, gt=0)


class WitnessSettings(_Strict):
    outages: list[tuple[float, float]] = []
    latency_ms: tuple[int, int] = (0, 0)


class SimConfig(_Strict):
    n_validators: int = Field(7, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)
    latency: LatencyModel = LatencyModel()
    loss: float = Field(0.0, ge=0.0, lt=1.0)
    partitions: list[PartitionSpec] = []
    byzantine: dict[int, Behavior] = {}
    slot_seconds: int = Field(5, gt=0)
    out_of_turn_delay: int = Field(0, ge=0)
    block_capacity: int = Field(256, gt=0)
    tx_per_second: float = Field(0.0, ge=0.0)
    n_operators: int = Field(4, ge=0)
    operator_balance: int = Field(10**12, ge=0)
    validator_balance: int = Field(10**15, ge=0)
    anchor: AnchorSettings = AnchorSettings()
    witness: WitnessSettings = WitnessSettings()

    @model_validator(mode="after")
    def _consistent(self) -> SimConfig:
        nodes = set(range(self.n_validators))
        for p in self.partitions:
            seen: list[int] = [i for g in p.groups for i in g]
            if len(seen) != len(set(seen)) or set(seen) != nodes:
                raise ValueError("partition groups must form a disjoint cover of all nodes")
        if not set(self.byzantine) <= nodes:
            raise ValueError("byzantine roster names unknown nodes")
        if self.anchor.enabled and self.anchor.node not in nodes:
            raise ValueError("anchor node out of range")
        return self

    @property
    def honest(self) -> list[int]:
        return [i for i in range(self.n_validators) if i not in self.byzantine]

    @classmethod
    def parse(cls, data: dict) -> SimConfig:
        try:
            return cls.model_validate(data)
        except ValidationError as exc:
            raise ConfigInvalid(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> SimConfig:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(str(exc)) from None
        return cls.parse(data)
