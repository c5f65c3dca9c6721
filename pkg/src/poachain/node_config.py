"""Declarative node configuration (one JSON file, unknown keys rejected).

Relative paths are resolved against the directory of the config file at
load time, so ``node config print`` emits absolute paths that reload to
an equal ``NodeConfig`` from anywhere.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .anchoring import AnchorPolicy
from .execution.gas import GasSchedule
from .params import ChainParams, ConsensusConfig, Genesis


class ConfigInvalid(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ConsensusSection(_Strict):
    slot_seconds: int = Field(5, gt=0)
    out_of_turn_delay: int = Field(0, ge=0)
    block_capacity: int = Field(256, gt=0)


class GasSection(_Strict):
    transfer: int = Field(21, gt=0)
    mint: int = Field(21, gt=0)
    endow: int = Field(21, gt=0)
    contract_call: int = Field(25, gt=0)
    governance: int = Field(40, gt=0)
    per_byte: int = Field(1, gt=0)
    storage_write: int = Field(20, gt=0)


class AnchorSection(_Strict):
    enabled: bool = True
    interval_seconds: int = Field(86_400, gt=0)
    depth: int | None = Field(None, ge=0)
    retry_base_seconds: float = Field(60.0, gt=0)


class WitnessSection(_Strict):
    kind: Literal["file", "mock"] = "file"
    path: str | None = None  # file adapter; defaults to <data_dir>/witness.jsonl


def _endpoint(value: str, lowest_port: int = 1) -> str:
    host, sep, port = value.rpartition(":")
    if not sep or not host or not port.isdigit() or not lowest_port <= int(port) < 65536:
        raise ValueError(f"expected host:port, got {value!r}")
    return value


class NodeConfig(_Strict):
    key_file: str
    genesis_file: str
    data_dir: str
    listen: str = "127.0.0.1:7000"
    peers: list[str] = []
    explorer_host: str = "127.0.0.1"
    explorer_port: int | None = Field(8000, ge=0, lt=65536)  # None disables the explorer
    explorer_allow: list[str] | None = None
    max_document_bytes: int = Field(64 * 1024 * 1024, gt=0)
    consensus: ConsensusSection = ConsensusSection()
    gas_schedule: GasSection = GasSection()
    anchor: AnchorSection = AnchorSection()
    witness: WitnessSection = WitnessSection()

    @field_validator("listen")
    @classmethod
    def _check_listen(cls, listen: str) -> str:
        return _endpoint(listen, lowest_port=0)  # 0 lets the OS pick

    @field_validator("peers")
    @classmethod
    def _check_peers(cls, peers: list[str]) -> list[str]:
        return [_endpoint(p) for p in peers]

    @classmethod
    def parse(cls, data: dict, base: Path | None = None) -> NodeConfig:
        try:
            cfg = cls.model_validate(data)
        except ValidationError as exc:
            raise ConfigInvalid(str(exc)) from None
        return cfg._resolved(base) if base is not None else cfg

    @classmethod
    def load(cls, path: str | Path) -> NodeConfig:
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"{path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigInvalid(f"{path}: top level must be an object")
        return cls.parse(data, path.resolve().parent)

    def _resolved(self, base: Path) -> NodeConfig:
        def fix(p: str) -> str:
            q = Path(p).expanduser()
            return str(q if q.is_absolute() else (base / q).resolve())

        update = {"key_file": fix(self.key_file), "genesis_file": fix(self.genesis_file),
                  "data_dir": fix(self.data_dir)}
        out = self.model_copy(update=update)
        if self.witness.path is not None:
            out.witness = self.witness.model_copy(update={"path": fix(self.witness.path)})
        return out

    def dumps(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True)

    # derived objects

    @property
    def listen_addr(self) -> tuple[str, int]:
        host, _, port = self.listen.rpartition(":")
        return host, int(port)

    @property
    def data_path(self) -> Path:
        return Path(self.data_dir)

    @property
    def witness_path(self) -> Path:
        return Path(self.witness.path) if self.witness.path else self.data_path / "witness.jsonl"

    def chain_params(self) -> ChainParams:
        try:
            genesis = Genesis.load(self.genesis_file)
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigInvalid(f"genesis {self.genesis_file}: {exc}") from None
        c = self.consensus
        return ChainParams(
            genesis,
            ConsensusConfig(c.slot_seconds, c.out_of_turn_delay, c.block_capacity),
            GasSchedule(**self.gas_schedule.model_dump()),
        )

    def anchor_policy(self) -> AnchorPolicy:
        a = self.anchor
        return AnchorPolicy(a.interval_seconds, a.depth, retry_base_seconds=a.retry_base_seconds)
