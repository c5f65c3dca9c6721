"""Network parameters: genesis file contents and consensus timing."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .core.crypto import ZERO_ADDRESS, ZERO_DIGEST, Address, from_hex, to_hex
from .core.merkle import merkle_root
from .core.types import Block, BlockHeader, Role
from .execution.contracts import MANIFESTS
from .execution.gas import GasSchedule
from .execution.state import Account, WorldState


@dataclass(frozen=True)
class ConsensusConfig:
    slot_seconds: int = 5
    out_of_turn_delay: int = 0  # 0 means 2 * slot_seconds
    block_capacity: int = 256

    def __post_init__(self) -> None:
        if self.slot_seconds <= 0 or self.block_capacity <= 0 or self.out_of_turn_delay < 0:
            raise ValueError("consensus parameters must be positive")
        if self.out_of_turn_delay == 0:
            object.__setattr__(self, "out_of_turn_delay", 2 * self.slot_seconds)


@dataclass(frozen=True)
class Allocation:
    address: Address
    balance: int
    role: Role = Role.OPERATOR


@dataclass(frozen=True)
class Genesis:
    validators: tuple[Address, ...]
    allocations: tuple[Allocation, ...] = ()
    timestamp: int = 0

    def __post_init__(self) -> None:
        if not self.validators:
            raise ValueError("genesis needs at least one validator")
        if len(set(self.validators)) != len(self.validators):
            raise ValueError("duplicate validator in genesis")

    def to_json(self) -> dict:
        return {
            "validators": [to_hex(v) for v in self.validators],
            "allocations": [
                {"address": to_hex(a.address), "balance": a.balance, "role": a.role.name.lower()}
                for a in self.allocations
            ],
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, data: dict) -> Genesis:
        unknown = set(data) - {"validators", "allocations", "timestamp"}
        if unknown:
            raise ValueError(f"unknown genesis keys: {sorted(unknown)}")
        return cls(
            validators=tuple(from_hex(v, 20) for v in data["validators"]),
            allocations=tuple(
                Allocation(from_hex(a["address"], 20), int(a["balance"]),
                           Role[a.get("role", "operator").upper()])
                for a in data.get("allocations", [])
            ),
            timestamp=int(data.get("timestamp", 0)),
        )

    @classmethod
    def load(cls, path: str | Path) -> Genesis:
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class ChainParams:
    genesis: Genesis
    consensus: ConsensusConfig = field(default_factory=ConsensusConfig)
    gas_schedule: GasSchedule = field(default_factory=GasSchedule)

    def genesis_state(self) -> WorldState:
        state = WorldState(
            validators=self.genesis.validators,
            gas_schedule=self.gas_schedule,
            manifests={c: m.digest for c, m in MANIFESTS.items()},
        )
        for v in self.genesis.validators:
            state.set_account(v, Account(role=Role.VALIDATOR))
        for alloc in self.genesis.allocations:
            acct = state.account(alloc.address)
            role = Role.VALIDATOR if alloc.address in self.genesis.validators else alloc.role
            state.set_account(alloc.address, Account(acct.balance + alloc.balance, 0, role))
            state.add_minted(alloc.balance)
        return state

    def genesis_block(self) -> Block:
        header = BlockHeader(
            height=0,
            parent=ZERO_DIGEST,
            state_root=self.genesis_state().state_root(),
            tx_root=merkle_root([]),
            proposer=ZERO_ADDRESS,
            timestamp=self.genesis.timestamp,
            weight=0,
        )
        return Block(header, ())

    def to_json(self) -> dict:
        return {
            "genesis": self.genesis.to_json(),
            "consensus": asdict(self.consensus),
            "gas_schedule": asdict(self.gas_schedule),
        }
