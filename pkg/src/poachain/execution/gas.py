from __future__ import annotations

from dataclasses import asdict, dataclass

from ..core.encoding import Reader, Writer
from ..core.types import Transaction, TxKind, payload_data_size

# Gas price is fixed at 1 wei per gas unit.
GAS_PRICE = 1
VIEW_QUERY_COST = 0


@dataclass(frozen=True)
class GasSchedule:
    transfer: int = 21
    mint: int = 21
    endow: int = 21
    contract_call: int = 25
    governance: int = 40
    per_byte: int = 1
    storage_write: int = 20

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if not isinstance(value, int) or value <= 0:
                raise ValueError(f"gas cost {name} must be a positive integer")

    def base_cost(self, kind: TxKind) -> int:
        return {
            TxKind.TRANSFER: self.transfer,
            TxKind.MINT: self.mint,
            TxKind.ENDOW: self.endow,
            TxKind.CONTRACT_CALL: self.contract_call,
            TxKind.GOVERNANCE: self.governance,
        }[kind]

    def intrinsic_gas(self, tx: Transaction) -> int:
        return self.base_cost(tx.kind) + self.per_byte * payload_data_size(tx.payload)

    def encode(self) -> bytes:
        w = Writer()
        for value in asdict(self).values():
            w.u64(value)
        return w.getvalue()

    @classmethod
    def decode(cls, data: bytes) -> GasSchedule:
        r = Reader(data)
        values = [r.u64() for _ in range(len(cls.__dataclass_fields__))]
        r.done()
        return cls(*values)
