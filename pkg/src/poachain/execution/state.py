"""World state: accounts, contract storage and chain-level parameters."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from ..core.crypto import Address, Digest, digest
from ..core.encoding import Writer
from ..core.merkle import merkle_root
from ..core.types import Role
from .gas import GasSchedule


@dataclass(frozen=True)
class Account:
    balance: int = 0
    nonce: int = 0
    role: Role = Role.EXTERNAL


EMPTY_ACCOUNT = Account()


@lru_cache(maxsize=1 << 16)
def _leaf(key: bytes, value: bytes) -> Digest:
    return digest(Writer().blob(key).blob(value).getvalue())


def _account_value(acct: Account) -> bytes:
    return Writer().u256(acct.balance).u64(acct.nonce).u8(int(acct.role)).getvalue()


class WorldState:
    """Mutable state with cheap copies.

    ``copy()`` shares contract storage dicts; a contract's dict is cloned on
    its first write in the new instance. Accounts are immutable values, so
    the account map is copied shallowly.
    """

    __slots__ = (
        "_accounts", "_storage", "_owned", "total_minted", "_validators",
        "_gas_schedule", "gov_epoch", "manifests", "_root",
    )

    def __init__(
        self,
        *,
        validators: tuple[Address, ...] = (),
        gas_schedule: GasSchedule | None = None,
        manifests: dict[Address, Digest] | None = None,
    ) -> None:
        self._accounts: dict[Address, Account] = {}
        self._storage: dict[Address, dict[bytes, bytes]] = {}
        self._owned: set[Address] = set()
        self.total_minted = 0
        self._validators: tuple[Address, ...] = tuple(sorted(validators))
        self._gas_schedule = gas_schedule or GasSchedule()
        self.gov_epoch = 0
        # contract address -> manifest digest, fixed at genesis
        self.manifests: dict[Address, Digest] = dict(manifests or {})
        for contract in self.manifests:
            self._storage[contract] = {}
            self._owned.add(contract)
        self._root: Digest | None = None

    def copy(self) -> WorldState:
        new = WorldState.__new__(WorldState)
        new._accounts = dict(self._accounts)
        new._storage = dict(self._storage)
        new._owned = set()
        new.total_minted = self.total_minted
        new._validators = self._validators
        new._gas_schedule = self._gas_schedule
        new.gov_epoch = self.gov_epoch
        new.manifests = self.manifests
        new._root = self._root
        return new

    # accounts

    def account(self, address: Address) -> Account:
        return self._accounts.get(address, EMPTY_ACCOUNT)

    def set_account(self, address: Address, account: Account) -> None:
        self._accounts[address] = account
        self._root = None

    def accounts(self) -> dict[Address, Account]:
        return dict(self._accounts)

    def balance_sum(self) -> int:
        return sum(a.balance for a in self._accounts.values())

    def credit(self, address: Address, amount: int) -> None:
        acct = self.account(address)
        self.set_account(address, Account(acct.balance + amount, acct.nonce, acct.role))

    def debit(self, address: Address, amount: int) -> None:
        acct = self.account(address)
        if acct.balance < amount:
            raise ValueError("balance would go negative")
        self.set_account(address, Account(acct.balance - amount, acct.nonce, acct.role))

    def set_role(self, address: Address, role: Role) -> None:
        acct = self.account(address)
        self.set_account(address, Account(acct.balance, acct.nonce, role))

    # storage

    def has_contract(self, contract: Address) -> bool:
        return contract in self.manifests

    def storage_get(self, contract: Address, key: bytes) -> bytes | None:
        return self._storage[contract].get(key)

    def storage_put(self, contract: Address, key: bytes, value: bytes) -> None:
        if contract not in self._owned:
            self._storage[contract] = dict(self._storage[contract])
            self._owned.add(contract)
        self._storage[contract][key] = value
        self._root = None

    def storage_items(self, contract: Address) -> dict[bytes, bytes]:
        return dict(self._storage[contract])

    # chain parameters

    @property
    def validators(self) -> tuple[Address, ...]:
        return self._validators

    def set_validators(self, members) -> None:
        self._validators = tuple(sorted(members))
        self._root = None

    @property
    def gas_schedule(self) -> GasSchedule:
        return self._gas_schedule

    def set_gas_schedule(self, schedule: GasSchedule) -> None:
        self._gas_schedule = schedule
        self._root = None

    def bump_epoch(self) -> None:
        self.gov_epoch += 1
        self._root = None

    def add_minted(self, amount: int) -> None:
        self.total_minted += amount
        self._root = None

    # commitment

    def leaves(self) -> list[tuple[bytes, bytes]]:
        items: list[tuple[bytes, bytes]] = [
            (b"a" + addr, _account_value(acct)) for addr, acct in self._accounts.items()
        ]
        for contract, kv in self._storage.items():
            items.extend((b"s" + contract + k, v) for k, v in kv.items())
        for contract, manifest_digest in self.manifests.items():
            items.append((b"c" + contract, manifest_digest))
        items.append((b"m:total_minted", Writer().u256(self.total_minted).getvalue()))
        items.append((b"m:validators", b"".join(self._validators)))
        items.append((b"m:gas_schedule", self._gas_schedule.encode()))
        items.append((b"m:gov_epoch", Writer().u64(self.gov_epoch).getvalue()))
        items.sort()
        return items

    def state_root(self) -> Digest:
        if self._root is None:
            self._root = merkle_root([_leaf(k, v) for k, v in self.leaves()])
        return self._root

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WorldState):
            return NotImplemented
        return self.leaves() == other.leaves()

    __hash__ = None  # type: ignore[assignment]
