"""Deterministic transaction execution.

A transaction is either *rejected* (it raises a ``TxRejected`` subclass and
leaves the state untouched; such a transaction can never appear in a valid
block) or *applied*, producing a ``Receipt`` whose status is ``success`` or
``revert``. A reverted contract call still pays its fee and consumes its
nonce.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..core.crypto import ADDRESS_SIZE, Address, Digest, digest, to_hex, verify
from ..core.encoding import DecodeError, MAX_U256, Writer
from ..core.types import (
    Block,
    ContractCall,
    Endow,
    GovAction,
    Governance,
    Mint,
    Role,
    Transaction,
    Transfer,
    TxKind,
)
from .contracts import HANDLERS, VALIDATOR_GOVERNANCE, CallContext, ContractRevert, OutOfGas
from .gas import GAS_PRICE, GasSchedule
from .state import Account, WorldState


class TxRejected(Exception):
    code = "Rejected"

    def __init__(self, message: str = "") -> None:
        super().__init__(message or self.code)


class BadSignature(TxRejected):
    code = "BadSignature"


class BadNonce(TxRejected):
    code = "BadNonce"


class InsufficientGasFunds(TxRejected):
    code = "InsufficientGasFunds"


class Unauthorized(TxRejected):
    code = "Unauthorized"


class IntrinsicGasTooLow(TxRejected):
    code = "IntrinsicGasTooLow"


class InsufficientBalance(TxRejected):
    code = "InsufficientBalance"


class InsufficientApprovals(TxRejected):
    code = "InsufficientApprovals"


class DuplicateApproval(TxRejected):
    code = "DuplicateApproval"


class InvalidGovernance(TxRejected):
    code = "InvalidGovernance"


class SupplyOverflow(TxRejected):
    code = "SupplyOverflow"


class UnknownContract(LookupError):
    code = "UnknownContract"


ALLOWED_KINDS: dict[Role, frozenset[TxKind]] = {
    Role.EXTERNAL: frozenset(),
    Role.OPERATOR: frozenset({TxKind.TRANSFER, TxKind.CONTRACT_CALL}),
    Role.VALIDATOR: frozenset(TxKind),
}


@dataclass(frozen=True)
class Event:
    name: str
    data: tuple[tuple[str, str], ...] = ()

    def to_json(self) -> dict:
        return {"name": self.name, **dict(self.data)}


@dataclass(frozen=True)
class Receipt:
    tx_digest: Digest
    status: str
    gas_used: int
    events: tuple[Event, ...] = ()
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "success"

    def to_json(self) -> dict:
        return {
            "tx_digest": to_hex(self.tx_digest),
            "status": self.status,
            "gas_used": self.gas_used,
            "events": [e.to_json() for e in self.events],
            "error": self.error,
        }


@dataclass(frozen=True)
class BlockContext:
    height: int
    timestamp: int
    proposer: Address


def _event(name: str, **data: str) -> Event:
    return Event(name, tuple(sorted(data.items())))


def proposal_digest(epoch: int, action: GovAction, subject: bytes) -> Digest:
    """What validators sign to approve a governance change."""
    w = Writer().blob(b"poachain-governance").u64(epoch).u8(int(action)).blob(subject)
    return digest(w.getvalue())


def _check_governance(state: WorldState, payload: Governance) -> None:
    members = state.validators
    if payload.action in (GovAction.ADD_VALIDATOR, GovAction.REMOVE_VALIDATOR):
        if len(payload.subject) != ADDRESS_SIZE:
            raise InvalidGovernance("subject must be an address")
        if payload.action is GovAction.ADD_VALIDATOR and payload.subject in members:
            raise InvalidGovernance("already a validator")
        if payload.action is GovAction.REMOVE_VALIDATOR:
            if payload.subject not in members:
                raise InvalidGovernance("not a validator")
            if len(members) == 1:
                raise InvalidGovernance("cannot remove the last validator")
    else:
        try:
            GasSchedule.decode(payload.subject)
        except (DecodeError, ValueError) as exc:
            raise InvalidGovernance(f"bad gas schedule: {exc}") from None

    target = proposal_digest(state.gov_epoch, payload.action, payload.subject)
    member_set = set(members)
    seen: set[Address] = set()
    for sig in payload.approvals:
        signer = sig.signer
        if signer in seen:
            raise DuplicateApproval(f"duplicate approval from {to_hex(signer)}")
        seen.add(signer)
    valid = sum(
        1 for sig in payload.approvals if sig.signer in member_set and verify(sig, target)
    )
    if 2 * valid <= len(members):
        raise InsufficientApprovals(f"{valid} of {len(members)} approvals; need a strict majority")


def precheck(state: WorldState, tx: Transaction, *, allow_future_nonce: bool = False) -> int:
    """Run every rejection check; return the intrinsic gas on success."""
    if not tx.signature_ok():
        raise BadSignature("signature does not verify against sender")
    acct = state.account(tx.sender)
    if tx.nonce < acct.nonce or (tx.nonce != acct.nonce and not allow_future_nonce):
        raise BadNonce(f"expected nonce {acct.nonce}, got {tx.nonce}")
    schedule = state.gas_schedule
    intrinsic = schedule.intrinsic_gas(tx)
    if acct.balance < max(tx.gas_limit, intrinsic) * GAS_PRICE:
        raise InsufficientGasFunds(
            f"balance {acct.balance} cannot cover gas limit {max(tx.gas_limit, intrinsic)}"
        )
    if tx.kind not in ALLOWED_KINDS[acct.role]:
        raise Unauthorized(f"{acct.role.name.lower()} may not send {tx.kind.name}")
    if tx.gas_limit < intrinsic:
        raise IntrinsicGasTooLow(f"gas limit {tx.gas_limit} below intrinsic cost {intrinsic}")
    payload = tx.payload
    if isinstance(payload, (Transfer, Endow)):
        if acct.balance - tx.gas_limit * GAS_PRICE < payload.amount:
            raise InsufficientBalance(f"balance {acct.balance} cannot cover {payload.amount} plus gas")
    elif isinstance(payload, Mint):
        if state.total_minted + payload.amount > MAX_U256:
            raise SupplyOverflow("mint overflows supply")
    elif isinstance(payload, Governance):
        _check_governance(state, payload)
    return intrinsic


def apply_in_place(state: WorldState, tx: Transaction, ctx: BlockContext) -> Receipt:
    intrinsic = precheck(state, tx)
    payload = tx.payload
    gas_used = intrinsic
    events: list[Event] = []
    status, error = "success", None

    if isinstance(payload, Transfer):
        state.debit(tx.sender, payload.amount)
        state.credit(payload.to, payload.amount)
        events.append(_event("Transfer", sender=to_hex(tx.sender), to=to_hex(payload.to),
                             amount=str(payload.amount)))
    elif isinstance(payload, Mint):
        state.credit(payload.beneficiary, payload.amount)
        state.add_minted(payload.amount)
        events.append(_event("Mint", beneficiary=to_hex(payload.beneficiary),
                             amount=str(payload.amount)))
    elif isinstance(payload, Endow):
        state.debit(tx.sender, payload.amount)
        state.credit(payload.operator, payload.amount)
        events.append(_event("Endow", operator=to_hex(payload.operator),
                             amount=str(payload.amount)))
        if state.account(payload.operator).role is Role.EXTERNAL:
            state.set_role(payload.operator, Role.OPERATOR)
            events.append(_event("RoleChanged", address=to_hex(payload.operator), role="operator"))
    elif isinstance(payload, Governance):
        events.extend(_apply_governance(state, payload))
    elif isinstance(payload, ContractCall):
        call = CallContext(
            state, payload.contract, tx.sender, ctx.height, ctx.timestamp,
            tx.gas_limit - intrinsic, state.gas_schedule.storage_write,
        )
        try:
            handler = HANDLERS.get(payload.contract)
            if handler is None or not state.has_contract(payload.contract):
                raise ContractRevert(f"no contract at {to_hex(payload.contract)}")
            handler(call, payload.method, payload.args)
        except ContractRevert as exc:
            status, error = "revert", f"ContractRevert: {exc}"
            if isinstance(exc, OutOfGas):
                gas_used = tx.gas_limit
        else:
            for key, value in call.writes.items():
                state.storage_put(payload.contract, key, value)
            gas_used = tx.gas_limit - call.gas_left
            events.extend(_event(name, **data) for name, data in call.events)

    fee = gas_used * GAS_PRICE
    acct = state.account(tx.sender)
    state.set_account(tx.sender, Account(acct.balance - fee, acct.nonce + 1, acct.role))
    state.credit(ctx.proposer, fee)
    return Receipt(tx.digest, status, gas_used, tuple(events), error)


def _apply_governance(state: WorldState, payload: Governance) -> list[Event]:
    if payload.action is GovAction.ADD_VALIDATOR:
        state.set_validators(state.validators + (payload.subject,))
        state.set_role(payload.subject, Role.VALIDATOR)
        event = _event("ValidatorAdded", address=to_hex(payload.subject))
    elif payload.action is GovAction.REMOVE_VALIDATOR:
        state.set_validators(v for v in state.validators if v != payload.subject)
        state.set_role(payload.subject, Role.OPERATOR)
        event = _event("ValidatorRemoved", address=to_hex(payload.subject))
    else:
        state.set_gas_schedule(GasSchedule.decode(payload.subject))
        event = _event("GasScheduleUpdated", schedule=to_hex(payload.subject))
    state.bump_epoch()
    return [event]


def apply_transaction(
    state: WorldState,
    tx: Transaction,
    proposer: Address,
    ctx: BlockContext | None = None,
) -> tuple[WorldState, Receipt]:
    """Pure form: returns a new state; the input state is never modified."""
    ctx = ctx or BlockContext(0, 0, proposer)
    if ctx.proposer != proposer:
        ctx = BlockContext(ctx.height, ctx.timestamp, proposer)
    new = state.copy()
    receipt = apply_in_place(new, tx, ctx)
    return new, receipt


def mint(state: WorldState, tx: Transaction, proposer: Address | None = None) -> WorldState:
    if not isinstance(tx.payload, Mint):
        raise TypeError("not a Mint transaction")
    return apply_transaction(state, tx, proposer or tx.sender)[0]


def endow(state: WorldState, tx: Transaction, proposer: Address | None = None) -> WorldState:
    if not isinstance(tx.payload, Endow):
        raise TypeError("not an Endow transaction")
    return apply_transaction(state, tx, proposer or tx.sender)[0]


def governance_change(state: WorldState, tx: Transaction, proposer: Address | None = None) -> WorldState:
    if not isinstance(tx.payload, Governance):
        raise TypeError("not a Governance transaction")
    return apply_transaction(state, tx, proposer or tx.sender)[0]


def view_query(state: WorldState, contract: Address, key: bytes) -> bytes | None:
    """Gas-free, signature-free read. Returns ``None`` for an absent key."""
    if not state.has_contract(contract):
        raise UnknownContract(to_hex(contract))
    if contract == VALIDATOR_GOVERNANCE:
        if key == b"validators":
            return b"".join(state.validators)
        if key == b"gas_schedule":
            return state.gas_schedule.encode()
        if key == b"epoch":
            return state.gov_epoch.to_bytes(8, "big")
    return state.storage_get(contract, key)


class InvalidBlockTx(Exception):
    def __init__(self, index: int, error: TxRejected) -> None:
        super().__init__(f"tx {index}: {error.code}: {error}")
        self.index = index
        self.error = error


@dataclass
class BlockResult:
    state: WorldState
    receipts: list[Receipt] = field(default_factory=list)


def execute_block(parent_state: WorldState, block: Block) -> BlockResult:
    """Apply every transaction of ``block`` to a copy of ``parent_state``.

    Raises ``InvalidBlockTx`` if any transaction would be rejected.
    """
    state = parent_state.copy()
    h = block.header
    ctx = BlockContext(h.height, h.timestamp, h.proposer)
    receipts = []
    for i, tx in enumerate(block.txs):
        try:
            receipts.append(apply_in_place(state, tx, ctx))
        except TxRejected as exc:
            raise InvalidBlockTx(i, exc) from None
    return BlockResult(state, receipts)
