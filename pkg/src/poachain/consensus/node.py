"""Validator node core.

The node does no I/O. Every handler takes the current time in
milliseconds and returns a list of actions (``Broadcast``, ``Send``,
``SetTimer``) for the driver to carry out; the discrete-event simulator
and the asyncio runtime are the two drivers.
"""

from __future__ import annotations

import enum
import logging
from collections.abc import Callable, Iterable
from dataclasses import dataclass
from typing import Any

from ..core.crypto import Digest, KeyPair, to_hex
from ..core.merkle import merkle_root
from ..core.types import Block, BlockHeader, Transaction
from ..execution.apply import BlockContext, Receipt, TxRejected, apply_in_place, precheck
from ..execution.state import WorldState
from ..params import ChainParams
from .chain_view import ChainView, accept_block
from .messages import BlockResponse, Message, NewBlock, NewTx, RequestBlock, TxAck
from .rules import IN_TURN_WEIGHT, OUT_OF_TURN_WEIGHT, may_propose, scheduled_proposer

log = logging.getLogger(__name__)


class Behavior(str, enum.Enum):
    EQUIVOCATE = "equivocate"
    WITHHOLD = "withhold"
    STALE_SIGN = "stale_sign"


@dataclass(frozen=True)
class Broadcast:
    msg: Message
    exclude: Any = None


@dataclass(frozen=True)
class Send:
    peer: Any
    msg: Message


@dataclass(frozen=True)
class SetTimer:
    at_ms: int
    token: int


Action = Broadcast | Send | SetTimer


def _ceil_second_ms(now_ms: int) -> int:
    return -(-now_ms // 1000) * 1000


def proposal_time(view: ChainView, proposer: bytes) -> int | None:
    """Earliest second at which ``proposer`` will try to extend the head.

    In-turn: one slot after the parent. Out-of-turn: a further
    ``out_of_turn_delay`` plus one slot per eligible backup ranked ahead
    in schedule order, so backups do not all fire at once.
    """
    head = view.head_entry
    members = head.state.validators
    recent = view.recent_proposers(head.digest, len(members))
    if not may_propose(proposer, members, recent):
        return None
    cfg = view.params.consensus
    height = head.height + 1
    base = head.block.header.timestamp + cfg.slot_seconds
    scheduled = scheduled_proposer(height, members)
    if scheduled == proposer:
        return base
    start = members.index(scheduled)
    order = [members[(start + k) % len(members)] for k in range(1, len(members))]
    eligible = [m for m in order if may_propose(m, members, recent)]
    return base + _backup_delay(view, scheduled, recent) + eligible.index(proposer) * cfg.slot_seconds


def _backup_delay(view: ChainView, scheduled: bytes, recent: list[bytes]) -> int:
    # a scheduled proposer barred as a recent signer cannot produce, so
    # waiting for it would only stall the chain
    if may_propose(scheduled, view.head_state.validators, recent):
        return view.params.consensus.out_of_turn_delay
    return 0


def build_block(
    view: ChainView,
    pending: Iterable[Transaction],
    timestamp: int,
    key: KeyPair,
    weight: int,
) -> tuple[Block, WorldState, list[Receipt]]:
    head = view.head_entry
    state = head.state.copy()
    ctx = BlockContext(head.height + 1, timestamp, key.address)
    capacity = view.params.consensus.block_capacity
    included: list[Transaction] = []
    receipts: list[Receipt] = []
    for tx in sorted(pending, key=lambda t: (t.sender, t.nonce)):
        if len(included) >= capacity:
            break
        try:
            receipts.append(apply_in_place(state, tx, ctx))
        except TxRejected:
            continue
        included.append(tx)
    header = BlockHeader(
        height=head.height + 1,
        parent=head.digest,
        state_root=state.state_root(),
        tx_root=merkle_root([tx.digest for tx in included]),
        proposer=key.address,
        timestamp=timestamp,
        weight=weight,
    ).signed(key)
    return Block(header, tuple(included)), state, receipts


def propose_block(
    view: ChainView,
    pending: Iterable[Transaction],
    now_ms: int,
    key: KeyPair,
) -> Block | None:
    """Produce a signed block on the current head if this validator may.

    In-turn validators may propose once the parent's slot has elapsed
    (weight 2); others after the additional out-of-turn delay (weight 1).
    Pending transactions that fail validation are skipped.
    """
    built = _try_build(view, pending, now_ms, key)
    return built[0] if built else None


def _try_build(view, pending, now_ms, key, timestamp=None):
    head = view.head_entry
    members = head.state.validators
    me = key.address
    recent = view.recent_proposers(head.digest, len(members))
    if not may_propose(me, members, recent):
        return None
    cfg = view.params.consensus
    now_s = now_ms // 1000
    base = head.block.header.timestamp + cfg.slot_seconds
    scheduled = scheduled_proposer(head.height + 1, members)
    in_turn = scheduled == me
    if now_s < (base if in_turn else base + _backup_delay(view, scheduled, recent)):
        return None
    weight = IN_TURN_WEIGHT if in_turn else OUT_OF_TURN_WEIGHT
    return build_block(view, pending, timestamp or now_s, key, weight)


Listener = Callable[..., None]


class Node:
    def __init__(
        self,
        params: ChainParams,
        key: KeyPair | None = None,
        *,
        node_id: int = 0,
        behavior: Behavior | None = None,
        listener: Listener | None = None,
        pool_limit: int = 10_000,
    ) -> None:
        self.params = params
        self.key = key
        self.node_id = node_id
        self.behavior = Behavior(behavior) if behavior else None
        self.listener = listener or (lambda *a, **k: None)
        self.view = ChainView(params)
        self.pool: dict[Digest, Transaction] = {}
        self.pool_limit = pool_limit
        self.peers: list = []
        self._token = 0
        self._armed: tuple[int, Digest] | None = None
        self._stale_key = KeyPair.from_seed("stale", key.secret) if key else None

    @property
    def honest(self) -> bool:
        return self.behavior is None

    # driver entry points

    def start(self, now_ms: int) -> list[Action]:
        return self._arm(now_ms)

    def on_timer(self, token: int, now_ms: int) -> list[Action]:
        if self._armed is None or self._armed[0] != token or self._armed[1] != self.view.head:
            return []
        self._armed = None
        built = _try_build(self.view, self.pool.values(), now_ms, self.key)
        if built is None:
            return self._arm(now_ms)
        block, state, receipts = built
        if self.behavior is Behavior.STALE_SIGN:
            header = block.header.signed(self._stale_key)
            block = Block(header, block.txs)
        old_head = self.view.head
        self.view.add(block, state, receipts)
        self._produced(block, now_ms)
        actions: list[Action] = []
        if self.behavior is Behavior.EQUIVOCATE:
            twin, _, _ = _try_build(self.view_at(old_head), self.pool.values(), now_ms,
                                    self.key, timestamp=block.header.timestamp + 1)
            self._produced(twin, now_ms)
            for i, peer in enumerate(self.peers):
                actions.append(Send(peer, NewBlock(block if i % 2 == 0 else twin)))
        elif self.behavior is not Behavior.WITHHOLD:
            actions.append(Broadcast(NewBlock(block)))
        actions.extend(self._head_moved(old_head, now_ms))
        return actions

    def on_message(self, msg: Message, peer: Any, now_ms: int) -> list[Action]:
        if isinstance(msg, (NewBlock, BlockResponse)):
            return self._on_block(msg.block, peer, now_ms)
        if isinstance(msg, RequestBlock):
            entry = self.view.get(msg.digest)
            return [Send(peer, BlockResponse(entry.block))] if entry else []
        if isinstance(msg, NewTx):
            ack, actions = self.submit_tx(msg.tx, now_ms, peer=peer)
            if msg.want_ack:
                actions.append(Send(peer, ack))
            return actions
        return []

    def submit_tx(self, tx: Transaction, now_ms: int, peer: Any = None) -> tuple[TxAck, list[Action]]:
        if tx.digest in self.pool:
            return TxAck(tx.digest, True, "", "already pending"), []
        try:
            precheck(self.view.head_state, tx, allow_future_nonce=True)
        except TxRejected as exc:
            return TxAck(tx.digest, False, exc.code, str(exc)), []
        if len(self.pool) >= self.pool_limit:
            return TxAck(tx.digest, False, "PoolFull", "transaction pool is full"), []
        self.pool[tx.digest] = tx
        actions: list[Action] = []
        if self.behavior is not Behavior.WITHHOLD:
            actions.append(Broadcast(NewTx(tx), exclude=peer))
        return TxAck(tx.digest, True), actions

    # internals

    def view_at(self, digest: Digest) -> ChainView:
        """A shallow view whose head is ``digest`` (used to build a twin block)."""
        shadow = ChainView.__new__(ChainView)
        shadow.__dict__.update(self.view.__dict__)
        shadow.head = digest
        shadow._canonical = None
        return shadow

    def _on_block(self, block: Block, peer: Any, now_ms: int) -> list[Action]:
        old_head = self.view.head
        res = accept_block(self.view, block, now_ms)
        if res.status == "orphan":
            return [Send(peer, RequestBlock(block.parent))]
        if res.status == "rejected":
            if res.detail != "previously rejected":
                self.listener("rejected", node=self.node_id, t=now_ms,
                              digest=to_hex(block.digest), reason=res.reason)
            return []
        if res.status != "accepted":
            return []
        if res.equivocation:
            self.listener("equivocation", node=self.node_id, t=now_ms,
                          proposer=to_hex(block.header.proposer), height=block.height)
        actions: list[Action] = []
        if self.behavior is not Behavior.WITHHOLD:
            for b in [block, *res.connected]:
                actions.append(Broadcast(NewBlock(b), exclude=peer))
        if self.view.head != old_head:
            actions.extend(self._head_moved(old_head, now_ms))
        return actions

    def _produced(self, block: Block, now_ms: int) -> None:
        h = block.header
        self.listener("produced", node=self.node_id, t=now_ms, height=h.height,
                      digest=to_hex(block.digest), parent=to_hex(h.parent),
                      proposer=to_hex(h.proposer), weight=h.weight, txs=len(block.txs))

    def _head_moved(self, old_head: Digest, now_ms: int) -> list[Action]:
        view = self.view
        head = view.head_entry
        self.listener("head", node=self.node_id, t=now_ms, height=head.height,
                      digest=to_hex(head.digest))
        self._requeue_abandoned(old_head)
        state = head.state
        stale = [d for d, tx in self.pool.items() if tx.nonce < state.account(tx.sender).nonce]
        for d in stale:
            del self.pool[d]
        return self._arm(now_ms)

    def _requeue_abandoned(self, old_head: Digest) -> None:
        view = self.view
        old = view.entries[old_head]
        new = view.head_entry
        if new.height > old.height and view.ancestor_at(new.digest, old.height).digest == old.digest:
            return
        while new.height > old.height:
            new = view.entries[new.block.parent]
        while old.height > new.height:
            for tx in old.block.txs:
                self.pool.setdefault(tx.digest, tx)
            old = view.entries[old.block.parent]
        while old.digest != new.digest:
            for tx in old.block.txs:
                self.pool.setdefault(tx.digest, tx)
            old = view.entries[old.block.parent]
            new = view.entries[new.block.parent]

    def _arm(self, now_ms: int) -> list[Action]:
        if self.key is None or self.key.address not in self.view.head_state.validators:
            self._armed = None
            return []
        at = proposal_time(self.view, self.key.address)
        if at is None:
            self._armed = None
            return []
        self._token += 1
        self._armed = (self._token, self.view.head)
        return [SetTimer(max(at * 1000, _ceil_second_ms(now_ms)), self._token)]
