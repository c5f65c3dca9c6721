"""Known blocks, cumulative weights and heaviest-chain fork choice."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..core.crypto import Address, Digest
from ..core.types import Block
from ..execution.apply import InvalidBlockTx, Receipt, execute_block
from ..execution.state import WorldState
from ..params import ChainParams
from .rules import check_block

MAX_ORPHANS = 1024


@dataclass
class Entry:
    block: Block
    state: WorldState
    receipts: list[Receipt]
    cum_weight: int

    @property
    def digest(self) -> Digest:
        return self.block.digest

    @property
    def height(self) -> int:
        return self.block.height


def tip_key(weight: int, height: int, digest: Digest) -> tuple:
    """Sort key: higher is better. Lower digest wins the final tie."""
    return (weight, height, bytes(255 - b for b in digest))


@dataclass
class AcceptResult:
    status: str  # accepted | rejected | orphan | duplicate
    reason: str | None = None
    detail: str = ""
    equivocation: bool = False
    head_changed: bool = False
    connected: list[Block] = field(default_factory=list)

    @property
    def accepted(self) -> bool:
        return self.status == "accepted"


class ChainView:
    def __init__(self, params: ChainParams) -> None:
        self.params = params
        genesis = params.genesis_block()
        state = params.genesis_state()
        self.genesis = genesis
        self.entries: dict[Digest, Entry] = {genesis.digest: Entry(genesis, state, [], 0)}
        self.children: dict[Digest, list[Digest]] = {genesis.digest: []}
        self.head: Digest = genesis.digest
        self.orphans: dict[Digest, dict[Digest, Block]] = {}
        self.rejected: dict[Digest, str] = {}
        self.evidence: list[tuple[Digest, Digest]] = []
        self.flagged: dict[Address, int] = {}
        self._slots: dict[tuple[int, Address], Digest] = {}
        self._canonical: list[Block] | None = None

    # lookups

    def __contains__(self, digest: Digest) -> bool:
        return digest in self.entries

    def get(self, digest: Digest) -> Entry | None:
        return self.entries.get(digest)

    @property
    def head_entry(self) -> Entry:
        return self.entries[self.head]

    @property
    def head_block(self) -> Block:
        return self.entries[self.head].block

    @property
    def head_state(self) -> WorldState:
        return self.entries[self.head].state

    def recent_proposers(self, digest: Digest, count: int) -> list[Address]:
        """Proposers of ``digest`` and its ancestors, oldest first, genesis excluded."""
        out: list[Address] = []
        entry = self.entries[digest]
        while len(out) < count and entry.height > 0:
            out.append(entry.block.header.proposer)
            entry = self.entries[entry.block.parent]
        out.reverse()
        return out

    def ancestor_at(self, digest: Digest, height: int) -> Entry:
        entry = self.entries[digest]
        if height > entry.height:
            raise ValueError("height above block")
        while entry.height > height:
            entry = self.entries[entry.block.parent]
        return entry

    def canonical(self) -> list[Block]:
        """Blocks from genesis to head."""
        if self._canonical is None:
            out = []
            entry = self.entries[self.head]
            while True:
                out.append(entry.block)
                if entry.height == 0:
                    break
                entry = self.entries[entry.block.parent]
            out.reverse()
            self._canonical = out
        return self._canonical

    def is_canonical(self, digest: Digest) -> bool:
        entry = self.entries.get(digest)
        if entry is None:
            return False
        chain = self.canonical()
        return entry.height < len(chain) and chain[entry.height].digest == digest

    def finality_depth(self) -> int:
        return len(self.head_state.validators)

    def is_final(self, height: int) -> bool:
        return self.head_entry.height - height >= self.finality_depth()

    def tips(self) -> list[Entry]:
        return [self.entries[d] for d, kids in self.children.items() if not kids]

    # mutation

    def add(self, block: Block, state: WorldState, receipts: list[Receipt]) -> Entry:
        """Insert a block whose parent is known, without checks."""
        parent = self.entries[block.parent]
        entry = Entry(block, state, receipts, parent.cum_weight + block.header.weight)
        self.entries[block.digest] = entry
        self.children[block.digest] = []
        self.children[block.parent].append(block.digest)
        slot = (block.height, block.header.proposer)
        other = self._slots.get(slot)
        if other is None:
            self._slots[slot] = block.digest
        elif other != block.digest:
            self.evidence.append((other, block.digest))
            proposer = block.header.proposer
            self.flagged[proposer] = self.flagged.get(proposer, 0) + 1
        head = self.entries[self.head]
        if tip_key(entry.cum_weight, entry.height, entry.digest) > tip_key(
            head.cum_weight, head.height, head.digest
        ):
            self.head = entry.digest
            self._canonical = None
        return entry


def fork_choice(view: ChainView) -> Digest:
    """Maximum cumulative weight, then greater height, then lower digest."""
    best = max(view.entries.values(), key=lambda e: tip_key(e.cum_weight, e.height, e.digest))
    return best.digest


def verify_block(view: ChainView, block: Block) -> tuple[str, str] | tuple[WorldState, list[Receipt]]:
    parent = view.entries[block.parent]
    recent = view.recent_proposers(parent.digest, len(parent.state.validators))
    violation = check_block(parent.block.header, parent.state, block, recent, view.params.consensus)
    if violation:
        return violation
    try:
        result = execute_block(parent.state, block)
    except InvalidBlockTx as exc:
        return "invalid-transaction", str(exc)
    if result.state.state_root() != block.header.state_root:
        return "state-root-mismatch", "re-executed state differs from header"
    return result.state, result.receipts


def accept_block(
    view: ChainView,
    block: Block,
    now_ms: int | None = None,
    max_drift_s: int | None = None,
) -> AcceptResult:
    """Validate ``block`` fully and insert it; connect any waiting orphans.

    Re-delivering a known block is a no-op (``duplicate``).
    """
    digest = block.digest
    if digest in view.entries:
        return AcceptResult("duplicate")
    if digest in view.rejected:
        return AcceptResult("rejected", view.rejected[digest], "previously rejected")
    if now_ms is not None:
        drift = view.params.consensus.slot_seconds if max_drift_s is None else max_drift_s
        if block.header.timestamp * 1000 > now_ms + drift * 1000:
            return AcceptResult("rejected", "future-timestamp", "block timestamp is ahead of local clock")
    if block.parent not in view.entries:
        waiting = view.orphans.setdefault(block.parent, {})
        if sum(len(v) for v in view.orphans.values()) < MAX_ORPHANS:
            waiting[digest] = block
        return AcceptResult("orphan", "unknown-parent")

    old_head = view.head
    flagged_before = len(view.evidence)
    outcome = verify_block(view, block)
    if isinstance(outcome[0], str):
        view.rejected[digest] = outcome[0]
        return AcceptResult("rejected", outcome[0], outcome[1])
    view.add(block, *outcome)

    connected: list[Block] = []
    queue = [digest]
    while queue:
        waiting = view.orphans.pop(queue.pop(0), {})
        for child in waiting.values():
            if child.digest in view.entries:
                continue
            res = verify_block(view, child)
            if isinstance(res[0], str):
                view.rejected[child.digest] = res[0]
                continue
            view.add(child, *res)
            connected.append(child)
            queue.append(child.digest)
    return AcceptResult(
        "accepted",
        equivocation=len(view.evidence) > flagged_before,
        head_changed=view.head != old_head,
        connected=connected,
    )
