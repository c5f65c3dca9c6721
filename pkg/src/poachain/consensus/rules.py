"""Proof-of-authority block rules (Clique-style).

* Round-robin schedule: the in-turn proposer for height ``h`` is
  ``members[h % n]``; in-turn blocks weigh 2, out-of-turn blocks weigh 1.
* A validator that proposed one of the last ``n // 2`` blocks may not
  propose again. This keeps a minority of validators from extending a
  chain on their own.
"""

from __future__ import annotations

from collections.abc import Sequence

from ..core.crypto import Address
from ..core.types import Block, BlockHeader
from ..execution.state import WorldState
from ..params import ConsensusConfig

IN_TURN_WEIGHT = 2
OUT_OF_TURN_WEIGHT = 1


def scheduled_proposer(height: int, members: Sequence[Address]) -> Address:
    if not members:
        raise ValueError("empty validator set")
    return members[height % len(members)]


def recent_window(n_validators: int) -> int:
    """Number of preceding blocks whose proposers are barred from signing."""
    return n_validators // 2


def expected_weight(height: int, proposer: Address, members: Sequence[Address]) -> int:
    if scheduled_proposer(height, members) == proposer:
        return IN_TURN_WEIGHT
    return OUT_OF_TURN_WEIGHT


def may_propose(proposer: Address, members: Sequence[Address], recent: Sequence[Address]) -> bool:
    """``recent`` lists proposers of preceding blocks, most recent last."""
    if proposer not in members:
        return False
    window = recent_window(len(members))
    return window == 0 or proposer not in recent[-window:]


def check_block(
    parent: BlockHeader,
    parent_state: WorldState,
    block: Block,
    recent: Sequence[Address],
    config: ConsensusConfig,
) -> tuple[str, str] | None:
    """Stateless checks of ``block`` against its parent.

    Returns ``(reason, detail)`` for the first violation, or ``None``.
    Transaction execution and the state root are checked by the caller.
    """
    h = block.header
    if h.height != parent.height + 1:
        return "bad-height", f"height {h.height} after parent {parent.height}"
    if h.parent != parent.digest:
        return "parent-mismatch", "parent digest does not match previous block"
    if len(block.txs) > config.block_capacity:
        return "over-capacity", f"{len(block.txs)} txs > capacity {config.block_capacity}"
    if block.computed_tx_root() != h.tx_root:
        return "tx-root-mismatch", "merkle root of transactions differs from header"
    if not h.signature_ok():
        return "bad-signature", "header signature does not verify for proposer"
    members = parent_state.validators
    if h.proposer not in members:
        return "unauthorized-proposer", "proposer is not in the validator set"
    if not may_propose(h.proposer, members, recent):
        return "recent-signer", "proposer signed one of the last n/2 blocks"
    if h.weight != expected_weight(h.height, h.proposer, members):
        return "bad-weight", f"weight {h.weight} does not match schedule"
    if h.timestamp <= parent.timestamp:
        return "non-monotonic-timestamp", f"{h.timestamp} <= parent {parent.timestamp}"
    if h.timestamp < parent.timestamp + config.slot_seconds:
        return "timestamp-too-early", "block arrives before the parent's slot has elapsed"
    return None
