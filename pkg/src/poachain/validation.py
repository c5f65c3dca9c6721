"""Whole-chain structural validation with full re-execution."""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from .consensus.rules import check_block
from .core.encoding import DecodeError, frame, iter_frames
from .core.types import Block
from .execution.apply import InvalidBlockTx, execute_block
from .execution.state import WorldState
from .params import ChainParams


@dataclass
class ValidationReport:
    ok: bool
    height: int | None = None
    reason: str | None = None
    detail: str = ""
    checked: int = 0
    state: WorldState | None = None

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "height": self.height,
            "reason": self.reason,
            "detail": self.detail,
            "checked": self.checked,
        }


def validate_chain(blocks: Sequence[Block], params: ChainParams) -> ValidationReport:
    """Check every link, signature, proposer right and state transition.

    The validator-set history is not an input: each block is checked
    against the set held in its parent's post-state, which re-execution
    reconstructs from genesis. Violations are returned, never raised.
    """
    if not blocks:
        return ValidationReport(False, 0, "empty-chain", "chain has no genesis block")
    expected_genesis = params.genesis_block()
    if blocks[0] != expected_genesis:
        return ValidationReport(False, 0, "genesis-mismatch", "block 0 is not the agreed genesis")

    state = params.genesis_state()
    parent = blocks[0].header
    recent: list = []
    window = 0
    for i, block in enumerate(blocks[1:], start=1):
        violation = check_block(parent, state, block, recent, params.consensus)
        if violation:
            return ValidationReport(False, i, *violation, checked=i, state=state)
        try:
            result = execute_block(state, block)
        except InvalidBlockTx as exc:
            return ValidationReport(False, i, "invalid-transaction", str(exc), checked=i, state=state)
        if result.state.state_root() != block.header.state_root:
            return ValidationReport(
                False, i, "state-root-mismatch", "re-executed state differs from header",
                checked=i, state=state,
            )
        recent.append(block.header.proposer)
        window = max(window, len(state.validators))
        if len(recent) > window:
            del recent[: len(recent) - window]
        state = result.state
        parent = block.header
    return ValidationReport(True, checked=len(blocks), state=state)


def decode_chain(data: bytes) -> tuple[list[Block], tuple[int, str] | None]:
    """Decode a length-prefixed export; report the first undecodable index."""
    blocks: list[Block] = []
    try:
        for raw in iter_frames(data):
            blocks.append(Block.decode(raw))
    except (DecodeError, ValueError) as exc:
        return blocks, (len(blocks), str(exc))
    return blocks, None


def validate_encoded_chain(data: bytes, params: ChainParams) -> ValidationReport:
    blocks, failure = decode_chain(data)
    report = validate_chain(blocks, params) if blocks else None
    if failure is not None:
        index, detail = failure
        if report is not None and not report.ok and report.height is not None and report.height < index:
            return report
        return ValidationReport(False, index, "malformed", detail, checked=index)
    if report is None:
        return validate_chain([], params)
    return report


def encode_chain(blocks: Iterable[Block]) -> bytes:
    return b"".join(frame(b.encode()) for b in blocks)
