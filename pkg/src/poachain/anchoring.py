"""Checkpoint anchoring to a public witness chain.

An ``AnchorAgent`` periodically submits the digest of the deepest final
block (head minus the confirmation depth) to a ``WitnessClient``. Anchors
are later checked against a presented chain with
``verify_against_anchors``: a rewrite of anchored history is caught even
when the rewritten chain is internally consistent and fully re-signed.
"""

from __future__ import annotations

import json
import logging
import os
import random
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from .core.crypto import Digest, from_hex, to_hex
from .core.crypto import digest as hash_bytes
from .core.types import Block

log = logging.getLogger(__name__)

DEFAULT_INTERVAL_SECONDS = 86_400


class WitnessUnavailable(Exception):
    pass


@dataclass(frozen=True)
class WitnessRecord:
    digest: Digest
    height: int
    witness_ref: str

    def to_json(self) -> dict:
        return {"height": self.height, "digest": to_hex(self.digest), "witness_ref": self.witness_ref}

    @classmethod
    def from_json(cls, data: dict) -> WitnessRecord:
        return cls(from_hex(data["digest"], 32), int(data["height"]), str(data["witness_ref"]))


@dataclass(frozen=True)
class Anchor:
    height: int
    block_digest: Digest
    submitted_at: int
    witness_ref: str

    def to_json(self) -> dict:
        return {
            "height": self.height,
            "digest": to_hex(self.block_digest),
            "submitted_at": self.submitted_at,
            "witness_ref": self.witness_ref,
        }

    @classmethod
    def from_json(cls, data: dict) -> Anchor:
        return cls(int(data["height"]), from_hex(data["digest"], 32),
                   int(data["submitted_at"]), str(data["witness_ref"]))


class WitnessClient(Protocol):
    def submit(self, digest: Digest, height: int) -> str: ...

    def fetch_all(self) -> list[WitnessRecord]: ...


class MockWitness:
    """In-memory append-only witness.

    ``outages`` are ``(start, end)`` windows on ``clock`` during which
    ``submit`` raises ``WitnessUnavailable``. With a non-zero ``latency``
    range a submission becomes visible only at ``now + latency``, so
    ``fetch_all`` returns records in completion order.
    """

    def __init__(
        self,
        clock: Callable[[], float] | None = None,
        outages: Iterable[tuple[float, float]] = (),
        latency: tuple[float, float] = (0.0, 0.0),
        seed: int = 0,
    ) -> None:
        self.clock = clock or (lambda: 0.0)
        self.outages = [tuple(w) for w in outages]
        self.latency = latency
        self._rng = random.Random(seed)
        self._pending: list[tuple[float, int, WitnessRecord]] = []
        self._seq = 0

    def available(self) -> bool:
        now = self.clock()
        return not any(start <= now < end for start, end in self.outages)

    def submit(self, digest: Digest, height: int) -> str:
        if not self.available():
            raise WitnessUnavailable(f"witness down at t={self.clock()}")
        lo, hi = self.latency
        delay = self._rng.uniform(lo, hi) if hi > lo else lo
        ref_seed = f"{self._seq}:{height}:{to_hex(digest)}".encode()
        ref = "mock-" + to_hex(hash_bytes(ref_seed))[:24]
        self._pending.append((self.clock() + delay, self._seq, WitnessRecord(digest, height, ref)))
        self._seq += 1
        return ref

    def fetch_all(self) -> list[WitnessRecord]:
        now = self.clock()
        done = sorted((t, s, r) for t, s, r in self._pending if t <= now)
        return [r for _, _, r in done]

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps([r.to_json() for r in self.fetch_all()], indent=1))


def mock_witness(**kwargs) -> MockWitness:
    return MockWitness(**kwargs)


class FileWitness:
    """Witness backed by an append-only JSON-lines file, shareable across processes."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)

    def submit(self, digest: Digest, height: int) -> str:
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            count = len(self.fetch_all())
            ref = f"file-{count}-{to_hex(digest)[:16]}"
            with self.path.open("a") as fh:
                fh.write(json.dumps(WitnessRecord(digest, height, ref).to_json()) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        except OSError as exc:
            raise WitnessUnavailable(str(exc)) from exc
        return ref

    def fetch_all(self) -> list[WitnessRecord]:
        if not self.path.exists():
            return []
        return [WitnessRecord.from_json(json.loads(line))
                for line in self.path.read_text().splitlines() if line.strip()]


def load_witness_dump(path: str | Path) -> list[WitnessRecord]:
    """Read a witness dump: a JSON list, or JSON lines."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("["):
        return [WitnessRecord.from_json(r) for r in json.loads(text)]
    return [WitnessRecord.from_json(json.loads(line)) for line in text.splitlines() if line.strip()]


@dataclass(frozen=True)
class AnchorPolicy:
    interval_seconds: int = DEFAULT_INTERVAL_SECONDS
    min_confirmation_depth: int | None = None  # None: the validator count
    interval_blocks: int | None = None  # overrides the clock when set
    retry_base_seconds: float = 60.0

    def __post_init__(self) -> None:
        if self.interval_seconds <= 0 or self.retry_base_seconds <= 0:
            raise ValueError("anchor intervals must be positive")
        if self.min_confirmation_depth is not None and self.min_confirmation_depth < 0:
            raise ValueError("confirmation depth must be non-negative")
        if self.interval_blocks is not None and self.interval_blocks <= 0:
            raise ValueError("interval_blocks must be positive")


class AnchorLog:
    """Append-only anchor log, optionally persisted as JSON lines."""

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path else None
        self.anchors: list[Anchor] = []
        if self.path and self.path.exists():
            for line in self.path.read_text().splitlines():
                if line.strip():
                    self.anchors.append(Anchor.from_json(json.loads(line)))

    @property
    def last(self) -> Anchor | None:
        return self.anchors[-1] if self.anchors else None

    def append(self, anchor: Anchor) -> None:
        if self.last and anchor.height <= self.last.height:
            raise ValueError("anchor heights must strictly increase")
        self.anchors.append(anchor)
        if self.path:
            with self.path.open("a") as fh:
                fh.write(json.dumps(anchor.to_json(), sort_keys=True) + "\n")

    def __iter__(self):
        return iter(self.anchors)

    def __len__(self) -> int:
        return len(self.anchors)


@dataclass(frozen=True)
class Gap:
    detected_at: float
    missed_intervals: int
    last_success_interval: int

    def to_json(self) -> dict:
        return {"detected_at": self.detected_at, "missed_intervals": self.missed_intervals,
                "last_success_interval": self.last_success_interval}


class AnchorAgent:
    """Submits one anchor per interval.

    Intervals are counted on a fixed grid from ``start_time``. A failed
    submission is retried with exponential backoff; when one finally
    succeeds, any whole intervals that passed without an anchor are
    recorded as a ``Gap`` and logged.
    """

    def __init__(self, policy: AnchorPolicy, client: WitnessClient,
                 log_: AnchorLog | None = None, start_time: float = 0) -> None:
        self.policy = policy
        self.client = client
        self.log = log_ if log_ is not None else AnchorLog()
        self.start_time = start_time
        self.gaps: list[Gap] = []
        self.failures = 0
        self._last_interval = 0
        self._retry_at = float("-inf")
        self._failed_interval = -1

    def _interval_index(self, now: float, head_height: int) -> int:
        if self.policy.interval_blocks:
            return head_height // self.policy.interval_blocks
        return int((now - self.start_time) // self.policy.interval_seconds)

    def maybe_anchor(self, chain: Sequence[Block], now: float,
                     n_validators: int | None = None) -> Anchor | None:
        head_height = len(chain) - 1
        index = self._interval_index(now, head_height)
        if index <= self._last_interval:
            return None
        # a fresh interval restarts the retry schedule
        if now < self._retry_at and index == self._failed_interval:
            return None
        depth = self.policy.min_confirmation_depth
        if depth is None:
            depth = n_validators if n_validators is not None else 0
        final_height = head_height - depth
        last = self.log.last
        # genesis is pinned by the chain parameters and never needs an anchor
        if final_height < 1 or (last is not None and final_height <= last.height):
            return None
        block = chain[final_height]
        try:
            ref = self.client.submit(block.digest, final_height)
        except WitnessUnavailable as exc:
            self.failures += 1
            self._failed_interval = index
            backoff = self.policy.retry_base_seconds * 2 ** (self.failures - 1)
            self._retry_at = now + min(backoff, self.policy.interval_seconds)
            log.warning("anchor submission failed (%s); attempt %d, retry at %s",
                        exc, self.failures, self._retry_at)
            return None
        missed = index - self._last_interval - 1
        if missed > 0:
            gap = Gap(now, missed, self._last_interval)
            self.gaps.append(gap)
            log.warning("anchoring gap: %d interval(s) without an anchor", missed)
        self._last_interval = index
        self.failures = 0
        self._retry_at = float("-inf")
        anchor = Anchor(final_height, block.digest, int(now), ref)
        self.log.append(anchor)
        return anchor


def maybe_anchor(chain: Sequence[Block], policy: AnchorPolicy, now: float,
                 client: WitnessClient, agent: AnchorAgent | None = None,
                 n_validators: int | None = None) -> Anchor | None:
    agent = agent or AnchorAgent(policy, client)
    return agent.maybe_anchor(chain, now, n_validators)


@dataclass
class AnchorCheck:
    height: int
    digest: str
    ok: bool
    reason: str = ""

    def to_json(self) -> dict:
        return {"height": self.height, "digest": self.digest, "ok": self.ok, "reason": self.reason}


@dataclass
class VerificationReport:
    ok: bool
    checks: list[AnchorCheck] = field(default_factory=list)
    earliest_mismatch: int | None = None
    unanchored_suffix: int = 0
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "earliest_mismatch": self.earliest_mismatch,
            "unanchored_suffix": self.unanchored_suffix,
            "warnings": self.warnings,
            "anchors": [c.to_json() for c in self.checks],
        }


def verify_against_anchors(blocks: Sequence[Block],
                           anchors: Iterable[WitnessRecord | Anchor]) -> VerificationReport:
    checks: list[AnchorCheck] = []
    highest = 0  # genesis is fixed by the chain parameters
    for a in anchors:
        anchored = a.block_digest if isinstance(a, Anchor) else a.digest
        highest = max(highest, a.height)
        if a.height >= len(blocks):
            checks.append(AnchorCheck(a.height, to_hex(anchored), False, "missing-block"))
        elif blocks[a.height].digest != anchored:
            checks.append(AnchorCheck(a.height, to_hex(anchored), False, "digest-mismatch"))
        else:
            checks.append(AnchorCheck(a.height, to_hex(anchored), True))
    bad = [c.height for c in checks if not c.ok]
    report = VerificationReport(
        ok=not bad,
        checks=checks,
        earliest_mismatch=min(bad) if bad else None,
        unanchored_suffix=max(0, len(blocks) - 1 - highest) if blocks else 0,
    )
    if not checks:
        report.warnings.append("no anchors exist; nothing to verify against")
    elif report.unanchored_suffix:
        report.warnings.append(f"{report.unanchored_suffix} block(s) above the latest anchor are unanchored")
    return report
