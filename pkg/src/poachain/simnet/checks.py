"""Safety and convergence assertions evaluated over a finished trace."""

from __future__ import annotations

from dataclasses import dataclass, field

from .engine import SimTrace


@dataclass
class SafetyResult:
    passed: bool
    depth: int
    evidence: list[dict] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.passed


@dataclass
class ConvergenceResult:
    passed: bool
    converged_at: float | None = None
    heads: dict[int, list] = field(default_factory=dict)
    detail: str = ""

    def __bool__(self) -> bool:
        return self.passed


def assert_safety(trace: SimTrace, depth: int | None = None) -> SafetyResult:
    """Fail iff two honest nodes (or one node, over time) treat different
    blocks at the same height as final.

    A block is final for a node once its head is ``depth`` blocks above it
    (default: the validator count). Ancestry is rebuilt from the trace's
    produced-block records.
    """
    depth = trace.n_validators if depth is None else depth
    parent_of = {b["digest"]: b["parent"] for b in trace.blocks}
    height_of = {b["digest"]: b["height"] for b in trace.blocks}
    height_of[trace.genesis] = 0

    final: dict[int, tuple[str, int, int]] = {}
    evidence: list[dict] = []
    for node in trace.honest:
        mine: dict[int, str] = {}
        for t, height, head in trace.heads[node]:
            target = height - depth
            if target <= 0:
                continue
            d, h = head, height
            while h > target:
                d = parent_of[d]
                h -= 1
            while h > 0:
                if mine.get(h) == d:
                    break
                prior = final.get(h)
                if prior is not None and prior[0] != d:
                    evidence.append({
                        "height": h,
                        "digest_a": prior[0], "node_a": prior[1], "t_a": prior[2],
                        "digest_b": d, "node_b": node, "t_b": t,
                    })
                elif prior is None:
                    final[h] = (d, node, t)
                mine[h] = d
                d = parent_of[d]
                h -= 1
    return SafetyResult(not evidence, depth, evidence)


def _head_at(history: list[list], t_ms: int, genesis: str) -> tuple[int, str]:
    out = (0, genesis)
    for t, height, digest in history:
        if t > t_ms:
            break
        out = (height, digest)
    return out


def assert_convergence(trace: SimTrace, heal_time: float | None = None,
                       window: int | None = None) -> ConvergenceResult:
    """Pass iff all honest heads coincide at some instant within ``window``
    slots (default ``3n``) after ``heal_time`` (default: last partition end).
    """
    partitions = trace.config.get("partitions", [])
    if heal_time is None:
        if not partitions:
            return ConvergenceResult(True, None, detail="no partition; vacuous pass")
        heal_time = max(p["end"] for p in partitions)
    window = 3 * trace.n_validators if window is None else window
    honest = trace.honest
    end_ms = int(trace.duration * 1000)
    heal_ms = int(heal_time * 1000)

    def heads_at(t_ms: int) -> dict[int, list]:
        return {n: list(_head_at(trace.heads[n], t_ms, trace.genesis)) for n in honest}

    if heal_ms >= end_ms:
        heads = heads_at(end_ms)
        return ConvergenceResult(False, None, heads, "partition does not heal before the trace ends")

    deadline = min(end_ms, heal_ms + window * trace.slot_seconds * 1000)
    current = {n: _head_at(trace.heads[n], heal_ms, trace.genesis)[1] for n in honest}
    if len(set(current.values())) == 1:
        return ConvergenceResult(True, heal_time, heads_at(heal_ms))
    events = sorted(
        (t, n, d) for n in honest for t, _, d in trace.heads[n] if heal_ms < t <= deadline
    )
    i = 0
    while i < len(events):
        t = events[i][0]
        while i < len(events) and events[i][0] == t:
            current[events[i][1]] = events[i][2]
            i += 1
        if len(set(current.values())) == 1:
            return ConvergenceResult(True, t / 1000, heads_at(t))
    return ConvergenceResult(False, None, heads_at(deadline),
                             f"honest heads still differ {window} slots after heal")
