"""Deterministic discrete-event driver for a network of ``Node`` cores.

Only time and transport are simulated: nodes exchange real wire-encoded
messages and run the production consensus, execution and anchoring code.
Events fire in ``(time, insertion order)``; all randomness comes from one
seeded ``random.Random``.
"""

from __future__ import annotations

import heapq
import json
import logging
import random
from dataclasses import asdict, dataclass, field
from functools import lru_cache

from ..anchoring import AnchorAgent, AnchorPolicy, MockWitness
from ..consensus.messages import decode_message, encode_message
from ..consensus.node import Broadcast, Node, Send, SetTimer
from ..core.crypto import KeyPair, to_hex
from ..core.types import ContractCall, Role, Transfer, make_tx
from ..execution.contracts import EVENT_LOG
from ..execution.gas import GasSchedule
from ..params import Allocation, ChainParams, ConsensusConfig, Genesis
from .config import SimConfig

log = logging.getLogger(__name__)


@dataclass
class SimTrace:
    config: dict
    duration: float
    genesis: str
    honest: list[int]
    heads: list[list[list]] = field(default_factory=list)  # per node: [t_ms, height, digest]
    blocks: list[dict] = field(default_factory=list)
    rejections: list[dict] = field(default_factory=list)
    equivocations: list[dict] = field(default_factory=list)
    anchors: list[dict] = field(default_factory=list)
    gaps: list[dict] = field(default_factory=list)
    delivered: int = 0
    dropped: int = 0
    final: list[dict] = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    def to_json(self) -> bytes:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def from_json(cls, data: bytes | str) -> SimTrace:
        return cls(**json.loads(data))

    @property
    def slot_seconds(self) -> int:
        return self.config["slot_seconds"]

    @property
    def n_validators(self) -> int:
        return self.config["n_validators"]


@lru_cache(maxsize=8192)
def _decode(data: bytes):
    return decode_message(data)


class Simulation:
    def __init__(self, config: SimConfig) -> None:
        self.config = config
        self.rng = random.Random(config.seed)
        self.now_ms = 0
        self._queue: list[tuple] = []
        self._seq = 0

        n = config.n_validators
        self.keys = [KeyPair.from_seed("sim-validator", config.seed, i) for i in range(n)]
        self.operators = [KeyPair.from_seed("sim-operator", config.seed, i)
                          for i in range(config.n_operators)]
        self.externals = [KeyPair.from_seed("sim-external", config.seed, i).address for i in range(3)]
        allocations = [Allocation(k.address, config.validator_balance, Role.VALIDATOR) for k in self.keys]
        allocations += [Allocation(k.address, config.operator_balance, Role.OPERATOR)
                        for k in self.operators]
        self.params = ChainParams(
            Genesis(tuple(k.address for k in self.keys), tuple(allocations), 0),
            ConsensusConfig(config.slot_seconds, config.out_of_turn_delay, config.block_capacity),
            GasSchedule(),
        )
        self.trace = SimTrace(
            config=config.model_dump(mode="json"),
            duration=0,
            genesis=to_hex(self.params.genesis_block().digest),
            honest=config.honest,
            heads=[[] for _ in range(n)],
        )
        self.nodes = [
            Node(self.params, self.keys[i], node_id=i, behavior=config.byzantine.get(i),
                 listener=self._record)
            for i in range(n)
        ]
        for i, node in enumerate(self.nodes):
            node.peers = [j for j in range(n) if j != i]

        self.witness = MockWitness(
            clock=lambda: self.now_ms / 1000,
            outages=config.witness.outages,
            latency=tuple(x / 1000 for x in config.witness.latency_ms),
            seed=config.seed,
        )
        a = config.anchor
        self.anchor_agent = AnchorAgent(
            AnchorPolicy(a.interval_seconds, a.depth, retry_base_seconds=a.retry_base_seconds),
            self.witness,
        ) if a.enabled else None
        self._op_nonces = [0] * len(self.operators)
        self._op_turn = 0

    # event plumbing

    def _push(self, at_ms: int, kind: str, target: int, payload=None) -> None:
        heapq.heappush(self._queue, (at_ms, self._seq, kind, target, payload))
        self._seq += 1

    def _partitioned(self, a: int, b: int, t_ms: int) -> bool:
        t = t_ms / 1000
        for p in self.config.partitions:
            if p.start <= t < p.end:
                for group in p.groups:
                    if a in group:
                        return b not in group
        return False

    def _latency(self) -> int:
        lat = self.config.latency
        if lat.distribution == "fixed" or lat.max_ms == lat.min_ms:
            return lat.min_ms
        if lat.distribution == "exponential":
            mean = (lat.max_ms - lat.min_ms) / 4 or 1
            return min(lat.max_ms, lat.min_ms + int(self.rng.expovariate(1 / mean)))
        return self.rng.randint(lat.min_ms, lat.max_ms)

    def _send(self, src: int, dst: int, data: bytes) -> None:
        if self.config.loss and self.rng.random() < self.config.loss:
            self.trace.dropped += 1
            return
        if self._partitioned(src, dst, self.now_ms):
            self.trace.dropped += 1
            return
        self._push(self.now_ms + self._latency(), "deliver", dst, (src, data))

    def _dispatch(self, node_id: int, actions) -> None:
        for action in actions:
            if isinstance(action, SetTimer):
                self._push(action.at_ms, "timer", node_id, action.token)
            elif isinstance(action, Broadcast):
                data = encode_message(action.msg)
                for peer in self.nodes[node_id].peers:
                    if peer != action.exclude:
                        self._send(node_id, peer, data)
            elif isinstance(action, Send):
                self._send(node_id, action.peer, encode_message(action.msg))

    def _record(self, kind: str, **data) -> None:
        if kind == "head":
            self.trace.heads[data["node"]].append([data["t"], data["height"], data["digest"]])
        elif kind == "produced":
            self.trace.blocks.append(data)
        elif kind == "rejected":
            self.trace.rejections.append(data)
        elif kind == "equivocation":
            self.trace.equivocations.append(data)

    # workload

    def _inject_tx(self) -> None:
        if not self.operators:
            return
        i = self._op_turn % len(self.operators)
        self._op_turn += 1
        key = self.operators[i]
        if self.rng.random() < 0.1:
            payload = ContractCall(EVENT_LOG, "append", (b"load", self.rng.randbytes(16)))
            gas_limit = 200
        else:
            pool = [k.address for k in self.operators] + [k.address for k in self.keys] + self.externals
            payload = Transfer(self.rng.choice(pool), self.rng.randint(1, 1000))
            gas_limit = 21
        tx = make_tx(key, self._op_nonces[i], payload, gas_limit)
        target = self.rng.choice(self.config.honest or list(range(len(self.nodes))))
        ack, actions = self.nodes[target].submit_tx(tx, self.now_ms)
        if ack.accepted:
            self._op_nonces[i] += 1
        self._dispatch(target, actions)

    def _anchor_tick(self) -> None:
        node = self.nodes[self.config.anchor.node]
        chain = node.view.canonical()
        anchor = self.anchor_agent.maybe_anchor(chain, self.now_ms / 1000,
                                                len(node.view.head_state.validators))
        if anchor is not None:
            self.trace.anchors.append(anchor.to_json())
        gaps = self.anchor_agent.gaps
        if len(gaps) > len(self.trace.gaps):
            self.trace.gaps.extend(g.to_json() for g in gaps[len(self.trace.gaps):])

    # main loop

    def run(self, duration: float) -> SimTrace:
        end_ms = int(duration * 1000)
        for i, node in enumerate(self.nodes):
            self._dispatch(i, node.start(0))
        if self.config.tx_per_second > 0:
            self._push(0, "tx", -1)
        if self.anchor_agent is not None:
            self._push(1000, "anchor", -1)
        tx_gap = max(1, round(1000 / self.config.tx_per_second)) if self.config.tx_per_second else 0

        while self._queue and self._queue[0][0] <= end_ms:
            at, _, kind, target, payload = heapq.heappop(self._queue)
            self.now_ms = at
            if kind == "deliver":
                src, data = payload
                if self._partitioned(src, target, at):
                    self.trace.dropped += 1
                    continue
                self.trace.delivered += 1
                node = self.nodes[target]
                self._dispatch(target, node.on_message(_decode(data), src, at))
            elif kind == "timer":
                self._dispatch(target, self.nodes[target].on_timer(payload, at))
            elif kind == "tx":
                self._inject_tx()
                self._push(at + tx_gap, "tx", -1)
            elif kind == "anchor":
                self._anchor_tick()
                self._push(at + 1000, "anchor", -1)
        self.now_ms = end_ms
        self._finish(duration)
        return self.trace

    def _finish(self, duration: float) -> None:
        t = self.trace
        t.duration = duration
        for i, node in enumerate(self.nodes):
            state = node.view.head_state
            head = node.view.head_entry
            t.final.append({
                "node": i,
                "height": head.height,
                "digest": to_hex(head.digest),
                "balance_sum": str(state.balance_sum()),
                "total_minted": str(state.total_minted),
                "flagged": sorted(to_hex(a) for a in node.view.flagged),
            })
        ref = self.nodes[self.config.honest[0] if self.config.honest else 0].view
        chain = ref.canonical()
        txs = sum(len(b.txs) for b in chain)
        t.stats = {
            "canonical_height": len(chain) - 1,
            "canonical_txs": txs,
            "blocks_per_second": round((len(chain) - 1) / duration, 6) if duration else 0.0,
            "tx_per_second": round(txs / duration, 6) if duration else 0.0,
            "produced_blocks": len(t.blocks),
            "in_turn_blocks": sum(1 for b in chain[1:] if b.header.weight == 2),
        }


def run(config: SimConfig, duration: float) -> SimTrace:
    return Simulation(config).run(duration)
