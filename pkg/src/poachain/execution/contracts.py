"""Built-in contracts and their inspectable manifests.

Contracts are fixed state machines at well-known addresses. Each one is
published with a manifest (behaviour description plus a digest of its
parameters); the manifest digest is committed in the genesis state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..core.crypto import ADDRESS_SIZE, DIGEST_SIZE, Address, Digest, digest, to_hex
from ..core.encoding import DecodeError, Reader, Writer


class ContractRevert(Exception):
    pass


DOCUMENT_REGISTRY: Address = bytes(ADDRESS_SIZE - 1) + b"\x01"
EVENT_LOG: Address = bytes(ADDRESS_SIZE - 1) + b"\x02"
VALIDATOR_GOVERNANCE: Address = bytes(ADDRESS_SIZE - 1) + b"\x03"

LINK_SCHEME = "store://"
MAX_LINK_BYTES = 128
MAX_TOPIC_BYTES = 64
MAX_EVENT_DATA_BYTES = 1024


@dataclass(frozen=True)
class Manifest:
    contract: Address
    kind: str
    description: str
    parameters: dict[str, str] = field(default_factory=dict)

    @property
    def parameter_digest(self) -> Digest:
        return digest(json.dumps(self.parameters, sort_keys=True).encode())

    @property
    def digest(self) -> Digest:
        w = Writer().raw(self.contract, ADDRESS_SIZE).blob(self.kind.encode())
        w.blob(self.description.encode()).raw(self.parameter_digest, DIGEST_SIZE)
        return digest(w.getvalue())

    def to_json(self) -> dict:
        return {
            "id": to_hex(self.contract),
            "kind": self.kind,
            "rules": self.description,
            "parameters": dict(self.parameters),
            "parameter_digest": to_hex(self.parameter_digest),
            "manifest_digest": to_hex(self.digest),
        }


MANIFESTS: dict[Address, Manifest] = {
    DOCUMENT_REGISTRY: Manifest(
        DOCUMENT_REGISTRY,
        "DocumentRegistry",
        "register(digest, link): records digest -> (link, sender, block height, "
        "block timestamp). The digest must be 32 bytes and the link must use the "
        "store:// scheme. A digest can be registered only once; a second "
        "registration reverts. Storage key is the raw digest.",
        {"link_scheme": LINK_SCHEME, "max_link_bytes": str(MAX_LINK_BYTES)},
    ),
    EVENT_LOG: Manifest(
        EVENT_LOG,
        "EventLog",
        "append(topic, data): appends (sender, block height, topic, data) at the "
        "next sequence number. Key b'count' holds the number of entries; entry i "
        "is stored under its 8-byte big-endian index.",
        {"max_topic_bytes": str(MAX_TOPIC_BYTES), "max_data_bytes": str(MAX_EVENT_DATA_BYTES)},
    ),
    VALIDATOR_GOVERNANCE: Manifest(
        VALIDATOR_GOVERNANCE,
        "ValidatorGovernance",
        "Holds the validator set and gas schedule. Changes arrive only as "
        "Governance transactions carrying approvals from a strict majority of "
        "the current validators over the proposal digest; they take effect from "
        "the next block. View keys: validators, gas_schedule, epoch.",
        {"threshold": "strict-majority", "effective": "next-block"},
    ),
}


@dataclass(frozen=True)
class Registration:
    link: str
    sender: Address
    height: int
    timestamp: int

    def encode(self) -> bytes:
        w = Writer().blob(self.link.encode()).raw(self.sender, ADDRESS_SIZE)
        return w.u64(self.height).u64(self.timestamp).getvalue()

    @classmethod
    def decode(cls, data: bytes) -> Registration:
        r = Reader(data)
        out = cls(r.blob().decode(), r.raw(ADDRESS_SIZE), r.u64(), r.u64())
        r.done()
        return out


@dataclass(frozen=True)
class LogEntry:
    sender: Address
    height: int
    topic: bytes
    data: bytes

    def encode(self) -> bytes:
        w = Writer().raw(self.sender, ADDRESS_SIZE).u64(self.height)
        return w.blob(self.topic).blob(self.data).getvalue()

    @classmethod
    def decode(cls, data: bytes) -> LogEntry:
        r = Reader(data)
        out = cls(r.raw(ADDRESS_SIZE), r.u64(), r.blob(), r.blob())
        r.done()
        return out


class CallContext:
    """Staged storage writes for one contract call, metered in gas."""

    def __init__(self, state, contract, sender, height, timestamp, gas_left, write_cost):
        self.state = state
        self.contract = contract
        self.sender = sender
        self.height = height
        self.timestamp = timestamp
        self.gas_left = gas_left
        self.write_cost = write_cost
        self.writes: dict[bytes, bytes] = {}
        self.events: list[tuple[str, dict[str, str]]] = []

    def get(self, key: bytes) -> bytes | None:
        if key in self.writes:
            return self.writes[key]
        return self.state.storage_get(self.contract, key)

    def put(self, key: bytes, value: bytes) -> None:
        if self.gas_left < self.write_cost:
            raise OutOfGas()
        self.gas_left -= self.write_cost
        self.writes[key] = value

    def emit(self, name: str, **data: str) -> None:
        self.events.append((name, data))


class OutOfGas(ContractRevert):
    def __init__(self) -> None:
        super().__init__("out of gas")


def _document_registry(ctx: CallContext, method: str, args: tuple[bytes, ...]) -> None:
    if method != "register":
        raise ContractRevert(f"unknown method {method!r}")
    if len(args) != 2:
        raise ContractRevert("register expects (digest, link)")
    doc_digest, link_raw = args
    if len(doc_digest) != DIGEST_SIZE:
        raise ContractRevert("digest must be 32 bytes")
    try:
        link = link_raw.decode()
    except UnicodeDecodeError:
        raise ContractRevert("link is not utf-8") from None
    if not link.startswith(LINK_SCHEME) or len(link_raw) > MAX_LINK_BYTES:
        raise ContractRevert("link must use the store:// scheme")
    if ctx.get(doc_digest) is not None:
        raise ContractRevert("digest already registered")
    record = Registration(link, ctx.sender, ctx.height, ctx.timestamp)
    ctx.put(doc_digest, record.encode())
    ctx.emit("DocumentRegistered", digest=to_hex(doc_digest), link=link)


def _event_log(ctx: CallContext, method: str, args: tuple[bytes, ...]) -> None:
    if method != "append":
        raise ContractRevert(f"unknown method {method!r}")
    if len(args) != 2:
        raise ContractRevert("append expects (topic, data)")
    topic, data = args
    if len(topic) > MAX_TOPIC_BYTES or len(data) > MAX_EVENT_DATA_BYTES:
        raise ContractRevert("topic or data too large")
    raw_count = ctx.get(b"count")
    count = int.from_bytes(raw_count, "big") if raw_count else 0
    ctx.put(count.to_bytes(8, "big"), LogEntry(ctx.sender, ctx.height, topic, data).encode())
    ctx.put(b"count", (count + 1).to_bytes(8, "big"))
    ctx.emit("EventAppended", index=str(count), topic=to_hex(topic))


def _governance(ctx: CallContext, method: str, args: tuple[bytes, ...]) -> None:
    raise ContractRevert("validator governance changes require a Governance transaction")


HANDLERS = {
    DOCUMENT_REGISTRY: _document_registry,
    EVENT_LOG: _event_log,
    VALIDATOR_GOVERNANCE: _governance,
}


def decode_registration(value: bytes | None) -> Registration | None:
    if value is None:
        return None
    try:
        return Registration.decode(value)
    except (DecodeError, UnicodeDecodeError):
        return None
