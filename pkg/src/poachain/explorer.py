"""Read-only HTTP explorer.

Every route is a GET served from an immutable ``ChainSnapshot`` taken at
a block boundary, so no request can change node state. Digests and
addresses are lowercase hex; balances and amounts are decimal strings
(they can exceed 2**53). Every JSON body carries ``head_height``.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable, Iterator
from dataclasses import dataclass, field

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse, Response, StreamingResponse

from .anchoring import Anchor
from .consensus.chain_view import ChainView
from .core.crypto import Digest, Signature, from_hex, to_hex
from .core.encoding import frame
from .core.types import (
    Block,
    ContractCall,
    Endow,
    Governance,
    Mint,
    Transaction,
    Transfer,
)
from .docstore import DocStoreError, DocumentStore, IntegrityMismatch, NotRegistered
from .execution.apply import Receipt, UnknownContract, view_query
from .execution.contracts import MANIFESTS
from .execution.state import WorldState


@dataclass(frozen=True)
class ChainSnapshot:
    blocks: tuple[Block, ...]
    receipts: tuple[tuple[Receipt, ...], ...]
    state: WorldState
    known: dict[Digest, Block]
    tips: tuple[Digest, ...]
    anchors: tuple[Anchor, ...] = ()
    tx_index: dict[Digest, tuple[int, int]] = field(default_factory=dict)

    @property
    def head_height(self) -> int:
        return len(self.blocks) - 1

    @property
    def finality_depth(self) -> int:
        return len(self.state.validators)

    @classmethod
    def from_view(cls, view: ChainView, anchors: Iterable[Anchor] = ()) -> ChainSnapshot:
        chain = tuple(view.canonical())
        receipts = tuple(tuple(view.entries[b.digest].receipts) for b in chain)
        index = {tx.digest: (b.height, i) for b in chain for i, tx in enumerate(b.txs)}
        return cls(
            blocks=chain,
            receipts=receipts,
            state=view.head_state,
            known={d: e.block for d, e in view.entries.items()},
            tips=tuple(e.digest for e in view.tips()),
            anchors=tuple(anchors),
            tx_index=index,
        )


def signature_json(sig: Signature) -> dict:
    return {"scheme": sig.scheme, "public_key": to_hex(sig.public_key), "value": to_hex(sig.value)}


def payload_json(tx: Transaction) -> dict:
    p = tx.payload
    if isinstance(p, Transfer):
        return {"to": to_hex(p.to), "amount": str(p.amount)}
    if isinstance(p, Mint):
        return {"beneficiary": to_hex(p.beneficiary), "amount": str(p.amount)}
    if isinstance(p, Endow):
        return {"operator": to_hex(p.operator), "amount": str(p.amount)}
    if isinstance(p, ContractCall):
        return {"contract": to_hex(p.contract), "method": p.method, "args": [to_hex(a) for a in p.args]}
    assert isinstance(p, Governance)
    return {"action": p.action.name.lower(), "subject": to_hex(p.subject),
            "approvals": [signature_json(s) for s in p.approvals]}


def counterparty(tx: Transaction) -> bytes | None:
    p = tx.payload
    if isinstance(p, Transfer):
        return p.to
    if isinstance(p, Mint):
        return p.beneficiary
    if isinstance(p, Endow):
        return p.operator
    return None


def tx_json(tx: Transaction) -> dict:
    return {
        "digest": to_hex(tx.digest),
        "sender": to_hex(tx.sender),
        "nonce": tx.nonce,
        "kind": tx.kind.name.lower(),
        "gas_limit": tx.gas_limit,
        "payload": payload_json(tx),
        "signature": signature_json(tx.signature),
    }


def block_json(snap: ChainSnapshot, block: Block) -> dict:
    h = block.header
    receipts = snap.receipts[h.height]
    return {
        "head_height": snap.head_height,
        "height": h.height,
        "digest": to_hex(block.digest),
        "parent": to_hex(h.parent),
        "state_root": to_hex(h.state_root),
        "tx_root": to_hex(h.tx_root),
        "proposer": to_hex(h.proposer),
        "timestamp": h.timestamp,
        "weight": h.weight,
        "signature": signature_json(h.signature),
        "txs": [to_hex(tx.digest) for tx in block.txs],
        "receipts": [{"status": r.status, "gas_used": r.gas_used} for r in receipts],
        "final": snap.head_height - h.height >= snap.finality_depth,
        "canonical": True,
    }


def _error(status: int, snap: ChainSnapshot, error: str, **extra) -> JSONResponse:
    return JSONResponse({"error": error, "head_height": snap.head_height, **extra}, status_code=status)


def _parse_hex(text: str, size: int) -> bytes | None:
    try:
        return from_hex(text, size)
    except ValueError:
        return None


def create_app(
    source: Callable[[], ChainSnapshot],
    store: DocumentStore | None = None,
    allow: Iterable[str] | None = None,
) -> FastAPI:
    """Build the explorer app; ``source`` returns the latest snapshot."""
    app = FastAPI(title="poachain explorer", docs_url=None, redoc_url=None, openapi_url=None)
    allowed = set(allow) if allow is not None else None

    if allowed is not None:
        @app.middleware("http")
        async def allow_list(request: Request, call_next):
            host = request.client.host if request.client else ""
            if host not in allowed:
                return JSONResponse({"error": "forbidden"}, status_code=403)
            return await call_next(request)

    @app.get("/status")
    def status():
        snap = source()
        head = snap.blocks[-1]
        return {
            "head_height": snap.head_height,
            "head": to_hex(head.digest),
            "validators": [to_hex(v) for v in snap.state.validators],
            "finality_depth": snap.finality_depth,
            "state_root": to_hex(snap.state.state_root()),
            "total_minted": str(snap.state.total_minted),
            "anchors": len(snap.anchors),
        }

    @app.get("/blocks/{ref}")
    def get_block(ref: str):
        snap = source()
        if ref == "latest":
            return block_json(snap, snap.blocks[-1])
        if ref.isdigit():
            height = int(ref)
            if height > snap.head_height:
                return _error(404, snap, "unknown-block")
            return block_json(snap, snap.blocks[height])
        d = _parse_hex(ref, 32)
        if d is None or d not in snap.known:
            return _error(404, snap, "unknown-block")
        block = snap.known[d]
        if block.height <= snap.head_height and snap.blocks[block.height].digest == d:
            return block_json(snap, block)
        return _error(
            409, snap, "not-canonical",
            digest=to_hex(d), height=block.height,
            canonical_at_height=(to_hex(snap.blocks[block.height].digest)
                                 if block.height <= snap.head_height else None),
            head=to_hex(snap.blocks[-1].digest),
            competing_tips=[to_hex(t) for t in snap.tips if t != snap.blocks[-1].digest],
        )

    @app.get("/txs/{tx_digest}")
    def get_tx(tx_digest: str):
        snap = source()
        d = _parse_hex(tx_digest, 32)
        if d is None or d not in snap.tx_index:
            return _error(404, snap, "unknown-tx")
        height, i = snap.tx_index[d]
        block = snap.blocks[height]
        return {
            "head_height": snap.head_height,
            **tx_json(block.txs[i]),
            "block_height": height,
            "block_digest": to_hex(block.digest),
            "receipt": snap.receipts[height][i].to_json(),
        }

    @app.get("/addresses/{addr}")
    def get_address(addr: str, page: int = Query(0, ge=0), page_size: int = Query(10, ge=1, le=100)):
        snap = source()
        a = _parse_hex(addr, 20)
        if a is None:
            return _error(400, snap, "malformed-address")
        acct = snap.state.account(a)
        history = []
        for block in snap.blocks:
            for tx in block.txs:
                if tx.sender == a:
                    history.append({"tx": to_hex(tx.digest), "height": block.height, "direction": "sent"})
                elif counterparty(tx) == a:
                    history.append({"tx": to_hex(tx.digest), "height": block.height, "direction": "received"})
        start = page * page_size
        return {
            "head_height": snap.head_height,
            "address": to_hex(a),
            "balance": str(acct.balance),
            "nonce": acct.nonce,
            "role": acct.role.name.lower(),
            "history": {
                "page": page,
                "page_size": page_size,
                "total": len(history),
                "items": history[start:start + page_size],
            },
        }

    @app.get("/contracts/{contract_id}")
    def get_contract(contract_id: str):
        snap = source()
        c = _parse_hex(contract_id, 20)
        if c is None or c not in MANIFESTS:
            return _error(404, snap, "unknown-contract")
        manifest = MANIFESTS[c]
        return {
            "head_height": snap.head_height,
            **manifest.to_json(),
            "committed_manifest_digest": to_hex(snap.state.manifests[c]),
            "storage_entries": len(snap.state.storage_items(c)),
        }

    @app.get("/contracts/{contract_id}/storage/{key}")
    def get_storage(contract_id: str, key: str):
        snap = source()
        c = _parse_hex(contract_id, 20)
        if c is None:
            return _error(404, snap, "unknown-contract")
        # hex keys address binary storage; anything else is taken as text
        try:
            raw_key = bytes.fromhex(key.removeprefix("0x"))
        except ValueError:
            raw_key = key.encode()
        try:
            value = view_query(snap.state, c, raw_key)
        except UnknownContract:
            return _error(404, snap, "unknown-contract")
        return {"head_height": snap.head_height, "key": to_hex(raw_key),
                "value": None if value is None else to_hex(value)}

    @app.get("/anchors")
    def get_anchors():
        snap = source()
        return {"head_height": snap.head_height, "anchors": [a.to_json() for a in snap.anchors]}

    @app.get("/export")
    def export(from_: int = Query(0, alias="from", ge=0)):
        snap = source()

        def stream() -> Iterator[bytes]:
            for block in snap.blocks[from_:]:
                yield frame(block.encode())

        return StreamingResponse(stream(), media_type="application/octet-stream",
                                 headers={"X-Head-Height": str(snap.head_height)})

    @app.get("/documents/{doc_digest}")
    def get_document(doc_digest: str):
        snap = source()
        d = _parse_hex(doc_digest, 32)
        if store is None or d is None:
            return _error(404, snap, "unknown-document")
        try:
            data = store.fetch_and_verify(d, snap.state)
        except NotRegistered:
            return _error(404, snap, "NotRegistered")
        except IntegrityMismatch:
            return _error(502, snap, "IntegrityMismatch")
        except DocStoreError as exc:
            return _error(404, snap, exc.code)
        return Response(data, media_type="application/octet-stream",
                        headers={"X-Head-Height": str(snap.head_height), "X-Digest": to_hex(d)})

    return app
