"""Off-chain, content-addressed document storage.

Documents live under ``<root>/<aa>/<bb>/<hex digest>`` and are referenced
on chain by ``store://<hex digest>`` through the DocumentRegistry
contract. Only the digest, link and registration metadata go on chain.
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .core.crypto import Digest, KeyPair, digest, from_hex, to_hex
from .core.types import ContractCall, Transaction, make_tx
from .execution.apply import view_query
from .execution.contracts import DOCUMENT_REGISTRY, LINK_SCHEME, Registration, decode_registration
from .execution.state import WorldState

DEFAULT_MAX_BYTES = 64 * 1024 * 1024


class DocStoreError(Exception):
    code = "DocStoreError"


class TooLarge(DocStoreError):
    code = "TooLarge"


class StorageFailure(DocStoreError):
    code = "StorageFailure"


class NotRegistered(DocStoreError):
    code = "NotRegistered"


class LinkUnresolvable(DocStoreError):
    code = "LinkUnresolvable"


class IntegrityMismatch(DocStoreError):
    code = "IntegrityMismatch"


@dataclass(frozen=True)
class StoredDocument:
    digest: Digest
    link: str
    size_bytes: int
    created_at: int

    def to_json(self) -> dict:
        return {"digest": to_hex(self.digest), "link": self.link,
                "size_bytes": self.size_bytes, "created_at": self.created_at}


def link_for(doc_digest: Digest) -> str:
    return LINK_SCHEME + to_hex(doc_digest)


class DocumentStore:
    def __init__(self, root: str | Path, max_bytes: int = DEFAULT_MAX_BYTES) -> None:
        self.root = Path(root)
        self.max_bytes = max_bytes

    def path_for(self, doc_digest: Digest) -> Path:
        h = to_hex(doc_digest)
        return self.root / h[:2] / h[2:4] / h

    def resolve(self, link: str) -> Path:
        if not link.startswith(LINK_SCHEME):
            raise LinkUnresolvable(f"unsupported link {link!r}")
        try:
            doc_digest = from_hex(link[len(LINK_SCHEME):], 32)
        except ValueError:
            raise LinkUnresolvable(f"malformed link {link!r}") from None
        path = self.path_for(doc_digest)
        if not path.is_file():
            raise LinkUnresolvable(f"nothing stored at {link}")
        return path

    def store(self, data: bytes) -> StoredDocument:
        """Persist ``data``; storing identical bytes again returns the same record."""
        if len(data) > self.max_bytes:
            raise TooLarge(f"{len(data)} bytes exceeds limit of {self.max_bytes}")
        doc_digest = digest(data)
        path = self.path_for(doc_digest)
        if not path.exists():
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
                try:
                    with os.fdopen(fd, "wb") as fh:
                        fh.write(data)
                        fh.flush()
                        os.fsync(fh.fileno())
                    os.replace(tmp, path)
                except BaseException:
                    Path(tmp).unlink(missing_ok=True)
                    raise
            except OSError as exc:
                raise StorageFailure(str(exc)) from exc
        return StoredDocument(doc_digest, link_for(doc_digest), len(data), int(path.stat().st_mtime))

    def read_verified(self, doc_digest: Digest, link: str | None = None) -> bytes:
        path = self.resolve(link or link_for(doc_digest))
        data = path.read_bytes()
        if digest(data) != doc_digest:
            raise IntegrityMismatch(f"stored bytes for {to_hex(doc_digest)} were altered")
        return data

    def fetch_and_verify(self, doc_digest: Digest, state: WorldState) -> bytes:
        """Return the document only if it is registered and its bytes still match."""
        record = registration(state, doc_digest)
        if record is None:
            raise NotRegistered(to_hex(doc_digest))
        return self.read_verified(doc_digest, record.link)


def registration(state: WorldState, doc_digest: Digest) -> Registration | None:
    return decode_registration(view_query(state, DOCUMENT_REGISTRY, doc_digest))


def register_on_chain(doc: StoredDocument, sender: KeyPair, nonce: int,
                      gas_limit: int = 1_000) -> Transaction:
    call = ContractCall(DOCUMENT_REGISTRY, "register", (doc.digest, doc.link.encode()))
    return make_tx(sender, nonce, call, gas_limit)


def on_chain_footprint(state: WorldState, doc_digest: Digest) -> int:
    """Bytes the registry holds for one document (key plus value)."""
    value = view_query(state, DOCUMENT_REGISTRY, doc_digest)
    return 0 if value is None else len(doc_digest) + len(value)

