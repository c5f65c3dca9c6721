from .crypto import (
    ADDRESS_SIZE,
    DIGEST_SIZE,
    EMPTY_SIGNATURE,
    SCHEME_ED25519,
    ZERO_ADDRESS,
    ZERO_DIGEST,
    Address,
    Digest,
    KeyPair,
    Signature,
    address_of,
    digest,
    from_hex,
    to_hex,
    verify,
)
from .encoding import DecodeError, frame, iter_frames
from .merkle import EMPTY_ROOT, merkle_root
from .types import (
    Block,
    BlockHeader,
    ContractCall,
    Endow,
    GovAction,
    Governance,
    Mint,
    Payload,
    Role,
    Transaction,
    Transfer,
    TxKind,
    canonical_deserialize,
    canonical_serialize,
    make_tx,
    payload_data_size,
)

__all__ = [
    "ADDRESS_SIZE", "DIGEST_SIZE", "EMPTY_SIGNATURE", "SCHEME_ED25519",
    "ZERO_ADDRESS", "ZERO_DIGEST", "Address", "Digest", "KeyPair", "Signature",
    "address_of", "digest", "from_hex", "to_hex", "verify", "DecodeError",
    "frame", "iter_frames", "EMPTY_ROOT", "merkle_root", "Block", "BlockHeader",
    "ContractCall", "Endow", "GovAction", "Governance", "Mint", "Payload", "Role",
    "Transaction", "Transfer", "TxKind", "canonical_deserialize",
    "canonical_serialize", "make_tx", "payload_data_size",
]
