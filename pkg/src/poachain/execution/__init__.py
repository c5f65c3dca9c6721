from .apply import (
    ALLOWED_KINDS,
    BadNonce,
    BadSignature,
    BlockContext,
    BlockResult,
    DuplicateApproval,
    Event,
    InsufficientApprovals,
    InsufficientBalance,
    InsufficientGasFunds,
    IntrinsicGasTooLow,
    InvalidBlockTx,
    InvalidGovernance,
    Receipt,
    SupplyOverflow,
    TxRejected,
    Unauthorized,
    UnknownContract,
    apply_in_place,
    apply_transaction,
    endow,
    execute_block,
    governance_change,
    mint,
    precheck,
    proposal_digest,
    view_query,
)
from .contracts import (
    DOCUMENT_REGISTRY,
    EVENT_LOG,
    MANIFESTS,
    VALIDATOR_GOVERNANCE,
    ContractRevert,
    LogEntry,
    Manifest,
    Registration,
    decode_registration,
)
from .gas import GAS_PRICE, VIEW_QUERY_COST, GasSchedule
from .state import Account, WorldState

__all__ = [
    "ALLOWED_KINDS", "BadNonce", "BadSignature", "BlockContext", "BlockResult",
    "DuplicateApproval", "Event", "InsufficientApprovals", "InsufficientBalance",
    "InsufficientGasFunds", "IntrinsicGasTooLow", "InvalidBlockTx", "InvalidGovernance",
    "Receipt", "SupplyOverflow", "TxRejected", "Unauthorized", "UnknownContract",
    "apply_in_place", "apply_transaction", "endow", "execute_block",
    "governance_change", "mint", "precheck", "proposal_digest", "view_query",
    "DOCUMENT_REGISTRY", "EVENT_LOG", "MANIFESTS", "VALIDATOR_GOVERNANCE",
    "ContractRevert", "LogEntry", "Manifest", "Registration", "decode_registration",
    "GAS_PRICE", "VIEW_QUERY_COST", "GasSchedule", "Account", "WorldState"
]
