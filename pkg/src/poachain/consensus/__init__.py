from .chain_view import AcceptResult, ChainView, Entry, accept_block, fork_choice
from .messages import (
    BlockResponse,
    NewBlock,
    NewTx,
    RequestBlock,
    TxAck,
    decode_message,
    encode_message,
)
from .node import (
    Behavior,
    Broadcast,
    Node,
    Send,
    SetTimer,
    build_block,
    proposal_time,
    propose_block,
)
from .rules import (
    IN_TURN_WEIGHT,
    OUT_OF_TURN_WEIGHT,
    check_block,
    expected_weight,
    may_propose,
    recent_window,
    scheduled_proposer,
)

__all__ = [
    "AcceptResult", "ChainView", "Entry", "accept_block", "fork_choice",
    "BlockResponse", "NewBlock", "NewTx", "RequestBlock", "TxAck", "decode_message",
    "encode_message", "Behavior", "Broadcast", "Node", "Send", "SetTimer",
    "build_block", "proposal_time", "propose_block", "IN_TURN_WEIGHT",
    "OUT_OF_TURN_WEIGHT", "check_block", "expected_weight", "may_propose",
    "recent_window", "scheduled_proposer"
]
