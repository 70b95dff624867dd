"""Region-based SSA mini IR: data model, text format, verifier, interpreter."""

from .core import (
    BINARY_OPS,
    HARDWARE_OPS,
    Block,
    Function,
    Operation,
    Region,
    make_for,
    root_kind,
    trip_count,
    walk_ops,
)
from .interp import (
    InterpError,
    MachineState,
    OutOfBounds,
    StepLimitExceeded,
    UninitializedRead,
    interpret,
)
from .parser import ParseError, Parser, parse
from .printer import print_function
from .structural import structurally_equal
from .types import (
    I1,
    I32,
    I64,
    INDEX,
    ArrayType,
    IndexType,
    IntType,
    PartitionDirective,
    PtrType,
    Type,
    byte_size,
    parse_type,
    wrap,
)
from .verifier import VerifyError, verify, verify_or_raise

__all__ = [
    "BINARY_OPS",
    "HARDWARE_OPS",
    "Block",
    "Function",
    "Operation",
    "Region",
    "make_for",
    "root_kind",
    "trip_count",
    "walk_ops",
    "InterpError",
    "MachineState",
    "OutOfBounds",
    "StepLimitExceeded",
    "UninitializedRead",
    "interpret",
    "ParseError",
    "Parser",
    "parse",
    "print_function",
    "structurally_equal",
    "I1",
    "I32",
    "I64",
    "INDEX",
    "ArrayType",
    "IndexType",
    "IntType",
    "PartitionDirective",
    "PtrType",
    "Type",
    "byte_size",
    "parse_type",
    "wrap",
    "VerifyError",
    "verify",
    "verify_or_raise",
]
