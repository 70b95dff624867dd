"""Value types of the mini IR."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union


@dataclass(frozen=True)
class IntType:
    width: int

    def __str__(self) -> str:
        return f"i{self.width}"


@dataclass(frozen=True)
class IndexType:
    def __str__(self) -> str:
        return "index"


@dataclass(frozen=True)
class PtrType:
    elem: "Type"

    def __str__(self) -> str:
        return f"ptr<{self.elem}>"


@dataclass(frozen=True)
class PartitionDirective:
    kind: str  # cyclic | block | complete
    factor: int = 1

    def __str__(self) -> str:
        if self.kind == "complete":
            return "partition complete"
        return f"partition {self.kind} {self.factor}"


@dataclass(frozen=True)
class ArrayType:
    length: int
    elem: "Type"
    partition: Optional[PartitionDirective] = None

    def __str__(self) -> str:
        return f"array<{self.length} x {self.elem}>"


Type = Union[IntType, IndexType, PtrType, ArrayType]

I1 = IntType(1)
I32 = IntType(32)
I64 = IntType(64)
INDEX = IndexType()

INT_WIDTHS = (1, 32, 64)


def bit_width(t: Type) -> int:
    if isinstance(t, IntType):
        return t.width
    if isinstance(t, (IndexType, PtrType)):
        return 64
    raise TypeError(f"{t} has no scalar width")


def byte_size(t: Type) -> int:
    """Storage size of one element of type ``t`` in flat memory."""
    if isinstance(t, IntType):
        return 1 if t.width == 1 else t.width // 8
    if isinstance(t, (IndexType, PtrType)):
        return 8
    raise TypeError(f"{t} is not a scalar element type")


def is_scalar(t: Type) -> bool:
    return isinstance(t, (IntType, IndexType, PtrType))


def is_integer_like(t: Type) -> bool:
    return isinstance(t, (IntType, IndexType))


def wrap(value: int, t: Type) -> int:
    """Normalize a Python int to the value domain of ``t``.

    i1 is unsigned (0/1), pointers are unsigned 64-bit, everything else is
    two's-complement signed.
    """
    if isinstance(t, IntType) and t.width == 1:
        return value & 1
    if isinstance(t, PtrType):
        return value & ((1 << 64) - 1)
    w = bit_width(t)
    value &= (1 << w) - 1
    if value >= 1 << (w - 1):
        value -= 1 << w
    return value


def to_unsigned(value: int, t: Type) -> int:
    return value & ((1 << bit_width(t)) - 1)


def parse_type(text: str) -> Type:
    """Parse a type spelling such as ``i32``, ``ptr<i32>`` or ``array<4 x i32>``."""
    s = text.strip()
    if s == "index":
        return INDEX
    if s.startswith("ptr<") and s.endswith(">"):
        return PtrType(parse_type(s[4:-1]))
    if s.startswith("array<") and s.endswith(">"):
        inner = s[6:-1]
        count, sep, elem = inner.partition(" x ")
        if not sep:
            raise ValueError(f"bad array type {text!r}")
        return ArrayType(int(count), parse_type(elem))
    if s.startswith("i") and s[1:].isdigit():
        width = int(s[1:])
        if width not in INT_WIDTHS:
            raise ValueError(f"unsupported integer width {width}")
        return IntType(width)
    raise ValueError(f"unknown type {text!r}")
