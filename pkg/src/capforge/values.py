"""Condition/action literals: parsing, type conformance and ordering keys.

Values keep their raw document form (``str`` or ``int``) so that the same
literal is judged identically by :func:`conforms` and by the JSON Schema the
abstract-language generator emits.  Three string shapes are read
structurally regardless of the capability they appear in:

* dotted quads (``10.0.0.1``) must be valid IPv4 addresses,
* CIDR blocks (``10.0.0.0/24``) become a :class:`Range` remembering its text,
* ``lo-hi`` digit pairs (``1000-2000``) become a numeric :class:`Range`.

Consequently string-typed capabilities never accept literals of those shapes.
Regular expressions use Python's :mod:`re` dialect with unanchored search.
"""

from __future__ import annotations

import ipaddress
import re
from dataclasses import dataclass
from typing import Union

from .errors import LiteralTypeError

VALUE_TYPES = (
    "ipv4-address",
    "port-number",
    "protocol-name",
    "interface-name",
    "string-pattern",
    "integer",
    "enum",
    "none",
)
ORDERED_TYPES = frozenset({"ipv4-address", "port-number", "integer"})
STRING_TYPES = frozenset({"protocol-name", "interface-name", "string-pattern"})

# Shared between the literal reader and the emitted schemas.
OCTET = r"(25[0-5]|2[0-4][0-9]|1[0-9]{2}|[1-9]?[0-9])"
IPV4_RE = rf"{OCTET}(\.{OCTET}){{3}}"
PREFIX_RE = r"([0-9]|[12][0-9]|3[0-2])"
PORT_RE = r"(6553[0-5]|655[0-2][0-9]|65[0-4][0-9]{2}|6[0-4][0-9]{3}|[1-5][0-9]{4}|[1-9][0-9]{0,3}|0)"
NUM_RE = r"(0|[1-9][0-9]*)"
PROTOCOL_NAME_RE = r"^[A-Za-z][A-Za-z0-9_-]*$"
INTERFACE_NAME_RE = r"^[A-Za-z][A-Za-z0-9_.:-]{0,14}$"
# Anything shaped like an address, CIDR block or numeric range.
STRUCTURED_SHAPE_RE = r"^[0-9]+(\.[0-9]+){3}(/[0-9]+)?$|^[0-9]+-[0-9]+$"

_QUAD = re.compile(r"^[0-9]+(\.[0-9]+){3}$")
_CIDR = re.compile(r"^([0-9]+(?:\.[0-9]+){3})/([0-9]+)$")
_NUM_RANGE = re.compile(rf"^{NUM_RE}-{NUM_RE}$")
_STRUCTURED = re.compile(STRUCTURED_SHAPE_RE)

Literal = Union[str, int]


@dataclass(frozen=True)
class Single:
    value: Literal

    def render(self, range_separator: str = "-") -> str:
        return str(self.value)

    def to_doc(self) -> Literal:
        return self.value


@dataclass(frozen=True)
class Range:
    """Inclusive range; ``text`` keeps the CIDR or shorthand spelling it came from."""

    lo: int | ipaddress.IPv4Address
    hi: int | ipaddress.IPv4Address
    text: str | None = None

    def render(self, range_separator: str = "-") -> str:
        if self.text is not None and "/" in self.text:
            return self.text
        return f"{self.lo}{range_separator}{self.hi}"

    def to_doc(self) -> object:
        if self.text is not None:
            return self.text
        lo = str(self.lo) if isinstance(self.lo, ipaddress.IPv4Address) else self.lo
        hi = str(self.hi) if isinstance(self.hi, ipaddress.IPv4Address) else self.hi
        return {"range": [lo, hi]}

    @property
    def is_ipv4(self) -> bool:
        return isinstance(self.lo, ipaddress.IPv4Address)

    def size(self) -> int:
        return int(self.hi) - int(self.lo) + 1


Value = Union[Single, Range]


def _bound(raw: object, where: str) -> int | ipaddress.IPv4Address:
    if isinstance(raw, bool):
        raise LiteralTypeError(f"{where}: boolean is not a range bound")
    if isinstance(raw, int):
        return raw
    if isinstance(raw, str) and _QUAD.match(raw):
        return _ipv4(raw, where)
    raise LiteralTypeError(f"{where}: range bound {raw!r} must be an integer or IPv4 address")


def _ipv4(text: str, where: str) -> ipaddress.IPv4Address:
    try:
        return ipaddress.IPv4Address(text)
    except ValueError:
        raise LiteralTypeError(f"{where}: {text!r} is not a valid IPv4 address") from None


def parse_value(raw: object, where: str = "value") -> Value:
    """Read one document literal; raises :class:`LiteralTypeError` on malformed input."""
    if isinstance(raw, bool) or raw is None or isinstance(raw, float):
        raise LiteralTypeError(f"{where}: {raw!r} is not a valid literal")
    if isinstance(raw, int):
        return Single(raw)
    if isinstance(raw, dict):
        if set(raw) != {"range"} or not isinstance(raw["range"], list) or len(raw["range"]) != 2:
            raise LiteralTypeError(f"{where}: range must be {{'range': [lo, hi]}}")
        lo = _bound(raw["range"][0], where)
        hi = _bound(raw["range"][1], where)
        if type(lo) is not type(hi):
            raise LiteralTypeError(f"{where}: range bounds have different types")
        if hi < lo:  # type: ignore[operator]
            raise LiteralTypeError(f"{where}: range upper bound {hi} is below lower bound {lo}")
        return Range(lo, hi)
    if not isinstance(raw, str):
        raise LiteralTypeError(f"{where}: {raw!r} is not a valid literal")
    if _QUAD.match(raw):
        _ipv4(raw, where)
        return Single(raw)
    m = _CIDR.match(raw)
    if m:
        base = _ipv4(m.group(1), where)
        prefix = int(m.group(2))
        if prefix > 32:
            raise LiteralTypeError(f"{where}: CIDR prefix /{prefix} exceeds 32")
        net = ipaddress.IPv4Network(f"{base}/{prefix}", strict=False)
        return Range(net.network_address, net.broadcast_address, text=str(net))
    m = _NUM_RANGE.match(raw)
    if m:
        lo, hi = int(m.group(1)), int(m.group(2))
        if hi < lo:
            raise LiteralTypeError(f"{where}: range {raw!r} has hi < lo")
        return Range(lo, hi, text=raw)
    return Single(raw)


def looks_structured(text: str) -> bool:
    return bool(_STRUCTURED.match(text))


def single_conforms(raw: Literal, value_type: str, enum_values: tuple[str, ...] = ()) -> bool:
    if value_type == "ipv4-address":
        if not isinstance(raw, str) or not _QUAD.match(raw):
            return False
        try:
            ipaddress.IPv4Address(raw)
        except ValueError:
            return False
        return True
    if value_type == "port-number":
        return isinstance(raw, int) and 0 <= raw <= 65535
    if value_type == "integer":
        return isinstance(raw, int)
    if value_type == "enum":
        return isinstance(raw, str) and raw in enum_values
    if not isinstance(raw, str) or looks_structured(raw):
        return False
    if value_type == "protocol-name":
        return bool(re.match(PROTOCOL_NAME_RE, raw))
    if value_type == "interface-name":
        return bool(re.match(INTERFACE_NAME_RE, raw))
    if value_type == "string-pattern":
        return len(raw) > 0
    return False


def range_conforms(value: Range, value_type: str) -> bool:
    if value_type == "ipv4-address":
        return value.is_ipv4
    if value.is_ipv4:
        return False
    if value_type == "port-number":
        return 0 <= int(value.lo) and int(value.hi) <= 65535
    return value_type == "integer"


def key(raw: object) -> object:
    """Comparison key of a packet or condition literal."""
    if isinstance(raw, str) and _QUAD.match(raw):
        return ipaddress.IPv4Address(raw)
    return raw


def value_matches(value: Value, packet_value: object) -> bool:
    k = key(packet_value)
    if isinstance(value, Range):
        if type(k) is not type(value.lo):
            return False
        return value.lo <= k <= value.hi  # type: ignore[operator]
    return key(value.value) == k


def expand_range(value: Range) -> list[Single]:
    """Enumerate a range as single literals (used by tests and small expansions)."""
    if value.is_ipv4:
        return [Single(str(ipaddress.IPv4Address(i))) for i in range(int(value.lo), int(value.hi) + 1)]
    return [Single(i) for i in range(int(value.lo), int(value.hi) + 1)]
