"""Domain vocabulary: resources, attributes, subjects, permissions, policies."""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Union

from . import errors

ROOT = "root"

AttrScalar = Union[str, int, float, bool]

IDENTIFIER_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.-]*\Z")
OPERATION_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_-]*(\.[A-Za-z_][A-Za-z0-9_-]*)*\Z")

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1


class ResourceKind(str, enum.Enum):
    USER = "user"
    OBJECT = "object"


class DependencyKind(str, enum.Enum):
    AGGREGATION = "aggregation"
    COMPOSITION = "composition"


class PermissionType(str, enum.Enum):
    ALLOW = "allow"
    DENY = "deny"


class Decision(str, enum.Enum):
    ALLOWED = "allowed"
    DENIED = "denied"
    UNDEFINED = "undefined"


def _coerce_enum(enum_cls, value, what):
    if isinstance(value, enum_cls):
        return value
    try:
        return enum_cls(str(value).lower())
    except ValueError:
        raise errors.InvalidValue(f"invalid {what}: {value!r}", value=value) from None


def resource_kind(value) -> ResourceKind:
    return _coerce_enum(ResourceKind, value, "resource kind")


def dependency_kind(value) -> DependencyKind:
    return _coerce_enum(DependencyKind, value, "dependency kind")


def permission_type(value) -> PermissionType:
    return _coerce_enum(PermissionType, value, "permission type")


def check_resource_id(value: Any) -> str:
    if not isinstance(value, str) or not value or value != value.strip():
        raise errors.InvalidIdentifier(f"invalid resource id: {value!r}", value=value)
    return value


def check_attribute_name(name: Any) -> str:
    if not isinstance(name, str) or not IDENTIFIER_RE.match(name):
        raise errors.InvalidIdentifier(f"invalid attribute name: {name!r}", name=name)
    return name


def check_operation(op: Any) -> str:
    if not isinstance(op, str) or not OPERATION_RE.match(op):
        raise errors.InvalidIdentifier(f"invalid operation name: {op!r}", operation=op)
    return op


def check_attribute_value(value: Any) -> AttrScalar:
    """Validate an attribute value against the four supported types."""
    if isinstance(value, bool) or isinstance(value, str):
        return value
    if isinstance(value, int):
        if not INT64_MIN <= value <= INT64_MAX:
            raise errors.InvalidValue("integer attribute out of 64-bit range", value=value)
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise errors.InvalidValue("non-finite float attribute", value=repr(value))
        return value
    raise errors.InvalidValue(f"unsupported attribute value type: {type(value).__name__}")


@dataclass(frozen=True)
class AttributeValue:
    name: str
    value: AttrScalar

    def __post_init__(self):
        check_attribute_name(self.name)
        check_attribute_value(self.value)


AttributeInput = Union[Mapping[str, Any], Iterable[Any], None]


def normalize_attributes(attrs: AttributeInput) -> dict[str, AttrScalar]:
    """Turn a mapping, a list of ``AttributeValue`` or a list of pairs into a dict.

    Duplicate names raise ``DuplicateAttributeName``; a mapping cannot carry
    duplicates, so only the sequence forms are checked.
    """
    if attrs is None:
        return {}
    if isinstance(attrs, Mapping):
        items = list(attrs.items())
    else:
        items = []
        for item in attrs:
            if isinstance(item, AttributeValue):
                items.append((item.name, item.value))
            elif isinstance(item, Mapping) and set(item) == {"name", "value"}:
                items.append((item["name"], item["value"]))
            else:
                try:
                    name, value = item
                except (TypeError, ValueError):
                    raise errors.InvalidValue(f"bad attribute entry: {item!r}") from None
                items.append((name, value))
    out: dict[str, AttrScalar] = {}
    for name, value in items:
        check_attribute_name(name)
        if name in out:
            raise errors.DuplicateAttributeName(f"duplicate attribute name {name!r}", name=name)
        out[name] = check_attribute_value(value)
    return out


@dataclass
class Resource:
    id: str
    kind: ResourceKind
    attributes: dict[str, AttrScalar] = field(default_factory=dict)

    @property
    def is_user(self) -> bool:
        return self.kind is ResourceKind.USER

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "kind": self.kind.value, "attributes": dict(self.attributes)}


@dataclass
class Subject:
    """A session-like proxy of a user.

    ``attributes`` and ``parents`` are frozen at registration; only the
    request attributes change afterwards.
    """

    id: str
    user: str
    attributes: dict[str, AttrScalar]
    parents: frozenset[str]
    request_attributes: dict[str, AttrScalar] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "user": self.user,
            "attributes": dict(self.attributes),
            "parents": sorted(self.parents),
            "request_attributes": dict(self.request_attributes),
        }


@dataclass(frozen=True)
class Permission:
    operation: str
    permission_type: PermissionType


@dataclass(frozen=True)
class Policy:
    permission: Permission
    condition: Any  # condition.Condition

    @property
    def operation(self) -> str:
        return self.permission.operation

    @property
    def permission_type(self) -> PermissionType:
        return self.permission.permission_type


@dataclass(frozen=True)
class PolicyAssignment:
    id: str
    policy: Policy
    subject_scope: frozenset[str]
    object_scope: frozenset[str]

    @property
    def operation(self) -> str:
        return self.policy.operation

    @property
    def permission_type(self) -> PermissionType:
        return self.policy.permission_type

    @property
    def key(self) -> tuple:
        """Uniqueness key: the condition is deliberately not part of it."""
        return (
            self.operation,
            self.permission_type.value,
            tuple(sorted(self.subject_scope)),
            tuple(sorted(self.object_scope)),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "operation": self.operation,
            "permission_type": self.permission_type.value,
            "condition": self.policy.condition.canonical,
            "subject_scope": sorted(self.subject_scope),
            "object_scope": sorted(self.object_scope),
        }
