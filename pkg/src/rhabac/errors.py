"""Exception hierarchy.

Every error carries a stable ``code`` which is what the wire interface
reports; the codes form a closed registry (see ``ERROR_CODES``).
"""

from __future__ import annotations

from typing import Any


class RhabacError(Exception):
    code = "InternalError"

    def __init__(self, message: str = "", **detail: Any):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.detail = detail

    def to_dict(self) -> dict[str, Any]:
        return {"code": self.code, "message": self.message, "detail": self.detail}


def _error(name: str, base: type[RhabacError] = RhabacError) -> type[RhabacError]:
    return type(name, (base,), {"code": name, "__doc__": f"{name} error."})


# model-core
DuplicateId = _error("DuplicateId")
DuplicateAttributeName = _error("DuplicateAttributeName")
InvalidIdentifier = _error("InvalidIdentifier")
InvalidValue = _error("InvalidValue")
UnknownResource = _error("UnknownResource")
UnknownUser = _error("UnknownUser", UnknownResource)
UnknownSubject = _error("UnknownSubject")
NotASubset = _error("NotASubset")

# rdg
SelfLoop = _error("SelfLoop")
CycleDetected = _error("CycleDetected")
MixedKindConflict = _error("MixedKindConflict")
DuplicateEdge = _error("DuplicateEdge")
UnknownEdge = _error("UnknownEdge")
WouldOrphan = _error("WouldOrphan")
CannotDeleteRoot = _error("CannotDeleteRoot")

# condition-lang
ConditionSyntaxError = _error("ConditionSyntaxError")
UnknownNamespace = _error("UnknownNamespace", ConditionSyntaxError)
ConditionTooDeep = _error("ConditionTooDeep", ConditionSyntaxError)

# policy-store
DuplicateAssignment = _error("DuplicateAssignment")
UnknownAssignment = _error("UnknownAssignment")
UnknownScopeResource = _error("UnknownScopeResource")
EmptyScope = _error("EmptyScope")

# persistence
StorageFull = _error("StorageFull")
CorruptLog = _error("CorruptLog")
SnapshotLogMismatch = _error("SnapshotLogMismatch")
SinkUnavailable = _error("SinkUnavailable")

# api-service / cli
UnknownOperation = _error("UnknownOperation")
MalformedPayload = _error("MalformedPayload")
ScriptParseError = _error("ScriptParseError")
InvalidConfig = _error("InvalidConfig")


ERROR_CODES = frozenset(
    cls.code
    for cls in list(globals().values())
    if isinstance(cls, type) and issubclass(cls, RhabacError)
)
