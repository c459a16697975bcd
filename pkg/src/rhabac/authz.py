"""Decision pipeline and conflict resolution.

Effective assignments are evaluated once; undefined results are dropped,
then only the maximum subject priority survives, then only the maximum
object priority; any deny among the survivors denies.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Optional, Sequence

from .condition import EvaluationContext, evaluate
from .graph import ResourceDependencyGraph, scope_priority
from .model import Decision, PermissionType, PolicyAssignment, Subject
from .store import EffectiveAssignment

STAGE_CONDITION = "condition false"
STAGE_SUBJECT = "max subject priority"
STAGE_OBJECT = "max object priority"


@dataclass(frozen=True)
class EvaluatedAssignment:
    assignment: PolicyAssignment
    decision: Decision
    subject_priority: int
    object_priority: int
    eliminated_at: Optional[str] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "assignment": self.assignment.id,
            "operation": self.assignment.operation,
            "permission_type": self.assignment.permission_type.value,
            "decision": self.decision.value,
            "subject_priority": self.subject_priority,
            "object_priority": self.object_priority,
            "eliminated_at": self.eliminated_at,
        }


@dataclass(frozen=True)
class AuthorizationResult:
    decision: Decision
    default_applied: Optional[PermissionType] = None
    trace: Optional[tuple[EvaluatedAssignment, ...]] = None

    @property
    def allowed(self) -> bool:
        """Final yes/no after the configured default is applied to Undefined."""
        if self.decision is Decision.UNDEFINED:
            return self.default_applied is PermissionType.ALLOW
        return self.decision is Decision.ALLOWED

    def to_dict(self, with_trace: bool = False) -> dict[str, Any]:
        out: dict[str, Any] = {
            "decision": self.decision.value,
            "default_applied": self.default_applied.value if self.default_applied else None,
        }
        if with_trace:
            out["trace"] = [entry.to_dict() for entry in self.trace or ()]
        return out


def pol_eval(
    assignment: PolicyAssignment,
    subject_attrs: Mapping[str, Any],
    object_attrs: Mapping[str, Any],
    request_attrs: Mapping[str, Any],
) -> Decision:
    ctx = EvaluationContext(subject_attrs, object_attrs, request_attrs)
    if not evaluate(assignment.policy.condition, ctx):
        return Decision.UNDEFINED
    if assignment.permission_type is PermissionType.ALLOW:
        return Decision.ALLOWED
    return Decision.DENIED


def subject_priority(
    graph: ResourceDependencyGraph, subject: Subject, assignment: PolicyAssignment
) -> Optional[int]:
    """max(-dist(scope element, user)) over the subject scope, from scratch."""
    return scope_priority(graph.distances_to(subject.user), assignment.subject_scope)


def object_priority(
    graph: ResourceDependencyGraph, obj: str, assignment: PolicyAssignment
) -> Optional[int]:
    return scope_priority(graph.distances_to(obj), assignment.object_scope)


def resolve(
    effective: Sequence[EffectiveAssignment],
    subject_attrs: Mapping[str, Any],
    object_attrs: Mapping[str, Any],
    request_attrs: Mapping[str, Any],
) -> tuple[Decision, tuple[EvaluatedAssignment, ...]]:
    """Run the conflict-resolution stages; returns the raw decision and a trace."""
    evaluated = [
        (e, pol_eval(e.assignment, subject_attrs, object_attrs, request_attrs))
        for e in effective
    ]
    defined = [(e, d) for e, d in evaluated if d is not Decision.UNDEFINED]
    eliminated: dict[str, str] = {
        e.assignment.id: STAGE_CONDITION for e, d in evaluated if d is Decision.UNDEFINED
    }
    survivors = defined
    if survivors:
        top = max(e.subject_priority for e, _ in survivors)
        for e, _ in survivors:
            if e.subject_priority < top:
                eliminated[e.assignment.id] = STAGE_SUBJECT
        survivors = [(e, d) for e, d in survivors if e.subject_priority == top]
        top = max(e.object_priority for e, _ in survivors)
        for e, _ in survivors:
            if e.object_priority < top:
                eliminated[e.assignment.id] = STAGE_OBJECT
        survivors = [(e, d) for e, d in survivors if e.object_priority == top]

    if not survivors:
        decision = Decision.UNDEFINED
    elif any(d is Decision.DENIED for _, d in survivors):
        decision = Decision.DENIED
    else:
        decision = Decision.ALLOWED

    trace = tuple(
        EvaluatedAssignment(
            e.assignment, d, e.subject_priority, e.object_priority,
            eliminated.get(e.assignment.id),
        )
        for e, d in evaluated
    )
    return decision, trace
