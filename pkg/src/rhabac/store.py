"""Policy assignment storage and effective-policy lookup.

Two interchangeable strategies answer ``effective_policies``:

* ``direct`` keeps only the assignments and walks the dependency graph on
  every request to find ancestors and distances;
* ``materialized`` precomputes, for each assignment, the users and objects it
  applies to together with their priorities, and keeps those rows up to date
  on every administrative change. Reads then touch no graph at all.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from . import errors
from .graph import ResourceDependencyGraph, scope_priority
from .model import PolicyAssignment, Resource, Subject


class Strategy(str, enum.Enum):
    DIRECT = "direct"
    MATERIALIZED = "materialized"


@dataclass(frozen=True)
class EffectiveAssignment:
    assignment: PolicyAssignment
    subject_priority: int
    object_priority: int


class PolicyStore:
    def __init__(
        self,
        graph: ResourceDependencyGraph,
        resources: Mapping[str, Resource],
        strategy: Strategy | str = Strategy.DIRECT,
    ):
        self.graph = graph
        self.resources = resources
        self.strategy = Strategy(strategy)
        self._assignments: dict[str, PolicyAssignment] = {}
        self._keys: dict[tuple, str] = {}
        self._by_operation: dict[str, set[str]] = {}
        self._by_scope_element: dict[str, set[str]] = {}
        # materialized rows: resource -> {assignment id: priority}
        self._subject_rows: dict[str, dict[str, int]] = {}
        self._object_rows: dict[str, dict[str, int]] = {}
        self._holders: dict[str, tuple[set[str], set[str]]] = {}
        self.admin_work = 0

    @property
    def materialized(self) -> bool:
        return self.strategy is Strategy.MATERIALIZED

    def __len__(self) -> int:
        return len(self._assignments)

    def __contains__(self, assignment_id: str) -> bool:
        return assignment_id in self._assignments

    def get(self, assignment_id: str) -> PolicyAssignment:
        try:
            return self._assignments[assignment_id]
        except KeyError:
            raise errors.UnknownAssignment(
                f"unknown assignment {assignment_id!r}", assignment=assignment_id
            ) from None

    def assignments(self) -> list[PolicyAssignment]:
        return list(self._assignments.values())

    # -- writes ------------------------------------------------------------

    def check_new(self, pa: PolicyAssignment) -> None:
        if pa.id in self._assignments:
            raise errors.DuplicateId(f"assignment id {pa.id!r} already in use", assignment=pa.id)
        for label, scope in (("subject", pa.subject_scope), ("object", pa.object_scope)):
            if not scope:
                raise errors.EmptyScope(f"{label} scope must not be empty")
            for element in scope:
                if element not in self.resources:
                    raise errors.UnknownScopeResource(
                        f"{label} scope references unknown resource {element!r}",
                        resource=element,
                    )
        if pa.key in self._keys:
            raise errors.DuplicateAssignment(
                "an assignment with the same operation, permission type and scopes exists",
                existing=self._keys[pa.key],
            )

    def create_assignment(self, pa: PolicyAssignment) -> PolicyAssignment:
        self.check_new(pa)
        self._assignments[pa.id] = pa
        self._keys[pa.key] = pa.id
        self._by_operation.setdefault(pa.operation, set()).add(pa.id)
        for element in pa.subject_scope | pa.object_scope:
            self._by_scope_element.setdefault(element, set()).add(pa.id)
        if self.materialized:
            self._materialize_assignment(pa)
        return pa

    def remove_assignment(self, assignment_id: str) -> PolicyAssignment:
        pa = self.get(assignment_id)
        del self._assignments[assignment_id]
        del self._keys[pa.key]
        ops = self._by_operation[pa.operation]
        ops.discard(assignment_id)
        if not ops:
            del self._by_operation[pa.operation]
        for element in pa.subject_scope | pa.object_scope:
            ids = self._by_scope_element.get(element)
            if ids is not None:
                ids.discard(assignment_id)
                if not ids:
                    del self._by_scope_element[element]
        users, objects = self._holders.pop(assignment_id, (set(), set()))
        for user in users:
            self._subject_rows.get(user, {}).pop(assignment_id, None)
        for obj in objects:
            self._object_rows.get(obj, {}).pop(assignment_id, None)
        return pa

    def purge_resources(self, deleted: Iterable[str]) -> list[str]:
        """Drop every assignment whose scope mentions a deleted resource."""
        deleted = set(deleted)
        doomed = set()
        for element in deleted:
            doomed |= self._by_scope_element.get(element, set())
        removed = sorted(doomed)
        for assignment_id in removed:
            self.remove_assignment(assignment_id)
        for resource in deleted:
            for assignment_id in self._subject_rows.pop(resource, {}):
                self._holders[assignment_id][0].discard(resource)
            for assignment_id in self._object_rows.pop(resource, {}):
                self._holders[assignment_id][1].discard(resource)
        return removed

    # -- materialization ---------------------------------------------------

    def _scope_targets(self, scope: frozenset[str]) -> dict[str, int]:
        """Resources below every scope element, with max(-dist) priority."""
        result: Optional[dict[str, int]] = None
        for element in scope:
            reach = self.graph.distances_from(element)
            if result is None:
                result = {node: -d for node, d in reach.items()}
            else:
                result = {
                    node: max(prio, -reach[node]) for node, prio in result.items() if node in reach
                }
        return result or {}

    def _materialize_assignment(self, pa: PolicyAssignment) -> None:
        users, objects = self._holders.setdefault(pa.id, (set(), set()))
        for node, prio in self._scope_targets(pa.subject_scope).items():
            if self.resources[node].is_user:
                self._subject_rows.setdefault(node, {})[pa.id] = prio
                users.add(node)
                self.admin_work += 1
        for node, prio in self._scope_targets(pa.object_scope).items():
            self._object_rows.setdefault(node, {})[pa.id] = prio
            objects.add(node)
            self.admin_work += 1

    def rematerialize(self, affected: Iterable[str]) -> None:
        """Recompute the materialized rows of ``affected`` resources.

        A no-op under the direct strategy. The engine passes the mutated node
        plus all of its descendants; nothing else can change distance.
        """
        if not self.materialized:
            return
        for resource in affected:
            if resource not in self.resources:
                continue
            for assignment_id in self._subject_rows.pop(resource, {}):
                self._holders[assignment_id][0].discard(resource)
            for assignment_id in self._object_rows.pop(resource, {}):
                self._holders[assignment_id][1].discard(resource)
            if not self._assignments:
                continue
            distances = self.graph.distances_to(resource)
            self.admin_work += 1
            candidates = set()
            for ancestor in distances:
                candidates |= self._by_scope_element.get(ancestor, set())
            is_user = self.resources[resource].is_user
            for assignment_id in candidates:
                pa = self._assignments[assignment_id]
                holders = self._holders[assignment_id]
                if is_user:
                    prio = scope_priority(distances, pa.subject_scope)
                    if prio is not None:
                        self._subject_rows.setdefault(resource, {})[assignment_id] = prio
                        holders[0].add(resource)
                        self.admin_work += 1
                prio = scope_priority(distances, pa.object_scope)
                if prio is not None:
                    self._object_rows.setdefault(resource, {})[assignment_id] = prio
                    holders[1].add(resource)
                    self.admin_work += 1

    def materialized_rows(self) -> dict[str, dict[tuple[str, str], int]]:
        """``{"subject": {(aid, user): prio}, "object": {(aid, res): prio}}``."""
        return {
            "subject": {
                (aid, user): prio
                for user, row in self._subject_rows.items()
                for aid, prio in row.items()
            },
            "object": {
                (aid, res): prio
                for res, row in self._object_rows.items()
                for aid, prio in row.items()
            },
        }

    # -- reads -------------------------------------------------------------

    def effective_policies(
        self, subject: Subject, obj: str, operation: str
    ) -> list[EffectiveAssignment]:
        """Assignments for ``operation`` whose subject and object scopes hold."""
        candidates = self._by_operation.get(operation)
        if not candidates:
            return []
        if self.materialized:
            return self._effective_materialized(subject, obj, candidates)
        return self._effective_direct(subject, obj, candidates)

    def _effective_direct(self, subject, obj, candidates):
        user_dist = self.graph.distances_to(subject.user)
        # subject parents are a snapshot; only those still above the user count
        allowed = {p for p in subject.parents if p in user_dist}
        allowed.add(subject.user)
        object_dist = None
        out = []
        for assignment_id in sorted(candidates):
            pa = self._assignments[assignment_id]
            if not pa.subject_scope <= allowed:
                continue
            if object_dist is None:
                object_dist = self.graph.distances_to(obj)
            obj_prio = scope_priority(object_dist, pa.object_scope)
            if obj_prio is None:
                continue
            sub_prio = scope_priority(user_dist, pa.subject_scope)
            out.append(EffectiveAssignment(pa, sub_prio, obj_prio))
        return out

    def _effective_materialized(self, subject, obj, candidates):
        user_rows = self._subject_rows.get(subject.user)
        object_rows = self._object_rows.get(obj)
        if not user_rows or not object_rows:
            return []
        allowed = subject.parents | {subject.user}
        out = []
        for assignment_id in sorted(candidates):
            sub_prio = user_rows.get(assignment_id)
            if sub_prio is None:
                continue
            obj_prio = object_rows.get(assignment_id)
            if obj_prio is None:
                continue
            pa = self._assignments[assignment_id]
            if pa.subject_scope <= allowed:
                out.append(EffectiveAssignment(pa, sub_prio, obj_prio))
        return out
