"""The policy engine: registry, dependency graph, policy store and cache.

All state changes go through :meth:`Engine.execute`, which applies an
operation under the single-writer lock and then appends it to the journal.
Reads (authorize / explain) take the shared lock and can run in parallel.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from typing import Any, Callable, Iterable, Mapping, Optional

from . import errors
from .authz import AuthorizationResult, resolve
from .cache import CacheEntry, CacheKey, InvalidationMode, SharedCache, TwoLevelCache
from .condition import DEFAULT_DEPTH_LIMIT, parse
from .graph import COMP, ResourceDependencyGraph
from .model import (
    ROOT,
    Decision,
    Permission,
    PermissionType,
    Policy,
    PolicyAssignment,
    Resource,
    ResourceKind,
    Subject,
    check_attribute_name,
    check_attribute_value,
    check_operation,
    check_resource_id,
    dependency_kind,
    normalize_attributes,
    permission_type,
    resource_kind,
)
from .persistence import Journal
from .store import PolicyStore, Strategy

WRITE_OPS = (
    "resource.create",
    "resource.delete",
    "attribute.set",
    "attribute.remove",
    "dependency.add",
    "dependency.remove",
    "subject.register",
    "subject.request_attrs",
    "policy.assign",
    "policy.remove",
)
READ_OPS = (
    "authz.authorize",
    "authz.explain",
    "admin.snapshot",
    "resource.get",
    "dependency.export",
    "policy.list",
)
OPERATIONS = WRITE_OPS + READ_OPS

# log-only record type for responses that carry no state change
RESPONSE_OP = "response"


@dataclass
class EngineConfig:
    strategy: str = Strategy.DIRECT.value
    default_decision: str = PermissionType.DENY.value
    cache_enabled: bool = False
    cache_ttl: float = 30.0
    invalidation_mode: str = InvalidationMode.ON_WRITE.value
    local_capacity: int = 4096
    condition_depth_limit: int = DEFAULT_DEPTH_LIMIT
    snapshot_interval: int = 0

    def __post_init__(self):
        try:
            self.strategy = Strategy(self.strategy).value
            self.default_decision = PermissionType(self.default_decision).value
            self.invalidation_mode = InvalidationMode(self.invalidation_mode).value
        except ValueError as exc:
            raise errors.InvalidConfig(str(exc)) from None
        if self.cache_ttl < 0 or self.local_capacity < 1 or self.condition_depth_limit < 1:
            raise errors.InvalidConfig("cache_ttl, local_capacity and depth limit must be positive")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "EngineConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise errors.InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


class RWLock:
    """Many readers or one writer."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    @contextmanager
    def read(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                if not self._readers:
                    self._cond.notify_all()

    @contextmanager
    def write(self):
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True
        try:
            yield
        finally:
            with self._cond:
                self._writer = False
                self._cond.notify_all()


# --------------------------------------------------------------------------
# payload helpers
# --------------------------------------------------------------------------


def _field(payload: Mapping[str, Any], name: str, kind=str, required: bool = True, default=None):
    if not isinstance(payload, Mapping):
        raise errors.MalformedPayload("payload must be an object")
    if name not in payload or payload[name] is None:
        if required:
            raise errors.MalformedPayload(f"missing field {name!r}", field=name)
        return default
    value = payload[name]
    if kind is not None and not isinstance(value, kind):
        raise errors.MalformedPayload(f"field {name!r} has the wrong type", field=name)
    return value


def _id_list(payload, name, required=True):
    value = _field(payload, name, (list, tuple, set, frozenset), required)
    if value is None:
        return None
    if not all(isinstance(v, str) for v in value):
        raise errors.MalformedPayload(f"field {name!r} must be a list of strings", field=name)
    return list(value)


Emitter = Callable[[Any, Mapping[str, Any]], Optional[tuple[str, Any]]]


class Engine:
    def __init__(
        self,
        config: Optional[EngineConfig] = None,
        journal: Optional[Journal] = None,
        shared_cache: Optional[SharedCache] = None,
    ):
        self.config = config or EngineConfig()
        self.journal = journal
        self._shared_cache = shared_cache
        self._lock = RWLock()
        self._reset()

    def _reset(self) -> None:
        self.resources: dict[str, Resource] = {ROOT: Resource(ROOT, ResourceKind.OBJECT)}
        self.graph = ResourceDependencyGraph(ROOT)
        self.subjects: dict[str, Subject] = {}
        self.store = PolicyStore(self.graph, self.resources, self.config.strategy)
        self.cache = (
            TwoLevelCache(self.config.cache_ttl, self.config.local_capacity, self._shared_cache)
            if self.config.cache_enabled
            else None
        )
        self._subject_counter = 0
        self._assignment_counter = 0

    # ------------------------------------------------------------------
    # replay / snapshots
    # ------------------------------------------------------------------

    @classmethod
    def from_journal(
        cls,
        journal: Journal,
        config: Optional[EngineConfig] = None,
        use_snapshot: bool = True,
        snapshot_sequence: Optional[int] = None,
        shared_cache: Optional[SharedCache] = None,
    ) -> "Engine":
        """Rebuild an engine from a snapshot (if any) plus the log suffix."""
        engine = cls(config, journal=journal, shared_cache=shared_cache)
        engine._replay(use_snapshot, snapshot_sequence)
        return engine

    def _replay(self, use_snapshot: bool = True, snapshot_sequence: Optional[int] = None) -> None:
        self._reset()
        start = 0
        if use_snapshot:
            if snapshot_sequence is not None:
                found = self.journal.read_snapshot(snapshot_sequence)
            else:
                found = self.journal.latest_snapshot()
            if found is not None:
                start, state = found
                self.load_state(state)
        for record in self.journal.records(after=start):
            if record.operation == RESPONSE_OP:
                continue
            self._apply(record.operation, record.payload)

    def state_dict(self) -> dict[str, Any]:
        """Complete, order-normalized engine state (also the snapshot body)."""
        return {
            "resources": [self.resources[r].to_dict() for r in sorted(self.resources)],
            "edges": sorted([e.parent, e.child, e.kind.value] for e in self.graph.edges()),
            "subjects": [self.subjects[s].to_dict() for s in sorted(self.subjects)],
            "assignments": sorted((pa.to_dict() for pa in self.store.assignments()), key=lambda d: d["id"]),
            "counters": {"subject": self._subject_counter, "assignment": self._assignment_counter},
        }

    def load_state(self, state: Mapping[str, Any]) -> None:
        self._reset()
        for item in state["resources"]:
            resource = Resource(item["id"], resource_kind(item["kind"]), dict(item["attributes"]))
            if resource.id != ROOT:
                self.graph.add_node(resource.id)
            self.resources[resource.id] = resource
        for parent, child, kind in state["edges"]:
            kind = dependency_kind(kind)
            self.graph._children[parent][child] = kind
            self.graph._parents[child][parent] = kind
        self.graph._mutated()
        for item in state["subjects"]:
            self.subjects[item["id"]] = Subject(
                item["id"], item["user"], dict(item["attributes"]),
                frozenset(item["parents"]), dict(item["request_attributes"]),
            )
        for item in state["assignments"]:
            self.store.create_assignment(self._build_assignment(item, item["id"]))
        self._subject_counter = state["counters"]["subject"]
        self._assignment_counter = state["counters"]["assignment"]

    def snapshot(self) -> tuple[int, str]:
        if self.journal is None:
            raise errors.InvalidConfig("snapshots need a journal")
        with self._lock.read():
            return self.journal.write_snapshot(self.state_dict())

    # ------------------------------------------------------------------
    # dispatch
    # ------------------------------------------------------------------

    def execute(self, op: str, payload: Optional[Mapping[str, Any]] = None, emit: Optional[Emitter] = None):
        """Run a named operation and return its JSON-ready result.

        ``emit(result, logged_payload)`` chooses the outbox event written in
        the same journal record as the change; by default every change emits
        ``(op, {"payload": ..., "result": ...})``.
        """
        payload = {} if payload is None else payload
        if not isinstance(payload, Mapping):
            raise errors.MalformedPayload("payload must be an object")
        if op in WRITE_OPS:
            with self._lock.write():
                return self._write(op, payload, emit)
        if op == "authz.authorize":
            return self._authorize_payload(payload, trace=False).to_dict()
        if op == "authz.explain":
            return self._authorize_payload(payload, trace=True).to_dict(with_trace=True)
        if op == "admin.snapshot":
            seq, path = self.snapshot()
            return {"sequence": seq, "path": path}
        if op == "resource.get":
            with self._lock.read():
                resource = self._resource(_field(payload, "id"))
                out = resource.to_dict()
                out["parents"] = {p: k.value for p, k in self.graph.direct_parents(resource.id).items()}
                return out
        if op == "dependency.export":
            with self._lock.read():
                return {"edges": self.graph.export()}
        if op == "policy.list":
            with self._lock.read():
                return {"assignments": self.state_dict()["assignments"]}
        raise errors.UnknownOperation(f"unknown operation {op!r}", operation=op)

    def _write(self, op: str, payload: Mapping[str, Any], emit: Optional[Emitter]):
        result, logged = self._apply(op, payload)
        if self.cache is not None and self.config.invalidation_mode == InvalidationMode.ON_WRITE.value:
            self.cache.invalidate_all()
        if self.journal is not None:
            event = emit(result, logged) if emit else (op, {"payload": logged, "result": result})
            try:
                seq = self.journal.append(op, logged, event)
            except BaseException:
                # the log is the source of truth: fall back to what it holds
                self._replay()
                if self.cache is not None:
                    self.cache.invalidate_all()
                raise
            interval = self.config.snapshot_interval
            if interval and seq % interval == 0:
                self.journal.write_snapshot(self.state_dict(), seq)
        return result

    def record_response(self, body: Any, event_kind: str = "response") -> int:
        """Journal an outbox event that has no state change behind it."""
        if self.journal is None:
            raise errors.InvalidConfig("the outbox needs a journal")
        with self._lock.write():
            return self.journal.append(RESPONSE_OP, {"event_kind": event_kind}, (event_kind, body))

    def _apply(self, op: str, payload: Mapping[str, Any]):
        handler = getattr(self, "_op_" + op.replace(".", "_"), None)
        if handler is None or op not in WRITE_OPS:
            raise errors.UnknownOperation(f"unknown operation {op!r}", operation=op)
        return handler(payload)

    # ------------------------------------------------------------------
    # lookups
    # ------------------------------------------------------------------

    def _resource(self, rid: str) -> Resource:
        try:
            return self.resources[rid]
        except (KeyError, TypeError):
            raise errors.UnknownResource(f"unknown resource {rid!r}", resource=rid) from None

    def _subject(self, sid: str) -> Subject:
        try:
            return self.subjects[sid]
        except (KeyError, TypeError):
            raise errors.UnknownSubject(f"unknown subject {sid!r}", subject=sid) from None

    def _affected_below(self, nodes: Iterable[str]) -> set[str]:
        if not self.store.materialized:
            return set()
        out = set()
        for node in nodes:
            out.add(node)
            out |= self.graph.descendants(node)
        return out

    # ------------------------------------------------------------------
    # write handlers: each returns (result, payload to log)
    # ------------------------------------------------------------------

    def _op_resource_create(self, p):
        rid = check_resource_id(_field(p, "id"))
        kind = resource_kind(_field(p, "kind"))
        attributes = normalize_attributes(_field(p, "attributes", (dict, list), required=False))
        parent = _field(p, "parent", required=False)
        if rid in self.resources:
            raise errors.DuplicateId(f"resource {rid!r} already exists", resource=rid)
        anchor = ROOT if parent is None else self._resource(parent).id
        self.graph.add_node(rid)
        self.resources[rid] = Resource(rid, kind, attributes)
        self.graph.add_dependency(anchor, rid, COMP)
        self.store.rematerialize([rid])
        logged = {"id": rid, "kind": kind.value, "attributes": attributes, "parent": parent}
        return self.resources[rid].to_dict(), logged

    def _op_resource_delete(self, p):
        rid = _field(p, "id")
        self._resource(rid)
        if rid == ROOT:
            raise errors.CannotDeleteRoot("the root resource cannot be deleted")
        doomed = {rid} | self.graph.res_children_c(rid)
        affected = self._affected_below(doomed) - doomed
        self.graph.remove_nodes(doomed)
        for node in doomed:
            del self.resources[node]
        gone_subjects = sorted(s.id for s in self.subjects.values() if s.user in doomed)
        for sid in gone_subjects:
            del self.subjects[sid]
        removed = self.store.purge_resources(doomed)
        self.store.rematerialize(affected)
        result = {
            "deleted": sorted(doomed),
            "removed_assignments": removed,
            "removed_subjects": gone_subjects,
        }
        return result, {"id": rid}

    def _op_attribute_set(self, p):
        resource = self._resource(_field(p, "resource"))
        name = check_attribute_name(_field(p, "name"))
        if "value" not in p:
            raise errors.MalformedPayload("missing field 'value'", field="value")
        value = check_attribute_value(p["value"])
        resource.attributes[name] = value
        return resource.to_dict(), {"resource": resource.id, "name": name, "value": value}

    def _op_attribute_remove(self, p):
        resource = self._resource(_field(p, "resource"))
        name = _field(p, "name")
        resource.attributes.pop(name, None)
        return resource.to_dict(), {"resource": resource.id, "name": name}

    def _op_dependency_add(self, p):
        parent, child = _field(p, "parent"), _field(p, "child")
        edge = self.graph.add_dependency(parent, child, _field(p, "kind"))
        self.store.rematerialize(self._affected_below([child]))
        logged = {"parent": parent, "child": child, "kind": edge.kind.value}
        return logged, logged

    def _op_dependency_remove(self, p):
        parent, child = _field(p, "parent"), _field(p, "child")
        if self.graph.edge_kind(parent, child) is None:
            raise errors.UnknownEdge(f"no edge {parent!r} -> {child!r}", parent=parent, child=child)
        affected = self._affected_below([child])
        edge = self.graph.remove_dependency(parent, child)
        self.store.rematerialize(affected)
        result = {"parent": parent, "child": child, "kind": edge.kind.value}
        return result, {"parent": parent, "child": child}

    def _op_subject_register(self, p):
        uid = _field(p, "user")
        user = self.resources.get(uid) if isinstance(uid, str) else None
        if user is None or not user.is_user:
            raise errors.UnknownUser(f"{uid!r} is not a registered user", user=uid)
        names = _id_list(p, "attributes", required=False)
        parents = _id_list(p, "parents", required=False)
        sid = _field(p, "id", required=False)
        if sid is not None:
            check_resource_id(sid)
            if sid in self.subjects:
                raise errors.DuplicateId(f"subject {sid!r} already exists", subject=sid)
        if names is None:
            attrs = dict(user.attributes)
        else:
            missing = sorted(set(names) - set(user.attributes))
            if missing:
                raise errors.NotASubset(f"user {uid!r} lacks attributes {missing}", missing=missing)
            attrs = {n: user.attributes[n] for n in names}
        user_parents = self.graph.res_parents(uid)
        if parents is None:
            chosen = frozenset(user_parents)
        else:
            missing = sorted(set(parents) - user_parents)
            if missing:
                raise errors.NotASubset(f"{missing} are not parents of {uid!r}", missing=missing)
            chosen = frozenset(parents)
        if sid is None:
            self._subject_counter += 1
            sid = f"s:{self._subject_counter}"
            while sid in self.subjects:
                self._subject_counter += 1
                sid = f"s:{self._subject_counter}"
        subject = Subject(sid, uid, attrs, chosen)
        self.subjects[sid] = subject
        logged = {"id": sid, "user": uid, "attributes": names, "parents": parents}
        return subject.to_dict(), logged

    def _op_subject_request_attrs(self, p):
        subject = self._subject(_field(p, "subject"))
        attrs = normalize_attributes(_field(p, "attributes", (dict, list), required=False))
        subject.request_attributes = attrs
        return subject.to_dict(), {"subject": subject.id, "attributes": attrs}

    def _build_assignment(self, p, aid) -> PolicyAssignment:
        operation = check_operation(_field(p, "operation"))
        ptype = permission_type(_field(p, "permission_type"))
        source = _field(p, "condition", required=False, default="true")
        condition = parse(source, self.config.condition_depth_limit)
        return PolicyAssignment(
            aid,
            Policy(Permission(operation, ptype), condition),
            frozenset(_id_list(p, "subject_scope")),
            frozenset(_id_list(p, "object_scope")),
        )

    def _op_policy_assign(self, p):
        aid = _field(p, "id", required=False)
        if aid is not None:
            check_resource_id(aid)
        pa = self._build_assignment(p, aid or "")
        if aid is None:
            counter = self._assignment_counter
            while True:
                counter += 1
                aid = f"pa:{counter}"
                if aid not in self.store:
                    break
            pa = PolicyAssignment(aid, pa.policy, pa.subject_scope, pa.object_scope)
            self.store.check_new(pa)
            self._assignment_counter = counter
        self.store.create_assignment(pa)
        return pa.to_dict(), pa.to_dict()

    def _op_policy_remove(self, p):
        pa = self.store.remove_assignment(_field(p, "id"))
        return pa.to_dict(), {"id": pa.id}

    # ------------------------------------------------------------------
    # authorization
    # ------------------------------------------------------------------

    def _authorize_payload(self, p, trace: bool) -> AuthorizationResult:
        request_attrs = _field(p, "request_attributes", (dict, list), required=False)
        return self.authorize(
            _field(p, "subject"), _field(p, "object"), check_operation(_field(p, "operation")),
            request_attributes=request_attrs, trace=trace,
        )

    def authorize(
        self,
        subject: str,
        obj: str,
        operation: str,
        request_attributes=None,
        trace: bool = False,
    ) -> AuthorizationResult:
        """Decide whether ``subject`` may perform ``operation`` on ``obj``.

        ``request_attributes`` overrides the subject's stored request
        attributes for this call only.
        """
        with self._lock.read():
            subj = self._subject(subject)
            resource = self._resource(obj)
            if request_attributes is None:
                req = subj.request_attributes
            else:
                req = normalize_attributes(request_attributes)
            if self.cache is not None:
                key = CacheKey.for_request(subj.user, subj.parents, obj, operation)
                entry = self.cache.lookup(key)
                if entry is None:
                    entry = CacheEntry(
                        tuple(self.store.effective_policies(subj, obj, operation)),
                        dict(resource.attributes),
                        self.cache.clock(),
                    )
                    self.cache.store(key, entry)
                effective, object_attrs = entry.effective, entry.object_attributes
            else:
                effective = self.store.effective_policies(subj, obj, operation)
                object_attrs = resource.attributes
            decision, steps = resolve(effective, subj.attributes, object_attrs, req)
        default = (
            PermissionType(self.config.default_decision) if decision is Decision.UNDEFINED else None
        )
        return AuthorizationResult(decision, default, steps if trace else None)

    def explain(self, subject: str, obj: str, operation: str, request_attributes=None):
        return self.authorize(subject, obj, operation, request_attributes, trace=True)

    # ------------------------------------------------------------------
    # convenience API
    # ------------------------------------------------------------------

    def create_resource(self, rid, kind, attributes=None, parent=None) -> Resource:
        self.execute("resource.create", {"id": rid, "kind": kind, "attributes": attributes, "parent": parent})
        return self.resources[rid]

    def delete_resource(self, rid) -> set[str]:
        return set(self.execute("resource.delete", {"id": rid})["deleted"])

    def set_attribute(self, rid, name, value) -> Resource:
        self.execute("attribute.set", {"resource": rid, "name": name, "value": value})
        return self.resources[rid]

    def remove_attribute(self, rid, name) -> Resource:
        self.execute("attribute.remove", {"resource": rid, "name": name})
        return self.resources[rid]

    def add_dependency(self, parent, child, kind) -> None:
        self.execute("dependency.add", {"parent": parent, "child": child, "kind": kind})

    def remove_dependency(self, parent, child) -> None:
        self.execute("dependency.remove", {"parent": parent, "child": child})

    def register_subject(self, user, attributes=None, parents=None, subject_id=None) -> Subject:
        payload = {
            "user": user,
            "attributes": None if attributes is None else sorted(attributes),
            "parents": None if parents is None else sorted(parents),
            "id": subject_id,
        }
        return self.subjects[self.execute("subject.register", payload)["id"]]

    def set_request_attributes(self, subject_id, attributes) -> Subject:
        self.execute("subject.request_attrs", {"subject": subject_id, "attributes": attributes})
        return self.subjects[subject_id]

    def assign_policy(
        self, operation, permission, subject_scope, object_scope, condition="true", assignment_id=None
    ) -> PolicyAssignment:
        result = self.execute(
            "policy.assign",
            {
                "id": assignment_id,
                "operation": operation,
                "permission_type": permission,
                "condition": condition,
                "subject_scope": sorted(subject_scope),
                "object_scope": sorted(object_scope),
            },
        )
        return self.store.get(result["id"])

    def remove_assignment(self, assignment_id) -> None:
        self.execute("policy.remove", {"id": assignment_id})

    def res_parents(self, rid) -> set[str]:
        with self._lock.read():
            return self.graph.res_parents(rid)

    def res_children_c(self, rid) -> set[str]:
        with self._lock.read():
            return self.graph.res_children_c(rid)

    def dist(self, ancestor, descendant) -> Optional[int]:
        with self._lock.read():
            return self.graph.dist(ancestor, descendant)

    def effective_policies(self, subject_id, obj, operation):
        with self._lock.read():
            subject = self._subject(subject_id)
            self._resource(obj)
            return self.store.effective_policies(subject, obj, operation)

    @property
    def work_counters(self) -> dict[str, int]:
        return {"traversals": self.graph.traversals, "admin_work": self.store.admin_work}
