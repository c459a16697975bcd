"""Brute-force reference model used as a test oracle.

Everything here is computed the slow, literal way: reachability by fixpoint
iteration over the edge set, the transitive reduction by checking every edge
for a detour, distances by relaxation. It shares no code with the package
except the condition source strings, whose truth values come from the
hand-written predicates in ``CONDITIONS``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

ROOT = "root"


# -- graph -------------------------------------------------------------------


def closure(nodes, edges) -> dict[str, set[str]]:
    """descendants[x] = every node reachable from x by one or more edges."""
    desc = {n: set() for n in nodes}
    for p, c in edges:
        desc[p].add(c)
    changed = True
    while changed:
        changed = False
        for n in nodes:
            extra = set()
            for d in desc[n]:
                extra |= desc[d]
            if not extra <= desc[n]:
                desc[n] |= extra
                changed = True
    return desc


def reduction(nodes, edges) -> set[tuple[str, str]]:
    desc = closure(nodes, edges)
    keep = set()
    for p, c in edges:
        detour = any(m != c and m != p and c in desc[m] for m in desc[p])
        if not detour:
            keep.add((p, c))
    return keep


def all_distances(nodes, edges) -> dict[str, dict[str, int]]:
    """dist[a][b] on the given edge set, by repeated relaxation."""
    inf = float("inf")
    dist = {a: {b: (0 if a == b else inf) for b in nodes} for a in nodes}
    for p, c in edges:
        dist[p][c] = 1
    for _ in range(len(nodes)):
        changed = False
        for p, c in edges:
            for a in nodes:
                if dist[a][p] + 1 < dist[a][c]:
                    dist[a][c] = dist[a][p] + 1
                    changed = True
        if not changed:
            break
    return {a: {b: int(d) for b, d in row.items() if d != inf} for a, row in dist.items()}


def is_acyclic(nodes, edges) -> bool:
    desc = closure(nodes, edges)
    return all(n not in desc[n] for n in nodes)


# -- conditions ----------------------------------------------------------------


def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def cmp(left, op, right) -> bool:
    """Two-valued comparison: missing (None) or incomparable operands give False."""
    if left is None or right is None:
        return False
    if isinstance(left, bool) or isinstance(right, bool):
        if not (isinstance(left, bool) and isinstance(right, bool)):
            return False
        if op == "==":
            return left == right
        if op == "!=":
            return left != right
        return False
    if _num(left) and _num(right):
        a, b = float(left), float(right)
    elif isinstance(left, str) and isinstance(right, str):
        a, b = left.encode(), right.encode()
    else:
        return False
    return {
        "==": a == b, "!=": a != b, "<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b,
    }[op]


Pred = Callable[[dict, dict, dict], bool]

# (source text, independent predicate over (subject, object, request) attrs)
CONDITIONS: list[tuple[str, Pred]] = [
    ("true", lambda s, o, r: True),
    ("false", lambda s, o, r: False),
    ("subject.level >= 2", lambda s, o, r: cmp(s.get("level"), ">=", 2)),
    ('!(object.tier == "gold")', lambda s, o, r: not cmp(o.get("tier"), "==", "gold")),
    ("exists(request.hour)", lambda s, o, r: "hour" in r),
    ('subject.role == "admin" || object.cpu < 4',
     lambda s, o, r: cmp(s.get("role"), "==", "admin") or cmp(o.get("cpu"), "<", 4)),
    ("object.cpu > subject.level", lambda s, o, r: cmp(o.get("cpu"), ">", s.get("level"))),
    ("request.hour < 18 && !exists(object.tier)",
     lambda s, o, r: cmp(r.get("hour"), "<", 18) and "tier" not in o),
    ("subject.admin == true", lambda s, o, r: cmp(s.get("admin"), "==", True)),
    ("object.cpu <= 2.5", lambda s, o, r: cmp(o.get("cpu"), "<=", 2.5)),
]
CONDITION_PRED = dict(CONDITIONS)


# -- model ---------------------------------------------------------------------


@dataclass
class OracleAssignment:
    id: str
    operation: str
    permission: str
    condition: str
    subject_scope: frozenset
    object_scope: frozenset


@dataclass
class OracleSubject:
    id: str
    user: str
    attributes: dict
    parents: frozenset
    request: dict = field(default_factory=dict)


@dataclass
class OracleState:
    kinds: dict[str, str] = field(default_factory=lambda: {ROOT: "object"})
    attrs: dict[str, dict] = field(default_factory=lambda: {ROOT: {}})
    edges: dict[tuple[str, str], str] = field(default_factory=dict)
    assignments: list[OracleAssignment] = field(default_factory=list)
    subjects: dict[str, OracleSubject] = field(default_factory=dict)

    # derived tables, rebuilt by prepare()
    def prepare(self) -> "OracleState":
        nodes = list(self.kinds)
        edge_set = set(self.edges)
        self._desc = closure(nodes, edge_set)
        self._anc = {n: {m for m in nodes if n in self._desc[m]} for n in nodes}
        self._dist = all_distances(nodes, reduction(nodes, edge_set))
        return self

    def res_parents(self, r) -> set[str]:
        return set(self._anc[r])

    def res_children_c(self, r) -> set[str]:
        comp = {e for e, k in self.edges.items() if k == "composition"}
        return closure(list(self.kinds), comp)[r]

    def dist(self, a, b) -> Optional[int]:
        return self._dist[a].get(b)

    def effective(self, subject: OracleSubject, obj: str, op: str) -> list[OracleAssignment]:
        sub_ok = (subject.parents & self._anc[subject.user]) | {subject.user}
        obj_ok = self._anc[obj] | {obj}
        return [
            pa for pa in self.assignments
            if pa.operation == op and pa.subject_scope <= sub_ok and pa.object_scope <= obj_ok
        ]

    def sub_priority(self, subject: OracleSubject, pa: OracleAssignment) -> int:
        return max(-self._dist[us][subject.user] for us in pa.subject_scope)

    def obj_priority(self, obj: str, pa: OracleAssignment) -> int:
        return max(-self._dist[os][obj] for os in pa.object_scope)

    def pol_eval(self, subject, obj, pa, request=None) -> str:
        req = subject.request if request is None else request
        if CONDITION_PRED[pa.condition](subject.attributes, self.attrs[obj], req):
            return "allowed" if pa.permission == "allow" else "denied"
        return "undefined"

    def authorize(self, subject_id: str, obj: str, op: str, request=None) -> str:
        subject = self.subjects[subject_id]
        rows = [
            (pa, self.pol_eval(subject, obj, pa, request))
            for pa in self.effective(subject, obj, op)
        ]
        rows = [(pa, d) for pa, d in rows if d != "undefined"]
        if rows:
            best = max(self.sub_priority(subject, pa) for pa, _ in rows)
            rows = [(pa, d) for pa, d in rows if self.sub_priority(subject, pa) == best]
            best = max(self.obj_priority(obj, pa) for pa, _ in rows)
            rows = [(pa, d) for pa, d in rows if self.obj_priority(obj, pa) == best]
        if not rows:
            return "undefined"
        return "denied" if any(d == "denied" for _, d in rows) else "allowed"
