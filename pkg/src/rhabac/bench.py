"""Strategy benchmark: the same seeded workload against direct and materialized stores.

Timing is reported but never asserted on; the comparison that matters is the
instrumented counters (graph traversals per authorize, administrative work
per dependency mutation).
"""

from __future__ import annotations

import hashlib
import json
import random
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Optional

import numpy as np

from . import errors
from .engine import Engine, EngineConfig
from .store import Strategy

OPERATIONS = ("node.get", "node.list", "node.put")
CONDITIONS = ("true", "subject.level >= 2", "!(object.tier == \"gold\")", "exists(request.ticket)")


@dataclass
class Workload:
    nodes: int = 60
    users: int = 10
    edge_density: float = 0.05
    assignments: int = 20
    operations: int = 500
    read_fraction: float = 0.99
    seed: int = 0
    cache_enabled: bool = False

    def __post_init__(self):
        checks = [
            (isinstance(self.nodes, int) and self.nodes >= 1, "nodes must be a positive integer"),
            (isinstance(self.users, int) and self.users >= 1, "users must be a positive integer"),
            (0.0 <= self.edge_density <= 1.0, "edge_density must lie in [0, 1]"),
            (isinstance(self.assignments, int) and self.assignments >= 0, "assignments must be >= 0"),
            (isinstance(self.operations, int) and self.operations >= 0, "operations must be >= 0"),
            (0.0 <= self.read_fraction <= 1.0, "read_fraction must lie in [0, 1]"),
            (isinstance(self.seed, int), "seed must be an integer"),
        ]
        for ok, message in checks:
            if not ok:
                raise errors.InvalidConfig(message)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Workload":
        if not isinstance(data, Mapping):
            raise errors.InvalidConfig("workload config must be an object")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise errors.InvalidConfig(f"unknown workload keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise errors.InvalidConfig(str(exc)) from None


@dataclass
class StrategyStats:
    strategy: str
    reads: int = 0
    mutations: int = 0
    read_traversals: int = 0
    mutation_work: int = 0
    latencies_us: list[float] = field(default_factory=list, repr=False)
    digest: str = ""

    @property
    def traversals_per_authorize(self) -> float:
        return self.read_traversals / self.reads if self.reads else 0.0

    @property
    def work_per_mutation(self) -> float:
        return self.mutation_work / self.mutations if self.mutations else 0.0

    def to_dict(self) -> dict[str, Any]:
        lat = np.asarray(self.latencies_us) if self.latencies_us else None
        return {
            "strategy": self.strategy,
            "reads": self.reads,
            "mutations": self.mutations,
            "traversals_per_authorize": self.traversals_per_authorize,
            "work_per_mutation": self.work_per_mutation,
            "mean_latency_us": float(lat.mean()) if lat is not None else None,
            "p99_latency_us": float(np.percentile(lat, 99)) if lat is not None else None,
            "decision_digest": self.digest,
        }


@dataclass
class BenchReport:
    workload: Workload
    results: dict[str, StrategyStats] = field(default_factory=dict)

    @property
    def empty(self) -> bool:
        return not self.results

    @property
    def decisions_identical(self) -> bool:
        return len({s.digest for s in self.results.values()}) <= 1

    def to_dict(self) -> dict[str, Any]:
        return {
            "workload": asdict(self.workload),
            "results": {name: stats.to_dict() for name, stats in self.results.items()},
            "decisions_identical": self.decisions_identical,
        }

    def table(self) -> str:
        if self.empty:
            return "no operations: nothing to report"
        header = f"{'strategy':<13}{'reads':>7}{'muts':>6}{'trav/authz':>12}{'work/mut':>10}{'mean us':>10}{'p99 us':>10}"
        rows = [header, "-" * len(header)]
        for stats in self.results.values():
            d = stats.to_dict()
            mean = f"{d['mean_latency_us']:.1f}" if d["mean_latency_us"] is not None else "-"
            p99 = f"{d['p99_latency_us']:.1f}" if d["p99_latency_us"] is not None else "-"
            rows.append(
                f"{stats.strategy:<13}{stats.reads:>7}{stats.mutations:>6}"
                f"{stats.traversals_per_authorize:>12.2f}{stats.work_per_mutation:>10.1f}{mean:>10}{p99:>10}"
            )
        rows.append(f"decision streams identical: {self.decisions_identical}")
        return "\n".join(rows)


def _setup_requests(w: Workload, rng: random.Random) -> list[tuple[str, dict[str, Any]]]:
    """Deterministic build phase: resources, extra edges, subjects, assignments."""
    objects = [f"n:{i}" for i in range(w.nodes)]
    users = [f"u:{i}" for i in range(w.users)]
    reqs: list[tuple[str, dict[str, Any]]] = []
    for i, rid in enumerate(objects):
        # each object hangs under a random earlier object (or root) by composition
        parent = objects[rng.randrange(i)] if i and rng.random() < 0.8 else None
        attrs = {"tier": rng.choice(["gold", "silver"])}
        reqs.append(("resource.create", {"id": rid, "kind": "object", "parent": parent, "attributes": attrs}))
    for uid in users:
        reqs.append(("resource.create",
                     {"id": uid, "kind": "user", "attributes": {"level": rng.randrange(4)}}))
    # aggregation edges only point from earlier to later in this order, so no cycles
    order = objects + users
    for j, child in enumerate(order):
        for parent in order[:j]:
            if rng.random() < w.edge_density:
                reqs.append(("dependency.add", {"parent": parent, "child": child, "kind": "aggregation"}))
    for uid in users:
        reqs.append(("subject.register", {"user": uid, "id": "s:" + uid}))
    seen = set()
    for k in range(w.assignments):
        sub = sorted(set(rng.sample(["root"] + objects, rng.randint(1, 2))))
        obj = sorted(set(rng.sample(["root"] + objects, rng.randint(1, 2))))
        op, pt = rng.choice(OPERATIONS), rng.choice(["allow", "deny"])
        key = (op, pt, tuple(sub), tuple(obj))
        if key in seen:
            continue
        seen.add(key)
        reqs.append(("policy.assign", {
            "id": f"pa:{k}", "operation": op, "permission_type": pt,
            "condition": rng.choice(CONDITIONS), "subject_scope": sub, "object_scope": obj,
        }))
    return reqs


def _operation_stream(w: Workload, rng: random.Random) -> list[tuple[str, dict[str, Any]]]:
    objects = [f"n:{i}" for i in range(w.nodes)]
    users = [f"u:{i}" for i in range(w.users)]
    order = objects + users
    added: list[tuple[str, str]] = []
    ops = []
    for _ in range(w.operations):
        if rng.random() < w.read_fraction:
            request = {"ticket": 1} if rng.random() < 0.5 else {}
            ops.append(("authz.authorize", {
                "subject": "s:" + rng.choice(users), "object": rng.choice(["root"] + objects),
                "operation": rng.choice(OPERATIONS), "request_attributes": request,
            }))
        elif added and rng.random() < 0.5:
            parent, child = added.pop(rng.randrange(len(added)))
            ops.append(("dependency.remove", {"parent": parent, "child": child}))
        else:
            i, j = sorted(rng.sample(range(len(order)), 2))
            added.append((order[i], order[j]))
            ops.append(("dependency.add", {"parent": order[i], "child": order[j], "kind": "aggregation"}))
    return ops


def _run(strategy: str, w: Workload, setup, stream) -> StrategyStats:
    engine = Engine(EngineConfig(strategy=strategy, cache_enabled=w.cache_enabled))
    for op, payload in setup:
        try:
            engine.execute(op, payload)
        except errors.RhabacError:
            pass
    stats = StrategyStats(strategy)
    digest = hashlib.sha256()
    for op, payload in stream:
        before = engine.graph.traversals + engine.store.admin_work
        if op == "authz.authorize":
            start = time.perf_counter()
            try:
                outcome = engine.execute(op, payload)["decision"]
            except errors.RhabacError as exc:
                outcome = exc.code
            stats.latencies_us.append((time.perf_counter() - start) * 1e6)
            stats.reads += 1
            stats.read_traversals += engine.graph.traversals + engine.store.admin_work - before
        else:
            try:
                engine.execute(op, payload)
                outcome = "ok"
            except errors.RhabacError as exc:
                outcome = exc.code
            stats.mutations += 1
            stats.mutation_work += engine.graph.traversals + engine.store.admin_work - before
        digest.update(f"{op} {outcome}\n".encode())
    stats.digest = digest.hexdigest()
    return stats


def run_bench(workload: Workload | Mapping[str, Any], strategies=(Strategy.DIRECT.value, Strategy.MATERIALIZED.value)) -> BenchReport:
    w = workload if isinstance(workload, Workload) else Workload.from_dict(workload)
    report = BenchReport(w)
    if w.operations == 0:
        return report
    rng = random.Random(w.seed)
    setup = _setup_requests(w, rng)
    stream = _operation_stream(w, rng)
    for strategy in strategies:
        report.results[Strategy(strategy).value] = _run(Strategy(strategy).value, w, setup, stream)
    return report


def write_report(report: BenchReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_workload(path: Optional[str]) -> Workload:
    if path is None:
        return Workload()
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise errors.InvalidConfig(f"cannot read workload {path}: {exc}") from None
    return Workload.from_dict(data)
