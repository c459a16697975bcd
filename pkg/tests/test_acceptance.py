"""Acceptance criteria, one test each, with their time limits.

Every criterion records a ``PASS criterion N`` or ``FAIL criterion N`` line
that is printed in the terminal summary.
"""

import itertools
import json
import random
import time
from contextlib import contextmanager

import pytest

from faults import run_with_crash
from gen import OPS, build_state, random_graph
from oracle import all_distances, closure, reduction

from rhabac import Engine, EngineConfig, build_micro_cloud, errors
from rhabac.authz import resolve
from rhabac.bench import Workload, run_bench
from rhabac.condition import (
    COMPARISON_OPS, And, Attr, Compare, Const, EvaluationContext, Exists, Literal, Not, Or,
    canonicalize, evaluate, parse,
)
from rhabac.model import Decision, Permission, PermissionType, Policy, PolicyAssignment
from rhabac.persistence import open_journal
from rhabac.scenario import bundled_script, run_scenario
from rhabac.store import EffectiveAssignment


@pytest.fixture
def criterion(acceptance_log):
    @contextmanager
    def run(number, limit, label):
        start = time.perf_counter()
        try:
            yield
        except BaseException as exc:
            elapsed = time.perf_counter() - start
            acceptance_log[number] = f"FAIL criterion {number}: {label} ({elapsed:.2f}s) {type(exc).__name__}: {exc}"
            raise
        elapsed = time.perf_counter() - start
        if elapsed >= limit:
            acceptance_log[number] = f"FAIL criterion {number}: {label} took {elapsed:.2f}s, limit {limit}s"
            pytest.fail(f"criterion {number} exceeded {limit}s ({elapsed:.2f}s)")
        acceptance_log[number] = f"PASS criterion {number}: {label} ({elapsed:.2f}s)"

    return run


def test_criterion_1_golden_scenario(criterion):
    with criterion(1, 1.0, "golden deny for u:u2 on node:1 with priorities -2 and -1"):
        for strategy in ("direct", "materialized"):
            engine = build_micro_cloud(Engine(EngineConfig(strategy=strategy)))
            result = engine.explain("s:u:u2", "node:1", "node.get")
            assert result.decision is Decision.DENIED
            priorities = {t.assignment.id: t.subject_priority for t in result.trace}
            assert priorities == {"p2": -2, "p3": -1}


def test_criterion_2_root_grant(criterion):
    with criterion(2, 1.0, "root-scoped grant allows 5 users freenode.list on fnode:1"):
        for strategy in ("direct", "materialized"):
            engine = build_micro_cloud(Engine(EngineConfig(strategy=strategy)))
            for n in (3, 4, 5):
                engine.create_resource(f"u:u{n}", "user")
                engine.register_subject(f"u:u{n}", subject_id=f"s:u:u{n}")
            users = [f"s:u:u{n}" for n in range(1, 6)]
            assert len(set(users)) >= 5
            for sid in users:
                result = engine.authorize(sid, "fnode:1", "freenode.list")
                assert result.decision is Decision.ALLOWED
                assert result.default_applied is None


def test_criterion_3_cascading_delete(criterion):
    subtree = {"top:t1", "reg:r1", "reg:r2", *(f"c:c{i}" for i in range(1, 5)), *(f"node:{i}" for i in range(1, 5))}
    with criterion(3, 1.0, "deleting top:t1 removes 11 resources and p3"):
        for strategy in ("direct", "materialized"):
            engine = build_micro_cloud(Engine(EngineConfig(strategy=strategy)))
            out = engine.execute("resource.delete", {"id": "top:t1"})
            assert set(out["deleted"]) == subtree and len(out["deleted"]) == 11
            assert out["removed_assignments"] == ["p3"]
            with pytest.raises(errors.UnknownResource):
                engine.authorize("s:u:u2", "node:1", "node.get")
            assert engine.authorize("s:u:u2", "fnode:1", "freenode.list").decision is Decision.ALLOWED


def test_criterion_4_strategy_equivalence(criterion):
    with criterion(4, 60.0, "direct, materialized and oracle agree on 1000 random states"):
        states = decisions = 0
        for seed in range(1000):
            engines, oracle, subjects, objects = build_state(seed)
            states += 1
            for sid, obj, op in itertools.product(subjects, objects, OPS):
                want = oracle.authorize(sid, obj, op)
                for engine in engines.values():
                    got = engine.authorize(sid, obj, op).decision.value
                    assert got == want, (seed, sid, obj, op, engine.config.strategy)
                decisions += 1
        assert states >= 1000 and decisions > 0


def test_criterion_5_graph_oracles(criterion):
    with criterion(5, 30.0, "reduction and dist match brute force on 500 random DAGs"):
        rng = random.Random(5)
        for _ in range(500):
            g, nodes, edges = random_graph(rng, rng.randint(1, 49), rng.choice([0.03, 0.1, 0.25]))
            red = g.reduction_edges()
            assert closure(nodes, red) == closure(nodes, edges)
            assert red == reduction(nodes, edges)
            assert g.transitive_reduction().reduction_edges() == red
            dist = all_distances(nodes, red)
            for a in nodes:
                for b in nodes:
                    assert g.dist(a, b) == dist[a].get(b)


TRUE, FALSE = parse("true"), parse("false")


def _effective(aid, permission, condition, sub_p, obj_p):
    pa = PolicyAssignment(aid, Policy(Permission("x.y", PermissionType(permission)), condition),
                          frozenset({"root"}), frozenset({"root"}))
    return EffectiveAssignment(pa, sub_p, obj_p)


def _expected(entries):
    """(permission, defined, subject priority, object priority) rows -> decision."""
    live = [e for e in entries if e[1]]
    if not live:
        return "undefined"
    top_s = max(e[2] for e in live)
    top_o = max(e[3] for e in live if e[2] == top_s)
    final = [e[0] for e in live if e[2] == top_s and e[3] == top_o]
    return "denied" if "deny" in final else "allowed"


def test_criterion_6_conflict_resolution(criterion):
    with criterion(6, 30.0, "deny-overrides, priority dominance, undefined iff empty on 10000+ cases"):
        cases = 0
        rng = random.Random(6)
        # synthetic effective sets
        for _ in range(6000):
            rows = [(rng.choice(["allow", "deny"]), rng.random() < 0.7, -rng.randrange(3), -rng.randrange(3))
                    for _ in range(rng.randint(0, 6))]
            eff = [_effective(f"a{i}", p, TRUE if d else FALSE, s, o) for i, (p, d, s, o) in enumerate(rows)]
            decision, _ = resolve(eff, {}, {}, {})
            assert decision.value == _expected(rows)
            # a dominated opposite-permission entry never changes a defined outcome
            if rows and decision is not Decision.UNDEFINED:
                low = min(r[2] for r in rows) - 1
                flip = "allow" if decision is Decision.DENIED else "deny"
                extra = _effective("z", flip, TRUE, low, 0)
                assert resolve(eff + [extra], {}, {}, {})[0] is decision
            cases += 1
        # engine traces on random states, priorities checked against the oracle
        seed = 0
        while cases < 12_000:
            engines, oracle, subjects, objects = build_state(10_000 + seed, strategies=("materialized",))
            engine = engines["materialized"]
            seed += 1
            for sid, obj, op in itertools.product(subjects, objects, OPS):
                result = engine.explain(sid, obj, op)
                subject = oracle.subjects[sid]
                by_id = {pa.id: pa for pa in oracle.effective(subject, obj, op)}
                assert {t.assignment.id for t in result.trace} == set(by_id)
                rows = []
                for t in result.trace:
                    pa = by_id[t.assignment.id]
                    assert t.subject_priority == oracle.sub_priority(subject, pa)
                    assert t.object_priority == oracle.obj_priority(obj, pa)
                    defined = oracle.pol_eval(subject, obj, pa) != "undefined"
                    rows.append((pa.permission, defined, t.subject_priority, t.object_priority))
                assert result.decision.value == _expected(rows)
                cases += 1
        assert cases >= 10_000


# -- condition language --------------------------------------------------------

NAMES = ["a", "b", "level", "tier", "x_1", "Zed"]
TEXT_CHARS = "ab Z_-\"\\."


def _random_operand(rng):
    r = rng.random()
    if r < 0.45:
        return Attr(rng.choice(["subject", "object", "request"]), rng.choice(NAMES))
    if r < 0.6:
        return Literal(rng.random() < 0.5)
    if r < 0.75:
        return Literal(rng.randint(-10**12, 10**12))
    if r < 0.87:
        return Literal(rng.choice([0.5, -2.25, 1e-7, 3.0, 1e21, rng.uniform(-1e6, 1e6)]))
    return Literal("".join(rng.choice(TEXT_CHARS) for _ in range(rng.randint(0, 6))))


def _random_tree(rng, depth):
    if depth == 0 or rng.random() < 0.3:
        r = rng.random()
        if r < 0.15:
            return Const(rng.random() < 0.5)
        if r < 0.3:
            return Exists(Attr(rng.choice(["subject", "object", "request"]), rng.choice(NAMES)))
        return Compare(rng.choice(COMPARISON_OPS), _random_operand(rng), _random_operand(rng))
    r = rng.random()
    if r < 0.2:
        return Not(_random_tree(rng, depth - 1))
    node = And if r < 0.6 else Or
    return node(_random_tree(rng, depth - 1), _random_tree(rng, depth - 1))


def _noisy_operand(node):
    if isinstance(node, Attr):
        return f"{node.namespace}.{node.name}"
    if isinstance(node.value, bool):
        return "true" if node.value else "false"
    if isinstance(node.value, str):
        return json.dumps(node.value)
    return repr(node.value)


def _noisy(node, rng):
    """Render with arbitrary spacing and redundant parentheses."""
    sp = lambda: rng.choice(["", " ", "  ", "\n"])  # noqa: E731
    if isinstance(node, Const):
        text = "true" if node.value else "false"
    elif isinstance(node, Exists):
        text = f"exists({sp()}{_noisy_operand(node.attr)}{sp()})"
    elif isinstance(node, Compare):
        text = f"{_noisy_operand(node.left)}{sp()}{node.op}{sp()}{_noisy_operand(node.right)}"
    elif isinstance(node, Not):
        text = f"!{sp()}({_noisy(node.operand, rng)})"
    else:
        glue = "&&" if isinstance(node, And) else "||"
        text = f"({_noisy(node.left, rng)}){sp()}{glue}{sp()}({_noisy(node.right, rng)})"
    return f"({sp()}{text}{sp()})" if rng.random() < 0.3 else text


def test_criterion_7_condition_language(criterion):
    with criterion(7, 30.0, "10000 condition round trips and collapse for every operator"):
        rng = random.Random(7)
        for _ in range(10_000):
            tree = _random_tree(rng, rng.randint(0, 6))
            text = canonicalize(tree)
            assert parse(text).ast == tree
            assert canonicalize(parse(text)) == text
            assert parse(_noisy(tree, rng)).ast == tree
        empty = EvaluationContext({}, {}, {})
        present = EvaluationContext({"v": 1}, {"v": "a"}, {"v": True})
        for op in COMPARISON_OPS:
            for ns, value in itertools.product(["subject", "object", "request"], ["1", '"a"', "true", "2.5"]):
                assert evaluate(parse(f"{ns}.missing {op} {value}"), present) is False
                assert evaluate(parse(f"{value} {op} {ns}.missing"), empty) is False
                assert evaluate(parse(f"!({ns}.missing {op} {value})"), empty) is True
            assert evaluate(parse(f"subject.v {op} object.v"), present) is False


def test_criterion_8_persistence(criterion, tmp_path):
    with criterion(8, 60.0, "snapshot replay passes the scenario; 100+ crash points never orphan an event"):
        engine = build_micro_cloud(Engine(journal=open_journal(tmp_path)))
        engine.snapshot()
        engine.set_attribute("node:2", "cpu", 8)
        restored = Engine.from_journal(open_journal(tmp_path))
        assert restored.state_dict() == engine.state_dict()
        golden = restored.explain("s:u:u2", "node:1", "node.get")
        assert golden.decision is Decision.DENIED
        assert {t.assignment.id: t.subject_priority for t in golden.trace} == {"p2": -2, "p3": -1}
        restored._reset()
        assert run_scenario(bundled_script(), engine=restored).passed

        _, _, reference, _, total_writes = run_with_crash(None, 0)
        crashed_runs = 0
        for point in range(1, total_writes + 1):
            crashed, orphans, recovered, published, _ = run_with_crash(point, point)
            crashed_runs += crashed
            assert orphans == [], point
            assert recovered.state_dict() == reference.state_dict(), point
        assert crashed_runs >= 100


def _sweep(engine):
    return [
        engine.authorize(sid, obj, op).decision
        for sid in sorted(engine.subjects)
        for obj in sorted(engine.resources)
        for op in ("node.get", "freenode.list", "node.put")
    ]


def test_criterion_9_cache_transparency(criterion):
    with criterion(9, 10.0, "cached and uncached sweeps agree; repeat request does zero traversals"):
        for strategy in ("direct", "materialized"):
            plain = build_micro_cloud(Engine(EngineConfig(strategy=strategy)))
            cached = build_micro_cloud(Engine(EngineConfig(strategy=strategy, cache_enabled=True)))
            first = _sweep(cached)
            assert first == _sweep(plain)
            assert _sweep(cached) == first
            assert cached.cache.hits > 0
        engine = build_micro_cloud(Engine(EngineConfig(strategy="materialized", cache_enabled=True)))
        engine.authorize("s:u:u2", "node:1", "node.get")
        before = engine.graph.traversals
        assert engine.authorize("s:u:u2", "node:1", "node.get").decision is Decision.DENIED
        assert engine.graph.traversals - before == 0


def test_criterion_10_benchmark_ordering(criterion):
    with criterion(10, 120.0, "materialized: fewer traversals per authorize, more work per mutation"):
        report = run_bench(Workload(read_fraction=0.99, operations=2000, seed=0))
        direct, mat = report.results["direct"], report.results["materialized"]
        assert report.decisions_identical
        assert mat.traversals_per_authorize < direct.traversals_per_authorize
        assert mat.work_per_mutation > direct.work_per_mutation
