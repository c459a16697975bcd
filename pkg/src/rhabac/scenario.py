"""Micro-cloud fixture and the scenario runner.

A scenario is a JSON-lines file. Each non-blank line that does not start
with ``#`` is one step::

    {"op": "authz.authorize", "payload": {...}, "expect": {"decision": "denied"}}

Supported expectations: ``ok`` (bool), ``error`` (error code), ``decision``,
``default_applied``, ``subject_priorities`` / ``object_priorities``
(``{assignment id: int}``, read from an explain trace), ``eliminated``
(``{assignment id: stage or null}``), ``deleted_count``, ``deleted``
(list, order-free), ``removed_assignments`` and ``result`` (subset match).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources as importlib_resources
from pathlib import Path
from typing import Any, Iterable, Optional

from . import errors
from .engine import Engine, EngineConfig

BUNDLED_SCENARIO = "micro-cloud.scenario"

# (id, kind, composition parent or None for root)
MICRO_CLOUD_RESOURCES = [
    ("fnode:1", "object", None),
    ("org:o1", "object", None),
    ("u:u1", "user", None),
    ("u:u2", "user", None),
    ("g:g1", "object", None),
    ("g:g2", "object", None),
    ("top:t1", "object", "org:o1"),
    ("reg:r1", "object", "top:t1"),
    ("reg:r2", "object", "top:t1"),
    ("c:c1", "object", "reg:r1"),
    ("c:c2", "object", "reg:r1"),
    ("c:c3", "object", "reg:r2"),
    ("c:c4", "object", "reg:r2"),
    ("node:1", "object", "c:c1"),
    ("node:2", "object", "c:c2"),
    ("node:3", "object", "c:c3"),
    ("node:4", "object", "c:c4"),
]

MICRO_CLOUD_MEMBERSHIPS = [
    ("org:o1", "g:g1"),
    ("org:o1", "g:g2"),
    ("org:o1", "u:u1"),
    ("org:o1", "u:u2"),
    ("g:g1", "u:u1"),
    ("g:g1", "u:u2"),
    ("g:g2", "u:u2"),
]

MICRO_CLOUD_POLICIES = [
    ("p1", "freenode.list", "allow", ["root"], ["root"]),
    ("p2", "node.get", "allow", ["org:o1"], ["org:o1"]),
    ("p3", "node.get", "deny", ["g:g1", "g:g2"], ["c:c1"]),
]


def micro_cloud_requests(conditions: Optional[dict[str, str]] = None) -> list[dict[str, Any]]:
    """Wire requests that build the micro-cloud graph, policies and one subject per user."""
    conditions = conditions or {}
    steps: list[dict[str, Any]] = []
    for rid, kind, parent in MICRO_CLOUD_RESOURCES:
        steps.append({"op": "resource.create", "payload": {"id": rid, "kind": kind, "parent": parent}})
    for parent, child in MICRO_CLOUD_MEMBERSHIPS:
        steps.append(
            {"op": "dependency.add",
             "payload": {"parent": parent, "child": child, "kind": "aggregation"}}
        )
    for aid, op, ptype, sub, obj in MICRO_CLOUD_POLICIES:
        steps.append({
            "op": "policy.assign",
            "payload": {
                "id": aid, "operation": op, "permission_type": ptype,
                "condition": conditions.get(aid, "true"),
                "subject_scope": sub, "object_scope": obj,
            },
        })
    for user in ("u:u1", "u:u2"):
        steps.append({"op": "subject.register", "payload": {"user": user, "id": "s:" + user}})
    for i, req in enumerate(steps):
        req["request_id"] = f"fixture-{i + 1}"
    return steps


def build_micro_cloud(engine: Optional[Engine] = None, conditions=None) -> Engine:
    engine = engine if engine is not None else Engine()
    for req in micro_cloud_requests(conditions):
        engine.execute(req["op"], req["payload"])
    return engine


# --------------------------------------------------------------------------
# runner
# --------------------------------------------------------------------------


@dataclass
class StepOutcome:
    line: int
    op: str
    passed: bool
    message: str = ""
    response: Any = None
    trace: Any = None


@dataclass
class ScenarioReport:
    steps: list[StepOutcome] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(step.passed for step in self.steps)

    @property
    def first_failure(self) -> Optional[StepOutcome]:
        return next((s for s in self.steps if not s.passed), None)

    def summary(self) -> str:
        ok = sum(s.passed for s in self.steps)
        lines = [f"{ok}/{len(self.steps)} steps passed"]
        failure = self.first_failure
        if failure is not None:
            lines.append(f"first failure at line {failure.line} ({failure.op}): {failure.message}")
            if failure.trace is not None:
                lines.append("explain trace:")
                lines.extend("  " + json.dumps(entry, sort_keys=True) for entry in failure.trace)
        return "\n".join(lines)


def parse_script(text: str) -> list[tuple[int, dict[str, Any]]]:
    steps = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            step = json.loads(line)
        except json.JSONDecodeError as exc:
            raise errors.ScriptParseError(f"line {lineno}: {exc.msg}", line=lineno) from None
        if not isinstance(step, dict) or not isinstance(step.get("op"), str):
            raise errors.ScriptParseError(f"line {lineno}: step needs an 'op' string", line=lineno)
        if not isinstance(step.get("payload", {}), dict) or not isinstance(step.get("expect", {}), dict):
            raise errors.ScriptParseError(f"line {lineno}: payload/expect must be objects", line=lineno)
        steps.append((lineno, step))
    return steps


def bundled_script() -> str:
    return (importlib_resources.files("rhabac") / "data" / BUNDLED_SCENARIO).read_text()


def _subset(expected, actual) -> bool:
    if isinstance(expected, dict):
        return isinstance(actual, dict) and all(
            k in actual and _subset(v, actual[k]) for k, v in expected.items()
        )
    return expected == actual


def _check(expect: dict[str, Any], response: dict[str, Any]) -> list[str]:
    problems = []
    ok = response["ok"]
    result = response.get("result") or {}
    if "error" in expect:
        code = response.get("error", {}).get("code") if not ok else None
        if code != expect["error"]:
            problems.append(f"expected error {expect['error']}, got {code or 'success'}")
        return problems
    if expect.get("ok", True) != ok:
        problems.append(f"expected ok={expect.get('ok', True)}, got {response.get('error') or ok}")
        return problems
    if not ok:
        return problems
    for key in ("decision", "default_applied"):
        if key in expect and result.get(key) != expect[key]:
            problems.append(f"expected {key} {expect[key]!r}, got {result.get(key)!r}")
    trace = {entry["assignment"]: entry for entry in result.get("trace", [])}
    for key, column in (("subject_priorities", "subject_priority"),
                        ("object_priorities", "object_priority"),
                        ("eliminated", "eliminated_at")):
        for aid, value in expect.get(key, {}).items():
            got = trace.get(aid, {}).get(column, "<absent>")
            if got != value:
                problems.append(f"{aid}: expected {column} {value!r}, got {got!r}")
    if "deleted_count" in expect and len(result.get("deleted", [])) != expect["deleted_count"]:
        problems.append(f"expected {expect['deleted_count']} deletions, got {len(result.get('deleted', []))}")
    for key in ("deleted", "removed_assignments"):
        if key in expect and sorted(result.get(key, [])) != sorted(expect[key]):
            problems.append(f"expected {key} {sorted(expect[key])}, got {sorted(result.get(key, []))}")
    if "result" in expect and not _subset(expect["result"], result):
        problems.append(f"result {result!r} does not contain {expect['result']!r}")
    return problems


def run_scenario(script: str | Iterable, engine: Optional[Engine] = None,
                 config: Optional[EngineConfig] = None) -> ScenarioReport:
    """Execute a script top to bottom against a fresh (or given) engine."""
    from .service import Service

    steps = parse_script(script) if isinstance(script, str) else list(script)
    engine = engine if engine is not None else Engine(config)
    service = Service(engine)
    report = ScenarioReport()
    for lineno, step in steps:
        request = {
            "op": step["op"],
            "payload": step.get("payload", {}),
            "request_id": step.get("request_id", f"line-{lineno}"),
        }
        response = service.handle(request)
        problems = _check(step.get("expect", {}), response)
        outcome = StepOutcome(lineno, step["op"], not problems, "; ".join(problems), response)
        if problems and step["op"].startswith("authz."):
            explained = service.handle({**request, "op": "authz.explain"})
            if explained["ok"]:
                outcome.trace = explained["result"]["trace"]
        report.steps.append(outcome)
    return report


def run_scenario_file(path, config: Optional[EngineConfig] = None) -> ScenarioReport:
    return run_scenario(Path(path).read_text(), config=config)
