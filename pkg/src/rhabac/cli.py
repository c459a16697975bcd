"""``rhabac`` command-line tool.

State lives in ``--data-dir`` (default ``$RHABAC_DATA_DIR`` or
``./rhabac-data``); each invocation replays it, applies one operation and
exits. Exit codes: 0 success, 1 operation or expectation failure, 2 usage.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import Any, Optional, Sequence

from . import errors
from .bench import load_workload, run_bench, write_report
from .engine import Engine, EngineConfig
from .persistence import open_journal
from .scenario import bundled_script, run_scenario
from .service import FileStream, Service, make_http_server

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _value(text: str) -> Any:
    """Attribute values on the command line: JSON scalars, else plain text."""
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        return text
    return value if isinstance(value, (bool, int, float, str)) else text


def _pairs(items: Optional[Sequence[str]]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for item in items or ():
        name, sep, raw = item.partition("=")
        if not sep or not name:
            raise UsageError(f"expected name=value, got {item!r}")
        if name in out:
            raise UsageError(f"attribute {name!r} given twice")
        out[name] = _value(raw)
    return out


def _emit(obj: Any) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _config(args) -> EngineConfig:
    data: dict[str, Any] = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise errors.InvalidConfig(f"cannot read config {args.config}: {exc}") from None
    if args.strategy:
        data["strategy"] = args.strategy
    return EngineConfig.from_dict(data)


def _engine(args) -> Engine:
    journal = open_journal(args.data_dir, fsync=args.fsync, repair=args.repair)
    return Engine.from_journal(journal, _config(args))


def _run_op(args, op: str, payload: dict[str, Any]) -> int:
    service = Service(_engine(args))
    response = service.handle({"op": op, "payload": payload, "request_id": "cli"})
    _emit(response)
    return EXIT_OK if response["ok"] else EXIT_FAIL


# -- subcommand handlers -------------------------------------------------------


def cmd_resource(args) -> int:
    if args.action == "create":
        payload = {"id": args.id, "kind": args.kind, "attributes": _pairs(args.attr), "parent": args.parent}
        return _run_op(args, "resource.create", payload)
    if args.action == "delete":
        return _run_op(args, "resource.delete", {"id": args.id})
    return _run_op(args, "resource.get", {"id": args.id})


def cmd_attr(args) -> int:
    if args.action == "set":
        return _run_op(args, "attribute.set", {"resource": args.resource, "name": args.name, "value": _value(args.value)})
    return _run_op(args, "attribute.remove", {"resource": args.resource, "name": args.name})


def cmd_dep(args) -> int:
    if args.action == "add":
        return _run_op(args, "dependency.add", {"parent": args.parent, "child": args.child, "kind": args.kind})
    if args.action == "remove":
        return _run_op(args, "dependency.remove", {"parent": args.parent, "child": args.child})
    engine = _engine(args)
    sys.stdout.write(engine.graph.export())
    return EXIT_OK


def cmd_subject(args) -> int:
    if args.action == "register":
        payload = {"user": args.user, "id": args.id, "attributes": args.attribute, "parents": args.parent}
        return _run_op(args, "subject.register", payload)
    return _run_op(args, "subject.request_attrs", {"subject": args.subject, "attributes": _pairs(args.attrs)})


def cmd_policy(args) -> int:
    if args.action == "assign":
        payload = {
            "id": args.id, "operation": args.operation, "permission_type": args.type,
            "condition": args.condition, "subject_scope": args.subject_scope,
            "object_scope": args.object_scope,
        }
        return _run_op(args, "policy.assign", payload)
    if args.action == "remove":
        return _run_op(args, "policy.remove", {"id": args.id})
    return _run_op(args, "policy.list", {})


def cmd_authz(args) -> int:
    payload = {"subject": args.subject, "object": args.object, "operation": args.operation}
    if args.request:
        payload["request_attributes"] = _pairs(args.request)
    return _run_op(args, "authz.explain" if args.explain else "authz.authorize", payload)


def cmd_scenario(args) -> int:
    if args.bundled == bool(args.file):
        raise UsageError("give a scenario file or --bundled, not both")
    if args.bundled:
        script = bundled_script()
    else:
        try:
            with open(args.file) as fh:
                script = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read {args.file}: {exc}") from None
    config = _config(args)
    if args.cache:
        config.cache_enabled = True
    report = run_scenario(script, config=config)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_bench(args) -> int:
    workload = load_workload(args.config_file)
    report = run_bench(workload)
    print(report.table())
    if args.output:
        write_report(report, args.output)
    return EXIT_OK if report.decisions_identical else EXIT_FAIL


def cmd_serve(args) -> int:
    service = Service(_engine(args))
    if args.stream:
        stream = FileStream(args.stream)
        handled = service.consume_async(stream)
        print(f"consumed {handled} message(s) from {args.stream}")
        if args.once:
            return EXIT_OK
    server = make_http_server(service, args.host, args.port)
    print(f"listening on http://{args.host}:{server.server_address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def cmd_snapshot(args) -> int:
    seq, path = _engine(args).snapshot()
    _emit({"sequence": seq, "path": path})
    return EXIT_OK


def cmd_outbox(args) -> int:
    journal = open_journal(args.data_dir, fsync=args.fsync, repair=args.repair)
    out = open(args.to, "a") if args.to else sys.stdout

    def sink(record):
        out.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")
        out.flush()

    try:
        delivered = journal.drain_outbox(args.batch, sink)
    finally:
        if args.to:
            out.close()
    print(f"delivered {len(delivered)} event(s)", file=sys.stderr)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rhabac", description="Hierarchical ABAC policy engine")
    parser.add_argument("--data-dir", default=os.environ.get("RHABAC_DATA_DIR", "rhabac-data"))
    parser.add_argument("--strategy", choices=["direct", "materialized"])
    parser.add_argument("--config", help="engine config JSON file")
    parser.add_argument("--fsync", action="store_true", help="fsync every log append")
    parser.add_argument("--repair", action="store_true", help="truncate a torn log tail on open")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    res = sub.add_parser("resource").add_subparsers(dest="action", required=True)
    p = res.add_parser("create")
    p.add_argument("id")
    p.add_argument("--kind", choices=["user", "object"], default="object")
    p.add_argument("--attr", action="append", metavar="NAME=VALUE")
    p.add_argument("--parent", help="composition parent (default: root)")
    for action in ("delete", "get"):
        res.add_parser(action).add_argument("id")
    sub.choices["resource"].set_defaults(func=cmd_resource)

    attr = sub.add_parser("attr").add_subparsers(dest="action", required=True)
    p = attr.add_parser("set")
    p.add_argument("resource")
    p.add_argument("name")
    p.add_argument("value")
    p = attr.add_parser("remove")
    p.add_argument("resource")
    p.add_argument("name")
    sub.choices["attr"].set_defaults(func=cmd_attr)

    dep = sub.add_parser("dep").add_subparsers(dest="action", required=True)
    p = dep.add_parser("add")
    p.add_argument("parent")
    p.add_argument("child")
    p.add_argument("--kind", choices=["aggregation", "composition"], default="aggregation")
    p = dep.add_parser("remove")
    p.add_argument("parent")
    p.add_argument("child")
    dep.add_parser("export")
    sub.choices["dep"].set_defaults(func=cmd_dep)

    subj = sub.add_parser("subject").add_subparsers(dest="action", required=True)
    p = subj.add_parser("register")
    p.add_argument("user")
    p.add_argument("--id")
    p.add_argument("--attribute", action="append", help="keep only these attribute names")
    p.add_argument("--parent", action="append", help="keep only these parents")
    p = subj.add_parser("request-attrs")
    p.add_argument("subject")
    p.add_argument("attrs", nargs="*", metavar="NAME=VALUE")
    sub.choices["subject"].set_defaults(func=cmd_subject)

    pol = sub.add_parser("policy").add_subparsers(dest="action", required=True)
    p = pol.add_parser("assign")
    p.add_argument("--id")
    p.add_argument("--operation", required=True)
    p.add_argument("--type", choices=["allow", "deny"], required=True)
    p.add_argument("--condition", default="true")
    p.add_argument("--subject-scope", action="append", required=True)
    p.add_argument("--object-scope", action="append", required=True)
    pol.add_parser("remove").add_argument("id")
    pol.add_parser("list")
    sub.choices["policy"].set_defaults(func=cmd_policy)

    p = sub.add_parser("authz")
    p.add_argument("subject")
    p.add_argument("object")
    p.add_argument("operation")
    p.add_argument("--request", action="append", metavar="NAME=VALUE")
    p.add_argument("--explain", action="store_true")
    p.set_defaults(func=cmd_authz)

    scen = sub.add_parser("scenario").add_subparsers(dest="action", required=True)
    p = scen.add_parser("run")
    p.add_argument("file", nargs="?")
    p.add_argument("--bundled", action="store_true", help="run the bundled micro-cloud scenario")
    p.add_argument("--cache", action="store_true", help="enable the decision cache")
    sub.choices["scenario"].set_defaults(func=cmd_scenario)

    p = sub.add_parser("bench")
    p.add_argument("config_file", nargs="?", help="workload JSON (defaults built in)")
    p.add_argument("--output", help="write the machine-readable report here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("serve")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8470)
    p.add_argument("--stream", help="message-stream directory to consume before serving")
    p.add_argument("--once", action="store_true", help="consume the stream and exit")
    p.set_defaults(func=cmd_serve)

    sub.add_parser("snapshot").set_defaults(func=cmd_snapshot)

    box = sub.add_parser("outbox").add_subparsers(dest="action", required=True)
    p = box.add_parser("drain")
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--to", help="append events to this file instead of stdout")
    sub.choices["outbox"].set_defaults(func=cmd_outbox)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"rhabac: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (errors.InvalidConfig, errors.ScriptParseError) as exc:
        print(f"rhabac: {exc.code}: {exc.message}", file=sys.stderr)
        return EXIT_USAGE
    except errors.RhabacError as exc:
        print(f"rhabac: {exc.code}: {exc.message}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
