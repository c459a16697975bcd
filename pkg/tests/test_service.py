import json
import threading
import urllib.request

import pytest

from rhabac import Engine, MemoryStream, Service, build_micro_cloud, errors
from rhabac.persistence import Journal, MemoryStorage
from rhabac.scenario import micro_cloud_requests
from rhabac.service import FileStream, make_http_server, parse_request

GOLDEN = {"op": "authz.authorize", "request_id": "g",
          "payload": {"subject": "s:u:u2", "object": "node:1", "operation": "node.get"}}


def test_sync_golden_request():
    service = Service(build_micro_cloud())
    response = service.handle(GOLDEN)
    assert response["ok"] and response["request_id"] == "g"
    assert response["result"]["decision"] == "denied"


@pytest.mark.parametrize("body, code", [
    ({"op": "nope", "request_id": "x"}, "UnknownOperation"),
    ({"op": "resource.create", "request_id": "x", "payload": []}, "MalformedPayload"),
    ({"op": "resource.create", "payload": {}}, "MalformedPayload"),
    ([1, 2], "MalformedPayload"),
    ({"op": "resource.create", "request_id": "x", "payload": {"kind": "object"}}, "MalformedPayload"),
    ({"op": "resource.create", "request_id": "x", "payload": {"id": "a", "kind": "robot"}}, "InvalidValue"),
    ({"op": "authz.authorize", "request_id": "x",
      "payload": {"subject": "s:none", "object": "root", "operation": "a"}}, "UnknownSubject"),
])
def test_error_responses(body, code):
    response = Service(Engine()).handle(body)
    assert response["ok"] is False
    assert response["error"]["code"] == code
    assert set(response["error"]) == {"code", "message", "detail"}


def test_parse_request_rejects_unknown_op():
    with pytest.raises(errors.UnknownOperation):
        parse_request({"op": "policy.rewrite", "request_id": "r"})


def test_handle_bytes_with_garbage():
    out = json.loads(Service(Engine()).handle_bytes(b"{not json"))
    assert out["error"]["code"] == "MalformedPayload" and out["request_id"] is None


def _async_messages():
    return [dict(r, request_id=f"m{i}") for i, r in enumerate(micro_cloud_requests())] + [GOLDEN]


def test_async_responses_land_in_outbox():
    engine = Engine(journal=Journal(MemoryStorage()))
    service = Service(engine)
    handled = service.consume_async(MemoryStream(_async_messages()))
    assert handled == len(_async_messages())
    responses = [r.body for r in engine.journal.outbox() if r.event_kind == "response"]
    assert responses[-1]["request_id"] == "g"
    assert responses[-1]["result"]["decision"] == "denied"
    # one record per write carries both the change and its response
    writes = [r for r in engine.journal.records() if r.payload is not None]
    assert all(r.outbox.event_kind == "response" for r in writes)


def test_async_requires_journal():
    with pytest.raises(errors.InvalidConfig):
        Service(Engine()).process_message(GOLDEN)


def test_duplicate_request_is_applied_once():
    engine = Engine(journal=Journal(MemoryStorage()))
    service = Service(engine)
    create = {"op": "resource.create", "request_id": "dup", "payload": {"id": "a", "kind": "object"}}
    first = service.process_message(create)
    second = service.process_message(create)
    assert first == second and first["ok"]
    assert sorted(engine.resources) == ["a", "root"]


def test_dedup_window_survives_restart():
    storage = MemoryStorage()
    create = {"op": "resource.create", "request_id": "dup", "payload": {"id": "a", "kind": "object"}}
    Service(Engine(journal=Journal(storage))).process_message(create)
    engine = Engine.from_journal(Journal(storage))
    again = Service(engine).process_message(create)
    assert again["ok"] and again["result"]["id"] == "a"


def test_dedup_window_is_bounded():
    service = Service(Engine(journal=Journal(MemoryStorage())), dedup_window=2)
    for i in range(3):
        service.process_message({"op": "resource.create", "request_id": f"r{i}",
                                 "payload": {"id": f"n{i}", "kind": "object"}})
    replay = service.process_message({"op": "resource.create", "request_id": "r0",
                                      "payload": {"id": "n0", "kind": "object"}})
    assert replay["error"]["code"] == "DuplicateId"


def test_sync_and_async_agree():
    sync = Service(Engine())
    async_ = Service(Engine(journal=Journal(MemoryStorage())))
    for message in _async_messages():
        assert sync.handle(message) == async_.process_message(json.dumps(message))
    assert sync.engine.state_dict() == async_.engine.state_dict()


def test_file_stream_commits_offsets(tmp_path):
    stream = FileStream(tmp_path / "stream")
    for message in _async_messages()[:5]:
        stream.publish(message)
    engine = Engine(journal=Journal(MemoryStorage()))
    assert Service(engine).consume_async(stream, max_messages=3) == 3
    assert FileStream(tmp_path / "stream").offset == 3
    assert Service(engine).consume_async(FileStream(tmp_path / "stream")) == 2
    with pytest.raises(ValueError):
        stream.publish("a\nb")


def test_file_stream_ignores_partial_tail(tmp_path):
    stream = FileStream(tmp_path)
    stream.publish({"op": "x"})
    with open(stream.messages_path, "a") as fh:
        fh.write('{"op": "half')
    assert len(stream.poll(10)) == 1


def test_http_carrier():
    server = make_http_server(Service(build_micro_cloud()), port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    try:
        with urllib.request.urlopen(base + "/healthz") as resp:
            assert json.loads(resp.read()) == {"ok": True}
        req = urllib.request.Request(base + "/", data=json.dumps(GOLDEN).encode(), method="POST")
        with urllib.request.urlopen(req) as resp:
            assert json.loads(resp.read())["result"]["decision"] == "denied"
    finally:
        server.shutdown()
        server.server_close()
