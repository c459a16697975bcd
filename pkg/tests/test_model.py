import pytest

from rhabac import AttributeValue, Engine, errors
from rhabac.model import normalize_attributes


@pytest.fixture
def engine():
    return Engine()


def test_create_resource_with_attribute(engine):
    r = engine.create_resource("u:u1", "user", [AttributeValue("role", "admin")])
    assert r.is_user and r.attributes == {"role": "admin"}
    assert engine.graph.direct_parents("u:u1") == {"root": "composition"}


def test_create_resource_empty_and_duplicate(engine):
    assert engine.create_resource("node:9", "object").attributes == {}
    with pytest.raises(errors.DuplicateId):
        engine.create_resource("node:9", "user")


@pytest.mark.parametrize("bad", ["", " padded", None, 7])
def test_invalid_resource_ids(engine, bad):
    with pytest.raises(errors.RhabacError) as info:
        engine.execute("resource.create", {"id": bad, "kind": "object"})
    assert info.value.code in ("InvalidIdentifier", "MalformedPayload")


def test_duplicate_attribute_names_rejected():
    with pytest.raises(errors.DuplicateAttributeName):
        normalize_attributes([("cpu", 1), ("cpu", 2)])
    with pytest.raises(errors.DuplicateAttributeName):
        normalize_attributes([{"name": "a", "value": 1}, AttributeValue("a", 2)])
    with pytest.raises(errors.InvalidIdentifier):
        normalize_attributes({"1bad": 1})
    with pytest.raises(errors.InvalidValue):
        normalize_attributes({"big": 2**63})
    with pytest.raises(errors.InvalidValue):
        normalize_attributes({"x": [1]})


def test_set_attribute_upserts(engine):
    engine.create_resource("node:1", "object")
    engine.set_attribute("node:1", "cpu", 8)
    r = engine.set_attribute("node:1", "cpu", 16)
    assert r.attributes == {"cpu": 16}
    engine.set_attribute("node:1", "region", "eu")
    assert engine.resources["node:1"].attributes == {"cpu": 16, "region": "eu"}
    with pytest.raises(errors.UnknownResource):
        engine.set_attribute("ghost", "x", 1)
    with pytest.raises(errors.InvalidIdentifier):
        engine.set_attribute("node:1", "has space", 1)


def test_remove_attribute_is_idempotent(engine):
    engine.create_resource("node:1", "object", {"cpu": 4})
    assert engine.remove_attribute("node:1", "cpu").attributes == {}
    assert engine.remove_attribute("node:1", "nonexistent").attributes == {}
    with pytest.raises(errors.UnknownResource):
        engine.remove_attribute("ghost", "cpu")


def test_register_subject_defaults_and_subsets(micro):
    micro.set_attribute("u:u2", "role", "dev")
    micro.set_attribute("u:u2", "level", 2)
    s = micro.register_subject("u:u2")
    assert s.attributes == {"role": "dev", "level": 2}
    assert s.parents == {"root", "org:o1", "g:g1", "g:g2"}
    r = micro.register_subject("u:u2", {"role"}, {"g:g1"})
    assert r.attributes == {"role": "dev"} and r.parents == {"g:g1"}
    with pytest.raises(errors.NotASubset):
        micro.register_subject("u:u2", {"notOwned"})
    with pytest.raises(errors.NotASubset):
        micro.register_subject("u:u2", None, {"c:c1"})
    with pytest.raises(errors.UnknownUser):
        micro.register_subject("node:1")
    with pytest.raises(errors.UnknownUser):
        micro.register_subject("ghost")


def test_subject_is_a_snapshot(micro):
    micro.set_attribute("u:u1", "role", "dev")
    s = micro.register_subject("u:u1")
    micro.set_attribute("u:u1", "role", "admin")
    micro.set_attribute("u:u1", "extra", 1)
    assert micro.subjects[s.id].attributes == {"role": "dev"}


def test_request_attributes_replace_wholesale(micro):
    s = micro.set_request_attributes("s:u:u1", {"ip": "10.0.0.4", "hour": 14})
    assert s.request_attributes == {"ip": "10.0.0.4", "hour": 14}
    assert micro.set_request_attributes("s:u:u1", {"hour": 9}).request_attributes == {"hour": 9}
    assert micro.set_request_attributes("s:u:u1", []).request_attributes == {}
    with pytest.raises(errors.UnknownSubject):
        micro.set_request_attributes("nobody", {})
    with pytest.raises(errors.DuplicateAttributeName):
        micro.set_request_attributes("s:u:u1", [("a", 1), ("a", 2)])


def test_users_and_objects_partition_resources(micro):
    kinds = {r.kind.value for r in micro.resources.values()}
    assert kinds == {"user", "object"}
    users = {r.id for r in micro.resources.values() if r.is_user}
    assert users == {"u:u1", "u:u2"}


def test_kind_is_validated(engine):
    with pytest.raises(errors.InvalidValue):
        engine.create_resource("x", "robot")
