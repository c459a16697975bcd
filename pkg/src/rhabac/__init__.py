"""Hierarchical attribute-based authorization engine.

Resources form a dependency DAG under a single root. Policy assignments are
scoped to ancestors of the subject's user and of the object, and conflicts
are settled by proximity (nearest scope wins) and then deny-overrides.

>>> from rhabac import Engine
>>> e = Engine()
>>> _ = e.create_resource("u:alice", "user")
>>> _ = e.assign_policy("doc.read", "allow", ["root"], ["root"])
>>> s = e.register_subject("u:alice")
>>> e.authorize(s.id, "root", "doc.read").decision.value
'allowed'
"""

from . import errors
from .authz import AuthorizationResult, EvaluatedAssignment
from .bench import BenchReport, Workload, run_bench
from .cache import InvalidationMode, SharedCache, TwoLevelCache
from .condition import Condition, EvaluationContext, canonicalize, evaluate, parse
from .engine import OPERATIONS, Engine, EngineConfig
from .graph import DependencyEdge, ResourceDependencyGraph
from .model import (
    ROOT,
    AttributeValue,
    Decision,
    DependencyKind,
    Permission,
    PermissionType,
    Policy,
    PolicyAssignment,
    Resource,
    ResourceKind,
    Subject,
)
from .persistence import Journal, MessageRelay, open_journal
from .scenario import build_micro_cloud, run_scenario
from .service import FileStream, MemoryStream, Service
from .store import PolicyStore, Strategy

__version__ = "0.1.0"

__all__ = [
    "ROOT", "AttributeValue", "AuthorizationResult", "BenchReport", "Condition", "Decision",
    "DependencyEdge", "DependencyKind", "Engine", "EngineConfig", "EvaluatedAssignment",
    "EvaluationContext", "FileStream", "InvalidationMode", "Journal", "MemoryStream",
    "MessageRelay", "OPERATIONS", "Permission", "PermissionType", "Policy", "PolicyAssignment",
    "PolicyStore", "Resource", "ResourceDependencyGraph", "ResourceKind", "Service",
    "SharedCache", "Strategy", "Subject", "TwoLevelCache", "Workload", "build_micro_cloud",
    "canonicalize", "errors", "evaluate", "open_journal", "parse", "run_bench", "run_scenario",
]
