"""Resource dependency graph (aggregation and composition edges)."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

from . import errors, kernels
from .model import ROOT, DependencyKind, dependency_kind

AGG = DependencyKind.AGGREGATION
COMP = DependencyKind.COMPOSITION


@dataclass(frozen=True)
class DependencyEdge:
    parent: str
    child: str
    kind: DependencyKind


class _Compiled:
    """Integer-indexed CSR views of the graph, rebuilt after each mutation."""

    def __init__(self, graph: "ResourceDependencyGraph"):
        self.names = list(graph._children)
        self.index = {name: i for i, name in enumerate(self.names)}
        n = len(self.names)
        fwd: list[list[int]] = [[] for _ in range(n)]
        rev: list[list[int]] = [[] for _ in range(n)]
        comp: list[list[int]] = [[] for _ in range(n)]
        for parent, kids in graph._children.items():
            p = self.index[parent]
            for child, kind in kids.items():
                c = self.index[child]
                fwd[p].append(c)
                rev[c].append(p)
                if kind is COMP:
                    comp[p].append(c)
        self.n = n
        self.fwd = kernels.build_csr(n, fwd)
        self.rev = kernels.build_csr(n, rev)
        self.comp = kernels.build_csr(n, comp)
        self.red_fwd = None
        self.red_rev = None
        self.red_adj: Optional[list[list[int]]] = None


class ResourceDependencyGraph:
    """DAG over resource ids with a distinguished root.

    Edges are stored parent -> child. ``traversals`` counts every graph walk
    (BFS, reachability probe, reduction) so callers can assert how much work
    a code path did.
    """

    def __init__(self, root: str = ROOT):
        self.root = root
        self._children: dict[str, dict[str, DependencyKind]] = {root: {}}
        self._parents: dict[str, dict[str, DependencyKind]] = {root: {}}
        self._compiled: Optional[_Compiled] = None
        self.traversals = 0
        self.version = 0

    # -- structure ---------------------------------------------------------

    def __contains__(self, node: str) -> bool:
        return node in self._children

    def __len__(self) -> int:
        return len(self._children)

    @property
    def nodes(self) -> list[str]:
        return list(self._children)

    def edges(self) -> Iterator[DependencyEdge]:
        for parent, kids in self._children.items():
            for child, kind in kids.items():
                yield DependencyEdge(parent, child, kind)

    def edge_kind(self, parent: str, child: str) -> Optional[DependencyKind]:
        return self._children.get(parent, {}).get(child)

    def direct_parents(self, node: str) -> dict[str, DependencyKind]:
        self._require(node)
        return dict(self._parents[node])

    def direct_children(self, node: str) -> dict[str, DependencyKind]:
        self._require(node)
        return dict(self._children[node])

    def _require(self, *nodes: str) -> None:
        for node in nodes:
            if node not in self._children:
                raise errors.UnknownResource(f"unknown resource {node!r}", resource=node)

    def _mutated(self) -> None:
        self._compiled = None
        self.version += 1

    def _view(self) -> _Compiled:
        if self._compiled is None:
            self._compiled = _Compiled(self)
        return self._compiled

    def _reduced(self) -> _Compiled:
        view = self._view()
        if view.red_adj is None:
            self.traversals += 1
            reduced = kernels.transitive_reduction(view.fwd)
            rev: list[list[int]] = [[] for _ in range(view.n)]
            for p, kids in enumerate(reduced):
                for c in kids:
                    rev[c].append(p)
            view.red_fwd = kernels.build_csr(view.n, reduced)
            view.red_rev = kernels.build_csr(view.n, rev)
            # published last: concurrent readers test red_adj
            view.red_adj = reduced
        return view

    # -- mutation ----------------------------------------------------------

    def add_node(self, node: str) -> None:
        if node in self._children:
            raise errors.DuplicateId(f"resource {node!r} already exists", resource=node)
        self._children[node] = {}
        self._parents[node] = {}
        self._mutated()

    def add_dependency(self, parent: str, child: str, kind) -> DependencyEdge:
        kind = dependency_kind(kind)
        self._require(parent, child)
        if parent == child:
            raise errors.SelfLoop(f"{parent!r} cannot depend on itself", resource=parent)
        existing = self._children[parent].get(child)
        if existing is kind:
            raise errors.DuplicateEdge(
                f"edge {parent!r} -> {child!r} already exists", parent=parent, child=child
            )
        if existing is not None:
            raise errors.MixedKindConflict(
                f"edge {parent!r} -> {child!r} already exists as {existing.value}",
                parent=parent, child=child, existing=existing.value,
            )
        reverse = self._children[child].get(parent)
        if reverse is not None and reverse is not kind:
            raise errors.MixedKindConflict(
                f"reverse edge {child!r} -> {parent!r} exists as {reverse.value}",
                parent=parent, child=child, existing=reverse.value,
            )
        if self.reaches(child, parent):
            raise errors.CycleDetected(
                f"edge {parent!r} -> {child!r} would create a cycle", parent=parent, child=child
            )
        self._children[parent][child] = kind
        self._parents[child][parent] = kind
        self._mutated()
        return DependencyEdge(parent, child, kind)

    def remove_dependency(self, parent: str, child: str) -> DependencyEdge:
        kind = self._children.get(parent, {}).get(child)
        if kind is None:
            raise errors.UnknownEdge(f"no edge {parent!r} -> {child!r}", parent=parent, child=child)
        if kind is COMP and not self._composition_anchored(child, skip=(parent, child)):
            raise errors.WouldOrphan(
                f"removing {parent!r} -> {child!r} leaves {child!r} without a composition path from root",
                parent=parent, child=child,
            )
        del self._children[parent][child]
        del self._parents[child][parent]
        self._mutated()
        return DependencyEdge(parent, child, kind)

    def _composition_anchored(self, node: str, skip=None) -> bool:
        """Is ``node`` reachable from root along composition edges only?"""
        self.traversals += 1
        seen = {node}
        queue = deque([node])
        while queue:
            cur = queue.popleft()
            if cur == self.root:
                return True
            for parent, kind in self._parents[cur].items():
                if kind is not COMP or (parent, cur) == skip or parent in seen:
                    continue
                seen.add(parent)
                queue.append(parent)
        return False

    def remove_nodes(self, nodes: Iterable[str]) -> None:
        doomed = set(nodes)
        if self.root in doomed:
            raise errors.CannotDeleteRoot("the root resource cannot be deleted")
        for node in doomed:
            for parent in self._parents.pop(node):
                if parent not in doomed:
                    del self._children[parent][node]
            for child in self._children.pop(node):
                if child not in doomed:
                    del self._parents[child][node]
        self._mutated()

    # -- queries -----------------------------------------------------------

    def reaches(self, source: str, target: str) -> bool:
        self._require(source, target)
        view = self._view()
        self.traversals += 1
        return kernels.reachable(view.fwd, view.index[source], view.index[target])

    def res_parents(self, node: str) -> set[str]:
        """All strict ancestors of ``node``."""
        self._require(node)
        view = self._view()
        self.traversals += 1
        start = view.index[node]
        return {view.names[i] for i, _ in kernels.bfs_reached(view.rev, start) if i != start}

    def descendants(self, node: str) -> set[str]:
        self._require(node)
        view = self._view()
        self.traversals += 1
        start = view.index[node]
        return {view.names[i] for i, _ in kernels.bfs_reached(view.fwd, start) if i != start}

    def res_children_c(self, node: str) -> set[str]:
        """Transitive composition descendants; aggregation edges do not propagate."""
        self._require(node)
        view = self._view()
        self.traversals += 1
        start = view.index[node]
        return {view.names[i] for i, _ in kernels.bfs_reached(view.comp, start) if i != start}

    def distances_to(self, node: str) -> dict[str, int]:
        """Hop distance in the transitive reduction from every ancestor to ``node``.

        Includes ``node`` itself at distance 0.
        """
        self._require(node)
        view = self._reduced()
        self.traversals += 1
        return {view.names[i]: d for i, d in kernels.bfs_reached(view.red_rev, view.index[node])}

    def distances_from(self, node: str) -> dict[str, int]:
        self._require(node)
        view = self._reduced()
        self.traversals += 1
        return {view.names[i]: d for i, d in kernels.bfs_reached(view.red_fwd, view.index[node])}

    def dist(self, ancestor: str, descendant: str) -> Optional[int]:
        """Shortest directed path length in the reduction; ``None`` if unreachable."""
        self._require(ancestor, descendant)
        if ancestor == descendant:
            return 0
        return self.distances_from(ancestor).get(descendant)

    def reduction_edges(self) -> set[tuple[str, str]]:
        view = self._reduced()
        return {
            (view.names[p], view.names[c])
            for p, kids in enumerate(view.red_adj)
            for c in kids
        }

    def transitive_reduction(self) -> "ResourceDependencyGraph":
        """A new graph holding only the reduced edges (kinds preserved)."""
        keep = self.reduction_edges()
        out = ResourceDependencyGraph(self.root)
        for node in self._children:
            if node != self.root:
                out._children[node] = {}
                out._parents[node] = {}
        for edge in self.edges():
            if (edge.parent, edge.child) in keep:
                out._children[edge.parent][edge.child] = edge.kind
                out._parents[edge.child][edge.parent] = edge.kind
        return out

    def is_acyclic(self) -> bool:
        self.traversals += 1
        return kernels.topological_order(self._view().fwd) is not None

    def export(self) -> str:
        """One edge per line: ``parent<TAB>child<TAB>kind``."""
        lines = sorted(f"{e.parent}\t{e.child}\t{e.kind.value}" for e in self.edges())
        return "".join(line + "\n" for line in lines)


def scope_priority(distances: dict[str, int], scope: Iterable[str]) -> Optional[int]:
    """max(-dist) over scope elements, given ``distances_to(target)``.

    ``None`` when some scope element is not an ancestor-or-self of the target.
    """
    best = None
    for element in scope:
        d = distances.get(element)
        if d is None:
            return None
        if best is None or -d > best:
            best = -d
    return best
