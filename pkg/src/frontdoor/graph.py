"""Semi-Markovian causal graphs and exact m-separation.

Only observed nodes are materialised. An unobserved confounder shared by two
observed nodes is encoded as a bidirected edge between them, so every
bidirected endpoint counts as an arrowhead when paths are evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

__all__ = [
    "Roles",
    "Smcm",
    "SeparationQuery",
    "GraphError",
    "ancestors",
    "descendants",
    "m_separated",
    "remove_incoming",
    "remove_outgoing",
    "add_regime_node",
    "check_assumptions",
    "parse_smcm",
    "format_smcm",
]


class GraphError(ValueError):
    """Raised for malformed graphs, invalid node ids or invalid queries."""


@dataclass(frozen=True)
class Roles:
    treatment: int
    outcome: int
    children: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "children", frozenset(self.children))
        if self.treatment == self.outcome:
            raise GraphError("treatment and outcome must differ")
        if self.treatment in self.children:
            raise GraphError("treatment cannot be its own child")


@dataclass(frozen=True)
class SeparationQuery:
    x: frozenset[int]
    y: frozenset[int]
    given: frozenset[int] = frozenset()

    def __post_init__(self):
        for name in ("x", "y", "given"):
            object.__setattr__(self, name, frozenset(getattr(self, name)))
        if self.x & self.y or self.x & self.given or self.y & self.given:
            raise GraphError("separation query sets must be pairwise disjoint")


def _pair(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


class Smcm:
    """Immutable mixed graph: directed edges plus bidirected (latent) edges.

    A pair of nodes may carry one directed edge and one bidirected edge at the
    same time. When ``roles`` is given its children set must equal the exact
    set of directed children of the treatment.
    """

    __slots__ = (
        "n_nodes", "directed_edges", "bidirected_edges", "roles", "names",
        "_parents", "_children", "_siblings", "_order", "_index",
    )

    def __init__(
        self,
        n_nodes: int,
        directed: Iterable[tuple[int, int]] = (),
        bidirected: Iterable[tuple[int, int]] = (),
        roles: Roles | None = None,
        names: Sequence[str] | None = None,
    ):
        if n_nodes < 0:
            raise GraphError("n_nodes must be non-negative")
        self.n_nodes = int(n_nodes)
        d_edges = set()
        for i, j in directed:
            i, j = self._check(i), self._check(j)
            if i == j:
                raise GraphError(f"self-loop on node {i}")
            d_edges.add((i, j))
        b_edges = set()
        for i, j in bidirected:
            i, j = self._check(i), self._check(j)
            if i == j:
                raise GraphError(f"bidirected self-loop on node {i}")
            b_edges.add(_pair(i, j))
        self.directed_edges = frozenset(d_edges)
        self.bidirected_edges = frozenset(b_edges)

        parents = [[] for _ in range(self.n_nodes)]
        children = [[] for _ in range(self.n_nodes)]
        siblings = [[] for _ in range(self.n_nodes)]
        for i, j in sorted(d_edges):
            children[i].append(j)
            parents[j].append(i)
        for i, j in sorted(b_edges):
            siblings[i].append(j)
            siblings[j].append(i)
        self._parents = tuple(tuple(p) for p in parents)
        self._children = tuple(tuple(c) for c in children)
        self._siblings = tuple(tuple(sorted(s)) for s in siblings)
        self._order = self._toposort()

        if names is None:
            names = [f"v{i}" for i in range(self.n_nodes)]
        names = tuple(str(n) for n in names)
        if len(names) != self.n_nodes:
            raise GraphError("names must have one entry per node")
        if len(set(names)) != len(names):
            raise GraphError("node names must be unique")
        self.names = names
        self._index = {n: i for i, n in enumerate(names)}

        if roles is not None:
            self._check(roles.treatment)
            self._check(roles.outcome)
            for b in roles.children:
                self._check(b)
            actual = frozenset(self._children[roles.treatment])
            if roles.children != actual:
                raise GraphError(
                    f"children role {sorted(roles.children)} differs from the "
                    f"treatment's children {sorted(actual)}"
                )
        self.roles = roles

    # construction helpers -------------------------------------------------

    @classmethod
    def from_names(
        cls,
        names: Sequence[str],
        directed: Iterable[tuple[str, str]] = (),
        bidirected: Iterable[tuple[str, str]] = (),
        treatment: str | None = None,
        outcome: str | None = None,
    ) -> "Smcm":
        idx = {n: i for i, n in enumerate(names)}
        g = cls(
            len(names),
            [(idx[a], idx[b]) for a, b in directed],
            [(idx[a], idx[b]) for a, b in bidirected],
            names=names,
        )
        if treatment is not None and outcome is not None:
            g = g.with_roles(idx[treatment], idx[outcome])
        return g

    def with_roles(self, treatment: int, outcome: int, children: Iterable[int] | None = None) -> "Smcm":
        if children is None:
            children = self._children[self._check(treatment)]
        roles = Roles(treatment, outcome, frozenset(children))
        return Smcm(self.n_nodes, self.directed_edges, self.bidirected_edges, roles, self.names)

    def without_roles(self) -> "Smcm":
        return Smcm(self.n_nodes, self.directed_edges, self.bidirected_edges, None, self.names)

    def _check(self, v) -> int:
        if isinstance(v, bool) or not isinstance(v, int) and not hasattr(v, "__index__"):
            raise GraphError(f"invalid node id {v!r}")
        v = int(v)
        if not 0 <= v < self.n_nodes:
            raise GraphError(f"node id {v} out of range for {self.n_nodes} nodes")
        return v

    def _toposort(self) -> tuple[int, ...]:
        indeg = [len(p) for p in self._parents]
        ready = [v for v in range(self.n_nodes) if indeg[v] == 0]
        order = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for c in self._children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        if len(order) != self.n_nodes:
            raise GraphError("directed part of the graph contains a cycle")
        return tuple(order)

    # accessors ------------------------------------------------------------

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise GraphError(f"unknown node name {name!r}") from None

    def parents(self, v: int) -> tuple[int, ...]:
        return self._parents[self._check(v)]

    def children(self, v: int) -> tuple[int, ...]:
        return self._children[self._check(v)]

    def siblings(self, v: int) -> tuple[int, ...]:
        return self._siblings[self._check(v)]

    @property
    def topological_order(self) -> tuple[int, ...]:
        return self._order

    def has_edge(self, i: int, j: int) -> bool:
        return (i, j) in self.directed_edges

    def has_bidirected(self, i: int, j: int) -> bool:
        return _pair(i, j) in self.bidirected_edges

    def __eq__(self, other):
        if not isinstance(other, Smcm):
            return NotImplemented
        return (
            self.n_nodes == other.n_nodes
            and self.directed_edges == other.directed_edges
            and self.bidirected_edges == other.bidirected_edges
            and self.roles == other.roles
            and self.names == other.names
        )

    def __hash__(self):
        return hash((self.n_nodes, self.directed_edges, self.bidirected_edges, self.roles, self.names))

    def __repr__(self):
        return (
            f"Smcm(n_nodes={self.n_nodes}, directed={sorted(self.directed_edges)}, "
            f"bidirected={sorted(self.bidirected_edges)}, roles={self.roles})"
        )

    def m_separated(self, x, y, given=()) -> bool:
        return m_separated(self, x, y, given)


def _closure(start: Iterable[int], step) -> set[int]:
    seen = set()
    stack = list(start)
    while stack:
        v = stack.pop()
        for w in step(v):
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def ancestors(g: Smcm, v: int) -> frozenset[int]:
    """Nodes with a directed path into ``v`` (``v`` itself excluded)."""
    v = g._check(v)
    found = _closure([v], g._parents.__getitem__)
    found.discard(v)
    return frozenset(found)


def descendants(g: Smcm, v: int) -> frozenset[int]:
    v = g._check(v)
    found = _closure([v], g._children.__getitem__)
    found.discard(v)
    return frozenset(found)


def _as_set(g: Smcm, nodes) -> frozenset[int]:
    if isinstance(nodes, (int,)) and not isinstance(nodes, bool):
        nodes = (nodes,)
    return frozenset(g._check(v) for v in nodes)


def m_separated(g: Smcm, x, y=None, given=()) -> bool:
    """True iff every mixed path between ``x`` and ``y`` is blocked by ``given``.

    Accepts node ids, iterables of node ids or a :class:`SeparationQuery` as
    ``x``. Empty ``x`` or ``y`` is vacuously separated. Runs a reachability
    search over (node, arrived-with-arrowhead) states, so a query costs
    O(nodes + edges).
    """
    if isinstance(x, SeparationQuery):
        q = x
        x, y, given = q.x, q.y, q.given
    elif y is None:
        raise GraphError("m_separated needs both x and y")
    xs, ys, zs = _as_set(g, x), _as_set(g, y), _as_set(g, given)
    if xs & ys or xs & zs or ys & zs:
        raise GraphError("separation query sets must be pairwise disjoint")
    if not xs or not ys:
        return True

    # colliders are open iff they are in `given` or have a descendant in it
    open_collider = _closure(zs, g._parents.__getitem__) | zs
    parents, children, siblings = g._parents, g._children, g._siblings

    visited = set()
    stack = []
    for s in xs:
        # start nodes are endpoints: every incident edge may be used
        for c in children[s]:
            stack.append((c, True))
        for p in parents[s]:
            stack.append((p, False))
        for b in siblings[s]:
            stack.append((b, True))
    while stack:
        state = stack.pop()
        if state in visited:
            continue
        visited.add(state)
        v, head_in = state
        if v in ys:
            return False
        in_given = v in zs
        # leaving along a tail at v: never a collider
        if not in_given:
            for c in children[v]:
                if (c, True) not in visited:
                    stack.append((c, True))
        # leaving along an arrowhead at v: collider iff we arrived on one
        if head_in:
            passable = v in open_collider
        else:
            passable = not in_given
        if passable:
            for p in parents[v]:
                if (p, False) not in visited:
                    stack.append((p, False))
            for b in siblings[v]:
                if (b, True) not in visited:
                    stack.append((b, True))
    return True


def remove_incoming(g: Smcm, s: Iterable[int]) -> Smcm:
    """Drop directed edges into ``s`` and every bidirected edge touching ``s``."""
    s = _as_set(g, s)
    directed = [(i, j) for i, j in g.directed_edges if j not in s]
    bidirected = [(i, j) for i, j in g.bidirected_edges if i not in s and j not in s]
    return Smcm(g.n_nodes, directed, bidirected, names=g.names)


def remove_outgoing(g: Smcm, s: Iterable[int]) -> Smcm:
    """Drop directed edges out of ``s``; bidirected edges are kept."""
    s = _as_set(g, s)
    directed = [(i, j) for i, j in g.directed_edges if i not in s]
    return Smcm(g.n_nodes, directed, g.bidirected_edges, names=g.names)


def add_regime_node(g: Smcm, s: Iterable[int], name: str = "F") -> tuple[Smcm, int]:
    """Add an intervention indicator node with an edge into every node of ``s``."""
    s = _as_set(g, s)
    f = g.n_nodes
    base = name
    k = 0
    while name in g._index:
        k += 1
        name = f"{base}{k}"
    directed = list(g.directed_edges) + [(f, v) for v in sorted(s)]
    return Smcm(g.n_nodes + 1, directed, g.bidirected_edges, names=g.names + (name,)), f


def check_assumptions(g: Smcm) -> list[str]:
    """Return the modelling assumptions violated by ``g``'s roles (empty if none).

    Checks that the outcome descends from the treatment, that treatment and
    outcome share a latent confounder, and that the children role is exactly
    the treatment's children and does not contain the outcome.
    """
    if g.roles is None:
        raise GraphError("graph has no roles")
    t, y, b = g.roles.treatment, g.roles.outcome, g.roles.children
    problems = []
    if t not in ancestors(g, y):
        problems.append("outcome is not a descendant of the treatment")
    if not g.has_bidirected(t, y):
        problems.append("treatment and outcome are not confounded (no bidirected edge)")
    if b != frozenset(g.children(t)):
        problems.append("children role is not the full set of treatment children")
    if y in b:
        problems.append("outcome is a direct child of the treatment")
    return problems


# text format --------------------------------------------------------------

def format_smcm(g: Smcm, comment: str | None = None) -> str:
    lines = []
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    lines.append(f"smcm {g.n_nodes}")
    default = tuple(f"v{i}" for i in range(g.n_nodes))
    if g.names != default:
        lines.extend(f"name {i} {n}" for i, n in enumerate(g.names))
    lines.extend(f"d {i} {j}" for i, j in sorted(g.directed_edges))
    lines.extend(f"b {i} {j}" for i, j in sorted(g.bidirected_edges))
    if g.roles is not None:
        lines.append(f"role t {g.roles.treatment}")
        lines.append(f"role y {g.roles.outcome}")
        lines.append("role b " + " ".join(str(v) for v in sorted(g.roles.children)))
    return "\n".join(lines) + "\n"


def parse_smcm(text: str) -> Smcm:
    """Parse the line-oriented graph format written by :func:`format_smcm`."""
    n = None
    directed, bidirected = [], []
    names: dict[int, str] = {}
    t = y = None
    b: list[int] | None = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "smcm":
                if n is not None:
                    raise GraphError("duplicate header")
                n = int(tok[1])
            elif n is None:
                raise GraphError("missing 'smcm <n_nodes>' header")
            elif tok[0] == "d":
                directed.append((int(tok[1]), int(tok[2])))
            elif tok[0] == "b":
                bidirected.append((int(tok[1]), int(tok[2])))
            elif tok[0] == "name":
                names[int(tok[1])] = tok[2]
            elif tok[0] == "role":
                if tok[1] == "t":
                    t = int(tok[2])
                elif tok[1] == "y":
                    y = int(tok[2])
                elif tok[1] == "b":
                    b = [int(v) for v in tok[2:]]
                else:
                    raise GraphError(f"unknown role {tok[1]!r}")
            else:
                raise GraphError(f"unknown record {tok[0]!r}")
        except (IndexError, ValueError) as exc:
            if isinstance(exc, GraphError):
                raise GraphError(f"line {lineno}: {exc}") from None
            raise GraphError(f"line {lineno}: malformed record {raw.strip()!r}") from None
    if n is None:
        raise GraphError("missing 'smcm <n_nodes>' header")
    name_list = None
    if names:
        if sorted(names) != list(range(n)):
            raise GraphError("name records must cover every node")
        name_list = [names[i] for i in range(n)]
    g = Smcm(n, directed, bidirected, names=name_list)
    if t is not None or y is not None:
        if t is None or y is None:
            raise GraphError("both 'role t' and 'role y' are required")
        g = g.with_roles(t, y, b)
    return g
