"""Decide from a declared model factorization whether unlabeled x can affect prediction.

A model is a DAG over data nodes (``y*``, ``x*``, ``Y``, ``X``, ``Xm``, ``Ym``,
``Xr``, ``Yr``) and parameter nodes (``phi``, ``theta`` and any
hyperparameters). Unlabeled covariates ``Xm`` are relevant to ``y*`` exactly
when they are d-connected to ``y*`` given the observed data and ``x*``.

Structural identity of parameters (``phi`` and ``theta`` being the same
object, as in mixture discrimination) is expressed by merging the two nodes,
not by adding an edge.

Spec file schema (JSON)::

    {
      "nodes": ["y*", "x*", "Y", "X", "Xm", "phi", "theta"],
      "edges": [["theta", "X"], ["X", "Y"], ...],      # parent -> child
      "observed": ["Y", "X", "Xm"],
      "parameters": ["phi", "theta"],                   # optional
      "target": "y*", "candidate": "Xm"                 # optional
    }

or, for the standard design-driven construction::

    {"standard": {"designs": ["YX", "Xm"], "prior_dependent": false,
                  "x_star_random": true, "merge_parameters": false}}
"""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import networkx as nx

from .errors import InvalidInputError, InvalidQueryError

TARGET = "y*"
X_STAR = "x*"
UNLABELED = "Xm"
PHI = "phi"
THETA = "theta"
HYPER = "eta"
MERGED = "phi=theta"

DESIGNS = ("YX", "Xm", "Ym", "YrXr")
DATA_NODES = ("y*", "x*", "Y", "X", "Xm", "Ym", "Xr", "Yr")


@dataclass(frozen=True)
class ModelSpecGraph:
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    observed: frozenset[str]
    parameters: frozenset[str] = frozenset()
    target: str = TARGET
    candidate: str = UNLABELED
    _dag: nx.DiGraph = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        nodes = tuple(dict.fromkeys(self.nodes))
        edges = tuple(dict.fromkeys((str(a), str(b)) for a, b in self.edges))
        g = nx.DiGraph()
        g.add_nodes_from(nodes)
        for a, b in edges:
            if a not in g or b not in g:
                raise InvalidInputError(f"edge {a}->{b} uses an undeclared node")
            g.add_edge(a, b)
        if not nx.is_directed_acyclic_graph(g):
            raise InvalidInputError(f"model graph has a cycle: {nx.find_cycle(g)}")
        observed = frozenset(self.observed)
        unknown = observed - set(nodes)
        if unknown:
            raise InvalidInputError(f"observed nodes not in graph: {sorted(unknown)}")
        if self.target in observed:
            raise InvalidInputError(f"target {self.target} cannot be observed")
        params = frozenset(self.parameters) or frozenset(n for n in nodes if n not in DATA_NODES)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "observed", observed)
        object.__setattr__(self, "parameters", params)
        object.__setattr__(self, "_dag", g)

    @property
    def dag(self) -> nx.DiGraph:
        return self._dag

    def parents(self, node) -> set[str]:
        return set(self._dag.predecessors(node))

    def children(self, node) -> set[str]:
        return set(self._dag.successors(node))

    def with_observed(self, observed: Iterable[str]) -> "ModelSpecGraph":
        return ModelSpecGraph(self.nodes, self.edges, frozenset(observed), self.parameters, self.target, self.candidate)

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "edges": [list(e) for e in self.edges],
            "observed": sorted(self.observed),
            "parameters": sorted(self.parameters),
            "target": self.target,
            "candidate": self.candidate,
        }


def build_standard_spec(designs: Iterable[str], prior_dependent: bool = False, x_star_random: bool = True,
                        merge_parameters: bool = False) -> ModelSpecGraph:
    """DAG for the usual factorization ``p(y|x, phi) p(x|theta)`` plus the chosen designs.

    ``designs`` draws from ``{"YX", "Xm", "Ym", "YrXr"}``. With
    ``prior_dependent`` a shared hyperparameter ``eta`` parents both ``phi``
    and ``theta``. ``x_star_random=False`` treats ``x*`` as fixed by design
    (no ``theta -> x*`` edge); it is conditioned on either way.
    """
    designs = set(designs)
    bad = designs - set(DESIGNS)
    if bad:
        raise InvalidInputError(f"unknown designs {sorted(bad)}; choose from {DESIGNS}")
    if not designs:
        raise InvalidInputError("at least one data source must be present")
    nodes = [TARGET, X_STAR, PHI, THETA]
    edges = [(PHI, TARGET), (X_STAR, TARGET)]
    observed = set()
    if x_star_random:
        edges.append((THETA, X_STAR))
    if "YX" in designs:
        nodes += ["Y", "X"]
        edges += [(THETA, "X"), ("X", "Y"), (PHI, "Y")]
        observed |= {"Y", "X"}
    if "Xm" in designs:
        nodes.append("Xm")
        edges.append((THETA, "Xm"))
        observed.add("Xm")
    if "Ym" in designs:
        nodes.append("Ym")
        edges += [(PHI, "Ym"), (THETA, "Ym")]
        observed.add("Ym")
    if "YrXr" in designs:
        nodes += ["Yr", "Xr"]
        edges += [("Yr", "Xr"), (PHI, "Xr"), (THETA, "Xr")]
        observed |= {"Yr", "Xr"}
    params = {PHI, THETA}
    if prior_dependent:
        nodes.append(HYPER)
        edges += [(HYPER, PHI), (HYPER, THETA)]
        params.add(HYPER)
    spec = ModelSpecGraph(tuple(nodes), tuple(edges), frozenset(observed), frozenset(params))
    if merge_parameters:
        spec = merge_nodes(spec, PHI, THETA, MERGED)
    return spec


def merge_nodes(spec: ModelSpecGraph, a: str, b: str, merged: str) -> ModelSpecGraph:
    """Identify nodes ``a`` and ``b`` as one node ``merged``."""
    for n in (a, b):
        if n not in spec.dag:
            raise InvalidQueryError(f"unknown node {n!r}")
    rename = {a: merged, b: merged}
    nodes = tuple(dict.fromkeys(rename.get(n, n) for n in spec.nodes))
    edges = tuple(dict.fromkeys(
        (rename.get(u, u), rename.get(v, v)) for u, v in spec.edges if rename.get(u, u) != rename.get(v, v)
    ))
    observed = frozenset(rename.get(n, n) for n in spec.observed)
    params = frozenset(rename.get(n, n) for n in spec.parameters)
    return ModelSpecGraph(nodes, edges, observed, params, spec.target, spec.candidate)


# --------------------------------------------------------------------------
# Separation


def moralize(spec: ModelSpecGraph) -> nx.Graph:
    """Marry co-parents of every node and drop edge directions."""
    g = nx.Graph()
    g.add_nodes_from(spec.nodes)
    g.add_edges_from(spec.dag.edges())
    for node in spec.nodes:
        for p, q in itertools.combinations(sorted(spec.parents(node)), 2):
            g.add_edge(p, q)
    return g


def _check_query(spec, a, b, conditioning):
    for n in [a, b, *conditioning]:
        if n not in spec.dag:
            raise InvalidQueryError(f"unknown node {n!r}")
    if a in conditioning or b in conditioning:
        raise InvalidQueryError("query endpoints cannot be in the conditioning set")


def d_separated(spec: ModelSpecGraph, a: str, b: str, conditioning: Iterable[str]) -> bool:
    """Bayes-ball reachability: True iff every trail from ``a`` to ``b`` is blocked."""
    z = set(conditioning)
    _check_query(spec, a, b, z)
    if a == b:
        return False
    return b not in _reachable(spec.dag, a, z)


def _reachable(dag: nx.DiGraph, source: str, z: set[str]) -> set[str]:
    anc = set(z)
    for n in z:
        anc |= nx.ancestors(dag, n)
    up, down = "up", "down"
    seen = set()
    reach = set()
    queue = deque([(source, up)])
    while queue:
        node, direction = queue.popleft()
        if (node, direction) in seen:
            continue
        seen.add((node, direction))
        if node not in z:
            reach.add(node)
        if direction == up and node not in z:
            queue.extend((p, up) for p in dag.predecessors(node))
            queue.extend((c, down) for c in dag.successors(node))
        elif direction == down:
            if node not in z:
                queue.extend((c, down) for c in dag.successors(node))
            if node in anc:
                queue.extend((p, up) for p in dag.predecessors(node))
    return reach


def moral_separated(spec: ModelSpecGraph, a: str, b: str, conditioning: Iterable[str]) -> bool:
    """Separation in the moral graph of the ancestral set of ``{a, b} | conditioning``."""
    z = set(conditioning)
    _check_query(spec, a, b, z)
    keep = {a, b} | z
    for n in list(keep):
        keep |= nx.ancestors(spec.dag, n)
    sub = ModelSpecGraph(
        tuple(n for n in spec.nodes if n in keep),
        tuple((u, v) for u, v in spec.edges if u in keep and v in keep),
        frozenset(spec.observed & keep) - {spec.target},
        frozenset(spec.parameters & keep),
        spec.target,
        spec.candidate,
    )
    g = moralize(sub)
    g.remove_nodes_from(z)
    return not nx.has_path(g, a, b)


def predictive_graph(spec: ModelSpecGraph) -> nx.Graph:
    """Undirected dependence graph over data nodes with parameters integrated out.

    Parameter nodes are eliminated from the moral graph in sorted order; each
    elimination connects all of the node's remaining neighbours.
    """
    g = moralize(spec)
    for p in sorted(spec.parameters):
        if p not in g:
            continue
        nbrs = sorted(g.neighbors(p))
        g.add_edges_from(itertools.combinations(nbrs, 2))
        g.remove_node(p)
    return g


# --------------------------------------------------------------------------
# Explanations


def _trail_status(dag: nx.DiGraph, path: list[str], z: set[str]) -> str | None:
    """Return None if ``path`` is active given ``z``, else the first blocking node."""
    for i in range(1, len(path) - 1):
        u, v, w = path[i - 1], path[i], path[i + 1]
        collider = dag.has_edge(u, v) and dag.has_edge(w, v)
        if collider:
            if v not in z and not (nx.descendants(dag, v) & z):
                return v
        elif v in z:
            return v
    return None


def _simple_trails(spec: ModelSpecGraph, a: str, b: str):
    """Simple paths in the skeleton, shortest first, lexicographic among equals."""
    skel = spec.dag.to_undirected()
    paths = [list(p) for p in nx.all_simple_paths(skel, a, b)]
    paths.sort(key=lambda p: (len(p), p))
    return paths


def format_trail(dag: nx.DiGraph, path: list[str]) -> str:
    out = [path[0]]
    for u, v in zip(path, path[1:]):
        out.append("->" if dag.has_edge(u, v) else "<-")
        out.append(v)
    return " ".join(out)


@dataclass(frozen=True)
class RelevanceVerdict:
    relevant: bool
    conditioning: tuple[str, ...]
    witness: tuple[str, ...] | None
    blocked: tuple[tuple[tuple[str, ...], str], ...]
    witness_text: str | None = None

    @property
    def label(self) -> str:
        return "relevant" if self.relevant else "irrelevant"

    def explanation(self) -> str:
        if self.relevant:
            return f"active path: {self.witness_text}"
        if not self.blocked:
            return "no path connects the nodes"
        parts = [f"{' - '.join(p)} blocked at {n}" for p, n in self.blocked]
        return "; ".join(parts)

    def to_dict(self) -> dict:
        return {
            "verdict": self.label,
            "relevant": self.relevant,
            "conditioning": list(self.conditioning),
            "witness": list(self.witness) if self.witness else None,
            "witness_text": self.witness_text,
            "blocked": [{"path": list(p), "blocked_at": n} for p, n in self.blocked],
        }


def unlabeled_relevant(spec: ModelSpecGraph, candidate: str | None = None) -> RelevanceVerdict:
    """Is the candidate (default ``Xm``) d-connected to ``y*`` given observed data and ``x*``?

    When relevant the shortest active path (lexicographic tie-break) is
    returned as a witness; otherwise every path is listed with its first
    blocking node.
    """
    candidate = candidate or spec.candidate
    if candidate not in spec.dag:
        raise InvalidQueryError(f"{candidate!r} is not in the model graph")
    if spec.target not in spec.dag:
        raise InvalidQueryError(f"{spec.target!r} is not in the model graph")
    z = (set(spec.observed) | ({X_STAR} if X_STAR in spec.dag else set())) - {candidate, spec.target}
    separated = d_separated(spec, candidate, spec.target, z)
    trails = _simple_trails(spec, candidate, spec.target)
    if not separated:
        for p in trails:
            if _trail_status(spec.dag, p, z) is None:
                return RelevanceVerdict(True, tuple(sorted(z)), tuple(p), (), format_trail(spec.dag, p))
        raise AssertionError("d-connected but no active simple trail found")
    blocked = tuple((tuple(p), _trail_status(spec.dag, p, z)) for p in trails)
    return RelevanceVerdict(False, tuple(sorted(z)), None, blocked)


# --------------------------------------------------------------------------
# Encoded model cases


@dataclass(frozen=True)
class ReferenceCase:
    name: str
    spec: ModelSpecGraph
    relevant: bool
    note: str


def _factor_spec(loadings_known: bool) -> ModelSpecGraph:
    # phi = phi(alpha, sigma, B, Psi); theta = BB' + Psi
    nodes = (TARGET, X_STAR, "Y", "X", "Xm", PHI, THETA, "B,Psi", "alpha,sigma")
    edges = (
        ("B,Psi", THETA), ("B,Psi", PHI), ("alpha,sigma", PHI),
        (THETA, "X"), (THETA, "Xm"), (THETA, X_STAR),
        ("X", "Y"), (PHI, "Y"), (PHI, TARGET), (X_STAR, TARGET),
    )
    observed = {"Y", "X", "Xm"} | ({"B,Psi"} if loadings_known else set())
    return ModelSpecGraph(nodes, edges, frozenset(observed), frozenset({PHI, THETA, "B,Psi", "alpha,sigma"}))


def _kernel_spec() -> ModelSpecGraph:
    # theta = G is part of phi: the regression function is built on G
    base = build_standard_spec({"YX", "Xm"})
    return ModelSpecGraph(base.nodes, base.edges + ((THETA, PHI),), base.observed, base.parameters)


def _dirichlet_mixture_spec() -> ModelSpecGraph:
    # the latent subpopulation indicator is the shared parent of phi and theta
    base = build_standard_spec({"YX", "Xm"}, prior_dependent=True)
    edges = tuple((("subpopulation" if u == HYPER else u), v) for u, v in base.edges)
    nodes = tuple("subpopulation" if n == HYPER else n for n in base.nodes)
    return ModelSpecGraph(nodes, edges, base.observed, frozenset({PHI, THETA, "subpopulation"}))


def reference_cases() -> list[ReferenceCase]:
    indep = lambda: build_standard_spec({"YX", "Xm"})  # noqa: E731
    dep = lambda: build_standard_spec({"YX", "Xm"}, prior_dependent=True)  # noqa: E731
    return [
        ReferenceCase("normal-regression/independent-prior", indep(), False, "p(phi, theta) = p(phi) p(theta)"),
        ReferenceCase("normal-regression/NIW-prior", indep(), False, "NIW on (mu, Sigma) implies independent phi, theta"),
        ReferenceCase("normal-regression/other-Sigma-prior", dep(), True, "non-conjugate prior on Sigma couples phi, theta"),
        ReferenceCase("binary/product-prior", indep(), False, "independent Beta priors on phi0, phi1, theta"),
        ReferenceCase("binary/single-Dirichlet", indep(), False, "Dirichlet on cells implies independent phi, theta"),
        ReferenceCase("binary/Dirichlet-mixture", _dirichlet_mixture_spec(), True, "mixture weight w(theta) links phi to theta"),
        ReferenceCase("factor/known-loadings", _factor_spec(True), False, "theta = BB' + Psi known"),
        ReferenceCase("factor/uncertain-loadings", _factor_spec(False), True, "B, Psi shared by phi and theta"),
        ReferenceCase("kernel/radial-basis", _kernel_spec(), True, "theta = G is contained in phi"),
    ]


def mixture_discrimination_spec() -> ModelSpecGraph:
    """Two-class Gaussian discrimination: phi and theta are the same parameters."""
    return build_standard_spec({"YX", "Xm"}, merge_parameters=True)


# --------------------------------------------------------------------------
# File I/O


def spec_from_dict(doc: dict) -> ModelSpecGraph:
    if "standard" in doc:
        opts = dict(doc["standard"])
        return build_standard_spec(
            opts.get("designs", ["YX", "Xm"]),
            prior_dependent=bool(opts.get("prior_dependent", False)),
            x_star_random=bool(opts.get("x_star_random", True)),
            merge_parameters=bool(opts.get("merge_parameters", False)),
        )
    try:
        nodes = tuple(doc["nodes"])
        edges = tuple(tuple(e) for e in doc["edges"])
    except KeyError as exc:
        raise InvalidInputError(f"model spec is missing {exc.args[0]!r}") from exc
    if any(len(e) != 2 for e in edges):
        raise InvalidInputError("each edge must be a [parent, child] pair")
    return ModelSpecGraph(
        nodes,
        edges,
        frozenset(doc.get("observed", [])),
        frozenset(doc.get("parameters", [])),
        doc.get("target", TARGET),
        doc.get("candidate", UNLABELED),
    )


def load_spec(path) -> ModelSpecGraph:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read model spec {path}: {exc}") from exc
    return spec_from_dict(doc)
