"""Engagement network: construction, centrality, exposure coloring, layout.

Nodes are usernames. Every comment or echo adds weight 1 on the edge from
the engaged content's author to the engaging user, and every mention adds
weight 1 from the mentioned user to the mentioning post's author, so an
edge always points from the account being engaged with toward the account
doing the engaging. Self-loops are dropped. Authors with no edges still
appear as isolated nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import quoteattr

import numpy as np

from .corpus import CorpusStore
from .records import PostKind

RED = (255, 0, 0)
BLUE = (0, 0, 255)

DEFAULT_DAMPING = 0.15
DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 1000


class GraphError(Exception):
    pass


class EmptyGraph(GraphError):
    pass


class UnknownPostId(GraphError):
    pass


@dataclass
class EngagementGraph:
    nodes: list[str]
    edges: dict[tuple[str, str], int]
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._index:
            self._index = {u: i for i, u in enumerate(self.nodes)}

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(src_idx, dst_idx, weight) arrays in sorted edge order."""
        items = sorted(self.edges.items())
        if not items:
            z = np.zeros(0, dtype=np.int64)
            return z, z.copy(), np.zeros(0, dtype=np.float64)
        src = np.array([self._index[s] for (s, _), _ in items], dtype=np.int64)
        dst = np.array([self._index[t] for (_, t), _ in items], dtype=np.int64)
        w = np.array([wt for _, wt in items], dtype=np.float64)
        return src, dst, w

    def degrees(self) -> np.ndarray:
        """Incident edge count per node (direction ignored)."""
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        for (s, t) in self.edges:
            deg[self._index[s]] += 1
            deg[self._index[t]] += 1
        return deg

    def neighbors(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {u: set() for u in self.nodes}
        for (s, t) in self.edges:
            out[s].add(t)
            out[t].add(s)
        return out


def build(store: CorpusStore, user_filter: set[str] | None = None) -> EngagementGraph:
    """One pass over the post shards; deterministic node order (sorted)."""
    id_to_author: dict[str, str] = {}
    authors: set[str] = set()
    events: list[tuple[str | None, str, list[str]]] = []  # (parent_id, author, mentions)

    for post in store.iter_posts():
        id_to_author[post.post_id] = post.author
        if user_filter is None or post.author in user_filter:
            authors.add(post.author)
        parent = post.parent_id if post.kind in (PostKind.COMMENT, PostKind.ECHO) else None
        if parent is not None or post.mentions:
            events.append((parent, post.author, list(post.mentions)))

    edges: dict[tuple[str, str], int] = {}
    endpoints: set[str] = set()

    def add_edge(src: str, dst: str) -> None:
        if src == dst:
            return
        if user_filter is not None and (src not in user_filter or dst not in user_filter):
            return
        edges[(src, dst)] = edges.get((src, dst), 0) + 1
        endpoints.add(src)
        endpoints.add(dst)

    for parent_id, author, mentions in events:
        if parent_id is not None and parent_id in id_to_author:
            add_edge(id_to_author[parent_id], author)
        for mentioned in mentions:
            add_edge(mentioned, author)

    nodes = sorted(authors | endpoints)
    return EngagementGraph(nodes=nodes, edges=edges)


def seed_expand(store: CorpusStore, seed_post_ids: list[str], depth: int = 1) -> set[str]:
    """Authors of the seed posts plus everyone within `depth` engagement hops."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    users: set[str] = set()
    for pid in seed_post_ids:
        post = store.post(pid)
        if post is None:
            raise UnknownPostId(f"seed post {pid!r} is not in the store")
        users.add(post.author)
    if depth == 0:
        return users
    neighbors = build(store).neighbors()
    frontier = set(users)
    for _ in range(depth):
        nxt: set[str] = set()
        for u in frontier:
            nxt |= neighbors.get(u, set())
        nxt -= users
        if not nxt:
            break
        users |= nxt
        frontier = nxt
    return users


# -- exposure coloring --------------------------------------------------------


@dataclass
class ExposureColoring:
    colors: dict[str, str]  # username -> "red" | "blue"

    def rgb(self, username: str) -> tuple[int, int, int]:
        return RED if self.colors[username] == "red" else BLUE


def classify_exposure(graph: EngagementGraph, bot_flags: dict[str, bool]) -> ExposureColoring:
    """Red = flagged bot, or an account whose inbound engagement weight comes
    mostly (strictly more than half) from flagged bots. Everyone else blue."""
    in_total: dict[str, float] = {u: 0.0 for u in graph.nodes}
    in_bot: dict[str, float] = {u: 0.0 for u in graph.nodes}
    for (src, dst), w in graph.edges.items():
        in_total[dst] += w
        if bot_flags.get(src, False):
            in_bot[dst] += w
    colors = {}
    for u in graph.nodes:
        if bot_flags.get(u, False) or in_bot[u] > 0.5 * in_total[u]:
            colors[u] = "red"
        else:
            colors[u] = "blue"
    return ExposureColoring(colors=colors)


# -- eigenvector centrality ---------------------------------------------------


@dataclass
class CentralityScores:
    scores: np.ndarray  # unit L2 norm, parallel to graph.nodes
    nodes: list[str]
    iterations: int
    residual: float
    converged: bool

    def as_dict(self) -> dict[str, float]:
        return {u: float(s) for u, s in zip(self.nodes, self.scores)}


def eigenvector_centrality(graph: EngagementGraph, mode: str = "out",
                           damping: float = DEFAULT_DAMPING, tol: float = DEFAULT_TOL,
                           max_iter: int = DEFAULT_MAX_ITER) -> CentralityScores:
    """Power iteration on the damped adjacency operator.

    The operator is M = (1 - damping) * A + (damping / n) * J with J the
    all-ones matrix, applied as a sparse matvec plus a rank-one term, so
    disconnected graphs still have a unique dominant eigenvector when
    damping > 0. Iteration actually runs on M + I: the unit shift leaves
    every eigenvector (and the residual below) unchanged but keeps
    bipartite structures, whose extreme eigenvalues tie in magnitude,
    from oscillating forever. Modes: "out" scores accounts whose content
    gets engaged with (row orientation), "in" the transpose, "undirected"
    symmetrizes.

    Convergence when ||Mx - (x . Mx) x|| <= tol; if max_iter passes first
    the last iterate is returned with converged=False.
    """
    if graph.num_edges == 0:
        raise EmptyGraph("centrality needs at least one edge")
    if mode not in ("out", "in", "undirected"):
        raise ValueError(f"unknown mode {mode!r}")
    if not 0.0 <= damping < 1.0:
        raise ValueError("damping must be in [0, 1)")

    n = graph.num_nodes
    src, dst, w = graph.edge_arrays()

    def matvec(x: np.ndarray) -> np.ndarray:
        out = np.zeros(n, dtype=np.float64)
        if mode in ("out", "undirected"):
            np.add.at(out, src, w * x[dst])
        if mode in ("in", "undirected"):
            np.add.at(out, dst, w * x[src])
        if damping > 0.0:
            out = (1.0 - damping) * out + (damping / n) * x.sum()
        # Unit shift; x is unit-norm, so the eigen-residual is unaffected.
        return out + x

    x = np.full(n, 1.0 / math.sqrt(n), dtype=np.float64)
    residual = math.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        y = matvec(x)
        lam = float(x @ y)
        residual = float(np.linalg.norm(y - lam * x))
        norm = float(np.linalg.norm(y))
        if norm == 0.0:
            # Mass vanished (possible undamped on a DAG); keep last iterate.
            return CentralityScores(scores=x, nodes=list(graph.nodes),
                                    iterations=iterations, residual=residual, converged=False)
        x = y / norm
        if residual <= tol:
            return CentralityScores(scores=x, nodes=list(graph.nodes),
                                    iterations=iterations, residual=residual, converged=True)
    return CentralityScores(scores=x, nodes=list(graph.nodes),
                            iterations=iterations, residual=residual, converged=False)


# -- force-directed layout ----------------------------------------------------


@dataclass
class LayoutParams:
    repulsion: float = 2.0
    gravity: float = 1.0
    jitter_tolerance: float = 1.0
    min_displacement: float = 1e-4


@dataclass
class LayoutState:
    positions: np.ndarray  # (n, 2)
    nodes: list[str]
    iterations: int
    mean_displacement: float

    def as_dict(self) -> dict[str, tuple[float, float]]:
        return {u: (float(p[0]), float(p[1])) for u, p in zip(self.nodes, self.positions)}


def layout_fa2(graph: EngagementGraph, iterations: int = 1000, seed: int = 0,
               params: LayoutParams | None = None,
               initial_positions: np.ndarray | None = None) -> LayoutState:
    """Force-directed layout: degree-weighted repulsion, linear attraction
    along edges, gravity toward the origin, and an adaptive global speed
    damped by per-node swinging. Exact pairwise repulsion, O(n^2) per step.

    Deterministic: initial positions are a seeded uniform scatter (or the
    explicit array passed in) and every step is pure ndarray arithmetic.
    """
    params = params or LayoutParams()
    n = graph.num_nodes
    if n == 0:
        return LayoutState(positions=np.zeros((0, 2)), nodes=[], iterations=0,
                           mean_displacement=0.0)

    if initial_positions is not None:
        pos = np.array(initial_positions, dtype=np.float64)
        if pos.shape != (n, 2):
            raise ValueError(f"initial_positions must be ({n}, 2)")
    else:
        rng = np.random.default_rng(seed)
        scale = math.sqrt(n)
        pos = rng.uniform(-scale, scale, size=(n, 2))

    deg = graph.degrees().astype(np.float64)
    mass = deg + 1.0
    src, dst, w = graph.edge_arrays()

    speed = 1.0
    speed_efficiency = 1.0
    prev_force = np.zeros((n, 2), dtype=np.float64)
    mean_disp = math.inf
    it = 0
    for it in range(1, iterations + 1):
        # delta[u, v] = pos[u] - pos[v]; computed once so forces on u and v
        # are exact float negations of each other.
        delta = pos[:, None, :] - pos[None, :, :]
        dist_sq = (delta * delta).sum(axis=2)
        np.fill_diagonal(dist_sq, 1.0)
        dist_sq = np.maximum(dist_sq, 1e-4)
        coef = params.repulsion * (mass[:, None] * mass[None, :]) / dist_sq
        np.fill_diagonal(coef, 0.0)
        force = (delta * coef[:, :, None]).sum(axis=1)

        if src.shape[0]:
            pull = (pos[dst] - pos[src]) * w[:, None]
            np.add.at(force, src, pull)
            np.add.at(force, dst, -pull)

        radii = np.sqrt((pos * pos).sum(axis=1))
        safe = np.where(radii == 0.0, 1.0, radii)
        force -= pos / safe[:, None] * (params.gravity * mass)[:, None]

        swing = np.sqrt(((force - prev_force) ** 2).sum(axis=1))
        traction = 0.5 * np.sqrt(((force + prev_force) ** 2).sum(axis=1))
        total_swing = float((mass * swing).sum())
        total_traction = float((mass * traction).sum())
        if total_swing == 0.0 or total_traction == 0.0:
            mean_disp = 0.0
            break

        est_jitter = 0.05 * math.sqrt(n)
        jt = params.jitter_tolerance * max(
            math.sqrt(est_jitter),
            min(10.0, est_jitter * total_traction / (n * n)),
        )
        if total_swing / total_traction > 2.0:
            speed_efficiency = max(0.05, speed_efficiency * 0.5)
            jt = max(jt, params.jitter_tolerance)
        target_speed = jt * speed_efficiency * total_traction / total_swing
        if total_swing > jt * total_traction:
            speed_efficiency = max(0.05, speed_efficiency * 0.7)
        elif speed < 1000.0:
            speed_efficiency = min(3.0, speed_efficiency * 1.3)
        speed = speed + min(target_speed - speed, 0.5 * speed)

        factor = speed / (1.0 + np.sqrt(speed * swing))
        step = force * factor[:, None]
        pos = pos + step
        prev_force = force
        mean_disp = float(np.sqrt((step * step).sum(axis=1)).mean())
        if mean_disp < params.min_displacement:
            break

    if not np.isfinite(pos).all():
        raise GraphError("layout produced a non-finite position")
    return LayoutState(positions=pos, nodes=list(graph.nodes), iterations=it,
                       mean_displacement=mean_disp)


# -- exports ------------------------------------------------------------------


def _resolve_views(graph: EngagementGraph, coloring: ExposureColoring | None,
                   layout: LayoutState | None, centrality: CentralityScores | None):
    colors = coloring.colors if coloring is not None else {}
    positions = layout.as_dict() if layout is not None else {}
    scores = centrality.as_dict() if centrality is not None else {}
    return colors, positions, scores


def export_json(graph: EngagementGraph, coloring: ExposureColoring | None = None,
                layout: LayoutState | None = None,
                centrality: CentralityScores | None = None) -> dict:
    """Plain-dict network document; stable ordering throughout."""
    colors, positions, scores = _resolve_views(graph, coloring, layout, centrality)
    nodes = []
    for u in graph.nodes:
        x, y = positions.get(u, (0.0, 0.0))
        nodes.append({
            "id": u,
            "color": colors.get(u, "blue"),
            "x": x,
            "y": y,
            "centrality": scores.get(u, 0.0),
        })
    edges = []
    for (s, t), wt in sorted(graph.edges.items()):
        edges.append({
            "source": s,
            "target": t,
            "weight": wt,
            "color": colors.get(s, "blue"),
        })
    return {"nodes": nodes, "edges": edges}


def export_gexf(graph: EngagementGraph, coloring: ExposureColoring | None = None,
                layout: LayoutState | None = None,
                centrality: CentralityScores | None = None,
                edge_color_from: str = "source") -> str:
    """GEXF 1.2 document with viz colors/positions and a centrality attribute.

    Edge color is inherited from the edge's source node by default (set
    edge_color_from="target" to flip).
    """
    if edge_color_from not in ("source", "target"):
        raise ValueError("edge_color_from must be 'source' or 'target'")
    colors, positions, scores = _resolve_views(graph, coloring, layout, centrality)

    def rgb_of(u: str) -> tuple[int, int, int]:
        return RED if colors.get(u, "blue") == "red" else BLUE

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<gexf xmlns="http://www.gexf.net/1.2draft"'
        ' xmlns:viz="http://www.gexf.net/1.2draft/viz" version="1.2">',
        '  <graph mode="static" defaultedgetype="directed">',
        '    <attributes class="node">',
        '      <attribute id="0" title="centrality" type="double"/>',
        '    </attributes>',
        '    <nodes>',
    ]
    for u in graph.nodes:
        r, g, b = rgb_of(u)
        x, y = positions.get(u, (0.0, 0.0))
        uid = quoteattr(u)
        lines.append(f'      <node id={uid} label={uid}>')
        lines.append(f'        <attvalues><attvalue for="0" value="{scores.get(u, 0.0)!r}"/></attvalues>')
        lines.append(f'        <viz:color r="{r}" g="{g}" b="{b}"/>')
        lines.append(f'        <viz:position x="{x!r}" y="{y!r}" z="0.0"/>')
        lines.append('      </node>')
    lines.append('    </nodes>')
    lines.append('    <edges>')
    for i, ((s, t), wt) in enumerate(sorted(graph.edges.items())):
        anchor = s if edge_color_from == "source" else t
        r, g, b = rgb_of(anchor)
        lines.append(
            f'      <edge id="{i}" source={quoteattr(s)} target={quoteattr(t)} weight="{wt}">')
        lines.append(f'        <viz:color r="{r}" g="{g}" b="{b}"/>')
        lines.append('      </edge>')
    lines.append('    </edges>')
    lines.append('  </graph>')
    lines.append('</gexf>')
    return "\n".join(lines) + "\n"
