"""Road-graph world: geometry queries, JSON IO, and procedural builders.

A world is an undirected graph of nodes (meters) and edges carrying a road
width.  Junctions are nodes of degree >= 3.  The same geometry backs the
renderer, the navigator's routes, and patrol-route scoring.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .seeding import rng_for


def bearing_of(vec) -> float:
    """Yaw (clockwise-positive from +x) whose heading points along vec."""
    return math.atan2(-vec[1], vec[0])


class WorldError(ValueError):
    pass


@dataclass
class RoadGraph:
    nodes: dict[int, np.ndarray] = field(default_factory=dict)
    edges: list[tuple[int, int, float]] = field(default_factory=list)

    def __post_init__(self):
        self._validate()
        self._seg_a = np.array([self.nodes[a] for a, _, _ in self.edges], dtype=float).reshape(-1, 2)
        self._seg_b = np.array([self.nodes[b] for _, b, _ in self.edges], dtype=float).reshape(-1, 2)
        self._half_w = np.array([w / 2.0 for _, _, w in self.edges], dtype=float)
        self._incident: dict[int, list[int]] = {nid: [] for nid in self.nodes}
        for i, (a, b, _) in enumerate(self.edges):
            self._incident[a].append(i)
            self._incident[b].append(i)

    def _validate(self):
        if not self.nodes:
            raise WorldError("world has no nodes")
        for nid, p in self.nodes.items():
            self.nodes[nid] = np.asarray(p, dtype=float)
        seen = set()
        for a, b, w in self.edges:
            if a not in self.nodes or b not in self.nodes:
                raise WorldError(f"edge ({a},{b}) references unknown node")
            if w <= 0:
                raise WorldError(f"edge ({a},{b}) has non-positive width {w}")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise WorldError(f"duplicate edge {key}")
            seen.add(key)
        if self.edges and not self._is_connected():
            raise WorldError("road graph is not connected")

    def _is_connected(self) -> bool:
        adj: dict[int, set[int]] = {nid: set() for nid in self.nodes}
        for a, b, _ in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        start = next(iter(self.nodes))
        stack, seen = [start], {start}
        while stack:
            for nxt in adj[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return len(seen) == len(self.nodes)

    # -- queries ---------------------------------------------------------

    def degree(self, nid: int) -> int:
        return len(self._incident[nid])

    @property
    def junction_nodes(self) -> list[int]:
        return [nid for nid in self.nodes if self.degree(nid) >= 3]

    def incident_edges(self, nid: int) -> list[int]:
        return list(self._incident[nid])

    def edges_near(self, lo, hi, pad: float = 0.0) -> np.ndarray:
        """Indices of edges whose inflated bounding box meets [lo, hi]."""
        lo = np.asarray(lo, float) - (self._half_w + pad)[:, None]
        hi = np.asarray(hi, float) + (self._half_w + pad)[:, None]
        emin = np.minimum(self._seg_a, self._seg_b)
        emax = np.maximum(self._seg_a, self._seg_b)
        keep = np.all(emax >= lo, axis=1) & np.all(emin <= hi, axis=1)
        return np.flatnonzero(keep)

    def _segment_distances(self, points: np.ndarray, edge_idx: np.ndarray) -> np.ndarray:
        """(N, E) distances from each point to each selected segment."""
        a = self._seg_a[edge_idx][None, :, :]
        d = (self._seg_b[edge_idx] - self._seg_a[edge_idx])[None, :, :]
        rel = points[:, None, :] - a
        denom = np.maximum((d * d).sum(-1), 1e-12)
        t = np.clip((rel * d).sum(-1) / denom, 0.0, 1.0)
        closest = a + t[..., None] * d
        return np.linalg.norm(points[:, None, :] - closest, axis=-1)

    def road_coverage(self, points: np.ndarray, edge_idx: np.ndarray | None = None) -> np.ndarray:
        """Per point: max over edges of (half width - centerline distance).

        Positive values are on-road, with magnitude the depth into the road.
        """
        points = np.atleast_2d(np.asarray(points, float))
        if edge_idx is None:
            edge_idx = np.arange(len(self.edges))
        if len(edge_idx) == 0:
            return np.full(len(points), -np.inf)
        dist = self._segment_distances(points, edge_idx)
        return (self._half_w[edge_idx][None, :] - dist).max(axis=1)

    def nearest_road(self, point) -> tuple[float, float, int]:
        """(centerline distance, undirected tangent yaw in (-pi/2, pi/2], edge)."""
        p = np.atleast_2d(np.asarray(point, float))
        all_idx = np.arange(len(self.edges))
        dist = self._segment_distances(p, all_idx)[0]
        i = int(np.argmin(dist))
        a, b, _ = self.edges[i]
        tangent = bearing_of(self.nodes[b] - self.nodes[a])
        # roads are undirected: fold the tangent into a half-turn range
        while tangent <= -math.pi / 2:
            tangent += math.pi
        while tangent > math.pi / 2:
            tangent -= math.pi
        return float(dist[i]), tangent, i

    def junction_distance(self, point) -> float:
        """Distance from point to the nearest junction node (inf if none)."""
        js = self.junction_nodes
        if not js:
            return math.inf
        p = np.asarray(point, float)
        return float(min(np.linalg.norm(self.nodes[j] - p) for j in js))

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        pts = np.array(list(self.nodes.values()))
        return pts.min(axis=0), pts.max(axis=0)

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": nid, "x": float(p[0]), "y": float(p[1])}
                      for nid, p in sorted(self.nodes.items())],
            "edges": [{"a": a, "b": b, "width": float(w)} for a, b, w in self.edges],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RoadGraph":
        try:
            nodes = {int(n["id"]): np.array([n["x"], n["y"]], float) for n in data["nodes"]}
            edges = [(int(e["a"]), int(e["b"]), float(e["width"])) for e in data["edges"]]
        except (KeyError, TypeError) as exc:
            raise WorldError(f"malformed road graph: {exc}") from exc
        if len(nodes) != len(data["nodes"]):
            raise WorldError("duplicate node ids")
        return cls(nodes=nodes, edges=edges)

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1)

    @classmethod
    def load(cls, path) -> "RoadGraph":
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass
class Route:
    """Ordered node walk through a world, parameterized by arc length."""

    node_ids: list[int]
    points: np.ndarray
    cum: np.ndarray

    @classmethod
    def from_nodes(cls, world: RoadGraph, node_ids: list[int]) -> "Route":
        if len(node_ids) < 2:
            raise WorldError("route needs at least two nodes")
        pts = np.array([world.nodes[n] for n in node_ids], float)
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(seg <= 0):
            raise WorldError("route contains a zero-length segment")
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        return cls(node_ids=node_ids, points=pts, cum=cum)

    @property
    def length(self) -> float:
        return float(self.cum[-1])

    def _segment_index(self, s: float) -> int:
        i = int(np.searchsorted(self.cum, s, side="right")) - 1
        return min(max(i, 0), len(self.points) - 2)

    def position_at(self, s: float) -> np.ndarray:
        s = min(max(s, 0.0), self.length)
        i = self._segment_index(s)
        seg_len = self.cum[i + 1] - self.cum[i]
        t = (s - self.cum[i]) / seg_len
        return (1 - t) * self.points[i] + t * self.points[i + 1]

    def bearing_at(self, s: float) -> float:
        s = min(max(s, 0.0), self.length)
        i = self._segment_index(s)
        return bearing_of(self.points[i + 1] - self.points[i])


def random_route(world: RoadGraph, rng: np.random.Generator, start: int | None = None,
                 min_length: float = 300.0) -> Route:
    """Random walk that never immediately backtracks, until min_length."""
    node_ids = list(world.nodes)
    if start is None:
        start = node_ids[int(rng.integers(len(node_ids)))]
    walk = [start]
    prev = None
    total = 0.0
    while total < min_length:
        options = []
        for ei in world.incident_edges(walk[-1]):
            a, b, _ = world.edges[ei]
            nxt = b if a == walk[-1] else a
            if nxt != prev:
                options.append(nxt)
        if not options:
            if prev is None:
                raise WorldError(f"node {walk[-1]} has no outgoing edges")
            options = [prev]  # dead end: turn around
        nxt = options[int(rng.integers(len(options)))]
        total += float(np.linalg.norm(world.nodes[nxt] - world.nodes[walk[-1]]))
        prev = walk[-1]
        walk.append(nxt)
    return Route.from_nodes(world, walk)


def route_fillet(route: Route, rng: np.random.Generator,
                 radius_range: tuple = (2.5, 6.0),
                 spacing: float = 0.5) -> Route:
    """Round each route corner with a random-radius arc, like a driven path.

    Vehicles do not pivot on a point: they start bending before a corner
    and straighten after it, with a radius that varies turn to turn. The
    tangent offset is capped so neighbouring fillets never overlap.
    """

    pts = route.points
    out = [pts[0]]
    for i in range(1, len(pts) - 1):
        a, p, b = pts[i - 1], pts[i], pts[i + 1]
        u = p - a
        v = b - p
        lu, lv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
        u, v = u / lu, v / lv
        cross = float(u[0] * v[1] - u[1] * v[0])
        gamma = math.atan2(abs(cross), float(np.dot(u, v)))
        radius = float(rng.uniform(*radius_range))
        if gamma < 0.05 or gamma > math.pi - 1e-6:
            out.append(p)
            continue
        offset = min(radius * math.tan(gamma / 2.0), 0.45 * lu, 0.45 * lv)
        radius = offset / math.tan(gamma / 2.0)
        entry = p - u * offset
        side = 1.0 if cross > 0 else -1.0
        normal = side * np.array([-u[1], u[0]])
        center = entry + radius * normal
        a0 = math.atan2(entry[1] - center[1], entry[0] - center[0])
        steps = max(2, int(math.ceil(radius * gamma / spacing)))
        for k in range(steps + 1):
            ang = a0 + side * gamma * k / steps
            out.append(center + radius * np.array([math.cos(ang), math.sin(ang)]))
    out.append(pts[-1])
    dedup = [out[0]]
    for q in out[1:]:
        if float(np.linalg.norm(q - dedup[-1])) > 1e-9:
            dedup.append(q)
    new_pts = np.array(dedup)
    seg = np.linalg.norm(np.diff(new_pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    return Route(node_ids=list(route.node_ids), points=new_pts, cum=cum)


# -- procedural worlds ----------------------------------------------------

def straight_world(length: float = 400.0, width: float = 6.0, angle: float = 0.0) -> RoadGraph:
    """A single straight road through the origin at a given bearing."""
    h = np.array([math.cos(angle), -math.sin(angle)])
    half = length / 2.0
    return RoadGraph(nodes={0: -half * h, 1: half * h}, edges=[(0, 1, width)])


def arc_world(radius: float = 60.0, span: float = math.pi, segments: int = 24,
              width: float = 6.0) -> RoadGraph:
    """A circular-arc road approximated by a polyline, starting at the origin
    heading +x and bending rightward."""
    nodes = {}
    center = np.array([0.0, -radius])
    for i in range(segments + 1):
        a = span * i / segments
        nodes[i] = center + radius * np.array([math.sin(a), math.cos(a)])
    edges = [(i, i + 1, width) for i in range(segments)]
    return RoadGraph(nodes=nodes, edges=edges)


def hex_world(seed: int = 0, rings_x: int = 3, rings_y: int = 3, edge_len: float = 45.0,
              width: float = 6.0, jitter: float = 0.12, subdiv: int = 3,
              curve_jitter: float = 0.05) -> RoadGraph:
    """Honeycomb road network: every interior node is a symmetric Y junction.

    Node positions are jittered so edge bearings and branch angles vary
    between worlds; edges are subdivided with small lateral offsets to add
    gentle curvature between junctions.
    """
    rng = rng_for(seed, "hex-world")
    raw_nodes: dict[tuple[int, int, int], np.ndarray] = {}
    dx = edge_len * math.sqrt(3.0)
    for iy in range(rings_y + 1):
        for ix in range(rings_x + 1):
            base = np.array([ix * dx + (iy % 2) * dx / 2.0, iy * 1.5 * edge_len])
            raw_nodes[(ix, iy, 0)] = base
            raw_nodes[(ix, iy, 1)] = base + np.array([0.0, edge_len])
    raw_edges = set()

    def add_edge(p, q):
        if p in raw_nodes and q in raw_nodes:
            raw_edges.add((min(p, q), max(p, q)))

    for iy in range(rings_y + 1):
        for ix in range(rings_x + 1):
            add_edge((ix, iy, 0), (ix, iy, 1))
            up = (ix, iy + 1, 0)
            if iy % 2 == 0:
                add_edge((ix, iy, 1), up)
                add_edge((ix - 1, iy + 1, 0), (ix, iy, 1))
            else:
                add_edge((ix, iy, 1), up)
                add_edge((ix + 1, iy + 1, 0), (ix, iy, 1))

    index = {key: i for i, key in enumerate(sorted(raw_nodes))}
    positions = {}
    for key, i in index.items():
        offset = rng.normal(0.0, jitter * edge_len, size=2)
        positions[i] = raw_nodes[key] + offset

    nodes: dict[int, np.ndarray] = dict(positions)
    edges: list[tuple[int, int, float]] = []
    next_id = max(nodes) + 1
    for p, q in sorted(raw_edges):
        a, b = index[p], index[q]
        pa, pb = nodes[a], nodes[b]
        seg = pb - pa
        seg_len = float(np.linalg.norm(seg))
        normal = np.array([-seg[1], seg[0]]) / seg_len
        chain = [a]
        for k in range(1, subdiv):
            t = k / subdiv
            lateral = rng.normal(0.0, curve_jitter * seg_len)
            nodes[next_id] = pa + t * seg + lateral * normal
            chain.append(next_id)
            next_id += 1
        chain.append(b)
        w = width * float(rng.uniform(0.9, 1.1))
        for u, v in zip(chain[:-1], chain[1:]):
            edges.append((u, v, w))

    graph = RoadGraph(nodes=nodes, edges=edges)
    return graph


def fork_world(turns=("R", "L", "R"), leg: float = 110.0, stub: float = 90.0,
               tail: float = 130.0, branch_angle: float = math.pi / 3,
               width: float = 6.0) -> RoadGraph:
    """A chain of symmetric forks; the scripted side continues, the other
    dead-ends. Node 0 is the start, forks are 1..len(turns), the main path
    ends at len(turns)+1 and the stub off fork k ends at 100+k.

    Each fork splits the approach heading by +-branch_angle, so a patrol
    must commit to one side at every junction. "R" turns clockwise.
    """

    def heading(h):
        return np.array([math.cos(h), -math.sin(h)])

    nodes = {0: np.array([0.0, 0.0])}
    edges = []
    h = 0.0
    pos = nodes[0] + leg * heading(h)
    for k, turn in enumerate(turns, start=1):
        nodes[k] = pos.copy()
        edges.append((k - 1, k, width))
        sign = 1.0 if str(turn).upper().startswith("R") else -1.0
        nodes[100 + k] = pos + stub * heading(h - sign * branch_angle)
        edges.append((k, 100 + k, width))
        h = h + sign * branch_angle
        pos = pos + (tail if k == len(turns) else leg) * heading(h)
    end = len(turns) + 1
    nodes[end] = pos
    edges.append((len(turns), end, width))
    return RoadGraph(nodes=nodes, edges=edges)
