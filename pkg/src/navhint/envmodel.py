"""Synthetic residential graph environments and routes over them.

Nodes stand in for viewpoints: each has a 2-D position, a room label, and up
to four placed objects at absolute bearings. Observations and action labels
are derived from bearings with a fixed quadrant rule, so every generator here
is a pure function of (seed, config).
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field

from . import lexicon

AHEAD = "ahead"
RIGHT = "right"
BEHIND = "behind"
LEFT = "left"

TURN_LEFT = "turn left"
TURN_RIGHT = "turn right"
GO_STRAIGHT = "go straight"
TURN_AROUND = "turn around"
GO_UP = "go up"
GO_DOWN = "go down"

DIRECTION_LABELS = (TURN_LEFT, TURN_RIGHT, GO_STRAIGHT, TURN_AROUND, GO_UP, GO_DOWN)

_QUADRANT_ACTION = {AHEAD: GO_STRAIGHT, RIGHT: TURN_RIGHT, BEHIND: TURN_AROUND, LEFT: TURN_LEFT}


class UnknownNode(KeyError):
    """Node id not present in the environment."""


class ConfigError(ValueError):
    """Environment or route configuration cannot be honored."""


class EnvironmentTooSmall(ValueError):
    """No simple path of the requested length exists."""


def relative_angle(bearing: float, heading: float) -> float:
    return (bearing - heading) % 360.0


def egocentric_direction(bearing: float, heading: float) -> str:
    """Quadrant rule: [315,45) ahead, [45,135) right, [135,225) behind, [225,315) left."""
    delta = relative_angle(bearing, heading)
    if delta < 45.0 or delta >= 315.0:
        return AHEAD
    if delta < 135.0:
        return RIGHT
    if delta < 225.0:
        return BEHIND
    return LEFT


def turn_label(bearing: float, heading: float) -> str:
    """Movement label for heading change, same quadrant rule as observations."""
    return _QUADRANT_ACTION[egocentric_direction(bearing, heading)]


def bearing_between(p: tuple[float, float], q: tuple[float, float]) -> float:
    """Compass bearing: 0 = +y (north), 90 = +x (east), clockwise."""
    return math.degrees(math.atan2(q[0] - p[0], q[1] - p[1])) % 360.0


@dataclass(frozen=True)
class PlacedObject:
    name: str
    bearing: float  # absolute, degrees in [0, 360)


@dataclass(frozen=True)
class Node:
    id: str
    position: tuple[float, float]  # meters
    room_label: str
    objects: tuple[PlacedObject, ...]
    z_level: int = 0


@dataclass(frozen=True)
class Edge:
    from_node: str
    to_node: str
    length_m: float


@dataclass(frozen=True)
class Observation:
    room_label: str
    visible: tuple[tuple[str, str], ...]  # (object name, egocentric direction)


@dataclass(frozen=True)
class Action:
    direction_label: str
    target: str


@dataclass(frozen=True)
class RouteStep:
    node_id: str  # node where the observation is taken
    heading: float  # heading on arrival at node_id
    observation: Observation
    action: Action


@dataclass(frozen=True)
class Route:
    env_id: str
    start_node: str
    start_heading: float
    steps: tuple[RouteStep, ...]

    def node_ids(self) -> list[str]:
        """Visited nodes, start first; the last entry is the goal."""
        return [self.start_node] + [step.action.target for step in self.steps]

    @property
    def goal(self) -> str:
        return self.steps[-1].action.target


@dataclass
class Environment:
    """Immutable after construction; safe to share across concurrent readers."""

    id: str
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    room_vocab: frozenset[str]
    object_vocab: frozenset[str]
    _by_id: dict[str, Node] = field(init=False, repr=False)
    _adjacent: dict[str, tuple[str, ...]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._by_id = {node.id: node for node in self.nodes}
        neighbors: dict[str, list[str]] = {node.id: [] for node in self.nodes}
        for edge in self.edges:
            neighbors[edge.from_node].append(edge.to_node)
            neighbors[edge.to_node].append(edge.from_node)
        self._adjacent = {nid: tuple(sorted(set(adj))) for nid, adj in neighbors.items()}

    def node(self, node_id: str) -> Node:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def neighbors(self, node_id: str) -> tuple[str, ...]:
        self.node(node_id)
        return self._adjacent[node_id]

    def edge_length(self, a: str, b: str) -> float:
        return math.dist(self.node(a).position, self.node(b).position)


@dataclass(frozen=True)
class EnvConfig:
    node_range: tuple[int, int] = (10, 16)
    rooms: tuple[str, ...] = ()
    objects: tuple[str, ...] = ()
    max_objects_per_node: int = 4
    grid_spacing_m: float = 2.0  # ~one hop inside the 3 m success radius
    jitter_m: float = 0.25
    edge_keep_prob: float = 0.55

    def resolved_rooms(self) -> tuple[str, ...]:
        return self.rooms or lexicon.room_names()

    def resolved_objects(self) -> tuple[str, ...]:
        return self.objects or lexicon.object_names()


def _validate_config(config: EnvConfig) -> None:
    lo, hi = config.node_range
    if lo > hi or lo < 2:
        raise ConfigError(f"empty or degenerate node range {config.node_range}")
    if len(config.resolved_rooms()) < 2:
        raise ConfigError("need at least 2 rooms so perturbations have distractors")
    if len(config.resolved_objects()) < 3:
        raise ConfigError("need at least 3 objects so perturbations have distractors")


def generate_environment(seed: int, config: EnvConfig | None = None) -> Environment:
    """Procedurally build a connected, furnished environment. Deterministic in (seed, config)."""
    config = config or EnvConfig()
    _validate_config(config)
    rng = random.Random(seed)
    rooms = config.resolved_rooms()
    objects = config.resolved_objects()

    n = rng.randint(*config.node_range)
    cols = max(2, math.ceil(math.sqrt(n)))
    cells = [(i % cols, i // cols) for i in range(n)]  # row-major fill keeps the grid connected

    positions = {}
    for idx, (cx, cy) in enumerate(cells):
        x = round(cx * config.grid_spacing_m + rng.uniform(-config.jitter_m, config.jitter_m), 2)
        y = round(cy * config.grid_spacing_m + rng.uniform(-config.jitter_m, config.jitter_m), 2)
        positions[idx] = (x, y)

    cell_index = {cell: idx for idx, cell in enumerate(cells)}
    candidate_edges = []
    for idx, (cx, cy) in enumerate(cells):
        for nx, ny in ((cx + 1, cy), (cx, cy + 1)):
            if (nx, ny) in cell_index:
                candidate_edges.append((idx, cell_index[(nx, ny)]))

    # Spanning tree first (BFS over the full grid), then keep a random subset of the rest.
    adjacency: dict[int, list[int]] = {i: [] for i in range(n)}
    for a, b in candidate_edges:
        adjacency[a].append(b)
        adjacency[b].append(a)
    tree_edges: set[tuple[int, int]] = set()
    seen = {0}
    queue = [0]
    while queue:
        cur = queue.pop(0)
        for nxt in adjacency[cur]:
            if nxt not in seen:
                seen.add(nxt)
                tree_edges.add((min(cur, nxt), max(cur, nxt)))
                queue.append(nxt)
    kept = []
    for a, b in candidate_edges:
        key = (min(a, b), max(a, b))
        if key in tree_edges or rng.random() < config.edge_keep_prob:
            kept.append(key)
    kept = sorted(set(kept))

    # Room regions: grow a handful of seeds so labels are spatially coherent.
    n_regions = min(len(rooms), max(2, n // 4))
    region_labels = rng.sample(list(rooms), n_regions)
    seeds = rng.sample(range(n), n_regions)
    region_adj: dict[int, list[int]] = {i: [] for i in range(n)}
    for a, b in kept:
        region_adj[a].append(b)
        region_adj[b].append(a)
    room_of: dict[int, str] = {}
    frontier = list(zip(seeds, region_labels))
    for idx, label in frontier:
        room_of[idx] = label
    queue = list(frontier)
    while queue:
        cur, label = queue.pop(0)
        for nxt in sorted(region_adj[cur]):
            if nxt not in room_of:
                room_of[nxt] = label
                queue.append((nxt, label))
    for idx in range(n):  # isolated from all seeds can't happen on a connected graph, but be safe
        room_of.setdefault(idx, region_labels[0])
    if len(set(room_of.values())) < 2:
        room_of[max(room_of)] = next(r for r in region_labels + list(rooms) if r != room_of[0])

    placed_objects: dict[int, tuple[PlacedObject, ...]] = {}
    distinct: set[str] = set()
    for idx in range(n):
        count = rng.choice((0, 1, 1, 2, 2, 3, config.max_objects_per_node))
        count = min(count, config.max_objects_per_node)
        names = rng.sample(list(objects), count) if count else []
        placed = tuple(PlacedObject(name, round(rng.uniform(0.0, 359.9), 1)) for name in names)
        placed_objects[idx] = placed
        distinct.update(p.name for p in placed)
    while len(distinct) < 3:  # perturbation fallback needs distractors
        idx = rng.randrange(n)
        if len(placed_objects[idx]) >= config.max_objects_per_node:
            continue
        name = rng.choice([o for o in objects if o not in distinct])
        placed_objects[idx] = placed_objects[idx] + (
            PlacedObject(name, round(rng.uniform(0.0, 359.9), 1)),
        )
        distinct.add(name)

    nodes = tuple(
        Node(id=f"n{idx}", position=positions[idx], room_label=room_of[idx], objects=placed_objects[idx])
        for idx in range(n)
    )
    edges = tuple(
        Edge(f"n{a}", f"n{b}", math.dist(positions[a], positions[b])) for a, b in kept
    )
    return Environment(
        id=f"env-{seed}",
        nodes=nodes,
        edges=edges,
        room_vocab=frozenset(node.room_label for node in nodes),
        object_vocab=frozenset(obj.name for node in nodes for obj in node.objects),
    )


def observation_at(env: Environment, node_id: str, incoming_heading: float) -> Observation:
    """Egocentric view at a node; depends only on the node and the heading."""
    node = env.node(node_id)
    visible = tuple(
        (obj.name, egocentric_direction(obj.bearing, incoming_heading)) for obj in node.objects
    )
    return Observation(room_label=node.room_label, visible=visible)


def movement_label(env: Environment, current: str, target: str, heading: float) -> str:
    a, b = env.node(current), env.node(target)
    if b.z_level > a.z_level:
        return GO_UP
    if b.z_level < a.z_level:
        return GO_DOWN
    return turn_label(bearing_between(a.position, b.position), heading)


def _random_simple_path(env: Environment, rng: random.Random, start: str, length: int) -> list[str] | None:
    path = [start]
    used = {start}

    def extend() -> bool:
        if len(path) == length + 1:
            return True
        options = [nid for nid in env.neighbors(path[-1]) if nid not in used]
        rng.shuffle(options)
        for nxt in options:
            path.append(nxt)
            used.add(nxt)
            if extend():
                return True
            path.pop()
            used.remove(nxt)
        return False

    return path if extend() else None


def sample_route(env: Environment, seed: int, length_range: tuple[int, int] = (1, 5)) -> Route:
    """Sample a simple path and realize it as observation/action steps. Deterministic in seed."""
    lo, hi = length_range
    if lo > hi or lo < 1 or hi > 10:
        raise ConfigError(f"length range {length_range} must be within [1, 10]")
    rng = random.Random(seed)
    length = rng.randint(lo, hi)

    starts = [node.id for node in env.nodes]
    rng.shuffle(starts)
    path = None
    for start in starts:
        path = _random_simple_path(env, rng, start, length)
        if path is not None:
            break
    if path is None:
        raise EnvironmentTooSmall(f"no simple path of length {length} in {env.id}")

    heading = float(rng.choice((0.0, 90.0, 180.0, 270.0)))
    steps = []
    for t in range(length):
        current, nxt = path[t], path[t + 1]
        obs = observation_at(env, current, heading)
        label = movement_label(env, current, nxt, heading)
        steps.append(RouteStep(node_id=current, heading=heading, observation=obs, action=Action(label, nxt)))
        heading = bearing_between(env.node(current).position, env.node(nxt).position)
    return Route(env_id=env.id, start_node=path[0], start_heading=steps[0].heading, steps=tuple(steps))


def arrival_heading(env: Environment, route: Route) -> float:
    """Heading a follower has when arriving at the goal node."""
    last = route.steps[-1]
    return bearing_between(env.node(last.node_id).position, env.node(last.action.target).position)


def arrival_observation(env: Environment, route: Route) -> Observation:
    return observation_at(env, route.goal, arrival_heading(env, route))


def path_distance(env: Environment, a: str, b: str) -> float:
    """Shortest-path length in meters over the edge graph (Dijkstra)."""
    env.node(a)
    env.node(b)
    if a == b:
        return 0.0
    dist = {a: 0.0}
    heap = [(0.0, a)]
    while heap:
        d, cur = heapq.heappop(heap)
        if cur == b:
            return d
        if d > dist.get(cur, math.inf):
            continue
        for nxt in env.neighbors(cur):
            nd = d + env.edge_length(cur, nxt)
            if nd < dist.get(nxt, math.inf):
                dist[nxt] = nd
                heapq.heappush(heap, (nd, nxt))
    return math.inf  # unreachable only if the connectivity invariant is violated
