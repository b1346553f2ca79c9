"""One-candidate-per-keyword selection as a clustered shortest-route problem.

Each keyword's candidate list becomes a cluster; pairwise costs combine the
graph hop distance between candidates with their retrieval ranks. The exact
solver searches all cluster orders with a per-order dynamic program. The
approximate path reduces the clustered problem to an asymmetric TSP (one
zero-cost directed cycle per cluster, inter-cluster arcs shifted to the
cycle predecessor and offset by a constant larger than any route), solves it
with nearest-neighbour construction plus 2-opt and Or-opt local search, and
decodes the tour's cluster entry points back into a selection.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from .errors import InstanceError, TooLargeError
from .index import CandidateList
from .kg import DISCONNECTED, HopOracle, Kind

DEFAULT_BUDGET = 10_000_000
DEFAULT_RANK_WEIGHT = 1.0

_EPS = 1e-9


@dataclass(frozen=True)
class GtspNode:
    uri: str
    kind: Kind
    rank: int
    cluster: int
    graph_node: int | None = None


@dataclass
class GtspInstance:
    keywords: list[str]
    nodes: list[GtspNode]
    clusters: list[list[int]]
    cost: np.ndarray
    disconnect_penalty: float
    dropped: list[str] = field(default_factory=list)

    @property
    def cluster_count(self) -> int:
        return len(self.clusters)

    def to_json(self) -> str:
        payload = {
            "keywords": self.keywords,
            "nodes": [
                {"uri": n.uri, "kind": n.kind.value, "rank": n.rank, "cluster": n.cluster}
                for n in self.nodes
            ],
            "clusters": self.clusters,
            "cost": self.cost.tolist(),
            "disconnect_penalty": self.disconnect_penalty,
        }
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GtspInstance":
        payload = json.loads(text)
        nodes = [
            GtspNode(uri=n["uri"], kind=Kind(n["kind"]), rank=n["rank"], cluster=n["cluster"])
            for n in payload["nodes"]
        ]
        return cls(
            keywords=payload["keywords"],
            nodes=nodes,
            clusters=[list(c) for c in payload["clusters"]],
            cost=np.asarray(payload["cost"], dtype=np.float64),
            disconnect_penalty=payload["disconnect_penalty"],
        )


@dataclass
class Assignment:
    """One chosen node per cluster plus the cluster visit order."""

    order: list[int]
    chosen: list[int]
    total_cost: float

    def chosen_uris(self, instance: GtspInstance) -> dict[int, str]:
        return {c: instance.nodes[n].uri for c, n in enumerate(self.chosen)}

    def recompute_cost(self, instance: GtspInstance, cycle: bool = False) -> float:
        route = [self.chosen[c] for c in self.order]
        total = sum(
            float(instance.cost[route[i], route[i + 1]]) for i in range(len(route) - 1)
        )
        if cycle and len(route) > 1:
            total += float(instance.cost[route[-1], route[0]])
        return total


def disconnect_penalty(cap: int, max_rank: int) -> float:
    """Hop substitute for pairs beyond the cap: worse than any connected pair."""
    return float(cap + 2 * max_rank + 1)


def build_instance(
    lists: list[CandidateList],
    oracle: HopOracle,
    rank_weight: float = DEFAULT_RANK_WEIGHT,
) -> GtspInstance:
    """Build the clustered instance from candidate lists.

    cost(u, v) = hops(u, v) + rank_weight * (rank_u + rank_v), with the
    disconnect penalty substituted for pairs beyond the oracle's cap.
    Candidates that resolve to no graph node are dropped with a note; a
    cluster losing all members is an error.
    """
    if len(lists) < 2:
        raise InstanceError("need at least 2 candidate lists")
    if rank_weight < 0:
        raise InstanceError("rank_weight must be >= 0")
    nodes: list[GtspNode] = []
    clusters: list[list[int]] = []
    keywords: list[str] = []
    dropped: list[str] = []
    for cluster_id, clist in enumerate(lists):
        members: list[int] = []
        for cand in clist.candidates:
            graph_node = oracle.graph.try_node_id(cand.uri, cand.kind)
            if graph_node is None:
                dropped.append(cand.uri)
                continue
            members.append(len(nodes))
            nodes.append(
                GtspNode(
                    uri=cand.uri,
                    kind=cand.kind,
                    rank=cand.initial_rank,
                    cluster=cluster_id,
                    graph_node=graph_node,
                )
            )
        if not members:
            raise InstanceError(
                f"no resolvable candidates left for keyword {clist.keyword!r}"
            )
        clusters.append(members)
        keywords.append(clist.keyword)

    max_rank = max(node.rank for node in nodes)
    penalty = disconnect_penalty(oracle.cap, max_rank)
    n = len(nodes)
    cost = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            d = oracle.distance_by_id(nodes[i].graph_node, nodes[j].graph_node)
            hops = float(d) if d != DISCONNECTED else penalty
            value = hops + rank_weight * (nodes[i].rank + nodes[j].rank)
            cost[i, j] = value
            cost[j, i] = value
    return GtspInstance(
        keywords=keywords,
        nodes=nodes,
        clusters=clusters,
        cost=cost,
        disconnect_penalty=penalty,
        dropped=dropped,
    )


# ---------------------------------------------------------------------------
# Exact solving
# ---------------------------------------------------------------------------

_State = tuple[float, tuple[str, ...], tuple[int, ...]]


def _best_path_for_order(instance: GtspInstance, order: tuple[int, ...]) -> _State:
    """Cheapest selection for a fixed cluster visit order (open path).

    States compare as (cost, uri sequence, node sequence), so equal-cost
    selections resolve to the lexicographically smallest uri sequence.
    """
    cost = instance.cost
    nodes = instance.nodes
    states: dict[int, _State] = {
        n: (0.0, (nodes[n].uri,), (n,)) for n in instance.clusters[order[0]]
    }
    for cluster in order[1:]:
        next_states: dict[int, _State] = {}
        for n in instance.clusters[cluster]:
            best: _State | None = None
            for prev, (c, uris, route) in states.items():
                candidate = (c + float(cost[prev, n]), uris + (nodes[n].uri,), route + (n,))
                if best is None or candidate < best:
                    best = candidate
            next_states[n] = best  # type: ignore[assignment]
        states = next_states
    return min(states.values())


def _best_cycle_for_order(instance: GtspInstance, order: tuple[int, ...]) -> _State:
    """Cheapest selection for a fixed cluster order, closing back to the start node."""
    cost = instance.cost
    nodes = instance.nodes
    best_overall: _State | None = None
    for start in instance.clusters[order[0]]:
        states: dict[int, _State] = {start: (0.0, (nodes[start].uri,), (start,))}
        for cluster in order[1:]:
            next_states: dict[int, _State] = {}
            for n in instance.clusters[cluster]:
                best: _State | None = None
                for prev, (c, uris, route) in states.items():
                    candidate = (
                        c + float(cost[prev, n]),
                        uris + (nodes[n].uri,),
                        route + (n,),
                    )
                    if best is None or candidate < best:
                        best = candidate
                next_states[n] = best  # type: ignore[assignment]
            states = next_states
        for c, uris, route in states.values():
            closed = (c + float(cost[route[-1], start]), uris, route)
            if best_overall is None or closed < best_overall:
                best_overall = closed
    return best_overall  # type: ignore[return-value]


def enumeration_size(instance: GtspInstance) -> int:
    """Number of (selection, order) combinations the exact solver covers."""
    return math.prod(len(c) for c in instance.clusters) * math.factorial(
        len(instance.clusters)
    )


def solve_exact(
    instance: GtspInstance,
    budget: int = DEFAULT_BUDGET,
    cycle: bool = False,
) -> Assignment:
    """Globally optimal assignment over all selections and cluster orders.

    Refuses instances whose enumeration size exceeds ``budget`` so callers
    can fall back to the approximate solver. Ties break on the uri sequence
    along the route, then on the cluster order.
    """
    if not instance.clusters:
        raise InstanceError("instance has no clusters")
    if any(not members for members in instance.clusters):
        raise InstanceError("instance has an empty cluster")
    size = enumeration_size(instance)
    if size > budget:
        raise TooLargeError(
            f"instance enumerates {size} routes, above the budget of {budget}"
        )
    solve_order = _best_cycle_for_order if cycle else _best_path_for_order
    best: tuple[float, tuple[str, ...], tuple[int, ...], tuple[int, ...]] | None = None
    for order in permutations(range(instance.cluster_count)):
        cost, uris, route = solve_order(instance, order)
        key = (cost, uris, order, route)
        if best is None or key < best:
            best = key
    cost, _uris, order, route = best
    chosen = [0] * instance.cluster_count
    for cluster, node in zip(order, route):
        chosen[cluster] = node
    return Assignment(order=list(order), chosen=chosen, total_cost=cost)


# ---------------------------------------------------------------------------
# Reduction to asymmetric TSP
# ---------------------------------------------------------------------------


@dataclass
class AtspInstance:
    cost: np.ndarray

    @property
    def n(self) -> int:
        return int(self.cost.shape[0])


@dataclass
class NoonBeanMapping:
    """How ATSP nodes map back onto the clustered instance."""

    cluster_of: list[int]
    gtsp_node: list[int]
    offset: float  # the constant added to every inter-cluster arc
    cluster_count: int


def noon_bean(instance: GtspInstance) -> tuple[AtspInstance, NoonBeanMapping]:
    """Reduce the clustered instance to an asymmetric TSP.

    One ATSP node is created per (cluster, member) pair, which also makes
    overlapping clusters disjoint by duplication. Within a cluster the nodes
    form a zero-cost directed cycle; an arc that leaves the cluster from
    node x carries the original cost of the *successor* of x in that cycle,
    plus a constant M exceeding the sum of all original costs. An optimal
    tour therefore traverses each cluster in one block and enters it at the
    node it selects, and its cost is the optimal cluster-cycle cost plus
    cluster_count * M.
    """
    p = instance.cluster_count
    if p < 2:
        raise InstanceError("the reduction needs at least 2 clusters")
    cluster_of: list[int] = []
    gtsp_node: list[int] = []
    for cluster_id, members in enumerate(instance.clusters):
        for node in members:
            cluster_of.append(cluster_id)
            gtsp_node.append(node)
    n = len(cluster_of)

    offset = float(instance.cost.sum()) + 1.0
    forbidden = (p + 1) * offset

    atsp_cost = np.full((n, n), forbidden, dtype=np.float64)
    start = 0
    positions: list[list[int]] = []
    for members in instance.clusters:
        ids = list(range(start, start + len(members)))
        positions.append(ids)
        start += len(members)
    for cluster_id, ids in enumerate(positions):
        r = len(ids)
        if r > 1:
            for j in range(r):
                atsp_cost[ids[j], ids[(j + 1) % r]] = 0.0
        for j in range(r):
            source = ids[(j - 1) % r]  # arcs leave from the cycle predecessor
            u = gtsp_node[ids[j]]
            for other_cluster, other_ids in enumerate(positions):
                if other_cluster == cluster_id:
                    continue
                for v_id in other_ids:
                    atsp_cost[source, v_id] = (
                        float(instance.cost[u, gtsp_node[v_id]]) + offset
                    )
    mapping = NoonBeanMapping(
        cluster_of=cluster_of, gtsp_node=gtsp_node, offset=offset, cluster_count=p
    )
    return AtspInstance(cost=atsp_cost), mapping


def decode_selection(tour: list[int], mapping: NoonBeanMapping) -> tuple[list[int], list[int]]:
    """Read the cluster entry points (and their order) off an ATSP tour.

    Returns (chosen, order): the selected original node per cluster and the
    clusters in first-entry order. Tours that do not keep clusters
    contiguous still decode (first entry wins).
    """
    chosen: dict[int, int] = {}
    order: list[int] = []
    n = len(tour)
    for idx in range(n):
        node = tour[idx]
        prev = tour[idx - 1]
        if mapping.cluster_of[prev] != mapping.cluster_of[node]:
            cluster = mapping.cluster_of[node]
            if cluster not in chosen:
                chosen[cluster] = mapping.gtsp_node[node]
                order.append(cluster)
    selected = [chosen[c] for c in range(mapping.cluster_count)]
    return selected, order


# ---------------------------------------------------------------------------
# Local-search tour solver
# ---------------------------------------------------------------------------


def tour_cost(atsp: AtspInstance, tour: list[int]) -> float:
    cost = atsp.cost
    return float(sum(cost[tour[i], tour[(i + 1) % len(tour)]] for i in range(len(tour))))


def _nearest_neighbor(atsp: AtspInstance, start: int) -> list[int]:
    n = atsp.n
    tour = [start]
    unvisited = np.ones(n, dtype=bool)
    unvisited[start] = False
    for _ in range(n - 1):
        row = np.where(unvisited, atsp.cost[tour[-1]], np.inf)
        nxt = int(np.argmin(row))
        tour.append(nxt)
        unvisited[nxt] = False
    return tour


def _best_two_opt(cost: np.ndarray, tour: list[int]):
    """Best segment-reversal move, evaluated with direction-aware sums."""
    n = len(tour)
    t = np.asarray(tour)
    t_next = np.roll(t, -1)
    pair = cost[np.ix_(t, t)]
    pair_next = np.roll(np.roll(pair, -1, axis=0), -1, axis=1)
    forward = cost[t, t_next]
    backward = cost[t_next, t]
    pref_f = np.concatenate(([0.0], np.cumsum(forward)))
    pref_b = np.concatenate(([0.0], np.cumsum(backward)))

    i = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    delta = (
        pair
        + pair_next
        + (pref_b[j] - pref_b[np.minimum(i + 1, n)])
        - forward[:, None]
        - forward[None, :]
        - (pref_f[j] - pref_f[np.minimum(i + 1, n)])
    )
    delta = np.where(j >= i + 2, delta, np.inf)
    flat = int(np.argmin(delta))
    bi, bj = divmod(flat, n)
    return float(delta[bi, bj]), bi, bj


def _apply_two_opt(tour: list[int], i: int, j: int) -> None:
    tour[i + 1 : j + 1] = reversed(tour[i + 1 : j + 1])


def _best_or_opt(cost: np.ndarray, tour: list[int], length: int):
    """Best relocation of a segment of ``length`` nodes, forward or reversed."""
    n = len(tour)
    if n < length + 2:
        return math.inf, None
    t = np.asarray(tour)
    pair = cost[np.ix_(t, t)]
    idx = np.arange(n)
    forward = pair[idx, (idx + 1) % n]
    backward = pair[(idx + 1) % n, idx]
    pref_f = np.concatenate(([0.0], np.cumsum(forward)))
    pref_b = np.concatenate(([0.0], np.cumsum(backward)))

    starts = np.arange(0, n - length)  # segments never wrap past the tour end
    before = (starts - 1) % n
    after = starts + length
    removal = pair[before, starts] + pair[after - 1, after] - pair[before, after]
    seg_f = pref_f[starts + length - 1] - pref_f[starts]
    seg_r = pref_b[starts + length - 1] - pref_b[starts]

    gaps = idx
    gaps_next = (gaps + 1) % n
    base = forward[gaps]
    delta_f = (
        pair.T[np.ix_(starts, gaps)]
        + pair[np.ix_(after - 1, gaps_next)]
        - base[None, :]
        - removal[:, None]
    )
    delta_r = (
        pair.T[np.ix_(after - 1, gaps)]
        + pair[np.ix_(starts, gaps_next)]
        - base[None, :]
        - removal[:, None]
        + (seg_r - seg_f)[:, None]
    )
    inside = (gaps[None, :] >= starts[:, None]) & (
        gaps[None, :] <= starts[:, None] + length - 1
    )
    noop = gaps[None, :] == before[:, None]
    invalid = inside | noop
    delta_f = np.where(invalid, np.inf, delta_f)
    delta_r = np.where(invalid, np.inf, delta_r)

    flat_f = int(np.argmin(delta_f))
    flat_r = int(np.argmin(delta_r))
    sf, gf = divmod(flat_f, n)
    sr, gr = divmod(flat_r, n)
    if delta_f[sf, gf] <= delta_r[sr, gr]:
        return float(delta_f[sf, gf]), (int(starts[sf]), int(gf), False)
    return float(delta_r[sr, gr]), (int(starts[sr]), int(gr), True)


def _apply_or_opt(tour: list[int], length: int, move) -> list[int]:
    s, g, reverse = move
    seg = tour[s : s + length]
    if reverse:
        seg = seg[::-1]
    rest = tour[:s] + tour[s + length :]
    # index of the gap node within the shortened tour
    anchor = tour[g]
    pos = rest.index(anchor)
    return rest[: pos + 1] + seg + rest[pos + 1 :]


def _local_search(atsp: AtspInstance, tour: list[int], move_cap: int = 10_000) -> list[int]:
    cost = atsp.cost
    moves = 0
    improved = True
    while improved and moves < move_cap:
        improved = False
        delta, i, j = _best_two_opt(cost, tour)
        if delta < -_EPS:
            _apply_two_opt(tour, i, j)
            moves += 1
            improved = True
            continue
        for length in (1, 2, 3):
            delta, move = _best_or_opt(cost, tour, length)
            if move is not None and delta < -_EPS:
                tour = _apply_or_opt(tour, length, move)
                moves += 1
                improved = True
                break
    return tour


def _normalize_rotation(tour: list[int]) -> list[int]:
    pivot = tour.index(min(tour))
    return tour[pivot:] + tour[:pivot]


def solve_lk(atsp: AtspInstance, seed: int = 0, starts: int = 6) -> list[int]:
    """Heuristic tour: multi-start nearest neighbour plus 2-opt/Or-opt descent.

    Deterministic for a given seed; the returned tour never costs more than
    its nearest-neighbour construction.
    """
    n = atsp.n
    if n < 3:
        raise InstanceError("tour search needs at least 3 nodes")
    rng = random.Random(seed)
    count = min(n, starts)
    start_nodes = sorted(rng.sample(range(n), count))
    best: tuple[float, tuple[int, ...]] | None = None
    for start in start_nodes:
        tour = _nearest_neighbor(atsp, start)
        tour = _local_search(atsp, tour)
        tour = _normalize_rotation(tour)
        key = (tour_cost(atsp, tour), tuple(tour))
        if best is None or key < best:
            best = key
    return list(best[1])


def solve_approx(instance: GtspInstance, seed: int = 0) -> Assignment:
    """Approximate assignment: reduce, tour, decode, then re-optimise the path.

    The tour fixes a cyclic cluster order. Every rotation (and reversal) of
    it is evaluated as an open path with the cheapest selection for that
    order, and the winning sequence is polished by relocating one cluster at
    a time until no move improves it. Still a heuristic: only orders
    reachable from the tour are ever considered.
    """
    atsp, mapping = noon_bean(instance)
    if atsp.n < 3:
        tour = list(range(atsp.n))
    else:
        tour = solve_lk(atsp, seed=seed)
    _chosen, order = decode_selection(tour, mapping)

    def evaluate(sequence: tuple[int, ...]):
        cost, uris, route = _best_path_for_order(instance, sequence)
        return (cost, uris, sequence, route)

    best: tuple[float, tuple[str, ...], tuple[int, ...], tuple[int, ...]] | None = None
    for rotation in range(len(order)):
        rotated = order[rotation:] + order[:rotation]
        for sequence in (tuple(rotated), tuple(reversed(rotated))):
            key = evaluate(sequence)
            if best is None or key < best:
                best = key

    improved = True
    while improved:
        improved = False
        base = list(best[2])
        p = len(base)
        for i in range(p):
            for j in range(p):
                if i == j:
                    continue
                moved = base[:i] + base[i + 1 :]
                moved.insert(j, base[i])
                if moved == base:
                    continue
                key = evaluate(tuple(moved))
                if key < best:
                    best = key
                    improved = True
                    break
            if improved:
                break

    cost, _uris, sequence, route = best
    chosen = [0] * instance.cluster_count
    for cluster, node in zip(sequence, route):
        chosen[cluster] = node
    return Assignment(order=list(sequence), chosen=chosen, total_cost=cost)
