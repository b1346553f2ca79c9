"""Independent brute-force oracles the main code is checked against.

Everything here is deliberately naive and shares no code path with the
package: plain BFS over adjacency built from scratch, full enumeration of
clustered routes, a literal double-loop feature recount, and a bitmask
dynamic program for exact asymmetric tours.
"""

from __future__ import annotations

from collections import deque
from itertools import permutations, product

import numpy as np


def all_pairs_bfs(adjacency: list[list[int]]) -> list[list[int]]:
    """Unbounded all-pairs shortest hop counts; -1 where unreachable."""
    n = len(adjacency)
    table = [[-1] * n for _ in range(n)]
    for source in range(n):
        dist = table[source]
        dist[source] = 0
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v in adjacency[u]:
                if dist[v] == -1:
                    dist[v] = dist[u] + 1
                    queue.append(v)
    return table


def enumerate_gtsp(cost: np.ndarray, clusters: list[list[int]], cycle: bool = False):
    """Minimum route cost over every selection and every cluster order."""
    best = None
    for order in permutations(range(len(clusters))):
        for selection in product(*(clusters[c] for c in order)):
            total = sum(
                float(cost[selection[i], selection[i + 1]])
                for i in range(len(selection) - 1)
            )
            if cycle and len(selection) > 1:
                total += float(cost[selection[-1], selection[0]])
            if best is None or total < best:
                best = total
    return best


def held_karp_atsp(cost: np.ndarray) -> float:
    """Exact minimum tour cost of an asymmetric TSP via bitmask DP."""
    n = int(cost.shape[0])
    if n == 1:
        return 0.0
    if n == 2:
        return float(cost[0, 1] + cost[1, 0])
    full = 1 << n
    dp = np.full((full, n), np.inf)
    dp[1, 0] = 0.0
    for mask in range(1, full):
        if not mask & 1:
            continue
        row = dp[mask]
        if not np.isfinite(row).any():
            continue
        reach = np.min(np.where(np.isfinite(row)[:, None], row[:, None] + cost, np.inf), axis=0)
        for j in range(1, n):
            if mask & (1 << j):
                continue
            nxt = mask | (1 << j)
            if reach[j] < dp[nxt, j]:
                dp[nxt, j] = reach[j]
    last = dp[full - 1] + cost[:, 0]
    return float(np.min(last[1:]))


def naive_density(lists_of_nodes, hop_table, cap):
    """Literal double-loop recount of connection and hop counts.

    ``lists_of_nodes`` holds graph node ids per keyword list; ``hop_table``
    is an unbounded all-pairs distance table. Distances above ``cap`` (or
    unreachable pairs) count as disconnected and contribute cap + 1 hops.
    """
    n = len(lists_of_nodes)
    connect = [[0] * len(lst) for lst in lists_of_nodes]
    hops = [[0] * len(lst) for lst in lists_of_nodes]
    for a in range(n):
        for b in range(n):
            if a >= b:
                continue
            for i, u in enumerate(lists_of_nodes[a]):
                for j, v in enumerate(lists_of_nodes[b]):
                    d = hop_table[u][v] if u is not None and v is not None else -1
                    if d == -1 or d > cap:
                        d_eff = -1
                    else:
                        d_eff = d
                    if d_eff != -1 and d_eff <= 2:
                        connect[a][i] += 1
                        connect[b][j] += 1
                    contribution = d_eff if d_eff != -1 else cap + 1
                    hops[a][i] += contribution
                    hops[b][j] += contribution
    c_features = [[value / n for value in row] for row in connect]
    h_features = [[value / n for value in row] for row in hops]
    return c_features, h_features
