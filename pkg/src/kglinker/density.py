"""Cross-list connectivity features for candidate re-ranking.

For every candidate, two graph features are accumulated over all candidates
in the *other* keyword lists: how many of them sit within two hops
(connection count) and the sum of capped hop distances to them (hop count).
Both are divided by the number of keyword lists. Pairs inside one list are
never compared, and each unordered cross-list pair is evaluated exactly
once, updating both endpoints.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .errors import InstanceError
from .index import Candidate, CandidateList
from .kg import DISCONNECTED, HopOracle, Kind

logger = logging.getLogger(__name__)

CONNECT_THRESHOLD = 2


@dataclass(frozen=True)
class DensityFeatures:
    candidate: Candidate
    initial_rank: int
    connection_count: float
    hop_count: float


def d_connect(
    oracle: HopOracle,
    a: str,
    b: str,
    kind_a: Kind | None = None,
    kind_b: Kind | None = None,
) -> int:
    """1 if the two nodes are within two hops of each other, else 0."""
    d = oracle.distance(a, b, kind_a, kind_b)
    return 1 if d != DISCONNECTED and d <= CONNECT_THRESHOLD else 0


def compute_features(
    lists: list[CandidateList],
    oracle: HopOracle,
) -> list[list[DensityFeatures]]:
    """Connectivity features for every candidate of every list.

    Candidates that resolve to no graph node are treated as disconnected
    from everything (their pairs are not evaluated against the oracle).
    Raises when fewer than two lists are given, since cross-list evidence is
    undefined for a single keyword.
    """
    n = len(lists)
    if n < 2:
        raise InstanceError("connectivity features need at least 2 candidate lists")
    far = oracle.cap + 1  # finite substitute for pairs beyond the cap

    node_ids: list[list[int | None]] = []
    for clist in lists:
        ids: list[int | None] = []
        for cand in clist.candidates:
            node = oracle.graph.try_node_id(cand.uri, cand.kind)
            if node is None:
                logger.warning("candidate uri %r not in the graph; treated as disconnected", cand.uri)
            ids.append(node)
        node_ids.append(ids)

    connects = [[0] * len(clist.candidates) for clist in lists]
    hop_sums = [[0] * len(clist.candidates) for clist in lists]
    for a in range(n):
        for b in range(a + 1, n):
            for i, node_a in enumerate(node_ids[a]):
                for j, node_b in enumerate(node_ids[b]):
                    if node_a is None or node_b is None:
                        d = DISCONNECTED
                    else:
                        d = oracle.distance_by_id(node_a, node_b)
                    if d != DISCONNECTED and d <= CONNECT_THRESHOLD:
                        connects[a][i] += 1
                        connects[b][j] += 1
                    hops = d if d != DISCONNECTED else far
                    hop_sums[a][i] += hops
                    hop_sums[b][j] += hops

    features: list[list[DensityFeatures]] = []
    for li, clist in enumerate(lists):
        row = [
            DensityFeatures(
                candidate=cand,
                initial_rank=cand.initial_rank,
                connection_count=connects[li][ci] / n,
                hop_count=hop_sums[li][ci] / n,
            )
            for ci, cand in enumerate(clist.candidates)
        ]
        features.append(row)
    return features
