"""Deterministic synthetic worlds: a hand-built mini graph and a generator.

The mini world is a small, fully controlled graph around an ambiguous
"Tesla" mention, used by the worked-example tests and as a quickstart
dataset. The generator builds community-structured worlds: entities and
relations belong to surface-form families that collide across communities,
so retrieval is ambiguous and graph connectivity is what disambiguates.
Everything is driven by one seeded RNG, and serialisation is byte-stable.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class World:
    triples: list[tuple[str, str, str]] = field(default_factory=list)
    labels: list[tuple[str, str, str, float]] = field(default_factory=list)
    expansions: list[tuple[str, str]] = field(default_factory=list)
    questions: list[dict] = field(default_factory=list)

    def triples_text(self) -> str:
        lines = ["# subject\tpredicate\tobject"]
        lines.extend(f"{s}\t{p}\t{o}" for s, p, o in self.triples)
        return "\n".join(lines) + "\n"

    def labels_text(self) -> str:
        lines = ["# uri\tlabel\tkind\tweight"]
        lines.extend(f"{u}\t{l}\t{k}\t{w!r}" for u, l, k, w in self.labels)
        return "\n".join(lines) + "\n"

    def expansions_text(self) -> str:
        lines = ["# label\tvariant"]
        lines.extend(f"{l}\t{v}" for l, v in self.expansions)
        return "\n".join(lines) + "\n"

    def dataset_json(self) -> str:
        return json.dumps(self.questions, indent=2, sort_keys=True) + "\n"

    def write(self, out_dir: str | Path) -> dict[str, str]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "triples": out / "triples.tsv",
            "labels": out / "labels.tsv",
            "expansions": out / "expansions.tsv",
            "dataset": out / "dataset.json",
        }
        paths["triples"].write_text(self.triples_text(), encoding="utf-8")
        paths["labels"].write_text(self.labels_text(), encoding="utf-8")
        paths["expansions"].write_text(self.expansions_text(), encoding="utf-8")
        paths["dataset"].write_text(self.dataset_json(), encoding="utf-8")
        return {name: str(path) for name, path in paths.items()}


def _question(qid: str, text: str, spans: list[tuple[str, str, str]]) -> dict:
    return {
        "id": qid,
        "text": text,
        "spans": [{"phrase": p, "kind": k, "uri": u} for p, k, u in spans],
    }


def mini_world() -> World:
    """Small world where 'Tesla' is ambiguous between a person and a company.

    The company is tied to its founder and to the other question entities,
    while the person's neighbourhood is a dead end for those questions, so
    joint disambiguation must override the retrieval ranks.
    """
    triples = [
        ("dbr:Tesla_Motors", "dbo:foundedBy", "dbr:Elon_Musk"),
        ("dbr:SpaceX", "dbo:foundedBy", "dbr:Elon_Musk"),
        ("dbr:Elon_Musk", "dbo:birthPlace", "dbr:Pretoria"),
        ("dbr:Tesla_Motors", "dbo:industry", "dbr:Automotive"),
        ("dbr:SpaceX", "dbo:industry", "dbr:Aerospace"),
        ("dbr:Nikola_Tesla", "dbo:knownFor", "dbr:Tesla_Coil"),
        ("dbr:Nikola_Tesla", "dbo:nationality", "dbr:Serbia"),
        ("dbr:Pretoria", "dbo:country", "dbr:South_Africa"),
        ("dbr:Serbia", "dbo:capital", "dbr:Belgrade"),
        ("dbr:The_Founder", "dbo:starring", "dbr:Michael_Keaton"),
    ]
    labels = [
        ("dbr:Tesla_Motors", "Tesla Motors", "E", 1.0),
        ("dbr:Tesla_Motors", "Tesla", "E", 1.0),
        ("dbr:Nikola_Tesla", "Nikola Tesla", "E", 1.0),
        ("dbr:Nikola_Tesla", "Tesla", "E", 1.0),
        ("dbr:SpaceX", "SpaceX", "E", 1.0),
        ("dbr:Elon_Musk", "Elon Musk", "E", 1.0),
        ("dbr:Pretoria", "Pretoria", "E", 1.0),
        ("dbr:Automotive", "Automotive", "E", 1.0),
        ("dbr:Aerospace", "Aerospace", "E", 1.0),
        ("dbr:Tesla_Coil", "Tesla Coil", "E", 1.0),
        ("dbr:Serbia", "Serbia", "E", 1.0),
        ("dbr:South_Africa", "South Africa", "E", 1.0),
        ("dbr:Belgrade", "Belgrade", "E", 1.0),
        ("dbr:The_Founder", "The Founder", "E", 1.0),
        ("dbr:Michael_Keaton", "Michael Keaton", "E", 1.0),
        ("dbo:foundedBy", "founded by", "R", 1.0),
        ("dbo:birthPlace", "birth place", "R", 1.0),
        ("dbo:industry", "industry", "R", 1.0),
        ("dbo:knownFor", "known for", "R", 1.0),
        ("dbo:nationality", "nationality", "R", 1.0),
        ("dbo:country", "country", "R", 1.0),
        ("dbo:capital", "capital", "R", 1.0),
        ("dbo:starring", "starring", "R", 1.0),
    ]
    expansions = [
        ("founded by", "founder"),
        ("birth place", "born"),
        ("birth place", "birthplace"),
        ("industry", "business"),
    ]
    questions = [
        _question(
            "mini-1",
            "Where was the founder of Tesla and SpaceX born?",
            [
                ("founder", "R", "dbo:foundedBy"),
                ("Tesla", "E", "dbr:Tesla_Motors"),
                ("SpaceX", "E", "dbr:SpaceX"),
                ("born", "R", "dbo:birthPlace"),
            ],
        ),
        _question(
            "mini-2",
            "What is the industry of Tesla?",
            [
                ("industry", "R", "dbo:industry"),
                ("Tesla", "E", "dbr:Tesla_Motors"),
            ],
        ),
        _question(
            "mini-3",
            "Who is the founder of SpaceX?",
            [
                ("founder", "R", "dbo:foundedBy"),
                ("SpaceX", "E", "dbr:SpaceX"),
            ],
        ),
        _question(
            "mini-4",
            "Where was Elon Musk born?",
            [
                ("Elon Musk", "E", "dbr:Elon_Musk"),
                ("born", "R", "dbo:birthPlace"),
            ],
        ),
        _question(
            "mini-5",
            "What is the nationality of Nikola Tesla?",
            [
                ("nationality", "R", "dbo:nationality"),
                ("Nikola Tesla", "E", "dbr:Nikola_Tesla"),
            ],
        ),
        _question(
            "mini-6",
            "Which country is Pretoria in?",
            [
                ("country", "R", "dbo:country"),
                ("Pretoria", "E", "dbr:Pretoria"),
            ],
        ),
        _question(
            "mini-7",
            "What is the capital of Serbia?",
            [
                ("capital", "R", "dbo:capital"),
                ("Serbia", "E", "dbr:Serbia"),
            ],
        ),
        _question(
            "mini-8",
            "What is the industry of SpaceX?",
            [
                ("industry", "R", "dbo:industry"),
                ("SpaceX", "E", "dbr:SpaceX"),
            ],
        ),
    ]
    return World(triples=triples, labels=labels, expansions=expansions, questions=questions)


@dataclass
class _Member:
    uri: str
    family: int
    community: int
    opaque: bool
    weight: float
    surface: str  # full label when not opaque

    def family_name(self, prefix: str) -> str:
        return f"{prefix}{self.family}"


class _WorldBuilder:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.world = World()
        self.leaf_counter = 0

    def leaf(self) -> str:
        self.leaf_counter += 1
        return f"syn:leaf{self.leaf_counter}"


def generate_world(
    communities: int = 16,
    entity_families: int = 10,
    relation_families: int = 6,
    presence: float = 0.6,
    opaque_rate: float = 0.2,
    patterns_per_community: int = 10,
    background_per_relation: int = 2,
    attributes_per_member: int = 1,
    questions: int = 200,
    chain_rate: float = 0.4,
    exact_rate: float = 0.75,
    broken_rate: float = 0.15,
    seed: int = 7,
) -> World:
    """Build a community-structured world with ambiguous surface forms.

    Each (family, community) pair may hold one member whose label collides
    with all same-family members elsewhere. Triples connect members inside a
    community only. Questions reference one community's members; "broken"
    questions use a pattern that exists only in a different community, so
    the textually best candidate and the best-connected candidate disagree.
    """
    rng = random.Random(seed)
    builder = _WorldBuilder(rng)
    world = builder.world

    entity_members: dict[tuple[int, int], _Member] = {}
    relation_members: dict[tuple[int, int], _Member] = {}
    for c in range(communities):
        for f in range(entity_families):
            if rng.random() > presence:
                continue
            opaque = rng.random() < opaque_rate
            surface = f"fam{f} unit{c}"
            member = _Member(
                uri=f"syn:e{c}x{f}",
                family=f,
                community=c,
                opaque=opaque,
                weight=round(rng.uniform(0.8, 1.2), 4),
                surface=surface,
            )
            entity_members[(c, f)] = member
            label = f"u{c}x{f} item" if opaque else surface
            world.labels.append((member.uri, label, "E", member.weight))
        for t in range(relation_families):
            if rng.random() > presence:
                continue
            opaque = rng.random() < opaque_rate
            surface = f"rel{t} kind{c}"
            member = _Member(
                uri=f"syn:r{c}y{t}",
                family=t,
                community=c,
                opaque=opaque,
                weight=round(rng.uniform(0.8, 1.2), 4),
                surface=surface,
            )
            relation_members[(c, t)] = member
            label = f"w{c}y{t} link" if opaque else surface
            world.labels.append((member.uri, label, "R", member.weight))

    # Community pattern triples plus conflict bookkeeping for broken questions.
    pattern_triples: dict[int, list[tuple[int, int, int]]] = {c: [] for c in range(communities)}
    fam_rel_pairs: dict[int, set[tuple[int, int]]] = {c: set() for c in range(communities)}
    fam_fam_pairs: dict[int, set[frozenset]] = {c: set() for c in range(communities)}
    for c in range(communities):
        local_entities = sorted(f for (cc, f) in entity_members if cc == c)
        local_relations = sorted(t for (cc, t) in relation_members if cc == c)
        if len(local_entities) < 2 or not local_relations:
            continue
        for _ in range(patterns_per_community):
            f1, f2 = rng.sample(local_entities, 2)
            t = rng.choice(local_relations)
            pattern = (f1, t, f2)
            if pattern in pattern_triples[c]:
                continue
            pattern_triples[c].append(pattern)
            world.triples.append(
                (
                    entity_members[(c, f1)].uri,
                    relation_members[(c, t)].uri,
                    entity_members[(c, f2)].uri,
                )
            )
            fam_rel_pairs[c].add((f1, t))
            fam_rel_pairs[c].add((f2, t))
            fam_fam_pairs[c].add(frozenset((f1, f2)))

    # Background triples keep every member and relation resolvable in the
    # graph without creating shortcuts between families.
    for (c, t), member in sorted(relation_members.items()):
        for _ in range(background_per_relation):
            world.triples.append((builder.leaf(), member.uri, builder.leaf()))
    for (c, f), member in sorted(entity_members.items()):
        for _ in range(attributes_per_member):
            world.triples.append((member.uri, f"syn:a{c}x{f}", builder.leaf()))

    # Chain lookup: triples (a, r, b), (b, r2, d) sharing the middle member.
    chains: dict[int, list[tuple[tuple[int, int, int], tuple[int, int, int]]]] = {}
    for c in range(communities):
        pairs = []
        for first in pattern_triples[c]:
            for second in pattern_triples[c]:
                if first is second:
                    continue
                if first[2] == second[0] and len({first[0], first[2], second[2]}) == 3:
                    if first[1] != second[1]:
                        pairs.append((first, second))
        if pairs:
            chains[c] = pairs

    def member_surface(member: _Member, prefix: str, force_exact: bool) -> tuple[str, bool]:
        """Choose the question surface; returns (phrase, retrievable)."""
        if member.opaque:
            return member.family_name(prefix), False
        if force_exact or rng.random() < exact_rate:
            return member.surface, True
        return member.family_name(prefix), True

    communities_with_patterns = sorted(c for c in range(communities) if pattern_triples[c])

    def broken_target(donor: int, pattern: tuple[int, int, int]) -> int | None:
        f1, t, f2 = pattern
        options = []
        for c in communities_with_patterns:
            if c == donor:
                continue
            e1 = entity_members.get((c, f1))
            e2 = entity_members.get((c, f2))
            r = relation_members.get((c, t))
            if not e1 or not e2 or not r:
                continue
            if e1.opaque or e2.opaque or r.opaque:
                continue
            if (f1, t) in fam_rel_pairs[c] or (f2, t) in fam_rel_pairs[c]:
                continue
            if frozenset((f1, f2)) in fam_fam_pairs[c]:
                continue
            options.append(c)
        if not options:
            return None
        return rng.choice(options)

    qid = 0
    attempts = 0
    while qid < questions and attempts < questions * 20:
        attempts += 1
        donor = rng.choice(communities_with_patterns)
        make_broken = rng.random() < broken_rate
        use_chain = not make_broken and donor in chains and rng.random() < chain_rate

        if use_chain:
            first, second = rng.choice(chains[donor])
            f1, t1, f2 = first
            _, t2, f3 = second
            e1 = entity_members[(donor, f1)]
            e2 = entity_members[(donor, f2)]
            e3 = entity_members[(donor, f3)]
            r1 = relation_members[(donor, t1)]
            r2 = relation_members[(donor, t2)]
            s_r1, _ = member_surface(r1, "rel", False)
            s_e1, _ = member_surface(e1, "fam", False)
            s_e2, _ = member_surface(e2, "fam", False)
            s_r2, _ = member_surface(r2, "rel", False)
            s_e3, _ = member_surface(e3, "fam", False)
            phrases = [s_r1, s_e1, s_e2, s_r2, s_e3]
            if len({p for p in phrases}) != 5:
                continue
            text = (
                f"What was the {s_r1} of the {s_e1} and the {s_e2} "
                f"with the {s_r2} of the {s_e3}?"
            )
            spans = [
                (s_r1, "R", r1.uri),
                (s_e1, "E", e1.uri),
                (s_e2, "E", e2.uri),
                (s_r2, "R", r2.uri),
                (s_e3, "E", e3.uri),
            ]
        else:
            pattern = rng.choice(pattern_triples[donor])
            target = donor
            if make_broken:
                target = broken_target(donor, pattern)
                if target is None:
                    continue
            f1, t, f2 = pattern
            e1 = entity_members[(target, f1)]
            e2 = entity_members[(target, f2)]
            r = relation_members[(target, t)]
            force_exact = make_broken  # text evidence must point at the gold
            s_r, _ = member_surface(r, "rel", force_exact)
            s_e1, _ = member_surface(e1, "fam", force_exact)
            s_e2, _ = member_surface(e2, "fam", force_exact)
            phrases = [s_r, s_e1, s_e2]
            if len(set(phrases)) != 3:
                continue
            text = f"What is the {s_r} of the {s_e1} and the {s_e2}?"
            spans = [
                (s_r, "R", r.uri),
                (s_e1, "E", e1.uri),
                (s_e2, "E", e2.uri),
            ]
        world.questions.append(_question(f"syn-{qid}", text, spans))
        qid += 1

    return World(
        triples=world.triples,
        labels=sorted(world.labels),
        expansions=[],
        questions=world.questions,
    )
