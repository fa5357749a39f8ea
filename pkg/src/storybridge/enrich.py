"""Stage 2: insert one knowledge-graph bridge into a term path.

Every bridge between terms of adjacent images becomes a candidate path with
the bridge's terms as an extra group; the unenriched path always competes.
Candidates are scored by term-LM perplexity of their linearization and the
lowest wins, earlier construction order breaking exact ties.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ioutil import InputError
from .kg import Bridge, RelationIndex
from .lm import linearize_groups, perplexity


@dataclass(frozen=True)
class TermPath:
    """Ordered per-sentence term groups, at most one inserted bridge group."""

    groups: tuple[tuple[str, ...], ...]
    origins: tuple[tuple, ...]  # ("slot", k) or ("bridge", k) meaning between k and k+1
    bridge: Bridge | None = None
    story_id: str = ""

    def __post_init__(self):
        if len(self.groups) != len(self.origins):
            raise ValueError("groups and origins must align")
        bridge_positions = [i for i, o in enumerate(self.origins) if o[0] == "bridge"]
        if self.bridge is None:
            if bridge_positions:
                raise ValueError("origin marks a bridge group but no bridge is recorded")
        else:
            if len(bridge_positions) != 1:
                raise ValueError("a bridged path holds exactly one bridge group")
            pos = bridge_positions[0]
            k = self.origins[pos][1]
            if pos != k + 1:
                raise ValueError(f"bridge between slots {k} and {k + 1} must sit at position {k + 1}")
            if self.bridge.head not in self.groups[pos - 1]:
                raise ValueError(f"bridge head {self.bridge.head!r} missing from the group before it")
            if self.bridge.tail not in self.groups[pos + 1]:
                raise ValueError(f"bridge tail {self.bridge.tail!r} missing from the group after it")

    @classmethod
    def from_groups(cls, groups, story_id: str = "") -> "TermPath":
        return cls(
            groups=tuple(tuple(g) for g in groups),
            origins=tuple(("slot", k) for k in range(len(groups))),
            story_id=story_id,
        )

    def with_bridge(self, k: int, bridge: Bridge) -> "TermPath":
        """New path with the bridge group inserted between slots k and k+1."""
        if self.bridge is not None:
            raise ValueError("path already carries a bridge")
        if not (0 <= k < len(self.groups) - 1):
            raise ValueError(f"no adjacent slot pair at index {k}")
        groups = list(self.groups)
        origins = list(self.origins)
        groups.insert(k + 1, tuple(bridge.inserted_group))
        origins.insert(k + 1, ("bridge", k))
        return TermPath(tuple(groups), tuple(origins), bridge, self.story_id)

    def without_bridge(self) -> "TermPath":
        if self.bridge is None:
            return self
        keep = [i for i, o in enumerate(self.origins) if o[0] != "bridge"]
        return TermPath(
            tuple(self.groups[i] for i in keep),
            tuple(self.origins[i] for i in keep),
            None,
            self.story_id,
        )

    @property
    def bridge_slot(self) -> int | None:
        for origin in self.origins:
            if origin[0] == "bridge":
                return origin[1]
        return None

    def linearized(self) -> list[str]:
        return linearize_groups(self.groups)

    def to_record(self) -> dict:
        return {
            "story_id": self.story_id,
            "groups": [list(g) for g in self.groups],
            "origins": [list(o) for o in self.origins],
            "bridge": None if self.bridge is None else self.bridge.to_record(),
        }

    @classmethod
    def from_record(cls, rec: dict, where: str = "term path") -> "TermPath":
        try:
            bridge = None if rec.get("bridge") is None else Bridge.from_record(rec["bridge"])
            return cls(
                groups=tuple(tuple(g) for g in rec["groups"]),
                origins=tuple(tuple(o) for o in rec["origins"]),
                bridge=bridge,
                story_id=str(rec.get("story_id", "")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{where}: malformed term-path record ({exc})") from None


@dataclass(frozen=True)
class EnrichmentCandidate:
    path: TermPath
    perplexity: float

    def __post_init__(self):
        if self.perplexity < 1.0:
            raise ValueError("perplexity is never below 1")


BASE_GROUP_COUNT = 5


def build_candidates(
    base: TermPath,
    index: RelationIndex,
    cap: int | None = 500,
    allow_two_hop: bool = True,
) -> list[TermPath]:
    """All bridge-enriched variants of a five-group path, base first.

    Enumeration is exhaustive per adjacent slot pair, ordered by slot then
    bridge (head, relations, tail), and truncated to ``cap`` paths total.
    """
    if len(base.groups) != BASE_GROUP_COUNT:
        raise ValueError(f"enrichment expects {BASE_GROUP_COUNT} groups, got {len(base.groups)}")
    if any(not g for g in base.groups):
        raise ValueError("every group of the base path must be nonempty")
    if base.bridge is not None:
        raise ValueError("base path already carries a bridge")
    candidates = [base]
    for k in range(len(base.groups) - 1):
        for bridge in index.enumerate_bridges(set(base.groups[k]), set(base.groups[k + 1]), allow_two_hop):
            candidates.append(base.with_bridge(k, bridge))
    if cap is not None:
        if cap < 1:
            raise ValueError("cap must be >= 1")
        candidates = candidates[:cap]
    return candidates


def select_best(candidates, lm) -> EnrichmentCandidate:
    """Lowest-perplexity candidate; construction order breaks exact ties."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no candidates to select from")
    best_path, best_ppl = None, None
    for path in candidates:
        ppl = perplexity(lm, path.linearized())
        if best_ppl is None or ppl < best_ppl:
            best_path, best_ppl = path, ppl
    return EnrichmentCandidate(best_path, best_ppl)


def enrich_path(base: TermPath, index: RelationIndex, lm, cap: int | None = 500, allow_two_hop: bool = True) -> EnrichmentCandidate:
    return select_best(build_candidates(base, index, cap, allow_two_hop), lm)
