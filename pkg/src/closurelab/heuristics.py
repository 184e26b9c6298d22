"""Subset-lookup travel-time estimators over previously evaluated scenarios.

Three estimators share one index of labeled closure configurations:

* costliest subset: max observed travel time over indexed subsets of the
  query (soft lower bound under monotone congestion);
* additive subset: the costliest subset plus the marginal estimate for the
  leftover links;
* cheapest superset: min observed travel time over indexed supersets (upper
  bound), undefined when no superset is known.

Candidate lookup goes through a per-link inverted index so queries touch only
entries sharing links with the query, not the whole dataset.
"""

from __future__ import annotations

from .network import ClosureConfig
from .scenarios import LabeledScenario


class SubsetIndex:
    """Closure configuration -> total travel time, with per-link postings."""

    def __init__(self, baseline_ttt: float):
        self.baseline_ttt = float(baseline_ttt)
        self._entries: dict[ClosureConfig, float] = {}
        self._postings: dict[int, set[ClosureConfig]] = {}

    def __len__(self):
        return len(self._entries)

    def __contains__(self, config: ClosureConfig):
        return config in self._entries

    def value(self, config: ClosureConfig) -> float:
        if not config.closed:
            return self.baseline_ttt
        return self._entries[config]

    def entries(self):
        return dict(self._entries)

    def max_label(self) -> float:
        """Largest travel time seen so far (baseline when empty)."""
        if not self._entries:
            return self.baseline_ttt
        return max(max(self._entries.values()), self.baseline_ttt)

    def copy(self) -> "SubsetIndex":
        clone = SubsetIndex(self.baseline_ttt)
        clone._entries = dict(self._entries)
        clone._postings = {k: set(v) for k, v in self._postings.items()}
        return clone

    def insert(self, config: ClosureConfig, ttt: float) -> None:
        """Add one labeled configuration; duplicates keep their first label."""
        if not config.closed:
            return
        if config in self._entries:
            return
        self._entries[config] = float(ttt)
        for link_id in config.closed:
            self._postings.setdefault(link_id, set()).add(config)

    def subset_candidates(self, query: ClosureConfig):
        """Indexed configs sharing at least one link with the query."""
        seen: set[ClosureConfig] = set()
        for link_id in query.closed:
            seen.update(self._postings.get(link_id, ()))
        return seen

    def superset_candidates(self, query: ClosureConfig):
        """Indexed configs containing every link of the query."""
        if not query.closed:
            return set(self._entries)
        postings = [self._postings.get(link_id) for link_id in query.closed]
        if any(p is None for p in postings):
            return set()
        postings.sort(key=len)
        result = set(postings[0])
        for p in postings[1:]:
            result &= p
            if not result:
                break
        return result


def index_insert(index: SubsetIndex, scenario: LabeledScenario) -> SubsetIndex:
    """Insert a labeled scenario; idempotent for duplicate configs."""
    index.insert(scenario.config, scenario.ttt)
    return index


def build_index(baseline_ttt: float, scenarios) -> SubsetIndex:
    index = SubsetIndex(baseline_ttt)
    for scenario in scenarios:
        index_insert(index, scenario)
    return index


def argmax_subset(index: SubsetIndex, query: ClosureConfig) -> ClosureConfig:
    """The indexed subset of the query with the highest travel time.

    Ties prefer smaller, then lexicographically earlier, configurations; the
    empty set (baseline) always qualifies.
    """
    query_set = query.as_set()
    best = ClosureConfig.of([])
    best_ttt = index.baseline_ttt
    for candidate in sorted(index.subset_candidates(query), key=lambda c: (len(c.closed), c.closed)):
        if candidate.as_set() <= query_set:
            ttt = index.value(candidate)
            if ttt > best_ttt:
                best, best_ttt = candidate, ttt
    return best


def csh(index: SubsetIndex, query: ClosureConfig) -> float:
    """Costliest-subset estimate: max travel time over indexed subsets.

    Falls back to the baseline travel time when no nonempty subset is indexed.
    """
    query_set = query.as_set()
    best = index.baseline_ttt
    for candidate in index.subset_candidates(query):
        if candidate.as_set() <= query_set:
            ttt = index.value(candidate)
            if ttt > best:
                best = ttt
    return best


def cash(index: SubsetIndex, query: ClosureConfig) -> float:
    """Additive-subset estimate: costliest subset plus leftover marginal.

    Splits the query into the costliest indexed subset and the remainder,
    scores both by the subset estimate, and removes the double-counted
    baseline.
    """
    star = argmax_subset(index, query)
    remainder = query.difference(star)
    return index.value(star) + csh(index, remainder) - index.baseline_ttt


def csuph(index: SubsetIndex, query: ClosureConfig) -> float | None:
    """Cheapest-superset estimate, or None when no superset is known."""
    candidates = index.superset_candidates(query)
    if not query.closed:
        # every entry (and the baseline itself) contains the empty set
        values = [index.value(c) for c in candidates]
        values.append(index.baseline_ttt)
        return min(values)
    if not candidates:
        return None
    return min(index.value(c) for c in candidates)
