"""Road network data model, TNTP ingestion, and closure application.

The network is a directed graph whose links carry BPR delay parameters.
Networks and demand matrices are immutable after construction and can be
shared freely across threads; closure application always produces a fresh
network value.
"""

from __future__ import annotations

import hashlib
import io
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import NetworkValidationError, TntpParseError

DEFAULT_ALPHA = 0.15
DEFAULT_BETA = 4.0


@dataclass(frozen=True)
class Link:
    """One directed road with BPR delay parameters.

    ``fft`` is the free-flow travel time, ``capacity`` the practical capacity
    per assignment period, ``alpha``/``beta`` the BPR coefficients.
    """

    id: int
    tail: int
    head: int
    fft: float
    capacity: float
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        if not self.fft > 0:
            raise NetworkValidationError(f"link {self.id}: fft must be > 0, got {self.fft}")
        if not self.capacity > 0:
            raise NetworkValidationError(
                f"link {self.id}: capacity must be > 0, got {self.capacity}"
            )
        if not self.beta >= 1:
            raise NetworkValidationError(f"link {self.id}: beta must be >= 1, got {self.beta}")


@dataclass(frozen=True)
class NetworkArrays:
    """Flat array view of a network for the numerical kernels.

    Links appear in increasing link-id order ("compact" order). ``node_index``
    maps external node ids to 0-based dense indices.
    """

    node_ids: np.ndarray          # external id per dense node index
    node_index: dict              # external id -> dense index
    link_ids: np.ndarray          # original link id per compact position
    tail: np.ndarray              # dense tail index per compact position
    head: np.ndarray              # dense head index per compact position
    fft: np.ndarray
    capacity: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    out_start: np.ndarray         # CSR over tails: out_start[n]..out_start[n+1]
    out_link: np.ndarray          # compact link positions sorted by (tail, link id)
    in_start: np.ndarray          # CSR over heads
    in_link: np.ndarray           # compact link positions sorted by (head, link id)

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_links(self) -> int:
        return len(self.link_ids)


class Network:
    """Immutable directed traffic network.

    ``link_id_space`` is the size of the link-id universe: for freshly loaded
    networks the ids are dense ``0..n_links-1``; networks derived by closure
    keep their parent's id space so flow vectors stay comparable.
    """

    __slots__ = ("nodes", "links", "link_index", "link_id_space", "_arrays")

    def __init__(self, nodes: Iterable[int], links: Iterable[Link], link_id_space: int | None = None):
        self.nodes = tuple(sorted(set(int(n) for n in nodes)))
        self.links = tuple(sorted(links, key=lambda l: l.id))
        node_set = set(self.nodes)

        seen_ids = set()
        index = {}
        for link in self.links:
            if link.id in seen_ids:
                raise NetworkValidationError(f"duplicate link id {link.id}")
            seen_ids.add(link.id)
            key = (link.tail, link.head)
            if key in index:
                raise NetworkValidationError(f"duplicate link for node pair {key}")
            if link.tail not in node_set:
                raise NetworkValidationError(f"link {link.id}: unknown tail node {link.tail}")
            if link.head not in node_set:
                raise NetworkValidationError(f"link {link.id}: unknown head node {link.head}")
            index[key] = link.id
        self.link_index = index

        if link_id_space is None:
            if seen_ids != set(range(len(self.links))):
                raise NetworkValidationError("link ids must be dense 0..n_links-1")
            link_id_space = len(self.links)
        self.link_id_space = link_id_space
        self._arrays = None

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and self.links == other.links
            and self.link_id_space == other.link_id_space
        )

    def __hash__(self):
        return hash((self.nodes, self.links, self.link_id_space))

    def __repr__(self):
        return f"Network(nodes={len(self.nodes)}, links={len(self.links)})"

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_links(self) -> int:
        return len(self.links)

    def link_by_id(self, link_id: int) -> Link:
        for link in self.links:
            if link.id == link_id:
                return link
        raise KeyError(link_id)

    @property
    def arrays(self) -> NetworkArrays:
        """Flat array view, built lazily and cached."""
        if self._arrays is None:
            self._arrays = _build_arrays(self)
        return self._arrays


def _build_arrays(network: Network) -> NetworkArrays:
    node_ids = np.asarray(network.nodes, dtype=np.int64)
    node_index = {int(n): i for i, n in enumerate(network.nodes)}
    m = network.n_links
    link_ids = np.empty(m, dtype=np.int64)
    tail = np.empty(m, dtype=np.int64)
    head = np.empty(m, dtype=np.int64)
    fft = np.empty(m, dtype=np.float64)
    capacity = np.empty(m, dtype=np.float64)
    alpha = np.empty(m, dtype=np.float64)
    beta = np.empty(m, dtype=np.float64)
    for pos, link in enumerate(network.links):
        link_ids[pos] = link.id
        tail[pos] = node_index[link.tail]
        head[pos] = node_index[link.head]
        fft[pos] = link.fft
        capacity[pos] = link.capacity
        alpha[pos] = link.alpha
        beta[pos] = link.beta

    n = len(node_ids)
    out_order = np.lexsort((link_ids, tail))
    in_order = np.lexsort((link_ids, head))
    out_start = np.zeros(n + 1, dtype=np.int64)
    in_start = np.zeros(n + 1, dtype=np.int64)
    np.add.at(out_start, tail + 1, 1)
    np.add.at(in_start, head + 1, 1)
    out_start = np.cumsum(out_start)
    in_start = np.cumsum(in_start)
    return NetworkArrays(
        node_ids=node_ids,
        node_index=node_index,
        link_ids=link_ids,
        tail=tail,
        head=head,
        fft=fft,
        capacity=capacity,
        alpha=alpha,
        beta=beta,
        out_start=out_start,
        out_link=out_order.astype(np.int64),
        in_start=in_start,
        in_link=in_order.astype(np.int64),
    )


class DemandMatrix:
    """Fixed origin-destination travel demands.

    Only positive demands are stored; zero entries in a trips table are
    dropped at load time.
    """

    __slots__ = ("entries",)

    def __init__(self, entries: Mapping[tuple[int, int], float]):
        cleaned = {}
        for (origin, dest), value in entries.items():
            value = float(value)
            if origin == dest:
                raise NetworkValidationError(f"OD pair {origin}->{dest}: origin equals destination")
            if not np.isfinite(value) or value < 0:
                raise NetworkValidationError(
                    f"OD pair {origin}->{dest}: demand must be finite and >= 0, got {value}"
                )
            if value > 0:
                cleaned[(int(origin), int(dest))] = value
        self.entries = cleaned

    def __eq__(self, other):
        if not isinstance(other, DemandMatrix):
            return NotImplemented
        return self.entries == other.entries

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(sorted(self.entries.items()))

    def __repr__(self):
        return f"DemandMatrix(pairs={len(self.entries)}, total={self.total:g})"

    @property
    def total(self) -> float:
        return float(sum(self.entries.values()))

    def origins(self) -> list[int]:
        return sorted({o for o, _ in self.entries})

    def validate_for(self, network: Network) -> None:
        node_set = set(network.nodes)
        for origin, dest in self.entries:
            if origin not in node_set:
                raise NetworkValidationError(f"demand references unknown node {origin}")
            if dest not in node_set:
                raise NetworkValidationError(f"demand references unknown node {dest}")


@dataclass(frozen=True, order=True)
class ClosureConfig:
    """A canonically ordered, deduplicated set of closed link ids."""

    closed: tuple[int, ...] = field(default=())

    @staticmethod
    def of(ids: Iterable[int]) -> "ClosureConfig":
        return ClosureConfig(tuple(sorted(set(int(i) for i in ids))))

    def __post_init__(self):
        if list(self.closed) != sorted(set(self.closed)):
            raise NetworkValidationError("closure ids must be sorted and deduplicated; use ClosureConfig.of")
        if any(i < 0 for i in self.closed):
            raise NetworkValidationError("closure ids must be non-negative")

    def __len__(self):
        return len(self.closed)

    def __contains__(self, link_id):
        return link_id in self.closed

    def as_set(self) -> frozenset:
        return frozenset(self.closed)

    def issubset(self, other: "ClosureConfig") -> bool:
        return self.as_set() <= other.as_set()

    def union(self, other: "ClosureConfig") -> "ClosureConfig":
        return ClosureConfig.of(self.closed + other.closed)

    def difference(self, other: "ClosureConfig") -> "ClosureConfig":
        return ClosureConfig.of(self.as_set() - other.as_set())

    def validate_for(self, network: Network) -> None:
        known = {link.id for link in network.links}
        unknown = [i for i in self.closed if i not in known]
        if unknown:
            raise NetworkValidationError(f"closure references unknown link ids {unknown}")


@dataclass(frozen=True)
class LinkAdjustment:
    """Partial-closure override: multiplicative factors on capacity and fft."""

    capacity_factor: float = 1.0
    fft_factor: float = 1.0

    def __post_init__(self):
        if not 0 < self.capacity_factor <= 1:
            raise NetworkValidationError("capacity_factor must be in (0, 1]")
        if not self.fft_factor >= 1:
            raise NetworkValidationError("fft_factor must be >= 1")


def apply_closures(
    network: Network,
    config: ClosureConfig,
    adjustments: Mapping[int, LinkAdjustment] | None = None,
) -> Network:
    """Return the network with the configured links removed.

    Surviving links keep their original ids. A link listed in ``adjustments``
    is degraded (capacity/fft factors) instead of removed, supporting partial
    closures; by default every closed link is removed outright.
    """
    config.validate_for(network)
    adjustments = adjustments or {}
    closed = config.as_set()
    links = []
    for link in network.links:
        if link.id not in closed:
            links.append(link)
            continue
        adj = adjustments.get(link.id)
        if adj is not None:
            links.append(
                Link(
                    id=link.id,
                    tail=link.tail,
                    head=link.head,
                    fft=link.fft * adj.fft_factor,
                    capacity=link.capacity * adj.capacity_factor,
                    alpha=link.alpha,
                    beta=link.beta,
                )
            )
    return Network(network.nodes, links, link_id_space=network.link_id_space)


def connectivity_check(network: Network, demand: DemandMatrix) -> list[tuple[int, int]]:
    """List the OD pairs with positive demand that have no directed path.

    Empty result means every demanded movement is routable. Purely a
    diagnostic; never raises for disconnection.
    """
    adjacency: dict[int, list[int]] = {n: [] for n in network.nodes}
    for link in network.links:
        adjacency[link.tail].append(link.head)

    by_origin: dict[int, list[int]] = {}
    for (origin, dest), value in demand.entries.items():
        if value > 0:
            by_origin.setdefault(origin, []).append(dest)

    missing = []
    for origin in sorted(by_origin):
        if origin not in adjacency:
            missing.extend((origin, d) for d in sorted(by_origin[origin]))
            continue
        reached = {origin}
        queue = deque([origin])
        while queue:
            node = queue.popleft()
            for nxt in adjacency[node]:
                if nxt not in reached:
                    reached.add(nxt)
                    queue.append(nxt)
        for dest in sorted(by_origin[origin]):
            if dest not in reached:
                missing.append((origin, dest))
    return missing


def network_fingerprint(network: Network) -> str:
    """Stable content hash of a network (nodes, links, parameters)."""
    h = hashlib.sha256()
    h.update(f"nodes:{','.join(map(str, network.nodes))};space:{network.link_id_space}".encode())
    for link in network.links:
        h.update(
            f"|{link.id}:{link.tail}>{link.head}:{link.fft!r}:{link.capacity!r}"
            f":{link.alpha!r}:{link.beta!r}".encode()
        )
    return h.hexdigest()


# ---------------------------------------------------------------------------
# TNTP ingestion
# ---------------------------------------------------------------------------

def _as_lines(source) -> list[str]:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return fh.readlines()
    if isinstance(source, io.TextIOBase) or hasattr(source, "read"):
        return source.read().splitlines(keepends=True)
    raise TypeError(f"unsupported source type {type(source)!r}")


def _strip_comment(line: str) -> str:
    # '~' starts a comment anywhere on the line
    pos = line.find("~")
    if pos >= 0:
        line = line[:pos]
    return line.strip()


def parse_tntp_network(source) -> Network:
    """Parse a ``*_net.tntp`` link table into a Network."""
    lines = _as_lines(source)
    links = []
    in_body = False
    saw_metadata = False
    for line_no, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if stripped.startswith("<"):
            saw_metadata = True
            if stripped.upper().startswith("<END OF METADATA>"):
                in_body = True
            continue
        text = _strip_comment(raw)
        if not text:
            continue
        if not in_body and saw_metadata:
            # stray content between metadata lines
            raise TntpParseError(f"unexpected content before metadata end: {text!r}", line_no)
        fields = text.replace(";", " ").split()
        if len(fields) < 5:
            raise TntpParseError(
                f"link record needs at least 5 fields (init, term, capacity, length, fft), got {len(fields)}",
                line_no,
            )
        try:
            tail = int(fields[0])
            head = int(fields[1])
            capacity = float(fields[2])
            fft = float(fields[4])
            alpha = float(fields[5]) if len(fields) > 5 else DEFAULT_ALPHA
            beta = float(fields[6]) if len(fields) > 6 else DEFAULT_BETA
        except ValueError as exc:
            raise TntpParseError(f"malformed link record: {exc}", line_no) from None
        try:
            links.append(
                Link(id=len(links), tail=tail, head=head, fft=fft, capacity=capacity,
                     alpha=alpha, beta=beta)
            )
        except NetworkValidationError as exc:
            raise TntpParseError(str(exc), line_no) from None

    if not links:
        raise TntpParseError("no link records")
    nodes = {l.tail for l in links} | {l.head for l in links}
    return Network(nodes, links)


def parse_tntp_trips(source) -> DemandMatrix:
    """Parse a ``*_trips.tntp`` origin-block table into a DemandMatrix."""
    lines = _as_lines(source)
    entries: dict[tuple[int, int], float] = {}
    origin = None
    for line_no, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if stripped.startswith("<") or not stripped:
            continue
        text = _strip_comment(raw)
        if not text:
            continue
        if text.lower().startswith("origin"):
            parts = text.split()
            if len(parts) < 2:
                raise TntpParseError("origin line missing node id", line_no)
            try:
                origin = int(parts[1])
            except ValueError:
                raise TntpParseError(f"bad origin id {parts[1]!r}", line_no) from None
            continue
        if origin is None:
            raise TntpParseError(f"demand record before any Origin header: {text!r}", line_no)
        for chunk in text.split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            if ":" not in chunk:
                raise TntpParseError(f"malformed demand entry {chunk!r}", line_no)
            dest_text, _, value_text = chunk.partition(":")
            try:
                dest = int(dest_text)
                value = float(value_text)
            except ValueError:
                raise TntpParseError(f"malformed demand entry {chunk!r}", line_no) from None
            if dest == origin:
                continue
            if value > 0:
                entries[(origin, dest)] = entries.get((origin, dest), 0.0) + value
    return DemandMatrix(entries)


def load_tntp(net_source, trips_source) -> tuple[Network, DemandMatrix]:
    """Load and cross-validate a TNTP network/trips pair."""
    network = parse_tntp_network(net_source)
    demand = parse_tntp_trips(trips_source)
    demand.validate_for(network)
    return network, demand


def dump_tntp(network: Network, demand: DemandMatrix) -> tuple[str, str]:
    """Serialize back to TNTP text; round-trips losslessly through load_tntp."""
    net = io.StringIO()
    net.write(f"<NUMBER OF ZONES> {network.n_nodes}\n")
    net.write(f"<NUMBER OF NODES> {network.n_nodes}\n")
    net.write("<FIRST THRU NODE> 1\n")
    net.write(f"<NUMBER OF LINKS> {network.n_links}\n")
    net.write("<END OF METADATA>\n\n")
    net.write("~ \tInit node \tTerm node \tCapacity \tLength \tFree Flow Time \tB\tPower\tSpeed limit \tToll \tType\t;\n")
    for link in network.links:
        net.write(
            f"\t{link.tail}\t{link.head}\t{link.capacity!r}\t{link.fft!r}\t{link.fft!r}"
            f"\t{link.alpha!r}\t{link.beta!r}\t0\t0\t1\t;\n"
        )

    trips = io.StringIO()
    trips.write(f"<NUMBER OF ZONES> {network.n_nodes}\n")
    trips.write(f"<TOTAL OD FLOW> {demand.total!r}\n")
    trips.write("<END OF METADATA>\n\n")
    by_origin: dict[int, list[tuple[int, float]]] = {}
    for (origin, dest), value in sorted(demand.entries.items()):
        by_origin.setdefault(origin, []).append((dest, value))
    for origin in sorted(by_origin):
        trips.write(f"Origin {origin}\n")
        row = by_origin[origin]
        for k in range(0, len(row), 5):
            part = "".join(f"{d} : {v!r}; " for d, v in row[k:k + 5])
            trips.write(part.rstrip() + "\n")
        trips.write("\n")
    return net.getvalue(), trips.getvalue()


def bundled_sioux_falls() -> tuple[Network, DemandMatrix]:
    """Load the Sioux Falls benchmark instance shipped with the package."""
    data_dir = Path(__file__).parent / "data"
    return load_tntp(data_dir / "siouxfalls_net.tntp", data_dir / "siouxfalls_trips.tntp")
