"""Graph model of the simulated software-defined network.

The network is a value object: 32 hosts in four subnets, 48 undirected
links with an up/down flag, three attacker entry points and one critical
server.  Each subnet is wired as a star around its first host (the
gateway), the four gateways form a ring, and 16 extra cross-subnet links
add redundancy between non-gateway hosts.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

N_HOSTS = 32
N_LINKS = 48
SUBNET_SIZES = (6, 8, 9, 9)


@dataclass(frozen=True)
class Topology:
    """Hosts, stateful links and game landmarks. Immutable; updates copy."""

    links: tuple[tuple[int, int, bool], ...]  # (host_a, host_b, up)
    subnets: tuple[tuple[int, ...], ...]
    critical_server: int
    entry_points: tuple[int, ...]

    @cached_property
    def n_hosts(self) -> int:
        return sum(len(s) for s in self.subnets)

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def hosts(self) -> range:
        return range(self.n_hosts)

    @cached_property
    def incident(self) -> tuple[tuple[int, ...], ...]:
        """Link ids touching each host, indexed by host id."""
        by_host: list[list[int]] = [[] for _ in self.hosts]
        for lid, (a, b, _) in enumerate(self.links):
            by_host[a].append(lid)
            by_host[b].append(lid)
        return tuple(tuple(ls) for ls in by_host)

    @cached_property
    def link_ends(self) -> np.ndarray:
        """Endpoint pairs as an (n_links, 2) array, for vectorized checks."""
        return np.array([(a, b) for a, b, _ in self.links], dtype=np.intp)

    @cached_property
    def end_onehot(self) -> tuple[np.ndarray, np.ndarray]:
        """(n_links, n_hosts) indicator matrices for each endpoint column."""
        e0 = np.zeros((self.n_links, self.n_hosts), dtype=np.float64)
        e1 = np.zeros((self.n_links, self.n_hosts), dtype=np.float64)
        e0[np.arange(self.n_links), self.link_ends[:, 0]] = 1.0
        e1[np.arange(self.n_links), self.link_ends[:, 1]] = 1.0
        return e0, e1

    def other_end(self, link_id: int, host: int) -> int:
        a, b, _ = self.links[link_id]
        return b if host == a else a


def _check_host(t: Topology, h: int) -> None:
    if not 0 <= h < t.n_hosts:
        raise ValueError(f"unknown host id {h}")


def build_default_topology() -> Topology:
    """The canonical 32-host / 48-link network. Identical on every call."""
    subnets = []
    start = 0
    for size in SUBNET_SIZES:
        subnets.append(tuple(range(start, start + size)))
        start += size

    gateways = [s[0] for s in subnets]
    links: list[tuple[int, int, bool]] = []

    # star inside each subnet
    for subnet in subnets:
        gw = subnet[0]
        links.extend((gw, h, True) for h in subnet[1:])

    # gateway ring
    links.append((gateways[0], gateways[1], True))
    links.append((gateways[1], gateways[2], True))
    links.append((gateways[2], gateways[3], True))
    links.append((gateways[0], gateways[3], True))

    # cross-subnet redundancy: 4 links between consecutive subnets,
    # assigned round-robin over non-gateway hosts
    for i in range(4):
        a_ng = subnets[i][1:]
        b_ng = subnets[(i + 1) % 4][1:]
        for j in range(4):
            a, b = a_ng[j % len(a_ng)], b_ng[j % len(b_ng)]
            links.append((min(a, b), max(a, b), True))

    topo = Topology(
        links=tuple(links),
        subnets=tuple(subnets),
        critical_server=subnets[3][-1],
        entry_points=tuple(s[1] for s in subnets[:3]),
    )
    validate_default_invariants(topo)
    return topo


def validate_default_invariants(t: Topology) -> None:
    """Structural invariants of the canonical network."""
    if t.n_hosts != N_HOSTS:
        raise ValueError(f"expected {N_HOSTS} hosts, got {t.n_hosts}")
    if t.n_links != N_LINKS:
        raise ValueError(f"expected {N_LINKS} links, got {t.n_links}")
    if tuple(len(s) for s in t.subnets) != SUBNET_SIZES:
        raise ValueError(f"bad subnet sizes {[len(s) for s in t.subnets]}")
    seen = [h for s in t.subnets for h in s]
    if sorted(seen) != list(range(N_HOSTS)):
        raise ValueError("subnets do not partition the host set")
    if t.critical_server in t.entry_points:
        raise ValueError("critical server cannot be an entry point")
    if len(set(t.entry_points)) != len(t.entry_points):
        raise ValueError("entry points must be distinct")
    edges = set()
    for a, b, _ in t.links:
        if a == b or not (0 <= a < N_HOSTS and 0 <= b < N_HOSTS):
            raise ValueError(f"bad link ({a}, {b})")
        if (min(a, b), max(a, b)) in edges:
            raise ValueError(f"duplicate link ({a}, {b})")
        edges.add((min(a, b), max(a, b)))
    if not all(is_reachable(t, 0, h) for h in t.hosts):
        raise ValueError("graph not connected with all links up")


def neighbors(t: Topology, h: int) -> set[int]:
    """Hosts sharing an up link with h."""
    _check_host(t, h)
    out = set()
    for lid in t.incident[h]:
        a, b, up = t.links[lid]
        if up:
            out.add(b if a == h else a)
    return out


def set_link(t: Topology, link_id: int, up: bool) -> Topology:
    """Copy of t with one link's up flag set."""
    if not 0 <= link_id < t.n_links:
        raise ValueError(f"link id {link_id} out of range")
    a, b, _ = t.links[link_id]
    links = list(t.links)
    links[link_id] = (a, b, bool(up))
    return replace(t, links=tuple(links))


def is_reachable(t: Topology, src: int, dst: int) -> bool:
    """True iff a path of up links connects src to dst."""
    _check_host(t, src)
    _check_host(t, dst)
    if src == dst:
        return True
    seen = {src}
    queue = deque([src])
    while queue:
        h = queue.popleft()
        for n in neighbors(t, h):
            if n == dst:
                return True
            if n not in seen:
                seen.add(n)
                queue.append(n)
    return False


def write_adjacency(t: Topology, path) -> None:
    """Dump the wiring as one `link-id host-a host-b` line per link."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# adjacency v1\n")
        for lid, (a, b, _) in enumerate(t.links):
            fh.write(f"{lid} {a} {b}\n")
