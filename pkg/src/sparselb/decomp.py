"""Domain decomposition: slab partitioning, edge/mid site split, exchange plans."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import N_TYPES, LinkTag, SparseDomain


class PartitionError(ValueError):
    pass


class ExchangePlanError(RuntimeError):
    pass


@dataclass
class WorkerSites:
    """Sites owned by one worker, in local order.

    Domain-edge sites come first, then mid-domain sites; each group is
    ordered by collision type and then by global index.
    """

    worker: int
    sites: np.ndarray  # global indices, local order
    n_edge: int
    edge_type_ranges: np.ndarray  # N_TYPES + 1 local offsets
    mid_type_ranges: np.ndarray
    neighbors: tuple

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def edge_sites(self) -> range:
        return range(0, self.n_edge)

    @property
    def mid_sites(self) -> range:
        return range(self.n_edge, self.n_sites)


@dataclass
class PartitionAssignment:
    n_workers: int
    axis: int
    owner: np.ndarray
    local_index: np.ndarray  # position of each global site in its owner's local order
    workers: list = field(default_factory=list)

    @property
    def counts(self) -> np.ndarray:
        return np.bincount(self.owner, minlength=self.n_workers)

    @property
    def imbalance(self) -> float:
        c = self.counts
        return float(c.max() / c.min())

    def is_edge(self) -> np.ndarray:
        """Per global site, whether it is a domain-edge site."""
        flags = np.zeros(len(self.owner), dtype=bool)
        for w in self.workers:
            flags[w.sites[: w.n_edge]] = True
        return flags


def edge_flags(domain: SparseDomain, owner: np.ndarray) -> np.ndarray:
    nbr = domain.neighbors
    fluid = domain.link_tags == LinkTag.FLUID
    other = np.where(fluid, owner[np.maximum(nbr, 0)], owner[:, None])
    return np.any(fluid & (other != owner[:, None]), axis=1)


def partition(domain: SparseDomain, n_workers: int) -> PartitionAssignment:
    """Split the domain into slabs along its longest axis, balanced by site count.

    Sites are sorted by their coordinate on the split axis (ties broken by
    the remaining coordinates) and the sorted list is cut into
    ``n_workers`` runs whose sizes differ by at most one site.  When a slab
    plane holds fewer sites than the target the cut falls inside it.
    """
    n = domain.n_sites
    if n_workers < 1:
        raise PartitionError(f"n_workers must be >= 1, got {n_workers}")
    if n_workers > n:
        raise PartitionError(f"n_workers={n_workers} exceeds the number of sites ({n})")
    coords = domain.coords
    extent = coords.max(axis=0) - coords.min(axis=0)
    axis = int(np.argmax(extent[::-1]))
    axis = 2 - axis  # ties prefer z, then y, then x
    others = [a for a in (0, 1, 2) if a != axis]
    order = np.lexsort((coords[:, others[0]], coords[:, others[1]], coords[:, axis]))
    bounds = (np.arange(n_workers + 1) * n) // n_workers
    owner = np.empty(n, dtype=np.int64)
    for w in range(n_workers):
        owner[order[bounds[w] : bounds[w + 1]]] = w

    edge = edge_flags(domain, owner)
    nbr = domain.neighbors
    fluid = domain.link_tags == LinkTag.FLUID
    local_index = np.empty(n, dtype=np.int64)
    workers = []
    for w in range(n_workers):
        mine = np.flatnonzero(owner == w)
        ct = domain.collision_types[mine]
        local = mine[np.lexsort((mine, ct, ~edge[mine]))]
        local_index[local] = np.arange(len(local))
        n_edge = int(edge[mine].sum())
        e_types = domain.collision_types[local[:n_edge]]
        m_types = domain.collision_types[local[n_edge:]]
        edge_ranges = np.searchsorted(e_types, np.arange(N_TYPES + 1), side="left")
        mid_ranges = n_edge + np.searchsorted(m_types, np.arange(N_TYPES + 1), side="left")
        links = fluid[mine] & (nbr[mine] >= 0)
        nb_owner = owner[nbr[mine][links]]
        neighbors = tuple(int(v) for v in np.unique(nb_owner) if v != w)
        workers.append(WorkerSites(w, local, n_edge, edge_ranges, mid_ranges, neighbors))
    return PartitionAssignment(n_workers, axis, owner, local_index, workers)


@dataclass
class ExchangePlan:
    """Per ordered worker pair ``(sender, receiver)``, an ``(m, 3)`` int64 array.

    Columns: sending slot in the sender's shared region of ``f_new``,
    receiving slot in the receiver's shared region of ``f_old``, final
    destination index in the receiver's ``f_new``.  Slots are absolute
    array indices.
    """

    pairs: dict

    def __len__(self):
        return sum(len(v) for v in self.pairs.values())

    def entries(self, sender: int, receiver: int) -> np.ndarray:
        return self.pairs.get((sender, receiver), np.empty((0, 3), dtype=np.int64))


def build_exchange_plan(domain: SparseDomain, assignment: PartitionAssignment, maps) -> ExchangePlan:
    """Build the exchange plan and cross-check both endpoints' derivations.

    The sender side comes from each sender's streaming map (which slot each
    outgoing cross-worker link was assigned); the receiver side comes from
    the receiver's own re-allocation table.  They are derived independently
    and must agree entry for entry.
    """
    nbr = domain.neighbors
    pairs = {}
    for v, smap in enumerate(maps):
        wv = assignment.workers[v]
        for w in wv.neighbors:
            off, cnt = smap.neighbor_slots[w]
            rmap = maps[w]
            if v not in rmap.neighbor_slots or v not in assignment.workers[w].neighbors:
                raise ExchangePlanError(f"worker {w} does not list worker {v} as a neighbor")
            roff, rcnt = rmap.neighbor_slots[v]
            if rcnt != cnt:
                raise ExchangePlanError(
                    f"worker {v} sends {cnt} populations to {w} but {w} expects {rcnt}"
                )
            links = smap.shared_links[off : off + cnt]  # (local site, direction) on sender
            g_src = wv.sites[links[:, 0]]
            dirs = links[:, 1]
            g_dst = nbr[g_src, dirs]
            if np.any(g_dst < 0) or np.any(assignment.owner[g_dst] != w):
                k = int(np.flatnonzero((g_dst < 0) | (assignment.owner[np.maximum(g_dst, 0)] != w))[0])
                raise ExchangePlanError(
                    f"link from site {int(g_src[k])} direction {int(dirs[k])} "
                    f"does not reach a site owned by worker {w}"
                )
            dest = rmap.index(assignment.local_index[g_dst], dirs)
            base_s = 19 * smap.n_sites
            base_r = 19 * rmap.n_sites
            recv_slots = base_r + roff + np.arange(cnt)
            agreed = rmap.recv_dest[roff : roff + cnt]
            if not np.array_equal(agreed, dest):
                k = int(np.flatnonzero(agreed != dest)[0])
                raise ExchangePlanError(
                    f"workers {v}->{w} disagree on link from site {int(g_src[k])} "
                    f"direction {int(dirs[k])}"
                )
            pairs[(v, w)] = np.column_stack([base_s + off + np.arange(cnt), recv_slots, dest]).astype(
                np.int64
            )
    return ExchangePlan(pairs)
