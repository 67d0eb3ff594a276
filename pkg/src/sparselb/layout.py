"""Population storage (AoS / SoA) and precomputed streaming maps.

Both layouts keep ``f_old`` and ``f_new`` as flat float64 arrays of length
``19 * n_sites + shared_size``.  The trailing ``shared_size`` entries
(the shared-edge buffer) hold populations that cross to or from other
workers.

=======  ==========================
layout   index of (site s, dir i)
=======  ==========================
AoS      ``19 * s + i``
SoA      ``i * n_sites + s``
=======  ==========================
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .decomp import PartitionAssignment, PartitionError
from .geometry import LinkTag, SparseDomain
from .lattice import INVERSE, Q


class Layout(str, Enum):
    AOS = "aos"
    SOA = "soa"


def encode_index(layout, n_sites, s, i):
    if Layout(layout) is Layout.AOS:
        return Q * np.asarray(s, dtype=np.int64) + i
    return np.asarray(i, dtype=np.int64) * n_sites + s


def decode_index(layout, n_sites, k):
    k = np.asarray(k, dtype=np.int64)
    if Layout(layout) is Layout.AOS:
        return k // Q, k % Q
    return k % n_sites, k // n_sites


class DistributionStore:
    """Owns the ``f_old`` / ``f_new`` pair for one worker."""

    def __init__(self, layout, n_sites: int, shared_size: int = 0):
        self.layout = Layout(layout)
        self.n_sites = int(n_sites)
        self.shared_size = int(shared_size)
        size = Q * self.n_sites + self.shared_size
        self.f_old = np.zeros(size, dtype=np.float64)
        self.f_new = np.zeros(size, dtype=np.float64)

    @property
    def shared_offset(self) -> int:
        return Q * self.n_sites

    def index(self, s, i):
        return encode_index(self.layout, self.n_sites, s, i)

    def swap(self) -> None:
        self.f_old, self.f_new = self.f_new, self.f_old

    def site_major(self, which: str = "old") -> np.ndarray:
        """Copy of the in-domain populations as an ``(n_sites, 19)`` array."""
        f = self.f_old if which == "old" else self.f_new
        body = f[: Q * self.n_sites]
        if self.layout is Layout.AOS:
            return body.reshape(self.n_sites, Q).copy()
        return body.reshape(Q, self.n_sites).T.copy()

    def load_site_major(self, values: np.ndarray, which: str = "old") -> None:
        f = self.f_old if which == "old" else self.f_new
        values = np.asarray(values, dtype=np.float64).reshape(self.n_sites, Q)
        if self.layout is Layout.AOS:
            f[: Q * self.n_sites] = values.ravel()
        else:
            f[: Q * self.n_sites] = values.T.ravel()


def convert_layout(store: DistributionStore, target) -> DistributionStore:
    out = DistributionStore(target, store.n_sites, store.shared_size)
    for which in ("old", "new"):
        out.load_site_major(store.site_major(which), which)
    off = store.shared_offset
    out.f_old[off:] = store.f_old[off:]
    out.f_new[off:] = store.f_new[off:]
    return out


@dataclass
class StreamingMap:
    """Precomputed destinations for one worker's populations.

    ``dest[s, i]``  push: where post-collision ``f'_i(s)`` is written in ``f_new``.
    ``src[s, i]``   pull: where incoming ``f_i(s)`` is read from in ``f_old``.
    ``recv_dest[k]`` push: final ``f_new`` index of received shared slot ``k``.
    ``send_src[k]`` pull: ``f_new`` index packed into outgoing shared slot ``k``.

    Shared slots are grouped by neighbor worker (ascending) and, within a
    neighbor, follow the sender's enumeration of its outgoing links
    (local site order, then direction).
    """

    layout: Layout
    n_sites: int
    dest: np.ndarray
    src: np.ndarray
    recv_dest: np.ndarray
    send_src: np.ndarray
    shared_links: np.ndarray
    neighbor_slots: dict = field(default_factory=dict)

    @property
    def shared_size(self) -> int:
        return len(self.recv_dest)

    def index(self, s, i):
        return encode_index(self.layout, self.n_sites, s, i)

    def make_store(self) -> DistributionStore:
        return DistributionStore(self.layout, self.n_sites, self.shared_size)


def _outgoing(domain, assignment, v, w):
    """Sender ``v``'s enumeration of its links into worker ``w``: (local site, dir, target)."""
    sites = assignment.workers[v].sites
    nb = domain.neighbors[sites]
    fluid = domain.link_tags[sites] == LinkTag.FLUID
    tgt_owner = assignment.owner[np.maximum(nb, 0)]
    s, i = np.nonzero(fluid & (nb >= 0) & (tgt_owner == w))
    return s, i, nb[s, i]


def build_streaming_map(domain: SparseDomain, assignment: PartitionAssignment, worker: int, layout) -> StreamingMap:
    layout = Layout(layout)
    ws = assignment.workers[worker]
    sites = ws.sites
    n = len(sites)
    owner = assignment.owner
    loc = assignment.local_index
    tags = domain.link_tags[sites]
    nb = domain.neighbors[sites]
    fluid = tags == LinkTag.FLUID
    if np.any(fluid & (nb < 0)):
        raise PartitionError(f"worker {worker}: fluid link to a site missing from the domain")
    nb_owner = owner[np.maximum(nb, 0)]
    local_link = fluid & (nb_owner == worker)
    cross = fluid & (nb_owner != worker)

    s_idx = np.broadcast_to(np.arange(n)[:, None], (n, Q))
    i_idx = np.broadcast_to(np.arange(Q)[None, :], (n, Q))
    dest = encode_index(layout, n, s_idx, INVERSE[i_idx])
    dest = np.where(local_link, encode_index(layout, n, loc[np.maximum(nb, 0)], i_idx), dest)

    # Outgoing cross links in (local site, direction) order, grouped by neighbor.
    cs, ci = np.nonzero(cross)
    grp = np.argsort(nb_owner[cs, ci], kind="stable")
    cs, ci = cs[grp], ci[grp]
    shared = len(cs)
    dest[cs, ci] = Q * n + np.arange(shared)
    neighbor_slots = {}
    owners_sorted = nb_owner[cs, ci]
    for v in ws.neighbors:
        lo = int(np.searchsorted(owners_sorted, v, side="left"))
        hi = int(np.searchsorted(owners_sorted, v, side="right"))
        neighbor_slots[v] = (lo, hi - lo)

    # Incoming: derived from each sender's own enumeration.
    recv_dest = np.empty(shared, dtype=np.int64)
    recv_keys = np.empty(shared, dtype=np.int64)
    for v in ws.neighbors:
        off, cnt = neighbor_slots[v]
        s_v, i_v, tgt = _outgoing(domain, assignment, v, worker)
        if len(s_v) != cnt:
            raise PartitionError(
                f"worker {worker}: {cnt} links out to worker {v} but {len(s_v)} links back"
            )
        recv_dest[off : off + cnt] = encode_index(layout, n, loc[tgt], i_v)
        recv_keys[off : off + cnt] = assignment.workers[v].sites[s_v] * Q + i_v

    # Pull: incoming f_i(s) comes along the link (s, inverse(i)).
    inv_tags = fluid[:, INVERSE]
    nb2 = nb[:, INVERSE]
    nb2_owner = nb_owner[:, INVERSE]
    src = encode_index(layout, n, s_idx, INVERSE[i_idx])
    pull_local = inv_tags & (nb2_owner == worker)
    src = np.where(pull_local, encode_index(layout, n, loc[np.maximum(nb2, 0)], i_idx), src)
    ps, pi = np.nonzero(inv_tags & (nb2_owner != worker))
    if len(ps):
        order = np.argsort(recv_keys)
        want = nb2[ps, pi] * Q + pi
        pos = np.searchsorted(recv_keys[order], want)
        pos = np.minimum(pos, shared - 1)
        if not np.array_equal(recv_keys[order][pos], want):
            raise PartitionError(f"worker {worker}: pull source missing from the received slots")
        src[ps, pi] = Q * n + order[pos]

    return StreamingMap(
        layout=layout,
        n_sites=n,
        dest=np.ascontiguousarray(dest, dtype=np.int64),
        src=np.ascontiguousarray(src, dtype=np.int64),
        recv_dest=recv_dest,
        send_src=encode_index(layout, n, cs, ci).astype(np.int64),
        shared_links=np.column_stack([cs, ci]).astype(np.int64),
        neighbor_slots=neighbor_slots,
    )
