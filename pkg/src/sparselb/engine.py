"""Time stepping: per-worker step phases, executors, property cache and ``run``.

Each worker owns a partition of the domain, its own :class:`DistributionStore`
and inbound message queues.  A time step is the six phases of a
:class:`StepSequence`; populations crossing partitions travel as copies of
shared-edge buffer segments through the queues.  No mutable state is
shared between workers.
"""

from __future__ import annotations

import logging
import queue
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import NamedTuple

import numpy as np

from . import kernels as K
from .boundary import BoundaryConfigError, PressureBC, TimeTable, VelocityBC, parabolic_weight
from .decomp import build_exchange_plan, partition
from .geometry import CollisionType, LinkTag, SparseDomain
from .lattice import CS2, INVERSE, Q, RelaxationParams, equilibrium
from .layout import Layout, build_streaming_map

log = logging.getLogger(__name__)

PHASES = ("pre_send", "send", "pre_receive", "receive", "post_receive", "end_iteration")


class StepSequence(str, Enum):
    CLASSIC = "classic"
    REORDERED = "reordered"

    @property
    def phases(self) -> tuple:
        if self is StepSequence.CLASSIC:
            return PHASES
        return ("pre_send", "pre_receive", "send", "receive", "post_receive", "end_iteration")


class Scheme(str, Enum):
    PUSH = "push"
    PULL = "pull"


class StepError(RuntimeError):
    def __init__(self, message, step=None, worker=None, neighbor=None):
        super().__init__(message)
        self.step = step
        self.worker = worker
        self.neighbor = neighbor


class ConfigError(ValueError):
    pass


@dataclass
class SimulationConfig:
    tau: float = 0.8
    layout: str = "aos"
    scheme: str = "push"
    sequence: str = "classic"
    workers: int = 1
    rho0: float = 1.0
    u0: tuple = (0.0, 0.0, 0.0)
    boundaries: dict = field(default_factory=dict)
    step_seconds: float = 1.0
    capture_period: int = 100
    executor: str = "auto"
    exchange_timeout: float = 120.0

    def validate(self, domain: SparseDomain) -> list:
        errors = []
        if not self.tau > 0.5:
            errors.append(f"tau: must exceed 0.5, got {self.tau}")
        if self.workers < 1:
            errors.append(f"workers: must be >= 1, got {self.workers}")
        elif self.workers > domain.n_sites:
            errors.append(f"workers: {self.workers} exceeds the {domain.n_sites} fluid sites")
        if self.capture_period < 1:
            errors.append(f"capture_period: must be >= 1, got {self.capture_period}")
        if not self.rho0 > 0:
            errors.append(f"rho0: must be positive, got {self.rho0}")
        if not self.step_seconds > 0:
            errors.append(f"step_seconds: must be positive, got {self.step_seconds}")
        for name, enum in (("layout", Layout), ("scheme", Scheme), ("sequence", StepSequence)):
            try:
                enum(getattr(self, name))
            except ValueError:
                errors.append(f"{name}: unknown value {getattr(self, name)!r}")
        if self.executor not in ("auto", "serial", "threads"):
            errors.append(f"executor: unknown value {self.executor!r}")
        for k, bc in self.boundaries.items():
            if not 0 <= k < len(domain.iolets):
                errors.append(f"iolet.{k}: references an unknown iolet (domain has {len(domain.iolets)})")
                continue
            if bc.iolet != k:
                errors.append(f"iolet.{k}: boundary object is bound to iolet {bc.iolet}")
            try:
                bc.check()
            except BoundaryConfigError as exc:
                errors.append(f"iolet.{k}: {exc}")
        return errors


def _link_codes(domain, sites, boundaries):
    tags = domain.link_tags[sites]
    ids = domain.link_iolets[sites].astype(np.int64)
    code = np.zeros(tags.shape, dtype=np.int8)
    io = tags >= LinkTag.INLET
    kinds = np.zeros(max(len(domain.iolets), 1), dtype=np.int8)
    for k, bc in boundaries.items():
        kinds[k] = K.CODE_VELOCITY if isinstance(bc, VelocityBC) else K.CODE_PRESSURE
    code[io] = kinds[ids[io]]
    ids = np.where(io, ids, 0).astype(np.int16)
    return code, ids


def _site_weights(domain, sites, code, ids):
    weight = np.zeros(len(sites), dtype=np.float64)
    vel = code == K.CODE_VELOCITY
    rows = np.flatnonzero(vel.any(axis=1))
    for s in rows:
        touched = np.unique(ids[s][vel[s]])
        if len(touched) > 1:
            raise ConfigError(f"site {int(sites[s])} links to several velocity iolets {touched.tolist()}")
        weight[s] = parabolic_weight(domain.coords[sites[s]], domain.iolets[int(touched[0])])
    return weight


class Worker:
    """One partition of the domain and the phases that advance it."""

    def __init__(self, wid, sim, ws, smap):
        self.id = wid
        self.sim = sim
        self.sites = ws.sites
        self.neighbors = ws.neighbors
        self.n = ws.n_sites
        self.map = smap
        self.store = smap.make_store()
        self.soa = smap.layout is Layout.SOA
        er, mr = ws.edge_type_ranges, ws.mid_type_ranges
        # Inner and Wall ranges are adjacent and share one kernel.
        self.edge_ranges = (
            (int(er[CollisionType.INNER]), int(er[CollisionType.INLET])),
            (int(er[CollisionType.INLET]), int(er[-1])),
        )
        self.mid_ranges = (
            (int(mr[CollisionType.INNER]), int(mr[CollisionType.INLET])),
            (int(mr[CollisionType.INLET]), int(mr[-1])),
        )
        dom = sim.domain
        self.code, self.iolet = _link_codes(dom, self.sites, sim.config.boundaries)
        self.code_pull = np.ascontiguousarray(self.code[:, INVERSE])
        self.iolet_pull = np.ascontiguousarray(self.iolet[:, INVERSE])
        self.weight = _site_weights(dom, self.sites, self.code, self.iolet)
        # pull scheme: moments of the current state and of the state being built
        self.rho = np.zeros(self.n)
        self.u = np.zeros((self.n, 3))
        self.rho_next = np.zeros(self.n)
        self.u_next = np.zeros((self.n, 3))
        self.inbox = {}
        self.outbox = {}
        self._pending = {}
        self.step_index = 0
        self._initial_f = None

    # -- boundary staging ---------------------------------------------------
    def _bc_values(self, step):
        return self.sim.bc_values(step)

    # -- kernels --------------------------------------------------------------
    def _compute(self, ranges):
        st = self.store
        ghost, speed = self._bc_values(self.step_index)
        normals = self.sim.normals
        omega = self.sim.omega
        (b0, b1), (i0, i1) = ranges
        if self.sim.scheme is Scheme.PUSH:
            dest = self.map.dest
            if b1 > b0:
                K.push_bulk(st.f_old, st.f_new, self.n, self.soa, b0, b1, dest, omega)
            if i1 > i0:
                K.push_iolet(
                    st.f_old, st.f_new, self.n, self.soa, i0, i1, dest, self.code, self.iolet,
                    self.weight, ghost, speed, normals, omega,
                )
        else:
            src = self.map.src
            if b1 > b0:
                K.pull_bulk(
                    st.f_old, st.f_new, self.n, self.soa, b0, b1, src, omega, self.rho_next, self.u_next
                )
            if i1 > i0:
                K.pull_iolet(
                    st.f_old, st.f_new, self.n, self.soa, i0, i1, src, self.code_pull,
                    self.iolet_pull, self.weight, ghost, speed, normals, omega, self.rho, self.u,
                    self.rho_next, self.u_next,
                )

    # -- phases ---------------------------------------------------------------
    def pre_send(self):
        self._compute(self.edge_ranges)

    def pre_receive(self):
        self._compute(self.mid_ranges)

    def _segment(self, v):
        off, cnt = self.map.neighbor_slots[v]
        return off, cnt

    def send(self):
        f_new = self.store.f_new
        base = self.store.shared_offset
        for v in self.neighbors:
            off, cnt = self._segment(v)
            if self.sim.scheme is Scheme.PUSH:
                msg = f_new[base + off : base + off + cnt].copy()
            else:
                msg = f_new[self.map.send_src[off : off + cnt]]
            self.outbox[v].put((self.step_index, msg))

    def receive(self):
        timeout = self.sim.config.exchange_timeout
        for v in self.neighbors:
            try:
                step, msg = self.inbox[v].get(timeout=timeout)
            except queue.Empty:
                raise StepError(
                    f"worker {self.id} timed out waiting for neighbor {v} at step {self.step_index}",
                    step=self.step_index, worker=self.id, neighbor=v,
                ) from None
            if step != self.step_index:
                raise StepError(
                    f"worker {self.id} received step {step} from neighbor {v} during step "
                    f"{self.step_index}",
                    step=self.step_index, worker=self.id, neighbor=v,
                )
            self._pending[v] = msg

    def post_receive(self):
        st = self.store
        base = st.shared_offset
        target = st.f_old if self.sim.scheme is Scheme.PUSH else st.f_new
        for v in self.neighbors:
            off, cnt = self._segment(v)
            target[base + off : base + off + cnt] = self._pending.pop(v)
        if self.sim.scheme is Scheme.PUSH and st.shared_size:
            slots = np.arange(base, base + st.shared_size, dtype=np.int64)
            K.scatter(st.f_old, st.f_new, slots, self.map.recv_dest)

    def end_iteration(self):
        self.store.swap()
        if self.sim.scheme is Scheme.PULL:
            self.rho, self.rho_next = self.rho_next, self.rho
            self.u, self.u_next = self.u_next, self.u
        self.step_index += 1

    def run_steps(self, count):
        phases = [getattr(self, p) for p in self.sim.sequence.phases]
        for _ in range(count):
            for phase in phases:
                phase()

    # -- initialisation -------------------------------------------------------
    def initialize(self, f0):
        st = self.store
        st.load_site_major(f0, "old")
        self._initial_f = f0
        if self.sim.scheme is Scheme.PULL:
            K.collide_in_place(st.f_old, st.f_new, self.n, self.soa, self.sim.omega, self.rho, self.u)

    def init_exchange_phases(self):
        return (self.send, self.receive, self._place_initial, self._swap_initial)

    def _place_initial(self):
        st = self.store
        base = st.shared_offset
        for v in self.neighbors:
            off, cnt = self._segment(v)
            st.f_new[base + off : base + off + cnt] = self._pending.pop(v)

    def _swap_initial(self):
        self.store.swap()

    # -- inspection -----------------------------------------------------------
    def macros(self):
        if self.sim.scheme is Scheme.PULL:
            return self.rho.copy(), self.u.copy()
        rho = np.empty(self.n)
        u = np.empty((self.n, 3))
        K.site_moments(self.store.f_old, self.n, self.soa, np.arange(self.n, dtype=np.int64), rho, u)
        return rho, u

    def post_stream_populations(self):
        """Populations after streaming and boundaries, before the next collision."""
        st = self.store
        if self.sim.scheme is Scheme.PUSH:
            return st.site_major("old")
        if self.step_index == 0:
            return np.array(self._initial_f, copy=True)
        # after the swap, the stale buffers hold the previous step's post-collision state
        ghost, speed = self._bc_values(self.step_index - 1)
        out = np.empty((self.n, Q))
        K.pull_gather(
            st.f_new, out, self.map.src, self.code_pull, self.iolet_pull, self.weight, ghost,
            speed, self.sim.normals, self.rho_next, self.u_next,
        )
        return out


class Simulation:
    """A partitioned domain plus the workers that advance it."""

    def __init__(self, domain: SparseDomain, config: SimulationConfig, state=None):
        errors = config.validate(domain)
        if errors:
            raise ConfigError("invalid simulation config:\n  " + "\n  ".join(errors))
        self.domain = domain
        boundaries = dict(config.boundaries)
        for k in range(len(domain.iolets)):
            boundaries.setdefault(k, PressureBC(k, TimeTable.constant(CS2 * config.rho0)))
        config = replace(config, boundaries=boundaries)
        self.config = config
        self.scheme = Scheme(config.scheme)
        self.sequence = StepSequence(config.sequence)
        self.layout = Layout(config.layout)
        self.params = RelaxationParams(config.tau)
        self.omega = self.params.omega
        n_io = max(len(domain.iolets), 1)
        self.normals = np.zeros((n_io, 3))
        for k, io in enumerate(domain.iolets):
            self.normals[k] = io.normal
        self._bc_cache = {}

        self.assignment = partition(domain, config.workers)
        self.maps = [
            build_streaming_map(domain, self.assignment, w, self.layout)
            for w in range(config.workers)
        ]
        self.plan = build_exchange_plan(domain, self.assignment, self.maps)
        self.workers = [
            Worker(w, self, self.assignment.workers[w], self.maps[w]) for w in range(config.workers)
        ]
        for w in self.workers:
            for v in w.neighbors:
                q = queue.Queue()
                w.outbox[v] = q
                self.workers[v].inbox[w.id] = q

        executor = config.executor
        if executor == "auto":
            executor = "threads" if config.workers > 1 else "serial"
        self.executor = executor
        self._pool = ThreadPoolExecutor(max_workers=config.workers) if executor == "threads" else None

        if state is None:
            rho0 = np.full(domain.n_sites, config.rho0)
            u0 = np.broadcast_to(np.asarray(config.u0, dtype=np.float64), (domain.n_sites, 3))
        else:
            rho0 = np.asarray(state[0], dtype=np.float64)
            u0 = np.asarray(state[1], dtype=np.float64)
            if rho0.shape != (domain.n_sites,) or u0.shape != (domain.n_sites, 3):
                raise ConfigError("initial state must be (n_sites,) densities and (n_sites, 3) velocities")
            if not np.all(rho0 > 0):
                raise ConfigError("initial state has non-positive density")
        f0 = equilibrium(rho0, u0)
        for w in self.workers:
            w.initialize(f0[w.sites])
        if self.scheme is Scheme.PULL:
            for w in self.workers:
                w.step_index = -1
            for phase in range(4):
                for w in self.workers:
                    w.init_exchange_phases()[phase]()
            for w in self.workers:
                w.step_index = 0

    # -- boundary values staged once per step ---------------------------------
    def bc_values(self, step):
        hit = self._bc_cache.get(step)
        if hit is not None:
            return hit
        t = step * self.config.step_seconds
        n_io = len(self.normals)
        ghost = np.ones(n_io)
        speed = np.zeros(n_io)
        for k, bc in self.config.boundaries.items():
            if isinstance(bc, PressureBC):
                ghost[k] = bc.ghost_density(t)
                if not ghost[k] > 0:
                    raise StepError(f"iolet {k}: ghost density {ghost[k]} at step {step}", step=step)
            else:
                speed[k] = bc.max_speed(t)
        if len(self._bc_cache) > 8:
            self._bc_cache.clear()
        self._bc_cache[step] = (ghost, speed)
        return ghost, speed

    @property
    def time_step(self) -> int:
        return self.workers[0].step_index

    @property
    def n_sites(self) -> int:
        return self.domain.n_sites

    def advance(self, count: int = 1) -> None:
        if count <= 0:
            return
        start = self.time_step
        try:
            if self._pool is None:
                phases = self.sequence.phases
                for _ in range(count):
                    for p in phases:
                        for w in self.workers:
                            getattr(w, p)()
            else:
                futures = [self._pool.submit(w.run_steps, count) for w in self.workers]
                errors = []
                for fut in futures:
                    try:
                        fut.result()
                    except Exception as exc:  # noqa: BLE001 - re-raised below
                        errors.append(exc)
                if errors:
                    raise errors[0]
        except StepError:
            raise
        except Exception as exc:
            step = min(w.step_index for w in self.workers)
            raise StepError(f"step {step} failed: {exc}", step=step) from exc
        if any(w.step_index != start + count for w in self.workers):
            raise StepError("workers out of step after advance", step=start)

    step = advance

    def macros(self):
        """Density and velocity of every site in domain order."""
        rho = np.empty(self.n_sites)
        u = np.empty((self.n_sites, 3))
        for w in self.workers:
            r, v = w.macros()
            rho[w.sites] = r
            u[w.sites] = v
        return rho, u

    def populations(self):
        """Post-stream populations, ``(n_sites, 19)`` in domain order."""
        out = np.empty((self.n_sites, Q))
        for w in self.workers:
            out[w.sites] = w.post_stream_populations()
        return out

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def initialize(domain: SparseDomain, config: SimulationConfig | None = None, state=None) -> Simulation:
    """Equilibrium start at ``(rho0, u0)``, or at per-site ``state=(rho, u)`` in domain order."""
    return Simulation(domain, config or SimulationConfig(), state)


@dataclass
class PropertyCache:
    capture_period: int
    steps: list = field(default_factory=list)
    rho: list = field(default_factory=list)
    u: list = field(default_factory=list)

    def capture(self, step, rho, u):
        self.steps.append(int(step))
        self.rho.append(rho)
        self.u.append(u)

    def at(self, step):
        k = self.steps.index(step)
        return self.rho[k], self.u[k]

    def identical_to(self, other: "PropertyCache") -> bool:
        return (
            self.steps == other.steps
            and all(np.array_equal(a, b) for a, b in zip(self.rho, other.rho))
            and all(np.array_equal(a, b) for a, b in zip(self.u, other.u))
        )


class RunResult(NamedTuple):
    state: Simulation
    cache: PropertyCache
    report: object


def run(sim: Simulation, n_steps: int, observers=(), capture_period: int | None = None) -> RunResult:
    """Advance ``n_steps`` steps, capturing moments every ``capture_period`` steps.

    Observers are objects with a ``period`` attribute and a
    ``__call__(sim, step, rho, u)`` method, invoked at multiples of their
    period.  Only the stepping itself is timed.
    """
    from .bench import compute_metrics

    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    period = capture_period or sim.config.capture_period
    cache = PropertyCache(period)
    start = sim.time_step
    stop = start + n_steps
    periods = [period] + [getattr(ob, "period", period) for ob in observers]

    def visit(step):
        due_cache = step % period == 0
        due_obs = [ob for ob in observers if step % getattr(ob, "period", period) == 0]
        if not due_cache and not due_obs:
            return
        rho, u = sim.macros()
        if due_cache:
            cache.capture(step, rho, u)
        for ob in due_obs:
            ob(sim, step, rho, u)

    elapsed = 0.0
    visit(start)
    t = start
    while t < stop:
        nxt = min([stop] + [(t // p + 1) * p for p in periods])
        tic = time.perf_counter()
        try:
            sim.advance(nxt - t)
        except StepError as exc:
            if exc.step is None:
                exc.step = t
            raise
        elapsed += time.perf_counter() - tic
        t = nxt
        visit(t)
    for ob in observers:
        close = getattr(ob, "close", None)
        if close is not None:
            close()
    report = compute_metrics(
        n_sites=sim.n_sites,
        n_steps=n_steps,
        sim_time=elapsed,
        n_workers=sim.config.workers,
        imbalance=sim.assignment.imbalance,
        allow_zero_time=n_steps == 0,
    )
    return RunResult(sim, cache, report)
