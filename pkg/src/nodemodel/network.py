"""Multi-commodity cell-transmission network with junction solves per step.

Links are split into cells with a trapezoidal fundamental diagram
``q = min(v k, Q, w (k_jam - k))``. Each cell sends ``min(v k, Q) dt`` and
receives up to ``min(Q, w (k_jam - k)) dt`` vehicles per step, and the sent
vehicles carry the cell's commodity mix. At every junction the last-cell
sending amounts and first-cell receiving amounts form a :class:`NodeProblem`
that is solved with :func:`solve_mimo`.

Units: lengths in km, speeds in km/h, capacities and rates in veh/h,
densities in veh/km, the step ``dt`` in seconds. Per-step quantities (node
demands, supplies and flows) are vehicles.

A step has a read phase, which computes every sending and receiving amount
from the current state, and a write phase, which applies all boundary flows
at once. Junction solves within a step are therefore independent.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from .intervals import IntervalSet
from .problem import FlowMatrix, NodeProblem, Restriction, build_restriction
from .scenario import DimensionError, apply_priority_preset, eta_mapping, split_array
from .solver import solve_mimo

log = logging.getLogger(__name__)

SECONDS_PER_HOUR = 3600.0
CFL_SLACK = 1e-12
SPLIT_SUM_TOL = 1e-9

NodeSolver = Callable[[NodeProblem], np.ndarray]


class ConfigError(ValueError):
    """Invalid network configuration; ``problems`` lists every issue found."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class FundamentalDiagram:
    """Link-wide trapezoidal flow-density relation."""

    free_speed: float
    wave_speed: float
    capacity: float
    jam_density: float

    @property
    def critical_density(self) -> float:
        return self.capacity / self.free_speed

    def sending(self, k: np.ndarray) -> np.ndarray:
        """Sending rate (veh/h) at density ``k``."""
        return np.minimum(self.free_speed * k, self.capacity)

    def receiving(self, k: np.ndarray) -> np.ndarray:
        """Receiving rate (veh/h) at density ``k``; never negative."""
        return np.clip(self.wave_speed * (self.jam_density - k), 0.0, self.capacity)


@dataclass(frozen=True)
class Link:
    id: str
    length: float
    lanes: float
    fd: FundamentalDiagram
    cells: int
    initial_density: tuple[float, ...] = ()

    @property
    def cell_length(self) -> float:
        return self.length / self.cells


@dataclass(frozen=True)
class Profile:
    """Piecewise-constant time profile; ``values[k]`` holds from ``starts[k]``."""

    starts: tuple[float, ...]
    values: tuple[np.ndarray, ...]

    def at(self, t: float) -> np.ndarray:
        k = int(np.searchsorted(self.starts, t, side="right")) - 1
        return self.values[max(k, 0)]


@dataclass(frozen=True)
class Junction:
    id: str
    inputs: tuple[int, ...]
    outputs: tuple[int, ...]
    split: Profile
    restriction: Restriction
    priority: np.ndarray | None = None
    priority_preset: str = "capacity"
    onramp: tuple[str, ...] = ()


@dataclass(frozen=True)
class Network:
    """Immutable network configuration. Build it with :meth:`from_document`."""

    dt: float
    commodities: tuple[str, ...]
    links: tuple[Link, ...]
    junctions: tuple[Junction, ...] = ()
    sources: Mapping[int, Profile] = field(default_factory=dict)
    sinks: Mapping[int, Profile] = field(default_factory=dict)
    name: str = "network"

    @property
    def C(self) -> int:
        return len(self.commodities)

    @property
    def dt_hours(self) -> float:
        return self.dt / SECONDS_PER_HOUR

    def link_index(self, link_id: str) -> int:
        for n, link in enumerate(self.links):
            if link.id == link_id:
                return n
        raise KeyError(link_id)

    def junction(self, junction_id: str) -> Junction:
        for j in self.junctions:
            if j.id == junction_id:
                return j
        raise KeyError(junction_id)

    def with_restrictions(self, tables: Mapping[str, Restriction]) -> Network:
        """Copy with the restriction tables of the named junctions replaced."""
        junctions = tuple(
            replace(j, restriction=tables[j.id]) if j.id in tables else j for j in self.junctions
        )
        return replace(self, junctions=junctions)

    @classmethod
    def from_document(cls, doc: dict, variant: str | None = None) -> Network:
        """Builds and checks a network from a schema-valid document.

        Raises:
            ConfigError: listing missing link references, CFL violations,
                split ratios that do not sum to one, and similar problems.
        """
        return _build(doc, variant)


def _profile(entries: list[dict], key: str, width: int | None, what: str,
             problems: list[str]) -> Profile:
    starts = [float(e["start"]) for e in entries]
    if starts[0] != 0.0:
        problems.append(f"{what}: first profile entry must start at 0")
    if any(b <= a for a, b in zip(starts, starts[1:])):
        problems.append(f"{what}: profile start times must increase")
    values = []
    for e in entries:
        v = np.atleast_1d(np.asarray(e[key], dtype=float))
        if width is not None and v.shape != (width,):
            problems.append(f"{what}: expected {width} values per entry, got {v.size}")
        values.append(v)
    return Profile(tuple(starts), tuple(values))


def _build(doc: dict, variant: str | None) -> Network:
    problems: list[str] = []
    dt = float(doc["dt"])
    dt_h = dt / SECONDS_PER_HOUR
    commodities = tuple(doc.get("commodities") or ["1"])
    C = len(commodities)

    links: list[Link] = []
    index: dict[str, int] = {}
    for cfg in doc["links"]:
        lid = cfg["id"]
        if lid in index:
            problems.append(f"duplicate link id {lid!r}")
            continue
        lanes = float(cfg["lanes"])
        fd = FundamentalDiagram(
            float(cfg["free_speed"]), float(cfg["wave_speed"]),
            float(cfg["capacity_per_lane"]) * lanes, float(cfg["jam_density_per_lane"]) * lanes,
        )
        step_km = max(fd.free_speed, fd.wave_speed) * dt_h
        cells = int(cfg.get("cells") or max(1, int(np.floor(cfg["length"] / step_km + CFL_SLACK))))
        link = Link(lid, float(cfg["length"]), lanes, fd, cells,
                    tuple(float(x) for x in cfg.get("initial_density", [0.0] * C)))
        if link.cell_length < step_km * (1 - CFL_SLACK):
            speed = "free-flow" if fd.free_speed >= fd.wave_speed else "congestion wave"
            problems.append(
                f"CFL violation on link {lid!r}: {speed} speed {step_km / dt_h:g} km/h x "
                f"dt {dt:g} s covers {step_km:.6g} km > cell length {link.cell_length:.6g} km")
        if len(link.initial_density) != C:
            problems.append(f"link {lid!r}: initial_density needs {C} values")
        elif sum(link.initial_density) > fd.jam_density:
            problems.append(f"link {lid!r}: initial density exceeds jam density")
        index[lid] = len(links)
        links.append(link)

    def ref(lid: str, where: str) -> int | None:
        if lid not in index:
            problems.append(f"{where} refers to unknown link {lid!r}")
            return None
        return index[lid]

    variant_eta: dict = {}
    if variant is not None:
        variants = doc.get("variants", {})
        if variant not in variants:
            raise ConfigError([f"unknown variant {variant!r} (available: "
                               f"{', '.join(sorted(variants)) or 'none'})"])
        variant_eta = variants[variant].get("junction_eta", {})
        unknown = set(variant_eta) - {j["id"] for j in doc.get("junctions", [])}
        if unknown:
            problems.append(f"variant {variant!r} names unknown junctions {sorted(unknown)}")

    upstream_of: dict[int, str] = {}
    downstream_of: dict[int, str] = {}
    junctions = []
    for cfg in doc.get("junctions", []):
        jid = cfg["id"]
        ins = [ref(x, f"junction {jid!r}") for x in cfg["inputs"]]
        outs = [ref(x, f"junction {jid!r}") for x in cfg["outputs"]]
        if None in ins or None in outs:
            continue
        for n in ins:
            if n in downstream_of:
                problems.append(f"link {links[n].id!r} feeds two junctions")
            downstream_of[n] = jid
        for n in outs:
            if n in upstream_of:
                problems.append(f"link {links[n].id!r} is fed by two junctions")
            upstream_of[n] = jid
        M, N = len(ins), len(outs)
        try:
            split_entries = []
            for e in cfg["split"]:
                s = split_array(e["ratios"], M, N, C, what=f"junction {jid!r} split")
                sums = s.sum(axis=1)
                if np.any(np.abs(sums - 1.0) > SPLIT_SUM_TOL):
                    problems.append(
                        f"junction {jid!r}: split ratios from t={e['start']:g} s do not sum to 1 "
                        f"(sums {np.round(sums, 12).tolist()})")
                split_entries.append({"start": e["start"], "ratios": s})
            split = Profile(tuple(float(e["start"]) for e in split_entries),
                            tuple(e["ratios"] for e in split_entries))
            if split.starts[0] != 0.0:
                problems.append(f"junction {jid!r}: split profile must start at 0")
            eta_list = variant_eta.get(jid, cfg.get("eta", []))
            eta = build_restriction(M, N, eta_mapping(eta_list, cfg["inputs"], cfg["outputs"]))
        except DimensionError as exc:
            problems.append(str(exc))
            continue
        for i in range(M):
            for j in range(N):
                if not eta[i][j][j].is_full():
                    problems.append(f"junction {jid!r}: diagonal restriction must be full")
        priority = None
        if "priority" in cfg:
            priority = np.asarray(cfg["priority"], dtype=float)
            if priority.shape != (M,):
                problems.append(f"junction {jid!r}: priority needs {M} values")
        preset = cfg.get("priority_preset", "explicit" if priority is not None else "capacity")
        if preset == "explicit" and priority is None:
            problems.append(f"junction {jid!r}: explicit priorities missing")
        junctions.append(Junction(jid, tuple(ins), tuple(outs), split, eta, priority, preset,
                                  tuple(cfg.get("onramp", ()))))

    sources: dict[int, Profile] = {}
    for cfg in doc.get("sources", []):
        n = ref(cfg["link"], "source")
        if n is None:
            continue
        if n in upstream_of:
            problems.append(f"source link {cfg['link']!r} is already fed by junction {upstream_of[n]!r}")
        sources[n] = _profile(cfg["profile"], "rate", C, f"source {cfg['link']!r}", problems)
    sinks: dict[int, Profile] = {}
    for cfg in doc.get("sinks", []):
        n = ref(cfg["link"], "sink")
        if n is None:
            continue
        if n in downstream_of:
            problems.append(f"sink link {cfg['link']!r} already feeds junction {downstream_of[n]!r}")
        sinks[n] = _profile(cfg["profile"], "capacity", 1, f"sink {cfg['link']!r}", problems)

    if problems:
        raise ConfigError(problems)
    return Network(dt, commodities, tuple(links), tuple(junctions), sources, sinks,
                   doc.get("name", "network"))


# State and stepping


@dataclass
class NetworkState:
    """Mutable simulation state owned by the stepping loop.

    ``vehicles[l]`` has shape (cells, C). Origin queues hold vehicles that
    arrived at a source but could not enter its first cell yet.
    """

    step: int
    vehicles: list[np.ndarray]
    queues: dict[int, np.ndarray]
    arrived: np.ndarray
    exited: np.ndarray

    @classmethod
    def initial(cls, net: Network) -> NetworkState:
        vehicles = [
            np.tile(np.asarray(link.initial_density, dtype=float) * link.cell_length, (link.cells, 1))
            for link in net.links
        ]
        queues = {n: np.zeros(net.C) for n in net.sources}
        return cls(0, vehicles, queues, np.zeros(net.C), np.zeros(net.C))

    def time(self, net: Network) -> float:
        return self.step * net.dt

    def in_network(self) -> np.ndarray:
        """Vehicles on links plus origin queues, per commodity."""
        total = sum(v.sum(axis=0) for v in self.vehicles)
        for q in self.queues.values():
            total = total + q
        return total

    def copy(self) -> NetworkState:
        return NetworkState(self.step, [v.copy() for v in self.vehicles],
                            {k: q.copy() for k, q in self.queues.items()},
                            self.arrived.copy(), self.exited.copy())


@dataclass(frozen=True)
class StepResult:
    """What happened during one step.

    ``boundary[l]`` has shape (cells + 1, C): entry ``b`` is the number of
    vehicles that crossed into cell ``b`` of link ``l`` (entry ``cells`` is
    the link's outflow).
    """

    t: float
    boundary: tuple[np.ndarray, ...]
    junction_flows: dict[str, FlowMatrix]
    junction_problems: dict[str, NodeProblem]


def _mix(vehicles: np.ndarray) -> np.ndarray:
    """Commodity shares per cell; empty cells get zero shares."""
    pos = np.maximum(vehicles, 0.0)
    tot = pos.sum(axis=1, keepdims=True)
    return np.divide(pos, tot, out=np.zeros_like(pos), where=tot > 0)


def junction_problem(net: Network, junction: Junction, sending: list[np.ndarray],
                     receiving: list[float], t: float) -> NodeProblem:
    """The node problem for ``junction`` given per-link sending/receiving amounts."""
    dt_h = net.dt_hours
    demand = np.array([sending[n] for n in junction.inputs])
    supply = np.array([receiving[n] for n in junction.outputs])
    capacity = np.array([net.links[n].fd.capacity * dt_h for n in junction.inputs])
    priority = junction.priority if junction.priority is not None else capacity
    ids_in = tuple(net.links[n].id for n in junction.inputs)
    ids_out = tuple(net.links[n].id for n in junction.outputs)
    problem = NodeProblem(demand, junction.split.at(t), supply, np.asarray(priority, dtype=float),
                          junction.restriction, capacity, ids_in, ids_out)
    if junction.priority_preset != "explicit":
        problem = apply_priority_preset(problem, junction.priority_preset, junction.onramp)
    return problem


def _default_solver(problem: NodeProblem) -> np.ndarray:
    return solve_mimo(problem, quiet=True, check=False)[0].f


def step(net: Network, state: NetworkState, *,
         node_solver: NodeSolver | None = None) -> tuple[NetworkState, StepResult]:
    """Advances one step and returns the new state plus the step's flows.

    ``node_solver`` maps a node problem to a flow array (M, N, C); it
    defaults to :func:`solve_mimo` in quiet mode.
    """
    solver = node_solver or _default_solver
    dt_h = net.dt_hours
    t = state.time(net)
    L = len(net.links)

    # Read phase.
    send_total, recv, mix = [], [], []
    for link, veh in zip(net.links, state.vehicles):
        k = veh.sum(axis=1) / link.cell_length
        send_total.append(link.fd.sending(k) * dt_h)
        recv.append(link.fd.receiving(k) * dt_h)
        mix.append(_mix(veh))
    sending_last = [send_total[n][-1] * mix[n][-1] for n in range(L)]
    receiving_first = [float(recv[n][0]) for n in range(L)]

    boundary = []
    for n, link in enumerate(net.links):
        b = np.zeros((link.cells + 1, net.C))
        if link.cells > 1:
            y = np.minimum(send_total[n][:-1], recv[n][1:])
            b[1:-1] = y[:, None] * mix[n][:-1]
        boundary.append(b)

    junction_flows: dict[str, FlowMatrix] = {}
    junction_problems: dict[str, NodeProblem] = {}
    fed = set()
    drained = set()
    for jn in net.junctions:
        problem = junction_problem(net, jn, sending_last, receiving_first, t)
        f = solver(problem)
        junction_flows[jn.id] = FlowMatrix(f, problem.input_ids, problem.output_ids)
        junction_problems[jn.id] = problem
        for a, n in enumerate(jn.inputs):
            boundary[n][-1] = f[a].sum(axis=0)
            drained.add(n)
        for a, n in enumerate(jn.outputs):
            boundary[n][0] = f[:, a].sum(axis=0)
            fed.add(n)

    new = state.copy()
    exits = np.zeros(net.C)
    for n, link in enumerate(net.links):
        if n in drained:
            continue
        out_total = send_total[n][-1]
        if n in net.sinks:
            out_total = min(out_total, float(net.sinks[n].at(t)[0]) * dt_h)
        boundary[n][-1] = out_total * mix[n][-1]
        exits += boundary[n][-1]
    for n, profile in net.sources.items():
        arrivals = profile.at(t) * dt_h
        queue = new.queues[n] + arrivals
        new.arrived += arrivals
        waiting = queue.sum()
        enter = min(waiting, receiving_first[n])
        moved = queue * (enter / waiting) if waiting > 0 else np.zeros(net.C)
        boundary[n][0] = moved
        new.queues[n] = queue - moved

    # Write phase.
    for n in range(L):
        b = boundary[n]
        new.vehicles[n] += b[:-1] - b[1:]
    new.exited += exits
    new.step += 1
    return new, StepResult(t, tuple(boundary), junction_flows, junction_problems)


# Running


@dataclass(frozen=True)
class RunResult:
    """Time series from :func:`run`; row ``k`` describes step ``[t_k, t_k + dt)``.

    Densities are sampled at the start of each step, flows are per-cell
    outflow rates during the step.
    """

    network: Network
    times: np.ndarray
    density: dict[str, np.ndarray]     # (T, cells, C) veh/km
    flow: dict[str, np.ndarray]        # (T, cells, C) veh/h leaving each cell
    inflow: dict[str, np.ndarray]      # (T, C) veh/h entering each link
    queues: dict[str, np.ndarray]      # (T, C) vehicles waiting at each source
    junction_flows: dict[str, np.ndarray]  # (T, M, N, C) vehicles per step
    arrived: np.ndarray                # (T + 1, C) cumulative
    exited: np.ndarray                 # (T + 1, C) cumulative
    in_network: np.ndarray             # (T + 1, C)
    final_state: NetworkState
    problems: dict[str, list[NodeProblem]] | None = None

    @property
    def steps(self) -> int:
        return len(self.times)

    def conservation_error(self) -> np.ndarray:
        """Worst relative mismatch of in-network + exited vs arrived, per commodity."""
        residual = self.in_network + self.exited - self.arrived
        gap = np.abs(residual - residual[0])
        scale = np.maximum(self.arrived + self.in_network[0], 1.0)
        return (gap / scale).max(axis=0) if len(gap) else np.zeros(self.network.C)

    def cumulative_inflow(self, link_id: str) -> np.ndarray:
        """Cumulative vehicles that entered ``link_id`` after each step, all commodities."""
        return np.cumsum(self.inflow[link_id].sum(axis=1) * self.network.dt_hours)


def run(net: Network, horizon: float, *, node_solver: NodeSolver | None = None,
        keep_problems: bool = False, state: NetworkState | None = None) -> RunResult:
    """Simulates ``horizon`` seconds (rounded to whole steps)."""
    steps = int(round(horizon / net.dt))
    if steps < 0:
        raise ValueError("horizon must be non-negative")
    state = state or NetworkState.initial(net)
    C = net.C
    dt_h = net.dt_hours
    times = np.arange(steps) * net.dt + state.time(net)
    density = {lk.id: np.zeros((steps, lk.cells, C)) for lk in net.links}
    flow = {lk.id: np.zeros((steps, lk.cells, C)) for lk in net.links}
    inflow = {lk.id: np.zeros((steps, C)) for lk in net.links}
    queues = {net.links[n].id: np.zeros((steps, C)) for n in net.sources}
    jflows = {j.id: np.zeros((steps, len(j.inputs), len(j.outputs), C)) for j in net.junctions}
    arrived = np.zeros((steps + 1, C))
    exited = np.zeros((steps + 1, C))
    in_net = np.zeros((steps + 1, C))
    problems = {j.id: [] for j in net.junctions} if keep_problems else None
    arrived[0], exited[0], in_net[0] = state.arrived, state.exited, state.in_network()

    for k in range(steps):
        for link, veh in zip(net.links, state.vehicles):
            density[link.id][k] = veh / link.cell_length
        for n in net.sources:
            queues[net.links[n].id][k] = state.queues[n]
        state, res = step(net, state, node_solver=node_solver)
        for n, link in enumerate(net.links):
            flow[link.id][k] = res.boundary[n][1:] / dt_h
            inflow[link.id][k] = res.boundary[n][0] / dt_h
        for jid, fm in res.junction_flows.items():
            jflows[jid][k] = fm.f
            if problems is not None:
                problems[jid].append(res.junction_problems[jid])
        arrived[k + 1], exited[k + 1], in_net[k + 1] = state.arrived, state.exited, state.in_network()
    log.debug("ran %s for %d steps", net.name, steps)
    return RunResult(net, times, density, flow, inflow, queues, jflows, arrived, exited, in_net,
                     state, problems)


def load_network(path, variant: str | None = None) -> Network:
    from .scenario import load_document

    return Network.from_document(load_document(path, "network"), variant)


def full_restriction(junction: Junction) -> Restriction:
    """All-full restriction table matching ``junction``'s shape."""
    return build_restriction(len(junction.inputs), len(junction.outputs))


def lane_interval(lo_lane: int, hi_lane: int, lanes: int) -> IntervalSet:
    """Interval covering lanes ``lo_lane..hi_lane`` (1-based) of ``lanes`` lanes."""
    return IntervalSet([((lo_lane - 1) / lanes, hi_lane / lanes)])
