"""Network topology, flows, interference description and run configuration."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path

import tomli
import tomli_w


class ModelError(ValueError):
    """Raised when a model file cannot be parsed or fails validation."""


class Variant(str, Enum):
    BACKLOGGED = "backlogged"
    ARBITRARY = "arbitrary"
    DELAYED = "delayed"
    GENERAL = "general"


class SchedulerKind(str, Enum):
    EXACT_MWM = "exact-mwm"
    GMM = "gmm"
    GREEDY_MWIS = "greedy-mwis"


NODE_EXCLUSIVE = "node-exclusive"
CONFLICT_GRAPH = "conflict-graph"


@dataclass(frozen=True)
class Arrival:
    """Transport-layer arrival process of one flow.

    ``kind`` is one of ``backlogged``, ``poisson`` (rate ``rate``, truncated
    at the admission cap) or ``trace`` (``values`` replayed cyclically).
    """

    kind: str = "backlogged"
    rate: float = 0.0
    values: tuple[int, ...] = ()


@dataclass(frozen=True)
class FlowSpec:
    source: int
    destination: int
    min_rate: float
    delay_threshold: float
    arrival: Arrival = Arrival()


@dataclass(frozen=True)
class InterferenceModel:
    kind: str = NODE_EXCLUSIVE
    # link-index pairs (i, j) with i < j; only used by the conflict-graph kind
    conflicts: tuple[tuple[int, int], ...] = ()
    # per-link finite capacity states for fading, drawn uniformly each slot
    states: tuple[tuple[int, tuple[int, ...]], ...] = ()


@dataclass(frozen=True)
class NetworkModel:
    nodes: tuple[str, ...]
    links: tuple[tuple[int, int], ...]
    flows: tuple[FlowSpec, ...]
    interference: InterferenceModel = InterferenceModel()
    link_capacities: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.link_capacities:
            object.__setattr__(self, "link_capacities", (1,) * len(self.links))

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_flows(self) -> int:
        return len(self.flows)

    @property
    def num_links(self) -> int:
        return len(self.links)

    def link_name(self, i: int) -> str:
        m, n = self.links[i]
        return f"{self.nodes[m]}->{self.nodes[n]}"

    @cached_property
    def tables(self):
        """Per-model index arrays and enumerations reused every slot."""
        from .sched import LinkTables

        return LinkTables(self)

    @cached_property
    def fading_states(self) -> dict[int, tuple[int, ...]]:
        return dict(self.interference.states)

    @cached_property
    def max_capacities(self) -> tuple[int, ...]:
        caps = list(self.link_capacities)
        for i, states in self.fading_states.items():
            caps[i] = max(states)
        return tuple(caps)

    @cached_property
    def conflict_pairs(self) -> frozenset[tuple[int, int]]:
        """All conflicting link pairs (i < j) under this interference model."""
        if self.interference.kind == NODE_EXCLUSIVE:
            return frozenset(node_exclusive_conflicts(self.links))
        return frozenset(tuple(sorted(p)) for p in self.interference.conflicts)

    @cached_property
    def conflict_neighbors(self) -> tuple[frozenset[int], ...]:
        nbrs = [set() for _ in self.links]
        for i, j in self.conflict_pairs:
            nbrs[i].add(j)
            nbrs[j].add(i)
        return tuple(frozenset(s) for s in nbrs)

    def as_conflict_graph(self) -> NetworkModel:
        """The same network with its interference spelled out as explicit conflicts."""
        inter = InterferenceModel(CONFLICT_GRAPH, tuple(sorted(self.conflict_pairs)),
                                  self.interference.states)
        return NetworkModel(self.nodes, self.links, self.flows, inter, self.link_capacities)


def node_exclusive_conflicts(links) -> list[tuple[int, int]]:
    pairs = []
    for i, j in itertools.combinations(range(len(links)), 2):
        if set(links[i]) & set(links[j]):
            pairs.append((i, j))
    return pairs


@dataclass(frozen=True)
class SimConfig:
    q_max: int = 5
    mu_max: int = 2
    V: float = 1000.0
    eta: float = 1.0
    feedback_delay: int = 0
    transport_buffer: float = 0.0
    horizon: int = 100_000
    seed: int = 0
    variant: Variant = Variant.BACKLOGGED
    scheduler: SchedulerKind = SchedulerKind.EXACT_MWM

    def replace(self, **changes) -> SimConfig:
        from dataclasses import replace

        return replace(self, **changes)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    # name -> bool for the throughput/delay theorem conditions that were checkable
    conditions: dict[str, bool] = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return not self.violations

    @property
    def theorem_conditions_hold(self) -> bool:
        return bool(self.conditions) and all(self.conditions.values())


def queue_cap_threshold(num_nodes: int, mu_max: float, epsilon: float, gamma: float = 1.0) -> float:
    """Smallest queue cap (exclusive) for which the drift argument closes."""
    return (2 * num_nodes - 1 + mu_max ** 2) / (2 * gamma * epsilon) + mu_max


def theorem_conditions(model: NetworkModel, config: SimConfig, epsilon: float,
                       rates=None, gamma: float = 1.0) -> dict[str, bool]:
    """Evaluate the queue-cap and delay-threshold conditions of the throughput theorem.

    ``rates`` is the epsilon-interior optimal rate vector; without it only the
    queue-cap condition is evaluated. ``gamma`` < 1 gives the suboptimal-scheduler
    version, which also needs ``gamma * rate > min_rate``.
    """
    n = model.num_nodes
    conds = {"q_max": bool(config.q_max > queue_cap_threshold(n, config.mu_max, epsilon, gamma))}
    if rates is not None:
        for c, flow in enumerate(model.flows):
            r = rates[c]
            conds[f"rho[{c}]"] = bool(r > 0 and flow.delay_threshold > n * config.q_max / (gamma * r))
            if gamma < 1:
                conds[f"min_rate[{c}]"] = bool(gamma * r > flow.min_rate)
    return conds


def validate(model: NetworkModel, config: SimConfig, epsilon: float | None = None,
             rates=None, gamma: float = 1.0) -> ValidationReport:
    report = ValidationReport()
    bad = report.violations
    n = model.num_nodes

    if len(set(model.nodes)) != n:
        bad.append("node names must be unique")
    for i, (m, k) in enumerate(model.links):
        if not (0 <= m < n and 0 <= k < n):
            bad.append(f"link {i} endpoint outside node set")
        elif m == k:
            bad.append(f"link {model.link_name(i)} is a self-loop")
    if len(set(model.links)) != len(model.links):
        bad.append("duplicate links")
    if len(model.link_capacities) != model.num_links:
        bad.append("link_capacities length must equal number of links")
    if any(c < 0 for c in model.link_capacities):
        bad.append("link capacities must be nonnegative")
    for i, states in model.fading_states.items():
        if not 0 <= i < model.num_links:
            bad.append(f"fading states for unknown link {i}")
        elif not states or any(s < 0 or int(s) != s for s in states):
            bad.append(f"fading states of {model.link_name(i)} must be nonnegative integers")
    if not model.flows:
        bad.append("at least one flow is required")
    for c, f in enumerate(model.flows):
        if not (0 <= f.source < n and 0 <= f.destination < n):
            bad.append(f"flow {c} endpoint outside node set")
        elif f.source == f.destination:
            bad.append(f"flow {c} source equals destination")
        if f.min_rate < 0:
            bad.append(f"flow {c} min_rate must be >= 0")
        if not f.delay_threshold > 0:
            bad.append(f"flow {c} delay_threshold must be > 0")
        if f.arrival.kind not in ("backlogged", "poisson", "trace"):
            bad.append(f"flow {c} unknown arrival kind {f.arrival.kind!r}")
        if f.arrival.kind == "poisson" and f.arrival.rate < 0:
            bad.append(f"flow {c} arrival rate must be >= 0")
        if f.arrival.kind == "trace" and any(a < 0 or a > config.mu_max for a in f.arrival.values):
            bad.append(f"flow {c} trace arrivals must lie in [0, mu_max]")
    kind = model.interference.kind
    if kind not in (NODE_EXCLUSIVE, CONFLICT_GRAPH):
        bad.append(f"unknown interference kind {kind!r}")
    for i, j in model.interference.conflicts:
        if not (0 <= i < model.num_links and 0 <= j < model.num_links) or i == j:
            bad.append(f"bad conflict pair ({i}, {j})")

    if config.mu_max < 1:
        bad.append("mu_max >= 1")
    if config.q_max < config.mu_max:
        bad.append("q_max >= mu_max")
    if not config.V > 0:
        bad.append("V > 0")
    if config.variant == Variant.ARBITRARY and not config.eta > 0:
        bad.append("eta > 0 for the arbitrary-arrival variant")
    if config.feedback_delay < 0:
        bad.append("feedback_delay >= 0")
    if config.transport_buffer < 0:
        bad.append("transport_buffer >= 0")
    if config.horizon < 0:
        bad.append("horizon >= 0")

    if config.variant == Variant.GENERAL:
        inbound = max_inbound_capacity(model) if not bad else []
        need = max(max(inbound, default=0), config.mu_max)
        if config.q_max < need:
            bad.append(f"q_max >= max(max inbound capacity, mu_max) = {need}")
    else:
        if any(c != 1 for c in model.link_capacities) or model.fading_states:
            bad.append("unit link capacities without fading unless variant = general")
        if kind != NODE_EXCLUSIVE:
            bad.append("conflict-graph interference requires variant = general")
    if config.scheduler == SchedulerKind.GMM and kind != NODE_EXCLUSIVE:
        bad.append("gmm scheduler requires node-exclusive interference")

    if epsilon is not None and not bad:
        report.conditions = theorem_conditions(model, config, epsilon, rates, gamma)
    return report


def max_inbound_capacity(model: NetworkModel) -> list[int]:
    """Per node, the largest total inbound capacity of any feasible activation.

    Capacities are taken at their largest fading state, which upper-bounds the
    per-slot maximum for every channel state.
    """
    from .sched import feasible_sets

    caps = model.max_capacities
    inbound = [0] * model.num_nodes
    for s in feasible_sets(model):
        tot = [0] * model.num_nodes
        for i in s:
            tot[model.links[i][1]] += caps[i]
        inbound = [max(a, b) for a, b in zip(inbound, tot)]
    return inbound


# --- config file -----------------------------------------------------------

_REQUIRED_FLOW = ("source", "destination", "min_rate", "delay_threshold")


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ModelError(f"{where}: missing required field {key!r}")
    return table[key]


def _parse_link_key(key: str, index: dict[str, int], links: list, where: str) -> int:
    try:
        m, n = key.split("->")
        return links.index((index[m.strip()], index[n.strip()]))
    except (ValueError, KeyError):
        raise ModelError(f"{where}: unknown link {key!r} (use 'from->to')") from None


def parse_model(data: dict) -> tuple[NetworkModel, SimConfig]:
    """Build a model and config from an already-parsed config tree."""
    nodes = tuple(str(x) for x in _require(_require(data, "nodes", "root"), "names", "[nodes]"))
    index = {name: i for i, name in enumerate(nodes)}

    def node(name, where):
        if name not in index:
            raise ModelError(f"{where}: unknown node {name!r}")
        return index[name]

    ltab = _require(data, "links", "root")
    pairs = _require(ltab, "pairs", "[links]")
    links: list[tuple[int, int]] = []
    for k, pair in enumerate(pairs):
        if len(pair) != 2:
            raise ModelError(f"[links].pairs[{k}]: expected [from, to]")
        m, n = node(pair[0], f"[links].pairs[{k}]"), node(pair[1], f"[links].pairs[{k}]")
        for lk in ((m, n), (n, m)) if ltab.get("bidirectional", False) else ((m, n),):
            if lk not in links:
                links.append(lk)
    default_cap = int(ltab.get("capacity", 1))
    caps = [default_cap] * len(links)
    for key, val in ltab.get("capacities", {}).items():
        caps[_parse_link_key(key, index, links, "[links.capacities]")] = int(val)
    states = []
    for key, val in ltab.get("states", {}).items():
        i = _parse_link_key(key, index, links, "[links.states]")
        states.append((i, tuple(int(v) for v in val)))

    flows = []
    for c, ftab in enumerate(_require(data, "flows", "root")):
        where = f"[[flows]] #{c}"
        for key in _REQUIRED_FLOW:
            _require(ftab, key, where)
        arr = ftab.get("arrival", "backlogged")
        if isinstance(arr, str):
            arrival = Arrival(arr)
        else:
            arrival = Arrival(str(_require(arr, "kind", where + ".arrival")),
                              float(arr.get("rate", 0.0)),
                              tuple(int(v) for v in arr.get("values", ())))
        flows.append(FlowSpec(node(ftab["source"], where), node(ftab["destination"], where),
                              float(ftab["min_rate"]), float(ftab["delay_threshold"]), arrival))

    itab = data.get("interference", {})
    kind = itab.get("kind", NODE_EXCLUSIVE)
    conflicts = []
    for k, (a, b) in enumerate(itab.get("conflicts", [])):
        i = _parse_link_key(a, index, links, f"[interference].conflicts[{k}]")
        j = _parse_link_key(b, index, links, f"[interference].conflicts[{k}]")
        conflicts.append((min(i, j), max(i, j)))
    model = NetworkModel(nodes, tuple(links), tuple(flows),
                         InterferenceModel(kind, tuple(sorted(set(conflicts))), tuple(sorted(states))),
                         tuple(caps))

    ctab = data.get("control", {})
    known = {f for f in SimConfig.__dataclass_fields__}
    extra = set(ctab) - known
    if extra:
        raise ModelError(f"[control]: unknown field(s) {sorted(extra)}")
    try:
        kw = dict(ctab)
        if "variant" in kw:
            kw["variant"] = Variant(kw["variant"])
        if "scheduler" in kw:
            kw["scheduler"] = SchedulerKind(kw["scheduler"])
        config = SimConfig(**kw)
    except ValueError as exc:
        raise ModelError(f"[control]: {exc}") from None
    return model, config


def load_model(path, check: bool = True) -> tuple[NetworkModel, SimConfig]:
    """Read a model TOML file; with ``check`` an invalid model raises ModelError."""
    path = Path(path)
    try:
        data = tomli.loads(path.read_text())
    except OSError as exc:
        raise ModelError(f"{path}: cannot read: {exc.strerror}") from None
    except tomli.TOMLDecodeError as exc:
        raise ModelError(f"{path}: {exc}") from None
    try:
        model, config = parse_model(data)
    except ModelError as exc:
        raise ModelError(f"{path}: {exc}") from None
    if not check:
        return model, config
    report = validate(model, config)
    if not report.valid:
        raise ModelError(f"{path}: invalid model: " + "; ".join(report.violations))
    return model, config


def model_to_dict(model: NetworkModel, config: SimConfig) -> dict:
    names = model.nodes
    data: dict = {
        "nodes": {"names": list(names)},
        "links": {"bidirectional": False,
                  "pairs": [[names[m], names[n]] for m, n in model.links]},
    }
    caps = {model.link_name(i): c for i, c in enumerate(model.link_capacities) if c != 1}
    if caps:
        data["links"]["capacities"] = caps
    if model.fading_states:
        data["links"]["states"] = {model.link_name(i): list(s) for i, s in sorted(model.fading_states.items())}
    flows = []
    for f in model.flows:
        a = f.arrival
        if a.kind == "backlogged":
            arrival = "backlogged"
        elif a.kind == "poisson":
            arrival = {"kind": "poisson", "rate": a.rate}
        else:
            arrival = {"kind": a.kind, "values": list(a.values)}
        flows.append({"source": names[f.source], "destination": names[f.destination],
                      "min_rate": f.min_rate, "delay_threshold": f.delay_threshold,
                      "arrival": arrival})
    data["flows"] = flows
    data["interference"] = {"kind": model.interference.kind}
    if model.interference.conflicts:
        data["interference"]["conflicts"] = [[model.link_name(i), model.link_name(j)]
                                             for i, j in model.interference.conflicts]
    ctl = {k: getattr(config, k) for k in SimConfig.__dataclass_fields__}
    ctl["variant"] = config.variant.value
    ctl["scheduler"] = config.scheduler.value
    data["control"] = ctl
    return data


def dump_model(model: NetworkModel, config: SimConfig) -> str:
    return tomli_w.dumps(model_to_dict(model, config))


def scenario_dir() -> Path:
    return Path(__file__).parent / "scenarios"


def scenario_path(name: str) -> Path:
    p = scenario_dir() / (name if name.endswith(".toml") else name + ".toml")
    if not p.exists():
        raise ModelError(f"no shipped scenario named {name!r}")
    return p
