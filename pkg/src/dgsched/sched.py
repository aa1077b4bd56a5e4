"""Link weights and per-slot schedulers.

Exact schedules come from enumerating every maximal feasible activation set
(small instances) or from blossom matching; GMM and the greedy independent-set
rules are the cheaper suboptimal alternatives.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import networkx as nx
import numpy as np

from .model import NODE_EXCLUSIVE, NetworkModel, SchedulerKind, Variant
from .queues import InvariantViolation

MAX_ENUM_LINKS = 20


class InstanceTooLarge(ValueError):
    pass


def feasible_sets(model: NetworkModel) -> list[tuple[int, ...]]:
    """All maximal independent sets of the link conflict graph, sorted."""
    if model.num_links > MAX_ENUM_LINKS:
        raise InstanceTooLarge(
            f"{model.num_links} links exceeds the exact enumeration limit of {MAX_ENUM_LINKS}; "
            "use the greedy-mwis scheduler")
    return model.tables.feasible_sets


class LinkTables:
    def __init__(self, model: NetworkModel):
        self.model = model
        self.src = np.array([m for m, _ in model.links], dtype=np.int64)
        self.dst = np.array([n for _, n in model.links], dtype=np.int64)
        self.sources = np.array([f.source for f in model.flows], dtype=np.int64)
        self.flow_index = np.arange(model.num_flows)
        # flow c may never be carried into its own source node
        self.into_source = self.dst[:, None] == self.sources[None, :]
        self.capacities = np.array(model.link_capacities, dtype=np.int64)
        self.neighbors = model.conflict_neighbors
        self.max_degree = max((len(s) for s in self.neighbors), default=0)

    @cached_property
    def feasible_sets(self) -> list[tuple[int, ...]]:
        g = nx.Graph()
        g.add_nodes_from(range(self.model.num_links))
        g.add_edges_from(self.model.conflict_pairs)
        if g.number_of_nodes() == 0:
            return [()]
        sets = [tuple(sorted(c)) for c in nx.find_cliques(nx.complement(g))]
        return sorted(sets)

    @cached_property
    def feasible_matrix(self) -> np.ndarray:
        sets = feasible_sets(self.model)
        mat = np.zeros((len(sets), self.model.num_links))
        for r, s in enumerate(sets):
            mat[r, list(s)] = 1.0
        return mat

    @cached_property
    def inbound(self) -> np.ndarray:
        from .model import max_inbound_capacity

        return np.array(max_inbound_capacity(self.model), dtype=float)


@dataclass
class WeightTable:
    flow: np.ndarray          # chosen flow per link
    weight: np.ndarray        # clipped weight per link
    raw: np.ndarray           # (links, flows) unclipped per-flow weights
    admit_weight: np.ndarray  # per flow, weight of the virtual admission link


@dataclass
class ScheduleDecision:
    link_rate: np.ndarray
    link_flow: np.ndarray
    admit: np.ndarray

    def active(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.link_rate)]


def _finish(raw, admit_weight) -> WeightTable:
    flow = raw.argmax(axis=1) if raw.shape[1] else np.zeros(raw.shape[0], dtype=np.int64)
    if raw.shape[0]:
        weight = np.maximum(raw[np.arange(raw.shape[0]), flow], 0.0)
    else:
        weight = np.zeros(0)
    return WeightTable(flow, weight, raw, admit_weight)


def assign_weights(model: NetworkModel, backlog, vq, config) -> WeightTable:
    """Per-link weights: virtual backlog over q_M times the packet back-pressure.

    The delayed variant reads the transport virtual backlog ``feedback_delay``
    slots late on real links only; the general variant subtracts the receiving
    node's maximum inbound capacity from the back-pressure.
    """
    t = model.tables
    q = config.q_max
    u_links = vq.delayed_u_s if config.variant == Variant.DELAYED else vq.u_s
    diff = (backlog[t.src] - backlog[t.dst]).astype(float)
    if config.variant == Variant.GENERAL:
        diff -= t.inbound[t.dst][:, None]
    raw = diff * (u_links / q)[None, :]
    raw[t.into_source] = 0.0
    admit_weight = vq.u_s / q * (q - config.mu_max - backlog[t.sources, t.flow_index])
    return _finish(raw, admit_weight)


def backpressure_weights(model: NetworkModel, backlog) -> WeightTable:
    """Classic differential-backlog weights used by the BP comparator."""
    t = model.tables
    raw = (backlog[t.src] - backlog[t.dst]).astype(float)
    raw[t.into_source] = 0.0
    return _finish(raw, np.zeros(model.num_flows))


def _decision(model, weights, chosen, capacities, admit_cap) -> ScheduleDecision:
    rate = np.zeros(model.num_links, dtype=np.int64)
    w = weights.weight
    for i in chosen:
        if w[i] > 0 and capacities[i] > 0:
            rate[i] = capacities[i]
    if admit_cap is None:
        admit = np.zeros(model.num_flows, dtype=np.int64)
    else:
        admit = np.where(weights.admit_weight > 0, admit_cap, 0).astype(np.int64)
    return ScheduleDecision(rate, weights.flow, admit)


def _caps(model, capacities):
    return model.tables.capacities if capacities is None else np.asarray(capacities)


def solve_exact_mwm(weights: WeightTable, model: NetworkModel, admit_cap=None,
                    capacities=None, method: str = "auto") -> ScheduleDecision:
    """Maximum weight matching over real links; admissions decided per flow.

    ``method`` is ``enumerate`` (argmax over all maximal matchings),
    ``blossom`` (networkx's general-graph matching) or ``auto``.
    """
    caps = _caps(model, capacities)
    eff = weights.weight * caps
    if method == "auto":
        method = "enumerate" if model.num_links <= MAX_ENUM_LINKS else "blossom"
    if method == "enumerate":
        chosen = _argmax_set(model, eff)
    elif method == "blossom":
        chosen = _blossom(model, eff)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _decision(model, weights, chosen, caps, admit_cap)


def _argmax_set(model, eff) -> tuple[int, ...]:
    if eff.max(initial=0.0) <= 0:
        return ()
    t = model.tables
    return t.feasible_sets[int(np.argmax(t.feasible_matrix @ eff))]


def _blossom(model, eff) -> list[int]:
    # antiparallel links share both endpoints, so keep the heavier one per pair
    best: dict[frozenset, int] = {}
    for i, (m, n) in enumerate(model.links):
        if eff[i] <= 0:
            continue
        key = frozenset((m, n))
        if key not in best or eff[i] > eff[best[key]]:
            best[key] = i
    g = nx.Graph()
    for key, i in best.items():
        m, n = model.links[i]
        g.add_edge(m, n, weight=float(eff[i]), link=i)
    return sorted(g.edges[e]["link"] for e in nx.max_weight_matching(g))


def solve_gmm(weights: WeightTable, model: NetworkModel, admit_cap=None,
              capacities=None) -> ScheduleDecision:
    """Greedy maximal matching: heaviest remaining link first, lowest index on ties."""
    caps = _caps(model, capacities)
    eff = weights.weight * caps
    used = set()
    chosen = []
    for i in np.argsort(-eff, kind="stable"):
        if eff[i] <= 0:
            break
        m, n = model.links[i]
        if m in used or n in used:
            continue
        used.update((m, n))
        chosen.append(int(i))
    return _decision(model, weights, chosen, caps, admit_cap)


def greedy_mwis(vertex_weights, neighbors, rule: str = "gwmin") -> list[int]:
    """Greedy weighted independent set on a conflict graph.

    ``gwmin`` repeatedly keeps the vertex maximizing w/(deg+1) and drops its
    closed neighbourhood; ``gwmax`` repeatedly deletes the vertex minimizing
    w/(deg(deg+1)) until no conflicts remain. Zero-weight vertices are ignored.
    Degrees are taken in the remaining graph; ties go to the lowest index.
    """
    alive = {i for i, w in enumerate(vertex_weights) if w > 0}
    if rule == "gwmin":
        picked = []
        while alive:
            def score(v):
                return vertex_weights[v] / (len(neighbors[v] & alive) + 1)
            v = min(alive, key=lambda u: (-score(u), u))
            picked.append(v)
            alive -= neighbors[v] | {v}
        return sorted(picked)
    if rule == "gwmax":
        while True:
            deg = {v: len(neighbors[v] & alive) for v in alive}
            busy = [v for v in alive if deg[v] > 0]
            if not busy:
                return sorted(alive)
            v = min(busy, key=lambda u: (vertex_weights[u] / (deg[u] * (deg[u] + 1)), u))
            alive.remove(v)
    raise ValueError(f"unknown rule {rule!r}")


def solve_greedy_mwis(weights: WeightTable, model: NetworkModel, admit_cap=None,
                      capacities=None, rule: str = "gwmin") -> ScheduleDecision:
    caps = _caps(model, capacities)
    eff = weights.weight * caps
    chosen = greedy_mwis(eff, model.tables.neighbors, rule)
    return _decision(model, weights, chosen, caps, admit_cap)


def solve_general(weights: WeightTable, model: NetworkModel, capacities=None,
                  admit_cap=None) -> ScheduleDecision:
    """Exact max of sum(capacity * weight) over the feasible activation sets."""
    if model.num_links > MAX_ENUM_LINKS:
        raise InstanceTooLarge(
            f"{model.num_links} links exceeds the exact enumeration limit of {MAX_ENUM_LINKS}; "
            "use the greedy-mwis scheduler")
    caps = _caps(model, capacities)
    chosen = _argmax_set(model, weights.weight * caps)
    return _decision(model, weights, chosen, caps, admit_cap)


def schedule(weights: WeightTable, model: NetworkModel, kind: SchedulerKind,
             capacities=None, admit_cap=None) -> ScheduleDecision:
    if kind == SchedulerKind.GREEDY_MWIS:
        return solve_greedy_mwis(weights, model, admit_cap, capacities)
    if kind == SchedulerKind.GMM:
        return solve_gmm(weights, model, admit_cap, capacities)
    if model.interference.kind == NODE_EXCLUSIVE:
        return solve_exact_mwm(weights, model, admit_cap, capacities)
    return solve_general(weights, model, capacities, admit_cap)


def objective(decision: ScheduleDecision, weights: WeightTable) -> float:
    return float(np.dot(decision.link_rate, weights.weight))


def check_decision(decision: ScheduleDecision, model: NetworkModel, capacities=None,
                   admit_cap=None) -> None:
    """Independent feasibility check; raises InvariantViolation on any breach."""
    caps = _caps(model, capacities)
    active = decision.active()
    if model.interference.kind == NODE_EXCLUSIVE:
        ends = [n for i in active for n in model.links[i]]
        if len(set(ends)) != len(ends):
            raise InvariantViolation(f"links sharing a node active together: {active}")
    else:
        conflicts = model.conflict_pairs
        for a in active:
            for b in active:
                if a < b and (a, b) in conflicts:
                    raise InvariantViolation(f"conflicting links {a} and {b} both active")
    for i in active:
        if decision.link_rate[i] > caps[i]:
            raise InvariantViolation(f"link {model.link_name(i)} rate above capacity")
        c = int(decision.link_flow[i])
        if model.links[i][1] == model.flows[c].source:
            raise InvariantViolation(f"flow {c} routed back into its source")
    if np.any(decision.admit < 0):
        raise InvariantViolation("negative admission")
    if admit_cap is not None and np.any(decision.admit > np.asarray(admit_cap)):
        raise InvariantViolation("admission above its cap")
