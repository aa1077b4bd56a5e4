"""Slot loop for the delay-guaranteed algorithm variants and the back-pressure comparator."""

from __future__ import annotations

import csv
import logging
from enum import Enum

import numpy as np

from . import control, sched
from .metrics import MetricsAccumulator, MetricsReport
from .model import NetworkModel, SimConfig, Variant, validate
from .queues import InvariantViolation, PacketQueues, VirtualQueues

log = logging.getLogger(__name__)


class Algorithm(str, Enum):
    ALG = "alg"
    ALG_ARB = "alg-arb"
    ALG_DELAYED = "alg-delayed"
    ALG_GENERAL = "alg-general"
    BP = "bp"


ALGORITHM_VARIANT = {
    Algorithm.ALG: Variant.BACKLOGGED,
    Algorithm.ALG_ARB: Variant.ARBITRARY,
    Algorithm.ALG_DELAYED: Variant.DELAYED,
    Algorithm.ALG_GENERAL: Variant.GENERAL,
}


def lyapunov_value(vq: VirtualQueues, backlog, config: SimConfig, auxiliary: bool = False) -> float:
    q, mu = config.q_max, config.mu_max
    val = ((q - mu) / q * vq.u_s ** 2).sum() + (vq.x ** 2).sum() + (vq.z ** 2).sum()
    val += ((backlog.astype(float) ** 2).sum(axis=0) * vq.u_s / q).sum()
    val *= 0.5
    if auxiliary:
        val += config.eta / 2 * (vq.y ** 2).sum()
    return float(val)


def lyapunov_trace(report: MetricsReport) -> np.ndarray:
    """L(Q(t)) for t = 0..horizon of an ALG run."""
    return report.lyapunov


class _Channel:
    """Draws transport arrivals then fading states, in that order, from one stream."""

    def __init__(self, model: NetworkModel, config: SimConfig, rng):
        self.rng = rng
        self.mu = config.mu_max
        self.kinds = [f.arrival.kind for f in model.flows]
        self.rates = np.array([f.arrival.rate if f.arrival.kind == "poisson" else 0.0
                               for f in model.flows])
        self.any_poisson = any(k == "poisson" for k in self.kinds)
        self.traces = [f.arrival.values for f in model.flows]
        self.base_caps = model.tables.capacities
        self.fading = sorted(model.fading_states.items())

    def arrivals(self, t: int) -> np.ndarray:
        draw = self.rng.poisson(self.rates) if self.any_poisson else None
        out = np.empty(len(self.kinds), dtype=np.int64)
        for c, kind in enumerate(self.kinds):
            if kind == "backlogged":
                out[c] = self.mu
            elif kind == "poisson":
                out[c] = min(int(draw[c]), self.mu)
            else:
                vals = self.traces[c]
                out[c] = vals[t % len(vals)] if vals else 0
        return out

    def capacities(self) -> np.ndarray:
        if not self.fading:
            return self.base_caps
        caps = self.base_caps.copy()
        picks = self.rng.integers(0, [len(s) for _, s in self.fading])
        for (i, states), p in zip(self.fading, picks):
            caps[i] = states[p]
        return caps


class TraceWriter:
    """Per-slot state dump; one ``packet`` row per (node, flow) and one ``virtual`` row per flow."""

    columns = ["record", "slot", "node", "flow", "U", "u_s", "z", "x", "y", "l"]

    def __init__(self, path, model: NetworkModel):
        self.fh = open(path, "w", newline="")
        self.writer = csv.writer(self.fh)
        self.writer.writerow(self.columns)
        self.model = model

    def __call__(self, t, backlog, vq):
        names = self.model.nodes
        for n in range(backlog.shape[0]):
            for c in range(backlog.shape[1]):
                self.writer.writerow(["packet", t, names[n], c, int(backlog[n, c]),
                                      "", "", "", "", ""])
        if vq is not None:
            for c in range(backlog.shape[1]):
                self.writer.writerow(["virtual", t, "", c, "", vq.u_s[c], vq.z[c], vq.x[c],
                                      vq.y[c], vq.l[c]])

    def close(self):
        self.fh.close()


def _snapshot(t, queues, vq=None, decision=None) -> dict:
    snap = {"slot": t, "backlog": queues.backlog.copy()}
    if vq is not None:
        snap.update(u_s=vq.u_s.copy(), x=vq.x.copy(), z=vq.z.copy(), y=vq.y.copy(), l=vq.l.copy())
    if decision is not None:
        snap["decision"] = decision
    return snap


def run(model: NetworkModel, config: SimConfig, algorithm: Algorithm | str | None = None,
        horizon: int | None = None, trace=None, check: bool = True) -> MetricsReport:
    """Simulate ``horizon`` slots (default: ``config.horizon``) and return the metrics.

    ``algorithm`` overrides the variant in ``config``; ``bp`` runs the
    back-pressure comparator instead. ``trace`` is an optional callable
    ``(slot, backlog, vq)`` called with slot-start state. With ``check`` every
    slot's decision is verified and the queue cap and packet conservation are
    asserted; any breach raises InvariantViolation.
    """
    if algorithm is not None:
        algorithm = Algorithm(algorithm)
        if algorithm == Algorithm.BP:
            return run_bp_baseline(model, config, horizon, trace)
        config = config.replace(variant=ALGORITHM_VARIANT[algorithm])
    horizon = config.horizon if horizon is None else horizon
    report = validate(model, config)
    if not report.valid:
        raise ValueError("invalid model/config: " + "; ".join(report.violations))

    variant = config.variant
    arbitrary = variant == Variant.ARBITRARY
    k = model.num_flows
    rng = np.random.default_rng(config.seed)
    channel = _Channel(model, config, rng)
    queues = PacketQueues(model.num_nodes, k, [f.destination for f in model.flows])
    vq = VirtualQueues(k, depth=config.feedback_delay + 1 if variant == Variant.DELAYED else 1)
    acc = MetricsAccumulator(k, horizon)
    flows = model.flows
    sources = [f.source for f in flows]
    min_rate = np.array([f.min_rate for f in flows])
    rho = np.array([f.delay_threshold for f in flows])
    mu = config.mu_max
    zeros = np.zeros(k)

    for t in range(horizon):
        backlog_start = queues.backlog.sum(axis=0)
        lyap = lyapunov_value(vq, queues.backlog, config, arbitrary)
        vsum = float((vq.u_s + vq.x + vq.z).sum() + (vq.y.sum() if arbitrary else 0.0))
        if trace is not None:
            trace(t, queues.backlog, vq)

        if arbitrary:
            arrivals = channel.arrivals(t)
            admit_cap = np.minimum(vq.l.astype(np.int64) + arrivals, mu)
            ctl = control.control_arbitrary(vq, arrivals, flows, config)
        else:
            arrivals = zeros
            admit_cap = mu
            if variant == Variant.DELAYED:
                ctl = control.control_delayed(vq, flows, config)
            else:
                ctl = control.control_backlogged(vq, flows, config)
        caps = channel.capacities()

        weights = sched.assign_weights(model, queues.backlog, vq, config)
        decision = sched.schedule(weights, model, config.scheduler, caps, admit_cap)
        if check:
            try:
                sched.check_decision(decision, model, caps, admit_cap)
            except InvariantViolation as exc:
                raise InvariantViolation(f"slot {t}: {exc}", _snapshot(t, queues, vq, decision))
        delivered = queues.step(decision.link_rate, decision.link_flow, model.links,
                                decision.admit, t, sources)
        vq.step(ctl.R, ctl.v, decision.admit, arrivals, backlog_start, min_rate, rho,
                transport_buffer=config.transport_buffer if arbitrary else None,
                auxiliary=arbitrary)
        max_u = int(queues.backlog.max()) if queues.backlog.size else 0
        if check:
            if max_u > config.q_max:
                raise InvariantViolation(f"slot {t}: backlog {max_u} exceeds q_max={config.q_max}",
                                         _snapshot(t, queues, vq, decision))
            if queues.admitted_total - queues.delivered_total != queues.total():
                raise InvariantViolation(f"slot {t}: packet conservation broken",
                                         _snapshot(t, queues, vq, decision))
        acc.record(t, decision.admit, ctl.R, ctl.v, delivered, backlog_start, vsum, lyap, max_u)

    final = lyapunov_value(vq, queues.backlog, config, arbitrary)
    out = acc.finish(final, queues.backlog.max() if queues.backlog.size else 0,
                     queues.backlog.sum(axis=0))
    out.meta = {"algorithm": variant.value, "seed": config.seed, "horizon": horizon,
                "final_u_s": vq.u_s.copy(), "final_x": vq.x.copy(), "final_z": vq.z.copy(),
                "final_y": vq.y.copy()}
    return out


def run_bp_baseline(model: NetworkModel, config: SimConfig, horizon: int | None = None,
                    trace=None) -> MetricsReport:
    """Back-pressure with a linear-utility admission threshold and unbounded buffers.

    Each slot a flow admits up to mu_max packets while its source backlog is
    below V (the maximizer of V R - U R; a tie closes); real links carry the flow with the largest positive backlog
    differential and are scheduled by exact maximum weight matching.
    """
    horizon = config.horizon if horizon is None else horizon
    k = model.num_flows
    rng = np.random.default_rng(config.seed)
    channel = _Channel(model, config, rng)
    queues = PacketQueues(model.num_nodes, k, [f.destination for f in model.flows])
    acc = MetricsAccumulator(k, horizon)
    tables = model.tables
    sources = [f.source for f in model.flows]
    backlogged = all(f.arrival.kind == "backlogged" for f in model.flows)
    transport = np.zeros(k, dtype=np.int64)
    mu = config.mu_max

    for t in range(horizon):
        backlog_start = queues.backlog.sum(axis=0)
        if trace is not None:
            trace(t, queues.backlog, None)
        if backlogged:
            avail = np.full(k, mu, dtype=np.int64)
        else:
            arrivals = channel.arrivals(t)
            avail = np.minimum(transport + arrivals, mu)
        weights = sched.backpressure_weights(model, queues.backlog)
        decision = sched.solve_exact_mwm(weights, model, None, channel.capacities())
        admit = np.where(queues.backlog[tables.sources, tables.flow_index] < config.V, avail, 0)
        decision.admit = admit.astype(np.int64)
        if not backlogged:
            transport = np.minimum(np.maximum(transport + arrivals - admit, 0),
                                   int(config.transport_buffer))
        delivered = queues.step(decision.link_rate, decision.link_flow, model.links,
                                decision.admit, t, sources)
        acc.record(t, decision.admit, decision.admit, np.zeros(k), delivered, backlog_start,
                   0.0, 0.0, queues.backlog.max() if queues.backlog.size else 0)
    out = acc.finish(0.0, queues.backlog.max() if queues.backlog.size else 0,
                     queues.backlog.sum(axis=0))
    out.meta = {"algorithm": "bp", "seed": config.seed, "horizon": horizon}
    return out
