"""Packet queues at network nodes and the scalar virtual queues of each flow."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np


class InvariantViolation(RuntimeError):
    """A queue invariant broke during a run; carries a state snapshot."""

    def __init__(self, message: str, snapshot: dict | None = None):
        super().__init__(message)
        self.snapshot = snapshot or {}


@dataclass
class Delivered:
    """Packets that reached their destination in one slot, per flow."""

    count: np.ndarray
    delay_sum: np.ndarray


class PacketQueues:
    """FIFO packet queues per (node, flow); each packet is its admission slot."""

    def __init__(self, num_nodes: int, num_flows: int, destinations):
        self.num_nodes = num_nodes
        self.num_flows = num_flows
        self.destinations = list(destinations)
        self.packets = [[deque() for _ in range(num_flows)] for _ in range(num_nodes)]
        self.backlog = np.zeros((num_nodes, num_flows), dtype=np.int64)
        self.admitted_total = 0
        self.delivered_total = 0

    def total(self) -> int:
        return int(self.backlog.sum())

    def step(self, link_rate, link_flow, links, admit, slot: int,
             source_nodes) -> Delivered:
        """Apply one slot of transfers and admissions.

        Departures are taken from the slot-start backlog before any arrival is
        appended, so a packet moves at most one hop per slot.
        """
        k = self.num_flows
        count = np.zeros(k, dtype=np.int64)
        delay_sum = np.zeros(k, dtype=np.int64)
        moving = []
        for i in np.flatnonzero(link_rate):
            m, n = links[i]
            c = int(link_flow[i])
            q = self.packets[m][c]
            take = min(int(link_rate[i]), len(q))
            if take:
                moving.append((n, c, [q.popleft() for _ in range(take)]))
                self.backlog[m, c] -= take
        for n, c, pkts in moving:
            if n == self.destinations[c]:
                count[c] += len(pkts)
                delay_sum[c] += sum(slot - p + 1 for p in pkts)
            else:
                self.packets[n][c].extend(pkts)
                self.backlog[n, c] += len(pkts)
        for c in np.flatnonzero(admit):
            num = int(admit[c])
            b = source_nodes[c]
            self.packets[b][c].extend([slot] * num)
            self.backlog[b, c] += num
            self.admitted_total += num
        self.delivered_total += int(count.sum())
        return Delivered(count, delay_sum)


def step_actual_queues(queues: PacketQueues, decision, model, slot: int) -> Delivered:
    """Move packets according to ``decision`` (a ScheduleDecision) for one slot."""
    return queues.step(decision.link_rate, decision.link_flow, model.links, decision.admit,
                       slot, [f.source for f in model.flows])


class VirtualQueues:
    """Transport virtual backlog, service, delay and auxiliary queues per flow.

    ``history`` holds the last ``depth`` (u_s, x) pairs, oldest first, so
    ``history[0]`` is the value ``depth - 1`` slots ago (zeros before slot 0).
    """

    def __init__(self, num_flows: int, depth: int = 1):
        self.u_s = np.zeros(num_flows)
        self.z = np.zeros(num_flows)
        self.x = np.zeros(num_flows)
        self.y = np.zeros(num_flows)
        self.l = np.zeros(num_flows)
        zeros = np.zeros(num_flows)
        self.history = deque([(zeros, zeros)] * depth, maxlen=depth)
        self.history[-1] = (self.u_s.copy(), self.x.copy())

    @property
    def delayed_u_s(self) -> np.ndarray:
        return self.u_s if self.history.maxlen == 1 else self.history[0][0]

    @property
    def delayed_x(self) -> np.ndarray:
        return self.x if self.history.maxlen == 1 else self.history[0][1]

    def step(self, R, v, admitted, arrivals, total_backlog, min_rate, delay_threshold,
             transport_buffer=None, auxiliary=False):
        """One slot of the virtual-queue recursions.

        ``total_backlog`` is the per-flow packet count at slot start. The
        auxiliary and transport-buffer queues only move when requested.
        """
        self.u_s = np.maximum(self.u_s - admitted, 0.0) + R
        self.z = np.maximum(self.z - R, 0.0) + min_rate
        self.x = np.maximum(self.x - delay_threshold * R, 0.0) + total_backlog
        if auxiliary:
            self.y = np.maximum(self.y - R, 0.0) + v
        if transport_buffer is not None:
            self.l = np.minimum(np.maximum(self.l + arrivals - admitted, 0.0), transport_buffer)
        self.history.append((self.u_s.copy(), self.x.copy()))


def step_virtual_queues(vq: VirtualQueues, R, v, admitted, arrivals, total_backlog,
                        model, config) -> VirtualQueues:
    from .model import Variant

    arbitrary = config.variant == Variant.ARBITRARY
    vq.step(np.asarray(R, float), np.asarray(v, float), np.asarray(admitted, float),
            np.asarray(arrivals, float), np.asarray(total_backlog, float),
            np.array([f.min_rate for f in model.flows]),
            np.array([f.delay_threshold for f in model.flows]),
            transport_buffer=config.transport_buffer if arbitrary else None,
            auxiliary=arbitrary)
    return vq
