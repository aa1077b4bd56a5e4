"""Per-run accumulation, QoS verdicts and CSV reports."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

REPORT_VERSION = "dgsched-report v1"
REPORT_COLUMNS = [
    "scope", "flow", "source", "destination", "admitted_rate", "delivered_rate", "virtual_rate",
    "delivered", "mean_delay", "mean_backlog", "little_residual",
    "admitted_rate_post_warmup", "mean_delay_post_warmup",
    "max_backlog", "mean_virtual_backlog", "lyapunov_mean", "lyapunov_final", "horizon",
]


class MetricsAccumulator:
    """Slot-indexed series for one run, preallocated for ``horizon`` slots."""

    def __init__(self, num_flows: int, horizon: int):
        self.horizon = horizon
        shape = (num_flows, horizon)
        self.admitted = np.zeros(shape, dtype=np.int64)
        self.virtual_rate = np.zeros(shape)
        self.aux_rate = np.zeros(shape)
        self.delivered = np.zeros(shape, dtype=np.int64)
        self.delay_sum = np.zeros(shape, dtype=np.int64)
        # packets in the network at slot start, and counting this slot's admissions
        self.backlog = np.zeros(shape, dtype=np.int64)
        self.occupancy = np.zeros(shape, dtype=np.int64)
        self.virtual_backlog = np.zeros(horizon)
        self.lyapunov = np.zeros(horizon + 1)
        self.max_backlog = 0

    def record(self, t, admitted, R, v, delivered, backlog_start, virtual_sum, lyap, max_u):
        self.admitted[:, t] = admitted
        self.virtual_rate[:, t] = R
        self.aux_rate[:, t] = v
        self.delivered[:, t] = delivered.count
        self.delay_sum[:, t] = delivered.delay_sum
        self.backlog[:, t] = backlog_start
        self.occupancy[:, t] = backlog_start + admitted
        self.virtual_backlog[t] = virtual_sum
        self.lyapunov[t] = lyap
        if max_u > self.max_backlog:
            self.max_backlog = int(max_u)

    def finish(self, final_lyapunov, final_max_u, in_flight) -> MetricsReport:
        self.lyapunov[self.horizon] = final_lyapunov
        self.max_backlog = max(self.max_backlog, int(final_max_u))
        return MetricsReport(self.admitted, self.virtual_rate, self.aux_rate, self.delivered,
                             self.delay_sum, self.backlog, self.occupancy, self.virtual_backlog,
                             self.lyapunov, self.max_backlog, np.asarray(in_flight))


@dataclass
class FlowSummary:
    admitted_rate: float
    delivered_rate: float
    virtual_rate: float
    aux_rate: float
    delivered: int
    mean_delay: float
    mean_backlog: float
    little_residual: float


@dataclass
class MetricsReport:
    admitted: np.ndarray
    virtual_rate: np.ndarray
    aux_rate: np.ndarray
    delivered: np.ndarray
    delay_sum: np.ndarray
    backlog: np.ndarray
    occupancy: np.ndarray
    virtual_backlog: np.ndarray
    lyapunov: np.ndarray
    max_backlog: int
    in_flight: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.admitted.shape[1]

    @property
    def num_flows(self) -> int:
        return self.admitted.shape[0]

    def window(self, warmup_fraction: float = 0.0, stop_fraction: float = 1.0) -> slice:
        return slice(int(self.horizon * warmup_fraction), int(self.horizon * stop_fraction))

    def flow_summaries(self, warmup_fraction: float = 0.0) -> list[FlowSummary]:
        """Time averages over the slots after the warm-up fraction.

        Mean delay is an exact integer delay sum over the delivered count. The
        Little residual compares it with mean occupancy over admitted rate, with
        occupancy counting each slot's fresh admissions so that both sides use
        the admission-to-delivery-inclusive delay convention.
        """
        w = self.window(warmup_fraction)
        span = max(w.stop - w.start, 0)
        out = []
        for c in range(self.num_flows):
            delivered = int(self.delivered[c, w].sum())
            dsum = int(self.delay_sum[c, w].sum())
            mean_delay = dsum / delivered if delivered else 0.0
            if span:
                adm = self.admitted[c, w].sum() / span
                dr = delivered / span
                vr = self.virtual_rate[c, w].sum() / span
                ar = self.aux_rate[c, w].sum() / span
                mb = self.backlog[c, w].sum() / span
                occ = self.occupancy[c, w].sum() / span
            else:
                adm = dr = vr = ar = mb = occ = 0.0
            if delivered and adm > 0:
                resid = abs(mean_delay - occ / adm) / mean_delay
            else:
                resid = 0.0
            out.append(FlowSummary(float(adm), float(dr), float(vr), float(ar), delivered, mean_delay,
                                   float(mb), float(resid)))
        return out

    def throughput(self, warmup_fraction: float = 0.0) -> float:
        return sum(s.admitted_rate for s in self.flow_summaries(warmup_fraction))

    def delivered_throughput(self, warmup_fraction: float = 0.0) -> float:
        return sum(s.delivered_rate for s in self.flow_summaries(warmup_fraction))

    def virtual_throughput(self, warmup_fraction: float = 0.0) -> float:
        return sum(s.virtual_rate for s in self.flow_summaries(warmup_fraction))

    def mean_delay(self, warmup_fraction: float = 0.0) -> float:
        """Per-flow mean delays averaged over flows."""
        s = self.flow_summaries(warmup_fraction)
        return float(np.mean([f.mean_delay for f in s])) if s else 0.0

    def mean_virtual_backlog(self, start_fraction: float = 0.0, stop_fraction: float = 1.0) -> float:
        w = self.window(start_fraction, stop_fraction)
        seg = self.virtual_backlog[w]
        return float(seg.mean()) if len(seg) else 0.0

    def conservation_ok(self) -> bool:
        return int(self.admitted.sum()) == int(self.delivered.sum()) + int(self.in_flight.sum())


@dataclass
class QoSVerdict:
    delay_ok: list[bool]
    rate_ok: list[bool]
    backlog_ok: bool
    summaries: list[FlowSummary]

    @property
    def passed(self) -> bool:
        return all(self.delay_ok) and all(self.rate_ok) and self.backlog_ok


def check_qos(report: MetricsReport, model, config, warmup_fraction: float = 0.1,
              tol: float = 0.05, check_backlog: bool = True) -> QoSVerdict:
    """Per-flow delay and minimum-rate checks (relative ``tol``) plus the exact backlog cap."""
    sums = report.flow_summaries(warmup_fraction)
    delay_ok = [s.mean_delay <= f.delay_threshold * (1 + tol) for s, f in zip(sums, model.flows)]
    rate_ok = [s.admitted_rate >= f.min_rate * (1 - tol) for s, f in zip(sums, model.flows)]
    backlog_ok = report.max_backlog <= config.q_max if check_backlog else True
    return QoSVerdict(delay_ok, rate_ok, backlog_ok, sums)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(round(x, 10))
    return str(x)


def report_rows(report: MetricsReport | None, model=None, warmup_fraction: float = 0.1) -> list[dict]:
    rows = []
    if report is None:
        glob = {col: 0 for col in REPORT_COLUMNS}
        glob.update(scope="global", flow="", source="", destination="")
        return [glob]
    full = report.flow_summaries()
    post = report.flow_summaries(warmup_fraction)
    for c, (s, p) in enumerate(zip(full, post)):
        f = model.flows[c] if model is not None else None
        rows.append({
            "scope": "flow", "flow": c,
            "source": model.nodes[f.source] if f else "",
            "destination": model.nodes[f.destination] if f else "",
            "admitted_rate": s.admitted_rate, "delivered_rate": s.delivered_rate,
            "virtual_rate": s.virtual_rate,
            "delivered": s.delivered, "mean_delay": s.mean_delay,
            "mean_backlog": s.mean_backlog, "little_residual": s.little_residual,
            "admitted_rate_post_warmup": p.admitted_rate,
            "mean_delay_post_warmup": p.mean_delay,
            "max_backlog": int(report.backlog[c].max()) if report.horizon else 0,
            "mean_virtual_backlog": "", "lyapunov_mean": "", "lyapunov_final": "",
            "horizon": report.horizon,
        })
    rows.append({
        "scope": "global", "flow": "", "source": "", "destination": "",
        "admitted_rate": sum(s.admitted_rate for s in full),
        "delivered_rate": sum(s.delivered_rate for s in full),
        "virtual_rate": sum(s.virtual_rate for s in full),
        "delivered": sum(s.delivered for s in full),
        "mean_delay": float(np.mean([s.mean_delay for s in full])) if full else 0.0,
        "mean_backlog": sum(s.mean_backlog for s in full),
        "little_residual": max((s.little_residual for s in full), default=0.0),
        "admitted_rate_post_warmup": sum(p.admitted_rate for p in post),
        "mean_delay_post_warmup": float(np.mean([p.mean_delay for p in post])) if post else 0.0,
        "max_backlog": report.max_backlog,
        "mean_virtual_backlog": report.mean_virtual_backlog(),
        "lyapunov_mean": float(report.lyapunov.mean()),
        "lyapunov_final": float(report.lyapunov[-1]),
        "horizon": report.horizon,
    })
    return rows


def emit_report(report: MetricsReport | None, path, model=None, warmup_fraction: float = 0.1) -> Path:
    """Write the report CSV: a version comment line, the header, one row per flow, one global row."""
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            fh.write(f"# {REPORT_VERSION}\n")
            writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
            writer.writeheader()
            for row in report_rows(report, model, warmup_fraction):
                writer.writerow({k: _fmt(v) for k, v in row.items()})
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc}") from exc
    return path


def read_report(path) -> list[dict]:
    with Path(path).open() as fh:
        first = fh.readline().strip()
        if first != f"# {REPORT_VERSION}":
            raise ValueError(f"{path}: unexpected report header {first!r}")
        return list(csv.DictReader(fh))


def config_hash(params: dict) -> str:
    blob = json.dumps(params, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def merge_reports(reports: list[MetricsReport]) -> dict:
    """Across-seed means of the headline numbers; order-independent."""
    if not reports:
        return {}
    return {
        "throughput": float(np.mean([r.throughput() for r in reports])),
        "mean_delay": float(np.mean([r.mean_delay() for r in reports])),
        "max_backlog": max(r.max_backlog for r in reports),
        "runs": len(reports),
    }
