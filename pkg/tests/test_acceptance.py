"""Acceptance criteria 1-9, one test each, at the stated tolerances.

Each test records a one-line PASS/FAIL verdict; the lines are printed in the
pytest terminal summary and also when this file is run as a script.
"""

import sys
import time
from dataclasses import replace
from functools import lru_cache

import numpy as np
import pytest

from conftest import graph_model
from dgsched.engine import run
from dgsched.model import SchedulerKind, Variant, load_model, scenario_dir
from dgsched.oracle import (
    brute_force_matchings,
    certify,
    compute_constants,
    scheduler_gamma,
    solve_capacity_lp,
)
from dgsched.sched import WeightTable, objective, solve_exact_mwm, solve_gmm

pytestmark = pytest.mark.slow

HORIZON = 100_000
SEEDS = (1, 2, 3)
DELAYS = (1, 5, 10)
QOS_TOL = 0.05
LITTLE_TOL = 0.05
FLOOR_SLACK = 0.02
TREND_NOISE = 0.02
SWEEP_Q = (5, 10, 100, 1000)

VERDICTS: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    VERDICTS[n] = line
    print(line)


SCENARIOS = sorted(p.stem for p in scenario_dir().glob("*.toml"))


@lru_cache(maxsize=None)
def scenario(name):
    return load_model(scenario_dir() / f"{name}.toml")


@lru_cache(maxsize=None)
def simulate(name, seed=None, delay=None):
    model, config = scenario(name)
    if seed is not None:
        config = config.replace(seed=seed)
    if delay is not None:
        config = config.replace(variant=Variant.DELAYED, feedback_delay=delay)
    start = time.perf_counter()
    report = run(model, config, horizon=HORIZON)
    return report, time.perf_counter() - start


@lru_cache(maxsize=None)
def certified(name):
    model, config = scenario(name)
    return certify(model, config)


def qos_scenarios():
    return [s for s in SCENARIOS if certified(s) is not None]


def qos_failures(name, seed, delay=None):
    model, _ = scenario(name)
    rep, _ = simulate(name, seed, delay)
    bad = []
    for c, (s, f) in enumerate(zip(rep.flow_summaries(), model.flows)):
        if s.mean_delay > f.delay_threshold * (1 + QOS_TOL):
            bad.append(f"{name}/s{seed}/T{delay} flow {c} delay {s.mean_delay:.1f} > {f.delay_threshold}")
        if s.admitted_rate < f.min_rate * (1 - QOS_TOL):
            bad.append(f"{name}/s{seed}/T{delay} flow {c} rate {s.admitted_rate:.4f} < {f.min_rate}")
    return bad


def test_criterion_1_backlog_bound():
    model_variants = {scenario(s)[1].variant for s in SCENARIOS}
    schedulers = {scenario(s)[1].scheduler for s in SCENARIOS}
    problems = []
    slowest = 0.0
    for name in SCENARIOS:
        rep, secs = simulate(name)
        slowest = max(slowest, secs)
        q = scenario(name)[1].q_max
        if rep.max_backlog > q:
            problems.append(f"{name}: max U {rep.max_backlog} > q_max {q}")
        if secs >= 60:
            problems.append(f"{name}: {secs:.1f}s")
    coverage = len(SCENARIOS) >= 10 and model_variants == set(Variant) and schedulers == set(SchedulerKind)
    ok = coverage and not problems
    record(1, ok, f"{len(SCENARIOS)} scenarios, all variants/schedulers={coverage}, "
                  f"slowest {slowest:.1f}s/{HORIZON} slots" + (f"; {problems}" if problems else ""))
    assert ok, problems


def test_criterion_2_qos():
    names = qos_scenarios()
    bad = [b for n in names for s in SEEDS for b in qos_failures(n, s)]
    ok = bool(names) and not bad
    record(2, ok, f"scenarios meeting the theorem conditions {names}, seeds {SEEDS}"
                  + (f"; {bad}" if bad else ""))
    assert ok, bad


def test_criterion_3_throughput_floor():
    rows, bad = [], []
    for name in SCENARIOS:
        model, config = scenario(name)
        if model.num_nodes > 8:
            continue
        lp = solve_capacity_lp(model, [f.min_rate for f in model.flows], 0.0, config.mu_max)
        consts = compute_constants(model, config, lp, scheduler_gamma(model, config))
        rep, _ = simulate(name)
        got = rep.virtual_throughput()
        rows.append(f"{name}: {got:.3f} >= {consts.throughput_floor:.3g}")
        if got < consts.throughput_floor - FLOOR_SLACK:
            bad.append(rows[-1])
    ok = bool(rows) and not bad
    record(3, ok, "; ".join(rows))
    assert ok, bad


def test_criterion_4_suboptimal_bound():
    rng = np.random.default_rng(44)
    model, config = scenario("fig1_like")
    worst = 1.0
    for _ in range(1000):
        w = rng.exponential(1.0, size=model.num_links) * (rng.random(model.num_links) < 0.8)
        t = WeightTable(np.zeros(model.num_links, dtype=np.int64), w, w[:, None], np.zeros(1))
        exact = objective(solve_exact_mwm(t, model), t)
        greedy = objective(solve_gmm(t, model), t)
        if exact > 0:
            worst = min(worst, greedy / exact)
    per_slot_ok = worst >= 0.5
    e2e = []
    for name in SCENARIOS:
        model, config = scenario(name)
        if config.scheduler != SchedulerKind.GMM:
            continue
        found = certified(name)
        if found is None:
            continue
        eps, lp, _ = found
        gamma = scheduler_gamma(model, config)
        floor = compute_constants(model, config, lp, gamma).throughput_floor
        rep, _ = simulate(name)
        e2e.append((name, rep.throughput(), floor, rep.throughput() >= floor - FLOOR_SLACK))
    ok = per_slot_ok and bool(e2e) and all(x[3] for x in e2e)
    record(4, ok, f"worst GMM/MWM ratio {worst:.4f} over 1000 tables; end-to-end "
                  + ", ".join(f"{n}: {t:.3f} >= {f:.3g}" for n, t, f, _ in e2e))
    assert ok


def test_criterion_5_delayed_information():
    identical = []
    for name in SCENARIOS:
        model, config = scenario(name)
        if config.variant != Variant.BACKLOGGED:
            continue
        states_a, states_b = [], []

        def tracer(store):
            return lambda t, backlog, vq: store.append(
                (backlog.tobytes(), vq.u_s.tobytes(), vq.x.tobytes(), vq.z.tobytes()))

        horizon = 20_000
        a = run(model, config, horizon=horizon, trace=tracer(states_a))
        b = run(model, config.replace(variant=Variant.DELAYED, feedback_delay=0), horizon=horizon,
                trace=tracer(states_b))
        same = states_a == states_b and all(
            np.array_equal(getattr(a, f), getattr(b, f))
            for f in ("admitted", "virtual_rate", "delivered", "delay_sum", "lyapunov"))
        identical.append((name, same))
    bound_bad, qos_bad = [], []
    for name in SCENARIOS:
        model, config = scenario(name)
        if config.variant != Variant.BACKLOGGED:
            continue
        for T in DELAYS:
            rep, _ = simulate(name, None, T)
            if rep.max_backlog > config.q_max:
                bound_bad.append(f"{name}/T{T}: {rep.max_backlog}")
    for name in qos_scenarios():
        for T in DELAYS:
            for s in SEEDS:
                qos_bad += qos_failures(name, s, T)
    ok = bool(identical) and all(x[1] for x in identical) and not bound_bad and not qos_bad
    record(5, ok, f"T=0 identical on {[n for n, s in identical if s]}; "
                  f"T in {DELAYS}: bound breaches {bound_bad or 'none'}, QoS failures {qos_bad or 'none'}")
    assert ok


@lru_cache(maxsize=None)
def sweep_point(q, seed):
    model, config = scenario("fig1_like")
    model = replace(model, flows=tuple(replace(f, delay_threshold=30.0 * q, min_rate=0.1)
                                       for f in model.flows))
    config = config.replace(q_max=q, mu_max=2, V=1000.0, seed=seed)
    rep = run(model, config, horizon=HORIZON)
    return rep.throughput(), rep.mean_delay()


@lru_cache(maxsize=None)
def bp_point(seed):
    model, config = scenario("fig1_like")
    rep = run(model, config.replace(seed=seed, V=1000.0, mu_max=2), algorithm="bp", horizon=HORIZON)
    return rep.throughput()


def non_decreasing(values, noise):
    """Non-decreasing allowing at most one drop, and that drop within ``noise`` (relative)."""
    drops = [(a, b) for a, b in zip(values, values[1:]) if b < a]
    return len(drops) == 0 or (len(drops) == 1 and all(b >= a * (1 - noise) for a, b in drops))


def test_criterion_6_ordering_trend():
    thr = [float(np.mean([sweep_point(q, s)[0] for s in SEEDS])) for q in SWEEP_Q]
    delay = [float(np.mean([sweep_point(q, s)[1] for s in SEEDS])) for q in SWEEP_Q]
    bp = np.mean([bp_point(s) for s in SEEDS])
    per_seed_bp = all(bp_point(s) >= sweep_point(q, s)[0] for s in SEEDS for q in SWEEP_Q)
    ok = non_decreasing(thr, TREND_NOISE) and non_decreasing(delay, TREND_NOISE) and per_seed_bp
    record(6, ok, f"q_max {SWEEP_Q}: throughput {[round(x, 4) for x in thr]}, "
                  f"delay {[round(x, 1) for x in delay]}, BP {bp:.4f}")
    assert ok


def test_criterion_7_oracle_equivalence():
    rng = np.random.default_rng(77)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(2, 7))
        pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
        k = int(rng.integers(1, min(10, len(pairs)) + 1))
        links = [pairs[i] for i in sorted(rng.choice(len(pairs), size=k, replace=False))]
        w = rng.integers(0, 50, size=k).astype(float)
        model = graph_model(n, links)
        t = WeightTable(np.zeros(k, dtype=np.int64), w, w[:, None], np.zeros(1))
        best, _ = brute_force_matchings(links, w)
        if objective(solve_exact_mwm(t, model), t) != best:
            mismatches += 1
    record(7, mismatches == 0, f"{mismatches} mismatches over 1000 instances with <= 10 links")
    assert mismatches == 0


def test_criterion_8_littles_law():
    worst, where = 0.0, ""
    for name in qos_scenarios():
        for s in SEEDS:
            rep, _ = simulate(name, s)
            for c, f in enumerate(rep.flow_summaries()):
                if f.little_residual > worst:
                    worst, where = f.little_residual, f"{name}/s{s}/flow {c}"
    ok = worst <= LITTLE_TOL
    record(8, ok, f"largest relative residual {worst:.4f} ({where or 'n/a'})")
    assert ok


def test_criterion_9_virtual_backlog_bound():
    """Asserted where the throughput-theorem conditions hold; other scenarios are only reported."""
    rows, bad, info = [], [], []
    names = qos_scenarios()
    for name in SCENARIOS:
        model, config = scenario(name)
        rep, _ = simulate(name)
        first, second = rep.mean_virtual_backlog(0, 0.5), rep.mean_virtual_backlog(0.5, 1)
        growth = (second - first) / first if first else 0.0
        if name not in names:
            info.append(f"{name}: growth {growth:+.1%}")
            continue
        consts = compute_constants(model, config, certified(name)[1], scheduler_gamma(model, config))
        if consts.delta:
            ceiling = consts.B_prime / consts.delta
            rows.append(f"{name}: {second:.4g} <= {ceiling:.4g}")
            if second > ceiling:
                bad.append(rows[-1])
        else:
            rows.append(f"{name}: growth {growth:+.2%}")
            if growth >= 0.01:
                bad.append(rows[-1])
    ok = bool(rows) and not bad
    record(9, ok, "; ".join(rows) + " | outside the theorem conditions, not asserted: " + "; ".join(info))
    assert ok, bad


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
