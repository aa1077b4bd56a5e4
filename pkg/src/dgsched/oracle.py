"""Ground truth on small instances: exhaustive searches, the capacity LP and bound constants."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .model import NODE_EXCLUSIVE, NetworkModel, SchedulerKind, SimConfig, Variant, validate

MAX_ORACLE_LINKS = 20
MAX_CHANNEL_STATES = 4096


class OracleSizeError(ValueError):
    pass


class CapacityInfeasible(ValueError):
    """The requested minimum rates (plus epsilon) lie outside the capacity region."""


def _independent_sets(num: int, conflicts, maximal_only: bool):
    """Depth-first include/exclude enumeration of independent sets."""
    nbrs = [set() for _ in range(num)]
    for i, j in conflicts:
        nbrs[i].add(j)
        nbrs[j].add(i)
    out = []

    def rec(k, chosen, blocked):
        if k == num:
            if maximal_only and any(v not in blocked and v not in chosen for v in range(num)):
                return
            out.append(tuple(chosen))
            return
        if k not in blocked:
            rec(k + 1, chosen + [k], blocked | nbrs[k])
        rec(k + 1, chosen, blocked)

    rec(0, [], frozenset())
    return out


def enumerate_independent_sets(num: int, conflicts, maximal_only: bool = False):
    if num > MAX_ORACLE_LINKS:
        raise OracleSizeError(f"{num} vertices exceeds oracle limit {MAX_ORACLE_LINKS}")
    return _independent_sets(num, conflicts, maximal_only)


def brute_force_matchings(links, weights) -> tuple[float, tuple[int, ...]]:
    """Best total weight over every matching of the directed links (node-exclusive)."""
    links = list(links)
    if len(links) > MAX_ORACLE_LINKS:
        raise OracleSizeError(f"{len(links)} links exceeds oracle limit {MAX_ORACLE_LINKS}")
    best, arg = 0.0, ()

    def rec(k, used, total, chosen):
        nonlocal best, arg
        if k == len(links):
            if total > best:
                best, arg = total, tuple(chosen)
            return
        m, n = links[k]
        if m not in used and n not in used:
            rec(k + 1, used | {m, n}, total + weights[k], chosen + [k])
        rec(k + 1, used, total, chosen)

    rec(0, frozenset(), 0.0, [])
    return best, arg


def brute_force_mwis(weights, conflicts) -> tuple[float, tuple[int, ...]]:
    best, arg = 0.0, ()
    for s in enumerate_independent_sets(len(weights), conflicts):
        tot = sum(weights[i] for i in s)
        if tot > best:
            best, arg = tot, s
    return best, arg


def activation_sets(model: NetworkModel):
    if model.num_links > MAX_ORACLE_LINKS:
        raise OracleSizeError(f"{model.num_links} links exceeds oracle limit {MAX_ORACLE_LINKS}")
    if model.interference.kind == NODE_EXCLUSIVE:
        conflicts = [(i, j) for i, j in itertools.combinations(range(model.num_links), 2)
                     if set(model.links[i]) & set(model.links[j])]
    else:
        conflicts = model.interference.conflicts
    return enumerate_independent_sets(model.num_links, conflicts, maximal_only=True)


def channel_states(model: NetworkModel):
    """Joint (capacity vector, probability) pairs under i.i.d. uniform per-link fading."""
    per_link = [model.fading_states.get(i, (model.link_capacities[i],))
                for i in range(model.num_links)]
    total = int(np.prod([len(s) for s in per_link])) if per_link else 1
    if total > MAX_CHANNEL_STATES:
        raise OracleSizeError(f"{total} joint channel states exceeds {MAX_CHANNEL_STATES}")
    for combo in itertools.product(*per_link):
        yield np.array(combo, dtype=float), 1.0 / total


@dataclass
class CapacityResult:
    rates: np.ndarray
    total: float
    epsilon: float
    link_flows: np.ndarray  # (links, flows)


def solve_capacity_lp(model: NetworkModel, min_rates=None, epsilon: float = 0.0,
                      mu_max: float | None = None, balanced: bool = False) -> CapacityResult:
    """Maximize total throughput subject to (rate + epsilon) being supportable.

    Variables are per-link per-flow flow rates, the flow rates themselves and
    time shares over every maximal feasible activation set in every joint
    channel state. ``mu_max``, when given, also caps each (rate + epsilon) at
    the per-slot admission limit. With ``balanced`` a second LP picks, among
    the optimal rate vectors, one maximizing the smallest slack ``r_c - a_c``.
    """
    n_links, k = model.num_links, model.num_flows
    a = np.zeros(k) if min_rates is None else np.asarray(min_rates, float)
    sets = activation_sets(model)
    states = list(channel_states(model))

    n_f = n_links * k
    n_share = len(sets) * len(states)
    n_var = n_f + k + n_share
    fidx = lambda l, c: l * k + c  # noqa: E731
    ridx = lambda c: n_f + c  # noqa: E731

    a_eq, b_eq, a_ub, b_ub = [], [], [], []
    bounds = [(0, None)] * n_var
    for l, (m, n) in enumerate(model.links):
        for c, f in enumerate(model.flows):
            if n == f.source or m == f.destination:
                bounds[fidx(l, c)] = (0, 0)
    for c, f in enumerate(model.flows):
        hi = None if mu_max is None else mu_max - epsilon
        if hi is not None and hi < a[c]:
            raise CapacityInfeasible(f"flow {c}: min rate {a[c]} + epsilon exceeds mu_max")
        bounds[ridx(c)] = (a[c], hi)
        for node in range(model.num_nodes):
            if node == f.destination:
                continue
            row = np.zeros(n_var)
            for l, (m, n) in enumerate(model.links):
                if m == node:
                    row[fidx(l, c)] += 1
                if n == node:
                    row[fidx(l, c)] -= 1
            rhs = 0.0
            if node == f.source:
                row[ridx(c)] = -1.0
                rhs = epsilon
            a_eq.append(row)
            b_eq.append(rhs)
    for l in range(n_links):
        row = np.zeros(n_var)
        row[[fidx(l, c) for c in range(k)]] = 1.0
        for si, (caps, _) in enumerate(states):
            for j, s in enumerate(sets):
                if l in s:
                    row[n_f + k + si * len(sets) + j] = -caps[l]
        a_ub.append(row)
        b_ub.append(0.0)
    for si, (_, prob) in enumerate(states):
        row = np.zeros(n_var)
        row[n_f + k + si * len(sets): n_f + k + (si + 1) * len(sets)] = 1.0
        a_ub.append(row)
        b_ub.append(prob)

    cost = np.zeros(n_var)
    cost[n_f:n_f + k] = -1.0
    res = linprog(cost, A_ub=np.array(a_ub), b_ub=b_ub,
                  A_eq=np.array(a_eq) if a_eq else None, b_eq=b_eq or None,
                  bounds=bounds, method="highs")
    if res.status == 2:
        raise CapacityInfeasible(f"min rates {a.tolist()} with epsilon={epsilon} outside capacity region")
    if res.status != 0:
        raise RuntimeError(f"LP failed: {res.message}")
    x = res.x
    if balanced and k:
        # extra variable t: maximize t with r_c - a_c >= t and the optimum kept
        opt = -res.fun
        a_ub2 = [np.append(row, 0.0) for row in a_ub]
        b_ub2 = list(b_ub)
        keep = np.zeros(n_var + 1)
        keep[n_f:n_f + k] = -1.0
        a_ub2.append(keep)
        b_ub2.append(-opt + 1e-9 * max(1.0, opt))
        for c in range(k):
            row = np.zeros(n_var + 1)
            row[ridx(c)] = -1.0
            row[-1] = 1.0
            a_ub2.append(row)
            b_ub2.append(-a[c])
        cost2 = np.zeros(n_var + 1)
        cost2[-1] = -1.0
        a_eq2 = np.array([np.append(row, 0.0) for row in a_eq]) if a_eq else None
        res2 = linprog(cost2, A_ub=np.array(a_ub2), b_ub=b_ub2, A_eq=a_eq2, b_eq=b_eq or None,
                       bounds=bounds + [(None, None)], method="highs")
        if res2.status == 0:
            x = res2.x[:n_var]
    rates = x[n_f:n_f + k].copy()
    return CapacityResult(rates, float(rates.sum()), epsilon, x[:n_f].reshape(n_links, k).copy())


@dataclass
class TheoremConstants:
    B: float
    B_bar: float
    B1: float
    B2: float
    B3: float
    B4: float
    B_R: float
    B_prime: float
    epsilon: float | None
    gamma: float
    eps1: float | None
    eps_prime: float | None
    delta: float | None
    throughput_floor: float | None
    virtual_ceiling: float | None
    note: str = ""


def constant_B(num_nodes, num_flows, q_max, mu_max, rhos, min_rates) -> float:
    n, k, q, mu = num_nodes, num_flows, q_max, mu_max
    return (0.5 * n * k * q * mu + k * (q - mu) / q * mu ** 2
            + 0.5 * mu ** 2 * sum(r ** 2 for r in rhos) + 0.5 * k * n ** 2 * q ** 2
            + 0.5 * k * mu ** 2 + 0.5 * k * sum(a ** 2 for a in min_rates))


def compute_constants(model: NetworkModel, config: SimConfig,
                      lp_result: CapacityResult | None = None,
                      gamma: float = 1.0) -> TheoremConstants:
    """Drift-bound constants, the throughput floor and the virtual-backlog ceiling.

    The floor and ceiling follow the variant in ``config``: the arbitrary-arrival
    variant uses B1 / B2, the delayed one B3 / B4, otherwise B and B + gamma V B_R.
    ``delta`` needs the epsilon-interior rates in ``lp_result`` and is ``None``
    whenever the interior margins it is built from are not positive.
    """
    n, k = model.num_nodes, model.num_flows
    q, mu, V, T = config.q_max, config.mu_max, config.V, config.feedback_delay
    rhos = [f.delay_threshold for f in model.flows]
    mins = [f.min_rate for f in model.flows]
    B = constant_B(n, k, q, mu, rhos, mins)
    B_R = k * mu
    rho_max = max(rhos, default=0.0)
    B1 = B + k * config.eta * mu ** 2
    B3 = B + k * n * mu * T + n * q * T * mu * rho_max + k * rho_max ** 2 * mu ** 2 * T
    consts = dict(B=B, B_bar=B + gamma * V * B_R, B1=B1, B2=B1 + V * B_R, B3=B3,
                  B4=B3 + V * B_R, B_R=B_R, B_prime=B + V * B_R, gamma=gamma)

    if lp_result is None:
        return TheoremConstants(**consts, epsilon=None, eps1=None, eps_prime=None, delta=None,
                                throughput_floor=None, virtual_ceiling=None,
                                note="requires capacity-region interior data")
    eps = lp_result.epsilon
    r = lp_result.rates
    eps1 = min(min(gamma * rhos[c] * r[c] - n * q for c in range(k)),
               (gamma * eps * (q - mu) - (2 * n - 1 + mu ** 2) / 2) / q)
    eps_prime = min(gamma * r[c] - mins[c] for c in range(k))
    delta = min(eps1, eps_prime) if eps > 0 and eps1 > 0 and eps_prime > 0 else None

    if config.variant == Variant.ARBITRARY:
        floor_b, ceil_b = B1, B1 + V * B_R
    elif config.variant == Variant.DELAYED:
        floor_b, ceil_b = B3, B3 + V * B_R
    else:
        floor_b, ceil_b = B, B + gamma * V * B_R
    floor = gamma * lp_result.total - floor_b / V
    ceiling = ceil_b / delta if delta else None
    return TheoremConstants(**consts, epsilon=eps, eps1=eps1, eps_prime=eps_prime, delta=delta,
                            throughput_floor=floor, virtual_ceiling=ceiling,
                            note="" if delta else "delta not positive: interior margins unavailable")


def scheduler_gamma(model: NetworkModel, config: SimConfig) -> float:
    """Worst-case approximation ratio of the configured scheduler."""
    if config.scheduler == SchedulerKind.GMM:
        return 0.5
    if config.scheduler == SchedulerKind.GREEDY_MWIS:
        return 1.0 / max(model.tables.max_degree, 1)
    return 1.0


def certify(model: NetworkModel, config: SimConfig, epsilons=(0.5, 0.25, 0.2, 0.1, 0.05, 0.02)):
    """First epsilon at which the throughput-theorem conditions hold, with its LP result.

    Returns ``(epsilon, lp_result, validation_report)`` or ``None`` when no
    candidate epsilon works.
    """
    gamma = scheduler_gamma(model, config)
    for eps in sorted(epsilons, reverse=True):
        try:
            lp = solve_capacity_lp(model, [f.min_rate for f in model.flows], eps, config.mu_max,
                                   balanced=True)
        except CapacityInfeasible:
            continue
        rep = validate(model, config, eps, lp.rates, gamma)
        if rep.valid and rep.theorem_conditions_hold:
            return eps, lp, rep
    return None
