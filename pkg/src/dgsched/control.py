"""Congestion controllers choosing the virtual input rate R_c (and v_c) each slot."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ControlDecision:
    R: np.ndarray
    v: np.ndarray


def _rho(flows):
    return np.array([f.delay_threshold for f in flows])


def threshold(u_s, x, z, rho, q_max, mu_max, V):
    """((q_M - mu_M)/q_M) u_s - rho x - z - V, per flow."""
    return (q_max - mu_max) / q_max * u_s - x * rho - z - V


def control_backlogged(vq, flows, config) -> ControlDecision:
    # strict "> 0" closes admission; a tie admits
    expr = threshold(vq.u_s, vq.x, vq.z, _rho(flows), config.q_max, config.mu_max, config.V)
    R = np.where(expr > 0, 0.0, float(config.mu_max))
    return ControlDecision(R, np.zeros_like(R))


def control_delayed(vq, flows, config) -> ControlDecision:
    """Backlogged controller with the delay queue read ``feedback_delay`` slots late."""
    expr = threshold(vq.u_s, vq.delayed_x, vq.z, _rho(flows), config.q_max, config.mu_max,
                     config.V)
    R = np.where(expr > 0, 0.0, float(config.mu_max))
    return ControlDecision(R, np.zeros_like(R))


def control_arbitrary(vq, arrivals, flows, config) -> ControlDecision:
    """Two independent threshold rules; here a zero expression already closes."""
    mu = float(config.mu_max)
    v = np.where(config.eta * vq.y - config.V >= 0, 0.0, mu)
    expr = ((config.q_max - config.mu_max) / config.q_max * vq.u_s - config.eta * vq.y
            - vq.x * _rho(flows) - vq.z)
    available = np.minimum(vq.l + np.asarray(arrivals, float), mu)
    R = np.where(expr >= 0, 0.0, available)
    return ControlDecision(R, v)
