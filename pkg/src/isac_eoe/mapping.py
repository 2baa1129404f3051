"""Incidence-point estimation with a known receiver state."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._lm import levenberg_marquardt
from .errors import ConfigError
from .geometry import (
    DEGENERACY_TOL,
    SPEED_OF_LIGHT,
    IncidencePoint,
    forward_jacobians,
    forward_model,
    predict_parameters,
    wrap_angle,
)


@dataclass(frozen=True)
class MappingConfig:
    max_iterations: int = 100
    gradient_tol: float = 1e-9
    step_damping_init: float = 1e-3
    multistart_count: int = 3

    def __post_init__(self):
        if self.max_iterations < 1 or self.multistart_count < 1:
            raise ConfigError("max_iterations and multistart_count must be >= 1")
        if not (self.gradient_tol > 0 and self.step_damping_init > 0):
            raise ConfigError("tolerances must be positive")


def measurement_residual(z, predicted):
    """``z - predicted`` with both angle components wrapped to [-pi, pi)."""
    res = np.asarray(z, float) - predicted
    res[1:] = wrap_angle(res[1:])
    return res


def cost_J(z, rx, tx, ip):
    """Mahalanobis-squared residual of one path at a candidate incidence point."""
    res = measurement_residual(z.z, forward_model(tx, rx, ip))
    return float(res @ np.linalg.solve(z.noise_cov, res))


def _residual_fun(z, rx, tx):
    w = 1.0 / z.noise_std
    zz = z.z

    def fun(p):
        if (np.hypot(*(p - tx.position)) <= DEGENERACY_TOL
                or np.hypot(*(p - rx.position)) <= DEGENERACY_TOL):
            return None
        g = predict_parameters(tx.position, tx.orientation, rx.position,
                               rx.heading, rx.clock_bias, p)
        jac_ip, _ = forward_jacobians(tx, rx, p)
        return w * measurement_residual(zz, g), -(w[:, None] * jac_ip)

    return fun


def _unit(angle):
    return np.array([np.cos(angle), np.sin(angle)])


def geometric_seed(z, rx, tx):
    """Candidate starting points for :func:`estimate_ip`.

    In order: the AoD/AoA ray intersection (omitted for parallel rays or an
    intersection behind either array), the point on the AoA ray whose
    bistatic range matches ``c * (toa - clock_bias)`` (omitted when no such
    point exists), and the TX/RX midpoint, which is always present.
    """
    seeds = []
    u = _unit(z.aod + tx.orientation)
    v = _unit(z.aoa + rx.heading)
    cross = u[0] * v[1] - u[1] * v[0]
    if abs(cross) > 1e-12:
        s, t = np.linalg.solve(np.column_stack([u, -v]), rx.position - tx.position)
        if s > DEGENERACY_TOL and t > DEGENERACY_TOL:
            seeds.append(tx.position + s * u)

    # |w - t v| = D - t along the AoA ray; the quadratic terms cancel
    rng_bi = SPEED_OF_LIGHT * (z.toa - rx.clock_bias)
    w = tx.position - rx.position
    den = 2.0 * (rng_bi - w @ v)
    if abs(den) > 1e-12:
        t = (rng_bi**2 - w @ w) / den
        if t > DEGENERACY_TOL and rng_bi - t > DEGENERACY_TOL:
            seeds.append(rx.position + t * v)

    seeds.append(0.5 * (tx.position + rx.position))
    return seeds


def estimate_ip(z, rx, tx, cfg=None):
    """Estimate the incidence point of path ``z`` given the receiver state.

    Runs Levenberg-Marquardt from each geometric seed (up to
    ``cfg.multistart_count``) and keeps the lowest cost. The returned
    point's ``converged`` flag is False when the gradient norm stayed above
    ``cfg.gradient_tol``; the best iterate is returned either way.
    """
    cfg = cfg or MappingConfig()
    fun = _residual_fun(z, rx, tx)
    best = None
    for seed in geometric_seed(z, rx, tx)[: cfg.multistart_count]:
        if fun(seed) is None:
            continue
        res = levenberg_marquardt(fun, seed, max_iterations=cfg.max_iterations,
                                  gradient_tol=cfg.gradient_tol,
                                  damping_init=cfg.step_damping_init)
        if best is None or res.cost < best.cost:
            best = res
    if best is None:
        # all seeds degenerate (tx and rx coincide); nudge off the midpoint
        seed = 0.5 * (tx.position + rx.position) + np.array([1.0, 0.0])
        best = levenberg_marquardt(fun, seed, max_iterations=cfg.max_iterations,
                                   gradient_tol=cfg.gradient_tol,
                                   damping_init=cfg.step_damping_init)
    return IncidencePoint(best.x, z.path_id, best.cost, best.converged)


def map_paths(measurements, rx, tx, cfg=None):
    """:func:`estimate_ip` for every measurement."""
    return [estimate_ip(z, rx, tx, cfg) for z in measurements]
