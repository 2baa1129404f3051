"""Bistatic scene types and the single-bounce forward model.

A path measurement is the triple (ToA, AoD, AoA). For a single-bounce
path reflecting at the incidence point ``p``::

    toa = |p_tx - p| / c + |p - p_rx| / c + b_rx
    aod = atan2(p - p_tx) - alpha_tx
    aoa = atan2(p - p_rx) - alpha_rx

Everything is in SI units: metres, seconds, radians.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateGeometryError

SPEED_OF_LIGHT = 299_792_458.0
DEGENERACY_TOL = 1e-9

#: Per-path standard deviations (1 ns, 1 deg, 1 deg) in SI units.
DEFAULT_NOISE_STD = (1e-9, np.deg2rad(1.0), np.deg2rad(1.0))


def default_noise_cov():
    """Default per-path covariance ``diag([1 ns, 1 deg, 1 deg])**2`` in SI."""
    return np.diag(np.square(DEFAULT_NOISE_STD))


def wrap_angle(a):
    """Wrap angles to the half-open interval [-pi, pi)."""
    if isinstance(a, (float, int, np.floating, np.integer)):
        a = float(a)
        if -math.pi <= a < math.pi or not math.isfinite(a):
            return a if math.isfinite(a) else float("nan")
        w = (a + math.pi) % (2.0 * math.pi) - math.pi
        return w - 2.0 * math.pi if w >= math.pi else w
    a = np.asarray(a, dtype=float)
    w = np.mod(a + np.pi, 2.0 * np.pi) - np.pi
    # mod can round up to exactly 2*pi for tiny negative inputs
    w = np.where(w >= np.pi, w - 2.0 * np.pi, w)
    # leave in-range values bit-exact
    w = np.where((a >= -np.pi) & (a < np.pi), a, w)
    return float(w) if w.ndim == 0 else w


def _frozen_vec(v, n=2, name="position"):
    arr = np.array(v, dtype=float).reshape(-1)
    if arr.shape != (n,) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} must be a finite {n}-vector, got {v!r}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class TxState:
    """Known transmitter pose."""

    position: np.ndarray
    orientation: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen_vec(self.position))
        object.__setattr__(self, "orientation", wrap_angle(self.orientation))


@dataclass(frozen=True, eq=False)
class RxState:
    """Receiver position, heading and clock bias (the SLAM unknowns)."""

    position: np.ndarray
    heading: float = 0.0
    clock_bias: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen_vec(self.position))
        object.__setattr__(self, "heading", wrap_angle(self.heading))
        if not np.isfinite(self.clock_bias):
            raise ConfigError("clock_bias must be finite")
        object.__setattr__(self, "clock_bias", float(self.clock_bias))

    def as_vector(self):
        """``[x, y, heading, clock_bias]``."""
        return np.array([*self.position, self.heading, self.clock_bias])

    @classmethod
    def from_vector(cls, v):
        return cls(position=v[:2], heading=v[2], clock_bias=v[3])


class PathKind(str, enum.Enum):
    UNKNOWN = "unknown"
    LOS = "los"
    NLOS = "nlos"


@dataclass(frozen=True, eq=False)
class PathMeasurement:
    """One path's channel-parameter estimate with its noise covariance.

    ``truth`` and ``is_outlier`` are evaluation tags set by the synthetic
    generators; estimators never read them.
    """

    toa: float
    aod: float
    aoa: float
    noise_cov: np.ndarray = field(default_factory=default_noise_cov)
    path_id: int = 0
    path_kind_hint: PathKind = PathKind.UNKNOWN
    truth: np.ndarray | None = None
    is_outlier: bool = False

    def __post_init__(self):
        cov = np.array(self.noise_cov, dtype=float)
        if cov.shape == (3,):
            cov = np.diag(cov)
        if cov.shape != (3, 3):
            raise ConfigError("noise_cov must be 3x3")
        if np.any(cov - np.diag(np.diag(cov))):
            raise ConfigError("noise_cov must be diagonal")
        if not np.all(np.diag(cov) > 0):
            raise ConfigError("noise_cov diagonal entries must be strictly positive")
        cov.flags.writeable = False
        object.__setattr__(self, "noise_cov", cov)
        object.__setattr__(self, "toa", float(self.toa))
        object.__setattr__(self, "aod", wrap_angle(self.aod))
        object.__setattr__(self, "aoa", wrap_angle(self.aoa))
        object.__setattr__(self, "path_id", int(self.path_id))
        object.__setattr__(self, "path_kind_hint", PathKind(self.path_kind_hint))
        if self.truth is not None:
            object.__setattr__(self, "truth", _frozen_vec(self.truth, name="truth"))

    @property
    def z(self):
        return np.array([self.toa, self.aod, self.aoa])

    @property
    def noise_std(self):
        return np.sqrt(np.diag(self.noise_cov))


@dataclass(frozen=True, eq=False)
class IncidencePoint:
    """Estimated reflection point of one path."""

    position: np.ndarray
    source_path_id: int
    residual_cost: float
    converged: bool = True

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen_vec(self.position))
        if not self.residual_cost >= 0:
            raise ConfigError("residual_cost must be non-negative")


def _check_distinct(a, b, what):
    if np.hypot(*(np.asarray(a) - np.asarray(b))) <= DEGENERACY_TOL:
        raise DegenerateGeometryError(f"incidence point coincides with {what}")


def predict_parameters(tx_pos, tx_ori, rx_pos, rx_heading, rx_bias, ip):
    """Forward model on raw arrays, without degeneracy checks."""
    d_tx = ip - tx_pos
    d_rx = ip - rx_pos
    toa = (np.hypot(*d_tx) + np.hypot(*d_rx)) / SPEED_OF_LIGHT + rx_bias
    aod = wrap_angle(np.arctan2(d_tx[1], d_tx[0]) - tx_ori)
    aoa = wrap_angle(np.arctan2(d_rx[1], d_rx[0]) - rx_heading)
    return np.array([toa, aod, aoa])


def forward_model(tx, rx, ip):
    """Map an incidence point to ``[toa, aod, aoa]``.

    Raises
    ------
    DegenerateGeometryError
        If ``ip`` lies within 1e-9 m of the transmitter or receiver.
    """
    ip = np.asarray(ip, dtype=float)
    _check_distinct(ip, tx.position, "the transmitter")
    _check_distinct(ip, rx.position, "the receiver")
    return predict_parameters(tx.position, tx.orientation, rx.position,
                              rx.heading, rx.clock_bias, ip)


def forward_jacobians(tx, rx, ip):
    """Analytic Jacobians of the forward model.

    Returns
    -------
    jac_ip : (3, 2) array
        Derivative with respect to the incidence point.
    jac_rx : (3, 4) array
        Derivative with respect to ``[x_rx, y_rx, heading, clock_bias]``.
    """
    ip = np.asarray(ip, dtype=float)
    d_tx = ip - tx.position
    d_rx = ip - rx.position
    n_tx = np.hypot(*d_tx)
    n_rx = np.hypot(*d_rx)
    jac_ip = np.empty((3, 2))
    jac_ip[0] = (d_tx / n_tx + d_rx / n_rx) / SPEED_OF_LIGHT
    jac_ip[1] = np.array([-d_tx[1], d_tx[0]]) / n_tx**2
    jac_ip[2] = np.array([-d_rx[1], d_rx[0]]) / n_rx**2
    jac_rx = np.zeros((3, 4))
    jac_rx[0, :2] = -d_rx / n_rx / SPEED_OF_LIGHT
    jac_rx[0, 3] = 1.0
    jac_rx[2, :2] = -jac_ip[2]
    jac_rx[2, 2] = -1.0
    return jac_ip, jac_rx


def los_parameters(tx, rx):
    """Channel parameters of the direct (line-of-sight) path."""
    d = rx.position - tx.position
    dist = np.hypot(*d)
    if dist <= DEGENERACY_TOL:
        raise DegenerateGeometryError("transmitter and receiver coincide")
    return np.array([
        dist / SPEED_OF_LIGHT + rx.clock_bias,
        wrap_angle(np.arctan2(d[1], d[0]) - tx.orientation),
        wrap_angle(np.arctan2(-d[1], -d[0]) - rx.heading),
    ])


def los_jacobian(tx, rx):
    """(3, 4) Jacobian of :func:`los_parameters` w.r.t. the receiver state."""
    d = rx.position - tx.position
    n2 = d @ d
    jac = np.zeros((3, 4))
    jac[0, :2] = d / np.sqrt(n2) / SPEED_OF_LIGHT
    jac[0, 3] = 1.0
    jac[1, :2] = np.array([-d[1], d[0]]) / n2
    jac[2, :2] = np.array([-d[1], d[0]]) / n2
    jac[2, 2] = -1.0
    return jac


def synthesize_path(tx, rx, ip, noise_cov=None, rng_seed=None, *, path_id=0,
                    add_noise=True):
    """Draw one noisy single-bounce measurement of ``ip``.

    ``rng_seed`` may be an int or a ``numpy.random.Generator``. The returned
    measurement carries ``noise_cov`` for later weighting even when
    ``add_noise`` is False.
    """
    cov = default_noise_cov() if noise_cov is None else np.asarray(noise_cov, float)
    if cov.ndim == 1:
        cov = np.diag(cov)
    z = forward_model(tx, rx, ip)
    if add_noise:
        rng = np.random.default_rng(rng_seed)
        z = z + rng.standard_normal(3) * np.sqrt(np.diag(cov))
    return PathMeasurement(z[0], z[1], z[2], noise_cov=cov, path_id=path_id,
                           path_kind_hint=PathKind.NLOS, truth=ip)


def synthesize_scene(tx, rx, objects, paths_per_object, outlier_count=0,
                     noise_cov=None, rng_seed=None, *, add_noise=True,
                     outlier_delay=(10e-9, 50e-9), min_outlier_cost=None):
    """Generate single-bounce measurements off a set of objects plus clutter.

    Each object's contour is sampled at ``paths_per_object`` equally spaced
    angles and every contour point yields one measurement tagged with its
    true incidence point. Outliers reflect off a uniformly drawn fake point
    and get an extra positive delay from ``outlier_delay`` (seconds), which
    mimics multi-bounce paths and clutter. Path ids start at 1; id 0 is
    reserved for the line-of-sight path.

    With ``min_outlier_cost`` set, outliers are redrawn until their
    profiled cost under the true receiver state (the best single-bounce
    explanation) exceeds it, so every outlier is a gross one.
    """
    from .shapes import sample_contour

    if not objects:
        raise ConfigError("synthesize_scene needs at least one object")
    if paths_per_object < 1:
        raise ConfigError("paths_per_object must be >= 1")
    rng = np.random.default_rng(rng_seed)
    out = []
    pid = 1
    for shape in objects:
        ts = sample_contour(shape, paths_per_object, noise_std=0.0, rng=rng)
        for theta, r in zip(ts.angles, ts.radii):
            ip = np.asarray(shape.center) + r * np.array([np.cos(theta), np.sin(theta)])
            out.append(synthesize_path(tx, rx, ip, noise_cov, rng, path_id=pid,
                                       add_noise=add_noise))
            pid += 1

    pts = np.array([m.truth for m in out] + [tx.position, rx.position])
    lo = pts.min(axis=0) - 2.0
    hi = pts.max(axis=0) + 2.0
    for _ in range(outlier_count):
        while True:
            fake = rng.uniform(lo, hi)
            if (np.hypot(*(fake - tx.position)) <= 0.5
                    or np.hypot(*(fake - rx.position)) <= 0.5):
                continue
            m = synthesize_path(tx, rx, fake, noise_cov, rng, path_id=pid,
                                add_noise=add_noise)
            extra = rng.uniform(*outlier_delay)
            m = PathMeasurement(m.toa + extra, m.aod, m.aoa, m.noise_cov,
                                path_id=pid, is_outlier=True)
            if min_outlier_cost is None or _profiled(m, rx, tx) > min_outlier_cost:
                break
        out.append(m)
        pid += 1
    return out


def _profiled(z, rx, tx):
    from .mapping import estimate_ip
    return estimate_ip(z, rx, tx).residual_cost
