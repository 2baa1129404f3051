"""Gaussian-process regression of a star-convex radial function.

The radius ``r(theta)`` of an object's contour is modelled as a GP with a
constant mean ``mu`` and the periodic squared-exponential kernel::

    k(t, t') = sf2 * exp(-2 sin^2(|t - t'| / 2) / l2)

plus i.i.d. Gaussian observation noise of variance ``sn2``. ``mu``, ``sf2``,
``l2`` and ``sn2`` are trained by maximising the log marginal likelihood.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
from scipy.optimize import minimize

from .clustering import PolarTrainingSet
from .errors import ConfigError, IllConditionedError

LOG_2PI = np.log(2.0 * np.pi)
JITTER_LADDER = (0.0,) + tuple(10.0**e for e in range(-12, -5))
# bounds on log(sf2), log(l2), log(sn2) during training
LOG_BOUNDS = (np.log(1e-10), np.log(1e10))
NEG_VAR_TOL = -1e-10


@dataclass(frozen=True)
class GpHyperParams:
    signal_var: float
    length_scale_sq: float
    noise_var: float
    mean_radius: float = 0.0

    def __post_init__(self):
        for name in ("signal_var", "length_scale_sq", "noise_var"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not np.isfinite(self.mean_radius):
            raise ConfigError("mean_radius must be finite")

    @classmethod
    def initial(cls, radii, length_scale=2.0, signal_std=2.0, noise_std=2.0):
        """Training start point: unit-free defaults and ``mu = mean(radii)``."""
        mu = float(np.mean(radii)) if len(radii) else 0.0
        return cls(signal_std**2, length_scale**2, noise_std**2, mu)

    def to_dict(self):
        return {"signal_var": self.signal_var, "length_scale_sq": self.length_scale_sq,
                "noise_var": self.noise_var, "mean_radius": self.mean_radius}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["signal_var"]), float(d["length_scale_sq"]),
                   float(d["noise_var"]), float(d.get("mean_radius", 0.0)))

    def _packed(self):
        return np.array([self.mean_radius, np.log(self.signal_var),
                         np.log(self.length_scale_sq), np.log(self.noise_var)])

    @classmethod
    def _unpack(cls, x):
        return cls(float(np.exp(x[1])), float(np.exp(x[2])), float(np.exp(x[3])),
                   float(x[0]))


def _sin2_half(a, b):
    return np.sin(0.5 * (np.asarray(a, float)[..., :, None]
                         - np.asarray(b, float)[..., None, :])) ** 2


def kernel(theta, theta2, hyper):
    """Periodic squared-exponential covariance (broadcasts elementwise)."""
    s = np.sin(0.5 * np.abs(np.asarray(theta, float) - np.asarray(theta2, float))) ** 2
    return hyper.signal_var * np.exp(-2.0 * s / hyper.length_scale_sq)


def gram(theta_a, theta_b, hyper):
    """Covariance matrix ``[k(a_i, b_j)]``."""
    return hyper.signal_var * np.exp(-2.0 * _sin2_half(theta_a, theta_b)
                                     / hyper.length_scale_sq)


def jittered_cholesky(a, scale):
    """Lower Cholesky factor of ``a``, adding diagonal jitter if needed.

    Tries no jitter first, then ``1e-12 * scale`` up to ``1e-6 * scale``.
    Returns ``(L, jitter)``.
    """
    n = a.shape[0]
    for rel in JITTER_LADDER:
        jitter = rel * scale
        try:
            chol = la.cholesky(a + jitter * np.eye(n), lower=True, check_finite=False)
        except la.LinAlgError:
            continue
        if np.all(np.isfinite(chol)):
            return chol, jitter
    raise IllConditionedError(
        f"Cholesky failed with jitter up to {JITTER_LADDER[-1] * scale:.3g}")


def _data(data):
    if isinstance(data, PolarTrainingSet):
        return data.angles, data.radii
    angles, radii = data
    return np.asarray(angles, float).reshape(-1), np.asarray(radii, float).reshape(-1)


def _factor(angles, radii, hyper):
    k = gram(angles, angles, hyper)
    ky = k + hyper.noise_var * np.eye(angles.size)
    chol, jitter = jittered_cholesky(ky, hyper.signal_var)
    eta = radii - hyper.mean_radius
    alpha = la.cho_solve((chol, True), eta, check_finite=False)
    return k, chol, jitter, eta, alpha


def _lml(chol, eta, alpha):
    return float(-0.5 * eta @ alpha - np.sum(np.log(np.diag(chol)))
                 - 0.5 * eta.size * LOG_2PI)


def log_marginal(data, hyper):
    """Log marginal likelihood of the radii under ``hyper``."""
    angles, radii = _data(data)
    _, chol, _, eta, alpha = _factor(angles, radii, hyper)
    return _lml(chol, eta, alpha)


def _gradient(angles, hyper, k, chol, alpha):
    ky_inv = la.cho_solve((chol, True), np.eye(angles.size), check_finite=False)
    q = np.outer(alpha, alpha) - ky_inv
    s = _sin2_half(angles, angles)
    d_sf2 = 0.5 * np.sum(q * k) / hyper.signal_var
    d_l2 = 0.5 * np.sum(q * k * (2.0 * s)) / hyper.length_scale_sq**2
    d_sn2 = 0.5 * np.trace(q)
    return np.array([np.sum(alpha), d_sf2, d_l2, d_sn2])


def lml_gradient(data, hyper):
    """Gradient of :func:`log_marginal` w.r.t. ``(mu, sf2, l2, sn2)``."""
    angles, radii = _data(data)
    k, chol, _, _, alpha = _factor(angles, radii, hyper)
    return _gradient(angles, hyper, k, chol, alpha)


@dataclass(frozen=True)
class GpModel:
    """A trained GP with its cached factorisation of ``K + sn2 I``."""

    hyper: GpHyperParams
    train_angles: np.ndarray
    train_radii: np.ndarray
    chol_Ky: np.ndarray
    alpha: np.ndarray
    log_marginal: float
    jitter: float = 0.0
    converged: bool = True
    iterations: int = 0
    init_log_marginal: float | None = None

    @property
    def M(self):
        return self.train_angles.size

    @classmethod
    def condition(cls, data, hyper, **extra):
        """Condition the GP on ``data`` at fixed ``hyper`` (no training)."""
        angles, radii = _data(data)
        if angles.size == 0:
            return cls(hyper, angles, radii, np.zeros((0, 0)), np.zeros(0), 0.0, **extra)
        _, chol, jitter, eta, alpha = _factor(angles, radii, hyper)
        return cls(hyper, angles, radii, chol, alpha, _lml(chol, eta, alpha),
                   jitter=jitter, **extra)

    def to_dict(self):
        return {"hyper": self.hyper.to_dict(), "M": self.M,
                "log_marginal": self.log_marginal, "jitter": self.jitter,
                "converged": self.converged, "iterations": self.iterations,
                "init_log_marginal": self.init_log_marginal}


def fit(data, init=None, max_iter=200, grad_tol=1e-6):
    """Train ``mu`` and the kernel hyperparameters by maximising the LML.

    Optimises ``(mu, log sf2, log l2, log sn2)`` with L-BFGS-B using the
    analytic gradient. ``init`` defaults to ``GpHyperParams.initial``.
    The result never has a lower LML than ``init``; ``converged`` is False
    when the optimiser stopped without meeting ``grad_tol``.
    """
    angles, radii = _data(data)
    if angles.size < 2:
        raise ConfigError("fit needs at least two training points")
    init = init or GpHyperParams.initial(radii)
    init_lml = log_marginal((angles, radii), init)

    def objective(x):
        hyper = GpHyperParams._unpack(x)
        try:
            k, chol, _, eta, alpha = _factor(angles, radii, hyper)
        except IllConditionedError:
            return 1e25, np.zeros(4)
        g = _gradient(angles, hyper, k, chol, alpha)
        g[1:] *= np.exp(x[1:])
        return -_lml(chol, eta, alpha), -g

    bounds = [(None, None)] + [LOG_BOUNDS] * 3
    res = minimize(objective, init._packed(), jac=True, method="L-BFGS-B",
                   bounds=bounds,
                   options={"maxiter": max_iter, "gtol": grad_tol, "ftol": 1e-15})
    hyper = GpHyperParams._unpack(res.x)
    converged = bool(res.success)
    if not -res.fun >= init_lml:
        hyper, converged = init, False
    return GpModel.condition((angles, radii), hyper, converged=converged,
                             iterations=int(res.nit), init_log_marginal=init_lml)


@dataclass(frozen=True)
class RadialPrediction:
    test_angles: np.ndarray
    mean: np.ndarray
    variance: np.ndarray

    @property
    def ci95_half_width(self):
        """Two predictive standard deviations."""
        return 2.0 * np.sqrt(self.variance)

    @property
    def ci_lo(self):
        return self.mean - self.ci95_half_width

    @property
    def ci_hi(self):
        return self.mean + self.ci95_half_width


def predict(model, test_angles=None):
    """Predictive mean and variance of the latent radius at ``test_angles``.

    Defaults to the training angles. Negative variances from round-off are
    clamped to zero; a warning is issued below -1e-10.
    """
    if not isinstance(model, GpModel):
        raise ConfigError("predict needs a fitted GpModel")
    h = model.hyper
    t = model.train_angles if test_angles is None else np.asarray(test_angles, float)
    t = t.reshape(-1)
    if model.M == 0:
        return RadialPrediction(t, np.full(t.size, h.mean_radius),
                                np.full(t.size, h.signal_var))
    ks = gram(t, model.train_angles, h)
    mean = h.mean_radius + ks @ model.alpha
    v = la.solve_triangular(model.chol_Ky, ks.T, lower=True, check_finite=False)
    var = h.signal_var - np.sum(v * v, axis=0)
    if np.any(var < NEG_VAR_TOL):
        warnings.warn(f"predictive variance {var.min():.3g} clamped to zero",
                      RuntimeWarning, stacklevel=2)
    return RadialPrediction(t, mean, np.maximum(var, 0.0))


@dataclass(frozen=True)
class Contour:
    """Cartesian contours: predictive mean and the 95% band edges."""

    mean: np.ndarray
    inner: np.ndarray
    outer: np.ndarray


def reconstruct_contour(prediction, origin):
    """Map a radial prediction back to Cartesian points about ``origin``."""
    origin = np.asarray(origin, dtype=float)
    u = np.column_stack([np.cos(prediction.test_angles), np.sin(prediction.test_angles)])
    hw = prediction.ci95_half_width
    return Contour(origin + prediction.mean[:, None] * u,
                   origin + np.maximum(prediction.mean - hw, 0.0)[:, None] * u,
                   origin + (prediction.mean + hw)[:, None] * u)
