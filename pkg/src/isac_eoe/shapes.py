"""Ground-truth star-convex shapes, contour sampling and RMSE evaluation."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .clustering import PolarTrainingSet
from .errors import ConfigError

SHAPE_KINDS = ("circle", "rectangle", "star", "gp_sample")
_GP_GRID = 1024


@dataclass(frozen=True)
class ShapeSpec:
    """A star-convex object described by its radial function about ``center``.

    Only the parameters of the chosen ``kind`` are used:

    * circle: ``radius``
    * rectangle: ``half_w``, ``half_h``
    * star: ``base_radius + amplitude * cos(lobes * theta)``
    * gp_sample: a prior draw of the periodic GP with ``hyper`` (a
      :class:`~isac_eoe.gp.GpHyperParams`) at ``seed``
    """

    kind: str
    center: tuple = (0.0, 0.0)
    radius: float = 1.0
    half_w: float = 1.0
    half_h: float = 0.5
    base_radius: float = 2.0
    amplitude: float = 0.5
    lobes: int = 3
    hyper: object = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ConfigError(f"unknown shape kind {self.kind!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.kind == "circle" and not self.radius > 0:
            raise ConfigError("circle radius must be positive")
        if self.kind == "rectangle" and not (self.half_w > 0 and self.half_h > 0):
            raise ConfigError("rectangle half sizes must be positive")
        if self.kind == "star":
            if not (self.base_radius > 0 and self.amplitude > 0 and self.lobes >= 1):
                raise ConfigError("star parameters must be positive")
            if self.amplitude >= self.base_radius:
                raise ConfigError("star amplitude must be below base_radius")
        if self.kind == "gp_sample":
            if self.hyper is None:
                raise ConfigError("gp_sample needs hyper")
            if np.min(_gp_grid_values(_hyper_key(self.hyper), self.seed)) <= 0:
                raise ConfigError("gp_sample draw is not strictly positive; "
                                  "raise mean_radius or change the seed")

    @classmethod
    def circle(cls, radius, center=(0.0, 0.0)):
        return cls("circle", center, radius=radius)

    @classmethod
    def rectangle(cls, half_w, half_h, center=(0.0, 0.0)):
        return cls("rectangle", center, half_w=half_w, half_h=half_h)

    @classmethod
    def star(cls, base_radius=2.0, amplitude=0.5, lobes=3, center=(0.0, 0.0)):
        return cls("star", center, base_radius=base_radius, amplitude=amplitude,
                   lobes=lobes)

    @classmethod
    def gp_sample(cls, hyper, seed=0, center=(0.0, 0.0)):
        return cls("gp_sample", center, hyper=hyper, seed=seed)

    def to_dict(self):
        d = {"kind": self.kind, "center": list(self.center)}
        if self.kind == "circle":
            d["radius"] = self.radius
        elif self.kind == "rectangle":
            d.update(half_w=self.half_w, half_h=self.half_h)
        elif self.kind == "star":
            d.update(base_radius=self.base_radius, amplitude=self.amplitude,
                     lobes=self.lobes)
        else:
            d.update(hyper=self.hyper.to_dict(), seed=self.seed)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("kind") == "gp_sample":
            from .gp import GpHyperParams
            d["hyper"] = GpHyperParams.from_dict(d["hyper"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad shape spec {d!r}: {exc}") from None


def _hyper_key(h):
    return (h.signal_var, h.length_scale_sq, h.noise_var, h.mean_radius)


@lru_cache(maxsize=64)
def _gp_grid_values(key, seed):
    from .gp import GpHyperParams, gram

    hyper = GpHyperParams(*key)
    grid = np.linspace(-np.pi, np.pi, _GP_GRID, endpoint=False)
    k = gram(grid, grid, hyper) + 1e-10 * hyper.signal_var * np.eye(_GP_GRID)
    chol = np.linalg.cholesky(k)
    rng = np.random.default_rng(seed)
    vals = hyper.mean_radius + chol @ rng.standard_normal(_GP_GRID)
    vals.flags.writeable = False
    return vals


def radial_truth(shape, theta):
    """True contour distance from the shape centre at polar angle ``theta``."""
    theta = np.asarray(theta, dtype=float)
    if shape.kind == "circle":
        r = np.full_like(theta, shape.radius)
    elif shape.kind == "rectangle":
        with np.errstate(divide="ignore"):
            rx = shape.half_w / np.abs(np.cos(theta))
            ry = shape.half_h / np.abs(np.sin(theta))
        r = np.minimum(rx, ry)
    elif shape.kind == "star":
        r = shape.base_radius + shape.amplitude * np.cos(shape.lobes * theta)
    else:
        vals = _gp_grid_values(_hyper_key(shape.hyper), shape.seed)
        grid = np.linspace(-np.pi, np.pi, _GP_GRID, endpoint=False)
        r = np.interp(theta, grid, vals, period=2.0 * np.pi)
    return float(r) if r.ndim == 0 else r


def sample_contour(shape, M, noise_std=0.1, rng=None, spacing="equal"):
    """Noisy radial samples of ``shape`` at ``M`` angles in [-pi, pi).

    ``spacing`` is ``"equal"`` (deterministic grid starting at -pi) or
    ``"random"`` (uniform draws). Noisy radii are clamped at zero.
    """
    if M < 1:
        raise ConfigError("M must be >= 1")
    rng = np.random.default_rng(rng)
    if spacing == "equal":
        angles = -np.pi + 2.0 * np.pi * np.arange(M) / M
    elif spacing == "random":
        angles = rng.uniform(-np.pi, np.pi, M)
    else:
        raise ConfigError(f"unknown spacing {spacing!r}")
    radii = radial_truth(shape, angles)
    if noise_std > 0:
        radii = radii + noise_std * rng.standard_normal(M)
    return PolarTrainingSet(angles, np.maximum(radii, 0.0), np.array(shape.center))


def rmse(truth, predicted_mean):
    """Root-mean-square difference of two equal-length sequences."""
    t = np.asarray(truth, dtype=float).reshape(-1)
    p = np.asarray(predicted_mean, dtype=float).reshape(-1)
    if t.shape != p.shape or t.size == 0:
        raise ConfigError("rmse needs two non-empty sequences of equal length")
    return float(np.sqrt(np.mean((t - p) ** 2)))
