"""Expected prediction-accuracy ceilings.

Even with the true parameters, a cell with success probability ``p`` is
predicted correctly with probability ``max(p, 1 - p)``; averaging that over
the distribution of ``p`` bounds the attainable accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import expit

from .errors import InvalidArgumentError, InvalidDensityError
from .model import ModelSpec, ParameterSet, logit_matrix

QUAD_TOL = 1e-10
_SQRT_2PI = math.sqrt(2 * math.pi)


def _npdf(x, mean, sd):
    z = (x - mean) / sd
    return np.exp(-0.5 * z * z) / (sd * _SQRT_2PI)


@dataclass(frozen=True)
class ScalarDistribution:
    """``normal`` (mean, sd), ``point`` (value) or ``empirical`` (sample)."""

    kind: str
    mean: float = 0.0
    sd: float = 1.0
    sample: tuple = ()

    def __post_init__(self):
        if self.kind == "normal":
            if not self.sd > 0:
                raise InvalidArgumentError("normal distribution needs a positive standard deviation")
        elif self.kind == "point":
            pass
        elif self.kind == "empirical":
            if len(self.sample) == 0:
                raise InvalidArgumentError("empirical distribution needs a nonempty sample")
        else:
            raise InvalidArgumentError(f"unknown distribution kind {self.kind!r}")

    @classmethod
    def normal(cls, mean: float, sd: float) -> ScalarDistribution:
        return cls("normal", float(mean), float(sd))

    @classmethod
    def point(cls, value: float) -> ScalarDistribution:
        return cls("point", float(value), 0.0)

    @classmethod
    def empirical(cls, values) -> ScalarDistribution:
        return cls("empirical", sample=tuple(float(v) for v in np.ravel(values)))

    @classmethod
    def parse(cls, text: str) -> ScalarDistribution:
        """Parse ``normal:<mean>,<sd>``, ``normal-var:<mean>,<variance>``, ``point:<value>``
        or ``empirical:<v1>,<v2>,...``."""
        kind, _, args = text.partition(":")
        try:
            values = [float(v) for v in args.split(",") if v.strip()]
        except ValueError as exc:
            raise InvalidArgumentError(f"bad distribution {text!r}") from exc
        if kind == "normal" and len(values) == 2:
            return cls.normal(*values)
        if kind == "normal-var" and len(values) == 2:
            if not values[1] > 0:
                raise InvalidArgumentError("normal distribution needs a positive variance")
            return cls.normal(values[0], math.sqrt(values[1]))
        if kind == "point" and len(values) == 1:
            return cls.point(values[0])
        if kind == "empirical" and values:
            return cls.empirical(values)
        raise InvalidArgumentError(f"bad distribution {text!r}; expected normal:<mean>,<sd>, normal-var:<mean>,<variance>, point:<v> or empirical:<v,...>")

    def __str__(self):
        if self.kind == "normal":
            return f"N({self.mean:g}, {self.sd:g})"
        if self.kind == "point":
            return f"point({self.mean:g})"
        return f"empirical(n={len(self.sample)})"


def expected_accuracy_from_density(density) -> float:
    """Integrate ``(1 - p) f(p)`` over ``(0, 0.5)`` and ``p f(p)`` over ``(0.5, 1)``.

    ``density`` is a callable on (0, 1) integrating to one, or a float giving
    a point mass at that probability.
    """
    if not callable(density):
        p = float(density)
        if not 0 <= p <= 1:
            raise InvalidDensityError("point mass must lie in [0, 1]")
        return max(p, 1.0 - p)
    mass = sum(integrate.quad(density, a, b, epsabs=QUAD_TOL, limit=200)[0] for a, b in ((0, 0.5), (0.5, 1)))
    if abs(mass - 1.0) > 1e-6:
        raise InvalidDensityError(f"density integrates to {mass:.8f}, not 1")
    low = integrate.quad(lambda p: (1 - p) * density(p), 0, 0.5, epsabs=QUAD_TOL, limit=200)[0]
    high = integrate.quad(lambda p: p * density(p), 0.5, 1, epsabs=QUAD_TOL, limit=200)[0]
    return low + high


def _normal_ceiling(mean: float, sd: float) -> float:
    """E[sigma(|D|)] for D ~ N(mean, sd^2)."""
    if sd == 0:
        return float(expit(abs(mean)))
    # standardize so narrow or far-off bumps stay inside the window; the
    # mass beyond 12 sd is below 1e-32
    f = lambda z: expit(abs(mean + sd * z)) * _npdf(z, 0.0, 1.0)
    kink = -mean / sd
    cuts = [-12.0] + ([kink] if -12.0 < kink < 12.0 else []) + [12.0]
    return sum(integrate.quad(f, a, b, epsabs=QUAD_TOL, limit=200)[0] for a, b in zip(cuts, cuts[1:]))


def _as_components(dist: ScalarDistribution):
    """(locations, sd) with the distribution = mixture of N(loc, sd^2) over locations."""
    if dist.kind == "empirical":
        return np.asarray(dist.sample), 0.0
    if dist.kind == "point":
        return np.array([dist.mean]), 0.0
    return np.array([dist.mean]), dist.sd


def rasch_expected_accuracy(theta: ScalarDistribution, delta: ScalarDistribution) -> float:
    """Accuracy ceiling for ``P = sigma(Theta - Delta)`` with independent inputs.

    Normal and point inputs reduce ``Theta - Delta`` to a single normal;
    empirical inputs are paired exhaustively.
    """
    t_loc, t_sd = _as_components(theta)
    d_loc, d_sd = _as_components(delta)
    sd = math.hypot(t_sd, d_sd)
    diffs = (t_loc[:, None] - d_loc[None, :]).ravel()
    if sd == 0:
        return float(np.mean(expit(np.abs(diffs))))
    return float(np.mean([_normal_ceiling(d, sd) for d in diffs]))


def rasch_density(p, theta: ScalarDistribution, delta: ScalarDistribution, quadrature: bool = False):
    """Density of ``P = sigma(Theta - Delta)`` at ``p`` for normal ``Theta`` and ``Delta``.

    ``f(p) = 1/(p(1-p)) * integral f_Theta(t) f_Delta(t + log((1-p)/p)) dt``.
    The integral of two normal densities is itself a normal density in the
    shift, which is used unless ``quadrature`` asks for numerical integration.
    """
    if theta.kind != "normal" or delta.kind != "normal":
        raise InvalidArgumentError("the density form needs normal person and item distributions")
    p = float(p)
    if not 0 < p < 1:
        return 0.0
    shift = math.log((1 - p) / p)
    if not quadrature:
        val = _npdf(shift, delta.mean - theta.mean, math.hypot(theta.sd, delta.sd))
        return float(val / (p * (1 - p)))
    f = lambda t: _npdf(t, theta.mean, theta.sd) * _npdf(t + shift, delta.mean, delta.sd)
    # the integrand is a Gaussian bump; center the quadrature on it
    w_t, w_d = 1 / theta.sd**2, 1 / delta.sd**2
    center = (w_t * theta.mean + w_d * (delta.mean - shift)) / (w_t + w_d)
    width = 1 / math.sqrt(w_t + w_d)
    val = integrate.quad(f, center - 40 * width, center + 40 * width, points=[center], epsabs=1e-14, limit=200)[0]
    return val / (p * (1 - p))


def empirical_expected_accuracy(spec: ModelSpec, params: ParameterSet) -> float:
    """Mean of ``max(p_ij, 1 - p_ij)`` over every person-item cell."""
    params.check(spec)
    z = logit_matrix(spec, params)
    return float(np.mean(expit(np.abs(z))))
