"""KL divergences for one-parameter exponential families.

Gaussian families use the per-objective weighted form

    kl_z(M_k, Mt_k) = sum_l z_l^2 (M_k[l] - Mt_k[l])^2 / (2 sigma_l^2),

which is what the lower-bound closed forms are derived from. It is not the KL
of the scalar projection ``z.R`` (that would be ``(z.(M_k - Mt_k))^2 /
(2 z' Sigma z)``); the weighted form is kept because every downstream formula
assumes it. Bernoulli and Poisson families apply the scalar KL to the
scalarized means ``z.M_k``, which is an approximation: a linear mix of
Bernoulli coordinates is not Bernoulli.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

CLAMP = 1e-6
KINDS = ("gaussian", "bernoulli", "poisson")


@dataclass(frozen=True)
class RewardFamily:
    kind: str = "gaussian"
    sigma: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown reward family {self.kind!r}")
        object.__setattr__(self, "sigma", tuple(float(s) for s in self.sigma))
        if self.kind == "gaussian" and any(not s >= 0 for s in self.sigma):
            raise InputError("gaussian sigma must be nonnegative")

    @property
    def variances(self) -> np.ndarray:
        return np.asarray(self.sigma, dtype=float) ** 2

    @property
    def is_gaussian(self) -> bool:
        return self.kind == "gaussian"


def gaussian(sigma) -> RewardFamily:
    return RewardFamily("gaussian", tuple(np.atleast_1d(sigma)))


def _clamp(kind, x):
    if kind == "bernoulli":
        if not -CLAMP <= x <= 1 + CLAMP:
            raise InputError(f"bernoulli mean {x} outside [0, 1]")
        return min(max(x, CLAMP), 1 - CLAMP)
    if kind == "poisson":
        if not x >= -CLAMP:
            raise InputError(f"poisson mean {x} is negative")
        return max(x, CLAMP)
    return x


def kl_scalar(family: RewardFamily, p: float, q: float, sigma: float = 1.0) -> float:
    """KL between the family members with means ``p`` and ``q``."""
    kind = family.kind
    if kind == "gaussian":
        if sigma <= 0:
            raise InputError("sigma must be positive")
        return (p - q) ** 2 / (2 * sigma * sigma)
    if p == q and kind == "bernoulli" and 0 <= p <= 1:
        return 0.0
    p, q = _clamp(kind, p), _clamp(kind, q)
    if p == q:
        return 0.0
    if kind == "bernoulli":
        return max(0.0, p * math.log(p / q) + (1 - p) * math.log((1 - p) / (1 - q)))
    return max(0.0, p * math.log(p / q) - p + q)


def kl_scalarized(z, m, m_tilde, family: RewardFamily) -> float:
    """Scalarized KL between arm means ``m`` and ``m_tilde`` under preference ``z``."""
    z = np.asarray(z, dtype=float)
    m = np.asarray(m, dtype=float)
    m_tilde = np.asarray(m_tilde, dtype=float)
    if not z.shape == m.shape == m_tilde.shape:
        raise InputError("z, m and m_tilde must have equal length")
    if family.is_gaussian:
        var = family.variances
        if var.shape != z.shape:
            raise InputError("gaussian family needs one sigma per objective")
        if np.any(var <= 0):
            raise InputError("gaussian sigma must be positive")
        return float(np.sum(z * z * (m - m_tilde) ** 2 / (2 * var)))
    return kl_scalar(family, float(z @ m), float(z @ m_tilde))
