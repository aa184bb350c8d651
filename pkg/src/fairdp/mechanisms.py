"""Privacy machinery: sensitivity bounds, calibrated noise, monomial
partitioning for attribute-wise budgets, coefficient perturbation and budget
composition.

Sensitivities are the closed-form worst-case bounds over neighboring datasets
(one row replaced), never data-dependent quantities.  For rows in the
nonnegative unit ball the aggregated polynomial coefficients of the logistic
quadratic differ by at most d^2/4 + d in L1 and sqrt(d^2/16 + d) in L2;
folding the fairness penalty raises the linear-term bound, giving
d^2/4 + 3d and sqrt(d^2/16 + 9d).

Noise is drawn one value per degree-1 coefficient and per ordered degree-2
cell, in a fixed order (degree-1 ascending, then degree-2 row-major), so a
seed fully determines the perturbed polynomial.  Both samplers are explicit
transforms of the generator's uniform stream, which keeps golden tests
portable across library versions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .polynomial import PolyObjective

# Monomial ids: (e,) is the degree-1 monomial w_e, (e, l) the ordered
# degree-2 monomial w_e w_l.
Monomial = tuple[int, ...]


@dataclass(frozen=True)
class PrivacySpec:
    """A privacy target: pure eps-DP via Laplace noise, or (eps, delta)-DP
    via Gaussian noise."""

    kind: str  # "laplace" or "gaussian"
    epsilon: float
    delta: float | None = None

    def __post_init__(self):
        if self.kind not in ("laplace", "gaussian"):
            raise ValueError(f"unknown mechanism kind {self.kind!r}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.kind == "laplace":
            if self.delta is not None:
                raise ValueError("delta must be absent for the Laplace mechanism")
        else:
            if self.delta is None or not 0.0 < self.delta < 1.0:
                raise ValueError(f"delta must be in (0, 1), got {self.delta}")


@dataclass(frozen=True)
class SplitBudget:
    """Per-attribute budgets: (eps_s[, delta_s]) for the designated attribute
    index, (eps_n[, delta_n]) for the rest."""

    s_index: int
    eps_s: float
    eps_n: float
    delta_s: float | None = None
    delta_n: float | None = None

    def __post_init__(self):
        if self.s_index < 0:
            raise ValueError("s_index must be nonnegative")
        if self.eps_s <= 0 or self.eps_n <= 0:
            raise ValueError("split epsilons must be positive")
        if (self.delta_s is None) != (self.delta_n is None):
            raise ValueError("delta_s and delta_n must be given together")
        for dv in (self.delta_s, self.delta_n):
            if dv is not None and not 0.0 < dv < 1.0:
                raise ValueError(f"delta must be in (0, 1), got {dv}")


def monomials(d: int) -> list[Monomial]:
    """All d + d^2 monomial ids in canonical (noise-draw) order."""
    if d < 1:
        raise ValueError("d must be >= 1")
    out: list[Monomial] = [(e,) for e in range(d)]
    out.extend((e, l) for e in range(d) for l in range(d))
    return out


@dataclass(frozen=True)
class MonomialPartition:
    """Split of the monomials by whether they contain the designated w_s."""

    d: int
    s_index: int
    phi_s: frozenset[Monomial]
    phi_n: frozenset[Monomial]


def partition_monomials(d: int, s_index: int) -> MonomialPartition:
    if not 0 <= s_index < d:
        raise ValueError(f"s_index {s_index} out of range for d={d}")
    phi_s = set()
    phi_n = set()
    for m in monomials(d):
        (phi_s if s_index in m else phi_n).add(m)
    assert len(phi_s) == 2 * d
    return MonomialPartition(d=d, s_index=s_index, phi_s=frozenset(phi_s), phi_n=frozenset(phi_n))


# --- sensitivity bounds -----------------------------------------------------

def _check_dim(d: int) -> None:
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")


def l1_sensitivity_lr(d: int) -> float:
    _check_dim(d)
    return d * d / 4.0 + d


def l1_sensitivity_fair(d: int) -> float:
    _check_dim(d)
    return d * d / 4.0 + 3.0 * d


def l2_sensitivity_lr(d: int) -> float:
    _check_dim(d)
    return math.sqrt(d * d / 16.0 + d)


def l2_sensitivity_fair(d: int) -> float:
    _check_dim(d)
    return math.sqrt(d * d / 16.0 + 9.0 * d)


# --- noise calibration and sampling -----------------------------------------

# log(sqrt(2/pi)/delta) must be positive, so delta must stay below sqrt(2/pi).
_DELTA_SUP = math.sqrt(2.0 / math.pi)


def gaussian_sigma(epsilon: float, delta: float, l2_sensitivity: float) -> float:
    """Smallest sigma the extended Gaussian mechanism certifies:

        sigma = (sqrt(2) * Delta2 / (2 eps)) * (sqrt(L) + sqrt(L + eps)),
        L = log(sqrt(2/pi) / delta).
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if delta >= _DELTA_SUP:
        raise ValueError(
            f"delta must be below sqrt(2/pi) ~ {_DELTA_SUP:.4f} for the calibration "
            f"to be defined, got {delta}"
        )
    if l2_sensitivity <= 0:
        raise ValueError(f"sensitivity must be positive, got {l2_sensitivity}")
    big_l = math.log(_DELTA_SUP / delta)
    return (
        math.sqrt(2.0) * l2_sensitivity / (2.0 * epsilon)
        * (math.sqrt(big_l) + math.sqrt(big_l + epsilon))
    )


def laplace_sample(rng: np.random.Generator, scale: float) -> float:
    """One Lap(0, scale) draw via the inverse CDF of a single uniform.

    u < 1/2 maps to scale*log(2u), u >= 1/2 to -scale*log(2(1-u)).  A zero
    uniform (probability 2^-53) is nudged to the next representable value so
    the transform stays finite.
    """
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    u = rng.random()
    if u == 0.0:
        u = 2.0 ** -53
    if u < 0.5:
        return scale * math.log(2.0 * u)
    return -scale * math.log(2.0 * (1.0 - u))


def gaussian_sample(rng: np.random.Generator, sigma: float) -> float:
    """One N(0, sigma^2) draw via Box-Muller on two uniforms.

    The sine twin is discarded so every draw consumes exactly two uniforms,
    keeping the stream position independent of call history.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    u1 = 1.0 - rng.random()  # in (0, 1], log stays finite
    u2 = rng.random()
    return sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


@dataclass(frozen=True)
class NoiseDistribution:
    """A named zero-mean noise family with its scale parameter
    (Laplace scale b, or Gaussian sigma)."""

    kind: str  # "laplace" or "gaussian"
    scale: float

    def __post_init__(self):
        if self.kind not in ("laplace", "gaussian"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.scale <= 0:
            raise ValueError(f"noise scale must be positive, got {self.scale}")

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "laplace":
            return laplace_sample(rng, self.scale)
        return gaussian_sample(rng, self.scale)


def perturb(
    poly: PolyObjective,
    noise_s: NoiseDistribution,
    noise_n: NoiseDistribution,
    partition: MonomialPartition,
    rng: np.random.Generator,
) -> PolyObjective:
    """Add one independent noise draw to every degree-1 and ordered degree-2
    coefficient; monomials in phi_s draw from noise_s, the rest from noise_n.

    Draws happen in canonical order (degree-1 ascending, then degree-2
    row-major) so a seed pins the exact output.  c0 is never perturbed: the
    algorithms only touch degrees 1 and 2, and a constant cannot move the
    minimizer.
    """
    if partition.d != poly.d:
        raise ValueError(f"partition is for d={partition.d}, polynomial has d={poly.d}")
    c1 = poly.c1.copy()
    c2 = poly.c2.copy()
    for m in monomials(poly.d):
        dist = noise_s if m in partition.phi_s else noise_n
        draw = dist.sample(rng)
        if len(m) == 1:
            c1[m[0]] += draw
        else:
            c2[m[0], m[1]] += draw
    return PolyObjective(c0=poly.c0, c1=c1, c2=c2)


# --- budget composition ------------------------------------------------------

def compose_split_epsilon(eps_s: float, eps_n: float, d: int) -> float:
    """Composite budget of attribute-wise perturbation: eps_s/d + eps_n(d-1)/d.

    Evaluated in the factored form eps_n + (eps_s - eps_n)/d, which is the
    same real-valued formula but rounds to exactly eps when the two budgets
    coincide.
    """
    if eps_s <= 0 or eps_n <= 0:
        raise ValueError("epsilons must be positive")
    _check_dim(d)
    return eps_n + (eps_s - eps_n) / d


def compose_split_delta(delta_s: float, delta_n: float) -> float:
    """Composite failure probability: 1 - (1 - delta_s)(1 - delta_n)."""
    for dv in (delta_s, delta_n):
        if not 0.0 < dv < 1.0:
            raise ValueError(f"delta must be in (0, 1), got {dv}")
    return 1.0 - (1.0 - delta_s) * (1.0 - delta_n)


def split_total_delta(delta: float) -> float:
    """Equal per-group delta whose composition gives back ``delta`` exactly:
    delta_s = delta_n = 1 - sqrt(1 - delta)."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    return 1.0 - math.sqrt(1.0 - delta)
