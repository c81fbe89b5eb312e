"""Entropy functionals: Ent, relative entropy, conditional decomposition,
and the bridge between Ent of marginal densities and Shannon entropy.

Scalar entropies are accumulated with `math.fsum`; the convention
0 * log(0) = 0 applies throughout.
"""

from __future__ import annotations

import math

import numpy as np

from .spaces import (
    Density,
    Distribution,
    SiteSubset,
    SpaceMismatchError,
    marginal_density,
)


def xlogx(values: np.ndarray) -> np.ndarray:
    """Elementwise x*log(x) with 0*log(0) = 0."""
    values = np.asarray(values, dtype=float)
    out = np.zeros_like(values)
    pos = values > 0
    out[pos] = values[pos] * np.log(values[pos])
    return out


def ent(f: Density) -> float:
    """Ent(f) = mu[f log f] - mu[f] log mu[f], nonnegative, 0 iff f constant."""
    mu = f.measure.vector()
    terms = mu * xlogx(f.values)
    mean = math.fsum(mu * f.values)
    value = math.fsum(terms) - mean * math.log(mean)
    return max(value, 0.0)


def relative_entropy(p: Distribution, ref: Distribution) -> float:
    """H(p | ref) = sum p log(p / ref); +inf when supp(p) is not in supp(ref)."""
    if p.space != ref.space:
        raise SpaceMismatchError("distributions live on different spaces")
    return relative_entropy_vec(p.weights, ref.weights)


def relative_entropy_vec(p: np.ndarray, ref: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if np.any((p > 0) & (ref == 0)):
        return math.inf
    pos = p > 0
    terms = p[pos] * (np.log(p[pos]) - np.log(ref[pos]))
    return max(math.fsum(terms), 0.0)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def shannon_entropy(weights: np.ndarray) -> float:
    """H(Z) = -sum p log p for the distribution with the given weights."""
    return -math.fsum(xlogx(np.asarray(weights, dtype=float)))


def conditional_decomposition(
    f: Density, subset: SiteSubset
) -> tuple[float, float]:
    """Split Ent(f) into (Ent(f_A), mu[Ent(f | A)]) for a product measure.

    Both parts are computed directly (not as differences), so their sum
    recovering Ent(f) is a nontrivial identity check for callers.
    """
    space = f.space
    space._check_subset(subset)
    if subset.size == 0:
        return 0.0, ent(f)
    if subset.size == space.n_sites:
        return ent(f), 0.0
    f_a = marginal_density(f, subset)
    part_marginal = ent(f_a)

    comp = subset.complement
    t = f.tensor()
    mu_c = f.measure.factor_tensor(comp)
    mu_a = f.measure.factor_tensor(subset)
    # Ent(f | A)(sigma_A) = sum_{A^c} mu_{A^c} f log(f / f_A)
    fa_lift = (t * mu_c).sum(axis=comp.sites, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_ratio = np.where(t > 0, np.log(t) - np.log(fa_lift), 0.0)
    cond_ent = (mu_c * t * log_ratio).sum(axis=comp.sites, keepdims=True)
    part_conditional = math.fsum((mu_a * cond_ent).reshape(-1))
    return part_marginal, max(part_conditional, 0.0)


def shannon_bridge(f: Density, subset: SiteSubset) -> tuple[float, float]:
    """Both sides of the identity

        sum_{i in A} H(Z_i) - H(Z_A)  =  Ent(f_A) - sum_{i in A} Ent(f_i),

    where Z is distributed as f*mu. The left side is computed from Shannon
    entropies of the marginals of f*mu, the right side from Ent of marginal
    densities; the two computations share no code path.
    """
    space = f.space
    space._check_subset(subset)
    if subset.size == 0:
        return 0.0, 0.0
    p = f.distribution()

    # Shannon side.
    h_joint = shannon_entropy(p.marginal(subset).weights)
    h_sites = math.fsum(
        shannon_entropy(p.site_marginal(i)) for i in subset.sites
    )
    shannon_side = h_sites - h_joint

    # Ent side.
    ent_joint = ent(marginal_density(f, subset))
    ent_sites = math.fsum(
        ent(marginal_density(f, SiteSubset.of(space.n_sites, [i])))
        for i in subset.sites
    )
    ent_side = ent_joint - ent_sites
    return shannon_side, ent_side
