"""Crossover laws: distributions over site subsets and their moments.

Four named models plus explicit subset lists. Sites are 0-based internally;
the one-point model's prefix sets are J_0 = {} and J_i = {0, ..., i-1}.

The mixed moment M(u, v) = sum_A nu(A) u^{|A|} v^{n-|A|} has a closed form
for every named model and is evaluated generically, so it can be driven with
floats or exact `fractions.Fraction` values.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .spaces import SiteSubset

NAMED_MODELS = ("single_site", "one_point", "uniform", "bernoulli")
DEFAULT_ENUMERATION_CAP = 20


class EnumerationCapError(ValueError):
    """Exact support enumeration would exceed the cap; sample subsets instead."""


@dataclass(frozen=True)
class CrossoverLaw:
    """A probability distribution nu over subsets of the n sites.

    Attributes:
        model: one of "single_site", "one_point", "uniform", "bernoulli",
            "explicit".
        n_sites: number of sites.
        q: inclusion probability for the bernoulli model, in [0, 1/2].
        items: (mask, weight) pairs for the explicit model.
    """

    model: str
    n_sites: int
    q: float | None = None
    items: tuple[tuple[int, float], ...] | None = None

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError("n_sites must be >= 1")
        if self.model == "bernoulli":
            if self.q is None:
                raise ValueError("bernoulli model requires q")
            if not 0.0 <= self.q <= 0.5:
                raise ValueError(
                    f"bernoulli q must lie in [0, 1/2], got {self.q}"
                )
        elif self.model == "explicit":
            if not self.items:
                raise ValueError("explicit model requires support items")
            total = 0.0
            for mask, w in self.items:
                if not 0 <= mask < (1 << self.n_sites):
                    raise ValueError("support mask out of range")
                if w < 0:
                    raise ValueError("support weights must be nonnegative")
                total += w
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"support weights sum to {total!r}, not 1")
        elif self.model not in NAMED_MODELS:
            raise ValueError(f"unknown crossover model {self.model!r}")

    def label(self) -> str:
        if self.model == "bernoulli":
            return f"bernoulli(q={self.q:g})"
        return self.model


def single_site(n_sites: int) -> CrossoverLaw:
    return CrossoverLaw("single_site", n_sites)


def one_point(n_sites: int) -> CrossoverLaw:
    return CrossoverLaw("one_point", n_sites)


def uniform(n_sites: int) -> CrossoverLaw:
    return CrossoverLaw("uniform", n_sites)


def bernoulli(n_sites: int, q: float) -> CrossoverLaw:
    return CrossoverLaw("bernoulli", n_sites, q=q)


def explicit(n_sites: int, items) -> CrossoverLaw:
    norm = []
    for subset, w in items:
        mask = subset.mask if isinstance(subset, SiteSubset) else int(subset)
        norm.append((mask, float(w)))
    return CrossoverLaw("explicit", n_sites, items=tuple(norm))


def law_from_config(cfg: dict) -> CrossoverLaw:
    """Build a law from a JSON-style mapping like {"model": ..., "n": ...}."""
    model = cfg["model"]
    n = int(cfg["n"])
    if model == "bernoulli":
        return bernoulli(n, float(cfg["q"]))
    if model == "explicit":
        return explicit(n, [(int(m), float(w)) for m, w in cfg["support"]])
    return CrossoverLaw(model, n)


# ---------------------------------------------------------------------------
# Support enumeration and sampling
# ---------------------------------------------------------------------------

def support_masks(
    law: CrossoverLaw, cap: int = DEFAULT_ENUMERATION_CAP
) -> list[tuple[int, float]]:
    """Exact support of nu as (bitmask, weight) pairs. Weights sum to 1."""
    n = law.n_sites
    if law.model == "single_site":
        return [(1 << i, 1.0 / n) for i in range(n)]
    if law.model == "one_point":
        w = 1.0 / (n + 1)
        return [((1 << i) - 1, w) for i in range(n + 1)]
    if law.model == "uniform":
        if n > cap:
            raise EnumerationCapError(
                f"2^{n} subsets exceed the enumeration cap; use sample_subset"
            )
        w = 0.5 ** n
        return [(m, w) for m in range(1 << n)]
    if law.model == "bernoulli":
        if n > cap:
            raise EnumerationCapError(
                f"2^{n} subsets exceed the enumeration cap; use sample_subset"
            )
        q = law.q
        out = []
        for m in range(1 << n):
            k = bin(m).count("1")
            out.append((m, q**k * (1.0 - q) ** (n - k)))
        return out
    return list(law.items)


def enumerate_support(
    law: CrossoverLaw, cap: int = DEFAULT_ENUMERATION_CAP
) -> list[tuple[SiteSubset, float]]:
    return [
        (SiteSubset(law.n_sites, m), w) for m, w in support_masks(law, cap)
    ]


def sample_subset(law: CrossoverLaw, rng: np.random.Generator) -> SiteSubset:
    """Draw one subset from nu using the caller's generator."""
    n = law.n_sites
    if law.model == "single_site":
        return SiteSubset(n, 1 << int(rng.integers(n)))
    if law.model == "one_point":
        return SiteSubset(n, (1 << int(rng.integers(n + 1))) - 1)
    if law.model == "uniform":
        bits = rng.integers(0, 2, size=n)
        return SiteSubset(n, int(sum(b << i for i, b in enumerate(bits))))
    if law.model == "bernoulli":
        bits = rng.random(n) < law.q
        return SiteSubset(n, int(sum(int(b) << i for i, b in enumerate(bits))))
    masks = [m for m, _ in law.items]
    weights = np.array([w for _, w in law.items])
    pick = rng.choice(len(masks), p=weights / weights.sum())
    return SiteSubset(n, masks[int(pick)])


# ---------------------------------------------------------------------------
# Subset-size moments
# ---------------------------------------------------------------------------

def mixed_moment(law: CrossoverLaw, u, v):
    """M(u, v) = sum_A nu(A) u^{|A|} v^{n - |A|}, via closed forms.

    Accepts floats or Fractions (for the bernoulli model, q is lifted to an
    exact Fraction when u and v are Fractions, so the result stays exact).
    """
    n = law.n_sites
    exact = isinstance(u, Fraction) or isinstance(v, Fraction)
    if law.model == "single_site":
        return u * v ** (n - 1)
    if law.model == "one_point":
        total = sum(u**i * v ** (n - i) for i in range(n + 1))
        return total * _ratio(1, n + 1, exact)
    if law.model == "uniform":
        return ((u + v) * _ratio(1, 2, exact)) ** n
    if law.model == "bernoulli":
        q = Fraction(law.q) if exact else law.q
        return (q * u + (1 - q) * v) ** n
    total = 0.0
    for mask, w in law.items:
        k = bin(mask).count("1")
        total += w * u**k * v ** (n - k)
    return total


def _ratio(num: int, den: int, exact: bool):
    return Fraction(num, den) if exact else num / den


def delta_nu(law: CrossoverLaw) -> float:
    """Delta_nu = sum_A nu(A) (2^{-|A|} + 2^{-|A^c|}) = M(1/2, 1) + M(1, 1/2)."""
    h = Fraction(1, 2)
    return float(mixed_moment(law, h, Fraction(1)) + mixed_moment(law, Fraction(1), h))


def is_nondegenerate(law: CrossoverLaw) -> bool:
    """True when, for every pair of distinct sites, some subset with positive
    probability separates them (contains one but not the other)."""
    n = law.n_sites
    if n == 1:
        return True
    if law.model in ("single_site", "one_point", "uniform"):
        return True
    if law.model == "bernoulli":
        return law.q > 0.0
    for i in range(n):
        for j in range(i + 1, n):
            if not any(
                w > 0 and (mask >> i & 1) != (mask >> j & 1)
                for mask, w in law.items
            ):
                return False
    return True
