"""Finite product spaces, configurations, and dense measures.

The state space is a product of finite alphabets, Omega = X_1 x ... x X_n.
Configurations are stored as mixed-radix integers (site i is the i-th digit,
radix a_i, site 0 most significant), so a dense vector over Omega reshapes
directly into a tensor whose axis i indexes site i. Site subsets are machine
word bitmasks, which caps n at 63 sites.

All value types here are immutable after construction; operations are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MAX_SITES = 63
DEFAULT_MAX_STATES = 1 << 20
PROB_SUM_TOL = 1e-12
DENSITY_MASS_TOL = 1e-10
_NEG_ROUNDOFF = 1e-15


class SpaceMismatchError(ValueError):
    """Raised when operands live on different product spaces."""


class IpfConvergenceError(RuntimeError):
    """Iterative proportional fitting did not reach the requested tolerance.

    Attributes:
        deviation: worst absolute marginal mismatch at the final sweep.
        iterations: number of full sweeps performed.
    """

    def __init__(self, deviation: float, iterations: int):
        self.deviation = deviation
        self.iterations = iterations
        super().__init__(
            f"IPF did not converge after {iterations} sweeps "
            f"(max marginal deviation {deviation:.3e})"
        )


class ProductSpace:
    """A finite product space with mixed-radix configuration indexing.

    Args:
        sizes: per-site alphabet sizes (a_1, ..., a_n), every a_i >= 1.
        max_states: cap on the total number of configurations.
    """

    __slots__ = ("sizes", "n_sites", "size", "_strides", "_digits")

    def __init__(self, sizes, max_states: int = DEFAULT_MAX_STATES):
        sizes = tuple(int(a) for a in sizes)
        if len(sizes) < 1:
            raise ValueError("a product space needs at least one site")
        if len(sizes) > MAX_SITES:
            raise ValueError(f"at most {MAX_SITES} sites are supported")
        if any(a < 1 for a in sizes):
            raise ValueError("alphabet sizes must be positive")
        total = math.prod(sizes)
        if total > max_states:
            raise ValueError(
                f"state space size {total} exceeds the cap {max_states}"
            )
        self.sizes = sizes
        self.n_sites = len(sizes)
        self.size = total
        # C-order strides: site 0 is the most significant digit.
        strides = [1] * self.n_sites
        for i in range(self.n_sites - 2, -1, -1):
            strides[i] = strides[i + 1] * sizes[i + 1]
        self._strides = tuple(strides)
        self._digits = None

    # -- indexing ----------------------------------------------------------
    def encode(self, values) -> int:
        values = tuple(values)
        if len(values) != self.n_sites:
            raise ValueError("wrong number of site values")
        idx = 0
        for v, a, s in zip(values, self.sizes, self._strides):
            if not 0 <= v < a:
                raise ValueError(f"site value {v} out of range [0, {a})")
            idx += v * s
        return idx

    def decode(self, index: int) -> tuple[int, ...]:
        if not 0 <= index < self.size:
            raise ValueError(f"index {index} out of range [0, {self.size})")
        out = []
        for a, s in zip(self.sizes, self._strides):
            out.append((index // s) % a)
        return tuple(out)

    def digit_tables(self) -> tuple[np.ndarray, ...]:
        """Per-site digit arrays: digit_tables()[i][idx] = decode(idx)[i]."""
        if self._digits is None:
            idx = np.arange(self.size)
            tables = tuple(
                ((idx // s) % a).astype(np.int64)
                for a, s in zip(self.sizes, self._strides)
            )
            self._digits = tables
        return self._digits

    # -- tensor views ------------------------------------------------------
    def tensor(self, vec: np.ndarray) -> np.ndarray:
        """Reshape a dense vector over Omega so that axis i indexes site i."""
        return np.asarray(vec).reshape(self.sizes)

    def axes(self, subset: "SiteSubset") -> tuple[int, ...]:
        """Tensor axes of the sites in `subset` (axis i is site i)."""
        self._check_subset(subset)
        return subset.sites

    def subspace(self, subset: "SiteSubset") -> "ProductSpace":
        self._check_subset(subset)
        if subset.size == 0:
            raise ValueError("the empty subset has no associated subspace")
        return ProductSpace([self.sizes[i] for i in subset.sites])

    def config(self, values) -> "Configuration":
        return Configuration(self, tuple(int(v) for v in values))

    def _check_subset(self, subset: "SiteSubset") -> None:
        if subset.n_sites != self.n_sites:
            raise SpaceMismatchError(
                f"subset over {subset.n_sites} sites used with a "
                f"{self.n_sites}-site space"
            )

    def __eq__(self, other) -> bool:
        return isinstance(other, ProductSpace) and self.sizes == other.sizes

    def __hash__(self) -> int:
        return hash(self.sizes)

    def __repr__(self) -> str:
        return f"ProductSpace(sizes={self.sizes}, size={self.size})"


@dataclass(frozen=True)
class Configuration:
    """A single point of a product space, one symbol per site."""

    space: ProductSpace
    values: tuple[int, ...]

    def __post_init__(self):
        if len(self.values) != self.space.n_sites:
            raise ValueError("wrong number of site values")
        for v, a in zip(self.values, self.space.sizes):
            if not 0 <= v < a:
                raise ValueError(f"site value {v} out of range [0, {a})")

    @property
    def index(self) -> int:
        return self.space.encode(self.values)


@dataclass(frozen=True)
class SiteSubset:
    """A subset of the sites [n], stored as a bitmask (bit i = site i)."""

    n_sites: int
    mask: int

    def __post_init__(self):
        if not 1 <= self.n_sites <= MAX_SITES:
            raise ValueError(f"n_sites must be in [1, {MAX_SITES}]")
        if not 0 <= self.mask < (1 << self.n_sites):
            raise ValueError("mask has bits beyond the last site")

    @classmethod
    def empty(cls, n_sites: int) -> "SiteSubset":
        return cls(n_sites, 0)

    @classmethod
    def full(cls, n_sites: int) -> "SiteSubset":
        return cls(n_sites, (1 << n_sites) - 1)

    @classmethod
    def of(cls, n_sites: int, sites) -> "SiteSubset":
        mask = 0
        for s in sites:
            if not 0 <= s < n_sites:
                raise ValueError(f"site {s} out of range [0, {n_sites})")
            mask |= 1 << s
        return cls(n_sites, mask)

    @property
    def complement(self) -> "SiteSubset":
        return SiteSubset(self.n_sites, self.mask ^ ((1 << self.n_sites) - 1))

    @property
    def sites(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.n_sites) if self.mask >> i & 1)

    @property
    def size(self) -> int:
        return bin(self.mask).count("1")

    def __contains__(self, site: int) -> bool:
        return 0 <= site < self.n_sites and bool(self.mask >> site & 1)

    def __iter__(self):
        return iter(self.sites)


# ---------------------------------------------------------------------------
# Dense measures and densities
# ---------------------------------------------------------------------------

def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


class Distribution:
    """A dense probability vector over a product space."""

    __slots__ = ("space", "weights")

    def __init__(self, space: ProductSpace, weights):
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if weights.shape != (space.size,):
            raise ValueError(
                f"expected {space.size} weights, got {weights.shape}"
            )
        if weights.min() < -_NEG_ROUNDOFF:
            raise ValueError("negative probability weight")
        weights = np.clip(weights, 0.0, None)
        total = float(weights.sum())
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        self.space = space
        self.weights = _freeze(weights)

    @classmethod
    def uniform(cls, space: ProductSpace) -> "Distribution":
        return cls(space, np.full(space.size, 1.0 / space.size))

    @classmethod
    def point_mass(cls, space: ProductSpace, index: int) -> "Distribution":
        w = np.zeros(space.size)
        w[index] = 1.0
        return cls(space, w)

    @classmethod
    def from_unnormalized(cls, space: ProductSpace, weights) -> "Distribution":
        weights = np.asarray(weights, dtype=float)
        total = weights.sum()
        if not total > 0:
            raise ValueError("cannot normalize a zero vector")
        return cls(space, weights / total)

    def tensor(self) -> np.ndarray:
        return self.space.tensor(self.weights)

    def marginal(self, subset: SiteSubset) -> "Distribution":
        """Marginal distribution on the subspace indexed by `subset`."""
        self.space._check_subset(subset)
        if subset.size == 0:
            raise ValueError("marginal on the empty subset is trivial")
        axes_out = subset.complement.sites
        marg = self.tensor().sum(axis=axes_out) if axes_out else self.tensor()
        return Distribution(self.space.subspace(subset), marg.reshape(-1))

    def site_marginal(self, site: int) -> np.ndarray:
        sub = SiteSubset.of(self.space.n_sites, [site])
        return self.marginal(sub).weights

    def is_full_support(self) -> bool:
        return bool(self.weights.min() > 0.0)


class ProductMeasure:
    """A product probability measure, one factor per site.

    Factors may contain zeros in general; strict positivity is required (and
    checked by callers) when the measure serves as a reference measure for a
    reversible quadratic system.
    """

    __slots__ = ("space", "factors", "_vector")

    def __init__(self, space: ProductSpace, factors):
        factors = [np.asarray(f, dtype=float).reshape(-1) for f in factors]
        if len(factors) != space.n_sites:
            raise ValueError("one factor per site is required")
        for f, a in zip(factors, space.sizes):
            if f.shape != (a,):
                raise ValueError("factor length does not match alphabet size")
            if f.min() < -_NEG_ROUNDOFF:
                raise ValueError("negative entry in a factor")
            if abs(f.sum() - 1.0) > PROB_SUM_TOL:
                raise ValueError("each factor must sum to 1")
        self.space = space
        self.factors = tuple(_freeze(np.clip(f, 0.0, None)) for f in factors)
        self._vector = None

    @classmethod
    def uniform(cls, space: ProductSpace) -> "ProductMeasure":
        return cls(space, [np.full(a, 1.0 / a) for a in space.sizes])

    @classmethod
    def iid(cls, base, n_sites: int) -> "ProductMeasure":
        base = np.asarray(base, dtype=float)
        space = ProductSpace([base.size] * n_sites)
        return cls(space, [base] * n_sites)

    def vector(self) -> np.ndarray:
        if self._vector is None:
            t = self.factor_tensor(SiteSubset.full(self.space.n_sites))
            self._vector = _freeze(np.broadcast_to(t, self.space.sizes).reshape(-1))
        return self._vector

    def tensor(self) -> np.ndarray:
        return self.space.tensor(self.vector())

    def factor_tensor(self, subset: SiteSubset) -> np.ndarray:
        """Broadcastable tensor of prod_{i in subset} mu_i(sigma_i)."""
        self.space._check_subset(subset)
        return self.factor_tensor_from_axes(subset.sites)

    def factor_tensor_from_axes(self, sites) -> np.ndarray:
        shape = [1] * self.space.n_sites
        out = np.ones(shape)
        for i in sites:
            sh = [1] * self.space.n_sites
            sh[i] = self.space.sizes[i]
            out = out * self.factors[i].reshape(sh)
        return out

    def marginal(self, subset: SiteSubset) -> "ProductMeasure":
        sub = self.space.subspace(subset)
        return ProductMeasure(sub, [self.factors[i] for i in subset.sites])

    def is_positive(self) -> bool:
        return all(f.min() > 0.0 for f in self.factors)

    def as_distribution(self) -> Distribution:
        return Distribution(self.space, self.vector())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ProductMeasure)
            and self.space == other.space
            and all(np.array_equal(a, b) for a, b in zip(self.factors, other.factors))
        )

    def __hash__(self):
        return hash((self.space, tuple(f.tobytes() for f in self.factors)))


class Density:
    """A nonnegative function f on Omega with mu[f] = 1, relative to mu."""

    __slots__ = ("measure", "values")

    def __init__(self, measure: ProductMeasure, values):
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.shape != (measure.space.size,):
            raise ValueError("density length does not match the space")
        if values.min() < -_NEG_ROUNDOFF:
            raise ValueError("negative density value")
        values = np.clip(values, 0.0, None)
        mass = float(values @ measure.vector())
        if abs(mass - 1.0) > DENSITY_MASS_TOL:
            raise ValueError(f"mu[f] = {mass!r}, not 1")
        self.measure = measure
        self.values = _freeze(values)

    @property
    def space(self) -> ProductSpace:
        return self.measure.space

    @classmethod
    def constant_one(cls, measure: ProductMeasure) -> "Density":
        return cls(measure, np.ones(measure.space.size))

    @classmethod
    def from_distribution(cls, p: Distribution, measure: ProductMeasure) -> "Density":
        if p.space != measure.space:
            raise SpaceMismatchError("distribution and measure spaces differ")
        mu = measure.vector()
        if np.any((p.weights > 0) & (mu == 0)):
            raise ValueError("distribution puts mass outside supp(mu)")
        vals = np.divide(p.weights, mu, out=np.zeros_like(mu), where=mu > 0)
        return cls(measure, vals)

    def distribution(self) -> Distribution:
        return Distribution.from_unnormalized(
            self.space, self.values * self.measure.vector()
        )

    def tensor(self) -> np.ndarray:
        return self.space.tensor(self.values)

    def is_positive(self) -> bool:
        return bool(self.values.min() > 0.0)


# ---------------------------------------------------------------------------
# Core operations
# ---------------------------------------------------------------------------

def recombine(
    sigma: Configuration, eta: Configuration, subset: SiteSubset
) -> tuple[Configuration, Configuration]:
    """Swap the subset-indexed coordinates of a pair of configurations.

    Returns the pair whose first element takes `eta` on the subset and
    `sigma` elsewhere, and whose second element takes the leftovers. The
    operation is an involution on pairs.
    """
    if sigma.space != eta.space:
        raise SpaceMismatchError("configurations live on different spaces")
    sigma.space._check_subset(subset)
    first = tuple(
        eta.values[i] if i in subset else sigma.values[i]
        for i in range(sigma.space.n_sites)
    )
    second = tuple(
        sigma.values[i] if i in subset else eta.values[i]
        for i in range(sigma.space.n_sites)
    )
    return sigma.space.config(first), sigma.space.config(second)


def recombine_indices(
    space: ProductSpace, i: int, j: int, mask: int
) -> tuple[int, int]:
    """Index-level recombination: digits of j on the mask, of i elsewhere."""
    a = 0
    b = 0
    for site, (sz, st) in enumerate(zip(space.sizes, space._strides)):
        di = (i // st) % sz
        dj = (j // st) % sz
        if mask >> site & 1:
            a += dj * st
            b += di * st
        else:
            a += di * st
            b += dj * st
    return a, b


def marginal_density(f: Density, subset: SiteSubset) -> Density:
    """Marginal density f_A on the subspace of `subset`, relative to mu_A.

    f_A(sigma_A) averages f over the complementary coordinates under mu, so
    it is the density of the marginal of f*mu. The empty subset is handled by
    callers via the convention f_empty = 1.
    """
    space = f.space
    space._check_subset(subset)
    if subset.size == 0:
        raise ValueError("use the convention f_empty = 1 for the empty subset")
    comp = subset.complement
    t = f.tensor() * f.measure.factor_tensor(comp)
    axes_out = comp.sites
    marg = t.sum(axis=axes_out) if axes_out else t
    return Density(f.measure.marginal(subset), marg.reshape(-1))


def lift_density(f_sub: Density, subset: SiteSubset, measure: ProductMeasure) -> np.ndarray:
    """Lift a marginal density on `subset` back to a vector on the full space,
    constant on the complementary coordinates."""
    measure.space._check_subset(subset)
    shape = [1] * measure.space.n_sites
    for i in subset.sites:
        shape[i] = measure.space.sizes[i]
    t = f_sub.values.reshape(shape)
    return np.broadcast_to(t, measure.space.sizes).reshape(-1)


def product_of_marginals(p: Distribution, subset: SiteSubset) -> Distribution:
    """The product p_A (x) p_{A^c} of the two complementary marginals of p."""
    p.space._check_subset(subset)
    t = p.tensor()
    a_axes = subset.sites
    c_axes = subset.complement.sites
    pa = t.sum(axis=c_axes, keepdims=True) if c_axes else t
    pc = t.sum(axis=a_axes, keepdims=True) if a_axes else t
    if not a_axes or not c_axes:
        return Distribution(p.space, p.weights)
    return Distribution(p.space, (pa * pc).reshape(-1))


def ipf_project(
    g: Density,
    targets,
    tol: float = 1e-12,
    max_iter: int = 500,
) -> Density:
    """Project a strictly positive density onto prescribed single-site marginals.

    Cyclically rescales site by site until the single-site marginals of the
    measure f*mu match `targets` (one strictly positive probability vector per
    site) within `tol` in the sup norm. The result is renormalized so that
    mu[f] = 1.

    Raises:
        IpfConvergenceError: if the deviation is still above `tol` after
            `max_iter` sweeps.
    """
    space = g.space
    if not g.is_positive():
        raise ValueError("IPF requires a strictly positive density")
    targets = [np.asarray(t, dtype=float).reshape(-1) for t in targets]
    if len(targets) != space.n_sites:
        raise ValueError("one target per site is required")
    for t, a in zip(targets, space.sizes):
        if t.shape != (a,):
            raise ValueError("target length does not match alphabet size")
        if t.min() <= 0:
            raise ValueError("targets must be strictly positive")
        if abs(t.sum() - 1.0) > PROB_SUM_TOL:
            raise ValueError("each target must sum to 1")

    q = g.tensor() * f_mu_tensor(g.measure)
    all_axes = tuple(range(space.n_sites))
    deviation = math.inf
    for sweep in range(1, max_iter + 1):
        for i in range(space.n_sites):
            other = tuple(ax for ax in all_axes if ax != i)
            m = q.sum(axis=other, keepdims=True)
            sh = [1] * space.n_sites
            sh[i] = space.sizes[i]
            q = q * (targets[i].reshape(sh) / m)
        p = q / q.sum()
        deviation = 0.0
        for i in range(space.n_sites):
            other = tuple(ax for ax in all_axes if ax != i)
            m = p.sum(axis=other)
            deviation = max(deviation, float(np.abs(m - targets[i]).max()))
        if deviation <= tol:
            vals = (q / q.sum()).reshape(-1) / g.measure.vector()
            return Density(g.measure, vals / (vals @ g.measure.vector()))
    raise IpfConvergenceError(deviation, max_iter)


def f_mu_tensor(measure: ProductMeasure) -> np.ndarray:
    """Full-shape tensor of the product measure weights."""
    return measure.tensor()


def batch_ipf(
    raw: np.ndarray,
    targets: list[np.ndarray],
    tol: float = 1e-12,
    max_iter: int = 500,
) -> np.ndarray:
    """Distribution-level IPF on a batch of positive tensors.

    `raw` has shape (m, a_0, ..., a_{n-1}) with axis i+1 indexing site i;
    `targets` holds one strictly positive probability vector per site. The
    returned batch is normalized per sample and has every single-site
    marginal within `tol` of its target in the sup norm.
    """
    n = raw.ndim - 1
    q = raw.astype(float)
    targets = [np.asarray(t, float).reshape(-1) for t in targets]
    all_axes = tuple(range(1, n + 1))
    dev = math.inf
    for _ in range(max_iter):
        for i in range(n):
            other = tuple(ax for ax in all_axes if ax != i + 1)
            marg = q.sum(axis=other, keepdims=True)
            sh = [1] * (n + 1)
            sh[i + 1] = targets[i].size
            q = q * (targets[i].reshape(sh) / marg)
        q = q / q.sum(axis=all_axes, keepdims=True)
        dev = 0.0
        for i in range(n):
            other = tuple(ax for ax in all_axes if ax != i + 1)
            marg = q.sum(axis=other)
            dev = max(dev, float(np.abs(marg - targets[i][None, :]).max()))
        if dev <= tol:
            return q
    raise IpfConvergenceError(dev, max_iter)


def random_density(measure: ProductMeasure, rng: np.random.Generator) -> Density:
    """A strictly positive random density (normalized exponential weights)."""
    w = rng.exponential(size=measure.space.size) + 1e-6
    vals = w / (w @ measure.vector())
    return Density(measure, vals)


def random_product_measure(
    space: ProductSpace, rng: np.random.Generator, floor: float = 0.05
) -> ProductMeasure:
    """A random strictly positive product measure on `space`."""
    factors = []
    for a in space.sizes:
        f = rng.exponential(size=a) + floor
        factors.append(f / f.sum())
    return ProductMeasure(space, factors)
