"""Entropy inequalities on product spaces: subadditivity and its Shearer-type
refinements, submodularity of marginal entropies, the decay constants of the
four crossover models with their saturating witnesses, and the sharp test
density with a closed-form large-n evaluation.

Exact rational arithmetic (`fractions.Fraction`) is used wherever the
combinatorial identities are exact: the refinement coefficients, and every
coefficient of the sharp-test entropy and entropy-production formulas. Only
the final logarithm factors are evaluated in floating point, which avoids
the catastrophic cancellation hiding in coefficients of size ~4^{-n}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import crossover
from .crossover import CrossoverLaw
from .dynamics import equilibrium_of, psi_step
from .entropy import ent, relative_entropy_vec, shannon_entropy
from .rqs import conserved_basis_single_site, recombination_entropy_production
from .spaces import (
    Density,
    Distribution,
    ProductMeasure,
    ProductSpace,
    SiteSubset,
    batch_ipf,
)

SLACK_TOL = 1e-10


# ---------------------------------------------------------------------------
# Marginal entropy tables
# ---------------------------------------------------------------------------

def ent_marginal_table(f: Density) -> np.ndarray:
    """Ent(f_A) for every subset mask A (index = bitmask, entry 0 is 0).

    Computed as the relative entropy of the marginal of f*mu against mu_A,
    which equals Ent of the marginal density.
    """
    space = f.space
    n = space.n_sites
    p = f.tensor() * f.measure.tensor()
    log_factors = [
        np.log(np.where(fac > 0, fac, 1.0)) for fac in f.measure.factors
    ]
    out = np.zeros(1 << n)
    for mask in range(1, 1 << n):
        a_sites = [i for i in range(n) if mask >> i & 1]
        c_axes = tuple(i for i in range(n) if not mask >> i & 1)
        marg = p.sum(axis=c_axes) if c_axes else p
        logmu = np.zeros(marg.shape)
        for pos, i in enumerate(a_sites):
            sh = [1] * len(a_sites)
            sh[pos] = space.sizes[i]
            logmu = logmu + log_factors[i].reshape(sh)
        pos_mask = marg > 0
        terms = marg[pos_mask] * (np.log(marg[pos_mask]) - logmu[pos_mask])
        out[mask] = max(math.fsum(terms), 0.0)
    return out


# ---------------------------------------------------------------------------
# Submodularity and Shearer bounds
# ---------------------------------------------------------------------------

@dataclass
class SubmodularReport:
    ok: bool
    min_slack: float
    worst_pair: tuple[int, int]


def check_submodular(f: Density, table: np.ndarray | None = None) -> SubmodularReport:
    """Verify h(A) + h(B) >= h(A&B) + h(A|B) with h(A) = -Ent(f_A), over all
    subset pairs."""
    if table is None:
        table = ent_marginal_table(f)
    n_masks = table.size
    masks = np.arange(n_masks)
    a = masks[:, None]
    b = masks[None, :]
    # slack = h(A)+h(B)-h(A&B)-h(A|B) with h = -Ent
    slack = table[a & b] + table[a | b] - table[a] - table[b]
    idx = int(np.argmin(slack))
    worst = (idx // n_masks, idx % n_masks)
    m = float(slack.min())
    return SubmodularReport(m >= -SLACK_TOL, m, worst)


@dataclass
class ShearerReport:
    lhs: float
    rhs: float
    slack: float
    n_plus: int
    n_minus: int


def shearer_bound(f: Density, cover: list[SiteSubset]) -> ShearerReport:
    """Both sides of sum_{A in cover} Ent(f_A) <= n_plus(cover) Ent(f)."""
    table = ent_marginal_table(f)
    n = f.space.n_sites
    degrees = [sum(1 for sub in cover if site in sub) for site in range(n)]
    n_plus = max(degrees) if degrees else 0
    n_minus = min(degrees) if degrees else 0
    lhs = math.fsum(table[sub.mask] for sub in cover)
    rhs = n_plus * float(table[-1])
    return ShearerReport(lhs, rhs, rhs - lhs, n_plus, n_minus)


@dataclass(frozen=True)
class ShearerCoefficients:
    """Exact coefficients of the iterated degree-reduction bound.

    c[k-1], d[k-1] hold the weights of the full set and of the singleton sum
    when the size-k level is reduced: phi_k >= c(k,n) phi_n + d(k,n) phi_1.
    """

    n: int
    c: tuple[Fraction, ...]
    d: tuple[Fraction, ...]

    def sum_c(self) -> Fraction:
        return sum(self.c, Fraction(0))

    def sum_d(self) -> Fraction:
        return sum(self.d, Fraction(0))

    def weighted_sum_c(self, gamma: Fraction) -> Fraction:
        return sum(
            (gamma ** k * ck for k, ck in enumerate(self.c, start=1)),
            Fraction(0),
        )

    def weighted_sum_d(self, gamma: Fraction) -> Fraction:
        return sum(
            (gamma ** k * dk for k, dk in enumerate(self.d, start=1)),
            Fraction(0),
        )


def shearer_coefficients(n: int) -> ShearerCoefficients:
    """Exact c(k, n), d(k, n) for k = 1..n via the level recursion.

    The boundary values are c(1,n) = 0, c(n,n) = 1, d(1,n) = 1, d(n,n) = 0,
    and for 2 <= k <= n-1:

        c(k,n) = C(n, k-1)/k + (n-k)/k * c(k-1,n)
        d(k,n) = (n-k)/k * d(k-1,n)
    """
    if not 2 <= n <= 40:
        raise ValueError("n must lie in [2, 40]")
    c = [Fraction(0)]
    d = [Fraction(1)]
    for k in range(2, n):
        c.append(Fraction(math.comb(n, k - 1), k) + Fraction(n - k, k) * c[-1])
        d.append(Fraction(n - k, k) * d[-1])
    if n >= 2:
        c.append(Fraction(1))
        d.append(Fraction(0))
    return ShearerCoefficients(n, tuple(c), tuple(d))


def improved_full_coefficient(n: int) -> Fraction:
    return Fraction((n - 2) * 2 ** (n - 1) + 1, n - 1)


def improved_singleton_coefficient(n: int) -> Fraction:
    return Fraction(2 ** (n - 1) - 1, n - 1)


def weighted_full_coefficient(n: int, gamma: Fraction) -> Fraction:
    return ((1 + gamma) ** (n - 1) * (gamma * (n - 1) - 1) + 1) / Fraction(n - 1)


def weighted_singleton_coefficient(n: int, gamma: Fraction) -> Fraction:
    return ((1 + gamma) ** (n - 1) - 1) / Fraction(n - 1)


def improved_shearer_check(f: Density, table: np.ndarray | None = None) -> float:
    """Slack of the refined subset-sum bound with h(A) = -Ent(f_A):

        sum_A h(A) - [C_full h([n]) + C_single sum_i h({i})]  >=  0.
    """
    if table is None:
        table = ent_marginal_table(f)
    n = f.space.n_sites
    h = -table
    lhs = math.fsum(h)
    rhs = float(improved_full_coefficient(n)) * h[-1] + float(
        improved_singleton_coefficient(n)
    ) * math.fsum(h[1 << i] for i in range(n))
    return lhs - rhs


def weighted_shearer_check(
    f: Density, gamma: float, table: np.ndarray | None = None
) -> float:
    """Slack of the gamma-weighted refinement, reducing to the unweighted one
    at gamma = 1."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if table is None:
        table = ent_marginal_table(f)
    n = f.space.n_sites
    h = -table
    sizes = np.array([bin(m).count("1") for m in range(1 << n)])
    lhs = math.fsum(gamma ** k * hv for k, hv in zip(sizes, h))
    g = Fraction(gamma)
    rhs = float(weighted_full_coefficient(n, g)) * h[-1] + float(
        weighted_singleton_coefficient(n, g)
    ) * math.fsum(h[1 << i] for i in range(n))
    return lhs - rhs


def uniform_naive_kappa(n: int) -> float:
    """The constant obtained from plain subset-sum bounds for the uniform
    model, exponentially worse than the refined value."""
    return 2.0 ** (1 - n)


# ---------------------------------------------------------------------------
# The decay constants kappa
# ---------------------------------------------------------------------------

def kappa_theoretical(law: CrossoverLaw) -> float:
    """The sharp constant of the generalized subadditivity inequality for the
    four named models."""
    n = law.n_sites
    if n < 2:
        raise ValueError("kappa requires at least two sites")
    if law.model == "single_site":
        return 1.0 / (n - 1)
    if law.model == "one_point":
        return 1.0 / (n + 1)
    if law.model == "uniform":
        return (1.0 - 2.0 ** (-n + 1)) / (n - 1)
    if law.model == "bernoulli":
        q = law.q
        return (1.0 - (1.0 - q) ** n - q**n) / (n - 1)
    raise ValueError("no closed form for explicit laws; use kappa_scan")


def bernoulli_kappa_via_weighted(q: float, n: int) -> float:
    """1 - Delta(q, n) assembled from the two gamma-weighted closed forms
    (gamma = q/(1-q) and its reciprocal), as an independent route to the
    bernoulli kappa."""
    if not 0 < q <= 0.5:
        raise ValueError("q must lie in (0, 1/2]")
    qf = Fraction(q)
    g1 = qf / (1 - qf)
    g2 = 1 / g1
    bound = (1 - qf) ** n * weighted_full_coefficient(n, g1) + qf**n * weighted_full_coefficient(n, g2)
    return float(1 - bound)


def kappa_lhs(f: Density, law: CrossoverLaw, table: np.ndarray | None = None) -> float:
    """sum_A nu(A) (Ent(f_A) + Ent(f_{A^c}))."""
    if table is None:
        table = ent_marginal_table(f)
    full = (1 << law.n_sites) - 1
    return math.fsum(
        w * (table[mask] + table[mask ^ full])
        for mask, w in crossover.support_masks(law)
    )


@dataclass
class KappaScanReport:
    law: CrossoverLaw
    max_ratio: float
    witness_label: str
    ratios: np.ndarray
    labels: list[str]
    n_skipped: int

    def bound(self) -> float:
        return 1.0 - kappa_theoretical(self.law)


def kappa_scan(
    law: CrossoverLaw,
    measure: ProductMeasure,
    samples: int,
    seed: int,
    include_witnesses: bool = True,
    ipf_tol: float = 1e-12,
) -> KappaScanReport:
    """Max of sum_A nu(A)(Ent f_A + Ent f_{A^c}) / Ent(f) over random
    densities with unit single-site marginals, plus structured witnesses.

    Random candidates are positive tensors pushed into the constraint set by
    iterative proportional fitting against the measure's own marginals. The
    identical-copies witness (which attains the bound) and a few
    near-equilibrium perturbations are appended when enabled.
    """
    rng = np.random.default_rng(seed)
    space = measure.space
    n = space.n_sites
    raw = rng.exponential(size=(samples,) + space.sizes) + 1e-3
    p = batch_ipf(raw, list(measure.factors), ipf_tol, 500)
    tables = _batch_marginal_rel_ents(p, list(measure.factors))
    support = crossover.support_masks(law)
    full = (1 << n) - 1
    lhs = np.zeros(samples)
    for mask, w in support:
        lhs += w * (tables[:, mask] + tables[:, mask ^ full])
    ents = tables[:, full]
    keep = ents > 1e-12
    ratios = list(lhs[keep] / ents[keep])
    labels = [f"ipf-{i}" for i in np.nonzero(keep)[0]]
    n_skipped = int(samples - keep.sum())

    if include_witnesses:
        if len(set(space.sizes)) == 1:
            base = np.full(space.sizes[0], 1.0 / space.sizes[0])
            fw = identical_copies_density(n, base)
            ratios.append(kappa_lhs(fw, law) / ent(fw))
            labels.append("identical-copies")
        basis = conserved_basis_single_site(space, measure.vector())
        for t in range(3):
            phi_raw = rng.normal(size=space.size)
            for row in basis.vectors:
                phi_raw -= np.sum(measure.vector() * phi_raw * row) * row
            scale = np.abs(phi_raw).max()
            if scale < 1e-12:
                continue
            fpert = Density(measure, 1.0 + 1e-3 * phi_raw / scale)
            e = ent(fpert)
            if e > 1e-12:
                ratios.append(kappa_lhs(fpert, law) / e)
                labels.append(f"near-equilibrium-{t}")

    ratios = np.array(ratios)
    top = int(np.argmax(ratios))
    return KappaScanReport(law, float(ratios[top]), labels[top], ratios, labels, n_skipped)


def _batch_marginal_rel_ents(p: np.ndarray, factors: list[np.ndarray]) -> np.ndarray:
    """H(p_A | mu_A) for every subset mask, batched over axis 0."""
    n = p.ndim - 1
    m = p.shape[0]
    log_factors = [np.log(f) for f in factors]
    out = np.zeros((m, 1 << n))
    for mask in range(1, 1 << n):
        a_sites = [i for i in range(n) if mask >> i & 1]
        c_axes = tuple(i + 1 for i in range(n) if not mask >> i & 1)
        marg = p.sum(axis=c_axes) if c_axes else p
        logmu = np.zeros(marg.shape[1:])
        for pos, i in enumerate(a_sites):
            sh = [1] * len(a_sites)
            sh[pos] = factors[i].size
            logmu = logmu + log_factors[i].reshape(sh)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(marg > 0, marg * (np.log(marg) - logmu), 0.0)
        out[:, mask] = terms.reshape(m, -1).sum(axis=1)
    return np.maximum(out, 0.0)


# ---------------------------------------------------------------------------
# Witness densities
# ---------------------------------------------------------------------------

def identical_copies_density(n: int, base) -> Density:
    """Density of n perfectly correlated copies of a single-site variable,
    relative to the n-fold product of its law. The tightness witness: every
    nonempty marginal has entropy (|A| - 1) H(Z_0)."""
    base = np.asarray(base, dtype=float)
    if base.min() <= 0:
        raise ValueError("the base distribution must have full support")
    if abs(base.sum() - 1.0) > 1e-12:
        raise ValueError("the base distribution must sum to 1")
    measure = ProductMeasure.iid(base, n)
    space = measure.space
    vals = np.zeros(space.size)
    diag_stride = sum(space._strides)
    for x in range(base.size):
        vals[x * diag_stride] = base[x] ** (1 - n)
    return Density(measure, vals)


def identical_copies_ent_table(n: int, base) -> np.ndarray:
    """Closed-form Ent(f_A) table for the identical-copies density."""
    h0 = shannon_entropy(np.asarray(base, dtype=float))
    out = np.zeros(1 << n)
    for mask in range(1, 1 << n):
        out[mask] = (bin(mask).count("1") - 1) * h0
    return out


def sharp_test_density(n: int) -> Density:
    """The three-level mixture witness on n binary sites at bias w = 2^{-n}.

    p puts weight a on the all-ones string, b on the all-zeros string, and c
    on everything else, with the same single-site marginals as the reference
    product measure; the density p/mu is strictly positive.
    """
    if n < 2:
        raise ValueError("the sharp test needs n >= 2")
    w = Fraction(1, 2**n)
    a, b, c = _sharp_levels(w)
    space = ProductSpace([2] * n)
    measure = ProductMeasure(space, [np.array([1.0 - float(w), float(w)])] * n)
    p = np.full(space.size, float(c))
    p[-1] = float(a)  # all ones is the last index
    p[0] = float(b)
    f = p / measure.vector()
    return Density(measure, f / float(np.dot(f, measure.vector())))


def _sharp_levels(w: Fraction) -> tuple[Fraction, Fraction, Fraction]:
    c = 2 * w * w * (1 - w)  # 2 w (1-w) 2^{-n} with 2^{-n} = w
    a = w * w + c
    b = (1 - w) * (1 - w) + c
    return a, b, c


@dataclass
class SharpTestReport:
    """Closed-form evaluation of the sharp-test entropy production ratio."""

    n: int
    model: str
    q: float | None
    w: float
    a: float
    b: float
    c: float
    alpha0: float
    alpha_n: float
    beta: float
    gamma: float
    ent: float
    d: float
    ratio: float
    kappa: float
    delta_nu: float
    asymptote: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "model": self.model,
            "q": self.q,
            "w": self.w,
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "alpha0": self.alpha0,
            "alpha_n": self.alpha_n,
            "beta": self.beta,
            "gamma": self.gamma,
            "ent": self.ent,
            "d": self.d,
            "ratio": self.ratio,
            "kappa": self.kappa,
            "delta_nu": self.delta_nu,
            "asymptote": self.asymptote,
        }


def _log_fraction(x: Fraction) -> float:
    return math.log(x.numerator) - math.log(x.denominator)


def sharp_test_mixture_components(w: Fraction) -> list[tuple[Fraction, Fraction, Fraction]]:
    """The nine (weight, u, v) components of the one-step image of the sharp
    test measure: each is a product with parameter u on the swapped subset
    and v elsewhere."""
    h = Fraction(1, 2)
    one = Fraction(1)
    zero = Fraction(0)
    return [
        (w**4, one, one),
        ((1 - w) ** 4, zero, zero),
        (4 * w**2 * (1 - w) ** 2, h, h),
        (w**2 * (1 - w) ** 2, one, zero),
        (w**2 * (1 - w) ** 2, zero, one),
        (2 * w * (1 - w) ** 3, zero, h),
        (2 * w * (1 - w) ** 3, h, zero),
        (2 * w**3 * (1 - w), one, h),
        (2 * w**3 * (1 - w), h, one),
    ]


def sharp_test_closed_form(n: int, law: CrossoverLaw) -> SharpTestReport:
    """Evaluate Ent(f) and D(f, f) for the sharp-test density without touching
    the 2^n state space.

    All mixture coefficients are exact rationals; each of the four summands
    of the grouped entropy and entropy-production formulas is then formed in
    double precision. Valid for 2 <= n <= 40.
    """
    if not 2 <= n <= 40:
        raise ValueError("n must lie in [2, 40]")
    if law.n_sites != n:
        raise ValueError("law and n disagree on the number of sites")
    if law.model not in crossover.NAMED_MODELS:
        raise ValueError("closed-form evaluation needs a named model")

    w = Fraction(1, 2**n)
    a, b, c = _sharp_levels(w)

    log_a_over_wn = _log_fraction(a) - n * _log_fraction(w)
    log_b_over_cn = _log_fraction(b) - n * _log_fraction(1 - w)
    log_c_over_cn = _log_fraction(c) - n * _log_fraction(1 - w)
    log_odds = _log_fraction(1 - w) - _log_fraction(w)

    bulk = 2 * w * (1 - w) * (1 - 2 * w)  # c * (2^n - 2)
    tilt = n * w * (1 - w) * (1 - 2 * w)
    ent_value = (
        float(a) * log_a_over_wn
        + float(b) * log_b_over_cn
        + float(bulk) * log_c_over_cn
        + float(tilt) * log_odds
    )

    alpha_n = Fraction(0)
    alpha0 = Fraction(0)
    for weight, u, v in sharp_test_mixture_components(w):
        alpha_n += weight * crossover.mixed_moment(law, u, v)
        alpha0 += weight * crossover.mixed_moment(law, 1 - u, 1 - v)
    beta = bulk - (1 - alpha0 - alpha_n)
    gamma = n * alpha_n - n * w * (2 * w * (1 - w) + w)

    d_value = (
        float(a - alpha_n) * log_a_over_wn
        + float(b - alpha0) * log_b_over_cn
        + float(beta) * log_c_over_cn
        + float(gamma) * log_odds
    )

    half = Fraction(1, 2)
    delta = crossover.mixed_moment(law, half, Fraction(1)) + crossover.mixed_moment(
        law, Fraction(1), half
    )
    return SharpTestReport(
        n=n,
        model=law.model,
        q=law.q,
        w=float(w),
        a=float(a),
        b=float(b),
        c=float(c),
        alpha0=float(alpha0),
        alpha_n=float(alpha_n),
        beta=float(beta),
        gamma=float(gamma),
        ent=ent_value,
        d=d_value,
        ratio=d_value / ent_value,
        kappa=kappa_theoretical(law),
        delta_nu=float(delta),
        asymptote=4.0 * (1.0 - float(delta)) / n,
    )


# ---------------------------------------------------------------------------
# Discrete-time decay
# ---------------------------------------------------------------------------

@dataclass
class DecayCheck:
    h0: float
    h1: float
    kappa: float
    upper: float
    production_ratio: float | None
    lower: float | None


def discrete_decay_check(p: Distribution, law: CrossoverLaw) -> DecayCheck:
    """One application of the quadratic map, sandwiched.

    The upper bound is (1 - kappa) H(p | pi). When the density p/pi is
    strictly positive, the first-step entropy production D/Ent also yields
    the lower bound (1 - D/Ent) H(p | pi).
    """
    eq = equilibrium_of(p)
    pi = eq.measure.vector()
    h0 = relative_entropy_vec(p.weights, pi)
    p1 = psi_step(p, law)
    h1 = relative_entropy_vec(p1.weights, pi)
    kappa = kappa_theoretical(law)
    upper = (1.0 - kappa) * h0

    production_ratio = None
    lower = None
    if eq.full_support and np.all(p.weights > 0):
        f = Density.from_distribution(p, eq.measure)
        if h0 > 1e-15:
            d = recombination_entropy_production(f, law)
            production_ratio = d / h0
            lower = (1.0 - production_ratio) * h0
        else:
            production_ratio = 0.0
            lower = 0.0
    return DecayCheck(h0, h1, kappa, upper, production_ratio, lower)
