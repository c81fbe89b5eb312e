"""Reversible quadratic systems: pair generators, the quadratic drift, the
entropy production functional, stationarity diagnostics, conserved
quantities, and the linearized kernel with its spectrum.

Generators are transition oracles: given a pair of states they enumerate the
finite list of reachable pairs with rates. Nothing here materializes a dense
|Omega|^2 x |Omega|^2 matrix; functionals are sums over positive-rate
transitions, and the linearization collapses the pair space analytically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import crossover
from .crossover import CrossoverLaw
from .dynamics import EvolutionTrace, _rk4_trace
from .entropy import ent, xlogx
from .spaces import (
    Density,
    Distribution,
    ProductMeasure,
    ProductSpace,
    recombine_indices,
)

SPECTRAL_CAP = 1 << 10
STATIONARITY_TOL = 1e-10
KERNEL_TOL = 1e-12


class PairGenerator:
    """Markov generator on Omega x Omega driving a quadratic evolution.

    Args:
        space: the underlying single-copy state space.
        row_fn: oracle mapping a pair (i, j) of state indices to a dict
            {(k, l): rate} of off-diagonal transition rates; the diagonal is
            implied by the zero row sum.
        unit_form: True when the generator is `kernel - identity` for a
            Markov kernel on the pair space (rates from one pair sum to at
            most 1, with the remainder on the diagonal).
        name: label used in reports.
    """

    def __init__(self, space: ProductSpace, row_fn, unit_form: bool = False, name: str = ""):
        self.space = space
        self._row_fn = row_fn
        self.unit_form = unit_form
        self.name = name

    def transitions(self, i: int, j: int) -> dict[tuple[int, int], float]:
        """Off-diagonal rates out of the pair (i, j), aggregated by target."""
        row = self._row_fn(i, j)
        row.pop((i, j), None)
        return row

    def diagonal(self, i: int, j: int) -> float:
        return -sum(self.transitions(i, j).values())

    def __repr__(self) -> str:
        return f"PairGenerator({self.name or 'custom'}, size={self.space.size})"


def make_recombination_generator(law: CrossoverLaw, measure: ProductMeasure) -> PairGenerator:
    """The subset-swap generator: pairs recombine at a nu-distributed subset.

    Reversible for mu (x) mu for every strictly positive product measure mu,
    and symmetric under simultaneous exchange of both pair coordinates.
    """
    if not measure.is_positive():
        raise ValueError("the reference product measure must be strictly positive")
    space = measure.space
    support = crossover.support_masks(law)

    def row_fn(i: int, j: int) -> dict[tuple[int, int], float]:
        out: dict[tuple[int, int], float] = {}
        for mask, w in support:
            target = recombine_indices(space, i, j, mask)
            out[target] = out.get(target, 0.0) + w
        return out

    return PairGenerator(space, row_fn, unit_form=True, name=f"recombination[{law.label()}]")


# ---------------------------------------------------------------------------
# Quadratic drift
# ---------------------------------------------------------------------------

def phi(p: Distribution, generator: PairGenerator) -> tuple[np.ndarray, np.ndarray]:
    """The pair-space drift Phi[p](tau, tau') and its first-coordinate margin.

    Returns a dense (|Omega|, |Omega|) signed array and the drift vector
    drift(tau) = sum_{tau'} Phi[p](tau, tau'), whose total is zero.
    """
    size = generator.space.size
    w = p.weights
    out = np.zeros((size, size))
    for i in range(size):
        if w[i] == 0.0:
            continue
        for j in range(size):
            pij = w[i] * w[j]
            if pij == 0.0:
                continue
            row = generator.transitions(i, j)
            total = 0.0
            for (k, l), rate in row.items():
                out[k, l] += pij * rate
                total += rate
            out[i, j] -= pij * total
    return out, out.sum(axis=1)


def drift_operator(generator: PairGenerator) -> np.ndarray:
    """Dense operator R with drift(tau) = (p (x) p).ravel() @ R.

    R[(i, j), k] = sum_l G(i, j; k, l), precomputed once so that repeated
    drift evaluations (fixed-point searches, integration) are matrix products.
    """
    size = generator.space.size
    out = np.zeros((size * size, size))
    for i in range(size):
        for j in range(size):
            row = generator.transitions(i, j)
            total = 0.0
            for (k, _l), rate in row.items():
                out[i * size + j, k] += rate
                total += rate
            out[i * size + j, i] -= total
    return out


def quadratic_field(generator: PairGenerator):
    """The vector field p -> Phi-margin(p) as a callable on weight vectors."""
    op = drift_operator(generator)

    def fieldfn(w: np.ndarray) -> np.ndarray:
        return np.outer(w, w).reshape(-1) @ op

    return fieldfn


def evolve_rqs(
    p: Distribution,
    generator: PairGenerator,
    reference: np.ndarray,
    t_end: float,
    dt: float = 0.01,
    snapshot_every: int = 10,
) -> EvolutionTrace:
    """Integrate the quadratic evolution driven by `generator` with RK4,
    measuring entropies against the supplied reference weights."""
    fieldfn = quadratic_field(generator)
    return _rk4_trace(p.weights, fieldfn, np.asarray(reference, float), t_end, dt, snapshot_every)


# ---------------------------------------------------------------------------
# Symmetrization (pair-exchange symmetry of the target pair)
# ---------------------------------------------------------------------------

def symmetrize(generator: PairGenerator, pair_cap: int = 1 << 14) -> PairGenerator:
    """Rebalance rates between the swapped targets (k, l) and (l, k) so the
    generator treats the produced pair as unordered, without changing the
    quadratic drift.

    The two exceptional targets are the swapped source (rate kept as is) and
    the source itself (diagonal, restored by the zero row sum).
    """
    size = generator.space.size
    if size * size > pair_cap:
        raise ValueError("state space too large to materialize the symmetrized generator")
    rows: dict[tuple[int, int], dict[tuple[int, int], float]] = {}
    raw = {}
    for i in range(size):
        for j in range(size):
            raw[(i, j)] = generator.transitions(i, j)
    for i in range(size):
        for j in range(size):
            row = raw[(i, j)]
            mirror = raw[(j, i)]
            targets = set(row) | {(l, k) for (k, l) in mirror}
            new: dict[tuple[int, int], float] = {}
            for (k, l) in targets:
                if (k, l) == (i, j):
                    continue
                if (k, l) == (j, i):
                    new[(k, l)] = row.get((j, i), 0.0)
                else:
                    s = 0.5 * (row.get((k, l), 0.0) + mirror.get((l, k), 0.0))
                    if s != 0.0:
                        new[(k, l)] = s
            rows[(i, j)] = new

    def row_fn(i: int, j: int) -> dict[tuple[int, int], float]:
        return dict(rows[(i, j)])

    return PairGenerator(
        generator.space, row_fn, unit_form=False, name=f"sym[{generator.name}]"
    )


# ---------------------------------------------------------------------------
# Entropy production and stationarity
# ---------------------------------------------------------------------------

def entropy_production(f: Density, g: Density, generator: PairGenerator) -> float:
    """The functional D(f, g): one quarter of the sum over positive-rate
    transitions of mu(t)mu(t') rate [f(s)f(s') - f(t)f(t')]
    log(g(s)g(s') / g(t)g(t')).

    Requires strictly positive g (zero-density inputs are rejected rather
    than given an infinite-logarithm convention).
    """
    if f.measure != g.measure:
        raise ValueError("f and g must share a reference measure")
    return entropy_production_vec(f.values, g.values, generator, f.measure.vector())


def entropy_production_vec(
    f_values: np.ndarray,
    g_values: np.ndarray,
    generator: PairGenerator,
    measure_weights: np.ndarray,
) -> float:
    """D(f, g) against arbitrary (not necessarily product) reference weights."""
    fv = np.asarray(f_values, float)
    gv = np.asarray(g_values, float)
    mu = np.asarray(measure_weights, float)
    if gv.min() <= 0.0:
        raise ValueError("entropy production requires strictly positive g")
    lg = np.log(gv)
    size = generator.space.size
    terms = []
    for i in range(size):
        for j in range(size):
            wij = mu[i] * mu[j]
            if wij == 0.0:
                continue
            fij = fv[i] * fv[j]
            lij = lg[i] + lg[j]
            for (k, l), rate in generator.transitions(i, j).items():
                if rate == 0.0:
                    continue
                terms.append(wij * rate * (fv[k] * fv[l] - fij) * (lg[k] + lg[l] - lij))
    return 0.25 * math.fsum(terms)


def recombination_entropy_production(f: Density, law: CrossoverLaw) -> float:
    """D(f, f) for the recombination generator, via the marginal reduction

        D(f, f) = Ent(f) - sum_A nu(A) mu[f_A f_{A^c} log f],

    which only needs sums over Omega. Requires strictly positive f.
    """
    if not f.is_positive():
        raise ValueError("the marginal reduction requires strictly positive f")
    space = f.space
    n = space.n_sites
    t = f.tensor()
    mu_t = f.measure.tensor()
    logf = np.log(t)
    support = crossover.support_masks(law)
    total = []
    for mask, w in support:
        a_axes = tuple(i for i in range(n) if mask >> i & 1)
        c_axes = tuple(i for i in range(n) if not mask >> i & 1)
        mu_a = f.measure.factor_tensor_from_axes(a_axes)
        mu_c = f.measure.factor_tensor_from_axes(c_axes)
        fa = (t * mu_c).sum(axis=c_axes, keepdims=True) if c_axes else t
        fc = (t * mu_a).sum(axis=a_axes, keepdims=True) if a_axes else t
        total.append(w * float((mu_t * fa * fc * logf).sum()))
    return ent(f) - math.fsum(total)


@dataclass
class StationarityReport:
    stationary: bool
    worst_violation: float
    witness: tuple[tuple[int, int], tuple[int, int]] | None


def is_stationary(
    p: Distribution, generator: PairGenerator, measure_weights: np.ndarray
) -> StationarityReport:
    """Check the product identity f(s)f(s') = f(t)f(t') on every positive-rate
    transition, where f = p / mu. The worst violating transition is returned
    as a witness."""
    mu = np.asarray(measure_weights, float)
    if mu.min() <= 0:
        raise ValueError("the reference measure must be strictly positive")
    f = p.weights / mu
    size = generator.space.size
    worst = 0.0
    witness = None
    for i in range(size):
        for j in range(size):
            fij = f[i] * f[j]
            for (k, l), rate in generator.transitions(i, j).items():
                if rate <= 0.0:
                    continue
                v = abs(fij - f[k] * f[l])
                if v > worst:
                    worst = v
                    witness = ((i, j), (k, l))
    return StationarityReport(worst <= STATIONARITY_TOL, worst, witness)


def conserved_check(
    trace: EvolutionTrace,
    rho_weights: np.ndarray,
    measure_weights: np.ndarray,
    generator: PairGenerator,
) -> float:
    """Maximum drift of the conserved observable log(rho / mu) along a trace.

    Raises ValueError when rho is not a strictly positive stationary state.
    """
    rho = np.asarray(rho_weights, float)
    if rho.min() <= 0:
        raise ValueError("rho must have full support")
    report = is_stationary(
        Distribution(generator.space, rho), generator, measure_weights
    )
    if not report.stationary:
        raise ValueError(
            f"rho is not stationary (worst violation {report.worst_violation:.3e})"
        )
    obs = np.log(rho) - np.log(np.asarray(measure_weights, float))
    values = trace.states @ obs
    return float(np.abs(values - values[0]).max())


# ---------------------------------------------------------------------------
# Linearization
# ---------------------------------------------------------------------------

def gamma_matrix(generator: PairGenerator, measure_weights: np.ndarray) -> np.ndarray:
    """The linearized drift operator Gamma(tau, sigma), acting on functions.

    Gamma is assembled from the transition oracle: every transition from
    (tau, tau') to (sigma, sigma') contributes mu(tau') times its rate to
    both Gamma[tau, sigma] and Gamma[tau, sigma'], diagonal included.
    """
    mu = np.asarray(measure_weights, float)
    size = generator.space.size
    gam = np.zeros((size, size))
    for i in range(size):
        for j in range(size):
            wj = mu[j]
            if wj == 0.0:
                continue
            row = generator.transitions(i, j)
            total = 0.0
            for (k, l), rate in row.items():
                gam[i, k] += wj * rate
                gam[i, l] += wj * rate
                total += rate
            gam[i, i] -= wj * total
            gam[i, j] -= wj * total
    return gam


@dataclass
class LinearizedKernel:
    """Row-stochastic kernel K with K reversible with respect to mu."""

    matrix: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.matrix, float)
        mu = np.asarray(self.mu, float)
        rows = k.sum(axis=1)
        if np.abs(rows - 1.0).max() > KERNEL_TOL:
            raise ValueError("kernel rows must sum to 1")
        flux = k * mu[:, None]
        if np.abs(flux - flux.T).max() > KERNEL_TOL:
            raise ValueError("kernel is not reversible for mu")
        self.matrix = k
        self.mu = mu


def linearize(
    generator: PairGenerator,
    measure_weights: np.ndarray,
    cap: int = SPECTRAL_CAP,
) -> LinearizedKernel:
    """The one-copy Markov kernel K obtained by averaging the pair kernel
    over a mu-distributed partner, for generators of kernel-minus-identity
    form. Gamma = 2K - I - (rank-one mu average)."""
    if not generator.unit_form:
        raise ValueError("linearize requires a kernel-minus-identity generator")
    size = generator.space.size
    if size > cap:
        raise ValueError(f"state space size {size} exceeds the spectral cap {cap}")
    mu = np.asarray(measure_weights, float)
    gam = gamma_matrix(generator, mu)
    k = 0.5 * (gam + np.eye(size) + np.ones((size, 1)) * mu[None, :])
    return LinearizedKernel(k, mu)


@dataclass
class ConservedBasis:
    """Orthonormal (in L2(mu)) basis of the conserved function space.

    Row 0 is the constant function; the remaining rows are centered and span
    the conserved quantities log(rho / mu) up to constants.
    """

    mu: np.ndarray
    vectors: np.ndarray

    @property
    def centered(self) -> np.ndarray:
        return self.vectors[1:]


def _gram_schmidt_l2(mu: np.ndarray, raw: list[np.ndarray]) -> np.ndarray:
    kept: list[np.ndarray] = []
    for vec in raw:
        v = vec.astype(float).copy()
        for u in kept:
            v -= float(np.sum(mu * v * u)) * u
        for u in kept:
            v -= float(np.sum(mu * v * u)) * u
        norm = math.sqrt(float(np.sum(mu * v * v)))
        if norm > 1e-10:
            kept.append(v / norm)
    return np.array(kept)


def conserved_basis_single_site(space: ProductSpace, measure_weights: np.ndarray) -> ConservedBasis:
    """Span of the constants and all single-site functions, orthonormalized.

    For recombination (and the conservative spin models) this is exactly the
    space of conserved observables log(rho / mu) plus constants.
    """
    mu = np.asarray(measure_weights, float)
    raw = [np.ones(space.size)]
    digits = space.digit_tables()
    for i in range(space.n_sites):
        for x in range(1, space.sizes[i]):
            raw.append((digits[i] == x).astype(float))
    vectors = _gram_schmidt_l2(mu, raw)
    return ConservedBasis(mu, vectors)


def conserved_basis_trivial(space: ProductSpace, measure_weights: np.ndarray) -> ConservedBasis:
    mu = np.asarray(measure_weights, float)
    return ConservedBasis(mu, np.ones((1, space.size)))


# ---------------------------------------------------------------------------
# Spectrum via cyclic Jacobi
# ---------------------------------------------------------------------------

def jacobi_eigh(matrix: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues ascending, eigenvectors as columns). Terminates when
    the off-diagonal Frobenius norm falls below tol times the matrix scale.
    """
    a = np.array(matrix, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or np.abs(a - a.T).max() > 1e-10:
        raise ValueError("jacobi_eigh expects a symmetric matrix")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    scale = max(float(np.sqrt((a * a).sum())), 1.0)
    for _sweep in range(max_sweeps):
        off = math.sqrt(max(float((a * a).sum() - (np.diag(a) ** 2).sum()), 0.0))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    order = np.argsort(np.diag(a))
    return np.diag(a)[order].copy(), v[:, order]


def _orthonormal_complement(rows: np.ndarray) -> np.ndarray:
    """Complete an orthonormal row set to a basis; return the new rows."""
    m, n = rows.shape
    kept = [rows[i] for i in range(m)]
    out = []
    for k in range(n):
        v = np.zeros(n)
        v[k] = 1.0
        for u in kept:
            v -= (v @ u) * u
        for u in kept:
            v -= (v @ u) * u
        norm = float(np.linalg.norm(v))
        if norm > 1e-8:
            v /= norm
            kept.append(v)
            out.append(v)
        if len(out) == n - m:
            break
    return np.array(out)


@dataclass
class SpectrumReport:
    """Spectrum of a linearized kernel split by the conserved structure."""

    eigenvalues: np.ndarray
    multiplicity_one: int
    multiplicity_half: int
    n_conserved: int
    complement_max: float
    residual_one: float
    residual_half: float

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "conserved_multiplicities": {
                "one": self.multiplicity_one,
                "half": self.multiplicity_half,
            },
            "n_conserved": self.n_conserved,
            "complement_max": float(self.complement_max),
            "residual_one": float(self.residual_one),
            "residual_half": float(self.residual_half),
        }


def spectrum(kernel: LinearizedKernel, basis: ConservedBasis, tol: float = 1e-8) -> SpectrumReport:
    """Eigenvalues of K, verified against the conserved structure.

    The kernel is symmetrized by the sqrt(mu) similarity and diagonalized
    with cyclic Jacobi. The trivial eigenvalue 1 is verified on constants and
    the eigenvalue 1/2 on the centered conserved basis; the reported
    complement maximum is the largest eigenvalue on the orthogonal complement
    of the conserved span.
    """
    k = kernel.matrix
    mu = kernel.mu
    root = np.sqrt(mu)
    sym = (root[:, None] * k) / root[None, :]
    eigenvalues, _ = jacobi_eigh(sym)
    eigenvalues = eigenvalues[::-1].copy()

    ones = np.ones(k.shape[0])
    residual_one = float(np.abs(k @ ones - ones).max())
    centered = basis.centered
    if centered.size:
        residual_half = float(np.abs(k @ centered.T - 0.5 * centered.T).max())
    else:
        residual_half = 0.0

    conserved_rows = basis.vectors * root[None, :]
    comp = _orthonormal_complement(conserved_rows)
    if comp.size:
        reduced = comp @ sym @ comp.T
        comp_vals, _ = jacobi_eigh(reduced)
        complement_max = float(comp_vals[-1])
    else:
        complement_max = -math.inf

    mult_one = int(np.sum(np.abs(eigenvalues - 1.0) <= tol))
    mult_half = int(np.sum(np.abs(eigenvalues - 0.5) <= tol))
    return SpectrumReport(
        eigenvalues=eigenvalues,
        multiplicity_one=mult_one,
        multiplicity_half=mult_half,
        n_conserved=centered.shape[0] if centered.size else 0,
        complement_max=complement_max,
        residual_one=residual_one,
        residual_half=residual_half,
    )
