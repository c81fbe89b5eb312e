"""Nonlinear spin dynamics on a finite graph: Gibbs measures, the
swap-acceptance pair kernel, the folding kernel, single-spin heat-bath
dynamics, their dissipative combination, and stationary-structure scans.

Sites carry spins in {-1, +1}; a site value v in {0, 1} of the underlying
product space maps to the spin 2v - 1. Sites with an infinite external field
(boundary conditions) are pinned: they are excluded from the dynamic state
space and enter only through their frozen spin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import crossover
from .crossover import CrossoverLaw
from .rqs import PairGenerator, drift_operator
from .spaces import (
    Distribution,
    ProductSpace,
    batch_ipf,
    recombine_indices,
)

GIBBS_CAP = 1 << 20
FIELD_BOUND = 40.0
PIN_MEAN_TOL = 1e-9


@dataclass(frozen=True)
class IsingModel:
    """A finite-graph spin model with inverse temperature and external fields.

    Attributes:
        n_vertices: number of graph vertices.
        edges: simple undirected edge list as (i, j) pairs with i < j.
        beta: inverse temperature (any real).
        fields: per-vertex external field (finite values only).
        pinned: (site, spin) pairs for vertices frozen to +1 or -1; these
            encode infinite fields and are removed from the dynamic space.
    """

    n_vertices: int
    edges: tuple[tuple[int, int], ...]
    beta: float
    fields: tuple[float, ...]
    pinned: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.n_vertices < 1:
            raise ValueError("need at least one vertex")
        if len(self.fields) != self.n_vertices:
            raise ValueError("one field per vertex is required")
        seen = set()
        norm = []
        for i, j in self.edges:
            if not (0 <= i < self.n_vertices and 0 <= j < self.n_vertices) or i == j:
                raise ValueError(f"invalid edge ({i}, {j})")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            norm.append(key)
        object.__setattr__(self, "edges", tuple(sorted(norm)))
        pins = {}
        for site, spin in self.pinned:
            if not 0 <= site < self.n_vertices:
                raise ValueError(f"pinned site {site} out of range")
            if spin not in (-1, 1):
                raise ValueError("pinned spins must be +1 or -1")
            if site in pins:
                raise ValueError(f"site {site} pinned twice")
            pins[site] = spin
        object.__setattr__(
            self, "pinned", tuple(sorted((s, v) for s, v in pins.items()))
        )
        if len(pins) == self.n_vertices:
            raise ValueError("at least one vertex must remain dynamic")

    @property
    def dynamic_sites(self) -> tuple[int, ...]:
        pinned = {s for s, _ in self.pinned}
        return tuple(i for i in range(self.n_vertices) if i not in pinned)

    @property
    def space(self) -> ProductSpace:
        return ProductSpace([2] * len(self.dynamic_sites), max_states=GIBBS_CAP)

    def with_fields(self, fields) -> "IsingModel":
        return IsingModel(
            self.n_vertices, self.edges, self.beta, tuple(fields), self.pinned
        )

    def with_extra_pins(self, pins) -> "IsingModel":
        return IsingModel(
            self.n_vertices,
            self.edges,
            self.beta,
            self.fields,
            self.pinned + tuple(pins),
        )


def path_graph(n: int) -> tuple[tuple[int, int], ...]:
    return tuple((i, i + 1) for i in range(n - 1))


def cycle_graph(n: int) -> tuple[tuple[int, int], ...]:
    return tuple((i, i + 1) for i in range(n - 1)) + ((0, n - 1),)


def spin_matrix(model: IsingModel) -> np.ndarray:
    """(size, n_vertices) array of full spin configurations, pinned filled in."""
    space = model.space
    dyn = model.dynamic_sites
    out = np.zeros((space.size, model.n_vertices), dtype=np.int8)
    for s, v in model.pinned:
        out[:, s] = v
    for pos, site in enumerate(dyn):
        out[:, site] = 2 * space.digit_tables()[pos].astype(np.int8) - 1
    return out


def log_weights(model: IsingModel) -> np.ndarray:
    """Unnormalized log Gibbs weights over the dynamic space."""
    spins = spin_matrix(model).astype(float)
    lw = np.zeros(spins.shape[0])
    for i, j in model.edges:
        lw += model.beta * spins[:, i] * spins[:, j]
    for site in model.dynamic_sites:
        lw += model.fields[site] * spins[:, site]
    return lw


@dataclass
class GibbsMeasure:
    """The normalized Gibbs distribution of a spin model (log-domain build)."""

    model: IsingModel
    distribution: Distribution
    log_z: float

    @property
    def weights(self) -> np.ndarray:
        return self.distribution.weights


def gibbs(model: IsingModel) -> GibbsMeasure:
    lw = log_weights(model)
    top = float(lw.max())
    z = math.fsum(math.exp(v - top) for v in lw)
    log_z = top + math.log(z)
    w = np.exp(lw - log_z)
    return GibbsMeasure(model, Distribution(model.space, w / w.sum()), log_z)


# ---------------------------------------------------------------------------
# The swap-acceptance kernel
# ---------------------------------------------------------------------------

def interaction_mismatch(
    model: IsingModel, subset_mask: int, i: int, j: int
) -> float:
    """The exponent governing the acceptance of a swap at the given subset:
    sum over separated edges of (s_u - s'_u)(s_v - s'_v).

    Pinned sites never differ between the two pair coordinates, so they drop
    out automatically.
    """
    space = model.space
    dyn = model.dynamic_sites
    pos_of = {site: pos for pos, site in enumerate(dyn)}
    digits = space.digit_tables()
    total = 0.0
    for u, v in model.edges:
        pu = pos_of.get(u)
        pv = pos_of.get(v)
        if pu is None or pv is None:
            continue
        in_u = bool(subset_mask >> pu & 1)
        in_v = bool(subset_mask >> pv & 1)
        if in_u == in_v:
            continue
        du = 2.0 * (float(digits[pu][i]) - float(digits[pu][j]))
        dv = 2.0 * (float(digits[pv][i]) - float(digits[pv][j]))
        total += du * dv
    return total


def alpha(model: IsingModel, subset_mask: int, i: int, j: int) -> float:
    """Acceptance probability of swapping the subset between pair states i, j.

    Equal to 1 / (1 + exp(beta * mismatch)); independent of the external
    fields, and identically 1/2 at beta = 0 or when the pair agrees.
    """
    phi = interaction_mismatch(model, subset_mask, i, j)
    x = model.beta * phi
    if x >= 0:
        return 1.0 / (1.0 + math.exp(x))
    e = math.exp(-x)
    return e / (1.0 + e)


def alpha_from_measure(model: IsingModel, subset_mask: int, i: int, j: int) -> float:
    """The same acceptance probability computed from Gibbs weight ratios,
    as the conditional pair probability of the swapped pair against staying."""
    lw = log_weights(model)
    k, l = recombine_indices(model.space, i, j, subset_mask)
    la = lw[k] + lw[l]
    lb = lw[i] + lw[j]
    x = lb - la
    if x >= 0:
        return 1.0 / (1.0 + math.exp(x))
    e = math.exp(-x)
    return e / (1.0 + e)


def make_ising_generator(model: IsingModel, law: CrossoverLaw) -> PairGenerator:
    """Kernel-minus-identity generator: a nu-distributed subset swap is
    proposed and accepted with the interaction-mismatch probability.

    Reversible for gibbs(model') (x) gibbs(model') for every field choice
    with the same graph and beta; every such Gibbs measure is stationary.
    """
    space = model.space
    if law.n_sites != space.n_sites:
        raise ValueError("law must be over the dynamic sites of the model")
    support = crossover.support_masks(law)
    digits = space.digit_tables()
    pos_of = {site: pos for pos, site in enumerate(model.dynamic_sites)}
    cross_edges = []
    for u, v in model.edges:
        pu = pos_of.get(u)
        pv = pos_of.get(v)
        if pu is not None and pv is not None:
            cross_edges.append((pu, pv))
    beta = model.beta

    def accept(mask: int, i: int, j: int) -> float:
        phi = 0.0
        for pu, pv in cross_edges:
            if bool(mask >> pu & 1) == bool(mask >> pv & 1):
                continue
            du = 2.0 * (float(digits[pu][i]) - float(digits[pu][j]))
            dv = 2.0 * (float(digits[pv][i]) - float(digits[pv][j]))
            phi += du * dv
        x = beta * phi
        if x >= 0:
            return 1.0 / (1.0 + math.exp(x))
        e = math.exp(-x)
        return e / (1.0 + e)

    def row_fn(i: int, j: int) -> dict[tuple[int, int], float]:
        out: dict[tuple[int, int], float] = {}
        for mask, w in support:
            target = recombine_indices(space, i, j, mask)
            if target == (i, j):
                continue
            rate = w * accept(mask, i, j)
            if rate > 0.0:
                out[target] = out.get(target, 0.0) + rate
        return out

    return PairGenerator(space, row_fn, unit_form=True, name=f"ising[{law.label()}]")


# ---------------------------------------------------------------------------
# The folding kernel
# ---------------------------------------------------------------------------

def make_folding_generator(model: IsingModel) -> PairGenerator:
    """Resample the disagreement coordinates of the pair as mirrored spins,
    weighted by the product of the two Gibbs weights.

    Reversible for the Gibbs pair measure; at beta = 0 the transition law
    coincides with the uniform-crossover kernel on binary strings.
    """
    space = model.space
    lw = log_weights(model)
    digits = space.digit_tables()
    n = space.n_sites
    strides = space._strides

    def row_fn(i: int, j: int) -> dict[tuple[int, int], float]:
        disagree = [pos for pos in range(n) if digits[pos][i] != digits[pos][j]]
        if not disagree:
            return {}
        base = i
        for pos in disagree:
            base -= int(digits[pos][i]) * strides[pos]
        targets = []
        logs = []
        for bits in range(1 << len(disagree)):
            k = base
            l = base
            for b, pos in enumerate(disagree):
                if bits >> b & 1:
                    k += strides[pos]
                else:
                    l += strides[pos]
            targets.append((k, l))
            logs.append(lw[k] + lw[l])
        logs = np.array(logs)
        top = logs.max()
        weights = np.exp(logs - top)
        weights /= weights.sum()
        out: dict[tuple[int, int], float] = {}
        for target, w in zip(targets, weights):
            if target != (i, j) and w > 0.0:
                out[target] = out.get(target, 0.0) + float(w)
        return out

    return PairGenerator(space, row_fn, unit_form=True, name="folding")


# ---------------------------------------------------------------------------
# Heat-bath dynamics and the dissipative combination
# ---------------------------------------------------------------------------

def glauber_kernel(model: IsingModel) -> np.ndarray:
    """Single-chain heat-bath kernel: pick a dynamic site uniformly, then
    resample its spin from the conditional Gibbs distribution given the rest.
    Row-stochastic and reversible for gibbs(model)."""
    space = model.space
    n = space.n_sites
    mu = gibbs(model).weights
    w = np.zeros((space.size, space.size))
    strides = space._strides
    digits = space.digit_tables()
    for idx in range(space.size):
        stay = 0.0
        for pos in range(n):
            flip = idx + (1 - 2 * int(digits[pos][idx])) * strides[pos]
            accept = mu[flip] / (mu[flip] + mu[idx])
            w[idx, flip] = accept / n
            stay += (1.0 - accept) / n
        w[idx, idx] = stay
    return w


def make_dissipative_generator(model: IsingModel, law: CrossoverLaw) -> PairGenerator:
    """The conservative swap generator plus independent heat-bath refreshes
    on each pair coordinate. The refresh term breaks marginal conservation
    and drives every initial state to gibbs(model)."""
    space = model.space
    conservative = make_ising_generator(model, law)
    w = glauber_kernel(model)

    def row_fn(i: int, j: int) -> dict[tuple[int, int], float]:
        out = conservative.transitions(i, j)
        for k in range(space.size):
            if k != i and w[i, k] > 0.0:
                key = (k, j)
                out[key] = out.get(key, 0.0) + w[i, k]
            if k != j and w[j, k] > 0.0:
                key = (i, k)
                out[key] = out.get(key, 0.0) + w[j, k]
        return out

    return PairGenerator(
        space, row_fn, unit_form=False, name=f"dissipative[{law.label()}]"
    )


# ---------------------------------------------------------------------------
# Stationary structure
# ---------------------------------------------------------------------------

def fit_fields_to_means(
    model: IsingModel,
    target_means: np.ndarray,
    tol: float = 1e-11,
    max_sweeps: int = 300,
) -> IsingModel:
    """Adjust the external fields so that the Gibbs single-site spin means
    match `target_means` (indexed by the model's dynamic sites).

    Each sweep runs a monotone bisection per site (the mean at a site is
    strictly increasing in its own field) until all means match.
    """
    dyn = model.dynamic_sites
    target = np.asarray(target_means, float)
    if target.shape != (len(dyn),):
        raise ValueError("one target mean per dynamic site is required")
    if np.any(np.abs(target) >= 1.0):
        raise ValueError("target means must lie strictly inside (-1, 1)")
    fields = list(model.fields)
    spins = spin_matrix(model).astype(float)
    spin_cols = spins[:, list(dyn)]
    base_lw = log_weights(model.with_fields([0.0] * model.n_vertices))

    def means_for(fs) -> np.ndarray:
        lw = base_lw + spin_cols @ np.array([fs[s] for s in dyn])
        w = np.exp(lw - lw.max())
        w /= w.sum()
        return w @ spin_cols

    for _ in range(max_sweeps):
        for pos, site in enumerate(dyn):
            lo, hi = -FIELD_BOUND, FIELD_BOUND
            for _bisect in range(60):
                mid = 0.5 * (lo + hi)
                fields[site] = mid
                m = means_for(fields)[pos]
                if m < target[pos]:
                    lo = mid
                else:
                    hi = mid
            fields[site] = 0.5 * (lo + hi)
        err = float(np.abs(means_for(fields) - target).max())
        if err <= tol:
            return model.with_fields(fields)
    raise RuntimeError(f"field fitting stalled at mean error {err:.3e}")


@dataclass
class FixedPointRecord:
    converged: bool
    iterations: int
    drift_norm: float
    means: np.ndarray
    pinned_sites: tuple[tuple[int, int], ...]
    fitted_fields: tuple[float, ...] | None
    distance: float
    label: str = ""


@dataclass
class StationaryScanReport:
    model: IsingModel
    records: list[FixedPointRecord] = field(default_factory=list)

    @property
    def max_distance(self) -> float:
        return max((r.distance for r in self.records if r.converged), default=0.0)

    def all_ising_form(self, tol: float = 1e-8) -> bool:
        return all(r.converged and r.distance <= tol for r in self.records)


def find_fixed_point(
    generator: PairGenerator,
    start: Distribution,
    eta: float = 0.5,
    tol: float = 1e-12,
    max_iter: int = 200000,
) -> tuple[np.ndarray, int, float]:
    """Damped drift iteration p <- p + eta * drift(p) until the l1 norm of
    the drift falls below tol."""
    op = drift_operator(generator)
    w = start.weights.copy()
    for it in range(1, max_iter + 1):
        drift = np.outer(w, w).reshape(-1) @ op
        norm = float(np.abs(drift).sum())
        if norm <= tol:
            return w, it, norm
        w = w + eta * drift
    return w, max_iter, norm


def classify_fixed_point(
    model: IsingModel, weights: np.ndarray, label: str = ""
) -> FixedPointRecord:
    """Recognize a fixed point of the single-site swap dynamics as a Gibbs
    measure with adjusted (possibly infinite) external fields.

    Sites whose spin mean sits at +-1 are treated as pinned; the remaining
    fields are fitted by bisection, and the distance reported is the sup norm
    between the fixed point and the recognized Gibbs measure.
    """
    spins = spin_matrix(model).astype(float)
    dyn = model.dynamic_sites
    means = np.array([float(weights @ spins[:, s]) for s in dyn])
    hard = [
        (site, 1 if means[pos] > 0 else -1)
        for pos, site in enumerate(dyn)
        if abs(means[pos]) >= 1.0 - PIN_MEAN_TOL
    ]
    sub = model.with_extra_pins(hard) if hard else model
    sub_dyn = sub.dynamic_sites
    pos_of = {site: pos for pos, site in enumerate(dyn)}
    sub_targets = np.array([means[pos_of[s]] for s in sub_dyn])
    fitted = fit_fields_to_means(sub, sub_targets)
    g = gibbs(fitted)
    lifted = _lift_to_dynamic_space(model, fitted, g.weights)
    distance = float(np.abs(weights - lifted).max())
    return FixedPointRecord(
        converged=True,
        iterations=0,
        drift_norm=0.0,
        means=means,
        pinned_sites=tuple(hard),
        fitted_fields=tuple(fitted.fields),
        distance=distance,
        label=label,
    )


def _lift_to_dynamic_space(
    model: IsingModel, sub_model: IsingModel, sub_weights: np.ndarray
) -> np.ndarray:
    """Embed a distribution on a further-pinned model back into the dynamic
    space of the original model (zero where a pin is violated)."""
    if sub_model.dynamic_sites == model.dynamic_sites:
        return np.asarray(sub_weights, float)
    space = model.space
    dyn = model.dynamic_sites
    sub_space = sub_model.space
    sub_dyn = sub_model.dynamic_sites
    pins = dict(sub_model.pinned)
    for s, _ in model.pinned:
        pins.pop(s, None)
    out = np.zeros(space.size)
    digits = space.digit_tables()
    pos_of = {site: pos for pos, site in enumerate(dyn)}
    for idx in range(space.size):
        ok = True
        for site, spin in pins.items():
            if 2 * int(digits[pos_of[site]][idx]) - 1 != spin:
                ok = False
                break
        if not ok:
            continue
        sub_values = [int(digits[pos_of[s]][idx]) for s in sub_dyn]
        out[idx] = sub_weights[sub_space.encode(sub_values)]
    return out


def stationary_structure_scan(
    model: IsingModel,
    n_starts: int = 50,
    seed: int = 0,
    law: CrossoverLaw | None = None,
    starts: list[Distribution] | None = None,
    eta: float = 0.5,
    tol: float = 1e-12,
) -> StationaryScanReport:
    """Run the damped fixed-point search from random (and optional supplied)
    starts and classify every limit as a field-modified Gibbs measure."""
    space = model.space
    if law is None:
        law = crossover.single_site(space.n_sites)
    generator = make_ising_generator(model, law)
    rng = np.random.default_rng(seed)
    report = StationaryScanReport(model)
    all_starts: list[tuple[str, Distribution]] = []
    for k in range(n_starts):
        w = rng.exponential(size=space.size) + 1e-4
        all_starts.append((f"random-{k}", Distribution(space, w / w.sum())))
    for k, s in enumerate(starts or []):
        all_starts.append((f"supplied-{k}", s))
    for label, start in all_starts:
        w, iterations, norm = find_fixed_point(generator, start, eta=eta, tol=tol)
        if norm > tol:
            report.records.append(
                FixedPointRecord(False, iterations, norm, np.array([]), (), None, math.inf, label)
            )
            continue
        rec = classify_fixed_point(model, w, label)
        rec.iterations = iterations
        rec.drift_norm = norm
        report.records.append(rec)
    return report


# ---------------------------------------------------------------------------
# Conjecture-grade evidence (reported, never asserted)
# ---------------------------------------------------------------------------

def production_profile(
    model: IsingModel,
    law: CrossoverLaw,
    samples: int,
    seed: int,
) -> dict:
    """Min over sampled admissible densities of D(f, f) / (Ent(f) / n) for
    the conservative spin dynamics. Evidence gathering only."""
    from .rqs import entropy_production_vec  # local import to avoid cycles at module load

    space = model.space
    mu = gibbs(model).weights
    generator = make_ising_generator(model, law)
    rng = np.random.default_rng(seed)
    targets = []
    digits = space.digit_tables()
    for pos in range(space.n_sites):
        m1 = float(mu @ (digits[pos] == 1))
        targets.append(np.array([1.0 - m1, m1]))
    raw = rng.exponential(size=(samples,) + space.sizes) + 1e-3
    batch = batch_ipf(raw, targets, 1e-12, 500)
    worst = math.inf
    n = space.n_sites
    for k in range(samples):
        p = batch[k].reshape(-1)
        f = p / mu
        entf = float(np.sum(mu * np.where(f > 0, f * np.log(f), 0.0)))
        if entf < 1e-10:
            continue
        d = entropy_production_vec(f, f, generator, mu)
        worst = min(worst, d / (entf / n))
    return {"min_normalized_ratio": worst, "samples": samples, "n": n}
