"""Recombination dynamics: the quadratic map in discrete time and the
quadratic differential equation in continuous time.

Continuous-time integration uses fixed-step classical fourth-order
Runge-Kutta (bit-reproducible traces); total mass is monitored, never
renormalized, so a drifting integral is surfaced as an error instead of
being silently absorbed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import crossover
from .crossover import CrossoverLaw
from .entropy import relative_entropy_vec, total_variation
from .spaces import (
    Distribution,
    ProductMeasure,
    ProductSpace,
    SiteSubset,
)

MASS_DRIFT_LIMIT = 1e-9
MASS_DRIFT_WATCH = 1e-12
MONOTONE_SLACK = 1e-10
PINSKER_SLACK = 1e-12


class MassConservationError(RuntimeError):
    """Integration step lost probability mass beyond the allowed drift."""


@dataclass
class EvolutionTrace:
    """Snapshots of an evolving distribution with convergence diagnostics.

    Attributes:
        times: snapshot times (continuous) or step indices (discrete).
        states: (k, |Omega|) array of snapshot weights.
        entropies: H(p_t | reference) per snapshot.
        tvs: total variation distance to the reference per snapshot.
        reference: dense weights of the comparison measure.
        max_mass_drift: worst |sum(p) - 1| observed while integrating.
    """

    times: np.ndarray
    states: np.ndarray
    entropies: np.ndarray
    tvs: np.ndarray
    reference: np.ndarray
    max_mass_drift: float = 0.0
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        h = self.entropies
        if np.any(np.diff(h) > MONOTONE_SLACK):
            worst = float(np.diff(h).max())
            raise ValueError(f"entropy increased along the trace by {worst:.3e}")
        bound = np.sqrt(np.maximum(h, 0.0) / 2.0) + PINSKER_SLACK
        if np.any(self.tvs > bound):
            raise ValueError("total variation exceeds the Pinsker bound")

    def final_distribution(self, space: ProductSpace) -> Distribution:
        return Distribution.from_unnormalized(space, self.states[-1])


@dataclass
class Equilibrium:
    """Product of single-site marginals, with per-site support information.

    `measure` lives on the original space and may contain zero factor
    entries; `supports` lists the surviving symbols per site, and
    `restricted` is the strictly positive measure on the shrunken space
    (identical to `measure` when the support is full).
    """

    measure: ProductMeasure
    supports: tuple[tuple[int, ...], ...]
    restricted: ProductMeasure
    full_support: bool


def equilibrium_of(p: Distribution) -> Equilibrium:
    """The stationary product measure with the same single-site marginals as p."""
    space = p.space
    factors = [p.site_marginal(i) for i in range(space.n_sites)]
    measure = ProductMeasure(space, factors)
    supports = tuple(
        tuple(int(x) for x in np.nonzero(f > 0.0)[0]) for f in factors
    )
    full = all(len(s) == a for s, a in zip(supports, space.sizes))
    if full:
        restricted = measure
    else:
        sub_space = ProductSpace([max(len(s), 1) for s in supports])
        restricted = ProductMeasure(
            sub_space, [f[list(s)] if s else [1.0] for f, s in zip(factors, supports)]
        )
    return Equilibrium(measure, supports, restricted, full)


# ---------------------------------------------------------------------------
# The quadratic map and vector field
# ---------------------------------------------------------------------------

def _marginal_product_tensor(t: np.ndarray, mask: int, n: int) -> np.ndarray:
    """p_A (x) p_{A^c} as a tensor, via keepdims marginal broadcasting."""
    a_axes = tuple(i for i in range(n) if mask >> i & 1)
    c_axes = tuple(i for i in range(n) if not mask >> i & 1)
    if not a_axes or not c_axes:
        return t
    pa = t.sum(axis=c_axes, keepdims=True)
    pc = t.sum(axis=a_axes, keepdims=True)
    return pa * pc


def psi_step(
    p: Distribution,
    law: CrossoverLaw,
    rng: np.random.Generator | None = None,
    num_samples: int | None = None,
) -> Distribution:
    """One application of the quadratic map: sum_A nu(A) p_A (x) p_{A^c}.

    If the law's support cannot be enumerated within the cap, callers may opt
    into an unbiased sampled approximation by supplying `rng` and
    `num_samples` (an average over that many sampled subsets). The sampled
    path is approximate and intended for exploratory runs only.
    """
    t = p.tensor()
    n = p.space.n_sites
    try:
        support = crossover.support_masks(law)
    except crossover.EnumerationCapError:
        if rng is None or num_samples is None:
            raise
        acc = np.zeros_like(t)
        for _ in range(num_samples):
            mask = crossover.sample_subset(law, rng).mask
            acc += _marginal_product_tensor(t, mask, n)
        return Distribution.from_unnormalized(p.space, (acc / num_samples).reshape(-1))
    out = np.zeros_like(t)
    for mask, w in support:
        out += w * _marginal_product_tensor(t, mask, n)
    return Distribution(p.space, out.reshape(-1))


def recombination_field(law: CrossoverLaw, space: ProductSpace):
    """The right-hand side sum_A nu(A)(p_A (x) p_{A^c} - p) as a callable on
    weight vectors."""
    support = crossover.support_masks(law)
    n = space.n_sites

    def field(w: np.ndarray) -> np.ndarray:
        t = space.tensor(w)
        out = np.zeros_like(t)
        for mask, wt in support:
            out += wt * (_marginal_product_tensor(t, mask, n) - t)
        return out.reshape(-1)

    return field


def _rk4_trace(
    w0: np.ndarray,
    field,
    reference: np.ndarray,
    t_end: float,
    dt: float,
    snapshot_every: int,
) -> EvolutionTrace:
    if dt <= 0:
        raise ValueError("dt must be positive")
    n_steps = max(int(round(t_end / dt)), 0)
    times = [0.0]
    states = [w0.copy()]
    w = w0.copy()
    max_drift = abs(float(w.sum()) - 1.0)
    for step in range(1, n_steps + 1):
        k1 = field(w)
        k2 = field(w + 0.5 * dt * k1)
        k3 = field(w + 0.5 * dt * k2)
        k4 = field(w + dt * k3)
        w = w + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        drift = abs(float(w.sum()) - 1.0)
        max_drift = max(max_drift, drift)
        if drift > MASS_DRIFT_LIMIT:
            raise MassConservationError(
                f"mass drift {drift:.3e} at step {step}; the step size is too large"
            )
        if step % snapshot_every == 0 or step == n_steps:
            times.append(step * dt)
            states.append(w.copy())
    states = np.array(states)
    entropies = np.array([relative_entropy_vec(s, reference) for s in states])
    tvs = np.array([total_variation(s, reference) for s in states])
    trace = EvolutionTrace(
        times=np.array(times),
        states=states,
        entropies=entropies,
        tvs=tvs,
        reference=reference.copy(),
        max_mass_drift=max_drift,
    )
    trace.validate()
    return trace


def evolve_continuous(
    p: Distribution,
    law: CrossoverLaw,
    t_end: float,
    dt: float = 0.01,
    snapshot_every: int = 10,
) -> EvolutionTrace:
    """Integrate the recombination differential equation from p up to t_end.

    Entropies in the trace are measured against the product of the initial
    single-site marginals (which the flow preserves).
    """
    pi = equilibrium_of(p).measure.vector()
    field = recombination_field(law, p.space)
    return _rk4_trace(p.weights, field, pi, t_end, dt, snapshot_every)


def evolve_discrete(p: Distribution, law: CrossoverLaw, k: int) -> EvolutionTrace:
    """Iterate the quadratic map k times, recording every iterate."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    pi = equilibrium_of(p).measure.vector()
    states = [p.weights.copy()]
    cur = p
    for _ in range(k):
        cur = psi_step(cur, law)
        states.append(cur.weights.copy())
    states = np.array(states)
    entropies = np.array([relative_entropy_vec(s, pi) for s in states])
    tvs = np.array([total_variation(s, pi) for s in states])
    trace = EvolutionTrace(
        times=np.arange(k + 1, dtype=float),
        states=states,
        entropies=entropies,
        tvs=tvs,
        reference=pi,
        max_mass_drift=float(max(abs(s.sum() - 1.0) for s in states)),
    )
    trace.validate()
    return trace


def marginal_conservation_error(trace: EvolutionTrace, space: ProductSpace) -> float:
    """Worst per-site marginal deviation between any snapshot and the first."""
    first = Distribution.from_unnormalized(space, trace.states[0])
    base = [first.site_marginal(i) for i in range(space.n_sites)]
    worst = 0.0
    for row in trace.states[1:]:
        d = Distribution.from_unnormalized(space, row)
        for i in range(space.n_sites):
            worst = max(worst, float(np.abs(d.site_marginal(i) - base[i]).max()))
    return worst
