"""Shared test utilities: random table generators and an exact ruin count."""

from fractions import Fraction

import numpy as np

from steadyprice import ScenarioTable

# Grid size of the steady oracle grows like (bound/step)^(N-1), so the
# random tables fed to it keep their values under a per-N bound.
ORACLE_VALUE_BOUND = {1: 4.0, 2: 2.0, 3: 1.0, 4: 0.5, 5: 0.25, 6: 0.2}


def random_feasible_table(rng, n=None, m=None, *, nonneg_revenue=False,
                          value_bound=None, near_uniform_mass=False,
                          linear_q=False) -> ScenarioTable:
    """Random table whose starting price is retrievable by the level scheme.

    The expected starting price is drawn as a fraction of the largest
    expectation non-negative clamp prices can raise, so the water-level
    solve is always feasible.  ``linear_q`` makes the starting price a
    non-negative linear function of demand.
    """
    if n is None:
        n = int(round(10.0 ** rng.uniform(0.0, 4.0)))
    if m is None:
        m = int(rng.integers(1, 6))
    bound = value_bound if value_bound is not None \
        else 10.0 ** rng.uniform(-1.0, 1.0)
    demands = rng.uniform(0.0, 3.0, size=(n, m))
    low = 0.0 if nonneg_revenue else -0.25 * bound
    revenue = rng.uniform(low, bound, size=n)
    if near_uniform_mass:
        mass = rng.uniform(2.5, 3.0, size=n)
    else:
        mass = rng.gamma(1.0, 1.0, size=n) + 1e-9
    mass = mass / mass.sum()
    retrievable = float(mass @ np.maximum(revenue, 0.0))
    if retrievable <= 1e-9 * bound:
        revenue = revenue.copy()
        revenue[int(np.argmax(revenue))] = 0.5 * bound
        retrievable = float(mass @ np.maximum(revenue, 0.0))
    target = rng.uniform(0.05, 0.85) * retrievable
    if linear_q:
        coeffs = rng.uniform(0.0, 1.0, size=m + 1)
        raw = coeffs[0] + demands @ coeffs[1:]
    else:
        raw = rng.uniform(0.0, 1.0, size=n)
    expected = float(mass @ raw)
    if expected <= 0.0:
        raw = np.ones(n)
        expected = 1.0
    q = raw * (target / expected)
    return ScenarioTable(demands, mass, q, revenue)


def oracle_table(rng, n: int, max_resources: int = 2) -> ScenarioTable:
    """Small random table sized for exhaustive grid certification."""
    bound = ORACLE_VALUE_BOUND[n]
    m = int(rng.integers(1, max_resources + 1))
    table = random_feasible_table(rng, n=n, m=m, value_bound=bound,
                                  near_uniform_mass=True)
    q = table.starting_price
    if q.max() > bound:
        q = q * (bound / q.max())
    return ScenarioTable(table.demands, table.mass, q, table.revenue)


def exact_ruin_probability(profits, probabilities, budget, draws) -> float:
    """Exhaustive ruin probability: capital strictly below 0 at any draw.

    Exact rational arithmetic over the collapsed capital distribution, so
    the result is the true enumeration value, not an estimate.
    """
    gains = [Fraction(p).limit_denominator(10 ** 12) for p in profits]
    probs = [Fraction(p).limit_denominator(10 ** 12) for p in probabilities]
    alive = {Fraction(budget).limit_denominator(10 ** 12): Fraction(1)}
    ruined = Fraction(0)
    for _ in range(draws):
        nxt: dict[Fraction, Fraction] = {}
        for capital, mass in alive.items():
            for gain, prob in zip(gains, probs):
                weight = mass * prob
                landed = capital + gain
                if landed < 0:
                    ruined += weight
                else:
                    nxt[landed] = nxt.get(landed, Fraction(0)) + weight
        alive = nxt
    return float(ruined)
