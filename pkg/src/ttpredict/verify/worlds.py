"""Finite worlds with exact rational probabilities and identification oracles.

A world specifies the observational regime (covariate law, propensity,
outcome law given treatment and covariates) and the trial regime (fair coin
for the administered treatment, natural assignment drawn as in the
observational regime). Quantities on the trial side are computed from the
trial joint law directly; the identification formulas are computed from the
observational tables only. Their difference is the residual each check
returns.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..errors import DomainError

HALF = Fraction(1, 2)


def _normalized(values) -> bool:
    return sum(values) == 1 and all(v >= 0 for v in values)


@dataclass(frozen=True)
class DiscreteWorld:
    """Observational and trial laws on finite supports.

    Parameters
    ----------
    px : tuple of Fraction
        ``P(X = x | O)`` for ``x = 0..K-1``.
    pi : tuple of Fraction
        ``P(T = 1 | x, O)``. Under the observational regime the administered
        and natural assignments coincide, so this is also ``P(T^O = 1 | x)``.
    y_support : tuple of Fraction
        Outcome values.
    py : dict
        ``py[(t, x)]`` is the outcome law given ``(t, x)`` under O.
    py_trial : dict, optional
        ``py_trial[(t, t_obs, x)]`` overrides the trial-side outcome law.
        Leaving it ``None`` means the observational table is reused, which
        is modularity by construction. Supplying one is how the broken
        modularity control is built.
    """

    px: tuple
    pi: tuple
    y_support: tuple
    py: dict
    py_trial: dict | None = None

    def __post_init__(self):
        k = len(self.px)
        if len(self.pi) != k:
            raise DomainError("px and pi must have the same support")
        if not _normalized(self.px):
            raise DomainError("P(X) must sum to one")
        if not all(0 < p < 1 for p in self.pi):
            raise DomainError("propensities must lie strictly inside (0, 1)")
        for t in (0, 1):
            for x in range(k):
                row = self.py[(t, x)]
                if len(row) != len(self.y_support) or not _normalized(row):
                    raise DomainError(f"outcome law for t={t}, x={x} is not a distribution")
        if self.py_trial is not None:
            for key, row in self.py_trial.items():
                if not _normalized(row):
                    raise DomainError(f"trial outcome law {key} is not a distribution")

    @property
    def n_x(self) -> int:
        return len(self.px)

    @property
    def natural_assignment(self) -> tuple:
        return self.pi

    def p_t(self, t: int, x: int) -> Fraction:
        return self.pi[x] if t == 1 else 1 - self.pi[x]

    def outcome_mean(self, t: int, x: int) -> Fraction:
        return sum(p * y for p, y in zip(self.py[(t, x)], self.y_support))

    def trial_outcome_law(self, t: int, t_obs: int, x: int) -> tuple:
        if self.py_trial is not None and (t, t_obs, x) in self.py_trial:
            return self.py_trial[(t, t_obs, x)]
        return self.py[(t, x)]

    def trial_joint(self) -> dict:
        """``P(Y=y, T=t, T^O=t_obs, X=x | E)`` keyed by ``(y_index, t, t_obs, x)``."""
        out = {}
        for x in range(self.n_x):
            for t_obs in (0, 1):
                p_xo = self.px[x] * self.p_t(t_obs, x)
                for t in (0, 1):
                    for j, p_y in enumerate(self.trial_outcome_law(t, t_obs, x)):
                        out[(j, t, t_obs, x)] = p_xo * HALF * p_y
        return out

    def trial_mean(self, t: int, t_obs: int | None = None) -> Fraction:
        """``E[Y | T = t (, T^O = t_obs), E]`` by conditioning the trial joint law."""
        num = den = Fraction(0)
        for (j, tt, to, _x), p in self.trial_joint().items():
            if tt != t or (t_obs is not None and to != t_obs):
                continue
            num += p * self.y_support[j]
            den += p
        return num / den

    def with_trial_outcomes(self, py_trial: dict) -> "DiscreteWorld":
        return DiscreteWorld(self.px, self.pi, self.y_support, self.py, py_trial)

    def sample(self, n: int, rng) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``n`` observational units: returns ``(y, t, x, pi_true)`` as floats."""
        px = np.array([float(p) for p in self.px])
        x = rng.choice(self.n_x, size=n, p=px / px.sum())
        pi = np.array([float(p) for p in self.pi])[x]
        t = (rng.random(n) < pi).astype(np.int8)
        ys = np.array([float(v) for v in self.y_support])
        y = np.empty(n)
        for tt in (0, 1):
            for xx in range(self.n_x):
                sel = (t == tt) & (x == xx)
                if sel.any():
                    p = np.array([float(v) for v in self.py[(tt, xx)]])
                    y[sel] = ys[rng.choice(ys.size, size=int(sel.sum()), p=p / p.sum())]
        return y, t, x.astype(float), pi


def _random_simplex(rng, size: int, scale: int = 20) -> tuple:
    counts = rng.integers(1, scale + 1, size=size)
    total = int(counts.sum())
    return tuple(Fraction(int(c), total) for c in counts)


def random_world(rng, max_x: int = 5, max_y: int = 4) -> DiscreteWorld:
    """Random world with every probability strictly positive.

    Supports have sizes ``1..max_x`` and ``2..max_y``; propensities are
    multiples of 1/100 in ``[0.1, 0.9]``; outcome values are distinct
    positive integers.
    """
    k = int(rng.integers(1, max_x + 1))
    m = int(rng.integers(2, max_y + 1))
    px = _random_simplex(rng, k)
    pi = tuple(Fraction(int(v), 100) for v in rng.integers(10, 91, size=k))
    ys = tuple(Fraction(int(v)) for v in np.sort(rng.choice(np.arange(1, 50), size=m, replace=False)))
    py = {(t, x): _random_simplex(rng, m) for t in (0, 1) for x in range(k)}
    return DiscreteWorld(px, pi, ys, py)


def gformula_ate(world: DiscreteWorld) -> Fraction:
    """Covariate-averaged difference of observational outcome means."""
    return sum(
        (world.outcome_mean(1, x) - world.outcome_mean(0, x)) * world.px[x] for x in range(world.n_x)
    )


def trial_ate(world: DiscreteWorld) -> Fraction:
    return world.trial_mean(1) - world.trial_mean(0)


def gformula_residual(world: DiscreteWorld) -> Fraction:
    return abs(gformula_ate(world) - trial_ate(world))


def ipw_weighted_mean(world: DiscreteWorld, t: int, pi=None) -> Fraction:
    """``E[1(T=t) Y / P(T=t | X) | O]`` with an optionally substituted propensity."""
    pi = world.pi if pi is None else pi
    total = Fraction(0)
    for x in range(world.n_x):
        w = pi[x] if t == 1 else 1 - pi[x]
        total += world.px[x] * world.p_t(t, x) * world.outcome_mean(t, x) / w
    return total


def ipw_identity_check(world: DiscreteWorld, pi=None) -> Fraction:
    """Largest arm residual between the weighted observational mean and the trial mean.

    Pass a different ``pi`` to build the misspecified-weight control.
    """
    return max(abs(ipw_weighted_mean(world, t, pi) - world.trial_mean(t)) for t in (0, 1))


def wrong_propensity(world: DiscreteWorld) -> tuple:
    """``(1 + pi) / 2``: differs from ``pi`` everywhere inside (0, 1)."""
    return tuple((1 + p) / 2 for p in world.pi)


def att_identified(world: DiscreteWorld) -> Fraction:
    """Observational-side effect among the naturally treated.

    Mixes the observational conditional effects over ``P(X | T^O = 1, O)``.
    """
    p1 = sum(world.px[x] * world.pi[x] for x in range(world.n_x))
    return sum(
        (world.outcome_mean(1, x) - world.outcome_mean(0, x)) * world.px[x] * world.pi[x] / p1
        for x in range(world.n_x)
    )


def trial_att(world: DiscreteWorld) -> Fraction:
    return world.trial_mean(1, t_obs=1) - world.trial_mean(0, t_obs=1)


def att_identification_check(world: DiscreteWorld) -> Fraction:
    """Largest residual over arms of the intention-to-treat outcome means, plus the ATT gap."""
    p1 = sum(world.px[x] * world.pi[x] for x in range(world.n_x))
    worst = abs(att_identified(world) - trial_att(world))
    for t in (0, 1):
        rhs = sum(world.outcome_mean(t, x) * world.px[x] * world.pi[x] / p1 for x in range(world.n_x))
        worst = max(worst, abs(rhs - world.trial_mean(t, t_obs=1)))
    return worst


def broken_modularity(world: DiscreteWorld) -> DiscreteWorld:
    """Trial outcome law depends on the natural assignment: units with ``T^O = 1``
    get all their outcome mass on the largest value."""
    top = tuple(Fraction(int(j == len(world.y_support) - 1)) for j in range(len(world.y_support)))
    return world.with_trial_outcomes({(t, 1, x): top for t in (0, 1) for x in range(world.n_x)})


def two_point_world() -> DiscreteWorld:
    """Small hand-checkable world used in tests and the shipped oracle suite.

    ``E[Y|1,x] = (3, 5)``, ``E[Y|0,x] = (2, 2)``, ``P(X) = (1/4, 3/4)``, so
    the g-formula effect is ``1/4 + 9/4 = 5/2``.
    """
    f = Fraction
    return DiscreteWorld(
        px=(f(1, 4), f(3, 4)),
        pi=(f(1, 5), f(3, 5)),
        y_support=(f(1), f(3), f(5)),
        py={
            (1, 0): (f(1, 4), f(1, 2), f(1, 4)),  # mean 3
            (1, 1): (f(0), f(0), f(1)),  # mean 5
            (0, 0): (f(1, 2), f(1, 2), f(0)),  # mean 2
            (0, 1): (f(3, 4), f(0), f(1, 4)),  # mean 2
        },
    )
