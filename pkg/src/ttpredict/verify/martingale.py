"""Exact martingale checks for one-step predictives on finite supports.

A kernel here is a pure object with ``law(state)`` returning a dict of
exact :class:`~fractions.Fraction` probabilities and ``update(state, value)``
returning the next state. :func:`cid_exact_check` enumerates every state
reachable in a few steps and verifies that the expected next predictive
equals the current one, atom by atom, with no rounding.

Adapters build these kernels from the floating-point kernels used by the
resampler. Floats are rationals, so the adapted law is the runtime law
evaluated exactly.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

from ..errors import UnsupportedKernelError

HALF = Fraction(1, 2)


def _frac(v) -> Fraction:
    return v if isinstance(v, Fraction) else Fraction(v)


class BootstrapExact:
    """Empirical measure of everything seen so far."""

    def __init__(self, atoms):
        self.atoms = tuple(atoms)

    @classmethod
    def from_runtime(cls, kernel) -> "BootstrapExact":
        rows, counts = kernel.predictive()
        return cls([int(r) for r, c in zip(rows, counts) for _ in range(int(c))])

    def initial(self):
        return tuple(sorted(Counter(self.atoms).items()))

    def law(self, state, given=None) -> dict:
        total = sum(c for _, c in state)
        return {v: Fraction(c, total) for v, c in state}

    def update(self, state, value, given=None):
        d = dict(state)
        d[value] = d.get(value, 0) + 1
        return tuple(sorted(d.items()))


class WeightedUrnExact:
    """Polya urn with a weighted base: ``(M p(v) + count(v)) / (M + m)``.

    Used per arm for the IPW outcome predictive and, with ``given`` set to
    the arm, as a conditional kernel.
    """

    def __init__(self, arms: dict):
        # arms[t] = (atoms, probs, mass)
        self.arms = {
            t: (tuple(_frac(a) for a in atoms), tuple(_frac(p) for p in probs), _frac(mass))
            for t, (atoms, probs, mass) in arms.items()
        }

    @classmethod
    def from_runtime(cls, kernel) -> "WeightedUrnExact":
        arms = {}
        for t, urn in kernel.state.arms.items():
            if urn.imputed:
                raise UnsupportedKernelError("adapt the urn before any imputation")
            arms[t] = (urn.base_atoms.tolist(), urn.base_probs.tolist(), float(urn.base_mass))
        return cls(arms)

    @classmethod
    def from_weights(cls, atoms, lambda1, lambda0, ess1, ess0) -> "WeightedUrnExact":
        return cls({1: (atoms, lambda1, ess1), 0: (atoms, lambda0, ess0)})

    def initial(self):
        return {t: () for t in self.arms}

    def law(self, state, given) -> dict:
        atoms, probs, mass = self.arms[given]
        seen = dict(state[given])
        total_base = mass * sum(probs)
        denom = total_base + sum(seen.values())
        out: dict = {}
        for a, p in zip(atoms, probs):
            out[a] = out.get(a, Fraction(0)) + mass * p
        for a, c in seen.items():
            out[a] = out.get(a, Fraction(0)) + c
        return {a: v / denom for a, v in out.items() if v}

    def update(self, state, value, given):
        d = dict(state[given])
        d[value] = d.get(value, 0) + 1
        new = dict(state)
        new[given] = tuple(sorted(d.items()))
        return new


class CellUrnExact:
    """Polya urn within each conditioning cell, seeded by observed pairs ``(cell, value)``."""

    def __init__(self, pairs):
        self.pairs = tuple(pairs)

    def initial(self):
        return tuple(sorted(Counter(self.pairs).items()))

    def law(self, state, given) -> dict:
        counts = {v: c for (cell, v), c in state if cell == given}
        total = sum(counts.values())
        if total == 0:
            raise UnsupportedKernelError(f"cell {given!r} has no seed mass")
        return {v: Fraction(c, total) for v, c in counts.items()}

    def update(self, state, value, given):
        d = dict(state)
        d[(given, value)] = d.get((given, value), 0) + 1
        return tuple(sorted(d.items()))


class LastDrawExact:
    """Negative control: ``P_k = 0.1 P_n + 0.9 delta(last draw)``.

    The first step is a martingale step; from the second step on the
    expected next predictive is pulled toward ``P_n``.
    """

    def __init__(self, base: dict, weight: Fraction = Fraction(9, 10)):
        self.base = {k: _frac(v) for k, v in base.items()}
        self.weight = _frac(weight)

    def initial(self):
        return None

    def law(self, state, given=None) -> dict:
        if state is None:
            return dict(self.base)
        out = {k: (1 - self.weight) * v for k, v in self.base.items()}
        out[state] = out.get(state, Fraction(0)) + self.weight
        return out

    def update(self, state, value, given=None):
        return value


@dataclass
class CompositeExact:
    """Trial-unit predictive ``Z = (x, t_obs, t, y)``.

    ``covariate`` is unconditional; ``natural`` (optional) conditions on
    ``x``; ``outcome`` conditions on ``(t, x)`` when ``outcome_on_x`` and
    on ``t`` alone otherwise. The treatment is a fair coin.
    """

    covariate: object
    outcome: object
    natural: object | None = None
    outcome_on_x: bool = False

    def _outcome_given(self, t, x):
        return (t, x) if self.outcome_on_x else t

    def initial(self):
        return (self.covariate.initial(), None if self.natural is None else self.natural.initial(),
                self.outcome.initial())

    def law(self, state, given=None) -> dict:
        sx, so, sy = state
        out = {}
        for x, px in self.covariate.law(sx).items():
            nat = {None: Fraction(1)} if self.natural is None else self.natural.law(so, x)
            for to, pto in nat.items():
                for t in (0, 1):
                    for y, py in self.outcome.law(sy, self._outcome_given(t, x)).items():
                        out[(x, to, t, y)] = px * pto * HALF * py
        return out

    def update(self, state, value, given=None):
        sx, so, sy = state
        x, to, t, y = value
        sx = self.covariate.update(sx, x)
        if self.natural is not None:
            so = self.natural.update(so, to, x)
        sy = self.outcome.update(sy, y, self._outcome_given(t, x))
        return (sx, so, sy)


def _givens(kernel, state):
    """Conditioning values for which a conditional kernel's law is defined."""
    if isinstance(kernel, WeightedUrnExact):
        return list(kernel.arms)
    if isinstance(kernel, CellUrnExact):
        return sorted({cell for (cell, _v), _c in state})
    return [None]


def _is_enumerable(kernel) -> bool:
    return all(hasattr(kernel, m) for m in ("initial", "law", "update"))


def as_exact(kernel):
    """Exact counterpart of a runtime kernel, or the kernel itself if already exact."""
    from ..resampler import BayesianBootstrapKernel, IPWUrnKernel

    if isinstance(kernel, BayesianBootstrapKernel):
        return BootstrapExact.from_runtime(kernel)
    if isinstance(kernel, IPWUrnKernel):
        return WeightedUrnExact.from_runtime(kernel)
    if _is_enumerable(kernel):
        return kernel
    raise UnsupportedKernelError(f"{type(kernel).__name__} cannot enumerate its next-step law")


@dataclass
class CidResult:
    passed: bool
    worst_residual: Fraction
    states_checked: int
    factor_residuals: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_residual": str(self.worst_residual),
            "states_checked": self.states_checked,
            "factor_residuals": {k: str(v) for k, v in self.factor_residuals.items()},
        }


def _one_step_residual(kernel, state, given=None) -> Fraction:
    """max_v |sum_u P(u) P'(v | u) - P(v)| for a kernel conditioned on ``given``."""
    cur = kernel.law(state, given) if given is not None else kernel.law(state)
    expected: dict = {}
    for u, pu in cur.items():
        nxt_state = kernel.update(state, u, given) if given is not None else kernel.update(state, u)
        nxt = kernel.law(nxt_state, given) if given is not None else kernel.law(nxt_state)
        for v, pv in nxt.items():
            expected[v] = expected.get(v, Fraction(0)) + pu * pv
    keys = set(cur) | set(expected)
    return max(abs(expected.get(v, Fraction(0)) - cur.get(v, Fraction(0))) for v in keys)


def _reachable(kernel, steps: int):
    """States after 0..steps-1 updates, paired with the path's givens."""
    frontier = [kernel.initial()]
    out = list(frontier)
    for _ in range(steps - 1):
        nxt = []
        for s in frontier:
            if isinstance(kernel, CompositeExact):
                for z in kernel.law(s):
                    nxt.append(kernel.update(s, z))
            else:
                for g in _givens(kernel, s):
                    law = kernel.law(s, g) if g is not None else kernel.law(s)
                    for v in law:
                        nxt.append(kernel.update(s, v, g) if g is not None else kernel.update(s, v))
        frontier = nxt
        out.extend(nxt)
    return out


def _factor_residuals(kernel: CompositeExact, state) -> dict:
    """Conditional martingale residual for each factor at ``state``.

    The natural-assignment factor is checked given the next ``x`` and the
    outcome factor given the next ``(t, x)``, as the composite update
    requires.
    """
    sx, so, sy = state
    res = {"covariate": _one_step_residual(kernel.covariate, sx)}
    if kernel.natural is not None:
        res["natural"] = max(_one_step_residual(kernel.natural, so, x) for x in kernel.covariate.law(sx))
    givens = {kernel._outcome_given(t, x) for x in kernel.covariate.law(sx) for t in (0, 1)}
    res["outcome"] = max(_one_step_residual(kernel.outcome, sy, g) for g in givens)
    return res


def cid_exact_check(kernel, steps: int = 2) -> CidResult:
    """Check ``E[P_k(v) | G_{k-1}] = P_{k-1}(v)`` exactly on every reachable state.

    ``steps`` counts predictive updates: ``steps = 2`` verifies the first
    and second update from every reachable state. For a composite kernel
    the joint law and each factor (covariates; natural assignment given
    covariates; outcome given treatment and covariates) are checked.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if isinstance(kernel, CompositeExact):
        kernel = CompositeExact(as_exact(kernel.covariate), as_exact(kernel.outcome),
                                None if kernel.natural is None else as_exact(kernel.natural), kernel.outcome_on_x)
    else:
        kernel = as_exact(kernel)
    worst = Fraction(0)
    factors: dict = {}
    states = _reachable(kernel, steps)
    for s in states:
        if isinstance(kernel, CompositeExact):
            worst = max(worst, _one_step_residual(kernel, s))
            for name, r in _factor_residuals(kernel, s).items():
                factors[name] = max(factors.get(name, Fraction(0)), r)
                worst = max(worst, r)
        else:
            for g in _givens(kernel, s):
                worst = max(worst, _one_step_residual(kernel, s, g))
    return CidResult(worst == 0, worst, len(states), factors)


def exact_bootstrap(n_atoms: int = 3) -> BootstrapExact:
    return BootstrapExact(range(n_atoms))


def exact_ipw_urn() -> WeightedUrnExact:
    """Three-atom arms with rational Hajek weights and unequal effective sizes."""
    f = Fraction
    atoms = (f(1), f(2), f(4))
    return WeightedUrnExact.from_weights(
        atoms, (f(1, 6), f(1, 3), f(1, 2)), (f(1, 2), f(1, 4), f(1, 4)), f(5, 2), f(7, 3)
    )


def exact_composite() -> CompositeExact:
    """Bayesian bootstrap over three units, cell urns for ``T^O | x`` and ``Y | (t, x)``."""
    units = [(0, 1, 2), (1, 0, 1), (1, 1, 3)]  # (x, t_obs, y)
    cov = BootstrapExact([u[0] for u in units])
    nat = CellUrnExact([(x, to) for x, to, _ in units])
    # outcome seeds: every (t, x) cell gets the observed outcomes at that x
    pairs = [((t, x), y) for x, _, y in units for t in (0, 1)]
    return CompositeExact(cov, CellUrnExact(pairs), nat, outcome_on_x=True)


def negative_control() -> LastDrawExact:
    f = Fraction
    return LastDrawExact({0: f(1, 2), 1: f(1, 3), 2: f(1, 6)})


__all__ = [
    "BootstrapExact",
    "CellUrnExact",
    "CidResult",
    "CompositeExact",
    "LastDrawExact",
    "WeightedUrnExact",
    "as_exact",
    "cid_exact_check",
    "exact_bootstrap",
    "exact_composite",
    "exact_ipw_urn",
    "negative_control",
]
