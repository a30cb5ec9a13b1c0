"""Marginal prediction with inverse probability weighting.

Hajek weights define the first-step predictive of the outcome in each arm of
the target trial; the Polya-urn update of that predictive has a closed-form
Dirichlet limit whose mean is the Hajek estimator.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateArmError, DomainError, PositivityError, SchemaError
from .rng import as_generator

OBSERVED_COUNT = "observed-count"
IMPORTANCE_SAMPLING = "importance-sampling"
ESS_MODES = (OBSERVED_COUNT, IMPORTANCE_SAMPLING)

CLIP = 1e-3


def clip_propensity(pi, lo: float = CLIP):
    """Clip into ``[lo, 1 - lo]``; returns the clipped copy and the clip count."""
    pi = np.asarray(pi, dtype=float)
    clipped = np.clip(pi, lo, 1.0 - lo)
    return clipped, int(np.count_nonzero(clipped != pi))


def _check_inputs(t, pi):
    t = np.asarray(t)
    pi = np.asarray(pi, dtype=float)
    if t.shape != pi.shape or t.ndim != 1:
        raise SchemaError("t and pi must be vectors of equal length")
    if not np.all((t == 0) | (t == 1)):
        raise DomainError("t must be 0/1")
    if not np.all((pi > 0) & (pi < 1)):
        raise DomainError("propensities must lie strictly inside (0, 1)")
    n1 = int(t.sum())
    if n1 == 0 or n1 == t.size:
        raise PositivityError("both arms must be non-empty")
    return t.astype(np.int8), pi


@dataclass(frozen=True)
class HajekWeightSet:
    lambda1: np.ndarray
    lambda0: np.ndarray
    ess_mode: str | None = None
    ess1: float | None = None
    ess0: float | None = None

    def arm(self, t: int) -> np.ndarray:
        return self.lambda1 if t == 1 else self.lambda0

    def ess(self, t: int) -> float:
        return self.ess1 if t == 1 else self.ess0

    @property
    def total_ess(self) -> float:
        return self.ess1 + self.ess0


def hajek_weights(t, pi) -> HajekWeightSet:
    t, pi = _check_inputs(t, pi)
    w1 = t / pi
    w0 = (1 - t) / (1 - pi)
    return HajekWeightSet(lambda1=w1 / w1.sum(), lambda0=w0 / w0.sum())


def effective_sample_size(w: HajekWeightSet, t, mode: str = OBSERVED_COUNT) -> tuple[float, float]:
    """Prior mass of the observed data in each arm's urn.

    ``observed-count`` uses the arm sizes; ``importance-sampling`` uses
    ``1 / sum(lambda_ti ** 2)``, which never exceeds the arm size.
    """
    t = np.asarray(t)
    if mode == OBSERVED_COUNT:
        return float(np.sum(t == 1)), float(np.sum(t == 0))
    if mode == IMPORTANCE_SAMPLING:
        return 1.0 / float(np.sum(w.lambda1**2)), 1.0 / float(np.sum(w.lambda0**2))
    raise ValueError(f"unknown ESS mode {mode!r}; expected one of {ESS_MODES}")


def with_ess(w: HajekWeightSet, t, mode: str) -> HajekWeightSet:
    ess1, ess0 = effective_sample_size(w, t, mode)
    return replace(w, ess_mode=mode, ess1=ess1, ess0=ess0)


@dataclass(frozen=True)
class ShrinkageBase:
    """Finite base measure ``P~`` with concentration ``alpha``."""

    atoms: np.ndarray
    weights: np.ndarray
    alpha: float

    def __post_init__(self):
        if self.alpha < 0:
            raise DomainError("alpha must be non-negative")
        if np.any(np.asarray(self.weights) < 0) or not np.isclose(np.sum(self.weights), 1.0):
            raise DomainError("base weights must be a probability vector")

    @classmethod
    def quantile_grid(cls, y, n_atoms: int, alpha: float) -> "ShrinkageBase":
        qs = (np.arange(n_atoms) + 0.5) / n_atoms
        return cls(np.quantile(np.asarray(y, float), qs), np.full(n_atoms, 1.0 / n_atoms), alpha)


@dataclass(frozen=True)
class DirichletPosteriorSpec:
    atoms: np.ndarray
    concentration1: np.ndarray
    concentration0: np.ndarray
    shrink_base: ShrinkageBase | None = None

    def __post_init__(self):
        n = len(self.atoms)
        if len(self.concentration1) != n or len(self.concentration0) != n:
            raise SchemaError("atoms and concentrations must have equal length")
        for c in (self.concentration1, self.concentration0):
            if np.any(c < 0):
                raise DomainError("concentrations must be non-negative")

    @classmethod
    def from_weights(cls, y, w: HajekWeightSet, shrink_base: ShrinkageBase | None = None) -> "DirichletPosteriorSpec":
        if w.ess1 is None:
            raise ValueError("weight set has no effective sample sizes; call with_ess first")
        return cls(
            atoms=np.asarray(y, dtype=float),
            concentration1=w.ess1 * w.lambda1,
            concentration0=w.ess0 * w.lambda0,
            shrink_base=shrink_base,
        )

    def concentration(self, t: int) -> np.ndarray:
        return self.concentration1 if t == 1 else self.concentration0

    def folded(self) -> "DirichletPosteriorSpec":
        """Equivalent spec with the shrinkage base appended as ordinary atoms."""
        b = self.shrink_base
        if b is None or b.alpha == 0:
            return replace(self, shrink_base=None)
        extra = b.alpha * np.asarray(b.weights, float)
        return DirichletPosteriorSpec(
            atoms=np.concatenate([self.atoms, b.atoms]),
            concentration1=np.concatenate([self.concentration1, extra]),
            concentration0=np.concatenate([self.concentration0, extra]),
        )


def sample_dirichlet(concentration, rng, size: int | None = None) -> np.ndarray:
    """Dirichlet draws by normalised gamma variates, computed in log space.

    Shapes below one use ``G(a) = G(a + 1) * U ** (1 / a)`` so that tiny
    concentrations do not underflow to an all-zero vector. Zero
    concentrations give exactly zero weight.
    """
    rng = as_generator(rng)
    a = np.asarray(concentration, dtype=float)
    pos = a > 0
    if not pos.any():
        raise DegenerateArmError("all concentrations are zero")
    shape = (a.size,) if size is None else (size, a.size)
    ap = a[pos]
    small = ap < 1
    shape_pos = shape[:-1] + (ap.size,)
    g = rng.standard_gamma(np.where(small, ap + 1.0, ap), size=shape_pos)
    with np.errstate(divide="ignore"):
        logg = np.log(g)
    if small.any():
        u = rng.random(size=shape_pos[:-1] + (int(small.sum()),))
        logg[..., small] += np.log(u) / ap[small]
    logw = logg - logsumexp(logg, axis=-1, keepdims=True)
    out = np.zeros(shape)
    out[..., pos] = np.exp(logw)
    return out


@dataclass(frozen=True)
class PosteriorDraw:
    atoms1: np.ndarray
    weights1: np.ndarray
    atoms0: np.ndarray
    weights0: np.ndarray

    @property
    def mean1(self) -> float:
        return float(self.weights1 @ self.atoms1)

    @property
    def mean0(self) -> float:
        return float(self.weights0 @ self.atoms0)

    @property
    def theta(self) -> float:
        return self.mean1 - self.mean0


def _check_arms(spec: DirichletPosteriorSpec):
    for t in (1, 0):
        if not np.any(spec.concentration(t) > 0):
            raise DegenerateArmError(f"arm {t} has all-zero concentration")


def dirichlet_posterior_draw(spec: DirichletPosteriorSpec, rng) -> PosteriorDraw:
    """One draw of the limiting arm predictives and their mean difference."""
    _check_arms(spec)
    rng = as_generator(rng)
    s = spec.folded()
    w1 = sample_dirichlet(s.concentration1, rng)
    w0 = sample_dirichlet(s.concentration0, rng)
    return PosteriorDraw(s.atoms, w1, s.atoms, w0)


def dirichlet_theta_draws(spec: DirichletPosteriorSpec, rng, size: int) -> np.ndarray:
    """``size`` posterior draws of the average treatment effect.

    Draws come in the same order and from the same stream as repeated
    calls to :func:`dirichlet_posterior_draw`.
    """
    _check_arms(spec)
    rng = as_generator(rng)
    s = spec.folded()
    out = np.empty(size)
    for i in range(size):
        w1 = sample_dirichlet(s.concentration1, rng)
        w0 = sample_dirichlet(s.concentration0, rng)
        out[i] = w1 @ s.atoms - w0 @ s.atoms
    return out


def posterior_mean_analytic(spec: DirichletPosteriorSpec) -> float:
    s = spec.folded()
    c1, c0 = s.concentration1, s.concentration0
    return float((c1 / c1.sum() - c0 / c0.sum()) @ s.atoms)


def posterior_variance_analytic(spec: DirichletPosteriorSpec, arm: int) -> float:
    """Variance of the arm mean under the Dirichlet posterior.

    With total concentration ``a`` and normalised weights ``p`` this is
    ``(sum p y^2 - (sum p y)^2) / (a + 1)``.
    """
    s = spec.folded()
    c = s.concentration(arm)
    a = c.sum()
    p = c / a
    m = p @ s.atoms
    second = p @ (s.atoms - m) ** 2
    return float(second / (a + 1.0))


def posterior_theta_sd_analytic(spec: DirichletPosteriorSpec) -> float:
    return float(np.sqrt(posterior_variance_analytic(spec, 1) + posterior_variance_analytic(spec, 0)))


@dataclass
class _ArmUrn:
    base_atoms: np.ndarray
    base_probs: np.ndarray
    base_mass: float
    imputed: list = field(default_factory=list)

    @property
    def mass(self) -> float:
        return self.base_mass + len(self.imputed)

    def predictive(self) -> tuple[np.ndarray, np.ndarray]:
        """Current predictive as (atoms, probabilities), duplicates not merged."""
        m = len(self.imputed)
        atoms = np.concatenate([self.base_atoms, np.asarray(self.imputed, float)])
        probs = np.concatenate([self.base_mass * self.base_probs, np.ones(m)]) / (self.base_mass + m)
        return atoms, probs

    def draw(self, rng: np.random.Generator) -> float:
        m = len(self.imputed)
        if rng.random() * (self.base_mass + m) < self.base_mass:
            k = int(np.searchsorted(np.cumsum(self.base_probs), rng.random(), side="right"))
            return float(self.base_atoms[min(k, self.base_atoms.size - 1)])
        return float(self.imputed[int(rng.integers(m))])


@dataclass
class UrnState:
    """Per-arm Polya urns seeded by Hajek-weighted observed outcomes."""

    arms: dict

    @classmethod
    def from_spec(cls, spec: DirichletPosteriorSpec) -> "UrnState":
        s = spec.folded()
        arms = {}
        for t in (1, 0):
            c = s.concentration(t)
            mass = float(c.sum())
            if mass <= 0:
                raise DegenerateArmError(f"arm {t} has no prior mass")
            keep = c > 0
            arms[t] = _ArmUrn(s.atoms[keep].copy(), c[keep] / mass, mass)
        return cls(arms)

    def mass(self, t: int) -> float:
        return self.arms[t].mass

    def step(self, t_new: int, rng) -> float:
        urn = self.arms[int(t_new)]
        y = urn.draw(as_generator(rng))
        urn.imputed.append(y)
        return y


def polya_urn_step(state: UrnState, t_new: int, rng) -> tuple[float, UrnState]:
    """Draw the next outcome in arm ``t_new`` and add it to that arm's urn."""
    return state.step(t_new, rng), state


def polya_sequence(rng, base_probs, base_mass: float, length: int) -> np.ndarray:
    """Indices into the base atoms for ``length`` successive urn draws.

    Draw ``j`` (0-based) comes from the base with probability
    ``base_mass / (base_mass + j)`` and otherwise copies a uniformly chosen
    earlier draw, which is the urn law exactly. Copies are resolved by
    pointer doubling.
    """
    rng = as_generator(rng)
    if length == 0:
        return np.empty(0, dtype=np.int64)
    j = np.arange(length)
    from_base = rng.random(length) * (base_mass + j) < base_mass
    parent = np.floor(rng.random(length) * j).astype(np.int64)
    src = np.where(from_base, j, parent)
    while True:
        nxt = src[src]
        if np.array_equal(nxt, src):
            break
        src = nxt
    cdf = np.cumsum(base_probs)
    base_idx = np.minimum(np.searchsorted(cdf / cdf[-1], rng.random(length), side="right"), len(base_probs) - 1)
    return base_idx[src]


def urn_resampled_theta(spec: DirichletPosteriorSpec, n_impute: int, rng) -> float:
    """Difference in arm means over ``n_impute`` urn-imputed trial units."""
    rng = as_generator(rng)
    state = UrnState.from_spec(spec)
    t = rng.random(n_impute) < 0.5
    m1 = int(t.sum())
    means = {}
    for arm, m in ((1, m1), (0, n_impute - m1)):
        if m == 0:
            raise DegenerateArmError(f"no imputed units in arm {arm}")
        urn = state.arms[arm]
        idx = polya_sequence(rng, urn.base_probs, urn.base_mass, m)
        means[arm] = float(urn.base_atoms[idx].mean())
    return means[1] - means[0]


def weights_csv(t, pi, w: HajekWeightSet) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["index", "t", "pi", "lambda1", "lambda0"])
    for i, (ti, pii, l1, l0) in enumerate(zip(t, pi, w.lambda1, w.lambda0)):
        out.writerow([i, int(ti), repr(float(pii)), repr(float(l1)), repr(float(l0))])
    return buf.getvalue()


def draws_csv(draws) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["replicate", "theta"])
    for i, d in enumerate(draws):
        out.writerow([i, repr(float(d))])
    return buf.getvalue()
