"""Forward simulation of a randomised target trial from one-step predictives.

A :class:`FactorizedPredictive` bundles a covariate kernel, an optional
natural-assignment kernel, the fixed fair-coin treatment law and an outcome
kernel. Each replicate imputes trial units ``k = n+1..N`` and evaluates
estimands on the imputed rows.

Three ways to generate a replicate are supported:

``"step"``
    one unit at a time through the ``sample``/``update`` contract of every
    kernel. Slow; used for verification.
``"sequential"``
    the same joint law as ``"step"``, generated in vectorised blocks
    (Polya sequences resolved by pointer doubling).
``"direct"``
    the limit ``N -> infinity`` read off the closed-form posterior of
    exchangeable kernels. Rows then carry weights instead of unit mass.
"""

from __future__ import annotations

import copy
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import ipw
from .errors import DomainError, EstimandUndefinedError, SchemaError, UnsupportedKernelError
from .rng import stream

log = logging.getLogger(__name__)

TREATMENT_PROB = 0.5
MODES = ("auto", "direct", "sequential", "step")


# ---------------------------------------------------------------------------
# kernels


class BayesianBootstrapKernel:
    """Covariate predictive: uniform over every unit seen so far.

    Imputed units are copies of observed rows, so the state is a count per
    observed row. ``sample`` returns a row index into ``x_observed``.
    """

    def __init__(self, x_observed):
        x = np.asarray(x_observed, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] < 1:
            raise SchemaError("need at least one observed covariate row")
        self.x = x
        self.n = x.shape[0]
        self.reset()

    def reset(self) -> None:
        self.counts = np.ones(self.n, dtype=np.int64)

    def predictive(self) -> tuple[np.ndarray, np.ndarray]:
        """(row indices, counts); probabilities are counts / counts.sum()."""
        return np.arange(self.n), self.counts.copy()

    def sample(self, rng) -> int:
        u = rng.random() * self.counts.sum()
        return int(min(np.searchsorted(np.cumsum(self.counts), u, side="right"), self.n - 1))

    def update(self, row: int) -> None:
        self.counts[row] += 1

    def sample_path(self, rng, length: int) -> np.ndarray:
        return ipw.polya_sequence(rng, np.full(self.n, 1.0 / self.n), float(self.n), length)

    def direct_weights(self, rng) -> np.ndarray:
        """Limit of the empirical covariate measure: Dirichlet(1, ..., 1) over observed rows."""
        return ipw.sample_dirichlet(np.ones(self.n), rng)


class NaturalAssignmentKernel:
    """Predictive for the naturally assigned treatment given covariates.

    Within each distinct covariate row the assignments form a Polya urn
    seeded by the observed units with that row. Paired with the Bayesian
    bootstrap this is the same as copying the assignment of the unit whose
    covariates were copied, which is what :meth:`sample_path` does.
    """

    def __init__(self, x_observed, t_observed):
        x = np.asarray(x_observed, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        t = np.asarray(t_observed)
        if t.shape != (x.shape[0],) or not np.all((t == 0) | (t == 1)):
            raise SchemaError("t_observed must be a 0/1 vector matching x_observed")
        self.t = t.astype(np.int8)
        _, self.cell = np.unique(x, axis=0, return_inverse=True)
        self.cell = self.cell.ravel()
        self.n_cells = int(self.cell.max()) + 1
        self.reset()

    def reset(self) -> None:
        self.ones = np.bincount(self.cell, weights=self.t, minlength=self.n_cells).astype(np.int64)
        self.total = np.bincount(self.cell, minlength=self.n_cells).astype(np.int64)

    def predictive(self, row: int) -> tuple[int, int]:
        """(count of assignment 1, total count) in the cell of ``row``."""
        c = self.cell[row]
        return int(self.ones[c]), int(self.total[c])

    def sample(self, row: int, rng) -> int:
        ones, total = self.predictive(row)
        return int(rng.random() * total < ones)

    def update(self, row: int, t_obs: int) -> None:
        c = self.cell[row]
        self.ones[c] += int(t_obs)
        self.total[c] += 1

    def sample_path(self, ancestors: np.ndarray) -> np.ndarray:
        return self.t[ancestors]

    def direct(self) -> np.ndarray:
        return self.t


class IPWUrnKernel:
    """Outcome predictive that ignores covariates: one weighted Polya urn per arm."""

    uses_covariates = False

    def __init__(self, spec: ipw.DirichletPosteriorSpec):
        self.spec = spec
        self.reset()

    def reset(self) -> None:
        self.state = ipw.UrnState.from_spec(self.spec)

    def for_replicate(self, j: int) -> "IPWUrnKernel":
        return IPWUrnKernel(self.spec)

    def predictive(self, t: int, row: int | None = None):
        return self.state.arms[int(t)].predictive()

    def sample(self, t: int, row: int, rng) -> float:
        return self.state.arms[int(t)].draw(rng)

    def update(self, t: int, row: int, y: float) -> None:
        self.state.arms[int(t)].imputed.append(float(y))

    def sample_path(self, t: np.ndarray, rows: np.ndarray, rng) -> np.ndarray:
        y = np.empty(t.size)
        for arm in (1, 0):
            sel = t == arm
            urn = self.state.arms[arm]
            idx = ipw.polya_sequence(rng, urn.base_probs, urn.base_mass, int(sel.sum()))
            y[sel] = urn.base_atoms[idx]
        return y

    def direct(self, rng) -> ipw.PosteriorDraw:
        return ipw.dirichlet_posterior_draw(self.spec, rng)


class PlugInOutcomeKernel:
    """Outcome predictive from one posterior draw of a regression model.

    ``f1`` and ``f0`` hold the draw-wise regression function at every
    observed covariate row under each treatment, shape ``(D, n)``. A
    replicate ``j`` uses draw ``j mod D`` and keeps it fixed while imputing,
    so ``update`` is a no-op. With ``sigma`` given, imputed outcomes carry
    Gaussian noise.
    """

    uses_covariates = True

    def __init__(self, f1, f0, sigma=None, draw: int = 0):
        self.f1 = np.atleast_2d(np.asarray(f1, float))
        self.f0 = np.atleast_2d(np.asarray(f0, float))
        if self.f1.shape != self.f0.shape:
            raise SchemaError("f1 and f0 must have equal shapes")
        self.sigma = None if sigma is None else np.broadcast_to(np.asarray(sigma, float), (self.f1.shape[0],))
        self.draw = draw % self.n_draws

    @classmethod
    def from_fit(cls, fit, x_observed, noise: bool = True) -> "PlugInOutcomeKernel":
        from .trees import predict

        f1 = predict(fit, x_observed, 1)
        f0 = predict(fit, x_observed, 0)
        return cls(f1, f0, fit.sigma if noise else None)

    @property
    def n_draws(self) -> int:
        return self.f1.shape[0]

    def reset(self) -> None:
        pass

    def for_replicate(self, j: int) -> "PlugInOutcomeKernel":
        return PlugInOutcomeKernel(self.f1, self.f0, self.sigma, draw=j)

    def mean(self, t, rows) -> np.ndarray:
        t = np.asarray(t)
        return np.where(t == 1, self.f1[self.draw, rows], self.f0[self.draw, rows])

    def sample(self, t: int, row: int, rng) -> float:
        mu = float(self.mean(t, row))
        return mu if self.sigma is None else mu + float(self.sigma[self.draw]) * rng.standard_normal()

    def update(self, t: int, row: int, y: float) -> None:
        pass

    def sample_path(self, t: np.ndarray, rows: np.ndarray, rng) -> np.ndarray:
        mu = self.mean(t, rows)
        if self.sigma is None:
            return mu
        return mu + self.sigma[self.draw] * rng.standard_normal(t.size)


@dataclass
class FactorizedPredictive:
    """Predictive for trial units, factorised along the trial's graph.

    The treatment law is a fair coin for every unit and is never updated.
    """

    covariate_kernel: BayesianBootstrapKernel
    outcome_kernel: object
    natural_assignment_kernel: NaturalAssignmentKernel | None = None
    covariate_names: tuple = ()

    @property
    def treatment_prob(self) -> float:
        return TREATMENT_PROB

    @property
    def n(self) -> int:
        return self.covariate_kernel.n

    def supports_direct(self) -> bool:
        return hasattr(self.outcome_kernel, "direct") or isinstance(self.outcome_kernel, PlugInOutcomeKernel)


def bayesian_bootstrap_kernel(x_observed) -> BayesianBootstrapKernel:
    return BayesianBootstrapKernel(x_observed)


# ---------------------------------------------------------------------------
# imputed trials and estimands


@dataclass
class ImputedTrial:
    """Imputed trial units.

    ``weights`` is ``None`` for a finite simulation (each row has unit
    mass). In the direct limit ``horizon`` is ``None`` and rows carry the
    posterior weights of the limiting measure.
    """

    y: np.ndarray
    t: np.ndarray
    x: np.ndarray | None
    t_obs: np.ndarray | None = None
    weights: np.ndarray | None = None
    n_observed: int = 0
    horizon: int | None = None
    replicate_id: int = 0
    seed: int | None = None
    covariate_names: tuple = ()

    def __post_init__(self):
        self.t = np.asarray(self.t)
        if not np.all((self.t == 0) | (self.t == 1)):
            raise DomainError("trial treatments must be 0/1")
        if self.horizon is not None and self.horizon <= self.n_observed:
            raise DomainError("horizon must exceed the observed sample size")

    def __len__(self):
        return int(self.t.size)

    @property
    def mass(self) -> np.ndarray:
        return np.ones(self.t.size) if self.weights is None else self.weights

    def column(self, name) -> np.ndarray:
        if self.x is None:
            raise EstimandUndefinedError("this trial carries no covariates (marginal outcome kernel)")
        if isinstance(name, (int, np.integer)):
            return self.x[:, int(name)]
        try:
            return self.x[:, list(self.covariate_names).index(name)]
        except ValueError:
            raise SchemaError(f"no covariate column {name!r}") from None

    def to_csv(self) -> str:
        names = list(self.covariate_names) or [f"x{j}" for j in range(0 if self.x is None else self.x.shape[1])]
        head = ["k", "y", "t", "t_obs", *names] + (["weight"] if self.weights is not None else [])
        lines = [",".join(head)]
        for i in range(len(self)):
            k = self.n_observed + i + 1
            row = [str(k), repr(float(self.y[i])), str(int(self.t[i])),
                   "" if self.t_obs is None else str(int(self.t_obs[i]))]
            if self.x is not None:
                row += [repr(float(v)) for v in self.x[i]]
            if self.weights is not None:
                row.append(repr(float(self.weights[i])))
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def _diff_in_means(y, t, m, what: str) -> float:
    m1 = m[t == 1].sum()
    m0 = m[t == 0].sum()
    if m1 <= 0 or m0 <= 0:
        raise EstimandUndefinedError(f"{what}: an arm is empty")
    return float((m[t == 1] @ y[t == 1]) / m1 - (m[t == 0] @ y[t == 0]) / m0)


def ate_from_trial(trial: ImputedTrial) -> float:
    """Difference in arm means over the imputed units."""
    return _diff_in_means(np.asarray(trial.y, float), trial.t, trial.mass, "ATE")


def att_from_trial(trial: ImputedTrial) -> float:
    """Difference in arm means among units whose natural assignment is 1."""
    if trial.t_obs is None:
        raise SchemaError("ATT needs natural assignments in the trial")
    keep = np.asarray(trial.t_obs) == 1
    return _diff_in_means(np.asarray(trial.y, float)[keep], trial.t[keep], trial.mass[keep], "ATT")


@dataclass(frozen=True)
class CateResult:
    values: np.ndarray
    effects: np.ndarray  # NaN where a cell is missing
    counts1: np.ndarray
    counts0: np.ndarray

    @property
    def missing(self) -> np.ndarray:
        return self.values[np.isnan(self.effects)]


def cate_by_value(trial: ImputedTrial, column, grid) -> CateResult:
    """Difference in arm means within each level of one covariate."""
    col = trial.column(column)
    y = np.asarray(trial.y, float)
    m = trial.mass
    grid = np.asarray(grid, float)
    eff = np.full(grid.size, np.nan)
    c1 = np.zeros(grid.size, dtype=np.int64)
    c0 = np.zeros(grid.size, dtype=np.int64)
    for g, v in enumerate(grid):
        sel = col == v
        c1[g] = int(np.count_nonzero(sel & (trial.t == 1) & (m > 0)))
        c0[g] = int(np.count_nonzero(sel & (trial.t == 0) & (m > 0)))
        if c1[g] and c0[g]:
            eff[g] = _diff_in_means(y[sel], trial.t[sel], m[sel], "CATE")
    return CateResult(grid, eff, c1, c0)


def risk_ratio_from_trial(trial: ImputedTrial) -> float:
    """``P(Y=1 | T=1) / P(Y=1 | T=0)`` over the imputed units."""
    y = np.asarray(trial.y, float)
    ok = np.all((y >= 0) & (y <= 1)) if trial.weights is not None else np.all((y == 0) | (y == 1))
    if not ok:
        raise DomainError("risk ratio needs a binary outcome")
    m = trial.mass
    m1, m0 = m[trial.t == 1].sum(), m[trial.t == 0].sum()
    if m1 <= 0 or m0 <= 0:
        raise EstimandUndefinedError("risk ratio: an arm is empty")
    r1 = (m[trial.t == 1] @ y[trial.t == 1]) / m1
    r0 = (m[trial.t == 0] @ y[trial.t == 0]) / m0
    if r0 == 0:
        raise EstimandUndefinedError("risk ratio: no events in the control arm")
    return float(r1 / r0)


@dataclass(frozen=True)
class Estimand:
    """A trial functional. ``kind`` is one of ate, att, rr, cate."""

    kind: str
    column: str | None = None
    grid: tuple = ()

    def __post_init__(self):
        if self.kind not in ("ate", "att", "rr", "cate"):
            raise ValueError(f"unknown estimand {self.kind!r}")
        if self.kind == "cate" and (self.column is None or not self.grid):
            raise ValueError("CATE needs a column and a non-empty grid")

    @classmethod
    def parse(cls, text: str) -> "Estimand":
        """``ate``, ``att``, ``rr``, ``cate:<column>:<lo>-<hi>`` or ``cate:<column>:<v1>,<v2>,...``."""
        parts = text.strip().split(":")
        kind = parts[0].lower()
        if kind != "cate":
            if len(parts) != 1:
                raise ValueError(f"bad estimand {text!r}")
            return cls(kind)
        if len(parts) != 3:
            raise ValueError(f"bad estimand {text!r}; expected cate:<column>:<grid>")
        spec = parts[2]
        if "-" in spec and "," not in spec:
            lo, hi = (int(v) for v in spec.split("-"))
            grid = tuple(float(v) for v in range(lo, hi + 1))
        else:
            grid = tuple(float(v) for v in spec.split(","))
        return cls("cate", parts[1], grid)

    def __str__(self):
        if self.kind != "cate":
            return self.kind
        return f"cate:{self.column}:" + ",".join(f"{v:g}" for v in self.grid)

    def labels(self) -> list[str]:
        if self.kind == "cate":
            return [f"CATE[{self.column}={v:g}]" for v in self.grid]
        return [self.kind.upper()]

    def evaluate(self, trial: ImputedTrial) -> dict:
        if self.kind == "ate":
            return {"ATE": ate_from_trial(trial)}
        if self.kind == "att":
            return {"ATT": att_from_trial(trial)}
        if self.kind == "rr":
            return {"RR": risk_ratio_from_trial(trial)}
        res = cate_by_value(trial, self.column, self.grid)
        return dict(zip(self.labels(), res.effects.tolist()))


# ---------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class PosteriorSummary:
    label: str
    method: str
    draws: np.ndarray = field(repr=False)
    mean: float
    median: float
    sd: float
    lo95: float
    hi95: float

    def to_dict(self, include_draws: bool = False) -> dict:
        d = {
            "estimand": self.label,
            "method": self.method,
            "replicates": int(self.draws.size),
            "mean": self.mean,
            "median": self.median,
            "sd": self.sd,
            "lo95": self.lo95,
            "hi95": self.hi95,
        }
        if include_draws:
            d["draws"] = self.draws.tolist()
        return d


def summarize_draws(draws, label: str, method: str = "") -> PosteriorSummary:
    """Mean, median, SD (B - 1 denominator) and the central 95% interval."""
    d = np.asarray(draws, dtype=float)
    if d.ndim != 1 or d.size < 2:
        raise ValueError("need at least two draws")
    bad = np.flatnonzero(~np.isfinite(d))
    if bad.size:
        raise DomainError(f"non-finite draw for {label} at replicate {int(bad[0])}")
    lo, med, hi = np.quantile(d, [0.025, 0.5, 0.975])
    return PosteriorSummary(
        label=label,
        method=method,
        draws=d,
        mean=float(d.mean()),
        median=float(med),
        sd=float(d.std(ddof=1)),
        lo95=float(lo),
        hi95=float(hi),
    )


# ---------------------------------------------------------------------------
# engine


def _resolve_mode(pred: FactorizedPredictive, mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if mode == "auto":
        return "direct" if pred.supports_direct() else "sequential"
    if mode == "direct" and not pred.supports_direct():
        raise UnsupportedKernelError("outcome kernel has no closed-form limit")
    return mode


def _step_trial(pred, outcome, m: int, rng):
    # private copies so concurrent replicates never share urn state
    cov = copy.copy(pred.covariate_kernel)
    nat = None if pred.natural_assignment_kernel is None else copy.copy(pred.natural_assignment_kernel)
    cov.reset()
    outcome.reset()
    if nat is not None:
        nat.reset()
    rows = np.empty(m, dtype=np.int64)
    t = np.empty(m, dtype=np.int8)
    t_obs = np.empty(m, dtype=np.int8) if nat is not None else None
    y = np.empty(m)
    for i in range(m):
        r = cov.sample(rng)
        cov.update(r)
        if nat is not None:
            t_obs[i] = nat.sample(r, rng)
            nat.update(r, t_obs[i])
        t[i] = rng.random() < TREATMENT_PROB
        y[i] = outcome.sample(t[i], r, rng)
        outcome.update(t[i], r, y[i])
        rows[i] = r
    return rows, t, t_obs, y


def simulate_trial(pred: FactorizedPredictive, horizon: int | None, rng, replicate_id: int = 0,
                   mode: str = "sequential", seed: int | None = None) -> ImputedTrial:
    """One imputed trial for replicate ``replicate_id``."""
    mode = _resolve_mode(pred, mode)
    n = pred.n
    outcome = pred.outcome_kernel.for_replicate(replicate_id)
    nat = pred.natural_assignment_kernel
    names = tuple(pred.covariate_names)
    if mode == "direct":
        if isinstance(outcome, PlugInOutcomeKernel):
            omega = pred.covariate_kernel.direct_weights(rng)
            rows = np.concatenate([np.arange(n), np.arange(n)])
            t = np.repeat(np.array([1, 0], dtype=np.int8), n)
            return ImputedTrial(
                y=outcome.mean(t, rows), t=t, x=pred.covariate_kernel.x[rows],
                t_obs=None if nat is None else nat.direct()[rows],
                weights=0.5 * np.concatenate([omega, omega]), n_observed=n, horizon=None,
                replicate_id=replicate_id, seed=seed, covariate_names=names,
            )
        draw = outcome.direct(rng)
        t = np.repeat(np.array([1, 0], dtype=np.int8), [draw.atoms1.size, draw.atoms0.size])
        return ImputedTrial(
            y=np.concatenate([draw.atoms1, draw.atoms0]), t=t, x=None,
            weights=0.5 * np.concatenate([draw.weights1, draw.weights0]), n_observed=n, horizon=None,
            replicate_id=replicate_id, seed=seed,
        )
    if horizon is None or horizon <= n:
        raise DomainError("horizon must exceed the observed sample size")
    m = horizon - n
    if mode == "step":
        rows, t, t_obs, y = _step_trial(pred, outcome, m, rng)
    else:
        rows = pred.covariate_kernel.sample_path(rng, m)
        t_obs = None if nat is None else nat.sample_path(rows)
        t = (rng.random(m) < TREATMENT_PROB).astype(np.int8)
        y = outcome.sample_path(t, rows, rng)
    return ImputedTrial(
        y=y, t=t, x=pred.covariate_kernel.x[rows], t_obs=t_obs, n_observed=n, horizon=horizon,
        replicate_id=replicate_id, seed=seed, covariate_names=names,
    )


@dataclass
class ResamplingRun:
    summaries: list
    missing: dict  # label -> number of replicates where the cell was undefined
    retried: list  # replicate ids that were resampled once
    mode: str
    horizon: int | None
    replicates: int

    def summary(self, label: str) -> PosteriorSummary:
        for s in self.summaries:
            if s.label == label:
                return s
        raise KeyError(label)


def _replicate(pred, horizon, estimands, seed, j, mode):
    values = {}
    retried = False
    for attempt in range(2):
        path = ("replicate", j) if attempt == 0 else ("replicate", j, "retry")
        trial = simulate_trial(pred, horizon, stream(seed, *path), j, mode, seed)
        try:
            for e in estimands:
                values.update(e.evaluate(trial))
            return values, retried
        except EstimandUndefinedError:
            if attempt == 1:
                raise
            retried = True
            values = {}
    raise AssertionError("unreachable")


def run_predictive_resampling(
    pred: FactorizedPredictive,
    horizon: int | None,
    replicates: int,
    estimands,
    seed: int,
    mode: str = "auto",
    method: str = "",
    threads: int = 1,
) -> ResamplingRun:
    """Impute ``replicates`` trials and summarise every estimand.

    Replicate ``j`` draws all its randomness from ``stream(seed, "replicate", j)``,
    so the result does not depend on ``threads``. A replicate on which an
    estimand is undefined is redrawn once from a separate stream; a second
    failure is an error. CATE cells that are empty on some replicate are
    reported in ``missing`` instead of being summarised.
    """
    if replicates < 1:
        raise ValueError("need at least one replicate")
    estimands = [Estimand.parse(e) if isinstance(e, str) else e for e in estimands]
    if not estimands:
        raise ValueError("no estimands requested")
    mode = _resolve_mode(pred, mode)
    if mode != "direct" and (horizon is None or horizon <= pred.n):
        raise DomainError("horizon must exceed the observed sample size")

    def task(j):
        return _replicate(pred, horizon, estimands, seed, j, mode)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(task, range(replicates)))
    else:
        results = [task(j) for j in range(replicates)]

    labels = [lab for e in estimands for lab in e.labels()]
    summaries, missing = [], {}
    for lab in labels:
        d = np.array([r[0][lab] for r in results])
        n_bad = int(np.count_nonzero(np.isnan(d))) if lab.startswith("CATE") else 0
        if n_bad:
            missing[lab] = n_bad
            continue
        summaries.append(summarize_draws(d, lab, method) if d.size >= 2 else
                         PosteriorSummary(lab, method, d, float(d[0]), float(d[0]), 0.0, float(d[0]), float(d[0])))
    retried = [j for j, r in enumerate(results) if r[1]]
    if retried:
        log.info("resampled %d replicates once after an undefined estimand", len(retried))
    return ResamplingRun(summaries, missing, retried, mode, horizon if mode != "direct" else None, replicates)


def default_horizon(n: int, extra: int = 10_000) -> int:
    return n + extra


def treatment_fraction_band(total_rows: int, z: float = 4.0) -> float:
    """Half-width of the band the fraction of treated imputed rows should fall in."""
    return z * math.sqrt(0.25 / total_rows)
