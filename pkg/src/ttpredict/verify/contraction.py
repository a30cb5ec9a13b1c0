"""Posterior contraction of the closed-form IPW posterior with known propensities."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .. import ipw
from ..errors import PositivityError
from ..rng import stream


@dataclass(frozen=True)
class ContinuousDGP:
    """``X ~ N(0, 1)``, ``pi(x) = clip(expit(slope * x), eps, 1 - eps)``,
    ``Y = 1 + x + effect * T + N(0, noise^2)``."""

    effect: float = 1.0
    slope: float = 0.75
    noise: float = 1.0
    eps: float = 0.1

    @property
    def theta0(self) -> float:
        return self.effect

    def sample(self, n: int, rng):
        x = rng.standard_normal(n)
        pi = np.clip(expit(self.slope * x), self.eps, 1 - self.eps)
        t = (rng.random(n) < pi).astype(np.int8)
        y = 1.0 + x + self.effect * t + self.noise * rng.standard_normal(n)
        return y, t, x, pi


def _theta0(dgp) -> float:
    if hasattr(dgp, "theta0"):
        return float(dgp.theta0)
    from .worlds import gformula_ate

    return float(gformula_ate(dgp))


@dataclass(frozen=True)
class ContractionRow:
    n: int
    ess_mode: str
    mean_abs_error: float
    mean_sd: float
    bias: float
    reps: int
    seed: int


def contraction_experiment(dgp=None, n_grid=(250, 1000, 4000), reps_per_n: int = 200,
                           ess_mode: str = ipw.OBSERVED_COUNT, seed: int = 0) -> list[ContractionRow]:
    """Closed-form posterior mean error and SD for repeated datasets at each ``n``.

    Dataset ``r`` at size ``n`` comes from ``stream(seed, "contraction", n, r)``
    and is shared by both ESS modes, so their tables differ only by the mode.
    """
    dgp = ContinuousDGP() if dgp is None else dgp
    theta0 = _theta0(dgp)
    rows = []
    for n in n_grid:
        err, sds = np.empty(reps_per_n), np.empty(reps_per_n)
        for r in range(reps_per_n):
            rng = stream(seed, "contraction", n, r)
            for _attempt in range(100):
                y, t, _x, pi = dgp.sample(n, rng)
                if 0 < t.sum() < n:
                    break
            else:
                raise PositivityError(f"could not draw a two-arm dataset at n={n}")
            w = ipw.with_ess(ipw.hajek_weights(t, pi), t, ess_mode)
            spec = ipw.DirichletPosteriorSpec.from_weights(y, w)
            err[r] = ipw.posterior_mean_analytic(spec) - theta0
            sds[r] = ipw.posterior_theta_sd_analytic(spec)
        rows.append(ContractionRow(int(n), ess_mode, float(np.abs(err).mean()), float(sds.mean()),
                                   float(err.mean()), reps_per_n, seed))
    return rows


def sd_ratios(rows: list[ContractionRow]) -> list[float]:
    """Ratio of mean posterior SD between consecutive grid sizes."""
    return [b.mean_sd / a.mean_sd for a, b in zip(rows, rows[1:])]


def rate_exponent(rows: list[ContractionRow]) -> float:
    """Slope of log mean SD against log n (theory: -1/2)."""
    ln_n = np.log([r.n for r in rows])
    ln_sd = np.log([r.mean_sd for r in rows])
    return float(np.polyfit(ln_n, ln_sd, 1)[0])


def rows_csv(rows: list[ContractionRow]) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["n", "error", "sd", "bias", "mode", "reps", "seed"])
    for r in rows:
        out.writerow([r.n, repr(r.mean_abs_error), repr(r.mean_sd), repr(r.bias), r.ess_mode, r.reps, r.seed])
    return buf.getvalue()
