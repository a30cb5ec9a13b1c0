"""End-to-end analysis: ingest, fit, resample, summarise."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from . import ipw
from .data import CovariateSchema, default_schema, ingest_csv, positivity_report, summarize
from .resampler import (
    BayesianBootstrapKernel,
    Estimand,
    FactorizedPredictive,
    IPWUrnKernel,
    NaturalAssignmentKernel,
    PlugInOutcomeKernel,
    ResamplingRun,
    run_predictive_resampling,
)
from .rng import stream
from .trees import McmcSettings, TrainingPropensity, clever_covariate, fit_continuous, fit_probit, inclusion_proportions

log = logging.getLogger(__name__)

METHODS = ("bart", "bart-cc", "marg-obs", "marg-is")
ESS_FOR_METHOD = {"marg-obs": ipw.OBSERVED_COUNT, "marg-is": ipw.IMPORTANCE_SAMPLING}
DEFAULT_EXTRA = 10_000


class ConfigError(ValueError):
    """Invalid run configuration (a usage error at the command line)."""


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines an analysis run's output.

    ``horizon`` is the trial size ``N``; ``None`` means ``n + 10000``.
    ``estimands`` defaults by method: ATE plus CATE over mother's age for
    the tree methods, ATE alone for the marginal ones.
    """

    input: str | None = None
    schema: str | None = None
    method: str = "marg-obs"
    seed: int = 0
    replicates: int = 2000
    horizon: int | None = None
    burn_in: int = 1000
    draws: int = 1000
    thin: int = 1
    estimands: tuple | None = None
    mode: str = "auto"
    clip: float = ipw.CLIP
    shrink_alpha: float = 0.0
    shrink_atoms: int = 20
    dump_trials: int = 0
    out: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {', '.join(METHODS)}; got {self.method!r}")
        if self.seed < 0 or self.replicates < 1:
            raise ConfigError("seed must be non-negative and replicates positive")
        if self.horizon is not None and self.horizon < 1:
            raise ConfigError("horizon must be positive")
        if self.estimands is not None:
            if len(self.estimands) == 0:
                raise ConfigError("estimand list is empty")
            try:
                ests = [Estimand.parse(e) for e in self.estimands]
            except ValueError as e:
                raise ConfigError(str(e)) from None
            if self.method.startswith("marg") and any(e.kind in ("cate", "att") for e in ests):
                raise ConfigError("CATE and ATT need a covariate-aware outcome model (bart or bart-cc)")
            object.__setattr__(self, "estimands", tuple(str(e) for e in ests))
        if self.shrink_alpha < 0:
            raise ConfigError("shrink_alpha must be non-negative")

    @property
    def mcmc(self) -> McmcSettings:
        return McmcSettings(self.burn_in, self.draws, self.thin)

    def resolved_estimands(self) -> tuple:
        if self.estimands is not None:
            return self.estimands
        default = ("ate", "cate:mage:20-38") if self.method.startswith("bart") else ("ate",)
        return tuple(str(Estimand.parse(e)) for e in default)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["estimands"] = list(self.resolved_estimands())
        d.pop("out")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if "config" in d and isinstance(d["config"], dict):
            d = d["config"]  # an artifact that embeds its config
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        d = dict(d)
        if d.get("estimands") is not None:
            d["estimands"] = tuple(d["estimands"])
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from None

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


@dataclass
class AnalysisResult:
    config: RunConfig
    data_summary: dict
    run: ResamplingRun
    extras: dict = field(default_factory=dict)
    trials: list = field(default_factory=list)


def load_dataset(cfg: RunConfig):
    if cfg.input is None:
        raise ConfigError("no input file given (config key 'input' or --input)")
    schema = default_schema() if cfg.schema is None else CovariateSchema.load(cfg.schema)
    return ingest_csv(cfg.input, schema)


def fit_propensity(ds, cfg: RunConfig):
    """Probit propensity fit; its stream is shared by every method for a given seed."""
    fit = fit_probit(ds.x, ds.t, cfg.mcmc, rng=stream(cfg.seed, "propensity"),
                     column_names=ds.covariate_names, seed=cfg.seed)
    pi, n_clipped = ipw.clip_propensity(fit.pi_hat, cfg.clip)
    return fit, pi, n_clipped


def build_predictive(ds, cfg: RunConfig, cache: dict | None = None) -> tuple[FactorizedPredictive, dict]:
    """Kernels for the configured method, plus report fields about the fits.

    ``cache`` may hold propensity fits across calls on the same dataset;
    entries are keyed by everything the fit depends on.
    """
    extras: dict = {}
    cov = BayesianBootstrapKernel(ds.x)
    nat = NaturalAssignmentKernel(ds.x, ds.t)
    needs_pi = cfg.method != "bart"
    if needs_pi:
        key = ("propensity", id(ds), cfg.seed, cfg.burn_in, cfg.draws, cfg.thin, cfg.clip)
        if cache is not None and key in cache:
            pfit, pi, n_clipped = cache[key]
        else:
            pfit, pi, n_clipped = fit_propensity(ds, cfg)
            if cache is not None:
                cache[key] = (pfit, pi, n_clipped)
        extras["positivity"] = positivity_report(ds, pfit.pi_hat)
        extras["n_clipped"] = n_clipped
        w = ipw.hajek_weights(ds.t, pi)
        extras["ess"] = {}
        for mode in ipw.ESS_MODES:
            wm = ipw.with_ess(w, ds.t, mode)
            extras["ess"][mode] = {"ess1": wm.ess1, "ess0": wm.ess0, "total": wm.total_ess}
        extras["pi"] = pi
    if cfg.method in ESS_FOR_METHOD:
        mode = ESS_FOR_METHOD[cfg.method]
        wm = ipw.with_ess(w, ds.t, mode)
        shrink = ipw.ShrinkageBase.quantile_grid(ds.y, cfg.shrink_atoms, cfg.shrink_alpha) if cfg.shrink_alpha > 0 else None
        spec = ipw.DirichletPosteriorSpec.from_weights(ds.y, wm, shrink)
        extras["ess_mode"] = mode
        extras["weights"] = wm
        extras["analytic"] = {"mean": ipw.posterior_mean_analytic(spec), "sd": ipw.posterior_theta_sd_analytic(spec)}
        outcome = IPWUrnKernel(spec)
    else:
        extra_cols = None
        if cfg.method == "bart-cc":
            extra_cols = clever_covariate(ds.t, pi, "probit posterior mean", TrainingPropensity(pfit, ds.x, pi, cfg.clip))
        ofit = fit_continuous(ds, extra_cols, cfg.mcmc, rng=stream(cfg.seed, "outcome", cfg.method), seed=cfg.seed)
        extras["inclusion"] = inclusion_proportions(ofit)
        extras["outcome_fit"] = ofit
        outcome = PlugInOutcomeKernel.from_fit(ofit, ds.x)
    return FactorizedPredictive(cov, outcome, nat, ds.covariate_names), extras


def run_analysis(cfg: RunConfig, threads: int = 1, dataset=None, cache: dict | None = None) -> AnalysisResult:
    ds = load_dataset(cfg) if dataset is None else dataset
    log.info("eligible n=%d (dropped %d ineligible, %d missing)", ds.n, ds.n_dropped_ineligible, ds.n_dropped_missing)
    pred, extras = build_predictive(ds, cfg, cache)
    horizon = cfg.horizon if cfg.horizon is not None else ds.n + DEFAULT_EXTRA
    run = run_predictive_resampling(pred, horizon, cfg.replicates, list(cfg.resolved_estimands()),
                                    cfg.seed, cfg.mode, cfg.method, threads)
    trials = []
    if cfg.dump_trials:
        from .resampler import simulate_trial

        mode = run.mode
        for j in range(min(cfg.dump_trials, cfg.replicates)):
            trials.append(simulate_trial(pred, horizon, stream(cfg.seed, "replicate", j), j, mode, cfg.seed))
    return AnalysisResult(cfg, summarize(ds), run, extras, trials)


def ks_equivalence_spec(ds, cfg: RunConfig, cache: dict | None = None):
    """Closed-form spec for the configured marginal method (used by equivalence checks)."""
    pred, _extras = build_predictive(ds, cfg, cache)
    if not isinstance(pred.outcome_kernel, IPWUrnKernel):
        raise ConfigError("equivalence needs a marginal method")
    return pred.outcome_kernel.spec


__all__ = ["AnalysisResult", "ConfigError", "METHODS", "RunConfig", "build_predictive", "run_analysis"]
