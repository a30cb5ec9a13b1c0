"""Sum-of-trees regression fitted by Bayesian backfitting.

Two likelihoods share one sampler: Gaussian errors with unknown variance on a
rescaled outcome, and a probit link through latent-variable augmentation with
unit variance.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from numba import njit
from scipy.special import ndtr, ndtri
from scipy.stats import chi2

from ..errors import DomainError, PositivityError, SchemaError
from ..rng import as_generator
from .tree import CompactTree, Forest, Node, Tree

log = logging.getLogger(__name__)

CONTINUOUS = "continuous"
PROBIT = "probit"


@dataclass(frozen=True)
class TreePrior:
    """Prior and proposal settings.

    Split probability at depth ``d`` is ``alpha * (1 + d) ** -beta``. Leaf
    values are ``N(0, sigma_mu^2)`` with ``k * sigma_mu * sqrt(n_trees)``
    equal to half the scaled outcome range (0.5) for continuous outcomes
    and to 3 on the probit scale. ``sigma^2`` is ``nu * lam / chi2_nu`` with
    ``lam`` placing the sample SD at the ``q`` prior quantile.
    """

    n_trees: int = 50
    alpha: float = 0.95
    beta: float = 2.0
    k: float = 2.0
    nu: float = 3.0
    q: float = 0.9
    probit_range: float = 3.0
    move_weights: tuple = (2.5, 2.5, 4.0)  # grow, prune, change

    def split_prob(self, depth: int) -> float:
        return self.alpha * (1.0 + depth) ** (-self.beta)


@dataclass(frozen=True)
class McmcSettings:
    burn_in: int = 1000
    draws: int = 1000
    thin: int = 1

    def __post_init__(self):
        if self.draws < 1 or self.burn_in < 0 or self.thin < 1:
            raise ValueError("need draws >= 1, burn_in >= 0, thin >= 1")


def leaf_posterior(n: int, resid_sum: float, sigma2: float, sigma_mu2: float) -> tuple[float, float]:
    """Conjugate normal posterior (mean, variance) of one leaf value."""
    var = 1.0 / (n / sigma2 + 1.0 / sigma_mu2)
    return var * resid_sum / sigma2, var


def sigma2_posterior(sse: float, n: int, nu: float, lam: float) -> tuple[float, float]:
    """Inverse-gamma (shape, scale) for the error variance."""
    return (nu + n) / 2.0, (nu * lam + sse) / 2.0


def sample_sigma2(sse: float, n: int, nu: float, lam: float, rng) -> float:
    shape, scale = sigma2_posterior(sse, n, nu, lam)
    return scale / rng.standard_gamma(shape)


def _leaf_loglik(n, s, sigma2, sigma_mu2):
    denom = sigma2 + n * sigma_mu2
    return 0.5 * math.log(sigma2 / denom) + 0.5 * sigma_mu2 * s * s / (sigma2 * denom)


def _truncnorm_lower(lower: np.ndarray, rng) -> np.ndarray:
    """Standard normal draws conditioned on exceeding ``lower``."""
    u = np.clip(rng.random(lower.shape), 1e-300, 1.0 - 1e-16)
    out = np.empty_like(lower)
    neg = lower < 0
    p = ndtr(lower[neg])
    out[neg] = ndtri(p + u[neg] * (1.0 - p))
    out[~neg] = -ndtri(u[~neg] * ndtr(-lower[~neg]))
    return out


@njit(cache=True)
def _varying_columns(x, idx):
    p = x.shape[1]
    out = np.zeros(p, dtype=np.bool_)
    first = idx[0]
    for j in range(p):
        v = x[first, j]
        for i in idx:
            if x[i, j] != v:
                out[j] = True
                break
    return out


@njit(cache=True)
def _gather_sum(r, idx):
    acc = 0.0
    for i in idx:
        acc += r[i]
    return acc


class Backfitter:
    """MCMC state over ``n_trees`` trees for a fixed design matrix.

    The response passed to :meth:`sweep` is the (scaled or latent) target;
    ``sigma2`` is held by the caller.
    """

    def __init__(self, x: np.ndarray, prior: TreePrior, sigma_mu: float, rng):
        self.x = np.ascontiguousarray(x, dtype=float)
        self.n, self.p = self.x.shape
        self.prior = prior
        self.sigma_mu2 = sigma_mu**2
        self.rng = rng
        self.trees = [Tree(self.n) for _ in range(prior.n_trees)]
        self.fits = np.zeros((prior.n_trees, self.n))
        self.total = np.zeros(self.n)
        w = np.asarray(prior.move_weights, float)
        self._move_w = w / w.sum()
        self.accepted = np.zeros(3, dtype=np.int64)
        self.proposed = np.zeros(3, dtype=np.int64)

    # split candidates -------------------------------------------------
    def valid_vars(self, node: Node) -> np.ndarray:
        if node.valid is None:
            if node.idx.size < 2:
                node.valid = np.empty(0, dtype=np.int64)
            else:
                node.valid = np.flatnonzero(_varying_columns(self.x, node.idx))
        return node.valid

    def cut_values(self, node: Node, var: int) -> np.ndarray:
        """Observed unique values of ``var`` in the node, except the largest."""
        return np.unique(self.x[node.idx, var])[:-1]

    def _growable(self, leaves) -> list[Node]:
        return [lf for lf in leaves if self.valid_vars(lf).size > 0]

    def _move_probs(self, n_growable: int, n_nogs: int) -> np.ndarray:
        avail = np.array([n_growable > 0, n_nogs > 0, n_nogs > 0], dtype=float)
        w = self._move_w * avail
        return w / w.sum()

    def _draw_rule(self, node: Node):
        vars_ = self.valid_vars(node)
        var = int(vars_[self.rng.integers(vars_.size)])
        cuts = self.cut_values(node, var)
        return var, float(cuts[self.rng.integers(cuts.size)])

    # moves ------------------------------------------------------------
    def _split_loglik(self, node: Node, r: np.ndarray, s2: float) -> float:
        """Log marginal likelihood gain of node's current children over the node as a leaf."""
        sm2 = self.sigma_mu2
        left, right = node.left, node.right
        sl = _gather_sum(r, left.idx)
        sr = _gather_sum(r, right.idx)
        return (
            _leaf_loglik(left.idx.size, sl, s2, sm2)
            + _leaf_loglik(right.idx.size, sr, s2, sm2)
            - _leaf_loglik(node.idx.size, sl + sr, s2, sm2)
        )

    def _structure_logprior(self, depth: int) -> float:
        """Log prior ratio of splitting a leaf at ``depth`` into two leaves (rule terms excluded)."""
        ps = self.prior.split_prob
        return math.log(ps(depth)) + 2.0 * math.log(1.0 - ps(depth + 1)) - math.log(1.0 - ps(depth))

    def propose_grow(self, tree: Tree, r: np.ndarray, s2: float) -> bool:
        leaves = tree.leaves()
        growable = self._growable(leaves)
        nogs = tree.nogs()
        probs = self._move_probs(len(growable), len(nogs))
        leaf = growable[self.rng.integers(len(growable))]
        var, cut = self._draw_rule(leaf)
        parent_was_nog = leaf.parent is not None and leaf.parent.is_nog
        Tree.grow(leaf, var, cut, self.x)
        n_grow_new = len(growable) - 1 + len(self._growable((leaf.left, leaf.right)))
        n_nogs_new = len(nogs) - int(parent_was_nog) + 1
        probs_new = self._move_probs(n_grow_new, n_nogs_new)
        log_ratio = (
            math.log(probs_new[1]) - math.log(probs[0])
            + math.log(len(growable)) - math.log(n_nogs_new)
            + self._structure_logprior(leaf.depth)
            + self._split_loglik(leaf, r, s2)
        )
        if -self.rng.standard_exponential() < log_ratio:
            return True
        Tree.prune(leaf)
        return False

    def propose_prune(self, tree: Tree, r: np.ndarray, s2: float) -> bool:
        leaves = tree.leaves()
        growable = self._growable(leaves)
        nogs = tree.nogs()
        probs = self._move_probs(len(growable), len(nogs))
        node = nogs[self.rng.integers(len(nogs))]
        n_grow_new = len(growable) - len(self._growable((node.left, node.right))) + 1
        sibling = None
        if node.parent is not None:
            sibling = node.parent.right if node.parent.left is node else node.parent.left
        n_nogs_new = len(nogs) - 1 + int(sibling is not None and sibling.is_leaf)
        probs_new = self._move_probs(n_grow_new, n_nogs_new)
        log_ratio = (
            math.log(probs_new[0]) - math.log(probs[1])
            + math.log(len(nogs)) - math.log(n_grow_new)
            - self._structure_logprior(node.depth)
            - self._split_loglik(node, r, s2)
        )
        if -self.rng.standard_exponential() < log_ratio:
            Tree.prune(node)
            return True
        return False

    def propose_change(self, tree: Tree, r: np.ndarray, s2: float) -> bool:
        nogs = tree.nogs()
        node = nogs[self.rng.integers(len(nogs))]
        old = (node.var, node.cut, node.left, node.right)
        old_ll = self._split_loglik(node, r, s2)
        var, cut = self._draw_rule(node)
        Tree.resplit(node, var, cut, self.x)
        log_ratio = self._split_loglik(node, r, s2) - old_ll
        if -self.rng.standard_exponential() < log_ratio:
            return True
        node.var, node.cut, node.left, node.right = old
        return False

    def mh_step(self, tree: Tree, r: np.ndarray, s2: float) -> int:
        """One grow/prune/change proposal; returns the move index tried (or -1)."""
        growable = self._growable(tree.leaves())
        n_nogs = 0 if tree.is_stump else len(tree.nogs())
        if not growable and n_nogs == 0:
            return -1
        probs = self._move_probs(len(growable), n_nogs)
        move = min(int(np.searchsorted(np.cumsum(probs), self.rng.random(), side="right")), 2)
        fn = (self.propose_grow, self.propose_prune, self.propose_change)[move]
        self.proposed[move] += 1
        self.accepted[move] += fn(tree, r, s2)
        return move

    def draw_leaves(self, tree: Tree, r: np.ndarray, s2: float, out: np.ndarray | None = None) -> None:
        """Gibbs update of leaf values; optionally writes the tree's fit into ``out``."""
        leaves = tree.leaves()
        z = self.rng.standard_normal(len(leaves))
        for leaf, zi in zip(leaves, z):
            mean, var = leaf_posterior(leaf.idx.size, _gather_sum(r, leaf.idx), s2, self.sigma_mu2)
            leaf.mu = mean + math.sqrt(var) * zi
            if out is not None:
                out[leaf.idx] = leaf.mu

    def sweep(self, target: np.ndarray, sigma2: float) -> None:
        """Update every tree in turn against its partial residual."""
        for j, tree in enumerate(self.trees):
            r = target - self.total + self.fits[j]
            self.mh_step(tree, r, sigma2)
            self.total -= self.fits[j]
            self.draw_leaves(tree, r, sigma2, out=self.fits[j])
            self.total += self.fits[j]

    def snapshot(self) -> Forest:
        return Forest.from_trees([t.freeze() for t in self.trees])


# -------------------------------------------------------------------------


@dataclass(frozen=True)
class CleverCovariate:
    """``h = t / pi - (1 - t) / (1 - pi)`` plus the propensity used to build it."""

    h: np.ndarray
    pi_source: str
    propensity: "Callable[[np.ndarray], np.ndarray] | None" = None


def clever_covariate(t, pi_hat, pi_source: str = "user", propensity=None) -> CleverCovariate:
    t = np.asarray(t)
    pi = np.asarray(pi_hat, dtype=float)
    if t.shape != pi.shape:
        raise SchemaError("t and pi_hat must have equal length")
    if np.any((pi <= 0) | (pi >= 1)):
        raise DomainError("propensities must lie strictly inside (0, 1)")
    h = t / pi - (1 - t) / (1 - pi)
    return CleverCovariate(h=h, pi_source=pi_source, propensity=propensity)


@dataclass
class BartFit:
    """Kept posterior draws of a sum-of-trees model.

    Predictions are ``shift + scale * forest(w)`` where ``w`` is the design
    row built from ``(t, x)`` (and ``h`` for a clever-covariate fit).
    """

    kind: str
    forests: list
    column_names: tuple
    shift: float
    scale: float
    prior: TreePrior
    mcmc: McmcSettings
    seed: int | None
    sigma: np.ndarray | None = None
    sigma_trace: np.ndarray | None = None
    uses_treatment: bool = True
    n_extra: int = 0
    propensity: object = None
    pi_hat: np.ndarray | None = None
    x_train: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_draws(self) -> int:
        return len(self.forests)

    @property
    def uses_clever_covariate(self) -> bool:
        return self.propensity is not None

    def split_counts(self) -> np.ndarray:
        p = len(self.column_names)
        return np.array([f.split_counts(p) for f in self.forests])

    def design(self, x_new, t_new=None, extra_new=None) -> np.ndarray:
        x_new = np.atleast_2d(np.asarray(x_new, dtype=float))
        n_cov = len(self.column_names) - int(self.uses_treatment) - self.n_extra
        if x_new.shape[1] != n_cov:
            raise SchemaError(f"expected {n_cov} covariate columns, got {x_new.shape[1]}")
        if not np.all(np.isfinite(x_new)):
            raise SchemaError("non-finite covariates")
        cols = []
        if self.uses_treatment:
            if t_new is None:
                raise SchemaError("this model needs t_new")
            t_new = np.broadcast_to(np.asarray(t_new, dtype=float), (x_new.shape[0],))
            cols.append(t_new[:, None])
        cols.append(x_new)
        if self.n_extra:
            if self.propensity is not None:
                pi = self.propensity(x_new)
                cols.append(clever_covariate(t_new, pi).h[:, None])
            else:
                if extra_new is None:
                    raise SchemaError("model was fitted with extra columns; pass extra_new")
                extra_new = np.asarray(extra_new, float).reshape(x_new.shape[0], self.n_extra)
                cols.append(extra_new)
        return np.hstack(cols)

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "column_names": list(self.column_names),
            "shift": self.shift,
            "scale": self.scale,
            "prior": asdict(self.prior),
            "mcmc": asdict(self.mcmc),
            "seed": self.seed,
            "uses_treatment": self.uses_treatment,
            "n_extra": self.n_extra,
            "sigma": None if self.sigma is None else self.sigma.tolist(),
            "sigma_trace": None if self.sigma_trace is None else self.sigma_trace.tolist(),
            "draws": [[t.to_dict() for t in f.trees()] for f in self.forests],
        }
        if self.pi_hat is not None:
            out["pi_hat"] = self.pi_hat.tolist()
        if isinstance(self.propensity, TrainingPropensity):
            out["propensity"] = self.propensity.to_dict()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "BartFit":
        prior = d["prior"]
        prior["move_weights"] = tuple(prior["move_weights"])
        fit = cls(
            kind=d["kind"],
            forests=[Forest.from_trees([CompactTree.from_dict(t) for t in f]) for f in d["draws"]],
            column_names=tuple(d["column_names"]),
            shift=d["shift"],
            scale=d["scale"],
            prior=TreePrior(**prior),
            mcmc=McmcSettings(**d["mcmc"]),
            seed=d["seed"],
            sigma=None if d["sigma"] is None else np.asarray(d["sigma"]),
            sigma_trace=None if d["sigma_trace"] is None else np.asarray(d["sigma_trace"]),
            uses_treatment=d["uses_treatment"],
            n_extra=d["n_extra"],
            pi_hat=None if d.get("pi_hat") is None else np.asarray(d["pi_hat"]),
        )
        if "propensity" in d:
            fit.propensity = TrainingPropensity.from_dict(d["propensity"])
        return fit


class TrainingPropensity:
    """Propensity function backed by a probit fit.

    Rows equal to training rows reuse the stored posterior-mean estimate;
    other rows are predicted from the probit draws. Values are clipped.
    """

    def __init__(self, model: BartFit | None, x_train: np.ndarray, pi_train: np.ndarray, clip: float = 1e-3):
        self.model = model
        self.x_train = np.asarray(x_train, float)
        self.pi_train = np.asarray(pi_train, float)
        self.clip = clip
        self._lookup = {row.tobytes(): i for i, row in enumerate(self.x_train)}

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        if x.shape == self.x_train.shape and np.array_equal(x, self.x_train):
            pi = self.pi_train
        else:
            idx = np.array([self._lookup.get(row.tobytes(), -1) for row in x])
            pi = np.empty(x.shape[0])
            known = idx >= 0
            pi[known] = self.pi_train[idx[known]]
            if (~known).any():
                if self.model is None:
                    raise SchemaError("covariate rows outside the training set and no propensity model stored")
                pi[~known] = posterior_mean_probability(self.model, x[~known])
        return np.clip(pi, self.clip, 1.0 - self.clip)

    def to_dict(self) -> dict:
        return {
            "x_train": self.x_train.tolist(),
            "pi_train": self.pi_train.tolist(),
            "clip": self.clip,
            "model": None if self.model is None else self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingPropensity":
        model = None if d["model"] is None else BartFit.from_dict(d["model"])
        return cls(model, np.asarray(d["x_train"]), np.asarray(d["pi_train"]), d["clip"])


def _run_chain(bf: Backfitter, target_fn, sigma_fn, mcmc: McmcSettings):
    """Shared Gibbs loop. ``target_fn`` refreshes latent targets, ``sigma_fn`` draws sigma^2."""
    forests, sigmas, trace = [], [], []
    total_iter = mcmc.burn_in + mcmc.draws * mcmc.thin
    sigma2 = sigma_fn(None)
    for it in range(total_iter):
        target = target_fn()
        bf.sweep(target, sigma2)
        sigma2 = sigma_fn(target)
        trace.append(sigma2)
        if it >= mcmc.burn_in and (it - mcmc.burn_in) % mcmc.thin == mcmc.thin - 1:
            forests.append(bf.snapshot())
            sigmas.append(sigma2)
    return forests, np.asarray(sigmas), np.asarray(trace)


def fit_continuous(
    ds,
    extra_columns=None,
    mcmc: McmcSettings = McmcSettings(),
    rng=None,
    prior: TreePrior = TreePrior(),
    seed: int | None = None,
) -> BartFit:
    """Fit ``y ~ f(t, x [, extra])`` with Gaussian errors.

    ``extra_columns`` is either a matrix of additional splitting columns or
    a :class:`CleverCovariate`; in the latter case ``predict`` recomputes
    ``h`` at new ``(t, x)`` from the stored propensity function.
    """
    rng = as_generator(rng if rng is not None else seed)
    if ds.n < 10:
        raise SchemaError("need at least 10 observations")
    x = np.asarray(ds.x, float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(ds.y))):
        raise SchemaError("non-finite inputs")
    names = ["T", *ds.covariate_names]
    cols = [np.asarray(ds.t, float)[:, None], x]
    propensity = None
    n_extra = 0
    if isinstance(extra_columns, CleverCovariate):
        cols.append(extra_columns.h[:, None])
        names.append("h")
        propensity = extra_columns.propensity
        if propensity is None:
            raise SchemaError("clever covariate needs a propensity function for prediction")
        n_extra = 1
    elif extra_columns is not None:
        extra = np.asarray(extra_columns, float).reshape(ds.n, -1)
        cols.append(extra)
        names += [f"extra{j}" for j in range(extra.shape[1])]
        n_extra = extra.shape[1]
    w = np.hstack(cols)

    y = np.asarray(ds.y, float)
    lo, hi = float(y.min()), float(y.max())
    span = hi - lo
    if span == 0:
        warnings.warn("outcome has zero variance; predictions collapse to the constant", RuntimeWarning, stacklevel=2)
        shift, scale = lo, 1.0
    else:
        shift, scale = lo + 0.5 * span, span
    ys = (y - shift) / scale

    sigma_mu = 0.5 / (prior.k * math.sqrt(prior.n_trees))
    sd = float(np.std(ys, ddof=1))
    sigma_hat = max(sd, 1e-8)
    lam = sigma_hat**2 * chi2.ppf(1.0 - prior.q, prior.nu) / prior.nu
    bf = Backfitter(w, prior, sigma_mu, rng)

    def sigma_fn(_target):
        if _target is None:
            return sigma_hat**2
        sse = float(np.sum((ys - bf.total) ** 2))
        return sample_sigma2(sse, ds.n, prior.nu, lam, rng)

    forests, s2, trace = _run_chain(bf, lambda: ys, sigma_fn, mcmc)
    log.info("continuous fit: accept grow/prune/change %s of %s", bf.accepted.tolist(), bf.proposed.tolist())
    return BartFit(
        kind=CONTINUOUS,
        forests=forests,
        column_names=tuple(names),
        shift=shift,
        scale=scale,
        prior=prior,
        mcmc=mcmc,
        seed=seed,
        sigma=np.sqrt(s2) * scale,
        sigma_trace=np.sqrt(trace) * scale,
        n_extra=n_extra,
        propensity=propensity,
        x_train=x,
    )


def fit_probit(
    x,
    t,
    mcmc: McmcSettings = McmcSettings(),
    rng=None,
    prior: TreePrior = TreePrior(),
    column_names=None,
    seed: int | None = None,
) -> BartFit:
    """Probit sum-of-trees model for ``P(t = 1 | x)``.

    The fit carries ``pi_hat``, the posterior mean of the probability at
    each training row.
    """
    rng = as_generator(rng if rng is not None else seed)
    x = np.asarray(x, float)
    t = np.asarray(t)
    if not np.all((t == 0) | (t == 1)):
        raise DomainError("t must be 0/1")
    n1 = int(t.sum())
    if n1 == 0 or n1 == t.size:
        raise PositivityError("probit fit needs both classes")
    offset = float(ndtri(n1 / t.size))
    sigma_mu = prior.probit_range / (prior.k * math.sqrt(prior.n_trees))
    bf = Backfitter(x, prior, sigma_mu, rng)
    positive = t == 1

    def target_fn():
        f = offset + bf.total
        lower = np.where(positive, -f, f)
        e = _truncnorm_lower(lower, rng)
        return np.where(positive, f + e, f - e) - offset

    forests, _, _ = _run_chain(bf, target_fn, lambda _t: 1.0, mcmc)
    names = tuple(column_names) if column_names is not None else tuple(f"x{j}" for j in range(x.shape[1]))
    fit = BartFit(
        kind=PROBIT,
        forests=forests,
        column_names=names,
        shift=offset,
        scale=1.0,
        prior=prior,
        mcmc=mcmc,
        seed=seed,
        uses_treatment=False,
        x_train=x,
    )
    fit.pi_hat = posterior_mean_probability(fit, x)
    return fit


def predict(fit: BartFit, x_new, t_new=None, extra_new=None, noise: bool = False, rng=None) -> np.ndarray:
    """Per-draw predictions, shape ``(n_draws, n_rows)``.

    Continuous fits return the regression function, or predictive samples
    with ``noise=True``. Probit fits return the latent mean; see
    :func:`posterior_mean_probability` for probabilities.
    """
    w = fit.design(x_new, t_new, extra_new)
    out = np.empty((fit.n_draws, w.shape[0]))
    for d, forest in enumerate(fit.forests):
        out[d] = fit.shift + fit.scale * forest.predict(w)
    if noise:
        if fit.kind != CONTINUOUS:
            raise ValueError("noise sampling applies to continuous fits only")
        rng = as_generator(rng)
        out += fit.sigma[:, None] * rng.standard_normal(out.shape)
    return out


def posterior_mean_probability(fit: BartFit, x) -> np.ndarray:
    if fit.kind != PROBIT:
        raise ValueError("probabilities need a probit fit")
    return ndtr(predict(fit, x)).mean(axis=0)


def inclusion_proportions(fit: BartFit) -> dict:
    """Share of split rules using each column, averaged over draws with splits."""
    counts = fit.split_counts()
    totals = counts.sum(axis=1)
    used = totals > 0
    names = list(fit.column_names)
    if not used.any():
        return {"proportions": dict.fromkeys(names, 0.0), "empty": True, "n_draws_used": 0}
    props = (counts[used] / totals[used, None]).mean(axis=0)
    return {"proportions": dict(zip(names, props.tolist())), "empty": False, "n_draws_used": int(used.sum())}


def diagnostics_csv(fit: BartFit) -> str:
    """Per-draw sigma and split counts, then a row of inclusion proportions."""
    names = list(fit.column_names)
    lines = ["draw,sigma," + ",".join(f"splits_{c}" for c in names)]
    counts = fit.split_counts()
    for d in range(fit.n_draws):
        s = "" if fit.sigma is None else repr(float(fit.sigma[d]))
        lines.append(f"{d},{s}," + ",".join(str(int(c)) for c in counts[d]))
    inc = inclusion_proportions(fit)["proportions"]
    lines.append("inclusion,," + ",".join(repr(float(inc[c])) for c in names))
    return "\n".join(lines) + "\n"
