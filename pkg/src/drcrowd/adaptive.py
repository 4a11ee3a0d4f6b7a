"""Confidence-margin routing: adaptive item selection (accept the direct
method on high-margin items) and adaptive worker selection (sample workers
proportional to per-item margin scores)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import DSParams, EstimateVector, SoftAnnotation, argmax_lowest, ds_prior_offset
from .errors import AnnotationUnavailableError, InputError
from .estimators import (
    ClipThreshold,
    SamplingPlan,
    SampleRealization,
    auto_threshold,
    estimate_dr_clipped,
    sample_workers,
)
from .estimators import _softs_matrix

ROUTE_ACCEPT_DM = "accept_dm"
ROUTE_ESCALATE = "escalate"

# AWS can assign a worker an exactly-zero margin (tied likelihood rows);
# the plan type forbids pi=0, so such entries are floored instead.
PI_FLOOR = 1e-12


@dataclass(frozen=True)
class AdaptiveConfig:
    rho: float = 0.9
    lam: float = 1.0
    base_pi: float = 0.3
    eta_mode: str = "auto"
    eta: float = 1.0
    use_ais: bool = False
    use_aws: bool = False
    margin_base: str = "likelihood"

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise InputError(f"rho must be in [0, 1], got {self.rho}")
        if self.lam <= 0.0:
            raise InputError(f"lambda must be positive, got {self.lam}")
        if not 0.0 < self.base_pi <= 1.0:
            raise InputError(f"base_pi must be in (0, 1], got {self.base_pi}")
        if self.eta_mode not in ("auto", "fixed"):
            raise InputError(f"eta_mode must be auto|fixed, got {self.eta_mode!r}")
        if self.eta_mode == "fixed" and self.eta < 1.0:
            raise InputError(f"fixed eta must be >= 1, got {self.eta}")
        if self.margin_base not in ("likelihood", "posterior"):
            raise InputError(f"margin_base must be likelihood|posterior, got {self.margin_base!r}")


@dataclass(frozen=True)
class AdaptiveDecision:
    route: str
    estimate: EstimateVector
    margin: float

    def __post_init__(self):
        if self.route not in (ROUTE_ACCEPT_DM, ROUTE_ESCALATE):
            raise InputError(f"unknown route {self.route!r}")
        if self.route == ROUTE_ACCEPT_DM and self.estimate.realized_cost != 0:
            raise InputError("accept_dm decisions must have zero realized cost")


def confidence_margin(p) -> float:
    """Largest entry minus second-largest entry of a probability vector."""
    if isinstance(p, SoftAnnotation):
        p = p.probs
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size < 2:
        raise InputError("confidence margin needs a probability vector of length >= 2")
    top2 = np.partition(p, p.size - 2)[-2:]
    return float(top2.max() - top2.min())


def ais_route(params: DSParams, softs, cfg: AdaptiveConfig):
    """Route an item by the confidence margin of its direct-method posterior.

    The posterior applies the usual belief update with imitated annotations
    entering in expectation: post[y] ~ tau[y] * prod_i sum_l softs_i[l] *
    mu_i[l, y]. Accepts (strictly) above cfg.rho, else escalates.
    """
    s = _softs_matrix(softs, params.m, params.k)
    post = _kernels.impl.posterior_soft(params.prior, params.confusion_tensor(), s)
    margin = confidence_margin(post)
    route = ROUTE_ACCEPT_DM if margin > cfg.rho else ROUTE_ESCALATE
    return route, SoftAnnotation(post), margin


def aws_plan(params: DSParams, softs, cfg: AdaptiveConfig) -> SamplingPlan:
    """Margin-proportional worker sampling plan for one item.

    Each worker's score is the confidence margin of its normalized labeling
    probability over candidate truths (likelihood rows by default, prior-
    weighted with margin_base="posterior"); scores are normalized to a
    distribution and scaled by lambda, saturating at 1. All-zero scores fall
    back to the uniform plan min(lambda/m, 1).
    """
    if params.m < 2:
        raise InputError("adaptive worker selection needs at least 2 workers")
    s = _softs_matrix(softs, params.m, params.k)
    mu = params.confusion_tensor()
    if cfg.margin_base == "posterior":
        mu = mu * params.prior[None, None, :]
    gamma = _kernels.impl.aws_margins(mu, s)
    total = float(gamma.sum())
    if total <= 0.0:
        probs = np.full(params.m, min(cfg.lam / params.m, 1.0))
    else:
        probs = np.minimum(cfg.lam * gamma / total, 1.0)
    return SamplingPlan(np.maximum(probs, PI_FLOOR))


def run_adaptive(
    params: DSParams,
    tables,
    softs,
    worker_oracle,
    cfg: AdaptiveConfig,
    rng: np.random.Generator,
    offset=None,
) -> AdaptiveDecision:
    """Full adaptive pipeline for a single item.

    With item selection on, a high-margin direct-method posterior is accepted
    at zero cost (the decision's estimate then carries the posterior belief
    itself and its argmax label). Otherwise workers are sampled, from the
    margin-proportional plan when worker selection is on or uniformly at
    base_pi, the oracle is queried only for sampled workers, and the clipped
    doubly robust estimate is returned with eta fixed or auto-selected.
    """
    route, posterior, margin = ais_route(params, softs, cfg)
    if cfg.use_ais and route == ROUTE_ACCEPT_DM:
        estimate = EstimateVector(
            values=posterior.probs,
            chosen=argmax_lowest(posterior.probs),
            realized_cost=0,
        )
        return AdaptiveDecision(route=ROUTE_ACCEPT_DM, estimate=estimate, margin=margin)

    if cfg.use_aws:
        plan = aws_plan(params, softs, cfg)
    else:
        plan = SamplingPlan.uniform(params.m, cfg.base_pi)
    included = sample_workers(plan, rng)
    labels = {}
    for i in sorted(included):
        try:
            labels[i] = int(worker_oracle(i))
        except Exception as exc:
            raise AnnotationUnavailableError(f"worker {i} annotation unavailable") from exc
    real = SampleRealization(included=frozenset(included), labels=labels)
    clip = ClipThreshold(cfg.eta) if cfg.eta_mode == "fixed" else auto_threshold(plan)
    if offset is None:
        offset = ds_prior_offset(params)
    estimate = estimate_dr_clipped(tables, softs, real, plan, clip, offset=offset)
    return AdaptiveDecision(route=ROUTE_ESCALATE, estimate=estimate, margin=margin)
