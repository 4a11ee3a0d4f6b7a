"""Numpy reference implementation of the per-item evaluation kernels.

Array layout shared with the compiled backend:
  tables  (m, k, k) float64, entry [i, y, l] = S_i(y, l)
  mu      (m, k, k) float64, entry [i, l, y] = P_i(report l | truth y)
  softs   (m, k)    float64, per-worker soft annotation rows
  labels  (m,)      int64,   hard labels (valid where included)
  included (m,)     uint8,   realized inclusion mask
"""

import numpy as np


def iw_values(tables, labels):
    m = tables.shape[0]
    gathered = tables[np.arange(m), :, labels]
    return gathered.sum(axis=0) / m


def is_values(tables, included, labels, inv_pi):
    m = tables.shape[0]
    gathered = tables[np.arange(m), :, labels]
    w = included.astype(np.float64) * inv_pi
    return (w[:, None] * gathered).sum(axis=0) / m


def dm_values(tables, softs):
    m = tables.shape[0]
    return np.einsum("il,iyl->y", softs, tables) / m


def dr_values(tables, softs, included, labels, weights):
    m = tables.shape[0]
    baseline = np.einsum("il,iyl->iy", softs, tables)
    gathered = tables[np.arange(m), :, labels]
    incl = included.astype(bool)[:, None]
    # weight exactly 1 contributes S_i directly; baseline + 1*(S-baseline)
    # differs by an ulp and would break the exact pi=1 identity with IW.
    unit = incl & (weights == 1.0)[:, None]
    contrib = np.where(
        unit,
        gathered,
        np.where(incl, baseline + weights[:, None] * (gathered - baseline), baseline),
    )
    return contrib.sum(axis=0) / m


def subset_counts(included, labels, k, m):
    counts = np.bincount(labels[included.astype(bool)], minlength=k)
    return counts.astype(np.float64) / m


def log_posterior_hard(log_prior, log_mu, obs_workers, obs_labels):
    logp = log_prior.copy()
    if obs_workers.size:
        logp = logp + log_mu[obs_workers, obs_labels, :].sum(axis=0)
    logp -= logp.max()
    p = np.exp(logp)
    return p / p.sum()


def posterior_soft(prior, mu, softs):
    lik = np.einsum("il,ily->iy", softs, mu)
    logp = np.log(prior) + np.log(lik).sum(axis=0)
    logp -= logp.max()
    p = np.exp(logp)
    return p / p.sum()


def aws_margins(mu, softs):
    lik = np.einsum("il,ily->iy", softs, mu)
    lik = lik / lik.sum(axis=1, keepdims=True)
    top2 = np.sort(lik, axis=1)[:, -2:]
    return top2[:, 1] - top2[:, 0]
