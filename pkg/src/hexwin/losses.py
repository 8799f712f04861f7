"""The four training objectives and their weighted total.

Conventions shared with every derived test oracle: standard deviations are
population (divide by N); a gene column with zero variance in either
argument contributes Pearson correlation 0; the cosine of a zero vector is
0. Each loss has a companion returning analytic input gradients, certified
against the central finite-difference oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, ShapeError


@dataclass(frozen=True)
class LossWeights:
    mse: float = 0.001
    pearson: float = 1.0
    tfa: float = 0.1
    dev: float = 0.1

    def __post_init__(self):
        if min(self.mse, self.pearson, self.tfa, self.dev) < 0.0:
            raise InputError("loss weights must be nonnegative")


@dataclass(frozen=True)
class LossReport:
    mse: float
    pearson: float
    tfa: float
    dev: float
    total: float


def _check_matching(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeError(f"{op} needs two equal-shape (N, G) arrays, "
                         f"got {a.shape} and {b.shape}")


def loss_mse(y_hat: np.ndarray, y: np.ndarray) -> float:
    """Mean squared prediction error over all (spot, gene) entries."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_matching(y_hat, y, "loss_mse")
    return float(np.mean((y_hat - y) ** 2))


def loss_mse_grad(y_hat: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_matching(y_hat, y, "loss_mse")
    diff = y_hat - y
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size


def loss_pearson(y_hat: np.ndarray, y: np.ndarray) -> float:
    """1 - mean over genes of the across-spot Pearson correlation."""
    return loss_pearson_grad(y_hat, y)[0]


def loss_pearson_grad(y_hat: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_matching(y_hat, y, "loss_pearson")
    n, g = y_hat.shape
    if n < 2:
        raise InputError("loss_pearson requires at least 2 spots")
    u = y_hat - y_hat.mean(axis=0)
    v = y - y.mean(axis=0)
    su = np.sqrt((u ** 2).sum(axis=0))
    sv = np.sqrt((v ** 2).sum(axis=0))
    ok = (su > 0.0) & (sv > 0.0)
    denom = np.where(ok, su * sv, 1.0)
    rho = np.where(ok, (u * v).sum(axis=0) / denom, 0.0)
    loss = 1.0 - float(rho.mean())
    # d rho / d y_hat = v/(su sv) - rho * u / su^2, already zero-mean per column
    grad = np.where(ok, v / denom - rho * u / np.where(ok, su ** 2, 1.0), 0.0)
    return loss, -grad / g


def loss_tfa(z: np.ndarray, t: np.ndarray, proj_w: np.ndarray,
             proj_b: np.ndarray) -> float:
    """Mean (1 - cosine) between projected embeddings p(z_i) and targets t_i."""
    return loss_tfa_grads(z, t, proj_w, proj_b)[0]


def loss_tfa_grads(z, t, proj_w, proj_b):
    """Returns (loss, d_z, d_proj_w, d_proj_b)."""
    z = np.asarray(z, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if z.ndim != 2 or t.ndim != 2 or len(z) != len(t):
        raise ShapeError("loss_tfa needs (N, D_out) embeddings and (N, D_t) targets")
    if proj_w.shape != (z.shape[1], t.shape[1]) or proj_b.shape != (t.shape[1],):
        raise ShapeError("projection parameter shapes do not match z and t")
    n = len(z)
    p = z @ proj_w + proj_b
    pn = np.linalg.norm(p, axis=1)
    tn = np.linalg.norm(t, axis=1)
    ok = (pn > 0.0) & (tn > 0.0)
    denom = np.where(ok, pn * tn, 1.0)
    cos = np.where(ok, (p * t).sum(axis=1) / denom, 0.0)
    loss = float(np.mean(1.0 - cos))
    dcos_dp = np.where(ok[:, None],
                       t / denom[:, None] - cos[:, None] * p / np.where(ok, pn ** 2, 1.0)[:, None],
                       0.0)
    d_p = -dcos_dp / n
    return loss, d_p @ proj_w.T, z.T @ d_p, d_p.sum(axis=0)


def loss_dev(y_dev_hat: np.ndarray, y: np.ndarray, eps: float = 1e-8) -> float:
    """Squared error between gene-standardized deviations of truth and prediction.

    Ground-truth deviations are the gene columns of y minus their means; both
    deviation matrices are standardized per gene by (population std + eps).
    """
    return loss_dev_grad(y_dev_hat, y, eps)[0]


def loss_dev_grad(y_dev_hat, y, eps: float = 1e-8):
    y_dev_hat = np.asarray(y_dev_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_matching(y_dev_hat, y, "loss_dev")
    n, g = y.shape
    if n < 2:
        raise InputError("loss_dev requires at least 2 spots")
    t_dev = y - y.mean(axis=0)
    t_std = np.sqrt(np.mean(t_dev ** 2, axis=0))
    t_tilde = t_dev / (t_std + eps)
    p = y_dev_hat
    p_mu = p.mean(axis=0)
    p_sigma = np.sqrt(np.mean((p - p_mu) ** 2, axis=0))
    s = p_sigma + eps
    p_tilde = p / s
    diff = t_tilde - p_tilde
    loss = float(np.mean(diff ** 2))
    # gradient flows through both p/s and sigma(p); zero-variance columns get
    # no sigma term (subgradient choice)
    inner = (diff * p_tilde).sum(axis=0)
    sigma_safe = np.where(p_sigma > 0.0, p_sigma, 1.0)
    dsigma = np.where(p_sigma > 0.0, (p - p_mu) / (n * sigma_safe), 0.0)
    grad = (2.0 / diff.size) * (-diff / s + inner * dsigma / s)
    return loss, grad


def loss_total(mse: float, pearson: float, tfa: float, dev: float,
               weights: LossWeights = LossWeights()) -> LossReport:
    """Weighted sum of the four terms."""
    total = (weights.mse * mse + weights.pearson * pearson
             + weights.tfa * tfa + weights.dev * dev)
    return LossReport(mse=float(mse), pearson=float(pearson), tfa=float(tfa),
                      dev=float(dev), total=float(total))
