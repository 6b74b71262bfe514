"""Studentized range distribution evaluated by direct numeric integration.

The range of k standard normals conditioned on a pooled scale estimate
underlies all-pairs mean comparisons. The CDF here composes two integrals:
the inner range probability over a fixed Gauss-Legendre panel grid in z,
and an outer integral over the chi-distributed scale factor. Quantiles come
from bisection on the CDF. Degrees of freedom above 10,000 switch to the
infinite-df form (the scale factor is then indistinguishable from 1).
"""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtr

__all__ = ["srange_cdf", "srange_quantile", "DF_INFINITE_CUTOFF"]

DF_INFINITE_CUTOFF = 10_000

_Z_LO, _Z_HI = -9.0, 9.0
_Z_PANELS = 36
_Z_NODES = 24
_S_PANELS = 48
_S_NODES = 24


def _panel_rule(lo: float, hi: float, panels: int, nodes_per_panel: int):
    x, w = leggauss(nodes_per_panel)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


_ZN, _ZW = _panel_rule(_Z_LO, _Z_HI, _Z_PANELS, _Z_NODES)
_PHI_ZN = np.exp(-0.5 * _ZN**2) / math.sqrt(2.0 * math.pi)
_NDTR_ZN = ndtr(_ZN)


def _range_cdf_inf(q, k: int) -> np.ndarray:
    """P(range of k standard normals <= q), vectorized over q."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    out = np.zeros(q.shape)
    pos = q > 0
    if pos.any():
        qp = q[pos]
        # inner factor: [Phi(z) - Phi(z - q)]^(k-1) integrated against k*phi(z)
        diff = _NDTR_ZN[None, :] - ndtr(_ZN[None, :] - qp[:, None])
        np.clip(diff, 0.0, 1.0, out=diff)
        integrand = _PHI_ZN[None, :] * diff ** (k - 1)
        out[pos] = k * (integrand @ _ZW)
    return np.clip(out, 0.0, 1.0)


def _chi_scale_rule(df: float):
    """Quadrature nodes/weights for s = chi_df / sqrt(df) with density folded in."""
    sd = 1.0 / math.sqrt(2.0 * df)
    lo = max(1e-12, 1.0 - 14.0 * sd - 10.0 / df)
    hi = 1.0 + 14.0 * sd + 10.0 / df
    nodes, weights = _panel_rule(lo, hi, _S_PANELS, _S_NODES)
    logpdf = (
        (1.0 - 0.5 * df) * math.log(2.0)
        + 0.5 * df * math.log(df)
        - math.lgamma(0.5 * df)
        + (df - 1.0) * np.log(nodes)
        - 0.5 * df * nodes**2
    )
    return nodes, weights * np.exp(logpdf)


def srange_cdf(q: float, k: int, df: float) -> float:
    """CDF of the studentized range for k groups and df error degrees of freedom."""
    if k < 2:
        raise ValueError("k must be >= 2")
    if q <= 0:
        return 0.0
    if not np.isfinite(df) or df > DF_INFINITE_CUTOFF:
        return float(_range_cdf_inf(q, k)[0])
    if df < 1:
        raise ValueError("df must be >= 1")
    nodes, fw = _chi_scale_rule(float(df))
    vals = _range_cdf_inf(q * nodes, k)
    return float(np.clip(vals @ fw, 0.0, 1.0))


def srange_quantile(alpha: float, k: int, df: float, tol: float = 1e-5) -> float:
    """Upper-alpha quantile: the q with P(Q > q) = alpha, by bisection."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    target = 1.0 - alpha
    lo, hi = 1e-8, 10.0
    while srange_cdf(hi, k, df) < target:
        hi *= 2.0
        if hi > 1e6:
            raise RuntimeError("quantile bracket failed to close")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if srange_cdf(mid, k, df) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
