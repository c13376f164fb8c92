"""Numerical studies of random-feature attention.

Every trial draws from its own ``RngState`` child keyed on (cell, trial), so
results do not depend on execution order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from fastrpe.core.features import (
    FeatureKind, apply_feature_map, prf_variance_closed_form, sample_feature_map, sample_kernel_estimates,
)
from fastrpe.core.tensor import RngState, as_row, numerical_rank, unit_sphere_rows
from fastrpe.shared.errors import PreconditionError, RangeError

# pilot-run threshold for "huge" error at large R, stored with each report
LARGE_R_THRESHOLD = 1.0
MIN_VARIANCE_SAMPLES = 10_000
_COUNT_MAX = 2**63 - 1


@dataclass
class ApproxCell:
    R: float
    m: int
    trials: int
    mean_l1: float
    std_l1: float

    @property
    def standard_error(self) -> float:
        return self.std_l1 / math.sqrt(self.trials)


@dataclass
class ApproxErrorReport:
    d: int
    n_keys: int
    kind: str = FeatureKind.PRF.value
    large_R_threshold: float = LARGE_R_THRESHOLD
    grid: list[ApproxCell] = field(default_factory=list)

    def cell(self, R: float, m: int) -> ApproxCell:
        for c in self.grid:
            if c.R == R and c.m == m:
                return c
        raise KeyError((R, m))


@dataclass
class TailCell:
    m: int
    trials: int
    failure_rate: float
    failure_rate_4eps: float


@dataclass
class ComplexityReport:
    n: int
    R: float
    epsilon: float
    delta: float
    m_bound: int
    empirical_tail: list[TailCell] = field(default_factory=list)


@dataclass
class VarianceResult:
    empirical: float
    closed_form: float
    rel_err: float


@dataclass
class ExpressivenessResult:
    rank_B: int
    bound: int
    exceeds: bool


def softmax_distribution(query: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """softmax over keys of the raw dot products, no temperature."""
    logits = keys @ query
    weights = np.exp(logits - logits.max())
    return weights / weights.sum()


def random_feature_distribution(query: np.ndarray, keys: np.ndarray, spec) -> np.ndarray:
    """Normalized phi(q) . phi(k_j) over keys.

    Positive kinds are evaluated in the log domain: the query's -||q||^2/2 term
    and the 1/m scale cancel under normalization, so only w_f . (q + k_j) -
    ||k_j||^2/2 is exponentiated, after subtracting its global maximum.
    """
    if spec.kind is FeatureKind.TRF or not spec.kind.randomized:
        phi = apply_feature_map(spec, np.vstack([query[None, :], keys]))
        scores = phi[1:] @ phi[0]
        return scores / scores.sum()
    logits = (keys + query) @ spec.w.T - 0.5 * np.einsum("ij,ij->i", keys, keys)[:, None]
    scores = np.exp(logits - logits.max()).sum(axis=1)
    return scores / scores.sum()


def attention_l1_error(query: np.ndarray, keys: np.ndarray, spec) -> float:
    """||A - A_hat||_1 for one query against its keys."""
    exact = softmax_distribution(query, keys)
    approx = random_feature_distribution(query, keys, spec)
    return float(np.abs(exact - approx).sum())


def _sphere_instance(rng: RngState, n_keys: int, d: int, R: float) -> tuple[np.ndarray, np.ndarray]:
    points = unit_sphere_rows(rng, n_keys + 1, d) * R
    return points[0], points[1:]


def approx_error_experiment(d: int, n_keys: int, Rs: Sequence[float], ms: Sequence[int], trials: int,
                            rng: RngState, kind=FeatureKind.PRF) -> ApproxErrorReport:
    """Mean and spread of ||A - A_hat||_1 over a grid of norms R and widths m.

    Query and keys are uniform on the unit sphere, scaled by R; each trial
    draws a fresh instance and a fresh feature map.
    """
    if min(d, n_keys, trials) < 1:
        raise PreconditionError(f"d, n_keys, trials must be >= 1, got {d}, {n_keys}, {trials}")
    kind = FeatureKind(kind)
    if not kind.randomized:
        raise PreconditionError("the approximation experiment needs a randomized feature map")
    report = ApproxErrorReport(d=d, n_keys=n_keys, kind=kind.value)
    for r_idx, R in enumerate(Rs):
        for m_idx, m in enumerate(ms):
            errors = np.empty(trials)
            for t in range(trials):
                trial_rng = rng.child(r_idx, m_idx, t)
                query, keys = _sphere_instance(trial_rng, n_keys, d, float(R))
                spec = sample_feature_map(kind, int(m), d, trial_rng)
                errors[t] = attention_l1_error(query, keys, spec)
            std = float(errors.std(ddof=1)) if trials > 1 else 0.0
            report.grid.append(ApproxCell(float(R), int(m), trials, float(errors.mean()), std))
    return report


def variance_validation(x, y, m: int, samples: int, rng: RngState) -> VarianceResult:
    """Monte Carlo variance of the PRF kernel estimate against the closed form."""
    if samples < MIN_VARIANCE_SAMPLES:
        raise PreconditionError(f"variance validation needs >= {MIN_VARIANCE_SAMPLES} samples, got {samples}")
    x, y = as_row(x, "x"), as_row(y, "y")
    estimates = sample_kernel_estimates(FeatureKind.PRF, x, y, m, samples, rng)
    empirical = float(estimates.var(ddof=1))
    closed = prf_variance_closed_form(x, y, m)
    rel_err = abs(empirical - closed) / closed if closed > 0 else abs(empirical)
    return VarianceResult(empirical, closed, rel_err)


def sample_complexity_bound(n: int, R: float, epsilon: float, delta: float) -> int:
    """ceil(n exp(4 R^2) / (epsilon^2 delta)), the feature count of the sample-complexity proof."""
    if epsilon <= 0 or not 0 < delta < 1:
        raise PreconditionError(f"need epsilon > 0 and 0 < delta < 1, got {epsilon}, {delta}")
    if n < 1:
        raise PreconditionError(f"n must be >= 1, got {n}")
    exponent = 4.0 * R * R
    log_bound = math.log(n) + exponent - 2.0 * math.log(epsilon) - math.log(delta)
    if log_bound > math.log(_COUNT_MAX):
        raise RangeError(f"bound exp({log_bound:.1f}) does not fit a 64-bit count (R={R})")
    value = math.ceil(n * math.exp(exponent) / (epsilon * epsilon * delta))
    if value > _COUNT_MAX:
        raise RangeError(f"bound {value} does not fit a 64-bit count (R={R})")
    return value


def sample_complexity_experiment(n: int, R: float, epsilon: float, delta: float, ms: Sequence[int], trials: int,
                                 rng: RngState, d: int = 16, kind=FeatureKind.PRF) -> ComplexityReport:
    """Theoretical feature count plus empirical Pr(||A - A_hat||_1 >= eps) per m.

    The 4*eps rate is the event the proof actually bounds at m_bound.
    """
    m_bound = sample_complexity_bound(n, R, epsilon, delta)
    if trials < 1:
        raise PreconditionError(f"trials must be >= 1, got {trials}")
    report = ComplexityReport(n=n, R=float(R), epsilon=float(epsilon), delta=float(delta), m_bound=m_bound)
    for m_idx, m in enumerate(ms):
        errors = np.empty(trials)
        for t in range(trials):
            trial_rng = rng.child(m_idx, t)
            query, keys = _sphere_instance(trial_rng, n, d, float(R))
            spec = sample_feature_map(kind, int(m), d, trial_rng)
            errors[t] = attention_l1_error(query, keys, spec)
        report.empirical_tail.append(TailCell(
            m=int(m),
            trials=trials,
            failure_rate=float(np.mean(errors >= epsilon)),
            failure_rate_4eps=float(np.mean(errors >= 4.0 * epsilon)),
        ))
    return report


def toeplitz_from_offsets(b: np.ndarray, n: int) -> np.ndarray:
    """n x n matrix with entry (i, j) = b_{i-j}, b stored at index k + n - 1."""
    i = np.arange(n)
    return b[(i[:, None] - i[None, :]) + n - 1]


def rpe_expressiveness_demo(n: int, d: int, rng: RngState, offsets=None) -> ExpressivenessResult:
    """Rank of a random RPE logit matrix against the d + 1 bound of dot-product logits."""
    if n <= d + 1:
        raise PreconditionError(f"rank demo needs n > d + 1, got n={n}, d={d}")
    b = rng.normal(2 * n - 1) if offsets is None else np.asarray(offsets, dtype=np.float64).reshape(-1)
    if b.shape[0] != 2 * n - 1:
        raise PreconditionError(f"need {2 * n - 1} offsets, got {b.shape[0]}")
    rank = numerical_rank(toeplitz_from_offsets(b, n))
    return ExpressivenessResult(rank_B=rank, bound=d + 1, exceeds=rank > d + 1)
