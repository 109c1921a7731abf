"""Group descriptive statistics and pairwise two-sample t-tests.

The default test is the pooled-variance Student t (Welch is available
behind a flag but off by default); p-values come from the regularized
incomplete beta function evaluated by continued fraction, so the module
carries no numerical dependencies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptySample, InsufficientSample

PROPERTY_NAMES = ("perimeter", "area", "radius", "non_smoothness", "non_circularity")

_CF_TOL = 1e-12
_CF_TINY = 1e-300
_CF_MAX_ITER = 500


@dataclass(frozen=True)
class GroupSample:
    group_label: str
    property_name: str
    values: tuple[float, ...]

    def __post_init__(self):
        if any(math.isnan(v) for v in self.values):
            raise ValueError(
                f"sample {self.group_label}/{self.property_name} contains NaN; "
                "unavailable values must be dropped before testing"
            )


@dataclass(frozen=True)
class GroupSummary:
    group_label: str
    property_name: str
    n: int
    mean: float | None  # None only for the n = 0 placeholder rows the
    sd: float | None    # curation service reports for fully excluded groups;
    median: float | None  # sd is also None when n < 2
    q1: float | None
    q3: float | None


@dataclass(frozen=True)
class TTestResult:
    group_a: str
    group_b: str
    property_name: str
    t_statistic: float
    degrees_of_freedom: float  # integral for Student; fractional under Welch
    p_value: float
    significant: bool
    zero_variance: bool = False


def _mean(values) -> float:
    return math.fsum(values) / len(values)


def _sample_variance(values, mean: float) -> float:
    return math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1)


def summarize(sample: GroupSample) -> GroupSummary:
    """n, mean, sample sd, and linearly interpolated quartiles."""
    values = sample.values
    if not values:
        raise EmptySample(
            f"no values for {sample.group_label}/{sample.property_name}"
        )
    mean = _mean(values)
    sd = math.sqrt(_sample_variance(values, mean)) if len(values) >= 2 else None
    q1, median, q3 = np.percentile(np.asarray(values, dtype=np.float64), [25, 50, 75])
    return GroupSummary(
        group_label=sample.group_label,
        property_name=sample.property_name,
        n=len(values),
        mean=mean,
        sd=sd,
        median=float(median),
        q1=float(q1),
        q3=float(q3),
    )


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_TOL:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction failed for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cf(a, b, x) / a
    return 1.0 - front * _beta_cf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """P(|T_df| >= |t|) via I_x(df/2, 1/2) with x = df / (df + t^2)."""
    if math.isinf(t):
        return 0.0
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def student_t_test(
    a: GroupSample,
    b: GroupSample,
    alpha: float = 0.05,
    welch: bool = False,
    two_sided: bool = True,
) -> TTestResult:
    """Two-sample t-test (pooled Student by default, Welch on request).

    Two identical constant samples have an undefined statistic; the result
    is reported as t = 0, p = 1 with the zero_variance flag set.
    """
    if a.property_name != b.property_name:
        raise ValueError(
            f"cannot compare {a.property_name!r} against {b.property_name!r}"
        )
    na, nb = len(a.values), len(b.values)
    if na < 2 or nb < 2:
        raise InsufficientSample(
            f"t-test needs n >= 2 per group, got {na} ({a.group_label}) "
            f"and {nb} ({b.group_label})"
        )
    mean_a, mean_b = _mean(a.values), _mean(b.values)
    var_a = _sample_variance(a.values, mean_a)
    var_b = _sample_variance(b.values, mean_b)

    if welch:
        se_sq = var_a / na + var_b / nb
        if se_sq == 0.0:
            return _degenerate_result(a, b, mean_a, mean_b, float(na + nb - 2), alpha)
        t = (mean_a - mean_b) / math.sqrt(se_sq)
        df = se_sq * se_sq / (
            (var_a / na) ** 2 / (na - 1) + (var_b / nb) ** 2 / (nb - 1)
        )
    else:
        df = float(na + nb - 2)
        pooled = ((na - 1) * var_a + (nb - 1) * var_b) / df
        if pooled == 0.0:
            return _degenerate_result(a, b, mean_a, mean_b, df, alpha)
        t = (mean_a - mean_b) / (math.sqrt(pooled) * math.sqrt(1.0 / na + 1.0 / nb))

    p_two = t_sf_two_sided(t, df)
    if two_sided:
        p = p_two
    else:
        p = p_two / 2.0 if t >= 0 else 1.0 - p_two / 2.0
    return TTestResult(
        group_a=a.group_label,
        group_b=b.group_label,
        property_name=a.property_name,
        t_statistic=t,
        degrees_of_freedom=df,
        p_value=p,
        significant=p < alpha,
    )


def _degenerate_result(a, b, mean_a, mean_b, df, alpha) -> TTestResult:
    if mean_a == mean_b:
        t, p, flag = 0.0, 1.0, True
    else:
        # zero within-group variance but distinct means: unbounded evidence
        t = math.copysign(math.inf, mean_a - mean_b)
        p, flag = 0.0, False
    return TTestResult(
        group_a=a.group_label,
        group_b=b.group_label,
        property_name=a.property_name,
        t_statistic=t,
        degrees_of_freedom=df,
        p_value=p,
        significant=p < alpha,
        zero_variance=flag,
    )


def compare_all_pairs(
    samples: list[GroupSample],
    alpha: float = 0.05,
    welch: bool = False,
    two_sided: bool = True,
    skip_insufficient: bool = False,
    bonferroni: bool = False,
) -> list[TTestResult]:
    """One t-test per unordered group pair per property.

    Results are ordered lexicographically by (group_a, group_b), then by the
    canonical property order. With skip_insufficient, pairs where either
    side has n < 2 are dropped instead of raising (used for live curation
    views); bonferroni scales alpha by the number of pairwise tests.
    """
    groups = sorted({s.group_label for s in samples})
    if len(groups) < 2:
        raise InsufficientSample(f"need >= 2 groups, got {len(groups)}")
    by_key = {(s.group_label, s.property_name): s for s in samples}
    properties = sorted(
        {s.property_name for s in samples},
        key=lambda p: (PROPERTY_NAMES.index(p) if p in PROPERTY_NAMES else len(PROPERTY_NAMES), p),
    )
    pair_count = len(groups) * (len(groups) - 1) // 2 * len(properties)
    effective_alpha = alpha / pair_count if (bonferroni and pair_count) else alpha
    results = []
    for i, ga in enumerate(groups):
        for gb in groups[i + 1 :]:
            for prop in properties:
                sa, sb = by_key.get((ga, prop)), by_key.get((gb, prop))
                if sa is None or sb is None or (
                    skip_insufficient and (len(sa.values) < 2 or len(sb.values) < 2)
                ):
                    if skip_insufficient:
                        continue
                    raise InsufficientSample(f"missing sample for {(ga, gb, prop)}")
                results.append(
                    student_t_test(sa, sb, alpha=effective_alpha, welch=welch, two_sided=two_sided)
                )
    return results
