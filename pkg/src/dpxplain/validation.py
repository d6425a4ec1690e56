"""Phase 2: confidence intervals for the user question from already-released values.

Everything here is post-processing of the Phase-1 release: no ledger charge,
no access to the raw dataset.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .data import SimpleQuestion, UserQuestion, Value
from .errors import SchemaError
from .mechanisms import inverse_erf
from .release import QueryRelease

SQRT2 = math.sqrt(2.0)

Bounds = tuple[float, float]


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float
    trivial: bool = False

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise SchemaError(f"invalid interval ({self.lower}, {self.upper})")
        if not self.trivial and (math.isinf(self.lower) or math.isinf(self.upper)):
            raise SchemaError("unbounded endpoints are reserved for the trivial interval")

    @classmethod
    def trivial_interval(cls, level: float) -> "ConfidenceInterval":
        """The always-valid fallback, rendered as the unbounded interval."""
        return cls(-math.inf, math.inf, level, trivial=True)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper

    def to_json(self) -> dict:
        return {
            "lower": _json_num(self.lower),
            "upper": _json_num(self.upper),
            "level": self.level,
            "trivial": self.trivial,
        }


@dataclass(frozen=True)
class ValidityVerdict:
    interval: ConfidenceInterval
    verdict: str  # "supported" | "possibly-noise"

    @classmethod
    def from_interval(cls, interval: ConfidenceInterval) -> "ValidityVerdict":
        supported = not interval.trivial and interval.lower > 0
        return cls(interval, "supported" if supported else "possibly-noise")

    def to_json(self) -> dict:
        return {"interval": self.interval.to_json(), "verdict": self.verdict}


def _json_num(x: float):
    return x if math.isfinite(x) else None


# ---------------------------------------------------------------------------
# Exact interval arithmetic on (lo, hi) pairs. Division and log return None
# when undefined anywhere on the operand interval; None propagates upward and
# the caller falls back to the trivial confidence interval.
# ---------------------------------------------------------------------------


def interval_quotient(num: Bounds, den: Bounds) -> Bounds | None:
    """Exact image of x/y over a box; None when the denominator straddles 0.

    On a sign-definite denominator the quotient is monotone in each
    coordinate, so the extrema sit on the four corners.
    """
    (nl, nh), (dl, dh) = num, den
    if dl <= 0.0 <= dh:
        return None
    corners = (nl / dl, nl / dh, nh / dl, nh / dh)
    return (min(corners), max(corners))


def _iadd(a: Bounds, b: Bounds) -> Bounds:
    return (a[0] + b[0], a[1] + b[1])


def _isub(a: Bounds, b: Bounds) -> Bounds:
    return (a[0] - b[1], a[1] - b[0])


def _imul(a: Bounds, b: Bounds) -> Bounds:
    corners = (a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
    return (min(corners), max(corners))


def _iscale(a: Bounds, w: float) -> Bounds:
    lo, hi = a[0] * w, a[1] * w
    return (lo, hi) if lo <= hi else (hi, lo)


def _iexp(a: Bounds) -> Bounds:
    return (math.exp(a[0]), math.exp(a[1]))


def _ilog(a: Bounds) -> Bounds | None:
    if a[0] <= 0.0:
        return None
    return (math.log(a[0]), math.log(a[1]))


# ---------------------------------------------------------------------------
# Question confidence intervals
# ---------------------------------------------------------------------------


def _weights_of(question: UserQuestion) -> tuple[dict[Value, float], float]:
    if isinstance(question, SimpleQuestion):
        return {question.group_i: 1.0, question.group_j: -1.0}, 0.0
    return question.weight_map, question.constant


def question_ci_general(
    release: QueryRelease,
    weights: Mapping[Value, float],
    constant: float,
    gamma: float,
) -> ConfidenceInterval:
    """CI for sum_j w_j o_j - c over the released noisy values.

    COUNT/SUM: the weighted sum of Gaussians is Gaussian with scale
    sqrt(sum w^2) * sigma, so center +- sqrt(2) * sqrt(sum w^2) * sigma *
    inverse_erf(gamma).

    AVG: one partial Gaussian CI per stored component (2 per referenced
    group) at level beta = 1 - (1-gamma)/(2m); the returned interval is the
    exact image of sum_j w_j (S_j / C_j) - c over the partial boxes, or the
    trivial interval when any referenced count CI straddles zero.
    """
    if not 0 < gamma < 1:
        raise SchemaError(f"confidence level must be in (0, 1), got {gamma}")
    referenced = [(g, w) for g, w in weights.items() if w != 0.0]
    for g, _ in referenced:
        release.result_for(g)  # raises DomainError on unknown group

    if release.query.agg in ("COUNT", "SUM"):
        center = sum(w * release.result_for(g).noisy_value for g, w in referenced) - constant
        weight_norm = math.sqrt(sum(w * w for _, w in referenced))
        margin = SQRT2 * weight_norm * release.sigma * inverse_erf(gamma)
        return ConfidenceInterval(center - margin, center + margin, gamma)

    # AVG: partial CIs around each stored sum/count component.
    m = len(referenced)
    if m == 0:
        return ConfidenceInterval(-constant, -constant, gamma)
    beta = 1.0 - (1.0 - gamma) / (2.0 * m)
    margin_sum = SQRT2 * release.sigma_sum * inverse_erf(beta)
    margin_count = SQRT2 * release.sigma_count * inverse_erf(beta)
    total: Bounds = (-constant, -constant)
    for g, w in referenced:
        r = release.result_for(g)
        if not r.has_components:
            raise SchemaError(f"release for group {g!r} has no stored AVG components")
        sum_ci: Bounds = (r.noisy_sum - margin_sum, r.noisy_sum + margin_sum)
        count_ci: Bounds = (r.noisy_count - margin_count, r.noisy_count + margin_count)
        quotient = interval_quotient(sum_ci, count_ci)
        if quotient is None:
            return ConfidenceInterval.trivial_interval(gamma)
        total = _iadd(total, _iscale(quotient, w))
    return ConfidenceInterval(total[0], total[1], gamma)


def question_ci_count_sum(
    release: QueryRelease, question: SimpleQuestion, gamma: float
) -> ConfidenceInterval:
    """CI for o_i - o_j under COUNT/SUM: center o^_i - o^_j, margin 2 sigma erfinv(gamma)."""
    if release.query.agg not in ("COUNT", "SUM"):
        raise SchemaError(f"expected a COUNT or SUM release, got {release.query.agg}")
    weights, constant = _weights_of(question)
    return question_ci_general(release, weights, constant, gamma)


def question_ci_avg(
    release: QueryRelease, question: SimpleQuestion, gamma: float
) -> ConfidenceInterval:
    """CI for o_i - o_j under AVG via four partial component CIs at level 1-(1-gamma)/4."""
    if release.query.agg != "AVG":
        raise SchemaError(f"expected an AVG release, got {release.query.agg}")
    weights, constant = _weights_of(question)
    return question_ci_general(release, weights, constant, gamma)


def question_ci(release: QueryRelease, question: UserQuestion, gamma: float) -> ConfidenceInterval:
    weights, constant = _weights_of(question)
    return question_ci_general(release, weights, constant, gamma)


def validate_question(
    release: QueryRelease, question: UserQuestion, gamma: float
) -> ValidityVerdict:
    """Supported iff the question CI lies strictly above zero."""
    return ValidityVerdict.from_interval(question_ci(release, question, gamma))


# ---------------------------------------------------------------------------
# Image-based CI for arithmetic combinations of Gaussian releases
# ---------------------------------------------------------------------------


class Expr:
    """Arithmetic expression over numbered sub-queries: {+, -, *, /, exp, log}."""

    def __init__(self, op: str, *args):
        self.op = op
        self.args = args

    @classmethod
    def var(cls, index: int) -> "Expr":
        return cls("var", index)

    @classmethod
    def const(cls, value: float) -> "Expr":
        return cls("const", float(value))

    @staticmethod
    def _wrap(x) -> "Expr":
        return x if isinstance(x, Expr) else Expr.const(x)

    def __add__(self, other):
        return Expr("add", self, self._wrap(other))

    def __sub__(self, other):
        return Expr("sub", self, self._wrap(other))

    def __mul__(self, other):
        return Expr("mul", self, self._wrap(other))

    def __truediv__(self, other):
        return Expr("div", self, self._wrap(other))

    def exp(self) -> "Expr":
        return Expr("exp", self)

    def log(self) -> "Expr":
        return Expr("log", self)

    def evaluate(self, point: Sequence[float]) -> float:
        if self.op == "var":
            return point[self.args[0]]
        if self.op == "const":
            return self.args[0]
        if self.op == "exp":
            return math.exp(self.args[0].evaluate(point))
        if self.op == "log":
            return math.log(self.args[0].evaluate(point))
        a = self.args[0].evaluate(point)
        b = self.args[1].evaluate(point)
        if self.op == "add":
            return a + b
        if self.op == "sub":
            return a - b
        if self.op == "mul":
            return a * b
        return a / b

    def enclosure(self, box: Sequence[Bounds]) -> Bounds | None:
        """Interval extension over a box; None when undefined anywhere on it."""
        if self.op == "var":
            return box[self.args[0]]
        if self.op == "const":
            return (self.args[0], self.args[0])
        a = self.args[0].enclosure(box)
        if a is None:
            return None
        if self.op == "exp":
            return _iexp(a)
        if self.op == "log":
            return _ilog(a)
        b = self.args[1].enclosure(box)
        if b is None:
            return None
        if self.op == "add":
            return _iadd(a, b)
        if self.op == "sub":
            return _isub(a, b)
        if self.op == "mul":
            return _imul(a, b)
        return interval_quotient(a, b)


def _refine_extremum(expr: Expr, box: list[Bounds], side: int, rounds: int) -> float:
    """Outer bound on one image extremum by recursively bisecting the worst cell.

    side=0 tightens the lower bound (min of cell lower bounds); side=1 the
    upper bound. Subdivision keeps a partition of the box, so the returned
    value always encloses the true extremum.
    """
    cells: list[list[Bounds]] = [list(box)]
    values = [expr.enclosure(cells[0])]
    for _ in range(rounds):
        pick = min(range(len(cells)), key=lambda i: values[i][side]) if side == 0 else max(
            range(len(cells)), key=lambda i: values[i][side]
        )
        cell = cells[pick]
        axis = max(range(len(cell)), key=lambda d: cell[d][1] - cell[d][0])
        lo, hi = cell[axis]
        if hi - lo <= 0:
            break
        mid = 0.5 * (lo + hi)
        left, right = list(cell), list(cell)
        left[axis] = (lo, mid)
        right[axis] = (mid, hi)
        enc_left, enc_right = expr.enclosure(left), expr.enclosure(right)
        if enc_left is None or enc_right is None:
            break  # keep the unsplit (valid) enclosure
        cells[pick] = left
        values[pick] = enc_left
        cells.append(right)
        values.append(enc_right)
    if side == 0:
        return min(v[0] for v in values)
    return max(v[1] for v in values)


def image_ci(
    expr: Expr,
    noisy_values: Sequence[float],
    sigmas: Sequence[float],
    gamma: float,
    refine_rounds: int = 60,
) -> ConfidenceInterval:
    """CI for f(q_1(D), ..., q_l(D)) from one Gaussian release per sub-query.

    Each sub-query gets a partial CI at level beta = 1 - (1-gamma)/l; the
    returned interval outer-approximates the image of the resulting box under
    the expression, so overall coverage is l(beta-1)+1 = gamma. An expression
    undefined somewhere on the box yields the trivial interval.
    """
    if len(noisy_values) != len(sigmas) or not noisy_values:
        raise SchemaError("need one noisy value and scale per sub-query")
    if not 0 < gamma < 1:
        raise SchemaError(f"confidence level must be in (0, 1), got {gamma}")
    count = len(noisy_values)
    beta = 1.0 - (1.0 - gamma) / count
    box: list[Bounds] = []
    for value, sigma in zip(noisy_values, sigmas):
        margin = SQRT2 * sigma * inverse_erf(beta)
        box.append((value - margin, value + margin))
    if expr.enclosure(box) is None:
        return ConfidenceInterval.trivial_interval(gamma)
    lower = _refine_extremum(expr, box, side=0, rounds=refine_rounds)
    upper = _refine_extremum(expr, box, side=1, rounds=refine_rounds)
    return ConfidenceInterval(lower, upper, gamma)
