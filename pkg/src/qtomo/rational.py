"""Continued-fraction rationality detection for frequency ratios.

Every float is rational, so "is this ratio rational" really means "does the
continued fraction of the ratio terminate before its denominator exceeds a
cap".  A genuine rational stored in floating point terminates with a huge
partial quotient almost immediately; quadratic irrationals like sqrt(2) or
the golden ratio keep producing small quotients until the denominator cap is
hit.  A ratio that is anomalously close to a low-order fraction (closer than
the ~1/q^2 scale typical of irrationals) is classified with that fraction but
flagged as approximate.
"""

from dataclasses import dataclass
from math import floor, gcd

DEFAULT_TOLERANCE = 1e-12
DEFAULT_MAX_DENOMINATOR = 10**6
# normalized closeness |x - p/q| * q^2 below which a capped expansion is
# still reported as a (flagged) rational
NEAR_RATIONAL_MEASURE = 1e-6

EQUAL = "equal"
RATIONAL = "rational"
IRRATIONAL = "irrational"


@dataclass(frozen=True)
class RatioClassification:
    """Outcome of classifying a positive real ratio.

    kind is "equal" (ratio is 1), "rational" or "irrational".  For the
    rational kinds, numerator/denominator hold the reduced fraction and
    ``approximate`` is True when the match was only found through the
    near-rational measure rather than by termination of the continued
    fraction.  ``error`` is |ratio - numerator/denominator|.
    """

    kind: str
    numerator: int | None
    denominator: int | None
    error: float
    approximate: bool = False

    @property
    def is_rational(self) -> bool:
        return self.kind in (EQUAL, RATIONAL)


def continued_fraction_convergents(x, tol=DEFAULT_TOLERANCE, max_denominator=DEFAULT_MAX_DENOMINATOR):
    """Convergents (p, q, error) of x with q <= max_denominator.

    Expansion stops when the fractional remainder drops below tol (the
    float is, at working precision, exactly rational) or when the next
    denominator would exceed the cap.  Returns (convergents, terminated).
    """
    if x <= 0:
        raise ValueError("ratio must be positive")
    convergents = []
    p_prev, q_prev = 0, 1
    p, q = 1, 0
    r = x
    terminated = False
    for _ in range(256):
        a = floor(r + tol)
        p_next = a * p + p_prev
        q_next = a * q + q_prev
        if q_next > max_denominator:
            break
        p_prev, q_prev, p, q = p, q, p_next, q_next
        convergents.append((p, q, abs(x - p / q)))
        frac = r - a
        if abs(frac) <= tol:
            terminated = True
            break
        r = 1.0 / frac
    return convergents, terminated


def classify_ratio(
    x,
    tol=DEFAULT_TOLERANCE,
    max_denominator=DEFAULT_MAX_DENOMINATOR,
    near_measure=NEAR_RATIONAL_MEASURE,
) -> RatioClassification:
    """Classify a positive ratio as equal / rational / irrational."""
    convergents, terminated = continued_fraction_convergents(x, tol, max_denominator)
    if not convergents:
        return RatioClassification(IRRATIONAL, None, None, float("inf"))
    if terminated:
        p, q, err = convergents[-1]
        g = gcd(p, q)
        p, q = p // g, q // g
        kind = EQUAL if p == q else RATIONAL
        return RatioClassification(kind, p, q, err, approximate=False)
    # capped: flag a near-rational only if some convergent approximates x
    # far better than the ~1/q^2 scale of a typical irrational
    best = min(convergents, key=lambda c: c[2] * c[1] ** 2)
    p, q, err = best
    if err * q * q <= near_measure:
        kind = EQUAL if p == q else RATIONAL
        return RatioClassification(kind, p, q, err, approximate=True)
    return RatioClassification(IRRATIONAL, None, None, best[2])


def classify_pair(a, b, **kwargs) -> RatioClassification:
    """Classify the ratio of two positive reals, taken smaller over larger."""
    if a <= 0 or b <= 0:
        raise ValueError("values must be positive")
    lo, hi = (a, b) if a <= b else (b, a)
    return classify_ratio(lo / hi, **kwargs)
