"""Exact-rational rendering helpers shared by reports and the CLI."""

from __future__ import annotations

from fractions import Fraction


def fraction_str(x: Fraction) -> str:
    """Render a Fraction as 'p/q', or 'p' when it is integral."""
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


def decimal_str(x: Fraction, places: int = 4) -> str:
    """Fixed-point decimal with round-half-even at *places* digits."""
    q = round(x, places)
    return _render_scaled(q.numerator * 10**places // q.denominator, places)


def decimal_trunc(x: Fraction, places: int) -> str:
    """Fixed-point decimal truncated toward zero at *places* digits."""
    if x < 0:
        return "-" + decimal_trunc(-x, places)
    return _render_scaled(x.numerator * 10**places // x.denominator, places)


def _render_scaled(scaled: int, places: int) -> str:
    sign = "-" if scaled < 0 else ""
    scaled = abs(scaled)
    if places == 0:
        return f"{sign}{scaled}"
    return f"{sign}{scaled // 10**places}.{scaled % 10**places:0{places}d}"


def printed_places(text: str) -> int:
    """Number of decimal digits in a printed decimal like '0.2428'."""
    if "." not in text:
        return 0
    return len(text.split(".", 1)[1])
