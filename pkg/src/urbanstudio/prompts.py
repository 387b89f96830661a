"""Byte-exact prompt construction and strict parsing.

The bracket tags are literal prompt content. Land-use percentages print at
one decimal and are not renormalized; building-coverage percentages print at
two decimals with largest-remainder rounding so the four groups total exactly
100.00. The manufacturing category prints as "industrial" in prompts.

The grammar is documented in EBNF in docs/prompts.md.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .core import DesignMetrics, TARGET_LAND_USE_SUM_TOL
from .errors import PromptParseError, ValidationError

Stage = int | str  # 1 | 2 | 3 | "combined"


@dataclass(frozen=True)
class PromptText:
    stage: Stage
    city: str
    text: str

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class ParsedPrompt:
    stage: Stage
    city: str
    metrics: DesignMetrics


_HEADERS = {
    1: "[Location and map guide] Land use types and road network map of ",
    2: "[Location and map guide] The Building height gradient map of ",
    3: "[Location and map guide] Satellite image of a city in ",
    "combined": "[Location and map guide] Combined urban design map of ",
}

_LAND_USE_CLAUSE = (
    " [Land use composition] Land use parcels include {r}% of residential, "
    "{c}% of commercial, {i}% of industrial, {p}% of park, {x}% of mixed use."
)
_ROAD_CLAUSE = " [Road density] Road density is {d}%."
_STAGE2_BODY = (
    ", with shades of gray from light to dark indicating building heights "
    "from low to high. [Building height group coverage] The area is composed "
    "of {l}% low-story buildings, {m}% medium-story buildings, {h}% "
    "high-story buildings, and {o}% open space."
)
_COVERAGE_CLAUSE = (
    " [Building height group coverage] The area is composed of {l}% "
    "low-story buildings, {m}% medium-story buildings, {h}% high-story "
    "buildings, and {o}% open space."
)


def _pct1(v: float) -> str:
    return f"{100.0 * v:.1f}"


def largest_remainder_percent(values, decimals: int = 2) -> list[str]:
    """Percent strings at ``decimals`` places whose printed total is 100."""
    scale = 10 ** decimals
    units = [100.0 * v * scale for v in values]
    floors = [int(u) for u in units]
    shortfall = 100 * scale - sum(floors)
    # Distribute leftover units to the largest fractional remainders;
    # ties fall to the earlier component for determinism.
    order = sorted(range(len(values)), key=lambda i: (-(units[i] - floors[i]), i))
    if shortfall >= 0:
        for i in order[:shortfall]:
            floors[i] += 1
    else:
        for i in reversed(order):
            if shortfall == 0:
                break
            if floors[i] > 0:
                floors[i] -= 1
                shortfall += 1
    return [f"{f / scale:.{decimals}f}" for f in floors]


def _require_city(city: str) -> None:
    if not city or not city.strip():
        raise ValidationError("city name must be nonempty")


def build_stage1(city: str, metrics: DesignMetrics) -> PromptText:
    """Road-network and land-use prompt; percentages at one decimal place."""
    _require_city(city)
    metrics.validate(land_use_sum_tol=TARGET_LAND_USE_SUM_TOL)
    r, c, i, p, x = (_pct1(v) for v in metrics.land_use)
    text = (_HEADERS[1] + city + "."
            + _LAND_USE_CLAUSE.format(r=r, c=c, i=i, p=p, x=x)
            + _ROAD_CLAUSE.format(d=_pct1(metrics.road_density)))
    return PromptText(stage=1, city=city, text=text)


def build_stage2(city: str, metrics: DesignMetrics) -> PromptText:
    """Building-coverage prompt; two decimals, groups forced to total 100.00."""
    _require_city(city)
    metrics.validate(land_use_sum_tol=TARGET_LAND_USE_SUM_TOL)
    groups = [*metrics.height_coverage, metrics.open_space]
    l, m, h, o = largest_remainder_percent(groups, decimals=2)
    text = _HEADERS[2] + city + _STAGE2_BODY.format(l=l, m=m, h=h, o=o)
    return PromptText(stage=2, city=city, text=text)


def build_stage3(city: str) -> PromptText:
    _require_city(city)
    return PromptText(stage=3, city=city, text=_HEADERS[3] + city + ".")


def build_combined(city: str, metrics: DesignMetrics) -> PromptText:
    """All four metric clauses under the combined map-guide header."""
    _require_city(city)
    metrics.validate(land_use_sum_tol=TARGET_LAND_USE_SUM_TOL)
    r, c, i, p, x = (_pct1(v) for v in metrics.land_use)
    l, m, h, o = largest_remainder_percent(
        [*metrics.height_coverage, metrics.open_space], decimals=2)
    text = (_HEADERS["combined"] + city + "."
            + _LAND_USE_CLAUSE.format(r=r, c=c, i=i, p=p, x=x)
            + _ROAD_CLAUSE.format(d=_pct1(metrics.road_density))
            + _COVERAGE_CLAUSE.format(l=l, m=m, h=h, o=o))
    return PromptText(stage="combined", city=city, text=text)


def build_for_stage(stage: Stage, city: str, metrics: DesignMetrics | None) -> PromptText:
    if stage == 1:
        return build_stage1(city, metrics)
    if stage == 2:
        return build_stage2(city, metrics)
    if stage == 3:
        return build_stage3(city)
    if stage == "combined":
        return build_combined(city, metrics)
    raise ValidationError(f"unknown stage {stage!r}")


class _Cursor:
    """Walks a prompt against a template, reporting the failure position."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def literal(self, lit: str) -> None:
        if not self.text.startswith(lit, self.pos):
            raise PromptParseError(f"expected {lit[:40]!r}", self.pos)
        self.pos += len(lit)

    def number(self, decimals: int) -> float:
        pattern = re.compile(rf"\d{{1,3}}\.\d{{{decimals}}}(?!\d)")
        m = pattern.match(self.text, self.pos)
        if not m:
            raise PromptParseError(f"expected a {decimals}-decimal percentage", self.pos)
        self.pos = m.end()
        value = float(m.group()) / 100.0
        if value > 1.0 + 1e-9:
            raise PromptParseError(f"percentage {m.group()} exceeds 100", m.start())
        return value

    def upto(self, lit: str) -> str:
        idx = self.text.find(lit, self.pos)
        if idx < 0:
            raise PromptParseError(f"expected {lit[:40]!r} after this point", self.pos)
        value = self.text[self.pos:idx]
        if not value:
            raise PromptParseError("expected a city name", self.pos)
        self.pos = idx
        return value

    def done(self) -> None:
        if self.pos != len(self.text):
            raise PromptParseError("unexpected trailing content", self.pos)


def _split_template(template: str) -> list[str]:
    # Literal runs between {placeholders}.
    return re.split(r"\{[a-z]\}", template)


def _parse_land_use(cur: _Cursor) -> tuple[float, ...]:
    lits = _split_template(_LAND_USE_CLAUSE)
    values = []
    cur.literal(lits[0])
    for lit in lits[1:]:
        values.append(cur.number(1))
        cur.literal(lit)
    return tuple(values)


def _parse_road(cur: _Cursor) -> float:
    lits = _split_template(_ROAD_CLAUSE)
    cur.literal(lits[0])
    v = cur.number(1)
    cur.literal(lits[1])
    return v


def _parse_coverage(cur: _Cursor, clause: str) -> tuple[float, ...]:
    lits = _split_template(clause)
    values = []
    cur.literal(lits[0])
    for lit in lits[1:]:
        values.append(cur.number(2))
        cur.literal(lit)
    return tuple(values)


def parse(text: str | PromptText) -> ParsedPrompt:
    """Strict parse of a stage 1, 2, 3 or combined prompt.

    Metric slots the stage does not carry keep their defaults (zero land use,
    zero road density, zero buildings with open space 1).
    """
    if isinstance(text, PromptText):
        text = text.text
    cur = _Cursor(text)
    for stage, header in _HEADERS.items():
        if text.startswith(header):
            cur.pos = len(header)
            break
    else:
        raise PromptParseError("unrecognized prompt header", 0)

    if stage == 1:
        city = cur.upto(". [Land use composition]")
        cur.literal(".")
        land_use = _parse_land_use(cur)
        road = _parse_road(cur)
        cur.done()
        metrics = DesignMetrics(road_density=road, land_use=land_use)
    elif stage == 2:
        city = cur.upto(", with shades of gray")
        l, m, h, o = _parse_coverage(cur, _STAGE2_BODY)
        cur.done()
        metrics = DesignMetrics(height_coverage=(l, m, h), open_space=o)
    elif stage == 3:
        city = cur.upto(".")
        cur.literal(".")
        cur.done()
        metrics = DesignMetrics()
    else:
        city = cur.upto(". [Land use composition]")
        cur.literal(".")
        land_use = _parse_land_use(cur)
        road = _parse_road(cur)
        l, m, h, o = _parse_coverage(cur, _COVERAGE_CLAUSE)
        cur.done()
        metrics = DesignMetrics(road_density=road, land_use=land_use,
                                height_coverage=(l, m, h), open_space=o)
    return ParsedPrompt(stage=stage, city=city, metrics=metrics)
