"""Seeded synthetic quote corpora with known ground truth.

Stands in for the original crawl, which is not distributed. The price process
is deliberately simple and fully parameterized: a per-route base level, a
late surge toward departure, occasional one-day drop events, and bounded
multiplicative noise. It makes no claim to model real airline pricing; it
exists so the pipeline can be exercised against controllable ground truth.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import FarecastError, PriceSeries, Quote, format_price
from .ingest import CSV_HEADER, SplitConfig
from .util import derive_seed


class InvalidConfig(FarecastError):
    pass


@dataclass(frozen=True)
class RouteParams:
    """Price-process parameters for one route."""

    base: float          # EUR level far from departure
    surge: float         # relative price lift right before departure
    tau: float           # surge decay length in days
    drop_prob: float     # per-day probability of a one-day drop event
    drop_lo: float       # drop depth range (relative)
    drop_hi: float
    noise: float         # multiplicative noise amplitude


@dataclass(frozen=True)
class GeneratorConfig:
    n_routes: int = 8
    departures_per_route: int = 50
    horizon_days: int = 90
    first_query_date: date = date(2015, 11, 9)
    departure_step_days: int = 1
    price_cap: float = 400.0
    price_floor: float = 1.0
    route_prefix: str = "R"
    first_route_number: int = 1
    # Ranges the per-route parameters are drawn from.
    base_range: tuple[float, float] = (40.0, 260.0)
    surge_range: tuple[float, float] = (0.4, 0.9)
    tau_range: tuple[float, float] = (6.0, 18.0)
    drop_prob_range: tuple[float, float] = (0.04, 0.09)
    drop_depth_range: tuple[float, float] = (0.25, 0.5)
    noise_range: tuple[float, float] = (0.015, 0.04)
    # Relative jitter applied when a route mimics a template route (generalized corpora).
    template_jitter: float = 0.0
    template_of: tuple[int, ...] = field(default=())  # template index per route, empty = fresh params

    def __post_init__(self):
        if self.horizon_days < 8:
            raise InvalidConfig("horizon must be at least 8 days so the 7-day fallback is exercisable")
        if self.n_routes < 1 or self.departures_per_route < 1:
            raise InvalidConfig("need at least one route and one departure")
        if self.template_of and len(self.template_of) != self.n_routes:
            raise InvalidConfig("template_of must name one template per route")

    @property
    def first_departure(self) -> date:
        # Every series gets the full horizon of quotes, the last on departure
        # day itself, so the earliest series starts exactly at first_query_date.
        return self.first_query_date + timedelta(days=self.horizon_days - 1)

    def route_ids(self) -> list[str]:
        return [f"{self.route_prefix}{self.first_route_number + i}" for i in range(self.n_routes)]


def generalized_config(
    n_routes: int = 12,
    departures_per_route: int = 13,
    template_jitter: float = 0.05,
    **overrides,
) -> GeneratorConfig:
    """Config for a generalized corpus whose routes mimic the 8 specific templates."""
    return GeneratorConfig(
        n_routes=n_routes,
        departures_per_route=departures_per_route,
        first_route_number=9,
        template_jitter=template_jitter,
        template_of=tuple(i % 8 for i in range(n_routes)),
        **overrides,
    )


def _draw(rng: np.random.Generator, lo_hi: tuple[float, float]) -> float:
    return float(rng.uniform(*lo_hi))


def _fresh_params(cfg: GeneratorConfig, route_number: int, seed: int) -> RouteParams:
    rng = np.random.default_rng(derive_seed(seed, "route", route_number))
    lo, hi = cfg.drop_depth_range
    return RouteParams(
        base=_draw(rng, cfg.base_range),
        surge=_draw(rng, cfg.surge_range),
        tau=_draw(rng, cfg.tau_range),
        drop_prob=_draw(rng, cfg.drop_prob_range),
        drop_lo=lo,
        drop_hi=hi,
        noise=_draw(rng, cfg.noise_range),
    )


def route_params(cfg: GeneratorConfig, route_index: int, seed: int) -> RouteParams:
    """Deterministic per-route process parameters.

    With ``template_of`` set, the route reuses its template's parameters
    (drawn as route R<1+template> of a default-range specific corpus with the
    same master seed) plus a small multiplicative jitter, so its pattern
    stays recognizably close to one of the specific routes. All seed streams
    are keyed by the global route number, so specific and generalized corpora
    generated from one master seed never share noise draws.
    """
    route_number = cfg.first_route_number + route_index
    if cfg.template_of:
        template = _fresh_params(GeneratorConfig(), 1 + cfg.template_of[route_index], seed)
        rng = np.random.default_rng(derive_seed(seed, "template-jitter", route_number))

        def jitter(v: float) -> float:
            return v * (1.0 + cfg.template_jitter * float(rng.uniform(-1.0, 1.0)))

        return RouteParams(
            base=jitter(template.base), surge=jitter(template.surge), tau=jitter(template.tau),
            drop_prob=jitter(template.drop_prob), drop_lo=template.drop_lo,
            drop_hi=template.drop_hi, noise=jitter(template.noise),
        )
    return _fresh_params(cfg, route_number, seed)


def trend_price(params: RouteParams, days_to_departure: int) -> float:
    """Deterministic trend component: base level plus the late surge."""
    return params.base * (1.0 + params.surge * math.exp(-days_to_departure / params.tau))


def generate_corpus(cfg: GeneratorConfig, seed: int) -> list[Quote]:
    """All quotes of a synthetic corpus, sorted by (route, departure, query)."""
    quotes: list[Quote] = []
    for i, route_id in enumerate(cfg.route_ids()):
        params = route_params(cfg, i, seed)
        route_number = cfg.first_route_number + i
        for j in range(cfg.departures_per_route):
            departure = cfg.first_departure + timedelta(days=j * cfg.departure_step_days)
            rng = np.random.default_rng(derive_seed(seed, "series", route_number, j))
            start = departure - timedelta(days=cfg.horizon_days - 1)
            for d in range(cfg.horizon_days):
                query = start + timedelta(days=d)
                dtd = (departure - query).days
                price = trend_price(params, dtd)
                if params.drop_prob > 0 and rng.random() < params.drop_prob:
                    price *= 1.0 - rng.uniform(params.drop_lo, params.drop_hi)
                if params.noise > 0:
                    price *= 1.0 + rng.uniform(-params.noise, params.noise)
                price = min(max(price, cfg.price_floor), cfg.price_cap)
                quotes.append(
                    Quote(
                        route_id=route_id,
                        departure_date=departure,
                        query_date=query,
                        price=round(price, 3),
                    )
                )
    return quotes


def default_split_for(cfg: GeneratorConfig, train_fraction: float = 0.6) -> SplitConfig:
    """Departure-date split matching a generated corpus (about 60/40 by default)."""
    n_train = max(1, min(cfg.departures_per_route - 1,
                         math.ceil(cfg.departures_per_route * train_fraction)))
    step = timedelta(days=cfg.departure_step_days)
    last = cfg.first_departure + (cfg.departures_per_route - 1) * step
    train_end = cfg.first_departure + (n_train - 1) * step
    return SplitConfig(
        train_start=cfg.first_departure,
        train_end=train_end,
        test_start=train_end + timedelta(days=1),
        test_end=last,
    )


def write_corpus_csv(quotes: Sequence[Quote], path: str | Path) -> None:
    """Write quotes in the ingest CSV schema. Byte-identical for a fixed input."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for q in quotes:
            writer.writerow(
                (q.route_id, q.departure_date.isoformat(), q.query_date.isoformat(),
                 format_price(q.price))
            )


def oracle_evaluate(corpus: Sequence[PriceSeries]) -> dict[str, tuple[float, float]]:
    """Per-route (random purchase price, optimal price) by direct exhaustive scan.

    Intentionally independent of the metrics module: benchmark values are
    re-derived from raw quotes alone so the two code paths can be compared.
    """
    per_route: dict[str, list[tuple[float, float]]] = {}
    for s in corpus:
        total = 0.0
        count = 0
        lowest = None
        terms = []
        for q in s.quotes:
            terms.append(q.price)
            count += 1
            if lowest is None or q.price < lowest:
                lowest = q.price
        total = math.fsum(terms)
        per_route.setdefault(s.key.route_id, []).append((total / count, lowest))

    out = {}
    for route_id, values in sorted(per_route.items()):
        randoms = math.fsum(v[0] for v in values) / len(values)
        optima = math.fsum(v[1] for v in values) / len(values)
        out[route_id] = (randoms, optima)
    return out
