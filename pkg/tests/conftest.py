"""Shared builders for tests: tiny logs, stats tables, and random inputs."""

import random
from decimal import Decimal

import pytest

from kwprune.data import (
    Campaign,
    ExperimentLog,
    KeywordDayRecord,
    KeywordStats,
    money,
)
from kwprune.toolset import StatsTable


def make_record(cid="c1", kw="kw_a", day=1, impressions=100, clicks=10, conversions=2,
                cost="5.00", profit="10.00"):
    return KeywordDayRecord(
        campaign_id=cid,
        keyword=kw,
        day=day,
        impressions=impressions,
        clicks=clicks,
        conversions=conversions,
        cost=Decimal(cost),
        profit=Decimal(profit),
    )


def make_log(rows, budget="100.00"):
    """Build an ExperimentLog from (cid, kw, day, imp, clk, cnv, cost, profit) tuples."""
    records = sorted(
        (
            KeywordDayRecord(cid, kw, day, imp, clk, cnv, Decimal(cost), Decimal(profit))
            for cid, kw, day, imp, clk, cnv, cost, profit in rows
        ),
        key=lambda r: (r.campaign_id, r.keyword, r.day),
    )
    by_campaign = {}
    for rec in records:
        by_campaign.setdefault(rec.campaign_id, set()).add(rec.keyword)
    campaigns = {
        cid: Campaign(cid, Decimal(budget), tuple(sorted(kws)))
        for cid, kws in sorted(by_campaign.items())
    }
    horizon = (min(r.day for r in records), max(r.day for r in records))
    return ExperimentLog(tuple(records), campaigns, horizon)


def flat_log(cid="c1", keywords=("kw_a", "kw_b"), days=21, profit_of=None, budget="100.00"):
    """A complete panel with fixed KPIs; profit_of(kw, day) may vary profit."""
    rows = []
    for kw in keywords:
        for day in range(1, days + 1):
            profit = profit_of(kw, day) if profit_of else "1.00"
            rows.append((cid, kw, day, 100, 10, 2, "5.00", profit))
    return make_log(rows, budget=budget)


def panel_log(campaigns, days=21, profit_of=None, clicks_of=None, budget="100.00"):
    """Complete multi-campaign panel: every (campaign, keyword, day) has a row."""
    rows = []
    for cid, keywords in campaigns.items():
        for kw in keywords:
            for day in range(1, days + 1):
                profit = profit_of(cid, kw, day) if profit_of else "1.00"
                clicks = clicks_of(cid, kw) if clicks_of else 10
                rows.append((cid, kw, day, 100, clicks, 0, "1.00", profit))
    return make_log(rows, budget=budget)


def make_stats(keyword, *, mean_impressions=0.0, mean_clicks=0.0, mean_conversions=0.0,
               ctr=0.0, cvr=0.0, impression_slope=0.0, total_profit="0.00",
               total_cost="0.00", window_days=7):
    return KeywordStats(
        keyword=keyword,
        window_days=window_days,
        mean_impressions=mean_impressions,
        mean_clicks=mean_clicks,
        mean_conversions=mean_conversions,
        ctr=ctr,
        cvr=cvr,
        impression_slope=impression_slope,
        total_profit=Decimal(total_profit),
        total_cost=Decimal(total_cost),
    )


def make_table(stats, cid="c1", end_day=7, window=7):
    return StatsTable.from_stats(stats, provenance=(cid, end_day, window))


def random_stats(rng: random.Random, keyword: str) -> KeywordStats:
    impressions = rng.randint(0, 5000)
    clicks = rng.randint(0, impressions) if impressions else 0
    conversions = rng.randint(0, clicks) if clicks else 0
    return KeywordStats(
        keyword=keyword,
        window_days=7,
        mean_impressions=impressions / 7,
        mean_clicks=clicks / 7,
        mean_conversions=conversions / 7,
        ctr=clicks / impressions if impressions else 0.0,
        cvr=conversions / clicks if clicks else 0.0,
        impression_slope=rng.uniform(-50, 50),
        total_profit=money(rng.uniform(-200, 800)),
        total_cost=money(rng.uniform(0, 400)),
    )


def random_table(rng: random.Random, size=None, cid="c1"):
    size = size if size is not None else rng.randint(1, 12)
    keywords = rng.sample([f"kw{i:03d}" for i in range(200)], size)
    return make_table([random_stats(rng, kw) for kw in sorted(keywords)], cid=cid)


@pytest.fixture
def rng():
    return random.Random(20240817)
