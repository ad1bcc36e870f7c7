"""Campaign log domain types, CSV ingestion, and windowed keyword statistics.

Currency is carried as exact two-digit decimals so budget arithmetic can be
checked to the cent; derived statistics (means, ratios, slopes) use floats.
Days are 1-based integer indices; ISO dates are converted at ingestion only.
"""

import csv
import hashlib
import io
import random
from dataclasses import dataclass, field
from datetime import date as _calendar_date
from decimal import Decimal, InvalidOperation, ROUND_HALF_EVEN
from functools import cached_property
from os import PathLike
from typing import IO, Iterable, Sequence

from .errors import (
    DataError,
    DayOutOfRange,
    DuplicateKey,
    InvalidConfig,
    InvariantViolation,
    MalformedRow,
    TooFewPoints,
    UnknownCampaign,
    WindowOutOfRange,
)

CENT = Decimal("0.01")

CSV_HEADER = (
    "campaign_id",
    "keyword",
    "date",
    "impressions",
    "clicks",
    "conversions",
    "cost",
    "profit",
)

DEFAULT_DAILY_BUDGET = Decimal("100.00")


def money(value: int | float | str | Decimal) -> Decimal:
    """Coerce a value to currency: two fractional digits, banker's rounding."""
    if isinstance(value, float):
        value = repr(value)
    try:
        return Decimal(value).quantize(CENT, rounding=ROUND_HALF_EVEN)
    except InvalidOperation as exc:
        raise InvariantViolation(f"not a currency amount: {value!r}") from exc


@dataclass(frozen=True)
class KeywordDayRecord:
    """One keyword's KPIs on one day."""

    campaign_id: str
    keyword: str
    day: int
    impressions: int
    clicks: int
    conversions: int
    cost: Decimal
    profit: Decimal

    def __post_init__(self):
        if self.day < 1:
            raise InvariantViolation(f"day index must be >= 1, got {self.day}")
        for name in ("impressions", "clicks", "conversions"):
            count = getattr(self, name)
            if not isinstance(count, int) or count < 0:
                raise InvariantViolation(f"{name} must be a non-negative integer")
        if self.clicks > self.impressions:
            raise InvariantViolation("clicks > impressions")
        if self.conversions > self.clicks:
            raise InvariantViolation("conversions > clicks")
        if self.cost < 0:
            raise InvariantViolation("cost must be non-negative")
        for name in ("cost", "profit"):
            amount = getattr(self, name)
            if amount != amount.quantize(CENT):
                raise InvariantViolation(f"{name} must have 2 fractional digits")


@dataclass(frozen=True)
class Campaign:
    """A campaign's identity, daily budget, and initial keyword universe."""

    campaign_id: str
    daily_budget: Decimal
    keywords: tuple[str, ...]

    def __post_init__(self):
        if not self.keywords:
            raise InvariantViolation(f"campaign {self.campaign_id!r} has no keywords")
        if len(set(self.keywords)) != len(self.keywords):
            raise InvariantViolation(f"campaign {self.campaign_id!r} has duplicate keywords")
        if self.daily_budget <= 0:
            raise InvariantViolation("daily_budget must be positive")


@dataclass(frozen=True)
class KeywordStats:
    """Windowed aggregates for one keyword, as consumed by pruning plans."""

    keyword: str
    window_days: int
    mean_impressions: float
    mean_clicks: float
    mean_conversions: float
    ctr: float
    cvr: float
    impression_slope: float
    total_profit: Decimal
    total_cost: Decimal


@dataclass(frozen=True)
class ExperimentLog:
    """A validated, immutable keyword-day log plus its campaign roster."""

    records: tuple[KeywordDayRecord, ...]
    campaigns: dict[str, Campaign]
    horizon: tuple[int, int]

    def __post_init__(self):
        first, last = self.horizon
        if first > last:
            raise InvariantViolation("horizon first day is past its last day")
        prev_key = None
        for rec in self.records:
            campaign = self.campaigns.get(rec.campaign_id)
            if campaign is None:
                raise InvariantViolation(f"record references unknown campaign {rec.campaign_id!r}")
            if rec.keyword not in campaign.keywords:
                raise InvariantViolation(
                    f"record references keyword {rec.keyword!r} outside campaign "
                    f"{rec.campaign_id!r}"
                )
            if not first <= rec.day <= last:
                raise InvariantViolation(f"record day {rec.day} outside horizon")
            key = (rec.campaign_id, rec.keyword, rec.day)
            if prev_key is not None and key <= prev_key:
                raise InvariantViolation("records must be sorted by (campaign, keyword, day)")
            prev_key = key

    @cached_property
    def _index(self) -> dict[str, dict[str, dict[int, KeywordDayRecord]]]:
        index: dict[str, dict[str, dict[int, KeywordDayRecord]]] = {}
        for rec in self.records:
            index.setdefault(rec.campaign_id, {}).setdefault(rec.keyword, {})[rec.day] = rec
        return index

    def campaign(self, campaign_id: str) -> Campaign:
        try:
            return self.campaigns[campaign_id]
        except KeyError:
            raise UnknownCampaign(f"no campaign {campaign_id!r} in log") from None

    def record_for(self, campaign_id: str, keyword: str, day: int) -> KeywordDayRecord | None:
        return self._index.get(campaign_id, {}).get(keyword, {}).get(day)

    def profits_on(self, campaign_id: str, day: int) -> dict[str, Decimal]:
        """Profit per keyword recorded for this campaign on one day."""
        self.campaign(campaign_id)
        first, last = self.horizon
        if not first <= day <= last:
            raise DayOutOfRange(f"day {day} outside log horizon [{first}, {last}]")
        out = {}
        for keyword, by_day in self._index.get(campaign_id, {}).items():
            rec = by_day.get(day)
            if rec is not None:
                out[keyword] = rec.profit
        return out


# --- ingestion ----------------------------------------------------------


def _read_text(source) -> str:
    if isinstance(source, (str, PathLike)):
        with open(source, "rb") as fh:
            raw = fh.read()
    elif isinstance(source, (bytes, bytearray)):
        raw = bytes(source)
    else:
        raw = source.read()
        if isinstance(raw, str):
            return raw
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedRow(1, f"log is not valid UTF-8: {exc}") from exc


class _DayParser:
    """Parses the date column: integer day indices or ISO dates.

    The first data row fixes the format for the whole file. ISO dates are
    mapped to 1-based indices in order of first occurrence.
    """

    def __init__(self):
        self.mode: str | None = None
        self.iso_to_index: dict[str, int] = {}

    def parse(self, text: str) -> int:
        looks_iso = "-" in text[1:]
        if self.mode is None:
            self.mode = "iso" if looks_iso else "int"
        if self.mode == "int":
            if looks_iso:
                raise ValueError("mixed date formats: expected an integer day index")
            day = int(text)
            if day < 1:
                raise ValueError("day index must be >= 1")
            return day
        _calendar_date.fromisoformat(text)
        if text not in self.iso_to_index:
            self.iso_to_index[text] = len(self.iso_to_index) + 1
        return self.iso_to_index[text]


def _parse_count(text: str, name: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {text!r}") from None
    if value < 0:
        raise ValueError(f"{name} must be non-negative, got {value}")
    return value


def _parse_money(text: str, name: str) -> Decimal:
    try:
        value = Decimal(text)
    except InvalidOperation:
        raise ValueError(f"{name} must be a decimal amount, got {text!r}") from None
    exponent = value.as_tuple().exponent
    if isinstance(exponent, int) and exponent < -2:
        raise ValueError(f"{name} has more than 2 fractional digits: {text!r}")
    return value.quantize(CENT)


def scan_log(
    source, daily_budget: Decimal = DEFAULT_DAILY_BUDGET
) -> tuple[ExperimentLog | None, list[DataError]]:
    """Parse a log, collecting row-level problems instead of failing fast.

    Returns the log assembled from the valid rows (None if none survive)
    plus every problem found, each carrying its 1-based line number.
    Header-level damage is unrecoverable and raises immediately.
    """
    text = _read_text(source)
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedRow(1, "missing header row") from None
    if tuple(header) != CSV_HEADER:
        raise MalformedRow(1, f"unexpected header {header!r}")

    problems: list[DataError] = []
    days = _DayParser()
    seen: dict[tuple[str, str, int], int] = {}
    records: list[KeywordDayRecord] = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            problems.append(MalformedRow(line_no, f"expected {len(CSV_HEADER)} fields, got {len(row)}"))
            continue
        campaign_id, keyword, date_text, imp, clk, cnv, cost, profit = row
        if not campaign_id or not keyword:
            problems.append(MalformedRow(line_no, "campaign_id and keyword must be non-empty"))
            continue
        try:
            day = days.parse(date_text)
            rec = KeywordDayRecord(
                campaign_id=campaign_id,
                keyword=keyword,
                day=day,
                impressions=_parse_count(imp, "impressions"),
                clicks=_parse_count(clk, "clicks"),
                conversions=_parse_count(cnv, "conversions"),
                cost=_parse_money(cost, "cost"),
                profit=_parse_money(profit, "profit"),
            )
        except ValueError as exc:
            problems.append(MalformedRow(line_no, str(exc)))
            continue
        except InvariantViolation as exc:
            problems.append(InvariantViolation(exc.reason, line_no=line_no))
            continue
        key = (rec.campaign_id, rec.keyword, rec.day)
        if key in seen:
            problems.append(DuplicateKey(line_no, rec.campaign_id, rec.keyword, rec.day))
            continue
        seen[key] = line_no
        records.append(rec)

    if not records:
        return None, problems

    records.sort(key=lambda r: (r.campaign_id, r.keyword, r.day))
    by_campaign: dict[str, set[str]] = {}
    for rec in records:
        by_campaign.setdefault(rec.campaign_id, set()).add(rec.keyword)
    campaigns = {
        cid: Campaign(cid, daily_budget, tuple(sorted(kws)))
        for cid, kws in sorted(by_campaign.items())
    }
    horizon = (min(r.day for r in records), max(r.day for r in records))
    return ExperimentLog(tuple(records), campaigns, horizon), problems


def ingest_log(source, daily_budget: Decimal = DEFAULT_DAILY_BUDGET) -> ExperimentLog:
    """Parse and validate a CSV log; raise the first problem found.

    The schema carries no budget column, so the campaign daily budget is
    supplied by the caller and applied uniformly.
    """
    log, problems = scan_log(source, daily_budget)
    if problems:
        raise problems[0]
    if log is None:
        raise MalformedRow(2, "log contains no data rows")
    return log


def write_log_csv(log: ExperimentLog, sink: IO[str] | str | PathLike) -> None:
    """Serialize a log back to the ingestion schema (days as integer indices)."""
    if isinstance(sink, (str, PathLike)):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            write_log_csv(log, fh)
        return
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for rec in log.records:
        writer.writerow(
            (
                rec.campaign_id,
                rec.keyword,
                rec.day,
                rec.impressions,
                rec.clicks,
                rec.conversions,
                str(rec.cost),
                str(rec.profit),
            )
        )


def log_digest(log: ExperimentLog) -> str:
    """Content hash of the canonical serialization, for run manifests."""
    buf = io.StringIO()
    write_log_csv(log, buf)
    return hashlib.sha256(buf.getvalue().encode("utf-8")).hexdigest()


# --- statistics ---------------------------------------------------------


def least_squares_slope(values: Sequence[float | int | Decimal]) -> float:
    """Ordinary least-squares slope of a series against abscissae 0..n-1."""
    n = len(values)
    if n < 2:
        raise TooFewPoints(f"need at least 2 points, got {n}")
    ys = [float(v) for v in values]
    x_bar = (n - 1) / 2
    y_bar = sum(ys) / n
    s_xy = sum((i - x_bar) * (y - y_bar) for i, y in enumerate(ys))
    s_xx = n * (n * n - 1) / 12
    return s_xy / s_xx


def window_stats(
    log: ExperimentLog,
    campaign_id: str,
    end_day: int,
    window: int = 7,
    keywords: Iterable[str] | None = None,
) -> list[KeywordStats]:
    """Aggregate the days [end_day - window + 1, end_day] per keyword.

    Days missing from the log contribute zeros to every sum and still count
    toward the mean denominator. Results are sorted by keyword. `keywords`
    restricts the computation to the given subset (the currently retained
    set during simulation); it defaults to the campaign's full universe.
    """
    campaign = log.campaign(campaign_id)
    if window < 1:
        raise InvalidConfig(f"window must be a positive integer, got {window}")
    first, last = log.horizon
    start_day = end_day - window + 1
    if start_day < first:
        raise WindowOutOfRange(f"window [{start_day}, {end_day}] starts before day {first}")
    if end_day > last:
        raise WindowOutOfRange(f"window [{start_day}, {end_day}] ends after day {last}")

    if keywords is None:
        keywords = campaign.keywords
    else:
        keywords = tuple(keywords)
        unknown = [kw for kw in keywords if kw not in campaign.keywords]
        if unknown:
            raise ValueError(f"keywords not in campaign {campaign_id!r}: {unknown}")

    by_keyword = log._index.get(campaign_id, {})
    out = []
    for kw in sorted(keywords):
        by_day = by_keyword.get(kw, {})
        impressions = []
        clicks = conversions = 0
        profit = cost = Decimal("0.00")
        for day in range(start_day, end_day + 1):
            rec = by_day.get(day)
            if rec is None:
                impressions.append(0)
                continue
            impressions.append(rec.impressions)
            clicks += rec.clicks
            conversions += rec.conversions
            profit += rec.profit
            cost += rec.cost
        total_impressions = sum(impressions)
        out.append(
            KeywordStats(
                keyword=kw,
                window_days=window,
                mean_impressions=total_impressions / window,
                mean_clicks=clicks / window,
                mean_conversions=conversions / window,
                ctr=clicks / total_impressions if total_impressions else 0.0,
                cvr=conversions / clicks if clicks else 0.0,
                impression_slope=least_squares_slope(impressions) if window > 1 else 0.0,
                total_profit=profit,
                total_cost=cost,
            )
        )
    return out


# --- synthetic data -----------------------------------------------------


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the synthetic log generator.

    Profit is concentrated: the top `skew_fraction` of each campaign's
    keywords is constructed to carry at least `skew_share` of campaign
    profit. Keyword profit levels occupy disjoint bands, so the realized
    profit ranking is the same on every day regardless of noise.
    """

    campaigns: int
    keywords_per_campaign: int
    days: int
    skew_fraction: float = 0.2
    skew_share: float = 0.8
    noise: float = 0.3
    seed: int = 0
    daily_budget: Decimal = field(default=DEFAULT_DAILY_BUDGET)

    def __post_init__(self):
        for name in ("campaigns", "keywords_per_campaign", "days"):
            count = getattr(self, name)
            if not isinstance(count, int) or count < 1:
                raise InvalidConfig(f"{name} must be a positive integer, got {count!r}")
        if not 0 < self.skew_fraction < 1:
            raise InvalidConfig(f"skew_fraction must lie in (0, 1), got {self.skew_fraction}")
        if not 0 < self.skew_share < 1:
            raise InvalidConfig(f"skew_share must lie in (0, 1), got {self.skew_share}")
        if not 0 <= self.noise <= 1:
            raise InvalidConfig(f"noise must lie in [0, 1], got {self.noise}")
        if self.daily_budget <= 0:
            raise InvalidConfig("daily_budget must be positive")


def _jitter(rng: random.Random, noise: float, scale: float = 0.5) -> float:
    return 1.0 + rng.uniform(-noise, noise) * scale


def generate_synthetic_log(config: SyntheticConfig) -> ExperimentLog:
    """Build a deterministic synthetic log with a skewed profit distribution.

    Each keyword gets a profit band: a center plus a noise half-width kept
    below half the spacing between adjacent centers, so bands never overlap
    and day-by-day profit order equals the designed rank order. Impressions,
    CTR, and CVR are drawn independently of profit rank, so engagement
    proxies do not reveal which keywords earn.
    """
    rng = random.Random(config.seed)
    n_campaigns = config.campaigns
    n_kw = config.keywords_per_campaign
    days = config.days
    noise = config.noise

    cid_width = max(2, len(str(n_campaigns)))
    kw_width = max(2, len(str(n_kw)))

    n_top = max(1, round(config.skew_fraction * n_kw))
    if n_kw > 1:
        n_top = min(n_top, n_kw - 1)
    n_bot = n_kw - n_top

    # Bottom band: centers climb from 0.3 in steps of `spacing_bot`; the top
    # band starts high enough that even its noisy minimum outweighs the
    # noisy maximum of all bottoms by the configured share, with margin.
    spacing_bot = max(0.7 / n_bot, 0.06) if n_bot else 0.0
    half_bot = 0.4 * noise * spacing_bot
    bot_max_center = 0.3 + (n_bot - 1) * spacing_bot if n_bot else 0.0
    bottom_total_max = n_bot * days * (bot_max_center + half_bot + 0.005)
    share = config.skew_share
    required_top_total = share / (1.0 - share) * bottom_total_max
    base_top = max(1.3 * required_top_total / (n_top * days), bot_max_center + 1.0)
    spacing_top = max(base_top / (2 * n_top), 0.06)
    half_top = 0.4 * noise * spacing_top

    def center(rank: int) -> tuple[float, float]:
        # rank 0 is the most profitable keyword
        if rank < n_top:
            return base_top + (n_top - rank) * spacing_top, half_top
        return 0.3 + (n_kw - 1 - rank) * spacing_bot, half_bot

    records = []
    campaigns = {}
    for c in range(1, n_campaigns + 1):
        cid = f"c{c:0{cid_width}d}"
        keywords = tuple(f"kw{j:0{kw_width}d}" for j in range(1, n_kw + 1))
        ranks = list(range(n_kw))
        rng.shuffle(ranks)

        params = []
        for j in range(n_kw):
            params.append(
                {
                    "rank": ranks[j],
                    "imp": rng.uniform(50, 500),
                    "drift": rng.uniform(-0.5, 0.5),
                    "ctr": rng.uniform(0.01, 0.12),
                    "cvr": rng.uniform(0.02, 0.30),
                    "cpc": rng.uniform(0.5, 2.5),
                }
            )

        for j, kw in enumerate(keywords):
            p = params[j]
            mid_profit, half = center(p["rank"])
            for day in range(1, days + 1):
                trend = 1.0 + p["drift"] * (day - (days + 1) / 2) / days
                impressions = max(0, round(p["imp"] * trend * _jitter(rng, noise)))
                clicks = min(impressions, max(0, round(impressions * p["ctr"] * _jitter(rng, noise))))
                conversions = min(clicks, max(0, round(clicks * p["cvr"] * _jitter(rng, noise))))
                cost = money(max(0.0, clicks * p["cpc"] * _jitter(rng, noise, 0.25)))
                profit = money(mid_profit + rng.uniform(-half, half))
                records.append(
                    KeywordDayRecord(cid, kw, day, impressions, clicks, conversions, cost, profit)
                )
        campaigns[cid] = Campaign(cid, config.daily_budget, keywords)

    records.sort(key=lambda r: (r.campaign_id, r.keyword, r.day))
    return ExperimentLog(tuple(records), campaigns, (1, days))
