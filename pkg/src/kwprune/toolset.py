"""Pure table operations over windowed keyword statistics.

These are the building blocks pruning plans compile down to. Every tool
takes a StatsTable and returns a new one; inputs are never mutated, no tool
invents keywords, and the only effects are dropping and reordering rows
(plus attaching scores). Thresholds and weights are plain floats; currency
columns compare exactly against them via Decimal semantics.
"""

from dataclasses import dataclass, replace
from decimal import Decimal

from .data import KeywordStats
from .errors import UnknownMetric

#: Metric names addressable from plans. `score` only exists after tool_score.
METRICS = (
    "mean_impressions",
    "mean_clicks",
    "mean_conversions",
    "ctr",
    "cvr",
    "impression_slope",
    "total_profit",
    "total_cost",
    "score",
)

COMPARATORS = (">=", "<=", ">", "<", "=")

#: Plain-language tool reference embedded in knowledge prompts.
TOOLSET_DOC = """\
Available table operations (a plan is a pipeline of these, one per line):
  FILTER metric cmp number   keep keywords whose metric satisfies the test
  SORT metric ASC|DESC       stable sort by a metric
  SCORE metric * w, ...      attach a composite score: weighted sum of
                             min-max normalized metrics (constant columns
                             normalize to 0.5); addressable as `score` after
  KEEP_TOP n                 keep the first n keywords in current order
                             (requires a prior SORT or SCORE)
  DROP_BOTTOM n              drop the last n keywords in current order,
                             never emptying the table
  TREND                      mark impression_slope as the signal of interest
Metrics: mean_impressions, mean_clicks, mean_conversions, ctr, cvr,
impression_slope, total_profit, total_cost, and score (after SCORE).
The executor enforces a retention floor: a plan may not leave a campaign
with fewer keywords than the configured minimum; underflow is backfilled."""


@dataclass(frozen=True)
class StatsTable:
    """An ordered, keyword-unique view of KeywordStats rows.

    `provenance` records (campaign_id, end_day, window) so downstream
    consumers can check a table matches the decision context it serves.
    `scores` parallels `rows` once tool_score has run.
    """

    rows: tuple[KeywordStats, ...]
    provenance: tuple[str, int, int]
    scores: tuple[float, ...] | None = None

    def __post_init__(self):
        keywords = [row.keyword for row in self.rows]
        if len(set(keywords)) != len(keywords):
            raise ValueError("table rows must have unique keywords")
        if self.scores is not None and len(self.scores) != len(self.rows):
            raise ValueError("scores must parallel rows")

    @classmethod
    def from_stats(cls, stats, provenance) -> "StatsTable":
        rows = tuple(sorted(stats, key=lambda s: s.keyword))
        return cls(rows=rows, provenance=provenance)

    def __len__(self) -> int:
        return len(self.rows)

    def keywords(self) -> tuple[str, ...]:
        return tuple(row.keyword for row in self.rows)

    def value(self, index: int, metric: str) -> float | Decimal:
        """Numeric value of `metric` for the row at `index`."""
        if metric == "score":
            if self.scores is None:
                raise UnknownMetric("metric 'score' is not set; run a SCORE step first")
            return self.scores[index]
        if metric not in METRICS:
            raise UnknownMetric(f"unknown metric {metric!r}")
        return getattr(self.rows[index], metric)

    def score_of(self, keyword: str) -> float | None:
        if self.scores is None:
            return None
        for row, score in zip(self.rows, self.scores):
            if row.keyword == keyword:
                return score
        return None


def _values(table: StatsTable, metric: str) -> list[float | Decimal]:
    return [table.value(i, metric) for i in range(len(table))]


def _take(table: StatsTable, indices: list[int]) -> StatsTable:
    rows = tuple(table.rows[i] for i in indices)
    scores = None
    if table.scores is not None:
        scores = tuple(table.scores[i] for i in indices)
    return replace(table, rows=rows, scores=scores)


_CMP = {
    ">=": lambda a, b: a >= b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    "<": lambda a, b: a < b,
    "=": lambda a, b: a == b,
}


def tool_filter(table: StatsTable, metric: str, comparator: str, threshold: float) -> StatsTable:
    """Keep rows whose metric satisfies `comparator threshold`. May empty the table."""
    if comparator not in _CMP:
        raise ValueError(f"unknown comparator {comparator!r}")
    op = _CMP[comparator]
    values = _values(table, metric)
    keep = [i for i, v in enumerate(values) if op(v, threshold)]
    return _take(table, keep)


def tool_sort(table: StatsTable, metric: str, ascending: bool) -> StatsTable:
    """Stable sort by a metric; ties keep their prior relative order."""
    values = _values(table, metric)
    order = sorted(range(len(table)), key=lambda i: values[i], reverse=not ascending)
    return _take(table, order)


def tool_keep_top(table: StatsTable, n: int) -> StatsTable:
    """Keep the first n rows in current order; n past the end keeps everything."""
    if n < 1:
        raise ValueError(f"keep_top needs n >= 1, got {n}")
    return _take(table, list(range(min(n, len(table)))))


def tool_drop_bottom(table: StatsTable, n: int) -> StatsTable:
    """Drop the last n rows in current order, but never empty a non-empty table."""
    if n < 0:
        raise ValueError(f"drop_bottom needs n >= 0, got {n}")
    if not len(table):
        return table
    keep_count = max(1, len(table) - n)
    return _take(table, list(range(keep_count)))


def tool_score(table: StatsTable, terms: list[tuple[str, float]]) -> StatsTable:
    """Attach a composite score: the weighted sum of min-max normalized metrics.

    Each metric column is normalized to [0, 1] over the table; a constant
    column normalizes to 0.5 everywhere. Row order is unchanged.
    """
    if not terms:
        raise ValueError("score needs at least one term")
    totals = [0.0] * len(table)
    for metric, weight in terms:
        if metric == "score":
            raise UnknownMetric("score terms cannot reference 'score'")
        values = [float(v) for v in _values(table, metric)]
        if not values:
            continue
        lo, hi = min(values), max(values)
        if hi == lo:
            normalized = [0.5] * len(values)
        else:
            normalized = [(v - lo) / (hi - lo) for v in values]
        for i, v in enumerate(normalized):
            totals[i] += weight * v
    return replace(table, scores=tuple(totals))


def tool_trend(table: StatsTable) -> StatsTable:
    """No-op accessor marking that impression_slope feeds later steps."""
    _values(table, "impression_slope")
    return table
