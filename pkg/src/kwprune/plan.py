"""The pruning plan language: parsing, validation, and interpretation.

Plans are the sandboxed replacement for executing model-generated code: a
closed, line-oriented language whose statements map one-to-one onto the
pruning toolset. Parsing and interpretation are pure, so a plan is a fully
auditable record of a pruning decision.

Grammar (one statement per line, `#` starts a comment):

    plan       := statement (NEWLINE statement)* ;
    statement  := filter | sort | score | keep | drop | trend ;
    filter     := "FILTER" metric cmp NUMBER ;
    sort       := "SORT" metric ("ASC" | "DESC") ;
    score      := "SCORE" term ("," term)* ;
    term       := metric "*" NUMBER ;
    keep       := "KEEP_TOP" INT ;
    drop       := "DROP_BOTTOM" INT ;
    trend      := "TREND" ;
    cmp        := ">=" | "<=" | ">" | "<" | "=" ;
    metric     := "mean_impressions" | "mean_clicks" | "mean_conversions"
                | "ctr" | "cvr" | "impression_slope" | "total_profit"
                | "total_cost" | "score" ;

Keywords are case-sensitive. The comparators may also be written with the
single characters ≥ and ≤. `score` is only addressable after a SCORE
statement has run; SCORE may appear at most once; KEEP_TOP needs a prior
SORT or SCORE so "top" is well-defined.
"""

import re
from dataclasses import dataclass, replace
from decimal import Decimal

from .errors import KwpruneError
from .toolset import (
    METRICS,
    StatsTable,
    tool_drop_bottom,
    tool_filter,
    tool_keep_top,
    tool_score,
    tool_sort,
    tool_trend,
)

GRAMMAR = """\
plan       := statement (NEWLINE statement)* ;
statement  := filter | sort | score | keep | drop | trend ;
filter     := "FILTER" metric cmp NUMBER ;
sort       := "SORT" metric ("ASC" | "DESC") ;
score      := "SCORE" term ("," term)* ;
term       := metric "*" NUMBER ;
keep       := "KEEP_TOP" INT ;
drop       := "DROP_BOTTOM" INT ;
trend      := "TREND" ;
cmp        := ">=" | "<=" | ">" | "<" | "=" ;
metric     := "mean_impressions" | "mean_clicks" | "mean_conversions"
            | "ctr" | "cvr" | "impression_slope" | "total_profit"
            | "total_cost" | "score" ;
Notes: one statement per line; # starts a comment; statement keywords are
case-sensitive; >= and <= may also be written as the single characters
≥ and ≤; `score` only exists after a SCORE statement; SCORE may appear at
most once; KEEP_TOP requires a prior SORT or SCORE."""


# --- statements -----------------------------------------------------------


@dataclass(frozen=True)
class Filter:
    metric: str
    comparator: str
    threshold: float


@dataclass(frozen=True)
class Sort:
    metric: str
    direction: str  # "ASC" or "DESC"


@dataclass(frozen=True)
class Score:
    terms: tuple[tuple[str, float], ...]


@dataclass(frozen=True)
class KeepTop:
    n: int


@dataclass(frozen=True)
class DropBottom:
    n: int


@dataclass(frozen=True)
class Trend:
    pass


Statement = Filter | Sort | Score | KeepTop | DropBottom | Trend


@dataclass(frozen=True)
class PruningPlan:
    statements: tuple[Statement, ...]
    source_text: str


@dataclass(frozen=True)
class PlanOutcome:
    retained: tuple[str, ...]
    clamped: bool
    statements_executed: int


class PlanError(KwpruneError):
    """A plan failed to parse, validate, or satisfy the retention floor."""

    PARSE = "parse"
    SEMANTIC = "semantic"
    CONSTRAINT = "constraint"

    def __init__(self, kind: str, message: str, line: int = 0, column: int = 0,
                 excerpt: str = ""):
        self.kind = kind
        self.message = message
        self.line = line
        self.column = column
        self.excerpt = excerpt
        if kind == self.CONSTRAINT:
            super().__init__(f"{kind} error: {message}")
        else:
            super().__init__(f"{kind} error at line {line}, column {column}: {message}")


# --- tokenizer ------------------------------------------------------------


@dataclass(frozen=True)
class _Token:
    kind: str  # "word" | "number" | "int" | "cmp" | "star" | "comma"
    text: str
    line: int
    column: int


_TOKEN_RE = re.compile(
    r"""(?P<ws>\s+)
      | (?P<cmp>>=|<=|≥|≤|>|<|=)
      | (?P<star>\*)
      | (?P<comma>,)
      | (?P<number>-?(?:\d+\.?\d*|\.\d+))
      | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
    """,
    re.VERBOSE,
)

_CMP_ALIASES = {"≥": ">=", "≤": "<="}


def _tokenize_line(text: str, line_no: int) -> list[_Token]:
    comment = text.find("#")
    if comment != -1:
        text = text[:comment]
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise PlanError(
                PlanError.PARSE,
                f"unexpected character {text[pos]!r}",
                line=line_no,
                column=pos + 1,
                excerpt=text[pos],
            )
        kind = match.lastgroup
        value = match.group()
        if kind != "ws":
            if kind == "cmp":
                value = _CMP_ALIASES.get(value, value)
            if kind == "number" and re.fullmatch(r"\d+", value):
                kind = "int"
            tokens.append(_Token(kind, value, line_no, match.start() + 1))
        pos = match.end()
    return tokens


# --- parser ---------------------------------------------------------------


class _LineParser:
    def __init__(self, tokens: list[_Token], line_no: int, line_len: int):
        self.tokens = tokens
        self.line = line_no
        self.end_column = line_len + 1
        self.pos = 0

    def done(self) -> bool:
        return self.pos >= len(self.tokens)

    def take(self, what: str, *kinds: str) -> _Token:
        if self.done():
            raise PlanError(
                PlanError.PARSE,
                f"unexpected end of input: expected {what}",
                line=self.line,
                column=self.end_column,
                excerpt="",
            )
        token = self.tokens[self.pos]
        if kinds and token.kind not in kinds:
            raise PlanError(
                PlanError.PARSE,
                f"expected {what}, found {token.text!r}",
                line=token.line,
                column=token.column,
                excerpt=token.text,
            )
        self.pos += 1
        return token

    def finish(self):
        if not self.done():
            token = self.tokens[self.pos]
            raise PlanError(
                PlanError.PARSE,
                f"unexpected token {token.text!r} after a complete statement",
                line=token.line,
                column=token.column,
                excerpt=token.text,
            )

    def take_number(self, what: str) -> tuple[float, _Token]:
        token = self.take(what, "number", "int")
        return float(token.text), token

    def take_int(self, what: str) -> tuple[int, _Token]:
        token = self.take(what, "int")
        return int(token.text), token


@dataclass(frozen=True)
class _Located:
    """A parsed statement plus the tokens semantic checks may blame."""

    statement: Statement
    head: _Token
    metric_tokens: tuple[_Token, ...]
    count_token: _Token | None = None


def _parse_statement(parser: _LineParser) -> _Located:
    head = parser.take("a statement keyword", "word")
    if head.text not in ("FILTER", "SORT", "SCORE", "KEEP_TOP", "DROP_BOTTOM", "TREND"):
        raise PlanError(
            PlanError.PARSE,
            f"expected a statement keyword (FILTER, SORT, SCORE, KEEP_TOP, "
            f"DROP_BOTTOM, TREND), found {head.text!r}",
            line=head.line,
            column=head.column,
            excerpt=head.text,
        )
    if head.text == "FILTER":
        metric = parser.take("a metric name", "word")
        cmp = parser.take("a comparator", "cmp")
        threshold, _ = parser.take_number("a number")
        parser.finish()
        return _Located(Filter(metric.text, cmp.text, threshold), head, (metric,))
    if head.text == "SORT":
        metric = parser.take("a metric name", "word")
        direction = parser.take("ASC or DESC", "word")
        if direction.text not in ("ASC", "DESC"):
            raise PlanError(
                PlanError.PARSE,
                f"expected ASC or DESC, found {direction.text!r}",
                line=direction.line,
                column=direction.column,
                excerpt=direction.text,
            )
        parser.finish()
        return _Located(Sort(metric.text, direction.text), head, (metric,))
    if head.text == "SCORE":
        terms = []
        metric_tokens = []
        while True:
            metric = parser.take("a metric name", "word")
            parser.take("'*'", "star")
            weight, _ = parser.take_number("a weight")
            terms.append((metric.text, weight))
            metric_tokens.append(metric)
            if parser.done():
                break
            parser.take("','", "comma")
        return _Located(Score(tuple(terms)), head, tuple(metric_tokens))
    if head.text == "KEEP_TOP":
        n, token = parser.take_int("a non-negative integer")
        parser.finish()
        return _Located(KeepTop(n), head, (), count_token=token)
    if head.text == "DROP_BOTTOM":
        n, token = parser.take_int("a non-negative integer")
        parser.finish()
        return _Located(DropBottom(n), head, (), count_token=token)
    parser.finish()
    return _Located(Trend(), head, ())


def _check_semantics(located: list[_Located]) -> None:
    seen_order = False  # a SORT or SCORE so far
    seen_score = False
    for item in located:
        stmt = item.statement
        for token in item.metric_tokens:
            if token.text not in METRICS:
                raise PlanError(
                    PlanError.SEMANTIC,
                    f"unknown metric {token.text!r}",
                    line=token.line,
                    column=token.column,
                    excerpt=token.text,
                )
            if token.text == "score":
                if isinstance(stmt, Score):
                    raise PlanError(
                        PlanError.SEMANTIC,
                        "SCORE terms cannot reference 'score'",
                        line=token.line,
                        column=token.column,
                        excerpt=token.text,
                    )
                if not seen_score:
                    raise PlanError(
                        PlanError.SEMANTIC,
                        "metric 'score' is not addressable before a SCORE statement",
                        line=token.line,
                        column=token.column,
                        excerpt=token.text,
                    )
        if isinstance(stmt, KeepTop):
            if not seen_order:
                raise PlanError(
                    PlanError.SEMANTIC,
                    "KEEP_TOP requires prior SORT or SCORE",
                    line=item.head.line,
                    column=item.head.column,
                    excerpt=item.head.text,
                )
            if stmt.n < 1:
                token = item.count_token
                raise PlanError(
                    PlanError.SEMANTIC,
                    "KEEP_TOP argument must be positive",
                    line=token.line,
                    column=token.column,
                    excerpt=token.text,
                )
        elif isinstance(stmt, Score):
            if seen_score:
                raise PlanError(
                    PlanError.SEMANTIC,
                    "SCORE may appear at most once",
                    line=item.head.line,
                    column=item.head.column,
                    excerpt=item.head.text,
                )
            seen_score = True
            seen_order = True
        elif isinstance(stmt, Sort):
            seen_order = True


def parse_plan(source: str) -> PruningPlan:
    """Parse plan text, reporting the first parse error, then the first
    semantic error."""
    located = []
    lines = source.split("\n")
    for line_no, line in enumerate(lines, start=1):
        tokens = _tokenize_line(line, line_no)
        if not tokens:
            continue
        parser = _LineParser(tokens, line_no, len(line))
        located.append(_parse_statement(parser))
    if not located:
        raise PlanError(
            PlanError.PARSE,
            "unexpected end of input: a plan needs at least one statement",
            line=max(1, len(lines)),
            column=1,
            excerpt="",
        )
    _check_semantics(located)
    return PruningPlan(tuple(item.statement for item in located), source)


# --- pretty printer -------------------------------------------------------


def _format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    text = repr(value)
    if "e" in text or "E" in text:
        text = format(Decimal(text), "f")
    return text


def pretty_print(plan: PruningPlan) -> str:
    """Render a plan to canonical text that parses back to the same statements."""
    lines = []
    for stmt in plan.statements:
        if isinstance(stmt, Filter):
            lines.append(f"FILTER {stmt.metric} {stmt.comparator} {_format_number(stmt.threshold)}")
        elif isinstance(stmt, Sort):
            lines.append(f"SORT {stmt.metric} {stmt.direction}")
        elif isinstance(stmt, Score):
            terms = ", ".join(f"{m} * {_format_number(w)}" for m, w in stmt.terms)
            lines.append(f"SCORE {terms}")
        elif isinstance(stmt, KeepTop):
            lines.append(f"KEEP_TOP {stmt.n}")
        elif isinstance(stmt, DropBottom):
            lines.append(f"DROP_BOTTOM {stmt.n}")
        else:
            lines.append("TREND")
    return "\n".join(lines)


# --- interpreter -----------------------------------------------------------


def _apply(stmt: Statement, table: StatsTable) -> StatsTable:
    if isinstance(stmt, Filter):
        return tool_filter(table, stmt.metric, stmt.comparator, stmt.threshold)
    if isinstance(stmt, Sort):
        return tool_sort(table, stmt.metric, ascending=stmt.direction == "ASC")
    if isinstance(stmt, Score):
        return tool_score(table, list(stmt.terms))
    if isinstance(stmt, KeepTop):
        return tool_keep_top(table, stmt.n)
    if isinstance(stmt, DropBottom):
        return tool_drop_bottom(table, stmt.n)
    return tool_trend(table)


def interpret_plan(plan: PruningPlan, table: StatsTable, n_min: int) -> PlanOutcome:
    """Run a validated plan against a table under the retention floor.

    The floor is min(n_min, |input|). After any statement whose result
    falls below the floor, the result is backfilled with the first dropped
    rows in that statement's input order (which carries the last SORT or
    SCORE ordering, or keyword-ascending if none ran) and `clamped` is set.
    Execution then continues with the repaired table.
    """
    if n_min < 1:
        raise ValueError(f"n_min must be a positive integer, got {n_min}")
    floor = min(n_min, len(table))
    if not len(table):
        raise PlanError(
            PlanError.CONSTRAINT,
            f"cannot retain at least n_min={n_min} keywords: "
            "attempted retention count 0 from an empty table",
        )
    current = table
    clamped = False
    executed = 0
    for stmt in plan.statements:
        result = _apply(stmt, current)
        executed += 1
        if len(result) < floor:
            clamped = True
            survivors = set(result.keywords())
            needed = floor - len(result)
            refill = [i for i, row in enumerate(current.rows) if row.keyword not in survivors]
            refill = refill[:needed]
            rows = result.rows + tuple(current.rows[i] for i in refill)
            scores = None
            if current.scores is not None:
                scores = result.scores + tuple(current.scores[i] for i in refill)
            current = replace(current, rows=rows, scores=scores)
        else:
            current = result
    return PlanOutcome(current.keywords(), clamped, executed)


def explain_error(err: PlanError) -> str:
    """Render a plan error as repair-prompt text: what went wrong, where,
    and a reminder of the grammar."""
    if err.kind == PlanError.CONSTRAINT:
        prose = f"Constraint error: {err.message}."
    else:
        fragment = f" Offending fragment: {err.excerpt!r}." if err.excerpt else ""
        prose = (
            f"{err.kind.capitalize()} error at line {err.line}, "
            f"column {err.column}: {err.message}.{fragment}"
        )
    return f"{prose} The plan language grammar:\n{GRAMMAR}"
