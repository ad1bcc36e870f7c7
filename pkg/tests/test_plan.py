import random

import pytest

from kwprune.plan import (
    DropBottom,
    Filter,
    KeepTop,
    PlanError,
    Score,
    Sort,
    Trend,
    explain_error,
    interpret_plan,
    parse_plan,
    pretty_print,
)
from kwprune.toolset import tool_drop_bottom, tool_filter, tool_keep_top, tool_score, tool_sort

from conftest import make_stats, make_table, random_table


@pytest.fixture
def five_by_ctr():
    # keyword-ascending order coincides with descending ctr on purpose:
    # several worked examples below are phrased against this table
    return make_table(
        [
            make_stats("a", ctr=0.5),
            make_stats("b", ctr=0.4),
            make_stats("c", ctr=0.3),
            make_stats("d", ctr=0.2),
            make_stats("e", ctr=0.1),
        ]
    )


# --- parsing ---------------------------------------------------------------

def test_parse_two_statement_plan():
    plan = parse_plan("SORT ctr DESC\nKEEP_TOP 5")
    assert plan.statements == (Sort("ctr", "DESC"), KeepTop(5))
    assert plan.source_text == "SORT ctr DESC\nKEEP_TOP 5"


def test_parse_all_statement_forms():
    text = (
        "TREND\n"
        "FILTER mean_impressions >= 10.5\n"
        "SCORE ctr * 0.6, cvr * 0.4\n"
        "SORT score ASC\n"
        "DROP_BOTTOM 2\n"
        "KEEP_TOP 3\n"
    )
    plan = parse_plan(text)
    assert plan.statements == (
        Trend(),
        Filter("mean_impressions", ">=", 10.5),
        Score((("ctr", 0.6), ("cvr", 0.4))),
        Sort("score", "ASC"),
        DropBottom(2),
        KeepTop(3),
    )


def test_parse_comments_and_blank_lines():
    text = "# drop the weak tail\n\nSORT ctr DESC  # engagement first\n\nKEEP_TOP 4\n"
    plan = parse_plan(text)
    assert plan.statements == (Sort("ctr", "DESC"), KeepTop(4))


def test_parse_unicode_comparators():
    plan = parse_plan("FILTER ctr ≥ 0.05\nFILTER cvr ≤ 0.9")
    assert plan.statements[0] == Filter("ctr", ">=", 0.05)
    assert plan.statements[1] == Filter("cvr", "<=", 0.9)


def test_parse_negative_threshold():
    plan = parse_plan("FILTER impression_slope >= -1.5\nSORT ctr ASC")
    assert plan.statements[0].threshold == -1.5


def err(text):
    with pytest.raises(PlanError) as exc_info:
        parse_plan(text)
    return exc_info.value


def test_keep_top_without_order_is_semantic():
    e = err("KEEP_TOP 5")
    assert e.kind == "semantic"
    assert "KEEP_TOP requires prior SORT or SCORE" in e.message
    assert (e.line, e.column) == (1, 1)


def test_unknown_metric_is_semantic():
    e = err("SORT banana DESC")
    assert e.kind == "semantic"
    assert "banana" in e.message
    assert e.line == 1
    assert e.column == 6
    assert e.excerpt == "banana"


def test_duplicate_score_rejected():
    e = err("SCORE ctr * 1\nSCORE cvr * 1")
    assert e.kind == "semantic"
    assert "at most once" in e.message
    assert e.line == 2


def test_keep_top_zero_rejected():
    e = err("SORT ctr DESC\nKEEP_TOP 0")
    assert e.kind == "semantic"
    assert "positive" in e.message
    assert (e.line, e.column) == (2, 10)


def test_keep_top_negative_is_parse_error():
    e = err("SORT ctr DESC\nKEEP_TOP -2")
    assert e.kind == "parse"


def test_score_metric_before_score_rejected():
    e = err("FILTER score >= 0.5")
    assert e.kind == "semantic"
    assert "not addressable" in e.message


def test_score_term_naming_score_rejected():
    e = err("SCORE score * 1.0")
    assert e.kind == "semantic"


def test_score_after_score_statement_allowed():
    plan = parse_plan("SCORE ctr * 1.0\nFILTER score >= 0.5\nSORT score DESC")
    assert len(plan.statements) == 3


def test_unexpected_character():
    e = err("SORT ctr DESC;")
    assert e.kind == "parse"
    assert "';'" in e.message
    assert (e.line, e.column) == (1, 14)


def test_trailing_tokens_rejected():
    e = err("TREND TREND")
    assert e.kind == "parse"
    assert "after a complete statement" in e.message


def test_truncated_statement():
    e = err("FILTER ctr >=")
    assert e.kind == "parse"
    assert "unexpected end of input" in e.message
    assert e.column == 14


def test_empty_plan_rejected():
    e = err("# only a comment\n\n")
    assert e.kind == "parse"
    assert "unexpected end of input" in e.message


def test_lowercase_keyword_rejected():
    e = err("sort ctr DESC")
    assert e.kind == "parse"
    assert "statement keyword" in e.message


def test_parse_error_reported_before_semantic():
    # line 1 has a semantic problem, line 2 a grammar problem
    e = err("SORT banana DESC\nFILTER ctr\n")
    assert e.kind == "parse"
    assert e.line == 2


def test_float_keep_top_rejected():
    e = err("SORT ctr DESC\nKEEP_TOP 2.5")
    assert e.kind == "parse"


# --- pretty printing ---------------------------------------------------------

def test_pretty_print_canonical():
    plan = parse_plan("FILTER  ctr   ≥ 0.05 # tail\nSCORE ctr*0.6 ,cvr * 0.4\nSORT score DESC\nKEEP_TOP 3")
    assert pretty_print(plan) == (
        "FILTER ctr >= 0.05\n"
        "SCORE ctr * 0.6, cvr * 0.4\n"
        "SORT score DESC\n"
        "KEEP_TOP 3"
    )


def test_roundtrip_structural_equality():
    text = "SORT total_profit DESC\nDROP_BOTTOM 2\nFILTER ctr >= 0.01\nTREND"
    plan = parse_plan(text)
    again = parse_plan(pretty_print(plan))
    assert again.statements == plan.statements


def random_plan_text(rng: random.Random) -> str:
    metrics = ["mean_impressions", "mean_clicks", "mean_conversions", "ctr",
               "cvr", "impression_slope", "total_profit", "total_cost"]
    lines = []
    ordered = False
    scored = False
    for _ in range(rng.randint(1, 6)):
        kind = rng.choice(["filter", "sort", "score", "keep", "drop", "trend"])
        if kind == "filter":
            metric = rng.choice(metrics + (["score"] if scored else []))
            cmp = rng.choice([">=", "<=", ">", "<", "="])
            lines.append(f"FILTER {metric} {cmp} {round(rng.uniform(-100, 100), 3)}")
        elif kind == "sort":
            metric = rng.choice(metrics + (["score"] if scored else []))
            lines.append(f"SORT {metric} {rng.choice(['ASC', 'DESC'])}")
            ordered = True
        elif kind == "score":
            if scored:
                continue
            terms = ", ".join(
                f"{rng.choice(metrics)} * {round(rng.uniform(-2, 2), 3)}"
                for _ in range(rng.randint(1, 3))
            )
            lines.append(f"SCORE {terms}")
            scored = ordered = True
        elif kind == "keep":
            if not ordered:
                continue
            lines.append(f"KEEP_TOP {rng.randint(1, 12)}")
        elif kind == "drop":
            lines.append(f"DROP_BOTTOM {rng.randint(0, 12)}")
        else:
            lines.append("TREND")
    if not lines:
        lines.append("TREND")
    return "\n".join(lines)


def test_roundtrip_generated_plans(rng):
    for _ in range(300):
        text = random_plan_text(rng)
        plan = parse_plan(text)
        assert parse_plan(pretty_print(plan)).statements == plan.statements


# --- interpretation -----------------------------------------------------------

def test_interpret_sort_keep_top(five_by_ctr):
    plan = parse_plan("SORT ctr DESC\nKEEP_TOP 3")
    outcome = interpret_plan(plan, five_by_ctr, n_min=2)
    assert outcome.retained == ("a", "b", "c")
    assert outcome.clamped is False
    assert outcome.statements_executed == 2


def test_interpret_emptying_filter_backfills_ascending(five_by_ctr):
    plan = parse_plan("FILTER ctr ≥ 0.9")
    outcome = interpret_plan(plan, five_by_ctr, n_min=2)
    assert outcome.retained == ("a", "b")
    assert outcome.clamped is True


def test_interpret_floor_equals_input_identity(five_by_ctr):
    shrinking = parse_plan("SORT ctr DESC\nKEEP_TOP 2")
    outcome = interpret_plan(shrinking, five_by_ctr, n_min=5)
    assert sorted(outcome.retained) == ["a", "b", "c", "d", "e"]
    assert outcome.clamped is True

    benign = parse_plan("SORT ctr ASC\nFILTER ctr >= 0")
    outcome = interpret_plan(benign, five_by_ctr, n_min=5)
    assert outcome.clamped is False
    assert sorted(outcome.retained) == ["a", "b", "c", "d", "e"]


def test_interpret_backfill_uses_last_sort_order(five_by_ctr):
    # ascending sort puts e first; the filter then empties the table, so
    # backfill must take the first dropped rows in that sorted order
    plan = parse_plan("SORT ctr ASC\nFILTER ctr > 1")
    outcome = interpret_plan(plan, five_by_ctr, n_min=3)
    assert outcome.retained == ("e", "d", "c")
    assert outcome.clamped is True


def test_interpret_continues_after_backfill(five_by_ctr):
    plan = parse_plan("FILTER ctr > 1\nSORT ctr ASC\nKEEP_TOP 2")
    outcome = interpret_plan(plan, five_by_ctr, n_min=2)
    # backfill to [a, b], then sort ascending -> [b, a], keep 2
    assert sorted(outcome.retained) == ["a", "b"]
    assert outcome.clamped is True
    assert outcome.statements_executed == 3


def test_interpret_score_pipeline(five_by_ctr):
    plan = parse_plan("SCORE ctr * 1.0\nSORT score ASC\nKEEP_TOP 2")
    outcome = interpret_plan(plan, five_by_ctr, n_min=1)
    assert outcome.retained == ("e", "d")


def test_interpret_drop_bottom(five_by_ctr):
    plan = parse_plan("SORT ctr DESC\nDROP_BOTTOM 2")
    outcome = interpret_plan(plan, five_by_ctr, n_min=1)
    assert outcome.retained == ("a", "b", "c")


def test_interpret_empty_table_constraint():
    table = make_table([])
    plan = parse_plan("TREND")
    with pytest.raises(PlanError) as exc_info:
        interpret_plan(plan, table, n_min=3)
    assert exc_info.value.kind == "constraint"


def test_interpret_rejects_bad_n_min(five_by_ctr):
    with pytest.raises(ValueError):
        interpret_plan(parse_plan("TREND"), five_by_ctr, n_min=0)


def test_interpret_deterministic(five_by_ctr, rng):
    for _ in range(25):
        plan = parse_plan(random_plan_text(rng))
        first = interpret_plan(plan, five_by_ctr, n_min=2)
        second = interpret_plan(plan, five_by_ctr, n_min=2)
        assert first == second


def manual_interpret(plan, table, n_min):
    """Independent composition of toolset calls plus the documented backfill."""
    floor = min(n_min, len(table))
    current = table
    clamped = False
    for stmt in plan.statements:
        if isinstance(stmt, Filter):
            nxt = tool_filter(current, stmt.metric, stmt.comparator, stmt.threshold)
        elif isinstance(stmt, Sort):
            nxt = tool_sort(current, stmt.metric, ascending=stmt.direction == "ASC")
        elif isinstance(stmt, Score):
            nxt = tool_score(current, list(stmt.terms))
        elif isinstance(stmt, KeepTop):
            nxt = tool_keep_top(current, stmt.n)
        elif isinstance(stmt, DropBottom):
            nxt = tool_drop_bottom(current, stmt.n)
        else:
            nxt = current
        if len(nxt.rows) < floor:
            clamped = True
            kept = set(r.keyword for r in nxt.rows)
            pool = [r.keyword for r in current.rows if r.keyword not in kept]
            restored = tuple(kept_kw for kept_kw in nxt.keywords()) + tuple(
                pool[: floor - len(nxt.rows)]
            )
            by_kw = {r.keyword: r for r in current.rows}
            rows = tuple(by_kw[kw] for kw in restored)
            scores = None
            if current.scores is not None:
                score_by_kw = dict(zip((r.keyword for r in current.rows), current.scores))
                scores = tuple(score_by_kw[kw] for kw in restored)
            from dataclasses import replace

            current = replace(current, rows=rows, scores=scores)
        else:
            current = nxt
    return current.keywords(), clamped


def test_interpreter_matches_manual_composition(rng):
    for _ in range(300):
        table = random_table(rng)
        plan = parse_plan(random_plan_text(rng))
        n_min = rng.randint(1, 10)
        outcome = interpret_plan(plan, table, n_min)
        retained, clamped = manual_interpret(plan, table, n_min)
        assert outcome.retained == retained
        assert outcome.clamped == clamped


def test_interpreter_safety(rng):
    for _ in range(300):
        table = random_table(rng)
        plan = parse_plan(random_plan_text(rng))
        n_min = rng.randint(1, 10)
        outcome = interpret_plan(plan, table, n_min)
        assert set(outcome.retained) <= set(table.keywords())
        assert len(outcome.retained) >= min(n_min, len(table))
        assert len(set(outcome.retained)) == len(outcome.retained)


# --- error explanations --------------------------------------------------------

def test_explain_semantic_error():
    text = explain_error(err("SORT banana DESC"))
    assert "line 1" in text
    assert "banana" in text
    assert "FILTER" in text  # grammar reminder present


def test_explain_parse_error_at_eof():
    text = explain_error(err("FILTER ctr >="))
    assert "unexpected end of input" in text


def test_explain_constraint_error():
    table = make_table([])
    with pytest.raises(PlanError) as exc_info:
        interpret_plan(parse_plan("TREND"), table, n_min=4)
    text = explain_error(exc_info.value)
    assert "n_min=4" in text
    assert "0" in text
