"""Pruning policies: ranking baselines, a hindsight oracle, and the agent.

Every policy consumes a DecisionContext (the campaign's current keyword set
plus its 7-day stats table) and emits a PruningDecision. All of them respect
the retention floor min(n_min, |current keywords|); ties are always broken
keyword-ascending (the lexicographically smaller keyword is dropped first)
so decisions are deterministic.
"""

from dataclasses import dataclass
from decimal import Decimal
from typing import Mapping

from .data import Campaign
from .errors import MissingFutureProfit, TooFewPoints
from .gateway import (
    build_code_prompt,
    build_knowledge_prompt,
    build_repair_prompt,
    complete,
)
from .memory import MemoryStore, render_overview, retrieve_topk
from .plan import GRAMMAR, PlanError, explain_error, interpret_plan, parse_plan
from .toolset import TOOLSET_DOC, StatsTable

#: Names accepted by the policy registry. `identity` is the no-op policy the
#: agent falls back to; it also gives replay checks a pruning-free run.
POLICY_NAMES = (
    "impression_rank",
    "ctr_rank",
    "cvr_rank",
    "impression_regression",
    "oracle",
    "kp_agent",
    "identity",
)

#: Documentation block handed to knowledge prompts: grammar plus tool notes.
AGENT_TOOLSET_DOC = GRAMMAR + "\n\n" + TOOLSET_DOC


@dataclass(frozen=True)
class DecisionContext:
    """Everything a policy may look at when pruning one campaign-day."""

    campaign: Campaign
    day: int
    stats: StatsTable
    n_min: int

    def __post_init__(self):
        if self.n_min < 1:
            raise ValueError(f"n_min must be >= 1, got {self.n_min}")
        cid, end_day, _ = self.stats.provenance
        if cid != self.campaign.campaign_id or end_day != self.day:
            raise ValueError(
                f"stats provenance {self.stats.provenance} does not match "
                f"({self.campaign.campaign_id!r}, {self.day})"
            )
        extra = set(self.stats.keywords()) - set(self.campaign.keywords)
        if extra:
            raise ValueError(f"stats carry keywords outside the campaign: {sorted(extra)}")

    def keywords(self) -> tuple[str, ...]:
        return self.stats.keywords()


@dataclass(frozen=True)
class PruningDecision:
    retained: tuple[str, ...]
    policy_name: str
    plan_text: str | None = None
    knowledge: str | None = None
    repair_attempts: int = 0
    clamped: bool = False


def _drop_lowest(
    ctx: DecisionContext,
    ranked: list[tuple[Decimal | float, str]],
    prune_count: int,
    policy_name: str,
) -> PruningDecision:
    """Drop the prune_count lowest (value, keyword) pairs, floor permitting."""
    if prune_count < 0:
        raise ValueError(f"prune_count must be non-negative, got {prune_count}")
    keywords = ctx.keywords()
    floor = min(ctx.n_min, len(keywords))
    effective = min(prune_count, len(keywords) - floor)
    clamped = effective < prune_count
    if effective <= 0:
        return PruningDecision(tuple(sorted(keywords)), policy_name, clamped=clamped)
    ranked = sorted(ranked, key=lambda pair: (pair[0], pair[1]))
    dropped = {kw for _, kw in ranked[:effective]}
    retained = tuple(sorted(kw for kw in keywords if kw not in dropped))
    return PruningDecision(retained, policy_name, clamped=clamped)


def _metric_ranking(ctx: DecisionContext, metric: str) -> list[tuple[float, str]]:
    return [
        (ctx.stats.value(i, metric), row.keyword)
        for i, row in enumerate(ctx.stats.rows)
    ]


def impression_rank(ctx: DecisionContext, prune_count: int) -> PruningDecision:
    """Drop the keywords with the lowest 7-day mean impressions."""
    ranking = _metric_ranking(ctx, "mean_impressions")
    return _drop_lowest(ctx, ranking, prune_count, "impression_rank")


def ctr_rank(ctx: DecisionContext, prune_count: int) -> PruningDecision:
    """Drop the keywords with the poorest engagement (lowest clicks/impressions)."""
    ranking = _metric_ranking(ctx, "ctr")
    return _drop_lowest(ctx, ranking, prune_count, "ctr_rank")


def cvr_rank(ctx: DecisionContext, prune_count: int) -> PruningDecision:
    """Drop the keywords with the lowest conversions/clicks."""
    ranking = _metric_ranking(ctx, "cvr")
    return _drop_lowest(ctx, ranking, prune_count, "cvr_rank")


def impression_regression(ctx: DecisionContext, prune_count: int) -> PruningDecision:
    """Drop the keywords with the most negative impression slope."""
    if ctx.stats.rows and ctx.stats.rows[0].window_days < 2:
        raise TooFewPoints("impression_regression needs a window of at least 2 days")
    ranking = _metric_ranking(ctx, "impression_slope")
    return _drop_lowest(ctx, ranking, prune_count, "impression_regression")


def hindsight_oracle(
    ctx: DecisionContext,
    future_profit: Mapping[str, Decimal],
    prune_count: int,
) -> PruningDecision:
    """Drop the keywords with the lowest next-day profit.

    For a fixed retained size every response model scales the profit sum by
    the same factor, so keeping the top earners maximizes scaled reward.
    """
    missing = [kw for kw in ctx.keywords() if kw not in future_profit]
    if missing:
        raise MissingFutureProfit(f"no future profit for keywords: {missing}")
    ranking = [(future_profit[kw], kw) for kw in ctx.keywords()]
    return _drop_lowest(ctx, ranking, prune_count, "oracle")


def identity_decide(ctx: DecisionContext) -> PruningDecision:
    return PruningDecision(tuple(sorted(ctx.keywords())), "identity")


def kp_agent_decide(
    ctx: DecisionContext,
    memory: MemoryStore,
    gateway,
    *,
    k: int = 3,
    max_repairs: int = 3,
    same_campaign_only: bool = False,
    max_chars: int | None = None,
    toolset_doc: str = AGENT_TOOLSET_DOC,
) -> PruningDecision:
    """One agent decision: overview, retrieval, knowledge, plan, execution.

    Plan failures feed a repair prompt (the rendered error plus the failed
    plan) back to the code role up to max_repairs times. If every attempt
    fails the agent falls back to identity pruning, with plan_text=None so
    the fallback is visible in the trace.
    """
    overview = render_overview(ctx.campaign.campaign_id, ctx.day, ctx.stats.rows)
    examples = retrieve_topk(
        memory, overview, k,
        same_campaign_only=same_campaign_only, max_chars=max_chars,
    )
    knowledge = complete(build_knowledge_prompt(overview, examples, toolset_doc), gateway).text
    plan_text = complete(build_code_prompt(knowledge), gateway).text

    attempts = 0
    while True:
        try:
            plan = parse_plan(plan_text)
            outcome = interpret_plan(plan, ctx.stats, ctx.n_min)
        except PlanError as err:
            if attempts >= max_repairs:
                return PruningDecision(
                    retained=tuple(sorted(ctx.keywords())),
                    policy_name="kp_agent",
                    plan_text=None,
                    knowledge=knowledge,
                    repair_attempts=attempts,
                    clamped=False,
                )
            repair = build_repair_prompt(knowledge, plan_text, explain_error(err))
            plan_text = complete(repair, gateway).text
            attempts += 1
            continue
        return PruningDecision(
            retained=tuple(sorted(outcome.retained)),
            policy_name="kp_agent",
            plan_text=plan_text,
            knowledge=knowledge,
            repair_attempts=attempts,
            clamped=outcome.clamped,
        )
