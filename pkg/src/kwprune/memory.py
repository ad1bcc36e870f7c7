"""Long-term memory: overview rendering, edit-distance retrieval, persistence.

Retrieval ranks stored entries by negative Levenshtein distance between the
query overview text and each stored overview text, most recent first among
ties. Distances use a bit-parallel algorithm (Myers) so scanning a store of
multi-hundred-character overviews stays fast without native dependencies.
"""

import json
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from os import PathLike
from typing import IO, Iterable, Iterator

from .data import KeywordStats, money
from .errors import CorruptStore, EmptyStats, InvariantViolation, NonMonotonicInsert


@dataclass(frozen=True)
class Overview:
    """Deterministic text rendering of one campaign-day's keyword stats."""

    text: str
    campaign_id: str
    day: int


def render_overview(campaign_id: str, day: int, stats: Iterable[KeywordStats]) -> Overview:
    """Render stats to canonical text: header line, then one line per keyword
    sorted ascending. Rationals carry exactly 4 fractional digits (half-even);
    currency keeps its 2 digits."""
    rows = sorted(stats, key=lambda s: s.keyword)
    if not rows:
        raise EmptyStats(f"campaign {campaign_id!r} day {day}: no stats to render")
    lines = [f"campaign {campaign_id} day {day} keywords {len(rows)}"]
    for s in rows:
        lines.append(
            f"{s.keyword} imp={s.mean_impressions:.4f} clk={s.mean_clicks:.4f} "
            f"cnv={s.mean_conversions:.4f} ctr={s.ctr:.4f} cvr={s.cvr:.4f} "
            f"slope={s.impression_slope:.4f} profit={s.total_profit} cost={s.total_cost}"
        )
    return Overview("\n".join(lines), campaign_id, day)


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over unicode scalar values.

    Myers' bit-parallel formulation: the shorter string becomes a bitmask
    alphabet; one pass over the longer string updates horizontal/vertical
    delta vectors held in arbitrary-width Python integers.
    """
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    if len(a) > len(b):
        a, b = b, a
    m = len(a)
    peq: dict[str, int] = {}
    bit = 1
    for ch in a:
        peq[ch] = peq.get(ch, 0) | bit
        bit <<= 1
    mask = (1 << m) - 1
    last = 1 << (m - 1)
    pv = mask
    mv = 0
    score = m
    for ch in b:
        eq = peq.get(ch, 0)
        xv = eq | mv
        xh = (((eq & pv) + pv) ^ pv) | eq
        ph = mv | (~(xh | pv) & mask)
        mh = pv & xh
        if ph & last:
            score += 1
        elif mh & last:
            score -= 1
        ph = ((ph << 1) | 1) & mask
        mh = (mh << 1) & mask
        pv = mh | (~(xv | ph) & mask)
        mv = ph & xv
    return score


@dataclass(frozen=True)
class MemoryEntry:
    overview: Overview
    knowledge: str
    plan_text: str
    reflection: str
    reward: Decimal
    inserted_at: tuple[int, int]  # (day, sequence number)


class MemoryStore:
    """Append-only ordered collection of past pruning examples."""

    def __init__(self, entries: Iterable[MemoryEntry] = ()):
        self._entries: list[MemoryEntry] = []
        for entry in entries:
            self.append(entry)

    def append(self, entry: MemoryEntry) -> None:
        if self._entries and entry.inserted_at <= self._entries[-1].inserted_at:
            raise NonMonotonicInsert(
                f"inserted_at {entry.inserted_at} is not after "
                f"{self._entries[-1].inserted_at}"
            )
        self._entries.append(entry)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[MemoryEntry]:
        return iter(self._entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MemoryStore):
            return NotImplemented
        return self._entries == other._entries

    @property
    def entries(self) -> tuple[MemoryEntry, ...]:
        return tuple(self._entries)


def retrieve_topk(
    store: MemoryStore,
    query: Overview,
    k: int,
    *,
    same_campaign_only: bool = False,
    max_chars: int | None = None,
) -> list[MemoryEntry]:
    """The min(k, |store|) entries most similar to the query.

    Similarity is negative Levenshtein distance on overview texts; ties go
    to the most recently inserted entry. `max_chars` truncates both texts
    before the distance computation to bound cost on very long overviews.
    `same_campaign_only` restricts candidates to the query's campaign.
    """
    if k < 1:
        raise ValueError(f"k must be a positive integer, got {k}")
    query_text = query.text[:max_chars] if max_chars else query.text
    candidates = []
    for entry in store:
        if same_campaign_only and entry.overview.campaign_id != query.campaign_id:
            continue
        text = entry.overview.text[:max_chars] if max_chars else entry.overview.text
        distance = levenshtein(query_text, text)
        day, seq = entry.inserted_at
        candidates.append(((distance, -day, -seq), entry))
    candidates.sort(key=lambda pair: pair[0])
    return [entry for _, entry in candidates[:k]]


# --- persistence ----------------------------------------------------------


def persist_store(store: MemoryStore, sink: IO[str] | str | PathLike) -> None:
    """Write one JSON object per line with fields
    {day, seq, overview, knowledge, plan, reflection, reward}."""
    if isinstance(sink, (str, PathLike)):
        with open(sink, "w", encoding="utf-8", newline="") as fh:
            persist_store(store, fh)
        return
    for entry in store:
        day, seq = entry.inserted_at
        record = {
            "day": day,
            "seq": seq,
            "overview": {
                "campaign_id": entry.overview.campaign_id,
                "day": entry.overview.day,
                "text": entry.overview.text,
            },
            "knowledge": entry.knowledge,
            "plan": entry.plan_text,
            "reflection": entry.reflection,
            "reward": str(entry.reward),
        }
        sink.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def load_store(source: IO[str] | str | PathLike) -> MemoryStore:
    if isinstance(source, (str, PathLike)):
        with open(source, "r", encoding="utf-8") as fh:
            return load_store(fh)
    store = MemoryStore()
    for line_no, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorruptStore(line_no, f"not a JSON record: {exc.msg}") from exc
        try:
            overview = record["overview"]
            entry = MemoryEntry(
                overview=Overview(
                    text=overview["text"],
                    campaign_id=overview["campaign_id"],
                    day=overview["day"],
                ),
                knowledge=record["knowledge"],
                plan_text=record["plan"],
                reflection=record["reflection"],
                reward=money(record["reward"]),
                inserted_at=(record["day"], record["seq"]),
            )
        except (KeyError, TypeError, InvalidOperation, InvariantViolation) as exc:
            raise CorruptStore(line_no, f"missing or invalid field: {exc}") from exc
        try:
            store.append(entry)
        except NonMonotonicInsert as exc:
            raise CorruptStore(line_no, str(exc)) from exc
    return store
