"""Typed errors shared across the package.

The CLI maps these onto exit codes: configuration and usage problems
exit 1, data invariant violations exit 2, gateway failures exit 3.
"""


class KwpruneError(Exception):
    """Base class for every error raised by this package."""


class InvalidConfig(KwpruneError):
    """A configuration value is missing, unparseable, or out of range."""


# --- data layer ---------------------------------------------------------


class DataError(KwpruneError):
    """Base class for log ingestion and statistics errors."""


class MalformedRow(DataError):
    """A CSV row cannot be parsed into the expected schema."""

    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class DuplicateKey(DataError):
    """Two rows share the same (campaign, keyword, day) triple."""

    def __init__(self, line_no: int, campaign_id: str, keyword: str, day: int):
        self.line_no = line_no
        self.campaign_id = campaign_id
        self.keyword = keyword
        self.day = day
        super().__init__(
            f"line {line_no}: duplicate record for campaign {campaign_id!r}, "
            f"keyword {keyword!r}, day {day}"
        )


class InvariantViolation(DataError):
    """A record breaks a data invariant (e.g. clicks exceed impressions)."""

    def __init__(self, reason: str, line_no: int | None = None):
        self.reason = reason
        self.line_no = line_no
        prefix = f"line {line_no}: " if line_no is not None else ""
        super().__init__(prefix + reason)


class UnknownCampaign(DataError):
    """A campaign id is not present in the log."""


class WindowOutOfRange(DataError):
    """A statistics window extends past the log horizon."""


class TooFewPoints(DataError):
    """A regression needs at least two observations."""


class DayOutOfRange(DataError):
    """A requested day lies outside the log horizon."""


# --- toolset ------------------------------------------------------------


class UnknownMetric(KwpruneError):
    """A metric name is not addressable on the table."""


# --- memory -------------------------------------------------------------


class EmptyStats(KwpruneError):
    """An overview cannot be rendered from zero keyword rows."""


class NonMonotonicInsert(KwpruneError):
    """Memory entries must be appended in nondecreasing insertion order."""


class CorruptStore(KwpruneError):
    """A persisted memory store fails validation on load."""

    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


# --- gateway ------------------------------------------------------------


class GatewayError(KwpruneError):
    """Base class for model gateway failures."""


class TransportError(GatewayError):
    """The completion endpoint stayed unreachable after retries."""


class ProtocolError(GatewayError):
    """The completion endpoint answered with an unusable body."""


class ScriptExhausted(GatewayError):
    """A scripted backend ran out of responses for a role."""

    def __init__(self, role: str):
        self.role = role
        super().__init__(f"no scripted responses left for role {role!r}")


# --- policies -----------------------------------------------------------


class MissingFutureProfit(KwpruneError):
    """The hindsight oracle needs a profit figure for every keyword."""
