"""Exception types shared across the toolkit."""


class ActiveReidError(Exception):
    """Base class for all toolkit errors."""


class ContradictionError(ActiveReidError):
    """A constraint conflicts with the transitive closure of the store.

    Raised instead of silently resolving the conflict: the oracle is assumed
    to be correct, so a contradiction always indicates a harness bug or a
    bad annotation that must surface.
    """


class ZeroVectorError(ActiveReidError):
    """Cosine distance requested for a zero-norm vector."""


class LevelOutOfRangeError(ActiveReidError):
    """Requested hierarchy level does not exist."""


class InfeasibleShapeError(ActiveReidError):
    """Assignment cost matrix has more rows than columns."""


class MissingIdentitiesError(ActiveReidError):
    """Operation needs ground-truth identities but the embedding set has none."""


class NotApplicableError(ActiveReidError):
    """Metric undefined for this split (e.g. no known queries)."""


class NoPositivesError(ActiveReidError):
    """A known query has no gallery positive; the split is malformed."""


class ValidationError(ActiveReidError, ValueError):
    """Malformed input file or inconsistent arguments.

    Also a ValueError so callers validating arguments can catch it the
    usual way.
    """


class RefreshTimeoutError(ActiveReidError):
    """External embedding refresh did not produce a file in time."""


class CycleIncompleteError(ActiveReidError):
    """An annotation cycle could not be completed; partial constraints are kept."""
