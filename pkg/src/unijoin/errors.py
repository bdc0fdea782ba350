"""Exception hierarchy for the join engine."""


class EngineError(Exception):
    """Base class for all engine errors."""


class SchemaError(EngineError):
    """Relation or catalog schema is malformed."""


class LoadError(EngineError):
    """CSV ingestion failed; message carries row/column position."""


class SortednessError(EngineError):
    """A declared or required sort order does not hold."""


class QueryError(EngineError):
    """Query text or structure is invalid."""


class PlanError(EngineError):
    """A join plan is structurally invalid (partition or binding order)."""


class ExecutionError(EngineError):
    """Plan execution failed (illegal policy, kind mismatch, missing relation)."""


class BudgetExceededError(EngineError):
    """Brute-force enumeration would exceed the step budget."""
