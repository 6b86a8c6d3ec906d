"""Exception hierarchy shared by the compiler, executors and orchestrator."""


class MpcPlanError(Exception):
    """Base class for every error raised by this package."""


class QueryError(MpcPlanError):
    """A query document or DAG is malformed. ``node`` names the offender."""

    def __init__(self, message, node=None):
        self.node = node
        if node is not None:
            message = f"{message} (node {node!r})"
        super().__init__(message)


class UnknownColumn(QueryError):
    pass


class UnknownNode(QueryError):
    pass


class DuplicateColumn(QueryError):
    pass


class CycleDetected(QueryError):
    pass


class ArityMismatch(QueryError):
    """Wrong number of operator inputs, or a table row of the wrong width."""


class NoOutput(QueryError):
    pass


class ConsentRequired(QueryError):
    """A rewrite would leak a data-dependent cardinality without consent."""


class UnsupportedUnderMpc(QueryError):
    """The compiled plan needs an operator the MPC engine cannot run."""


class IllegalBoundary(MpcPlanError):
    pass


class TableError(MpcPlanError):
    pass


class ParseError(TableError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingColumn(TableError):
    pass


class DivisionByZero(TableError):
    pass


class ShapeMismatch(MpcPlanError):
    pass


class UnauthorizedReveal(MpcPlanError):
    pass


class UntaggedMessage(MpcPlanError):
    pass


class MissingInput(MpcPlanError):
    def __init__(self, party, relation, path=None):
        self.party = party
        self.relation = relation
        where = f" at {path}" if path else ""
        super().__init__(f"party {party} has no input for relation {relation!r}{where}")


class Deadlock(MpcPlanError):
    def __init__(self, step_id, message):
        self.step_id = step_id
        super().__init__(f"step {step_id}: {message}")


class Mismatch(MpcPlanError):
    pass
