"""Exception hierarchy shared by every capforge module."""

from __future__ import annotations


class CapforgeError(Exception):
    """Base class; ``code`` is the machine-readable name used by the CLI and service."""

    code = "error"

    def __init__(self, message: str, **detail: object) -> None:
        super().__init__(message)
        self.message = message
        self.detail = {k: v for k, v in detail.items() if v is not None}

    def as_payload(self) -> dict[str, object]:
        return {"code": self.code, "message": self.message, "detail": self.detail}


class ParseError(CapforgeError):
    code = "parse-error"

    def __init__(
        self,
        message: str,
        *,
        path: str | None = None,
        line: int | None = None,
        column: int | None = None,
    ) -> None:
        where = []
        if path:
            where.append(path)
        if line is not None:
            where.append(f"line {line}" + (f", column {column}" if column is not None else ""))
        full = f"{message} ({'; '.join(where)})" if where else message
        super().__init__(full, path=path, line=line, column=column)
        self.path = path
        self.line = line
        self.column = column


class LiteralTypeError(CapforgeError, TypeError):
    """A literal that cannot be a value at all (bad IPv4, inverted range)."""

    code = "type-error"


class DanglingReference(CapforgeError):
    code = "dangling-reference"


class IncludeCycle(CapforgeError):
    code = "include-cycle"

    def __init__(self, cycle: list[str]) -> None:
        super().__init__("include cycle: " + " -> ".join(cycle), cycle=cycle)
        self.cycle = cycle


class UnknownNsf(CapforgeError):
    code = "unknown-nsf"


class UnknownCapability(CapforgeError):
    code = "unknown-capability"


class InvalidPolicy(CapforgeError):
    code = "invalid-policy"


class MissingAttribute(CapforgeError):
    code = "missing-attribute"


class DependencyViolation(CapforgeError):
    code = "dependency-violation"


class UnsatisfiableNegatedUnion(CapforgeError):
    code = "unsatisfiable-negated-union"


class MandatoryCapabilityAbsent(CapforgeError):
    code = "mandatory-capability-absent"


class NoApplicableCommandName(CapforgeError):
    code = "no-applicable-command-name"


class IncompleteMergeGroup(CapforgeError):
    code = "incomplete-merge-group"


class DanglingLink(CapforgeError):
    code = "dangling-link"


class UnknownEntity(CapforgeError):
    code = "unknown-entity"


class NoPath(CapforgeError):
    code = "no-path"


class PathLimitExceeded(CapforgeError):
    code = "path-limit-exceeded"


class UnknownVerb(CapforgeError):
    code = "unknown-verb"


class UnsupportedOption(CapforgeError):
    code = "unsupported-option"


class Uncoverable(CapforgeError):
    code = "uncoverable"

    def __init__(self, message: str, uncovered: list[int] | None = None) -> None:
        super().__init__(message, uncovered_paths=uncovered)
        self.uncovered = uncovered or []


class TemplateSlotUnfillable(CapforgeError):
    code = "template-slot-unfillable"


class NoCapableNsfInCatalogue(CapforgeError):
    code = "no-capable-nsf"


class GrammarError(CapforgeError):
    code = "grammar-error"

    def __init__(self, message: str, line: int, column: int) -> None:
        super().__init__(f"{message} at line {line}, column {column}", line=line, column=column)
        self.reason = message
        self.line = line
        self.column = column


class NoApplicableRecipe(CapforgeError):
    code = "no-applicable-recipe"


class UnboundVariable(CapforgeError):
    code = "unbound-variable"


class AlreadyEnforceable(CapforgeError):
    code = "already-enforceable"


class DecisionRequired(CapforgeError):
    code = "decision-required"


class UnknownSession(CapforgeError):
    code = "unknown-session"


class MissingPrerequisite(CapforgeError):
    code = "missing-prerequisite"


class UnknownRecipe(CapforgeError):
    code = "unknown-recipe"
