"""Error hierarchy shared by the library, the harness and the CLI."""

from __future__ import annotations


class VBSRError(Exception):
    """Base error carrying a machine-readable code next to the message."""

    error_code = "VBSR_ERROR"

    def __init__(self, detail: str, error_code: str | None = None):
        super().__init__(detail)
        self.detail = detail
        if error_code is not None:
            self.error_code = error_code


class DomainError(VBSRError, ValueError):
    """Argument outside the mathematical domain of an operation."""

    error_code = "DOMAIN_ERROR"


class PGMFormatError(VBSRError, ValueError):
    """Malformed or truncated PGM stream."""

    error_code = "PGM_FORMAT"

    def __init__(self, detail: str, offset: int):
        super().__init__(f"{detail} (byte offset {offset})")
        self.offset = offset


class FactorizationError(VBSRError, ArithmeticError):
    """A matrix that must be symmetric positive definite failed to factorize."""

    error_code = "NOT_SPD"

    def __init__(self, matrix_name: str, detail: str = ""):
        message = f"{matrix_name} is not positive definite"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)
        self.matrix_name = matrix_name


class NumericalBreakdownError(VBSRError, ArithmeticError):
    """A variational parameter left its admissible range."""

    error_code = "NUMERICAL_BREAKDOWN"

    def __init__(self, term: str, value: float):
        super().__init__(f"{term} became non-positive ({value:.6g})")
        self.term = term
        self.value = value


class ConfigError(VBSRError, ValueError):
    """Invalid experiment or engine configuration."""

    error_code = "CONFIG_ERROR"
