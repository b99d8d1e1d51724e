from __future__ import annotations

from typing import Any, Dict, NoReturn


# ──────────────────────────────────────────────────────────────
# Exit codes (scripts branch on these)
# ──────────────────────────────────────────────────────────────

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_DIMENSION = 3
EXIT_FAMILY_MEMBER = 4
EXIT_HYPOTHESIS = 5
EXIT_EXISTS_ONLY = 10
EXIT_NOT_EXISTS = 20
EXIT_UNSTABLE = 30
EXIT_BLOWUP = 31
EXIT_LIMIT_CONDITIONS = 40
EXIT_LIMIT_DIVERGES = 41


class LqmfgError(Exception):
    """Base error: a short machine code, a human message and the CLI exit status."""

    exit_code: int = 1

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message

    def detail(self) -> Dict[str, Any]:
        return {"code": self.code, "message": self.message}


class SpecParseError(LqmfgError):
    exit_code = EXIT_PARSE


class DimensionMismatch(LqmfgError):
    exit_code = EXIT_DIMENSION


class NonSymmetric(LqmfgError):
    exit_code = EXIT_DIMENSION


class NotSPD(LqmfgError):
    exit_code = EXIT_HYPOTHESIS


class NotPD(LqmfgError):
    exit_code = EXIT_HYPOTHESIS


class HypothesisViolation(LqmfgError):
    exit_code = EXIT_HYPOTHESIS


class IllConditioned(LqmfgError):
    exit_code = EXIT_NOT_EXISTS


class ConditionsFail(LqmfgError):
    exit_code = EXIT_NOT_EXISTS


class NonUnique(LqmfgError):
    exit_code = EXIT_EXISTS_ONLY


class NotNearlyIdentical(LqmfgError):
    exit_code = EXIT_DIMENSION


class Defective(LqmfgError):
    exit_code = EXIT_HYPOTHESIS


class NotSymmetrizable(LqmfgError):
    exit_code = EXIT_HYPOTHESIS


class StructureMismatch(LqmfgError):
    exit_code = EXIT_HYPOTHESIS


class FamilyMemberOutOfRange(LqmfgError):
    exit_code = EXIT_FAMILY_MEMBER


class Unstable(LqmfgError):
    exit_code = EXIT_UNSTABLE


class NumericalBlowup(LqmfgError):
    exit_code = EXIT_BLOWUP


class LimitConditionsFail(LqmfgError):
    exit_code = EXIT_LIMIT_CONDITIONS


# ──────────────────────────────────────────────────────────────
# Raising helpers
# ──────────────────────────────────────────────────────────────

def parse_error(code: str, message: str) -> NoReturn:
    raise SpecParseError(code, message)


def dimension_mismatch(code: str, message: str) -> NoReturn:
    raise DimensionMismatch(code, message)


def hypothesis_violation(code: str, message: str) -> NoReturn:
    raise HypothesisViolation(code, message)


def conditions_fail(code: str, message: str) -> NoReturn:
    raise ConditionsFail(code, message)


def unstable(code: str, message: str) -> NoReturn:
    raise Unstable(code, message)


def structure_mismatch(code: str, message: str) -> NoReturn:
    raise StructureMismatch(code, message)
