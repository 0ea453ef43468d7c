from typing import Optional


class AppException(Exception):
    """
    Base application exception.

    All domain-level and service-level errors inherit from this class.
    The CLI converts them into an error message and a process exit code.
    """

    def __init__(
        self,
        *,
        exit_code: int,
        error_code: str,
        message: str,
        details: Optional[dict] = None,
    ) -> None:
        self.exit_code = exit_code
        self.error_code = error_code
        self.message = message
        self.details = details
        super().__init__(message)


# -------------------------------------------------
# Configuration Errors
# -------------------------------------------------
class ConfigError(AppException):
    def __init__(self, message: str = "Invalid experiment config", details=None):
        super().__init__(
            exit_code=1,
            error_code="CONFIG_INVALID",
            message=message,
            details=details,
        )


class PresetNotFoundError(AppException):
    def __init__(self, message: str = "Unknown preset"):
        super().__init__(
            exit_code=1,
            error_code="PRESET_NOT_FOUND",
            message=message,
        )


# -------------------------------------------------
# Model & Regime Errors
# -------------------------------------------------
class UnsupportedRegimeError(AppException):
    def __init__(self, message: str = "Configuration lies outside the supported regime"):
        super().__init__(
            exit_code=2,
            error_code="UNSUPPORTED_REGIME",
            message=message,
        )


class InfiniteMassError(AppException):
    def __init__(
        self,
        message: str = "Levy measure has infinite mass on the interval",
        smallest_z_lo: float | None = None,
    ):
        self.smallest_z_lo = smallest_z_lo
        super().__init__(
            exit_code=2,
            error_code="INFINITE_MASS",
            message=message,
            details={"smallest_admissible_z_lo": smallest_z_lo},
        )


class QuadratureRequiredError(AppException):
    def __init__(
        self,
        message: str = (
            "needs quadrature grid: set quadrature_points in the levy table"
        ),
    ):
        super().__init__(
            exit_code=2,
            error_code="NEEDS_QUADRATURE_GRID",
            message=message,
        )


class DomainError(AppException):
    def __init__(self, message: str = "Argument outside the admissible domain"):
        super().__init__(
            exit_code=2,
            error_code="DOMAIN_ERROR",
            message=message,
        )


# -------------------------------------------------
# Estimation Errors
# -------------------------------------------------
class InsufficientDataError(AppException):
    def __init__(self, message: str = "Not enough data for the estimator"):
        super().__init__(
            exit_code=2,
            error_code="INSUFFICIENT_DATA",
            message=message,
        )


class AnnulusRangeError(AppException):
    def __init__(self, message: str = "Shell index beyond available radius", max_n=None):
        self.max_n = max_n
        super().__init__(
            exit_code=2,
            error_code="ANNULUS_OUT_OF_RANGE",
            message=message,
            details={"max_admissible_n": max_n},
        )


class VariantMismatchError(AppException):
    def __init__(self, message: str = "Peak-set variant does not match the field"):
        super().__init__(
            exit_code=2,
            error_code="VARIANT_MISMATCH",
            message=message,
        )


# -------------------------------------------------
# Verification Errors
# -------------------------------------------------
class AcceptanceCheckError(AppException):
    def __init__(self, message: str = "Acceptance check failed", details=None):
        super().__init__(
            exit_code=3,
            error_code="ACCEPTANCE_FAILED",
            message=message,
            details=details,
        )
