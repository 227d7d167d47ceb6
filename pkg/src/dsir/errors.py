"""Exception types. Each carries a stable ``code`` used in CLI error output."""


class DsirError(Exception):
    code = "error"

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self)}


class MalformedInputError(DsirError):
    code = "malformed_input"


class DuplicateIdError(DsirError):
    code = "duplicate_id"


class EmptyInputError(DsirError):
    code = "empty_input"


class VocabMismatchError(DsirError):
    code = "vocab_mismatch"


class SelectionSizeError(DsirError):
    """Raised when more examples are requested than are available."""

    code = "k_exceeds_n"


class UnknownMethodError(DsirError):
    code = "unknown_method"


class InfeasibleQuotaError(DsirError):
    code = "infeasible_quota"


class ModelFormatError(DsirError):
    code = "model_format"


class ConfigError(DsirError):
    code = "config"
