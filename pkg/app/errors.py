class IcguardError(Exception):
    """Base for every domain failure; carries the CLI exit code and HTTP status."""

    exit_code = 1
    status_code = 500

    def __init__(self, message: str, details: dict | list | str | None = None):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict:
        return {"error": self.message, "detalhes": self.details}


class ConfigurationError(IcguardError):
    exit_code = 2
    status_code = 422


class AssumptionViolation(ConfigurationError):
    """The model breaks one of the structural assumptions the observer relies on."""


class SimulationError(IcguardError):
    exit_code = 3
    status_code = 500


class OutputError(IcguardError):
    """Results could not be written."""

    exit_code = 3
    status_code = 500
