"""Exception hierarchy shared by all modules.

Every error carries a stable ``code`` string; transcripts, verdicts and
attack outcomes record the code rather than the Python class name.
"""

from __future__ import annotations


class DwptError(Exception):
    code = "error"


class InvalidArgument(DwptError, ValueError):
    code = "invalid-argument"


class Rejected(DwptError):
    """A party refused a message. Raised, caught by the session engine."""

    code = "rejected"


class ProtocolError(Rejected):
    code = "protocol-error"


class AuthenticationFailed(Rejected):
    code = "authentication-failed"


class RegistrationRejected(Rejected):
    code = "registration-rejected"


class CredentialsExhausted(Rejected):
    code = "credentials-exhausted"


class DoubleSpendRejected(Rejected):
    code = "double-spend-rejected"


class UnknownPseudonym(Rejected):
    code = "unknown-pseudonym"


class MissingInstrumentation(DwptError):
    code = "missing-instrumentation"


class ConfigError(DwptError):
    code = "config-error"

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class FormatError(DwptError):
    code = "format-error"

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
