"""Exception hierarchy shared by every layer of fluentcrypt."""

from __future__ import annotations

from typing import TYPE_CHECKING, Sequence

if TYPE_CHECKING:
    from fluentcrypt.cryrule import ParseDiagnostic
    from fluentcrypt.engine import Violation


class FluentCryptError(Exception):
    """Base class for all errors raised by this package."""


class CryRuleSyntaxError(FluentCryptError):
    """A rule file failed to tokenize or parse.

    ``diagnostics`` holds every error found in one pass.
    """

    def __init__(self, diagnostics: Sequence["ParseDiagnostic"]):
        self.diagnostics = list(diagnostics)
        lines = [str(d) for d in self.diagnostics]
        super().__init__("\n".join(lines) or "invalid rule file")


class RuleLoadError(FluentCryptError):
    """Rules could not be read or compiled at startup."""

    def __init__(self, message: str, diagnostics: Sequence["ParseDiagnostic"] = ()):
        self.diagnostics = list(diagnostics)
        detail = "\n".join(f"  {d}" for d in self.diagnostics)
        super().__init__(f"{message}\n{detail}" if detail else message)


class NoDefaultAvailable(FluentCryptError, LookupError):
    """The rules give no whitelist to take a default from."""


class NoConstraint(FluentCryptError, LookupError):
    """No length rule matches the requested algorithm."""


class PolicyViolationError(FluentCryptError):
    """A configuration broke one or more rules; nothing was executed."""

    def __init__(self, violations: Sequence["Violation"]):
        from fluentcrypt.engine import explain

        self.violations = list(violations)
        count = len(self.violations)
        header = f"{count} rule violation{'s' if count != 1 else ''}:"
        body = "\n\n".join(explain(v) for v in self.violations)
        super().__init__(f"{header}\n{body}")


class MissingInputError(FluentCryptError):
    """A value the task cannot run without was never supplied."""

    def __init__(self, name: str, hint: str = ""):
        self.name = name
        message = f"missing input: {name}"
        if hint:
            message += f". {hint}"
        super().__init__(message)


class ConsumedBuilderError(FluentCryptError):
    """A builder was used after run()."""


class ConfigurationError(FluentCryptError, ValueError):
    """Builder or primitive received an unusable argument."""


class EncodingError(FluentCryptError, ValueError):
    """Data could not be decoded or encoded with the chosen encoding."""


class DecryptionError(FluentCryptError):
    """Ciphertext failed padding or authentication checks."""
