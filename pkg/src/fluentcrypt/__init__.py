"""Rule-checked, secure-by-default hashing and encryption."""

from fluentcrypt.cryrule import RuleFile, parse, tokenize, unparse
from fluentcrypt.engine import (
    CryptoConfig,
    RuleSet,
    Task,
    Violation,
    compile_rules,
    explain,
    load_rules,
    validate_config,
)
from fluentcrypt.errors import (
    ConfigurationError,
    ConsumedBuilderError,
    CryRuleSyntaxError,
    DecryptionError,
    EncodingError,
    FluentCryptError,
    MissingInputError,
    NoConstraint,
    NoDefaultAvailable,
    PolicyViolationError,
    RuleLoadError,
)
from fluentcrypt.fluent import (
    FluentCrypto,
    RunResult,
    TaskBuilder,
    decryption,
    encryption,
    hashing,
    keypair,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "ConsumedBuilderError",
    "CryRuleSyntaxError",
    "CryptoConfig",
    "DecryptionError",
    "EncodingError",
    "FluentCrypto",
    "FluentCryptError",
    "MissingInputError",
    "NoConstraint",
    "NoDefaultAvailable",
    "PolicyViolationError",
    "RuleFile",
    "RuleLoadError",
    "RuleSet",
    "RunResult",
    "Task",
    "TaskBuilder",
    "Violation",
    "compile_rules",
    "decryption",
    "encryption",
    "explain",
    "hashing",
    "keypair",
    "load_rules",
    "parse",
    "tokenize",
    "unparse",
    "validate_config",
]
