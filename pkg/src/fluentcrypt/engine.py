"""Compiled rule sets, configuration validation and violation messages."""

from __future__ import annotations

import enum
import logging
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Union

from fluentcrypt import cryrule
from fluentcrypt.cryrule import (
    AlgorithmWhitelist,
    ConditionalLength,
    IvBlock,
    LengthBlock,
    ParseDiagnostic,
    RuleFile,
    SourceLocation,
    SymmetricKeyBlock,
)
from fluentcrypt.errors import NoConstraint, NoDefaultAvailable, RuleLoadError

logger = logging.getLogger(__name__)

RULES_ENV_VAR = "FLUENTCRYPT_RULES"
DEFAULT_RULES_NAME = "fluentcrypt/rules/default.cryrule"


class Task(enum.Enum):
    HASH = "hash"
    SYMMETRIC_ENCRYPT = "symmetric-encrypt"
    SYMMETRIC_DECRYPT = "symmetric-decrypt"
    ASYMMETRIC_ENCRYPT = "asymmetric-encrypt"
    ASYMMETRIC_DECRYPT = "asymmetric-decrypt"
    KEYPAIR_GEN = "keypair-gen"

    @property
    def section_name(self) -> str:
        return _TASK_SECTIONS[self]

    @property
    def is_asymmetric(self) -> bool:
        return self in (Task.ASYMMETRIC_ENCRYPT, Task.ASYMMETRIC_DECRYPT, Task.KEYPAIR_GEN)


_TASK_SECTIONS = {
    Task.HASH: "Hash",
    Task.SYMMETRIC_ENCRYPT: "Cipher",
    Task.SYMMETRIC_DECRYPT: "Cipher",
    Task.ASYMMETRIC_ENCRYPT: "KeyPair",
    Task.ASYMMETRIC_DECRYPT: "KeyPair",
    Task.KEYPAIR_GEN: "KeyPair",
}


class Provenance(enum.Enum):
    DEFAULT = "default"
    USER_SUPPLIED = "user-supplied"
    DERIVED = "derived"


# ---------------------------------------------------------------------------
# RuleSet
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LengthRules:
    """Ordered conditional length rules from one IV/SYMMETRICKEY/LENGTH block.

    Every rule whose condition matches an algorithm applies; a length is
    allowed when all of them admit it.
    """

    rules: tuple[ConditionalLength, ...]
    location: Optional[SourceLocation] = None

    def allowed(self, algorithm: str) -> Optional[tuple[int, ...]]:
        """Allowed lengths in preference order, or None when no rule matches."""
        matching = [r for r in self.rules if r.applies_to(algorithm)]
        if not matching:
            return None
        first, rest = matching[0], matching[1:]
        return tuple(n for n in first.lengths if all(n in r.lengths for r in rest))

    def default(self, algorithm: str) -> int:
        allowed = self.allowed(algorithm)
        if not allowed:
            raise NoConstraint(f"no length rule admits algorithm {algorithm!r}")
        return allowed[0]

    def location_for(self, algorithm: str) -> Optional[SourceLocation]:
        for rule in self.rules:
            if rule.applies_to(algorithm):
                return rule.location
        return self.location


@dataclass(frozen=True)
class SectionRules:
    name: str
    whitelist: Optional[tuple[str, ...]] = None
    whitelist_location: Optional[SourceLocation] = None
    iv: Optional[LengthRules] = None
    key: Optional[LengthRules] = None
    length: Optional[LengthRules] = None
    min_iterations: Optional[int] = None
    min_salt_length: Optional[int] = None
    iterations_location: Optional[SourceLocation] = None
    salt_location: Optional[SourceLocation] = None
    location: Optional[SourceLocation] = None

    def permits(self, algorithm: str) -> bool:
        if self.whitelist is None:
            return False
        wanted = algorithm.lower()
        return any(a.lower() == wanted for a in self.whitelist)


@dataclass(frozen=True)
class RuleSet:
    sections: Mapping[str, SectionRules] = field(default_factory=dict)
    source: RuleFile = field(default_factory=RuleFile)
    warnings: tuple[ParseDiagnostic, ...] = ()

    @property
    def source_name(self) -> str:
        return self.source.source_name

    def section(self, name: Union[str, Task]) -> Optional[SectionRules]:
        if isinstance(name, Task):
            name = name.section_name
        return self.sections.get(name.lower())

    def whitelist(self, task: Union[str, Task]) -> tuple[str, ...]:
        section = self.section(task)
        if section is None or section.whitelist is None:
            return ()
        return section.whitelist

    def default_algorithm(self, task: Union[str, Task]) -> str:
        """First whitelist entry of the section governing ``task``."""
        whitelist = self.whitelist(task)
        if not whitelist:
            name = task.section_name if isinstance(task, Task) else task
            raise NoDefaultAvailable(
                f"no ALGORITHM whitelist for {name} in {self.source_name}"
            )
        return whitelist[0]

    def required_key_length(self, algorithm: str, section: str = "Cipher") -> int:
        rules = self.section(section)
        if rules is None or rules.key is None:
            raise NoConstraint(f"no SYMMETRICKEY rules in section {section}")
        return rules.key.default(algorithm)

    def required_iv_length(self, algorithm: str, section: str = "Cipher") -> int:
        rules = self.section(section)
        if rules is None or rules.iv is None:
            raise NoConstraint(f"no IV rules in section {section}")
        return rules.iv.default(algorithm)


def _compile_section(section: cryrule.Section, warnings: list[ParseDiagnostic]) -> SectionRules:
    values: dict = {"name": section.class_name, "location": section.location}
    for constraint in section.constraints:
        if isinstance(constraint, AlgorithmWhitelist):
            values["whitelist"] = constraint.algorithms
            values["whitelist_location"] = constraint.location
        elif isinstance(constraint, IvBlock):
            values["iv"] = LengthRules(constraint.rules, constraint.location)
        elif isinstance(constraint, SymmetricKeyBlock):
            values["key"] = LengthRules(constraint.length_rules, constraint.location)
            values["min_iterations"] = constraint.min_iterations
            values["min_salt_length"] = constraint.min_salt_length
            values["iterations_location"] = constraint.iterations_location
            values["salt_location"] = constraint.salt_location
        elif isinstance(constraint, LengthBlock):
            values["length"] = LengthRules(constraint.rules, constraint.location)
    compiled = SectionRules(**values)

    if compiled.whitelist is not None:
        for block in (compiled.iv, compiled.key, compiled.length):
            if block is None:
                continue
            for rule in block.rules:
                if rule.condition is None:
                    continue
                for name in rule.condition.algorithms:
                    if not compiled.permits(name):
                        loc = rule.condition.location or section.location
                        warnings.append(_warning(
                            loc,
                            f"condition names {name!r}, which is not in the "
                            f"{section.class_name} ALGORITHM whitelist",
                        ))
    known = {s.lower() for s in _TASK_SECTIONS.values()}
    if section.class_name.lower() not in known:
        warnings.append(_warning(
            section.location,
            f"section {section.class_name!r} is not used by any task "
            f"(known: {', '.join(sorted(set(_TASK_SECTIONS.values())))})",
        ))
    elif compiled.length is not None and section.class_name.lower() != "keypair":
        warnings.append(_warning(
            compiled.length.location,
            f"section-level LENGTH has no effect in {section.class_name}; "
            "put key and IV lengths inside SYMMETRICKEY or IV blocks",
        ))
    return compiled


def _warning(location: Optional[SourceLocation], message: str) -> ParseDiagnostic:
    if location is None:
        return ParseDiagnostic(1, 1, message, "warning")
    return ParseDiagnostic(location.line, location.column, message, "warning", location.source_name)


def compile_rules(rule_file: RuleFile) -> RuleSet:
    """Index a parsed rule file by section; collects non-fatal warnings."""
    warnings: list[ParseDiagnostic] = []
    sections = {}
    for section in rule_file.sections:
        sections[section.class_name.lower()] = _compile_section(section, warnings)
    return RuleSet(sections, rule_file, tuple(warnings))


# ---------------------------------------------------------------------------
# Effective configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KdfParams:
    password: bytes = field(repr=False)
    salt: bytes = field(repr=False)
    iterations: int
    digest: str
    derived_length: int

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.derived_length < 1:
            raise ValueError("derived_length must be >= 1")


@dataclass(frozen=True)
class CryptoConfig:
    """Everything one task will run with, and where each value came from."""

    task: Task
    algorithm: str
    key: Optional[bytes] = field(default=None, repr=False)
    iv: Optional[bytes] = field(default=None, repr=False)
    kdf: Optional[KdfParams] = None
    modulus_length: Optional[int] = None
    input_encoding: str = "utf8"
    output_encoding: str = "hex"
    provenance: Mapping[str, Provenance] = field(default_factory=dict)


@dataclass(frozen=True)
class Violation:
    field: str
    offending_value: str
    allowed: str
    hint: str
    rule_location: Optional[SourceLocation] = None
    problem: str = ""
    section: str = ""

    def __post_init__(self):
        if not self.hint:
            raise ValueError("a violation needs a remediation hint")


def _names(algorithms) -> str:
    return ", ".join(algorithms)


def _lengths(lengths) -> str:
    lengths = list(lengths)
    if len(lengths) == 1:
        return f"{lengths[0]} bytes"
    return "one of " + ", ".join(str(n) for n in lengths) + " bytes"


def _check_length(
    what: str,
    field_name: str,
    actual: int,
    rules: LengthRules,
    algorithm: str,
    section: SectionRules,
    hint: str,
) -> Optional[Violation]:
    allowed = rules.allowed(algorithm)
    if allowed is None:
        return Violation(
            field=field_name,
            offending_value=f"{actual}-byte {what}",
            allowed=f"no {what} length rule covers {algorithm!r}",
            hint=(
                f"The rules cannot vouch for any {what} used with {algorithm!r}; "
                "switch to a whitelisted algorithm."
            ),
            rule_location=rules.location,
            problem=f"no {what} length rule for algorithm {algorithm!r}",
            section=section.name,
        )
    if actual not in allowed:
        return Violation(
            field=field_name,
            offending_value=f"{actual}-byte {what}",
            allowed=_lengths(allowed),
            hint=hint.format(expected=allowed[0], algorithm=algorithm),
            rule_location=rules.location_for(algorithm),
            problem=f"{what} length {actual} bytes is not allowed for {algorithm!r}",
            section=section.name,
        )
    return None


def validate_config(rules: RuleSet, config: CryptoConfig) -> list[Violation]:
    """Check ``config`` against ``rules``; an empty list means it passed.

    Every broken rule is reported, not only the first.
    """
    section = rules.section(config.task)
    if section is None:
        return [Violation(
            field="task",
            offending_value=config.task.value,
            allowed=f"a {config.task.section_name} section in the rule file",
            hint=(
                f"No rules for task {config.task.section_name}; add a "
                f"{config.task.section_name} section to {rules.source_name}."
            ),
            problem=f"no rules for task {config.task.section_name}",
            section=config.task.section_name,
        )]

    violations: list[Violation] = []
    algorithm = config.algorithm

    if section.whitelist is None:
        if not config.task.is_asymmetric:
            violations.append(Violation(
                field="algorithm",
                offending_value=algorithm,
                allowed=f"an ALGORITHM whitelist in section {section.name}",
                hint=f"Add an ALGORITHM clause to the {section.name} section of {rules.source_name}.",
                rule_location=section.location,
                problem=f"section {section.name} whitelists no algorithms",
                section=section.name,
            ))
    elif not section.permits(algorithm):
        violations.append(Violation(
            field="algorithm",
            offending_value=algorithm,
            allowed=f"one of {_names(section.whitelist)}",
            hint=(
                f"Drop the explicit algorithm to use the secure default "
                f"{section.whitelist[0]!r}, or pick one of the allowed names."
            ),
            rule_location=section.whitelist_location,
            problem=f"algorithm {algorithm!r} is not whitelisted",
            section=section.name,
        ))

    if config.iv is not None and section.iv is not None:
        v = _check_length(
            "IV", "iv", len(config.iv), section.iv, algorithm, section,
            "Leave the IV unset so a fresh random {expected}-byte IV is generated "
            "for every encryption; never reuse or zero-fill IVs.",
        )
        if v:
            violations.append(v)

    key_length = None
    if config.key is not None:
        key_length = len(config.key)
    elif config.kdf is not None:
        key_length = config.kdf.derived_length
    if key_length is not None and section.key is not None:
        v = _check_length(
            "key", "key", key_length, section.key, algorithm, section,
            "{algorithm} needs a {expected}-byte key; derive one from a password "
            "or leave the key unset to get a random key of the right size.",
        )
        if v:
            violations.append(v)

    if config.kdf is not None:
        violations.extend(_check_kdf(rules, section, config.kdf))

    if config.modulus_length is not None and section.length is not None:
        v = _check_length(
            "modulus", "modulus_length", config.modulus_length, section.length,
            algorithm, section,
            "Use a key pair with a {expected}-byte modulus; small RSA keys can be factored.",
        )
        if v:
            violations.append(v)
    return violations


def _check_kdf(rules: RuleSet, section: SectionRules, kdf: KdfParams) -> list[Violation]:
    found = []
    if section.min_iterations is not None and kdf.iterations < section.min_iterations:
        found.append(Violation(
            field="kdf.iterations",
            offending_value=str(kdf.iterations),
            allowed=f"at least {section.min_iterations} iterations",
            hint=(
                "Leave the iteration count unset to use the rule minimum, "
                f"or raise it to {section.min_iterations} or more."
            ),
            rule_location=section.iterations_location,
            problem=f"{kdf.iterations} key derivation iterations is below the minimum",
            section=section.name,
        ))
    if section.min_salt_length is not None and len(kdf.salt) < section.min_salt_length:
        found.append(Violation(
            field="kdf.salt",
            offending_value=f"{len(kdf.salt)}-byte salt",
            allowed=f"at least {section.min_salt_length} bytes",
            hint=(
                "Leave the salt unset so a fresh random salt is generated for "
                "every derivation; a fixed salt lets identical passwords yield identical keys."
            ),
            rule_location=section.salt_location,
            problem="salt is too short",
            section=section.name,
        ))
    hash_rules = rules.section(Task.HASH)
    if hash_rules is not None and hash_rules.whitelist is not None and not hash_rules.permits(kdf.digest):
        found.append(Violation(
            field="kdf.digest",
            offending_value=kdf.digest,
            allowed=f"one of {_names(hash_rules.whitelist)}",
            hint=f"Leave the key derivation digest unset to use {hash_rules.whitelist[0]!r}.",
            rule_location=hash_rules.whitelist_location,
            problem=f"key derivation digest {kdf.digest!r} is not whitelisted",
            section=hash_rules.name,
        ))
    return found


def explain(violation: Violation) -> str:
    """Render one violation as a guiding, secret-free message."""
    where = str(violation.rule_location) if violation.rule_location else "no matching rule"
    problem = violation.problem or f"invalid {violation.field}"
    scope = f"{violation.section} " if violation.section else ""
    return (
        f"{scope}{violation.field}: {problem}\n"
        f"  found:   {violation.offending_value}\n"
        f"  allowed: {violation.allowed}\n"
        f"  hint:    {violation.hint}\n"
        f"  rule:    {where}"
    )


def explain_all(violations) -> str:
    return "\n\n".join(explain(v) for v in violations)


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def default_rules_text() -> str:
    return resources.files("fluentcrypt").joinpath("rules/default.cryrule").read_text("utf-8")


def rules_from_text(text: str, source_name: str = "<string>") -> RuleSet:
    rule_file, diagnostics = cryrule.check(text, source_name)
    if rule_file is None:
        raise RuleLoadError(f"cannot load rules from {source_name}", diagnostics)
    ruleset = compile_rules(rule_file)
    for warning in ruleset.warnings:
        logger.warning("%s", warning)
    return ruleset


def load_rules(path: Union[str, os.PathLike, None] = None) -> RuleSet:
    """Load rules from ``path``, else $FLUENTCRYPT_RULES, else the shipped file."""
    if path is None:
        path = os.environ.get(RULES_ENV_VAR) or None
    if path is None:
        return rules_from_text(default_rules_text(), DEFAULT_RULES_NAME)
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise RuleLoadError(f"cannot read rule file {path}: {exc}") from exc
    return rules_from_text(text, str(path))
