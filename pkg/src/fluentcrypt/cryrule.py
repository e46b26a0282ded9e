"""Lexer, parser and canonical printer for ``.cryrule`` policy files.

A rule file is a sequence of sections. Each section names a task class
(``Cipher``, ``Hash``, ``KeyPair``) and lists whitelisting constraints::

    Cipher
        ALGORITHM IN [aes-128-cbc, aes-128-gcm]
        IV
        LENGTH 16 IF ALGORITHM aes-128-cbc
        LENGTH 12 IF ALGORITHM aes-128-gcm
        SymmetricKey
        LENGTH 16
        ITERATIONS >= 10000
        SALTLENGTH >= 20

Whitespace and line breaks carry no meaning, keywords are case-insensitive,
identifiers are kept verbatim and ``#`` starts a comment running to the end
of the line.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

from fluentcrypt.errors import CryRuleSyntaxError

__all__ = [
    "AlgorithmCondition",
    "AlgorithmWhitelist",
    "ConditionalLength",
    "Constraint",
    "IvBlock",
    "LengthBlock",
    "ParseDiagnostic",
    "RuleFile",
    "Section",
    "SourceLocation",
    "SymmetricKeyBlock",
    "Token",
    "TokenKind",
    "check",
    "parse",
    "tokenize",
    "unparse",
]


class TokenKind(enum.Enum):
    KW_ALGORITHM = "ALGORITHM"
    KW_IN = "IN"
    KW_LENGTH = "LENGTH"
    KW_IF = "IF"
    KW_IV = "IV"
    KW_SYMMETRICKEY = "SYMMETRICKEY"
    KW_SALTLENGTH = "SALTLENGTH"
    KW_ITERATIONS = "ITERATIONS"
    GE = ">="
    LBRACKET = "["
    RBRACKET = "]"
    COMMA = ","
    NUMBER = "NUMBER"
    IDENT = "IDENT"
    EOF = "EOF"


KEYWORDS = {
    kind.value: kind
    for kind in TokenKind
    if kind.name.startswith("KW_")
}

_PUNCT = {
    "[": TokenKind.LBRACKET,
    "]": TokenKind.RBRACKET,
    ",": TokenKind.COMMA,
}

_WORD = re.compile(r"[A-Za-z0-9_][A-Za-z0-9_.\-]*")

# Keywords that open a clause; an identifier directly followed by one of
# these begins a new section.
_CLAUSE_STARTS = frozenset(
    {
        TokenKind.KW_ALGORITHM,
        TokenKind.KW_IV,
        TokenKind.KW_SYMMETRICKEY,
        TokenKind.KW_LENGTH,
    }
)


@dataclass(frozen=True)
class SourceLocation:
    source_name: str
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.source_name}:{self.line}:{self.column}"


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    line: int
    column: int

    @property
    def end_column(self) -> int:
        return self.column + max(len(self.text), 1) - 1

    def describe(self) -> str:
        if self.kind is TokenKind.EOF:
            return "end of file"
        return repr(self.text)


@dataclass(frozen=True)
class ParseDiagnostic:
    line: int
    column: int
    message: str
    severity: str = "error"
    source_name: str = "<string>"

    def __str__(self) -> str:
        return f"{self.source_name}:{self.line}:{self.column}: {self.severity}: {self.message}"

    @property
    def is_error(self) -> bool:
        return self.severity == "error"


# AST nodes compare structurally; locations are diagnostic metadata only.

def _loc():
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class AlgorithmCondition:
    algorithms: tuple[str, ...]
    location: Optional[SourceLocation] = _loc()

    def matches(self, algorithm: str) -> bool:
        wanted = algorithm.lower()
        return any(a.lower() == wanted for a in self.algorithms)


@dataclass(frozen=True)
class ConditionalLength:
    lengths: tuple[int, ...]
    condition: Optional[AlgorithmCondition] = None
    location: Optional[SourceLocation] = _loc()

    def applies_to(self, algorithm: str) -> bool:
        return self.condition is None or self.condition.matches(algorithm)


@dataclass(frozen=True)
class AlgorithmWhitelist:
    algorithms: tuple[str, ...]
    location: Optional[SourceLocation] = _loc()


@dataclass(frozen=True)
class IvBlock:
    rules: tuple[ConditionalLength, ...]
    location: Optional[SourceLocation] = _loc()


@dataclass(frozen=True)
class SymmetricKeyBlock:
    length_rules: tuple[ConditionalLength, ...]
    min_iterations: Optional[int] = None
    min_salt_length: Optional[int] = None
    location: Optional[SourceLocation] = _loc()
    iterations_location: Optional[SourceLocation] = _loc()
    salt_location: Optional[SourceLocation] = _loc()


@dataclass(frozen=True)
class LengthBlock:
    """Section-level LENGTH rules, e.g. the RSA modulus size of ``KeyPair``."""

    rules: tuple[ConditionalLength, ...]
    location: Optional[SourceLocation] = _loc()


Constraint = Union[AlgorithmWhitelist, IvBlock, SymmetricKeyBlock, LengthBlock]


@dataclass(frozen=True)
class Section:
    class_name: str
    constraints: tuple[Constraint, ...]
    location: Optional[SourceLocation] = _loc()


@dataclass(frozen=True)
class RuleFile:
    sections: tuple[Section, ...] = ()
    source_name: str = field(default="<string>", compare=False)

    def section(self, name: str) -> Optional[Section]:
        wanted = name.lower()
        for section in self.sections:
            if section.class_name.lower() == wanted:
                return section
        return None


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

def _scan(source: str, source_name: str) -> Iterator[Union[Token, ParseDiagnostic]]:
    line, line_start, pos = 1, 0, 0
    n = len(source)
    while pos < n:
        ch = source[pos]
        column = pos - line_start + 1
        if ch == "\n":
            line += 1
            pos += 1
            line_start = pos
        elif ch.isspace():
            pos += 1
        elif ch == "#":
            while pos < n and source[pos] != "\n":
                pos += 1
        elif ch in _PUNCT:
            yield Token(_PUNCT[ch], ch, line, column)
            pos += 1
        elif source.startswith(">=", pos):
            yield Token(TokenKind.GE, ">=", line, column)
            pos += 2
        else:
            match = _WORD.match(source, pos)
            if match is None:
                yield ParseDiagnostic(
                    line, column, f"illegal character {ch!r}", source_name=source_name
                )
                pos += 1
                continue
            text = match.group()
            if text.isdigit():
                kind = TokenKind.NUMBER
            else:
                kind = KEYWORDS.get(text.upper(), TokenKind.IDENT)
            yield Token(kind, text, line, column)
            pos = match.end()


def tokenize(source: str, source_name: str = "<string>") -> list[Token]:
    """Split ``source`` into tokens.

    Raises CryRuleSyntaxError listing every illegal character.
    """
    tokens, errors = [], []
    for item in _scan(source, source_name):
        (tokens if isinstance(item, Token) else errors).append(item)
    if errors:
        raise CryRuleSyntaxError(errors)
    return tokens


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _SyncError(Exception):
    """Abandon the current section and resynchronise."""


class _Parser:
    def __init__(self, tokens: list[Token], source_name: str):
        self.source_name = source_name
        if tokens:
            last = tokens[-1]
            eof = Token(TokenKind.EOF, "", last.line, last.end_column)
        else:
            eof = Token(TokenKind.EOF, "", 1, 1)
        self.tokens = tokens + [eof]
        self.pos = 0
        self.diagnostics: list[ParseDiagnostic] = []

    # token helpers

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tok
        if tok.kind is not TokenKind.EOF:
            self.pos += 1
        return tok

    def at(self, *kinds: TokenKind) -> bool:
        return self.tok.kind in kinds

    def location(self, tok: Token) -> SourceLocation:
        return SourceLocation(self.source_name, tok.line, tok.column)

    def error(self, tok: Token, message: str) -> None:
        self.diagnostics.append(
            ParseDiagnostic(tok.line, tok.column, message, source_name=self.source_name)
        )

    def fail(self, tok: Token, message: str) -> "_SyncError":
        self.error(tok, message)
        return _SyncError()

    def expect(self, kind: TokenKind, what: str) -> Token:
        if not self.at(kind):
            raise self.fail(self.tok, f"missing {what}, found {self.tok.describe()}")
        return self.advance()

    def at_section_start(self) -> bool:
        return self.at(TokenKind.IDENT) and self.peek().kind in _CLAUSE_STARTS

    def synchronize(self) -> None:
        while not self.at(TokenKind.EOF) and not self.at_section_start():
            self.advance()

    # grammar

    def parse_file(self) -> RuleFile:
        sections: list[Section] = []
        seen: dict[str, Token] = {}
        while not self.at(TokenKind.EOF):
            if not self.at(TokenKind.IDENT):
                self.error(self.tok, f"expected a section class name, found {self.tok.describe()}")
                self.advance()
                self.synchronize()
                continue
            name_tok = self.tok
            try:
                section = self.parse_section()
            except _SyncError:
                self.synchronize()
                continue
            key = section.class_name.lower()
            if key in seen:
                first = seen[key]
                self.error(
                    name_tok,
                    f"duplicate section {section.class_name!r} "
                    f"(first defined at line {first.line})",
                )
            else:
                seen[key] = name_tok
                sections.append(section)
        return RuleFile(tuple(sections), self.source_name)

    def parse_section(self) -> Section:
        name_tok = self.advance()
        constraints: list[Constraint] = []
        kinds_seen: set[type] = set()
        while self.at(*_CLAUSE_STARTS):
            clause_tok = self.tok
            clause = self.parse_clause()
            if type(clause) in kinds_seen:
                self.error(
                    clause_tok,
                    f"duplicate {clause_tok.text.upper()} clause in section {name_tok.text!r}",
                )
            kinds_seen.add(type(clause))
            constraints.append(clause)
        if not constraints:
            if self.at(TokenKind.IDENT):
                raise self.fail(self.tok, f"unknown keyword {self.tok.text!r}")
            raise self.fail(
                self.tok,
                f"section {name_tok.text!r} has no constraints, found {self.tok.describe()}",
            )
        if not self.at(TokenKind.EOF) and not self.at_section_start():
            if self.at(TokenKind.IDENT):
                raise self.fail(self.tok, f"unknown keyword {self.tok.text!r}")
            raise self.fail(self.tok, f"unexpected {self.tok.describe()}")
        return Section(name_tok.text, tuple(constraints), self.location(name_tok))

    def parse_clause(self) -> Constraint:
        if self.at(TokenKind.KW_ALGORITHM):
            start = self.advance()
            names = self.parse_algorithms("ALGORITHM")
            return AlgorithmWhitelist(names, self.location(start))
        if self.at(TokenKind.KW_IV):
            start = self.advance()
            return IvBlock(self.parse_length_rules("IV"), self.location(start))
        if self.at(TokenKind.KW_SYMMETRICKEY):
            return self.parse_symmetric_key()
        start = self.tok
        return LengthBlock(self.parse_length_rules(None), self.location(start))

    def parse_symmetric_key(self) -> SymmetricKeyBlock:
        start = self.advance()
        rules = self.parse_length_rules("SYMMETRICKEY")
        bounds: dict[TokenKind, tuple[int, SourceLocation]] = {}
        while self.at(TokenKind.KW_ITERATIONS, TokenKind.KW_SALTLENGTH):
            kw = self.advance()
            if kw.kind in bounds:
                self.error(kw, f"duplicate {kw.text.upper()} bound")
            self.expect(TokenKind.GE, f"'>=' after {kw.text.upper()}")
            bounds[kw.kind] = (self.parse_number(kw.text.upper()), self.location(kw))
        iterations = bounds.get(TokenKind.KW_ITERATIONS, (None, None))
        salt = bounds.get(TokenKind.KW_SALTLENGTH, (None, None))
        return SymmetricKeyBlock(
            rules,
            min_iterations=iterations[0],
            min_salt_length=salt[0],
            location=self.location(start),
            iterations_location=iterations[1],
            salt_location=salt[1],
        )

    def parse_length_rules(self, owner: Optional[str]) -> tuple[ConditionalLength, ...]:
        rules = []
        if owner is not None and not self.at(TokenKind.KW_LENGTH):
            raise self.fail(
                self.tok, f"{owner} needs at least one LENGTH rule, found {self.tok.describe()}"
            )
        while self.at(TokenKind.KW_LENGTH):
            rules.append(self.parse_length_rule())
        return tuple(rules)

    def parse_length_rule(self) -> ConditionalLength:
        start = self.advance()
        if self.at(TokenKind.KW_IN):
            self.advance()
            lengths = self.parse_list(self.parse_length_value, "length")
        else:
            lengths = (self.parse_length_value(),)
        condition = None
        if self.at(TokenKind.KW_IF):
            if_tok = self.advance()
            self.expect(TokenKind.KW_ALGORITHM, "ALGORITHM after IF")
            condition = AlgorithmCondition(
                self.parse_algorithms("IF ALGORITHM"), self.location(if_tok)
            )
        return ConditionalLength(lengths, condition, self.location(start))

    def parse_algorithms(self, owner: str) -> tuple[str, ...]:
        if self.at(TokenKind.IDENT):
            return (self.advance().text,)
        if self.at(TokenKind.KW_IN):
            self.advance()
            return self.parse_list(self.parse_identifier, "algorithm")
        raise self.fail(
            self.tok, f"{owner} expects an algorithm name or IN [...], found {self.tok.describe()}"
        )

    def parse_list(self, item, what: str) -> tuple:
        open_tok = self.tok
        self.expect(TokenKind.LBRACKET, "'['")
        if self.at(TokenKind.RBRACKET):
            raise self.fail(self.tok, f"empty {what} list")
        items, first_seen = [], {}
        while True:
            tok = self.tok
            value = item()
            if value in first_seen:
                self.error(tok, f"duplicate {what} {tok.text!r} in list")
            else:
                first_seen[value] = tok
                items.append(value)
            if self.at(TokenKind.COMMA):
                self.advance()
                continue
            if self.at(TokenKind.RBRACKET):
                self.advance()
                return tuple(items)
            raise self.fail(
                self.tok,
                f"missing ']' to close the list opened at line {open_tok.line}, "
                f"found {self.tok.describe()}",
            )

    def parse_identifier(self) -> str:
        if not self.at(TokenKind.IDENT):
            raise self.fail(self.tok, f"expected an algorithm name, found {self.tok.describe()}")
        return self.advance().text

    def parse_number(self, owner: str) -> int:
        if not self.at(TokenKind.NUMBER):
            raise self.fail(self.tok, f"{owner} expects a number, found {self.tok.describe()}")
        tok = self.advance()
        value = int(tok.text)
        if value <= 0:
            self.error(tok, f"{owner} must be a positive number, got {value}")
        return value

    def parse_length_value(self) -> int:
        return self.parse_number("LENGTH")


def check(source: str, source_name: str = "<string>") -> tuple[Optional[RuleFile], list[ParseDiagnostic]]:
    """Parse ``source`` and return ``(rule_file, diagnostics)``.

    ``rule_file`` is None when any diagnostic is an error.
    """
    tokens, diagnostics = [], []
    for item in _scan(source, source_name):
        (tokens if isinstance(item, Token) else diagnostics).append(item)
    parser = _Parser(tokens, source_name)
    result = parser.parse_file()
    diagnostics.extend(parser.diagnostics)
    diagnostics.sort(key=lambda d: (d.line, d.column))
    if any(d.is_error for d in diagnostics):
        return None, diagnostics
    return result, diagnostics


def parse(source: str, source_name: str = "<string>") -> RuleFile:
    """Parse a rule file, raising CryRuleSyntaxError with all diagnostics."""
    result, diagnostics = check(source, source_name)
    if result is None:
        raise CryRuleSyntaxError(diagnostics)
    return result


# ---------------------------------------------------------------------------
# Canonical printer
# ---------------------------------------------------------------------------

def _bracketed(items) -> str:
    return "[" + ", ".join(str(i) for i in items) + "]"


def _length_line(rule: ConditionalLength) -> str:
    if len(rule.lengths) == 1:
        text = f"LENGTH {rule.lengths[0]}"
    else:
        text = f"LENGTH IN {_bracketed(rule.lengths)}"
    if rule.condition is not None:
        algs = rule.condition.algorithms
        if len(algs) == 1:
            text += f" IF ALGORITHM {algs[0]}"
        else:
            text += f" IF ALGORITHM IN {_bracketed(algs)}"
    return text


def _constraint_lines(constraint: Constraint) -> list[str]:
    if isinstance(constraint, AlgorithmWhitelist):
        algs = constraint.algorithms
        if len(algs) == 1:
            return [f"ALGORITHM {algs[0]}"]
        return [f"ALGORITHM IN {_bracketed(algs)}"]
    if isinstance(constraint, IvBlock):
        return ["IV"] + [_length_line(r) for r in constraint.rules]
    if isinstance(constraint, SymmetricKeyBlock):
        lines = ["SYMMETRICKEY"] + [_length_line(r) for r in constraint.length_rules]
        if constraint.min_iterations is not None:
            lines.append(f"ITERATIONS >= {constraint.min_iterations}")
        if constraint.min_salt_length is not None:
            lines.append(f"SALTLENGTH >= {constraint.min_salt_length}")
        return lines
    return [_length_line(r) for r in constraint.rules]


def unparse(rule_file: RuleFile) -> str:
    """Render ``rule_file`` as canonical CryRule text (one clause per line)."""
    blocks = []
    for section in rule_file.sections:
        lines = [section.class_name]
        for constraint in section.constraints:
            lines.extend(_constraint_lines(constraint))
        blocks.append("\n".join(lines) + "\n")
    return "\n".join(blocks)
