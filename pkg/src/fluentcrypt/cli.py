"""fluentcrypt command line.

Exit codes: 0 success, 1 usage error, 2 rule violation, 3 crypto or
runtime error.

Secrets are not accepted as plain flags unless ``--insecure-flag-secrets``
is given, because process arguments are visible to other users. Use
``--use-password`` / ``--use-key`` to read them from $FLUENTCRYPT_PASSWORD /
$FLUENTCRYPT_KEY_HEX or an interactive prompt instead.
"""

from __future__ import annotations

import argparse
import getpass
import json
import os
import sys
from pathlib import Path
from typing import Callable, Optional, TextIO

from fluentcrypt import cryrule
from fluentcrypt.cryrule import unparse
from fluentcrypt.engine import compile_rules, load_rules
from fluentcrypt.errors import (
    ConsumedBuilderError,
    FluentCryptError,
    MissingInputError,
    PolicyViolationError,
    RuleLoadError,
)
from fluentcrypt.fluent import TaskBuilder

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VIOLATION = 2
EXIT_RUNTIME = 3

PASSWORD_ENV_VAR = "FLUENTCRYPT_PASSWORD"
KEY_ENV_VAR = "FLUENTCRYPT_KEY_HEX"

_CLI_ENCODINGS = ("utf8", "hex", "base64")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_input(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--data", action="append",
                     help="input given inline; repeat to append further segments")
    src.add_argument("--in", dest="infile", metavar="FILE", help="read input from FILE ('-' for stdin)")
    p.add_argument("--in-encoding", choices=_CLI_ENCODINGS)
    p.add_argument("--out-encoding", choices=_CLI_ENCODINGS)


def _add_cipher_options(p: argparse.ArgumentParser) -> None:
    _add_input(p)
    p.add_argument("--algorithm", help="cipher name (default: first whitelisted)")
    p.add_argument("--password", help="password for key derivation (needs --insecure-flag-secrets)")
    p.add_argument("--use-password", action="store_true",
                   help=f"derive the key from ${PASSWORD_ENV_VAR} or a prompt")
    p.add_argument("--key-hex", help="raw key as hex (needs --insecure-flag-secrets)")
    p.add_argument("--use-key", action="store_true",
                   help=f"raw key as hex from ${KEY_ENV_VAR} or a prompt")
    p.add_argument("--iv-hex")
    p.add_argument("--salt-hex")
    p.add_argument("--iterations", type=int)
    p.add_argument("--digest", help="key derivation digest")
    p.add_argument("--public-key", metavar="PEM_FILE", help="RSA public key file")
    p.add_argument("--private-key", metavar="PEM_FILE", help="RSA private key file")
    p.add_argument("--insecure-flag-secrets", action="store_true",
                   help="allow --password/--key-hex on the command line")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fluentcrypt", description="Rule-checked hashing and encryption.")
    parser.add_argument("--rules", metavar="PATH", help="rule file (overrides $FLUENTCRYPT_RULES)")
    parser.add_argument("--json", action="store_true", help="emit a JSON object")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    lint = sub.add_parser("lint", help="check a .cryrule file")
    lint.add_argument("path")

    hash_cmd = sub.add_parser("hash", help="hash data")
    _add_input(hash_cmd)
    hash_cmd.add_argument("--algorithm")

    _add_cipher_options(sub.add_parser("encrypt", help="encrypt data"))
    _add_cipher_options(sub.add_parser("decrypt", help="decrypt data"))

    keygen = sub.add_parser("keygen", help="generate an RSA key pair")
    keygen.add_argument("--modulus-bytes", type=int)
    keygen.add_argument("--out-dir", default=".")
    keygen.add_argument("--force", action="store_true", help="overwrite existing key files")

    sub.add_parser("rules-dump", help="print the effective rules")
    return parser


class _Output:
    def __init__(self, stream: TextIO, as_json: bool):
        self.stream = stream
        self.as_json = as_json
        self.fields: dict = {}

    def add(self, label: str, value) -> None:
        if value is not None:
            self.fields[label] = value

    def flush(self) -> None:
        if self.as_json:
            self.stream.write(json.dumps(self.fields, indent=2) + "\n")
        else:
            for label, value in self.fields.items():
                self.stream.write(f"{label}: {value}\n")


def _read_input(args) -> Optional[list]:
    if args.data is not None:
        return args.data
    if args.infile is None:
        return None
    if args.infile == "-":
        raw = sys.stdin.buffer.read()
    else:
        try:
            raw = Path(args.infile).read_bytes()
        except OSError as exc:
            raise UsageError(f"cannot read {args.infile}: {exc.strerror}") from None
    if args.in_encoding in (None, "utf8") and args.command != "decrypt":
        return [raw]
    try:
        return [raw.decode("ascii").strip()]
    except UnicodeDecodeError:
        raise UsageError(f"{args.infile} is not {args.in_encoding or 'hex'} text") from None


def _secret(args, flag_value, use_flag, env_var, what, flag_name) -> Optional[str]:
    if flag_value is not None:
        if not args.insecure_flag_secrets:
            raise UsageError(
                f"{flag_name} exposes the {what} in the process list; use "
                f"--use-{what.split()[0]} with ${env_var}, or add --insecure-flag-secrets"
            )
        return flag_value
    if use_flag:
        value = os.environ.get(env_var)
        if value is None:
            value = getpass.getpass(f"{what}: ")
        return value
    return None


def _read_pem(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read key file {path}: {exc.strerror}") from None


def _cmd_lint(args, out: _Output, stdout: TextIO) -> int:
    path = Path(args.path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None
    rule_file, diagnostics = cryrule.check(text, str(path))
    if rule_file is not None:
        diagnostics = diagnostics + list(compile_rules(rule_file).warnings)
    errors = sum(d.is_error for d in diagnostics)
    warnings = len(diagnostics) - errors
    if out.as_json:
        out.add("path", str(path))
        out.add("diagnostics", [
            {"line": d.line, "column": d.column, "severity": d.severity, "message": d.message}
            for d in diagnostics
        ])
        out.add("errors", errors)
        out.add("warnings", warnings)
        out.flush()
    else:
        for d in diagnostics:
            stdout.write(f"{d}\n")
        stdout.write(f"{errors} error{'s' if errors != 1 else ''}, "
                     f"{warnings} warning{'s' if warnings != 1 else ''}\n")
    return EXIT_VIOLATION if errors else EXIT_OK


def _configure_io(builder: TaskBuilder, args, payload) -> None:
    for segment in payload or ():
        builder.data(segment)
    if args.in_encoding:
        builder.input_encoding(args.in_encoding)
    if args.out_encoding:
        builder.output_encoding(args.out_encoding)


def _cmd_hash(args, rules, rng, out: _Output) -> int:
    builder = TaskBuilder("hashing", rules, _random=rng)
    _configure_io(builder, args, _read_input(args))
    if args.algorithm:
        builder.with_hash(args.algorithm)
    result = builder.run()
    out.add("algorithm", result.algorithm)
    out.add("digest", result.output)
    out.flush()
    return EXIT_OK


def _cmd_cipher(args, rules, rng, out: _Output) -> int:
    kind = "encryption" if args.command == "encrypt" else "decryption"
    builder = TaskBuilder(kind, rules, _random=rng)
    password = _secret(args, args.password, args.use_password, PASSWORD_ENV_VAR,
                       "password", "--password")
    key_hex = _secret(args, args.key_hex, args.use_key, KEY_ENV_VAR, "key (hex)", "--key-hex")
    if password is not None and key_hex is not None:
        raise UsageError("use either a password or a raw key, not both")
    if args.public_key and args.private_key:
        raise UsageError("use either --public-key or --private-key, not both")
    rsa = args.public_key or args.private_key
    symmetric_flags = [
        flag for flag, value in (
            ("--algorithm", args.algorithm), ("--iv-hex", args.iv_hex),
            ("--salt-hex", args.salt_hex), ("--iterations", args.iterations),
            ("--digest", args.digest), ("password", password), ("key", key_hex),
        ) if value is not None
    ]
    if rsa and symmetric_flags:
        raise UsageError(f"RSA key files cannot be combined with {', '.join(symmetric_flags)}")

    _configure_io(builder, args, _read_input(args))
    if args.public_key:
        builder.public_key(_read_pem(args.public_key))
    elif args.private_key:
        builder.private_key(_read_pem(args.private_key))
    else:
        builder.with_cipher(args.algorithm)
        if password is not None:
            builder.set_key_generation_password(password)
        if key_hex is not None:
            builder.set_key(key_hex.strip())
        if args.iv_hex is not None:
            builder.set_iv(args.iv_hex)
        if args.salt_hex is not None:
            try:
                salt = bytes.fromhex(args.salt_hex)
            except ValueError:
                raise UsageError("--salt-hex is not valid hex") from None
            builder.set_key_generation_salt(salt)
        if args.iterations is not None:
            builder.set_key_generation_iterations(args.iterations)
        if args.digest is not None:
            builder.set_symmetric_key_generation_algorithm(args.digest)

    result = builder.run()
    out.add("algorithm", result.algorithm)
    if kind == "encryption":
        out.add("ciphertext", result.output)
        if not rsa:
            out.add("key", result.get_key())
            out.add("iv", result.get_iv())
            out.add("salt", result.get_salt())
            out.add("iterations", result.get_iterations())
    else:
        out.add("plaintext", result.output)
    for i, note in enumerate(result.notes):
        out.add(f"note{i + 1}" if len(result.notes) > 1 else "note", note)
    out.flush()
    return EXIT_OK


def _cmd_keygen(args, rules, rng, out: _Output) -> int:
    out_dir = Path(args.out_dir)
    private_path = out_dir / "private.pem"
    public_path = out_dir / "public.pem"
    if not args.force:
        existing = [str(p) for p in (private_path, public_path) if p.exists()]
        if existing:
            raise UsageError(f"refusing to overwrite {', '.join(existing)} (use --force)")
    builder = TaskBuilder("keypair", rules, _random=rng)
    if args.modulus_bytes is not None:
        builder.set_modulus_length(args.modulus_bytes)
    result = builder.run()
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        fd = os.open(private_path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
        with os.fdopen(fd, "w") as fh:
            fh.write(result.get_private_key())
        public_path.write_text(result.get_public_key())
    except OSError as exc:
        raise UsageError(f"cannot write key files to {out_dir}: {exc.strerror}") from None
    out.add("modulus_bytes", result.keypair.modulus_length)
    out.add("private_key", str(private_path))
    out.add("public_key", str(public_path))
    out.flush()
    return EXIT_OK


def _run(
    argv: Optional[list[str]] = None,
    stdout: TextIO = sys.stdout,
    stderr: TextIO = sys.stderr,
    _random: Optional[Callable[[int], bytes]] = None,
) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("missing command (lint, hash, encrypt, decrypt, keygen, rules-dump)")
        out = _Output(stdout, args.json)
        if args.command == "lint":
            return _cmd_lint(args, out, stdout)
        rules = load_rules(args.rules)
        if args.command == "rules-dump":
            stdout.write(unparse(rules.source))
            return EXIT_OK
        handler = {
            "hash": _cmd_hash,
            "encrypt": _cmd_cipher,
            "decrypt": _cmd_cipher,
            "keygen": _cmd_keygen,
        }[args.command]
        return handler(args, rules, _random, out)
    except UsageError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except (RuleLoadError, MissingInputError, ConsumedBuilderError) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except PolicyViolationError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_VIOLATION
    except (FluentCryptError, ValueError) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_RUNTIME


def main(argv: Optional[list[str]] = None) -> int:
    return _run(argv)


if __name__ == "__main__":
    sys.exit(main())
