"""Task-oriented builders: say what you want, call ``run()``.

Configuration calls may come in any order. Nothing is derived, generated or
checked until ``run()``, which fills every missing value with the secure
default from the rules, validates the complete configuration and only then
touches a primitive::

    result = FluentCrypto().encryption().data("some plain text").run()
    plain = (
        FluentCrypto()
        .decryption()
        .data(result.output)
        .with_cipher(result.algorithm)
        .key(result.get_key())
        .iv(result.get_iv())
        .run()
        .output
    )

camelCase aliases (``withCipher``, ``setKey``, ``getIV`` ...) are provided
for every method.
"""

from __future__ import annotations

import functools
import os
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

from fluentcrypt import primitives
from fluentcrypt.engine import (
    RULES_ENV_VAR,
    CryptoConfig,
    KdfParams,
    Provenance,
    RuleSet,
    Task,
    load_rules,
    validate_config,
)
from fluentcrypt.errors import (
    ConfigurationError,
    ConsumedBuilderError,
    EncodingError,
    MissingInputError,
    NoConstraint,
    NoDefaultAvailable,
    PolicyViolationError,
)

RandomSource = Callable[[int], bytes]
Data = Union[str, bytes]

MAX_DATA_LENGTH = 64 * 1024
# Used only when the rules leave a KDF parameter unbounded.
FALLBACK_ITERATIONS = 10_000
FALLBACK_SALT_LENGTH = 16
FALLBACK_DIGEST = "sha256"
FALLBACK_MODULUS_LENGTH = 384

_KDF_SETTINGS = ("password", "salt", "iterations", "digest")

_DEFAULT_ENCODINGS = {
    "encryption": ("utf8", "hex"),
    "decryption": ("hex", "utf8"),
    "hashing": ("utf8", "hex"),
    "keypair": ("utf8", "hex"),
}


def _material(value: Data, what: str) -> bytes:
    """Keys and IVs: bytes as-is, strings as hex (what the getters return)."""
    if isinstance(value, (bytes, bytearray, memoryview)):
        return bytes(value)
    try:
        return bytes.fromhex(value)
    except (TypeError, ValueError):
        raise EncodingError(
            f"{what} given as text must be hex (as returned by get_{what.lower()}()); "
            "pass bytes for raw binary values"
        ) from None


def _text_or_bytes(value: Data) -> bytes:
    if isinstance(value, (bytes, bytearray, memoryview)):
        return bytes(value)
    return str(value).encode("utf-8")


@dataclass(frozen=True)
class RunResult:
    """Output of one ``run()`` plus the material needed to reverse it."""

    output: Union[str, bytes, None]
    algorithm: str
    config: CryptoConfig = field(repr=False)
    notes: tuple[str, ...] = ()
    keypair: Optional[primitives.KeyPair] = field(default=None, repr=False)
    rules: Optional[RuleSet] = field(default=None, repr=False, compare=False)
    _key: Optional[bytes] = field(default=None, repr=False)
    _salt: Optional[bytes] = field(default=None, repr=False)

    def _revalidate(self, name: str) -> None:
        if self.rules is None:
            return
        broken = [v for v in validate_config(self.rules, self.config) if v.field.startswith(name)]
        if broken:
            raise PolicyViolationError(broken)

    def get_output(self):
        return self.output

    def get_algorithm(self) -> str:
        self._revalidate("algorithm")
        return self.algorithm

    def get_key(self) -> Optional[str]:
        self._revalidate("key")
        return None if self._key is None else self._key.hex()

    def get_iv(self) -> Optional[str]:
        self._revalidate("iv")
        return None if self.config.iv is None else self.config.iv.hex()

    def get_salt(self) -> Optional[str]:
        self._revalidate("kdf")
        return None if self._salt is None else self._salt.hex()

    def get_iterations(self) -> Optional[int]:
        self._revalidate("kdf")
        return None if self.config.kdf is None else self.config.kdf.iterations

    def get_public_key(self) -> Optional[str]:
        self._revalidate("modulus_length")
        return None if self.keypair is None else self.keypair.public_key

    def get_private_key(self) -> Optional[str]:
        self._revalidate("modulus_length")
        return None if self.keypair is None else self.keypair.private_key

    getOutput = get_output
    getAlgorithm = get_algorithm
    getKey = get_key
    getIV = get_iv
    getSalt = get_salt
    getIterations = get_iterations
    getPublicKey = get_public_key
    getPrivateKey = get_private_key


class TaskBuilder:
    """Accumulates intents for one task; single use."""

    def __init__(self, kind: str, rules: RuleSet, *, _random: Optional[RandomSource] = None):
        if kind not in _DEFAULT_ENCODINGS:
            raise ValueError(f"unknown task kind {kind!r}")
        self.kind = kind
        self.rules = rules
        self._random = _random or primitives.random_bytes
        self._segments: list[Data] = []
        self._settings: dict = {}
        self._asymmetric = kind == "keypair"
        self.consumed = False

    def __repr__(self) -> str:
        configured = ", ".join(sorted(self._settings))
        return f"<TaskBuilder {self.kind} [{configured}]{' consumed' if self.consumed else ''}>"

    # -- bookkeeping

    def _live(self) -> None:
        if self.consumed:
            raise ConsumedBuilderError(
                "this builder already ran; start a new task so a fresh IV and salt are used"
            )

    def _set(self, name: str, value, *, kinds=("encryption", "decryption")) -> "TaskBuilder":
        self._live()
        if self.kind not in kinds:
            raise ConfigurationError(f"{name} cannot be configured on a {self.kind} task")
        self._settings[name] = value
        return self

    # -- data and encodings

    def data(self, segment: Data) -> "TaskBuilder":
        self._live()
        if not isinstance(segment, (str, bytes, bytearray, memoryview)):
            raise ConfigurationError(f"data must be str or bytes, got {type(segment).__name__}")
        self._segments.append(segment)
        return self

    def input_encoding(self, encoding: str) -> "TaskBuilder":
        return self._set("input_encoding", primitives.normalize_encoding(encoding),
                         kinds=tuple(_DEFAULT_ENCODINGS))

    def output_encoding(self, encoding: str) -> "TaskBuilder":
        return self._set("output_encoding", primitives.normalize_encoding(encoding),
                         kinds=tuple(_DEFAULT_ENCODINGS))

    # -- symmetric configuration

    def with_cipher(self, algorithm: Optional[str] = None) -> "TaskBuilder":
        self._set("symmetric", True)
        if algorithm is not None:
            self._settings["algorithm"] = str(algorithm)
        return self

    def with_cipher_from_password(self, password: Data) -> "TaskBuilder":
        self.with_cipher()
        return self._set("password", _text_or_bytes(password))

    def with_cipher_from_symmetric_key(self, key: Data) -> "TaskBuilder":
        self.with_cipher()
        return self._set("key", _material(key, "key"))

    def set_key(self, key: Data) -> "TaskBuilder":
        return self._set("key", _material(key, "key"))

    def set_iv(self, iv: Data) -> "TaskBuilder":
        return self._set("iv", _material(iv, "IV"))

    def set_key_generation_password(self, password: Data) -> "TaskBuilder":
        return self._set("password", _text_or_bytes(password))

    def set_key_generation_salt(self, salt: Data) -> "TaskBuilder":
        """Text is taken as UTF-8; pass ``bytes.fromhex(result.get_salt())`` to reuse a salt."""
        return self._set("salt", _text_or_bytes(salt))

    def set_key_generation_iterations(self, iterations: int) -> "TaskBuilder":
        if isinstance(iterations, bool) or not isinstance(iterations, int) or iterations < 1:
            raise ConfigurationError(f"iterations must be a positive integer, got {iterations!r}")
        return self._set("iterations", iterations)

    def set_symmetric_key_generation_algorithm(self, digest: str) -> "TaskBuilder":
        return self._set("digest", str(digest))

    key = set_key
    iv = set_iv

    # -- hashing

    def with_hash(self, algorithm: Optional[str] = None) -> "TaskBuilder":
        self._live()
        if self.kind != "hashing":
            raise ConfigurationError(f"with_hash() cannot be used on a {self.kind} task")
        if algorithm is not None:
            self._settings["algorithm"] = str(algorithm)
        return self

    # -- asymmetric

    def asymmetric(self) -> "TaskBuilder":
        self._set("asymmetric", True)
        self._asymmetric = True
        return self

    def public_key(self, pem: Data) -> "TaskBuilder":
        self.asymmetric()
        return self._set("public_key", pem)

    def private_key(self, pem: Data) -> "TaskBuilder":
        self.asymmetric()
        return self._set("private_key", pem)

    def set_modulus_length(self, n: int) -> "TaskBuilder":
        if isinstance(n, bool) or not isinstance(n, int) or n < 1:
            raise ConfigurationError(f"modulus length must be a positive number of bytes, got {n!r}")
        return self._set("modulus_length", n, kinds=("keypair",))

    # -- execution

    def run(self) -> RunResult:
        self._live()
        self.consumed = True
        if self.kind == "hashing":
            return self._run_hash()
        if self.kind == "keypair":
            return self._run_keypair()
        if self._asymmetric:
            return self._run_asymmetric()
        return self._run_symmetric()

    def _encodings(self) -> tuple[str, str]:
        default_in, default_out = _DEFAULT_ENCODINGS[self.kind]
        return (
            self._settings.get("input_encoding", default_in),
            self._settings.get("output_encoding", default_out),
        )

    def _input(self, what: str) -> bytes:
        if not self._segments:
            raise MissingInputError("data", f"call .data(...) with the {what} before run()")
        encoding = self._encodings()[0]
        payload = b"".join(primitives.decode(s, encoding, what) for s in self._segments)
        limit = MAX_DATA_LENGTH + (32 if self.kind == "decryption" else 0)
        if len(payload) > limit:
            raise ConfigurationError(
                f"{what} is {len(payload)} bytes; at most {limit} bytes per run() are supported"
            )
        return payload

    def _check(self, config: CryptoConfig) -> None:
        violations = validate_config(self.rules, config)
        if violations:
            raise PolicyViolationError(violations)

    def _default_algorithm(self, task: Task) -> tuple[str, Provenance]:
        if "algorithm" in self._settings:
            return self._settings["algorithm"], Provenance.USER_SUPPLIED
        try:
            return self.rules.default_algorithm(task), Provenance.DEFAULT
        except NoDefaultAvailable:
            if self.rules.section(task) is None:
                # validate_config reports the missing section
                return "", Provenance.DEFAULT
            raise

    def _run_hash(self) -> RunResult:
        payload = self._input("data to hash")
        algorithm, prov = self._default_algorithm(Task.HASH)
        in_enc, out_enc = self._encodings()
        config = CryptoConfig(
            task=Task.HASH,
            algorithm=algorithm,
            input_encoding=in_enc,
            output_encoding=out_enc,
            provenance={"algorithm": prov},
        )
        self._check(config)
        output = primitives.hash(payload, algorithm, out_enc)
        return RunResult(output, algorithm, config, rules=self.rules)

    # symmetric

    def _length_for(self, block: str, algorithm: str) -> int:
        lookup = self.rules.required_key_length if block == "key" else self.rules.required_iv_length
        try:
            return lookup(algorithm)
        except NoConstraint:
            pass
        try:
            if block == "key":
                return primitives.cipher_spec(algorithm)[0]
            return primitives.native_iv_length(algorithm)
        except ConfigurationError:
            # unusable algorithm; validation rejects the config before this length matters
            return 16

    def symmetric_config(self) -> CryptoConfig:
        """Resolve defaults into the effective configuration ``run()`` would validate."""
        encrypting = self.kind == "encryption"
        task = Task.SYMMETRIC_ENCRYPT if encrypting else Task.SYMMETRIC_DECRYPT
        s = self._settings
        algorithm, alg_prov = self._default_algorithm(task)
        provenance = {"algorithm": alg_prov}
        section = self.rules.section(task)

        key = kdf = None
        if any(name in s for name in _KDF_SETTINGS):
            if "password" not in s:
                raise MissingInputError(
                    "password", "key derivation settings were given without a password"
                )
            if "salt" in s:
                salt = s["salt"]
                provenance["kdf.salt"] = Provenance.USER_SUPPLIED
            elif encrypting:
                floor = section.min_salt_length if section and section.min_salt_length else 0
                salt = self._random(max(floor, FALLBACK_SALT_LENGTH))
                provenance["kdf.salt"] = Provenance.DEFAULT
            else:
                raise MissingInputError(
                    "salt", "decrypting with a password needs the salt used for encryption"
                )
            min_iterations = section.min_iterations if section else None
            iterations = s.get("iterations", min_iterations or FALLBACK_ITERATIONS)
            provenance["kdf.iterations"] = (
                Provenance.USER_SUPPLIED if "iterations" in s else Provenance.DEFAULT
            )
            if "digest" in s:
                digest = s["digest"]
                provenance["kdf.digest"] = Provenance.USER_SUPPLIED
            else:
                hash_rules = self.rules.whitelist(Task.HASH)
                digest = hash_rules[0] if hash_rules else FALLBACK_DIGEST
                provenance["kdf.digest"] = Provenance.DEFAULT
            kdf = KdfParams(
                password=s["password"],
                salt=salt,
                iterations=iterations,
                digest=digest,
                derived_length=self._length_for("key", algorithm),
            )
            provenance["key"] = Provenance.DERIVED
        elif "key" in s:
            key = s["key"]
            provenance["key"] = Provenance.USER_SUPPLIED
        elif encrypting:
            key = self._random(self._length_for("key", algorithm))
            provenance["key"] = Provenance.DEFAULT
        else:
            raise MissingInputError(
                "key", "pass the key from the encryption result, e.g. .key(result.get_key())"
            )

        if "iv" in s:
            iv = s["iv"]
            provenance["iv"] = Provenance.USER_SUPPLIED
        elif encrypting:
            iv = self._random(self._length_for("iv", algorithm))
            provenance["iv"] = Provenance.DEFAULT
        else:
            raise MissingInputError(
                "iv", "pass the IV from the encryption result, e.g. .iv(result.get_iv())"
            )

        in_enc, out_enc = self._encodings()
        return CryptoConfig(
            task=task,
            algorithm=algorithm,
            key=key,
            iv=iv,
            kdf=kdf,
            input_encoding=in_enc,
            output_encoding=out_enc,
            provenance=provenance,
        )

    def _run_symmetric(self) -> RunResult:
        encrypting = self.kind == "encryption"
        if "public_key" in self._settings or "private_key" in self._settings:
            raise ConfigurationError("RSA keys and symmetric cipher settings cannot be mixed")
        payload = self._input("plaintext" if encrypting else "ciphertext")
        config = self.symmetric_config()
        self._check(config)

        notes = []
        if config.kdf is not None:
            derived = primitives.derive_key(
                config.kdf.password,
                config.kdf.salt,
                config.kdf.iterations,
                config.kdf.digest,
                config.kdf.derived_length,
            )
            config = replace(config, key=derived.bytes)
            notes.append(
                f"key derived with PBKDF2-HMAC-{config.kdf.digest}, "
                f"{config.kdf.iterations} iterations, {len(config.kdf.salt)}-byte salt"
            )
        elif config.provenance["key"] is Provenance.USER_SUPPLIED:
            notes.append(
                "key was supplied by the caller: its length was checked, "
                "but how it was generated cannot be verified"
            )

        if encrypting:
            raw = primitives.symmetric_encrypt(config.algorithm, config.key, config.iv, payload)
            output = primitives.encode(raw, config.output_encoding, "ciphertext")
        else:
            raw = primitives.symmetric_decrypt(config.algorithm, config.key, config.iv, payload)
            output = primitives.encode(raw, config.output_encoding, "decrypted plaintext")
        return RunResult(
            output,
            config.algorithm,
            config,
            tuple(notes),
            rules=self.rules,
            _key=config.key,
            _salt=config.kdf.salt if config.kdf else None,
        )

    # asymmetric

    def _run_asymmetric(self) -> RunResult:
        encrypting = self.kind == "encryption"
        task = Task.ASYMMETRIC_ENCRYPT if encrypting else Task.ASYMMETRIC_DECRYPT
        s = self._settings
        symmetric = [n for n in ("symmetric", "key", "iv", *_KDF_SETTINGS) if n in s]
        if symmetric:
            raise ConfigurationError(
                "RSA keys and symmetric cipher settings cannot be mixed: " + ", ".join(symmetric)
            )
        if "public_key" in s and "private_key" in s:
            raise ConfigurationError("supply exactly one of public_key() or private_key(), not both")
        if "public_key" not in s and "private_key" not in s:
            raise MissingInputError("public_key or private_key")
        payload = self._input("plaintext" if encrypting else "ciphertext")

        use_public = "public_key" in s
        if use_public:
            key_obj = primitives.load_public_key(s["public_key"])
        else:
            key_obj = primitives.load_private_key(s["private_key"])
        in_enc, out_enc = self._encodings()
        config = CryptoConfig(
            task=task,
            algorithm="rsa",
            modulus_length=primitives.modulus_length(key_obj),
            input_encoding=in_enc,
            output_encoding=out_enc,
            provenance={"algorithm": Provenance.DEFAULT, "modulus_length": Provenance.USER_SUPPLIED},
        )
        self._check(config)

        pem = s["public_key" if use_public else "private_key"]
        if encrypting and use_public:
            raw, scheme = primitives.public_encrypt(pem, payload), "RSA-OAEP-SHA256"
        elif encrypting:
            raw, scheme = primitives.private_encrypt(pem, payload), "RSA-PKCS1-v1_5 (private key)"
        elif use_public:
            raw, scheme = primitives.public_decrypt(pem, payload), "RSA-PKCS1-v1_5 (public key)"
        else:
            raw, scheme = primitives.private_decrypt(pem, payload), "RSA-OAEP-SHA256"
        what = "ciphertext" if encrypting else "decrypted plaintext"
        output = primitives.encode(raw, out_enc, what)
        return RunResult(output, "rsa", config, (f"padding: {scheme}",), rules=self.rules)

    def _run_keypair(self) -> RunResult:
        s = self._settings
        if "modulus_length" in s:
            modulus, prov = s["modulus_length"], Provenance.USER_SUPPLIED
        else:
            section = self.rules.section(Task.KEYPAIR_GEN)
            modulus, prov = FALLBACK_MODULUS_LENGTH, Provenance.DEFAULT
            if section is not None and section.length is not None:
                try:
                    modulus = section.length.default("rsa")
                except NoConstraint:
                    pass
        config = CryptoConfig(
            task=Task.KEYPAIR_GEN,
            algorithm="rsa",
            modulus_length=modulus,
            provenance={"algorithm": Provenance.DEFAULT, "modulus_length": prov},
        )
        self._check(config)
        pair = primitives.generate_keypair(modulus)
        return RunResult(None, "rsa", config, rules=self.rules, keypair=pair)

    # camelCase spellings
    withCipher = with_cipher
    withCipherFromPassword = with_cipher_from_password
    withCipherfromPassword = with_cipher_from_password
    withCipherFromSymmetricKey = with_cipher_from_symmetric_key
    withSymmetricKey = with_cipher_from_symmetric_key
    setKey = set_key
    setIV = set_iv
    setKeyGenerationPassword = set_key_generation_password
    setKeyGenerationSalt = set_key_generation_salt
    setKeyGenerationIterations = set_key_generation_iterations
    setSymmetricKeyGenerationAlgorithm = set_symmetric_key_generation_algorithm
    withHash = with_hash
    publicKey = public_key
    privateKey = private_key
    setModulusLength = set_modulus_length
    inputEncoding = input_encoding
    outputEncoding = output_encoding


@functools.lru_cache(maxsize=8)
def _cached_rules(env_value: Optional[str]) -> RuleSet:
    return load_rules(env_value)


class FluentCrypto:
    """Entry point binding builders to one rule set.

    Without explicit rules the set named by ``$FLUENTCRYPT_RULES`` is used,
    falling back to the shipped defaults; either is loaded once and cached.
    """

    def __init__(self, rules: Optional[RuleSet] = None):
        self._rules = rules

    @property
    def rules(self) -> RuleSet:
        if self._rules is not None:
            return self._rules
        return _cached_rules(os.environ.get(RULES_ENV_VAR) or None)

    def encryption(self) -> TaskBuilder:
        return TaskBuilder("encryption", self.rules)

    def decryption(self) -> TaskBuilder:
        return TaskBuilder("decryption", self.rules)

    def hashing(self) -> TaskBuilder:
        return TaskBuilder("hashing", self.rules)

    def keypair(self) -> TaskBuilder:
        return TaskBuilder("keypair", self.rules)


def encryption(rules: Optional[RuleSet] = None) -> TaskBuilder:
    return FluentCrypto(rules).encryption()


def decryption(rules: Optional[RuleSet] = None) -> TaskBuilder:
    return FluentCrypto(rules).decryption()


def hashing(rules: Optional[RuleSet] = None) -> TaskBuilder:
    return FluentCrypto(rules).hashing()


def keypair(rules: Optional[RuleSet] = None) -> TaskBuilder:
    return FluentCrypto(rules).keypair()
