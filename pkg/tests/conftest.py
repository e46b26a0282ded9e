import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fluentcrypt import fluent, primitives  # noqa: E402
from fluentcrypt.engine import RULES_ENV_VAR, load_rules  # noqa: E402

ACCEPTANCE_RESULTS: list[tuple[str, bool]] = []


@pytest.fixture(autouse=True)
def _isolated_rules(monkeypatch):
    monkeypatch.delenv(RULES_ENV_VAR, raising=False)
    fluent._cached_rules.cache_clear()
    yield
    fluent._cached_rules.cache_clear()


@pytest.fixture(scope="session")
def default_rules():
    return load_rules()


@pytest.fixture(scope="session")
def rsa_pair():
    return primitives.generate_keypair(384)


@pytest.fixture
def primitive_calls(monkeypatch):
    """Record every call into the primitives a builder may execute."""
    calls = []
    for name in (
        "symmetric_encrypt", "symmetric_decrypt", "derive_key", "hash",
        "generate_keypair", "public_encrypt", "private_encrypt",
        "public_decrypt", "private_decrypt",
    ):
        original = getattr(primitives, name)

        def spy(*args, _name=name, _original=original, **kwargs):
            calls.append(_name)
            return _original(*args, **kwargs)

        monkeypatch.setattr(primitives, name, spy)
    return calls


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}")
