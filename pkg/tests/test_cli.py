import io
import json
import subprocess
import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from fluentcrypt.cli import KEY_ENV_VAR, PASSWORD_ENV_VAR, _run
from fluentcrypt.engine import RULES_ENV_VAR
from fluentcrypt.fluent import TaskBuilder
from fluentcrypt.testing import DeterministicRandom

from listings import TASK_3_PAYLOAD, WHITELIST

REPO_RULES = Path(__file__).parents[1] / "src" / "fluentcrypt" / "rules" / "default.cryrule"
SHA256_EMPTY = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


def cli(*argv, rng=None):
    out, err = io.StringIO(), io.StringIO()
    code = _run(list(argv), out, err, _random=rng)
    return code, out.getvalue(), err.getvalue()


def fields(text):
    return dict(line.split(": ", 1) for line in text.splitlines())


class TestLint:
    def test_default_file(self):
        code, out, _ = cli("lint", str(REPO_RULES))
        assert code == 0
        assert out.strip().endswith("0 errors, 0 warnings")

    def test_empty_list(self, tmp_path):
        bad = tmp_path / "bad.cryrule"
        bad.write_text("Cipher ALGORITHM IN []\n")
        code, out, _ = cli("lint", str(bad))
        assert code == 2
        assert "1:22" in out and "empty algorithm list" in out
        assert "1 error," in out

    def test_missing_file(self, tmp_path):
        code, _, err = cli("lint", str(tmp_path / "nope.cryrule"))
        assert code == 1
        assert "cannot read" in err

    def test_warnings_do_not_fail(self, tmp_path):
        f = tmp_path / "w.cryrule"
        f.write_text("Cipher ALGORITHM aes-128-cbc\nIV LENGTH 16 IF ALGORITHM aes-128-gcm\n")
        code, out, _ = cli("lint", str(f))
        assert code == 0
        assert "1 warning" in out

    def test_json(self):
        code, out, _ = cli("--json", "lint", str(REPO_RULES))
        assert code == 0
        assert json.loads(out)["errors"] == 0


class TestHash:
    def test_empty_string(self):
        code, out, _ = cli("hash", "--data", "")
        assert code == 0
        assert fields(out) == {"algorithm": "sha256", "digest": SHA256_EMPTY}

    def test_algorithm_and_encoding(self):
        code, out, _ = cli("hash", "--data", "abc", "--algorithm", "sha256", "--out-encoding", "base64")
        assert fields(out)["digest"] == "ungWv48Bz+pBQUDeXa4iI7ADYaOWF3qctBD/YfIAFa0="

    def test_rejected_algorithm(self):
        code, _, err = cli("hash", "--data", "abc", "--algorithm", "md5")
        assert code == 2
        assert "not whitelisted" in err

    def test_file_input(self, tmp_path):
        f = tmp_path / "in.txt"
        f.write_bytes(b"abc")
        code, out, _ = cli("hash", "--in", str(f))
        assert fields(out)["digest"].startswith("ba7816bf")

    def test_missing_data(self):
        assert cli("hash")[0] == 1


class TestCipher:
    def test_round_trip_env_key(self, monkeypatch):
        code, out, _ = cli("encrypt", "--data", TASK_3_PAYLOAD)
        assert code == 0
        enc = fields(out)
        assert enc["algorithm"] == "aes-128-cbc"
        monkeypatch.setenv(KEY_ENV_VAR, enc["key"])
        code, out, _ = cli("decrypt", "--data", enc["ciphertext"], "--use-key", "--iv-hex", enc["iv"])
        assert code == 0
        assert fields(out)["plaintext"] == TASK_3_PAYLOAD

    def test_round_trip_password(self, monkeypatch):
        monkeypatch.setenv(PASSWORD_ENV_VAR, "correct horse battery")
        code, out, _ = cli("encrypt", "--data", "pw text", "--use-password")
        enc = fields(out)
        assert len(bytes.fromhex(enc["salt"])) >= 20 and enc["iterations"] == "10000"
        code, out, _ = cli("decrypt", "--data", enc["ciphertext"], "--use-password",
                           "--salt-hex", enc["salt"], "--iv-hex", enc["iv"])
        assert code == 0
        assert fields(out)["plaintext"] == "pw text"

    def test_prompt_when_env_missing(self, monkeypatch):
        monkeypatch.delenv(PASSWORD_ENV_VAR, raising=False)
        monkeypatch.setattr("getpass.getpass", lambda prompt: "typed")
        code, out, _ = cli("encrypt", "--data", "x", "--use-password")
        assert code == 0 and "salt" in fields(out)

    @pytest.mark.parametrize("algorithm", WHITELIST)
    def test_each_algorithm(self, algorithm):
        code, out, _ = cli("encrypt", "--data", "alg", "--algorithm", algorithm)
        enc = fields(out)
        code, out, _ = cli("decrypt", "--insecure-flag-secrets", "--data", enc["ciphertext"],
                           "--algorithm", algorithm, "--key-hex", enc["key"], "--iv-hex", enc["iv"])
        assert code == 0 and fields(out)["plaintext"] == "alg"

    def test_des(self):
        code, out, err = cli("encrypt", "--data", "x", "--algorithm", "des")
        assert code == 2
        assert out == ""
        for name in WHITELIST:
            assert name in err
        assert "default.cryrule:7:2" in err

    def test_flag_secret_without_opt_in(self):
        code, _, err = cli("encrypt", "--data", "x", "--password", "pw")
        assert code == 1
        assert "--insecure-flag-secrets" in err

    def test_password_and_key_conflict(self):
        code, _, _ = cli("encrypt", "--insecure-flag-secrets", "--data", "x",
                         "--password", "pw", "--key-hex", "00" * 16)
        assert code == 1

    def test_data_and_in_conflict(self, tmp_path):
        assert cli("encrypt", "--data", "x", "--in", str(tmp_path / "f"))[0] == 1

    def test_bad_salt_hex(self):
        assert cli("encrypt", "--insecure-flag-secrets", "--data", "x", "--password", "p",
                   "--salt-hex", "zz")[0] == 1

    def test_decrypt_wrong_key_runtime(self):
        code, out, _ = cli("encrypt", "--data", "x")
        enc = fields(out)
        wrong = "11" * 16 if enc["key"] != "11" * 16 else "22" * 16
        code, _, err = cli("decrypt", "--insecure-flag-secrets", "--data", enc["ciphertext"],
                           "--key-hex", wrong, "--iv-hex", enc["iv"], "--out-encoding", "hex")
        assert code in (0, 3)
        if code == 3:
            assert "wrong key" in err

    def test_decrypt_missing_iv(self):
        code, _, err = cli("decrypt", "--insecure-flag-secrets", "--data", "00" * 16, "--key-hex", "00" * 16)
        assert code == 1 and "iv" in err

    def test_stdin(self, monkeypatch):
        monkeypatch.setattr(sys, "stdin", io.TextIOWrapper(io.BytesIO(b"from stdin")))
        code, out, _ = cli("hash", "--in", "-")
        assert code == 0

    def test_json_output(self):
        code, out, _ = cli("--json", "encrypt", "--data", "x")
        data = json.loads(out)
        assert set(data) >= {"algorithm", "ciphertext", "key", "iv"}

    def test_two_segments(self):
        rng = DeterministicRandom(1)
        _, joined, _ = cli("encrypt", "--data", "ab", "--data", "cd", rng=rng)
        _, single, _ = cli("encrypt", "--data", "abcd", rng=DeterministicRandom(1))
        assert joined == single


class TestRulesSelection:
    def test_rules_flag(self, tmp_path):
        f = tmp_path / "r.cryrule"
        f.write_text("Cipher ALGORITHM aes-256-cbc\nSymmetricKey LENGTH 32\n")
        code, out, _ = cli("--rules", str(f), "encrypt", "--data", "x")
        assert fields(out)["algorithm"] == "aes-256-cbc"

    def test_env_var(self, tmp_path, monkeypatch):
        f = tmp_path / "r.cryrule"
        f.write_text("Hash ALGORITHM sha512\n")
        monkeypatch.setenv(RULES_ENV_VAR, str(f))
        code, out, _ = cli("hash", "--data", "")
        assert fields(out)["algorithm"] == "sha512"

    def test_broken_rules_file(self, tmp_path):
        f = tmp_path / "r.cryrule"
        f.write_text("Cipher ALGORITHM IN []\n")
        code, _, err = cli("--rules", str(f), "hash", "--data", "")
        assert code == 1 and "empty algorithm list" in err

    def test_rules_dump_round_trips(self):
        code, out, _ = cli("rules-dump")
        assert code == 0
        assert out.startswith("Cipher\nALGORITHM IN [aes-128-cbc")
        from fluentcrypt.cryrule import parse
        from fluentcrypt.engine import default_rules_text

        assert parse(out) == parse(default_rules_text())


@pytest.mark.slow
class TestKeygen:
    def test_writes_files(self, tmp_path):
        code, out, _ = cli("keygen", "--out-dir", str(tmp_path))
        assert code == 0
        assert fields(out)["modulus_bytes"] == "384"
        assert (tmp_path / "private.pem").stat().st_mode & 0o777 == 0o600
        assert (tmp_path / "public.pem").read_text().startswith("-----BEGIN PUBLIC KEY-----")

    def test_refuses_overwrite(self, tmp_path):
        (tmp_path / "private.pem").write_text("keep")
        code, _, err = cli("keygen", "--out-dir", str(tmp_path))
        assert code == 1 and "--force" in err
        assert (tmp_path / "private.pem").read_text() == "keep"

    def test_small_modulus(self, tmp_path):
        code, _, err = cli("keygen", "--modulus-bytes", "64", "--out-dir", str(tmp_path))
        assert code == 2
        assert not (tmp_path / "private.pem").exists()

    def test_rsa_round_trip(self, tmp_path):
        cli("keygen", "--out-dir", str(tmp_path))
        code, out, _ = cli("encrypt", "--public-key", str(tmp_path / "public.pem"), "--data", TASK_3_PAYLOAD)
        assert code == 0
        enc = fields(out)
        code, out, _ = cli("decrypt", "--private-key", str(tmp_path / "private.pem"), "--data", enc["ciphertext"])
        assert fields(out)["plaintext"] == TASK_3_PAYLOAD

    def test_rsa_with_symmetric_flags(self, tmp_path):
        cli("keygen", "--out-dir", str(tmp_path))
        code, _, _ = cli("encrypt", "--public-key", str(tmp_path / "public.pem"),
                         "--algorithm", "aes-128-cbc", "--data", "x")
        assert code == 1


# --- equivalence and exit codes -----------------------------------------------


@given(st.text(max_size=80), st.sampled_from(WHITELIST), st.integers(0, 2**32))
@settings(max_examples=30, suppress_health_check=[HealthCheck.function_scoped_fixture])
def test_cli_matches_library(default_rules, text, algorithm, seed):
    _, out, _ = cli("encrypt", "--data", text, "--algorithm", algorithm, rng=DeterministicRandom(seed))
    lib = (
        TaskBuilder("encryption", default_rules, _random=DeterministicRandom(seed))
        .with_cipher(algorithm).data(text).run()
    )
    got = fields(out)
    assert got["ciphertext"] == lib.output
    assert got["key"] == lib.get_key()
    assert got["iv"] == lib.get_iv()


FAULTS = [
    (["frobnicate"], 1),
    ([], 1),
    (["encrypt", "--data", "x", "--iterations", "many"], 1),
    (["encrypt"], 1),
    (["encrypt", "--data", "x", "--in-encoding", "utf-9"], 1),
    (["--rules", "/nonexistent/r.cryrule", "hash", "--data", ""], 1),
    (["encrypt", "--data", "x", "--algorithm", "rc4"], 2),
    (["encrypt", "--data", "x", "--iv-hex", "00" * 8], 2),
    (["encrypt", "--insecure-flag-secrets", "--data", "x", "--password", "p", "--iterations", "9999"], 2),
    (["encrypt", "--insecure-flag-secrets", "--data", "x", "--password", "p", "--salt-hex", "00" * 19], 2),
    (["decrypt", "--insecure-flag-secrets", "--data", "00" * 15, "--key-hex", "00" * 16, "--iv-hex", "00" * 16], 3),
    (["decrypt", "--insecure-flag-secrets", "--data", "zz", "--key-hex", "00" * 16, "--iv-hex", "00" * 16], 3),
    (["decrypt", "--insecure-flag-secrets", "--algorithm", "aes-128-gcm", "--data", "00" * 20,
      "--key-hex", "00" * 16, "--iv-hex", "00" * 12], 3),
    (["hash", "--data", "x"], 0),
]


@pytest.mark.parametrize("argv,expected", FAULTS)
def test_exit_code_matrix(argv, expected):
    assert cli(*argv)[0] == expected


def test_console_script_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "fluentcrypt.cli", "hash", "--data", "abc"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert "ba7816bf" in proc.stdout
