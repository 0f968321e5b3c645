"""End-to-end checks of the smh command-line tool."""

import os
import signal
import socket
import struct
import subprocess
import sys
import threading
import time
from fractions import Fraction
from pathlib import Path

import pytest

SMH = os.environ.get("SMH_BIN", str(Path(__file__).resolve().parents[2] / "build" / "smh"))


def run(*args, check=None, env=None, timeout=120):
    proc = subprocess.run([SMH, *map(str, args)], capture_output=True, text=True, env=env, timeout=timeout)
    if check is not None:
        assert proc.returncode == check, proc.stderr
    return proc


def fields(text):
    out = {}
    for line in text.splitlines():
        key, sep, value = line.partition("=")
        assert sep, f"not key=value: {line!r}"
        out[key] = value
    return out


def write_vector(path, values):
    path.write_text("".join(f"{v!r}\n" for v in values))
    return path


class Server:
    """A background `smh serve` whose first two lines announce the role and address."""

    def __init__(self, *args):
        self.proc = subprocess.Popen([SMH, "serve", *map(str, args)], stdout=subprocess.PIPE,
                                     stderr=subprocess.PIPE, text=True)
        self.lines = [self.proc.stdout.readline().strip(), self.proc.stdout.readline().strip()]
        assert self.lines[1].startswith("listening="), self.lines + [self.proc.stderr.read()]
        self.address = self.lines[1].split("=", 1)[1]
        self.rest = []
        self._reader = threading.Thread(target=self._drain, daemon=True)
        self._reader.start()

    def _drain(self):
        for line in self.proc.stdout:
            self.rest.append(line.rstrip("\n"))

    def stop(self):
        if self.proc.poll() is None:
            self.proc.send_signal(signal.SIGTERM)
        code = self.proc.wait(timeout=30)
        self._reader.join(timeout=10)
        return code, "\n".join(self.lines + self.rest), self.proc.stderr.read()


@pytest.fixture
def vectors(tmp_path):
    x1 = [0.123456789, -1.5, 2.25, 0.75]
    x2 = [0.323456789, -1.0, 2.0, 1.5]
    return write_vector(tmp_path / "x1.txt", x1), write_vector(tmp_path / "x2.txt", x2)


PLAN = ["--threshold", 5, "--epsilon", 1, "--beta", 10]


def test_plan_worked_example():
    out = fields(run("plan", "--threshold", 1.8, "--epsilon", 1, check=0).stdout)
    assert (out["k"], out["M"], out["epsilon_stat"]) == ("8", "244", "0.5")
    out = fields(run("plan", *PLAN, check=0).stdout)
    assert (out["k"], out["M"]) == ("28", "2989")


@pytest.mark.parametrize("args", [["--threshold", 5, "--epsilon", 0],
                                  ["--threshold", -1, "--epsilon", 1],
                                  ["--epsilon", 1],
                                  ["--threshold", "x", "--epsilon", 1]])
def test_plan_rejects_bad_flags(args):
    proc = run("plan", *args, check=2)
    assert proc.stderr.strip()


def test_unknown_command_is_usage_error():
    run("frobnicate", check=2)


def test_keygen_and_hash(tmp_path, vectors):
    x1, _ = vectors
    run("keygen", "--k", 8, "--M", 6, "--N", 4, "--seed", "abc", "--out", tmp_path / "a.json", check=0)
    run("keygen", "--k", 8, "--M", 6, "--N", 4, "--seed", "abc", "--out", tmp_path / "b.json", check=0)
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    seeded = fields(run("keygen", "--k", 8, "--M", 6, "--N", 4, "--seed", "abc", "--seed-form",
                        "--out", tmp_path / "c.json", check=0).stdout)
    assert seeded["interoperable"] == "false"
    full = fields(run("hash", "--key", tmp_path / "a.json", "--x", x1, check=0).stdout)
    compact = fields(run("hash", "--key", tmp_path / "c.json", "--x", x1, check=0).stdout)
    assert full == compact
    components = [int(c) for c in full["hash"].split(",")]
    assert len(components) == 6 and all(0 <= c < 8 for c in components)
    run("keygen", "--k", 7, "--M", 6, "--N", 4, "--out", tmp_path / "d.json", check=2)


def test_hash_errors(tmp_path, vectors):
    x1, _ = vectors
    run("keygen", "--k", 8, "--M", 6, "--N", 3, "--out", tmp_path / "k.json", check=0)
    run("hash", "--key", tmp_path / "k.json", "--x", x1, check=2)
    (tmp_path / "bad.txt").write_text("1\nfoo\n")
    run("hash", "--key", tmp_path / "k.json", "--x", tmp_path / "bad.txt", check=2)
    (tmp_path / "bad.json").write_text("{")
    run("hash", "--key", tmp_path / "bad.json", "--x", x1, check=2)


def test_estimate():
    out = fields(run("estimate", "--mean-lee", "5/2", "--k", 28, "--M", 2989, check=0).stdout)
    assert float(out["estimate"]) == pytest.approx(2.5, abs=1e-3)
    assert out["saturated"] == "false"
    out = fields(run("estimate", "--mean-lee", "7", "--k", 28, "--M", 2989, "--mode", "raw", check=0).stdout)
    assert out["estimate"] == "SATURATED"
    run("estimate", "--mean-lee", "1/0", "--k", 28, "--M", 2989, check=2)


def test_identical_inputs_estimate_zero(vectors):
    x1, _ = vectors
    for kind in ["full-key", "public-a", "hamming", "obfuscated"]:
        out = fields(run("run", "--kind", kind, "--x1", x1, "--x2", x1, *PLAN, "--seed", "z", check=0).stdout)
        assert out["alice_estimate"] == "0"
        assert out["bob_estimate"] == "0"
        assert Fraction(out["alice_mean_lee"]) == 0


def test_run_is_deterministic_and_kinds_agree(vectors):
    x1, x2 = vectors
    means = set()
    for kind in ["full-key", "hamming", "obfuscated"]:
        a = run("run", "--kind", kind, "--x1", x1, "--x2", x2, *PLAN, "--seed", "d", check=0).stdout
        b = run("run", "--kind", kind, "--x1", x1, "--x2", x2, *PLAN, "--seed", "d", check=0).stdout
        assert a == b
        means.add(fields(a)["alice_mean_lee"])
    assert len(means) == 1


def test_obfuscated_run_shows_both_views(vectors):
    x1, x2 = vectors
    out = fields(run("run", "--kind", "obfuscated", "--x1", x1, "--x2", x2, *PLAN, "--seed", "o", check=0).stdout)
    M, P, k = int(out["M"]), int(out["padding"]), int(out["k"])
    assert P == 10 * M
    d = Fraction(out["charlie_d"])
    assert d != Fraction(out["alice_mean_lee"])
    true_mean = Fraction(out["alice_mean_lee"])
    # d mixes M true components with P uniform padding components.
    padding_mean = (d * (M + P) - true_mean * M) / P
    assert abs(float(padding_mean) - k / 4) <= 3 * (k / 2) / (2 * P ** 0.5)
    assert float(out["alice_estimate"]) >= 0


def test_distance_three_under_planned_parameters(tmp_path):
    import random
    rng = random.Random(7)
    inside = 0
    for trial in range(6):
        x1 = [rng.gauss(0, 1) for _ in range(8)]
        direction = [rng.gauss(0, 1) for _ in range(8)]
        norm = sum(v * v for v in direction) ** 0.5
        x2 = [a + 3 * v / norm for a, v in zip(x1, direction)]
        p1 = write_vector(tmp_path / f"a{trial}.txt", x1)
        p2 = write_vector(tmp_path / f"b{trial}.txt", x2)
        out = fields(run("run", "--x1", p1, "--x2", p2, *PLAN, "--seed", f"t{trial}", check=0).stdout)
        inside += 2 <= float(out["alice_estimate"]) <= 4
    assert inside == 6


def test_run_errors(tmp_path, vectors):
    x1, _ = vectors
    short = write_vector(tmp_path / "short.txt", [1.0, 2.0])
    run("run", "--x1", x1, "--x2", short, *PLAN, check=2)
    run("run", "--x1", x1, "--x2", tmp_path / "absent.txt", *PLAN, check=2)
    run("run", "--kind", "nonsense", "--x1", x1, "--x2", x1, *PLAN, check=2)
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    run("run", "--transport", "tcp", "--charlie", f"127.0.0.1:{port}", "--x1", x1, "--x2", x1, *PLAN, check=3)


def test_charlie_address_from_environment(vectors):
    x1, x2 = vectors
    charlie = Server("--role", "charlie", "--listen", "127.0.0.1:0")
    try:
        env = dict(os.environ, SMH_CHARLIE_ADDR=charlie.address)
        tcp = fields(run("run", "--transport", "tcp", "--x1", x1, "--x2", x2, *PLAN, "--seed", "e",
                         env=env, check=0).stdout)
        local = fields(run("run", "--x1", x1, "--x2", x2, *PLAN, "--seed", "e", check=0).stdout)
        for key in ["session", "alice_estimate", "alice_mean_lee", "bob_estimate", "charlie_d"]:
            assert tcp[key] == local[key]
    finally:
        assert charlie.stop()[0] == 0


def test_three_processes_match_local(vectors):
    x1, x2 = vectors
    charlie = Server("--role", "charlie", "--listen", "127.0.0.1:0")
    bob = Server("--role", "bob", "--listen", "127.0.0.1:0", "--x", x2, "--charlie", charlie.address)
    try:
        alice = fields(run("run", "--transport", "tcp", "--bob", bob.address, "--charlie", charlie.address,
                           "--x1", x1, *PLAN, "--seed", "three", check=0).stdout)
        local = fields(run("run", "--x1", x1, "--x2", x2, *PLAN, "--seed", "three", check=0).stdout)
        assert alice["alice_estimate"] == local["alice_estimate"]
        assert alice["alice_mean_lee"] == local["alice_mean_lee"]
    finally:
        bob_code, bob_out, _ = bob.stop()
        charlie_code, charlie_out, _ = charlie.stop()
    assert bob_code == 0 and charlie_code == 0
    assert f"mean_lee={local['bob_mean_lee']}" in bob_out
    assert "shutdown=ok" in charlie_out


def test_concurrent_client_pairs(vectors):
    x1, x2 = vectors
    charlie = Server("--role", "charlie", "--listen", "127.0.0.1:0", "--max-sessions", 2)
    procs = [subprocess.Popen([SMH, "run", "--transport", "tcp", "--charlie", charlie.address, "--x1", x1,
                               "--x2", x2, *map(str, PLAN), "--seed", f"pair{i}"], stdout=subprocess.PIPE,
                              text=True) for i in range(2)]
    outputs = [fields(p.communicate(timeout=120)[0]) for p in procs]
    assert all(p.returncode == 0 for p in procs)
    for i, out in enumerate(outputs):
        local = fields(run("run", "--x1", x1, "--x2", x2, *PLAN, "--seed", f"pair{i}", check=0).stdout)
        assert out["alice_mean_lee"] == local["alice_mean_lee"]
    assert outputs[0]["session"] != outputs[1]["session"]
    code, out, _ = charlie.stop()
    assert code == 0
    assert "sessions_finished=2" in out


def test_malformed_frame_aborts_and_server_survives(vectors):
    x1, x2 = vectors
    charlie = Server("--role", "charlie", "--listen", "127.0.0.1:0")
    try:
        host, port = charlie.address.rsplit(":", 1)
        with socket.create_connection((host, int(port)), timeout=30) as s:
            session = bytes(range(16))
            # Version 1, FULL_KEY hash submission from Alice with a truncated body.
            s.sendall(struct.pack(">IBB", 18 + 3, 1, 0x02) + session + b"\x00\x08\x00")
            length = struct.unpack(">I", s.recv(4, socket.MSG_WAITALL))[0]
            reply = s.recv(length, socket.MSG_WAITALL)
            assert reply[2:18] == session
            assert reply[1] & 0x0F == 6  # Abort body
        out = fields(run("run", "--transport", "tcp", "--charlie", charlie.address, "--x1", x1, "--x2", x2,
                         *PLAN, "--seed", "after", check=0).stdout)
        assert Fraction(out["charlie_d"]) == Fraction(out["alice_mean_lee"])
    finally:
        code, log, _ = charlie.stop()
    assert code == 0


def test_bind_failure_exits_3():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        s.listen()
        proc = subprocess.run([SMH, "serve", "--role", "charlie", "--listen", f"127.0.0.1:{s.getsockname()[1]}"],
                              capture_output=True, text=True, timeout=30)
    assert proc.returncode == 3


def test_charlie_output_leaks_no_secrets(tmp_path, vectors):
    x1, x2 = vectors
    key_values = []
    charlie = Server("--role", "charlie", "--listen", "127.0.0.1:0")
    try:
        for kind in ["full-key", "public-a", "obfuscated"]:
            out = run("run", "--kind", kind, "--transport", "tcp", "--charlie", charlie.address, "--x1", x1,
                      "--x2", x2, "--k", 8, "--M", 12, "--seed", "leak", check=0)
            assert out.returncode == 0
        run("keygen", "--k", 8, "--M", 12, "--N", 4, "--seed", "leak", "--out", tmp_path / "k.json", check=0)
        import json
        doc = json.loads((tmp_path / "k.json").read_text())
        key_values = doc["a"] + doc["u"]
    finally:
        _, log, err = charlie.stop()
    secrets = [v.strip() for v in x1.read_text().split() + x2.read_text().split()]
    secrets += [repr(v) for v in key_values]
    for s in secrets:
        assert s not in log and s not in err, s
    assert "0.123456789" not in log


def test_sweep_curve_uniformity(tmp_path):
    args = ["sweep", "--k", "4,8", "--M", 30, "--N", 5, "--trials", 3, "--distances", "0,1,2", "--seed", "s"]
    first = run(*args, check=0).stdout
    assert first == run(*args, check=0).stdout
    lines = first.splitlines()
    assert lines[0] == "k,distance,mean_lee,std_lee,expected_lee,abs_deviation"
    assert len(lines) == 7
    assert lines[1].startswith("4,0,0,0,0,0")
    out = fields(run(*args, "--out", tmp_path / "s.csv", check=0).stdout)
    assert out["rows"] == "6"
    assert (tmp_path / "s.csv").read_text() == first
    run("sweep", "--k", 5, check=2)
    run(*args, "--out", tmp_path / "missing" / "s.csv", check=1)

    curve = run("curve", "--k", 8, check=0).stdout.splitlines()
    assert curve[0] == "distance,expected_lee" and len(curve) == 42
    values = [float(line.split(",")[1]) for line in curve[1:]]
    assert values[0] == 0 and values == sorted(values) and max(values) <= 2

    good = fields(run("uniformity", "--k", 8, "--M", 10, "--samples", 2000, "--seed", "u", check=0).stdout)
    assert good["pass"] == "true"
    tiny = write_vector(tmp_path / "tiny.txt", [1e-3] * 4)
    broken = fields(run("uniformity", "--k", 8, "--M", 10, "--samples", 2000, "--x", tiny, "--broken-dither",
                        check=0).stdout)
    assert broken["pass"] == "false"
    run("uniformity", "--k", 8, "--samples", 10, check=2)


def test_serve_stops_cleanly_on_signal():
    charlie = Server("--role", "charlie", "--listen", "127.0.0.1:0")
    time.sleep(0.2)
    code, out, _ = charlie.stop()
    assert code == 0
    assert "shutdown=ok" in out


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
