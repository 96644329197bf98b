import csv
import io
import json
import socket
import subprocess
import sys
import time

import pytest

from qaes import bench
from qaes.cli import main


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


@pytest.fixture
def keyfile(tmp_path):
    path = tmp_path / "k.txt"
    assert main(["keygen", "--bits", "512", "--out", str(path)]) == 0
    return path


def test_keygen_default_yield(tmp_path, capsys):
    out = tmp_path / "k.txt"
    assert main(["keygen", "--out", str(out)]) == 0
    header = out.read_text().splitlines()[0]
    bits = int(header.split("bits=")[1].split()[0])
    assert 180 <= bits <= 220
    assert "qber=" in header and "config=" in header
    assert "usable" in capsys.readouterr().out


def test_keygen_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["keygen", "--seed", "3", "--out", str(a)])
    main(["keygen", "--seed", "3", "--out", str(b)])
    assert a.read_text() == b.read_text()


def test_keygen_abort_under_eve(tmp_path, capsys):
    conf = tmp_path / "eve.conf"
    conf.write_text("n_pump = 5000\np_noise = 0\neve_fraction = 1\n")
    assert main(["keygen", "--config", str(conf), "--out", str(tmp_path / "k")]) == 4
    assert "QBER" in capsys.readouterr().err
    assert not (tmp_path / "k").exists()


def test_bad_config_is_bad_input(tmp_path):
    conf = tmp_path / "bad.conf"
    conf.write_text("n_pump = lots\n")
    assert main(["keygen", "--config", str(conf), "--out", str(tmp_path / "k")]) == 2


@pytest.mark.parametrize("size", [0, 1, 16, 5000])
@pytest.mark.parametrize("block_mode", ["ctr", "raw"])
def test_offline_file_roundtrip(tmp_path, keyfile, size, block_mode):
    src, enc, dec = tmp_path / "in", tmp_path / "enc", tmp_path / "out"
    src.write_bytes(bytes(i % 256 for i in range(size)))
    assert main(["encrypt", str(src), str(enc), "--key", str(keyfile), "--block-mode", block_mode]) == 0
    assert main(["decrypt", str(enc), str(dec), "--key", str(keyfile)]) == 0
    assert dec.read_bytes() == src.read_bytes()


def test_empty_ctr_container(tmp_path, keyfile):
    src, enc = tmp_path / "in", tmp_path / "enc"
    src.write_bytes(b"")
    main(["encrypt", str(src), str(enc), "--key", str(keyfile)])
    assert len(enc.read_bytes()) == 48


@pytest.mark.parametrize("key_len", ["128", "256"])
def test_online_file_roundtrip(tmp_path, key_len):
    src, enc, dec = tmp_path / "in", tmp_path / "enc", tmp_path / "out"
    src.write_bytes(bytes(range(256)) * 8)
    assert main(["encrypt", str(src), str(enc), "--mode", "online", "--key-len", key_len,
                 "--block-mode", "ofb", "--seed", "5"]) == 0
    assert main(["decrypt", str(enc), str(dec)]) == 0
    assert dec.read_bytes() == src.read_bytes()


def test_online_decrypt_needs_same_config(tmp_path):
    src, enc, dec = tmp_path / "in", tmp_path / "enc", tmp_path / "out"
    src.write_bytes(b"hello")
    conf = tmp_path / "c.conf"
    conf.write_text("p_noise = 0.01\n")
    main(["encrypt", str(src), str(enc), "--mode", "online", "--config", str(conf)])
    assert main(["decrypt", str(enc), str(dec)]) == 3
    assert main(["decrypt", str(enc), str(dec), "--config", str(conf)]) == 0


def test_short_key_is_crypto_error(tmp_path, capsys):
    key = tmp_path / "k"
    main(["keygen", "--out", str(key)])
    src = tmp_path / "in"
    src.write_bytes(b"data")
    assert main(["encrypt", str(src), str(tmp_path / "e"), "--key", str(key)]) == 3
    assert "keygen --bits" in capsys.readouterr().err


def test_tampered_magic(tmp_path, keyfile):
    src, enc = tmp_path / "in", tmp_path / "enc"
    src.write_bytes(b"abc")
    main(["encrypt", str(src), str(enc), "--key", str(keyfile)])
    blob = bytearray(enc.read_bytes())
    blob[:4] = b"XXXX"
    enc.write_bytes(bytes(blob))
    assert main(["decrypt", str(enc), str(tmp_path / "o"), "--key", str(keyfile)]) == 2


def test_truncated_body(tmp_path, keyfile):
    src, enc = tmp_path / "in", tmp_path / "enc"
    src.write_bytes(bytes(100))
    main(["encrypt", str(src), str(enc), "--key", str(keyfile)])
    enc.write_bytes(enc.read_bytes()[:80])
    assert main(["decrypt", str(enc), str(tmp_path / "o"), "--key", str(keyfile)]) == 5


def test_bad_nonce(tmp_path, keyfile):
    src = tmp_path / "in"
    src.write_bytes(b"abc")
    assert main(["encrypt", str(src), str(tmp_path / "e"), "--key", str(keyfile), "--nonce", "abcd"]) == 2


def test_fixed_nonce_is_deterministic(tmp_path, keyfile):
    src = tmp_path / "in"
    src.write_bytes(b"abc" * 100)
    outs = []
    for name in ("e1", "e2"):
        main(["encrypt", str(src), str(tmp_path / name), "--key", str(keyfile), "--nonce", "00" * 16])
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]


def _csv_rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_sbox_analyze_default_fixtures(capsys):
    assert main(["sbox-analyze", "--csv"]) == 0
    rows = _csv_rows(capsys.readouterr().out)
    assert [r["row"] for r in rows[:16]] == [str(i) for i in range(16)]
    assert rows[16]["row"] == "mean"


def test_sbox_analyze_identical(tmp_path, capsys):
    from qaes.dqsbox import FIXTURE_DIR

    f = str(FIXTURE_DIR / "dqs_box1.txt")
    assert main(["sbox-analyze", f, f, "--csv"]) == 0
    rows = _csv_rows(capsys.readouterr().out)[:16]
    assert all(float(r["independence_pct"]) == 0.0 for r in rows if r["degenerate"] == "0")


def test_sbox_analyze_keygen(capsys):
    assert main(["sbox-analyze", "--keygen", "1", "2", "--csv"]) == 0
    rows = _csv_rows(capsys.readouterr().out)[:16]
    assert all(0 <= float(r["independence_pct"]) <= 100 for r in rows)


def test_sbox_analyze_malformed(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("0x01 0x02\n")
    assert main(["sbox-analyze", str(bad), str(bad)]) == 2


def test_bench_csv(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["bench", "--sizes", "8,16", "--repeats", "2", "--out", str(out)]) == 0
    with open(out) as fh:
        recs = bench.read_csv(fh)
    assert out.read_text().splitlines()[0] == ",".join(bench.CSV_COLUMNS)
    assert [(r.algo, r.file_size_kib) for r in recs] == [("AES", 8), ("QAES", 8), ("AES", 16), ("QAES", 16)]
    assert all(r.t_qkg_ms == 0 for r in recs if r.algo == "AES")


def test_bench_rejects_unknown_algo():
    assert main(["bench", "--sizes", "1", "--algo", "DES"]) == 2


def _spawn(*args):
    return subprocess.Popen([sys.executable, "-m", "qaes", "demo", *args],
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)


def test_demo_clean_run(tmp_path):
    src, dst = tmp_path / "in", tmp_path / "out"
    src.write_bytes(bytes(range(256)) * 10)
    port = _free_port()
    slave = _spawn("--role", "slave", "--port", str(port), "--out", str(dst),
                   "--transcript", str(tmp_path / "s.tr"))
    time.sleep(0.5)
    master = _spawn("--role", "master", "--port", str(port), "--in", str(src),
                    "--transcript", str(tmp_path / "m.tr"))
    m_out, _ = master.communicate(timeout=60)
    s_out, _ = slave.communicate(timeout=60)
    assert master.returncode == 0 and slave.returncode == 0
    assert dst.read_bytes() == src.read_bytes()
    assert json.loads(m_out)["key_digest"] == json.loads(s_out)["key_digest"]
    assert (tmp_path / "m.tr").read_text().count("\n") == 14


def test_demo_with_eve_aborts(tmp_path):
    src = tmp_path / "in"
    src.write_bytes(b"secret" * 50)
    sport, eport = _free_port(), _free_port()
    slave = _spawn("--role", "slave", "--port", str(sport))
    time.sleep(0.5)
    eve = _spawn("--role", "eve", "--port", str(eport), "--upstream-port", str(sport), "--eve-fraction", "1")
    time.sleep(0.5)
    master = _spawn("--role", "master", "--port", str(eport), "--in", str(src))
    master.communicate(timeout=60)
    slave.communicate(timeout=60)
    e_out, _ = eve.communicate(timeout=60)
    assert master.returncode == 4 and slave.returncode == 4
    assert json.loads(e_out)["intercepted"] > 0


def test_demo_no_peer_is_transport_failure():
    proc = _spawn("--role", "master", "--port", str(_free_port()), "--timeout", "0.3")
    proc.communicate(timeout=30)
    assert proc.returncode == 6
