"""Command-line interface.

Exit codes: 0 success, 2 bad input, 3 crypto/key failure, 4 negotiation
abort, 5 truncated container, 6 transport or protocol failure.
"""

import argparse
import json
import os
import socket
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bench, container, modes, net
from .dqsbox import DqsBox, GridFormatError, box_diagnostics, correlation_profile, example_boxes, generate_box, read_grid
from .errors import ContainerError, KeyDepletionError, TruncatedContainer
from .qkd_bb84 import Bb84Config, QuantumKeyStream, pump_for_bits, run_session

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_CRYPTO = 3
EXIT_ABORT = 4
EXIT_TRUNCATED = 5
EXIT_TRANSPORT = 6

KEY_FILE_TAG = "# qaes-key v1"


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _load_config(path, seed=None):
    try:
        cfg = Bb84Config.load(path) if path else Bb84Config()
    except (OSError, ValueError) as exc:
        raise CliError(f"bad config {path}: {exc}", EXIT_BAD_INPUT) from None
    return cfg if seed is None else replace(cfg, rng_seed=seed)


# -- key files ---------------------------------------------------------------


def format_key_file(result):
    bits = result.sifted_key
    hexkey = np.packbits(bits).tobytes().hex()
    lines = [f"{KEY_FILE_TAG} config={result.config.digest()} qber={result.qber_estimate:.6f} "
             f"bits={len(bits)} seed={result.config.rng_seed}"]
    lines += [hexkey[i:i + 64] for i in range(0, len(hexkey), 64)]
    return "\n".join(lines) + "\n"


def read_key_file(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read key file: {exc}", EXIT_BAD_INPUT) from None
    lines = text.splitlines()
    if not lines or not lines[0].startswith(KEY_FILE_TAG):
        raise CliError("not a qaes key file", EXIT_BAD_INPUT)
    fields = dict(tok.split("=", 1) for tok in lines[0][len(KEY_FILE_TAG):].split())
    try:
        nbits = int(fields["bits"])
        data = bytes.fromhex("".join(lines[1:]))
    except (KeyError, ValueError):
        raise CliError("malformed key file", EXIT_BAD_INPUT) from None
    if nbits > 8 * len(data):
        raise CliError("key file shorter than its header claims", EXIT_BAD_INPUT)
    return QuantumKeyStream(data, nbits)


# -- commands -------------------------------------------------------------------


def cmd_keygen(args):
    cfg = _load_config(args.config, args.seed)
    if args.bits:
        cfg = replace(cfg, n_pump=max(cfg.n_pump, pump_for_bits(args.bits, cfg)))
    result = run_session(cfg)
    report = (f"QBER estimate {result.qber_estimate:.4f} (threshold {cfg.qber_abort_threshold}), "
              f"sifted {result.n_sifted}/{cfg.n_pump}, usable {result.n_usable} bits, "
              f"t_qkg model {result.t_qkg:.4f} ms")
    if result.aborted:
        print(f"session aborted: {report}", file=sys.stderr)
        return EXIT_ABORT
    Path(args.out).write_text(format_key_file(result))
    print(report)
    return EXIT_OK


def _nonce(args):
    if args.nonce is None:
        return os.urandom(16)
    try:
        nonce = bytes.fromhex(args.nonce)
    except ValueError:
        raise CliError("nonce must be hex", EXIT_BAD_INPUT) from None
    if len(nonce) != 16:
        raise CliError("nonce must be 16 bytes (32 hex digits)", EXIT_BAD_INPUT)
    return nonce


def _online_session(cfg, need_bits):
    """Run the embedded BB84 session that feeds an online-mode file."""
    result = run_session(cfg)
    if result.aborted:
        raise CliError(f"BB84 session aborted (QBER {result.qber_estimate:.4f})", EXIT_ABORT)
    if result.n_usable < need_bits:
        raise CliError(str(KeyDepletionError(need_bits, result.n_usable)), EXIT_CRYPTO)
    return result


def cmd_encrypt(args):
    try:
        data = Path(args.input).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read input: {exc}", EXIT_BAD_INPUT) from None
    nonce = _nonce(args)
    session = None
    try:
        if args.mode == "offline":
            if not args.key:
                raise CliError("offline mode needs --key", EXIT_BAD_INPUT)
            key = read_key_file(args.key)
            need = modes.message_bits_needed("offline", args.key_len, args.block_mode, len(data))
            if len(key) < need:
                raise CliError(f"key file holds {len(key)} bits, offline AES-{args.key_len} needs {need}; "
                               f"run `qaes keygen --bits {need}`", EXIT_CRYPTO)
            ctx = modes.offline_init(key, args.key_len, args.block_mode)
        else:
            cfg = _load_config(args.config, args.seed)
            need = modes.message_bits_needed("online", args.key_len, args.block_mode, len(data),
                                             args.key_refresh, args.box_refresh)
            cfg = replace(cfg, n_pump=max(cfg.n_pump, pump_for_bits(need, cfg)))
            result = _online_session(cfg, need)
            ctx = modes.online_init(result.key_stream(), args.key_len, args.block_mode,
                                    args.key_refresh, args.box_refresh)
            session = container.SessionDescriptor(cfg.rng_seed, cfg.n_pump, bytes.fromhex(cfg.digest())[:8],
                                                  args.key_refresh, args.box_refresh)
        ct = modes.encrypt_message(ctx, data, nonce)
    except KeyDepletionError as exc:
        raise CliError(str(exc), EXIT_CRYPTO) from None
    header = container.ContainerHeader(args.mode, args.key_len, args.block_mode, nonce, len(ct))
    Path(args.output).write_bytes(container.write_container(header, ct, session))
    return EXIT_OK


def cmd_decrypt(args):
    try:
        blob = Path(args.input).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read input: {exc}", EXIT_BAD_INPUT) from None
    try:
        header, session, ct = container.read_container(blob)
    except TruncatedContainer as exc:
        raise CliError(str(exc), EXIT_TRUNCATED) from None
    except ContainerError as exc:
        raise CliError(str(exc), EXIT_BAD_INPUT) from None
    try:
        if header.mode == "offline":
            if not args.key:
                raise CliError("offline container needs --key", EXIT_BAD_INPUT)
            ctx = modes.offline_init(read_key_file(args.key), header.key_len, header.block_mode)
        else:
            cfg = _load_config(args.config)
            cfg = replace(cfg, rng_seed=session.seed, n_pump=session.n_pump)
            if bytes.fromhex(cfg.digest())[:8] != session.cfg_digest:
                raise CliError("BB84 config does not match the one used for encryption", EXIT_CRYPTO)
            # decrypt_message reports depletion itself; the ciphertext length already includes padding
            result = _online_session(cfg, 0)
            ctx = modes.online_init(result.key_stream(), header.key_len, header.block_mode,
                                    session.key_refresh, session.box_refresh)
        pt = modes.decrypt_message(ctx, ct, header.nonce)
    except KeyDepletionError as exc:
        raise CliError(str(exc), EXIT_CRYPTO) from None
    except ValueError as exc:
        raise CliError(f"decryption failed: {exc}", EXIT_CRYPTO) from None
    Path(args.output).write_bytes(pt)
    return EXIT_OK


def _box_from_seed(seed):
    cfg = Bb84Config(rng_seed=seed)
    cfg = replace(cfg, n_pump=pump_for_bits(256, cfg))
    result = run_session(cfg)
    if result.aborted or result.n_usable < 256:
        raise CliError(f"keygen seed {seed} did not yield 256 key bits", EXIT_ABORT)
    return generate_box(result.sifted_key[:256])


def cmd_sbox_analyze(args):
    if args.keygen:
        seeds = args.keygen if len(args.keygen) == 2 else [args.keygen[0], args.keygen[0] + 1]
        a, b = (_box_from_seed(s) for s in seeds)
    elif args.grids:
        if len(args.grids) != 2:
            raise CliError("give two fixture files", EXIT_BAD_INPUT)
        try:
            a, b = (read_grid(p) for p in args.grids)
        except (OSError, GridFormatError) as exc:
            raise CliError(f"bad fixture: {exc}", EXIT_BAD_INPUT) from None
    else:
        a, b = example_boxes()
    prof = correlation_profile(a, b)
    out = sys.stdout
    if args.csv:
        out.write("row,corr,independence_pct,pearson,pearson_independence_pct,scaled_dot,degenerate\n")
        for i in range(16):
            out.write(f"{i},{prof.per_row_corr[i]:.6f},{prof.per_row_independence[i]:.4f},{prof.pearson[i]:.6f},"
                      f"{prof.pearson_independence[i]:.4f},{prof.scaled_dot[i]:.6f},{int(prof.degenerate[i])}\n")
        out.write(f"mean,{prof.mean_abs_corr:.6f},{prof.mean_independence:.4f},"
                  f"{np.nanmean(np.abs(prof.pearson)):.6f},{np.nanmean(prof.pearson_independence):.4f},,\n")
        return EXIT_OK
    out.write("row   corr     indep%   pearson  p-indep%  dot/16\n")
    for i in range(16):
        flag = "  degenerate" if prof.degenerate[i] else ""
        out.write(f"{i:3d} {prof.per_row_corr[i]:8.4f} {prof.per_row_independence[i]:8.3f} "
                  f"{prof.pearson[i]:8.4f} {prof.pearson_independence[i]:8.3f} {prof.scaled_dot[i]:8.4f}{flag}\n")
    out.write(f"mean |corr|            {100 * prof.mean_abs_corr:.3f}%\n")
    out.write(f"mean independence      {prof.mean_independence:.3f}%\n")
    out.write(f"row independence range {np.nanmin(prof.per_row_independence):.3f}% - "
              f"{np.nanmax(prof.per_row_independence):.3f}%\n")
    out.write(f"pearson independence   {np.nanmean(prof.pearson_independence):.3f}%\n")
    out.write(f"ratio std(CORR)/max(x) {prof.spread_ratio:.6f}\n")
    for name, box in (("A", a), ("B", b)):
        if isinstance(box, DqsBox):
            d = box_diagnostics(box)
            out.write(f"box {name}: fixed points {d['fixed_points']}, "
                      f"differential uniformity {d['differential_uniformity']}\n")
    return EXIT_OK


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def cmd_bench(args):
    if not args.sizes:
        raise CliError("--sizes must not be empty", EXIT_BAD_INPUT)
    algos = [a.strip().upper() for a in args.algo.split(",")]
    if not set(algos) <= {"AES", "QAES"}:
        raise CliError("--algo takes AES, QAES or both", EXIT_BAD_INPUT)
    records = bench.run_bench(args.sizes, args.key_len, algos, args.repeats, args.seed)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            bench.write_csv(records, fh)
    else:
        bench.write_csv(records, sys.stdout)
    return EXIT_OK


def _net_config(args):
    bb84 = _load_config(args.config, args.seed)
    # there is no error correction, so any channel noise ends at key confirmation
    if args.noise is not None or not args.config:
        bb84 = replace(bb84, p_noise=args.noise or 0.0)
    return net.NetConfig(bb84=bb84, key_len=args.key_len, mode=args.mode, block_mode=args.block_mode)


def _exit_for(summary):
    if summary.outcome is net.Outcome.COMPLETE:
        return EXIT_OK
    if summary.outcome in (net.Outcome.TRANSPORT, net.Outcome.MALFORMED, net.Outcome.ABORT_PROTOCOL):
        return EXIT_TRANSPORT
    return EXIT_ABORT


def _connect(port, timeout):
    deadline = time.monotonic() + timeout
    while True:
        try:
            return socket.create_connection(("127.0.0.1", port))
        except OSError:
            if time.monotonic() > deadline:
                raise CliError(f"nobody listening on port {port}", EXIT_TRANSPORT) from None
            time.sleep(0.05)


def _listen(port):
    srv = socket.socket()
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind(("127.0.0.1", port))
    srv.listen(1)
    return srv


def cmd_demo(args):
    if args.role == "eve":
        if args.upstream_port is None:
            raise CliError("eve needs --upstream-port (the slave's port)", EXIT_BAD_INPUT)
        srv = _listen(args.port)
        tap = net.EveTap(args.eve_fraction, args.seed or 0)
        net.relay(srv, ("127.0.0.1", args.upstream_port), tap)
        srv.close()
        print(json.dumps({"role": "eve", "intercepted": tap.intercepted}))
        return EXIT_OK

    cfg = _net_config(args)
    if args.role == "master":
        data = Path(args.input).read_bytes() if args.input else b""
        transport = net.StreamTransport(_connect(args.port, args.timeout))
        summary = net.run_master(transport, cfg, data)
    else:
        srv = _listen(args.port)
        conn, _ = srv.accept()
        srv.close()
        transport = net.StreamTransport(conn)
        summary = net.run_slave(transport, cfg)
        if summary.data is not None and args.output:
            Path(args.output).write_bytes(summary.data)
    transport.close()
    if args.transcript:
        Path(args.transcript).write_text(net.format_transcript(transport.log))
    print(json.dumps(net.summary_dict(summary), sort_keys=True))
    return _exit_for(summary)


# -- parser -----------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="qaes", description="QAES: AES with quantum-keyed dynamic S-boxes")
    sub = p.add_subparsers(dest="command", required=True)

    k = sub.add_parser("keygen", help="run a BB84 session and write the usable key bits")
    k.add_argument("--config", help="BB84 config file (key = value lines)")
    k.add_argument("--seed", type=int, help="override rng_seed")
    k.add_argument("--bits", type=int, help="pump enough qubits for this many usable bits "
                   "(offline encryption needs 256 + key length)")
    k.add_argument("--out", required=True)
    k.set_defaults(func=cmd_keygen)

    for name, func in (("encrypt", cmd_encrypt), ("decrypt", cmd_decrypt)):
        c = sub.add_parser(name, help=f"{name} a file")
        c.add_argument("input")
        c.add_argument("output")
        c.add_argument("--key", help="key file from `qaes keygen` (offline mode)")
        c.add_argument("--config", help="BB84 config for the embedded session (online mode)")
        if name == "encrypt":
            c.add_argument("--mode", choices=["offline", "online"], default="offline")
            c.add_argument("--key-len", type=int, choices=[128, 192, 256], default=128)
            c.add_argument("--block-mode", choices=list(modes.BLOCK_MODES), default="ctr")
            c.add_argument("--key-refresh", choices=list(modes.KEY_REFRESH), default="block")
            c.add_argument("--box-refresh", choices=list(modes.BOX_REFRESH), default="message")
            c.add_argument("--nonce", help="16-byte nonce as hex (default: random)")
            c.add_argument("--seed", type=int, help="override rng_seed of the embedded session")
        c.set_defaults(func=func)

    s = sub.add_parser("sbox-analyze", help="row correlation / independence report for two 16x16 grids")
    s.add_argument("grids", nargs="*", help="two fixture files (default: the bundled example boxes)")
    s.add_argument("--keygen", type=int, nargs="+", metavar="SEED", help="derive both boxes from BB84 sessions")
    s.add_argument("--csv", action="store_true")
    s.set_defaults(func=cmd_sbox_analyze)

    b = sub.add_parser("bench", help="AES vs QAES timing, CSV output")
    b.add_argument("--sizes", type=_int_list, default=list(bench.DEFAULT_SIZES_KIB), help="file sizes in KiB")
    b.add_argument("--key-len", type=_int_list, default=[128])
    b.add_argument("--algo", default="AES,QAES")
    b.add_argument("--repeats", type=int, default=5)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bench)

    d = sub.add_parser("demo", help="two-party negotiation over localhost TCP")
    d.add_argument("--role", choices=["master", "slave", "eve"], required=True)
    d.add_argument("--port", type=int, required=True)
    d.add_argument("--upstream-port", type=int, help="eve: port of the slave")
    d.add_argument("--config", help="BB84 config file")
    d.add_argument("--seed", type=int)
    d.add_argument("--noise", type=float, help="channel flip probability (default 0 unless --config sets it)")
    d.add_argument("--eve-fraction", type=float, default=1.0)
    d.add_argument("--mode", choices=["offline", "online"], default="offline")
    d.add_argument("--key-len", type=int, choices=[128, 192, 256], default=128)
    d.add_argument("--block-mode", choices=list(modes.BLOCK_MODES), default="ctr")
    d.add_argument("--in", dest="input", help="master: file to send")
    d.add_argument("--out", dest="output", help="slave: where to write the received file")
    d.add_argument("--transcript", help="write this endpoint's frame transcript")
    d.add_argument("--timeout", type=float, default=10.0)
    d.set_defaults(func=cmd_demo)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"qaes: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
