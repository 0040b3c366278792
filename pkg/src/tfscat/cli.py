"""Command-line interface.

Subcommands::

    tfscat analyze in.wav [more.wav ...] -o out/ [--coeffs] [--spectrogram]
    tfscat synthesize target.wav|target.sct -o out/ [--iterations N] [--seed S]
    tfscat effect in.wav --fx fx.json -o out/
    tfscat check-bank [--Q 12] [--octaves 9] [--csv profile.csv]
    tfscat info file.sct

Options may also come from ``--config job.json``; flags given on the
command line take precedence.  Exit codes: 0 success, 1 usage, 2 bad input
data, 3 numerical failure.  Errors are reported on stderr as one JSON line.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from . import __version__
from .audio import AudioBuffer
from .container import read_coefficients, read_tensors, write_coefficients, write_tensors
from .errors import DataError
from .filterbank import BandwidthError, bank_report, build_cqt_bank, littlewood_paley, next_pow2
from .scalerate import load_effect, render_effect
from .scattering import ScatteringConfig, coefficients
from .synthesis import SynthesisOptions, synthesize, write_trace
from .wavio import FORMATS, read_wav, write_wav

log = logging.getLogger("tfscat")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
THREADS_ENV = "TFSCAT_THREADS"

_SCATTERING_KEYS = ("sample_rate", "Q", "octaves", "T", "F", "u1_hop", "alpha_max", "Q_mod")
_SYNTHESIS_KEYS = ("iterations", "momentum", "initial_rate", "grow", "shrink", "seed",
                   "snapshot_every")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_scattering_flags(p):
    g = p.add_argument_group("scattering")
    g.add_argument("--Q", type=int, help="wavelets per octave (default 12)")
    g.add_argument("--octaves", type=int, help="number of octaves (default 9)")
    g.add_argument("--T", type=float, help="averaging scale in seconds (default 8192 samples)")
    g.add_argument("--F", type=float, help="log-frequency averaging in octaves (default 0)")
    g.add_argument("--u1-hop", dest="u1_hop", type=int, help="scalogram hop in samples")
    g.add_argument("--alpha-max", dest="alpha_max", type=float, help="largest rate in Hz")
    g.add_argument("--Q-mod", dest="Q_mod", type=int, help="modulation wavelets per octave")


def _add_synthesis_flags(p):
    g = p.add_argument_group("synthesis")
    g.add_argument("--iterations", type=int)
    g.add_argument("--momentum", type=float)
    g.add_argument("--initial-rate", dest="initial_rate", type=float)
    g.add_argument("--grow", type=float)
    g.add_argument("--shrink", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--snapshot-every", dest="snapshot_every", type=int)
    g.add_argument("--format", choices=FORMATS, help="output WAV format (default float32)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tfscat", description="Time-frequency scattering toolkit.")
    p.add_argument("--version", action="version", version=f"tfscat {__version__}")
    p.add_argument("--config", type=Path, help="JSON job file; flags override its values")
    p.add_argument("--threads", type=int, help=f"FFT worker threads (env {THREADS_ENV})")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    a = sub.add_parser("analyze", help="compute scattering coefficients")
    a.add_argument("inputs", nargs="+", type=Path)
    a.add_argument("-o", "--output", type=Path)
    a.add_argument("--coeffs", action="store_true", default=None, help="write SCT1 container")
    a.add_argument("--spectrogram", action="store_true", default=None,
                   help="write S1 as frame,lambda,value CSV")
    a.add_argument("--jobs", type=int, default=1, help="files processed in parallel")
    _add_scattering_flags(a)

    s = sub.add_parser("synthesize", help="resynthesise a texture")
    s.add_argument("target", type=Path, help="WAV file or SCT1 container")
    s.add_argument("-o", "--output", type=Path)
    _add_scattering_flags(s)
    _add_synthesis_flags(s)

    e = sub.add_parser("effect", help="render a scale-rate effect")
    e.add_argument("input", type=Path)
    e.add_argument("--fx", type=Path, help="effect description JSON")
    e.add_argument("-o", "--output", type=Path)
    _add_scattering_flags(e)
    _add_synthesis_flags(e)

    c = sub.add_parser("check-bank", help="Littlewood-Paley report of the CQT bank")
    c.add_argument("--sample-rate", dest="sample_rate", type=float)
    c.add_argument("--length", type=int, help="Fourier length (power of two)")
    c.add_argument("--csv", type=Path, help="write the per-bin profile here")
    c.add_argument("--report", action="store_true", help="print one line per filter")
    c.add_argument("--dump", type=Path, help="write dense transfers as an SCT1 container")
    _add_scattering_flags(c)

    i = sub.add_parser("info", help="print an SCT1 header")
    i.add_argument("file", type=Path)
    return p


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise DataError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise DataError("config file must hold a JSON object")
    return cfg


def _merged(args, job: dict, keys, section: str) -> dict:
    """Values from the job file's section (or top level), then explicit flags."""
    base = job.get(section, {})
    if not isinstance(base, dict):
        raise DataError(f"config section {section!r} must be an object")
    out = {k: base[k] for k in keys if k in base}
    out.update({k: job[k] for k in keys if k in job})
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            out[k] = v
    return out


def _scattering_config(args, job: dict, sample_rate: float) -> ScatteringConfig:
    d = _merged(args, job, _SCATTERING_KEYS, "scattering")
    d.pop("sample_rate", None)
    return ScatteringConfig(sample_rate=sample_rate, **d)


def _synthesis_options(args, job: dict) -> SynthesisOptions:
    return SynthesisOptions(**_merged(args, job, _SYNTHESIS_KEYS, "synthesis"))


def _option(args, job: dict, name: str, default=None):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return job.get(name, default)


def _output_dir(args, job: dict) -> Path:
    out = _option(args, job, "output")
    if out is None:
        raise UsageError("an output directory is required (-o)")
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _provenance(command: str, cfg: ScatteringConfig | None = None, **extra) -> dict:
    d = {"tool": "tfscat", "version": __version__, "command": command}
    if cfg is not None:
        d["config"] = cfg.to_dict()
    d.update(extra)
    return d


def _write_json(path: Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_spectrogram_csv(path, s1) -> None:
    """S1 as ``frame,lambda,value`` rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "lambda", "value"])
        for t in range(s1.values.shape[0]):
            for j, lam in enumerate(s1.lambda_grid):
                w.writerow([t, repr(float(lam)), repr(float(s1.values[t, j]))])


# -- subcommands ---------------------------------------------------------------

def _analyze_one(path: Path, args, job: dict, out: Path, want_coeffs: bool,
                 want_spec: bool) -> None:
    x = read_wav(path)
    cfg = _scattering_config(args, job, x.sample_rate)
    log.info("[%s] analysing %d samples at %g Hz", path.name, len(x), x.sample_rate)
    c = coefficients(x, cfg)
    prov = _provenance("analyze", cfg, inputs=[{"path": str(path), "sha256": _sha256(path)}])
    if want_coeffs:
        write_coefficients(out / f"{path.stem}.sct", c, prov)
    if want_spec:
        write_spectrogram_csv(out / f"{path.stem}_s1.csv", c.s1)
        _write_json(out / f"{path.stem}_s1.json", prov)


def cmd_analyze(args, job: dict) -> int:
    out = _output_dir(args, job)
    want_coeffs = bool(_option(args, job, "coeffs", False))
    want_spec = bool(_option(args, job, "spectrogram", False))
    if not want_coeffs and not want_spec:
        want_coeffs = want_spec = True
    jobs = max(1, int(_option(args, job, "jobs", 1)))
    inputs = list(args.inputs)
    if jobs == 1:
        for path in inputs:
            _analyze_one(path, args, job, out, want_coeffs, want_spec)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_analyze_one, p, args, job, out, want_coeffs, want_spec)
                       for p in inputs]
            for f in futures:
                f.result()
    return EXIT_OK


def _write_synthesis(out: Path, y: AudioBuffer, state, fmt: str, prov: dict, stem: str) -> None:
    write_wav(y, out / f"{stem}.wav", fmt, seed=prov.get("synthesis", {}).get("seed", 0))
    write_trace(state, out / f"{stem}_trace.csv")
    prov = dict(prov)
    prov["final_loss"] = state.loss.to_dict()
    prov["initial_loss"] = state.initial_loss.to_dict()
    _write_json(out / f"{stem}.json", prov)


def cmd_synthesize(args, job: dict) -> int:
    out = _output_dir(args, job)
    opts = _synthesis_options(args, job)
    fmt = _option(args, job, "format", "float32")
    target_path = Path(args.target)
    inputs = [{"path": str(target_path), "sha256": _sha256(target_path)}
              if target_path.exists() else {"path": str(target_path)}]
    if target_path.suffix.lower() == ".sct":
        target, _ = read_coefficients(target_path)
        cfg = target.config
        source = target
    else:
        x = read_wav(target_path)
        cfg = _scattering_config(args, job, x.sample_rate)
        source = x
    y, state = synthesize(source, cfg, opts, snapshot_dir=out)
    prov = _provenance("synthesize", cfg, synthesis=opts.to_dict(), inputs=inputs)
    _write_synthesis(out, y, state, fmt, prov, "y")
    return EXIT_OK


def cmd_effect(args, job: dict) -> int:
    out = _output_dir(args, job)
    fx = _option(args, job, "fx")
    if fx is None:
        raise UsageError("an effect description is required (--fx)")
    f, raw = load_effect_checked(Path(fx))
    opts = _synthesis_options(args, job)
    fmt = _option(args, job, "format", "float32")
    x = read_wav(args.input)
    cfg = _scattering_config(args, job, x.sample_rate)
    y, state, applied = render_effect(x, f, cfg, opts, snapshot_dir=out)
    prov = _provenance("effect", cfg, synthesis=opts.to_dict(), effect=raw, applied=applied,
                       inputs=[{"path": str(args.input), "sha256": _sha256(args.input)}])
    _write_synthesis(out, y, state, fmt, prov, "y")
    return EXIT_OK


def load_effect_checked(path: Path):
    try:
        return load_effect(path)
    except OSError as exc:
        raise DataError(f"cannot read effect file {path}: {exc.strerror or exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise DataError(f"invalid effect file {path}: {exc}") from exc


def cmd_check_bank(args, job: dict) -> int:
    sr = float(_option(args, job, "sample_rate", 44100.0))
    cfg = _scattering_config(args, job, sr)
    length = _option(args, job, "length") or next_pow2(4 * cfg.T_samples)
    bank = build_cqt_bank(sr, cfg.Q, cfg.octaves, int(length), cfg.T)
    lower, upper, profile = littlewood_paley(bank)
    summary = {"Q": cfg.Q, "octaves": cfg.octaves, "sample_rate": sr, "length": int(length),
               "lp_min_passband": lower, "lp_max": upper,
               "passband_hz": list(bank.passband())}
    print(json.dumps(summary, sort_keys=True))
    if args.report:
        print(bank_report(bank))
    if args.csv is not None:
        freqs = bank.frequencies()
        order = np.argsort(freqs)
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["frequency", "lp_sum"])
            for k in order:
                if freqs[k] >= 0:
                    w.writerow([repr(float(freqs[k])), repr(float(profile[k]))])
    if args.dump is not None:
        m = bank.matrix()
        write_tensors(args.dump, {"transfer_real": m.real, "lowpass": bank.lowpass.transfer.real},
                      {"grid": [float(v) for v in bank.grid],
                       "provenance": _provenance("check-bank", cfg, length=int(length))})
    return EXIT_OK


def cmd_info(args, job: dict) -> int:
    header, tensors = read_tensors(args.file)
    header = dict(header)
    header["tensor_stats"] = {k: {"shape": list(v.shape),
                                  "min": float(v.min()) if v.size else None,
                                  "max": float(v.max()) if v.size else None}
                              for k, v in tensors.items()}
    print(json.dumps(header, indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "synthesize": cmd_synthesize,
    "effect": cmd_effect,
    "check-bank": cmd_check_bank,
    "info": cmd_info,
}


def _error(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def _threads(args, job: dict) -> int:
    n = _option(args, job, "threads")
    if n is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                n = int(env)
            except ValueError:
                raise UsageError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    n = 1 if n is None else int(n)
    if n < 1:
        raise UsageError("thread count must be >= 1")
    return n


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: " + ", ".join(COMMANDS))
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        job = _load_config(args.config)
        n_threads = _threads(args, job)
        with sfft.set_workers(n_threads), warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args, job)
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    except UsageError as exc:
        return _error("usage", str(exc), EXIT_USAGE)
    except (DataError, BandwidthError, FileNotFoundError, IsADirectoryError,
            PermissionError) as exc:
        return _error("data", str(exc), EXIT_DATA)
    except (FloatingPointError, ArithmeticError) as exc:
        return _error("numerical", str(exc), EXIT_NUMERICAL)
    except (ValueError, TypeError) as exc:
        return _error("usage", str(exc), EXIT_USAGE)


if __name__ == "__main__":
    sys.exit(main())
