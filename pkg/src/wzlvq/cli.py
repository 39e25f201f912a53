"""Command-line experiment runner.

    wzlvq quantize --config cfg.json [--seed S] [--out PATH] [--format json|csv] [--threads K]
    wzlvq sweep    --config cfg.json ...
    wzlvq netsim   --config cfg.json ...

The config file is one flat JSON object.  Keys (defaults in brackets):

quantize / sweep
    lattice       "Z" or "A2"                                  ["Z"]
    k             scaling index for Z^n (N = k^n)
    a, b          Eisenstein ideal a + b*omega for A2 (N = a^2 - ab + b^2)
    n             dimension for Z^n                             [1]
    s             fine scale; omitted means the scale schedule
    sigma_x, sigma_y                                            [1.0]
    rho or gap    correlation, or gap = sqrt(1 - rho^2)
    trials        Monte Carlo trials (>= 1e4)
    variant       "lattice" or "matched"                        ["lattice"]
    mode          "joint" or "pinned"                           ["joint"]
    train_trials, train_iters   matched codebook training       [200000, 200]
    sweep only: rho_grid, gap_grid or k_grid (one of them, non-empty)

netsim
    n or n_grid   node counts (even-root squares)
    R             link bits per slot
    sigma         Wiener parameter                              [1.0]
    slots         chain-coding time slots
    periods       transport schedule periods                    [10]
    interp_points grid points per link for interpolation        [4]
    fault_inject  slot at which a rogue transmission is added   [null]

``seed`` is mandatory, in the file or via --seed (the flag wins).

Output schema (version 1).  Every JSON record carries ``schema_version``,
``command``, ``config`` (the resolved parameters), ``config_hash`` (sha256
of the canonical config JSON), ``build`` and ``timestamp``; only the
timestamp varies between identical runs.  Rates appear both in nats and
bits with explicit suffixes.  CSV output has one header row; sweep rows
are written in grid order, netsim rows are per node.

Exit codes: 0 success, 2 validation error, 3 invariant failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis as an
from . import codec as _codec
from . import netsim as ns
from .lattice import make_lattice
from .sources import gen_brownian_field
from .sublattice import eisenstein_similarity, scaling_similarity

SCHEMA_VERSION = 1
LN2 = math.log(2.0)

QUANT_KEYS = {"lattice", "k", "a", "b", "n", "s", "sigma_x", "sigma_y", "rho", "gap", "trials",
              "variant", "mode", "train_trials", "train_iters", "seed"}
SWEEP_KEYS = QUANT_KEYS | {"rho_grid", "gap_grid", "k_grid"}
NETSIM_KEYS = {"n", "n_grid", "R", "sigma", "slots", "periods", "interp_points", "fault_inject", "seed"}


class ValidationError(ValueError):
    pass


def _build_stamp() -> str:
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"wzlvq-{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"wzlvq-{__version__}"


def load_config(path, allowed: set, seed: int | None) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except OSError as e:
        raise ValidationError(f"cannot read config {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ValidationError(f"config {path} is not valid JSON: {e}") from None
    if not isinstance(cfg, dict):
        raise ValidationError("config must be a flat JSON object")
    unknown = sorted(set(cfg) - allowed)
    if unknown:
        raise ValidationError(f"unknown config keys {unknown}; allowed: {sorted(allowed)}")
    for k, v in cfg.items():
        if isinstance(v, dict):
            raise ValidationError(f"config key {k!r} is nested; the format is flat")
    if seed is not None:
        cfg["seed"] = seed
    if "seed" not in cfg:
        raise ValidationError("a seed is required (config key 'seed' or --seed)")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ValidationError("seed must be a non-negative integer")
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _record(command: str, cfg: dict, body: dict) -> dict:
    rec = {"schema_version": SCHEMA_VERSION, "command": command, "config": cfg,
           "config_hash": config_hash(cfg), "build": _build_stamp()}
    rec.update(body)
    rec["timestamp"] = datetime.now(timezone.utc).isoformat()
    return rec


def _num(cfg, key, default=None, *, kind=float, positive=False):
    v = cfg.get(key, default)
    if v is None:
        raise ValidationError(f"missing required key {key!r}")
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and int(v) != v):
        raise ValidationError(f"{key!r} must be {'an integer' if kind is int else 'a number'}, got {v!r}")
    v = kind(v)
    if positive and not v > 0:
        raise ValidationError(f"{key!r} must be positive, got {v!r}")
    return v


def _rho(cfg) -> float:
    if "rho" in cfg and "gap" in cfg:
        raise ValidationError("give either 'rho' or 'gap', not both")
    if "gap" in cfg:
        gap = _num(cfg, "gap")
        if not 0 < gap < 1:
            raise ValidationError("'gap' must lie in (0, 1)")
        return _codec.rho_for_gap(gap)
    rho = _num(cfg, "rho")
    if not abs(rho) < 1:
        raise ValidationError("'rho' must satisfy |rho| < 1")
    return rho


def _codec_from(cfg, rho, k_override=None):
    name = str(cfg.get("lattice", "Z")).upper()
    sigma_x = _num(cfg, "sigma_x", 1.0, positive=True)
    if name == "A2":
        L = make_lattice("A2")
        if k_override is not None:
            raise ValidationError("k_grid applies to Z^n only")
        kappa = eisenstein_similarity(_num(cfg, "a", kind=int), _num(cfg, "b", 0, kind=int))
    elif name.startswith("Z"):
        L = make_lattice("Z", _num(cfg, "n", 1, kind=int, positive=True))
        k = k_override if k_override is not None else _num(cfg, "k", kind=int)
        if k < 1:
            raise ValidationError("'k' must be a positive integer")
        kappa = scaling_similarity(L, k)
    else:
        raise ValidationError(f"unknown lattice {cfg.get('lattice')!r}; use 'Z' or 'A2'")
    if "s" in cfg:
        s = _num(cfg, "s", positive=True)
    else:
        try:
            s = _codec.scale_schedule(rho, sigma_x)
        except ValueError as e:
            raise ValidationError(str(e)) from None
    return _codec.make_wzlvq(L, kappa, s)


def _quantize_point(cfg, rho, k_override=None, threads=1) -> dict:
    trials = _num(cfg, "trials", kind=int)
    if trials < 10_000:
        raise ValidationError(f"'trials' must be at least 10000, got {trials}")
    variant = cfg.get("variant", "lattice")
    if variant not in ("lattice", "matched"):
        raise ValidationError("'variant' must be 'lattice' or 'matched'")
    mode = cfg.get("mode", "joint")
    if mode not in ("joint", "pinned"):
        raise ValidationError("'mode' must be 'joint' or 'pinned'")
    sigma_x = _num(cfg, "sigma_x", 1.0, positive=True)
    sigma_y = _num(cfg, "sigma_y", 1.0, positive=True)
    seed = cfg["seed"]
    q = _codec_from(cfg, rho, k_override)
    cb = None
    if variant == "matched":
        cb = _codec.train_matched_fine(q, rho, sigma_x, _num(cfg, "train_trials", 200_000, kind=int, positive=True),
                                       _num(cfg, "train_iters", 200, kind=int), seed + 1)
    rep = an.mc_distortion(q, sigma_x, sigma_y, rho, trials, seed, codebook=cb, mode=mode, threads=threads)
    rate = an.empirical_rate(q, sigma_x, trials, seed + 2, codebook=cb, threads=threads)
    R = math.log(q.N) / q.dim
    bp = an.beta_params(q, sigma_x, rho)
    # linear size of the coarse cell, so that G s^2 e^{-2R} is the fine cell's second moment
    coarse_size = q.coarse.volume ** (1.0 / q.dim)
    return {
        "rho": rho, "gap": math.sqrt(1.0 - rho * rho), "s": q.s, "N": q.N, "dim": q.dim,
        "R_nats": R, "R_bits": R / LN2,
        "d_bar": rep.d_bar, "alpha": rep.alpha, "beta": rep.beta, "p_err": rep.p_err,
        "d_bar_stderr": rep.d_bar_stderr,
        "wyner_D": an.wyner_bound(sigma_x, rho, R),
        "figure_of_merit": an.figure_of_merit(rep.d_bar, sigma_x, rho, R),
        "beta_upper_bound": an.beta_upper_bound(bp),
        "predicted_alpha": an.predicted_alpha(q.dim, q.N, sigma_x, rho, variant,
                                              **({"s": coarse_size} if variant == "lattice" else {})),
        "_report": rep, "_rate": rate,
    }


def cmd_quantize(cfg: dict, threads: int = 1) -> dict:
    pt = _quantize_point(cfg, _rho(cfg), threads=threads)
    rep, rate = pt.pop("_report"), pt.pop("_rate")
    return _record("quantize", cfg, {"summary": pt, "distortion": rep.to_dict(), "rate": rate.to_dict()})


def _grid(cfg):
    keys = [k for k in ("rho_grid", "gap_grid", "k_grid") if k in cfg]
    if len(keys) != 1:
        raise ValidationError("sweep needs exactly one of 'rho_grid', 'gap_grid', 'k_grid'")
    key = keys[0]
    grid = cfg[key]
    if not isinstance(grid, list) or not grid:
        raise ValidationError(f"{key!r} must be a non-empty list")
    return key, grid


def cmd_sweep(cfg: dict, threads: int = 1) -> dict:
    key, grid = _grid(cfg)
    jobs = []
    for g in grid:
        sub = {k: v for k, v in cfg.items() if not k.endswith("_grid")}
        if key == "k_grid":
            jobs.append((sub, _rho(cfg), int(g)))
        else:
            sub["rho" if key == "rho_grid" else "gap"] = g
            sub.pop("gap" if key == "rho_grid" else "rho", None)
            jobs.append((sub, _rho(sub), None))

    def run(job):
        pt = _quantize_point(*job)
        pt.pop("_report"), pt.pop("_rate")
        return pt

    # rows come back in grid order whatever the completion order
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(run, jobs))
    else:
        rows = [run(j) for j in jobs]
    return _record("sweep", cfg, {"grid_key": key, "rows": rows})


def cmd_netsim(cfg: dict, threads: int = 1) -> dict:
    if "n" in cfg and "n_grid" in cfg:
        raise ValidationError("give either 'n' or 'n_grid', not both")
    n_grid = cfg.get("n_grid", [cfg.get("n")])
    if not isinstance(n_grid, list) or not n_grid or any(v is None for v in n_grid):
        raise ValidationError("netsim needs 'n' or a non-empty 'n_grid'")
    R = _num(cfg, "R", kind=int, positive=True)
    sigma = _num(cfg, "sigma", 1.0, positive=True)
    slots = _num(cfg, "slots", kind=int, positive=True)
    periods = _num(cfg, "periods", 10, kind=int, positive=True)
    per_link = _num(cfg, "interp_points", 4, kind=int, positive=True)
    fault_at = cfg.get("fault_inject")
    runs = []
    for n in n_grid:
        if isinstance(n, bool) or not isinstance(n, int):
            raise ValidationError(f"node count must be an integer, got {n!r}")
        layout = ns.build_layout(n)
        fault = ns.collision_fault(int(fault_at)) if fault_at is not None else None
        transport = ns.run_transport(layout, periods * ns.schedule_period(layout), R, fault=fault)
        field = gen_brownian_field(n, sigma, slots, cfg["seed"])
        chain = ns.chain_code(field, R)
        grid = np.linspace(0.0, 1.0, n * per_link + 1)
        prof = ns.interpolate(chain, field, grid, cfg["seed"] + 1)
        runs.append({
            "n": n,
            "per_node_rate_bits": str(transport.goodput),
            "per_node_rate_nats": float(transport.goodput) * LN2,
            "transport": transport.to_dict(),
            "chain": chain.to_dict(),
            "chain_rate_bits": chain.rate_nats / LN2,
            "interpolation": {"u": prof.u.tolist(), "D_u": prof.D_u.tolist(),
                              "D_u_stderr": prof.D_u_stderr.tolist(), "bound": prof.bound.tolist()},
            "_chain": chain,
        })
    return _record("netsim", cfg, {"runs": runs})


def _csv_text(record: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cmd = record["command"]
    if cmd == "quantize":
        row = record["summary"]
        w.writerow(list(row))
        w.writerow([row[k] for k in row])
    elif cmd == "sweep":
        cols = list(record["rows"][0])
        w.writerow(cols)
        for row in record["rows"]:
            w.writerow([row[k] for k in cols])
    else:
        w.writerow(["n", "m", "u", "D_mn", "p_err_m", "errors_observed"])
        for run in record["runs"]:
            for row in run["_chain"].rows():
                w.writerow([run["n"], *row])
    return buf.getvalue()


def _json_text(record: dict) -> str:
    clean = dict(record)
    if clean["command"] == "netsim":
        clean["runs"] = [{k: v for k, v in r.items() if not k.startswith("_")} for r in record["runs"]]
    return json.dumps(clean, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


COMMANDS = {"quantize": (cmd_quantize, QUANT_KEYS), "sweep": (cmd_sweep, SWEEP_KEYS),
            "netsim": (cmd_netsim, NETSIM_KEYS)}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wzlvq", description="Wyner-Ziv lattice quantization experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        c = sub.add_parser(name)
        c.add_argument("--config", required=True, help="flat JSON parameter file")
        c.add_argument("--seed", type=int, help="overrides the config seed")
        c.add_argument("--out", help="output path (stdout if omitted)")
        c.add_argument("--format", choices=("json", "csv"), default="json")
        c.add_argument("--threads", type=int, default=1)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fn, keys = COMMANDS[args.command]
    try:
        if args.threads < 1:
            raise ValidationError("--threads must be at least 1")
        cfg = load_config(args.config, keys, args.seed)
        record = fn(cfg, args.threads)
    except ns.SchedulerInvariantError as e:
        print(f"invariant failure: {e.invariant}: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"validation error: {e}", file=sys.stderr)
        return 2
    text = _csv_text(record) if args.format == "csv" else _json_text(record)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
