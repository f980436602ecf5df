"""Command-line experiment driver.

Every subcommand needs a master seed (``--seed`` or the config file); no
ambient entropy is used.  Settings resolve as built-in defaults, then the
JSON config file, then command-line flags.  Each output file embeds the
resolved config and the tool version.

Exit codes: 0 success/accepted, 2 protocol rejected, 1 error.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import quantum_sim as qs
from .analysis import (
    Distribution,
    DistributionError,
    classical_chsh_optimum,
    min_entropy,
    smooth_min_entropy,
    smoothcap_witness,
    transcript_stats,
    wilson_interval,
)
from .devices import STRATEGIES, DevicePair, FunctionEndpoint, GameKind, QuantumEndpoint, make_pair
from .extractor import (
    DEFAULT_RHO,
    DesignError,
    ExtractorParams,
    WeakDesign,
    build_weak_design,
    design_violations,
    extract,
)
from .guessing import GuessingGameConfig, lemma3_bound, run_guessing_game
from .io import (
    bits_to_hex,
    dumps,
    hex_to_bits,
    read_json,
    rows_to_csv,
    transcript_blocks_csv,
    transcript_from_dict,
    transcript_to_dict,
)
from .referee import DESK_A, DESK_B, ParameterError, ProtocolAParams, ProtocolBParams, run_protocol, verify_transcript
from .rng import check_seed, substream

log = logging.getLogger("direx")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECTED = 2


class ConfigError(ValueError):
    pass


COMMON_DEFAULTS = {"trials": 1, "format": "json", "out": ".", "workers": 1}

COMMAND_DEFAULTS = {
    "chsh-stats": {"strategy": {"name": "honest", "params": {}}, "trials": 100_000},
    "run": {
        "strategy": {"name": "honest", "params": {}},
        "protocol": {"name": "A"},
    },
    "guess": {
        "strategy": {"name": "honest", "params": {}},
        "trials": 10_000,
        "params": {"k": 20, "calibration_samples": 1000, "decision_radius": 0.2, "b0": None},
    },
    "entropy": {"params": {"eps": 0.0, "alpha": None, "distribution": None, "transcript": None}},
    "design": {"params": {"r": 16, "set_size": 8, "rho": DEFAULT_RHO, "s": None}},
    "extract": {
        "params": {"m": None, "t": 2, "r": 8, "rho": DEFAULT_RHO, "s": None, "design": None,
                   "input": None, "transcript": None, "seed_hex": None}
    },
    "verify": {"params": {"path": None}},
}

# partial protocol records are completed from the desk preset
PROTOCOL_PRESETS = {"A": dict(DESK_A), "B": dict(DESK_B)}

# flags that override entries of the protocol record
PROTOCOL_FLAGS = {
    "protocol": "name",
    "ell": "ell",
    "delta": "delta",
    "C": "C",
    "k": "k_override",
    "m": "m_override",
    "bell_probability": "bell_probability",
    "threshold": None,  # protocol-dependent key, resolved below
    "window_low": "window_low",
    "window_high": "window_high",
}


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = copy.deepcopy(_merge(COMMON_DEFAULTS, COMMAND_DEFAULTS[args.command]))
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        sub = loaded.get("subcommand")
        if sub is not None and sub != args.command:
            raise ConfigError(f"config is for subcommand {sub!r}, not {args.command!r}")
        loaded.pop("subcommand", None)
        if "strategy" in loaded and isinstance(loaded["strategy"], str):
            loaded["strategy"] = {"name": loaded["strategy"], "params": {}}
        cfg = _merge(cfg, loaded)
    for key in ("seed", "trials", "out", "format", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    if getattr(args, "strategy", None) is not None:
        cfg["strategy"] = {"name": args.strategy, "params": {}}
    if getattr(args, "strategy_params", None):
        cfg.setdefault("strategy", {"name": "honest", "params": {}})
        cfg["strategy"]["params"] = _merge(cfg["strategy"].get("params", {}), json.loads(args.strategy_params))
    if args.command == "run":
        proto = dict(cfg.get("protocol", {}))
        for flag, key in PROTOCOL_FLAGS.items():
            value = getattr(args, flag, None)
            if value is None:
                continue
            if flag == "protocol" and value != proto.get("name", "A"):
                proto = {}
            if key is None:
                key = "mismatch_threshold_fraction" if proto.get("name", "A") == "A" else "mismatch_threshold"
            proto[key] = value
        name = str(proto.get("name", "A")).upper()
        if name not in PROTOCOL_PRESETS:
            raise ConfigError(f"unknown protocol {name!r}")
        cfg["protocol"] = {**PROTOCOL_PRESETS[name], **proto, "name": name}
    for key, value in (getattr(args, "overrides", None) or {}).items():
        if value is not None:
            cfg.setdefault("params", {})[key] = value
    cfg["subcommand"] = args.command
    if cfg.get("seed") is None:
        raise ConfigError("a master seed is required (--seed or 'seed' in the config)")
    try:
        cfg["seed"] = check_seed(cfg["seed"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if int(cfg["trials"]) < 1:
        raise ConfigError("trials must be >= 1")
    if cfg["format"] not in ("json", "csv"):
        raise ConfigError("format must be json or csv")
    return cfg


def config_echo(cfg: dict) -> dict:
    """The resolved config as embedded in outputs (output location excluded)."""
    return {key: value for key, value in cfg.items() if key not in ("out", "workers")}


def _envelope(cfg: dict, kind: str, payload: dict) -> dict:
    return {"kind": kind, "tool_version": __version__, "config": config_echo(cfg), **payload}


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text)
    log.info("wrote %s", path)


# ---------------------------------------------------------------- chsh-stats


def _closed_form_success(pair: DevicePair, x: int, y: int) -> float | None:
    ea, eb = pair.endpoint_a, pair.endpoint_b
    target = x & y
    if isinstance(ea, QuantumEndpoint) and isinstance(eb, QuantumEndpoint):
        dist = qs.epr_joint_distribution(ea.angles[x], eb.angles[y])
        return float(sum(dist[a, b] for a in (0, 1) for b in (0, 1) if a ^ b == target))
    if isinstance(ea, FunctionEndpoint) and isinstance(eb, FunctionEndpoint):
        return float((int(ea.f(x)) ^ int(eb.f(y))) == target)
    if pair.name == "shared-random":
        return 1.0 if target == 0 else 0.0
    return None


def cmd_chsh_stats(cfg: dict) -> int:
    pair = make_pair(cfg["strategy"]["name"], cfg["strategy"].get("params"), GameKind.CHSH)
    if pair.kind is not GameKind.CHSH:
        raise ConfigError("chsh-stats needs a CHSH strategy")
    rounds = int(cfg["trials"])
    rows = []
    for idx, (x, y) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        rng = substream(cfg["seed"], "chsh-stats", idx)
        a, b = pair.play_block(x, y, rounds, rng)
        wins = int(np.count_nonzero((a ^ b) == (x & y)))
        low, high = wilson_interval(wins, rounds)
        rows.append(
            {
                "x": x,
                "y": y,
                "closed_form": _closed_form_success(pair, x, y),
                "rounds": rounds,
                "wins": wins,
                "estimate": wins / rounds,
                "wilson_low": low,
                "wilson_high": high,
            }
        )
    closed = [r["closed_form"] for r in rows]
    report = {
        "strategy": pair.name,
        "per_input_pair": rows,
        "overall_closed_form": None if None in closed else sum(closed) / 4,
        "overall_estimate": sum(r["wins"] for r in rows) / (4 * rounds),
        "quantum_value": qs.agreement_probability(0.0, math.pi / 8),
        "classical_optimum": classical_chsh_optimum(),
    }
    out = _out_dir(cfg)
    if cfg["format"] == "csv":
        fields = ["x", "y", "closed_form", "rounds", "wins", "estimate", "wilson_low", "wilson_high"]
        _write(out / "chsh_stats.csv", rows_to_csv(rows, fields))
    else:
        _write(out / "chsh_stats.json", dumps(_envelope(cfg, "chsh-stats", report)))
    return EXIT_OK


# ----------------------------------------------------------------------- run


def protocol_params(cfg: dict):
    proto = dict(cfg["protocol"])
    name = str(proto.pop("name", "A")).upper()
    proto["seed"] = cfg["seed"]
    try:
        if name == "A":
            return ProtocolAParams(**proto)
        if name == "B":
            return ProtocolBParams(**proto)
    except TypeError as exc:
        raise ConfigError(f"bad protocol parameters: {exc}") from exc
    raise ConfigError(f"unknown protocol {name!r}")


def _run_trial(job):
    params, strategy, params_strategy, trial = job
    kind = GameKind.CHSH if isinstance(params, ProtocolAParams) else GameKind.EXTENDED
    pair = make_pair(strategy, params_strategy, kind)
    t = run_protocol(params, pair, trial)
    return {
        "trial": trial,
        "accepted": t.accepted,
        "first_failure": t.first_failure,
        "blocks_played": len(t.blocks),
        "bell_blocks_played": sum(r.is_bell for r in t.blocks),
        "box_uses": t.box_uses,
        "shannon_bits": t.randomness_cost.shannon_bits,
        "raw_bits_drawn": t.randomness_cost.raw_bits_drawn,
    }


def cmd_run(cfg: dict) -> int:
    params = protocol_params(cfg)
    kind = GameKind.CHSH if isinstance(params, ProtocolAParams) else GameKind.EXTENDED
    strategy = cfg["strategy"]["name"]
    sparams = cfg["strategy"].get("params") or {}
    pair = make_pair(strategy, sparams, kind)
    if pair.kind is not kind:
        raise ConfigError(f"strategy {strategy!r} does not play the {kind.value} game")
    trials = int(cfg["trials"])
    out = _out_dir(cfg)
    if trials == 1:
        t = run_protocol(params, pair, 0)
        doc = transcript_to_dict(t, config_echo(cfg))
        _write(out / "transcript.json", dumps(doc))
        _write(out / "blocks.csv", transcript_blocks_csv(t))
        stats = transcript_stats(t)
        if cfg["format"] == "csv":
            fields = ["bell", "x", "y", "blocks", "blocks_passed", "rounds", "mismatches",
                      "mismatch_rate", "wilson_low", "wilson_high"]
            _write(out / "stats.csv", rows_to_csv(stats["per_input_pair"], fields))
        else:
            _write(out / "stats.json", dumps(_envelope(cfg, "transcript-stats", stats)))
        log.info("protocol %s: %s", t.protocol, "accepted" if t.accepted else "rejected")
        return EXIT_OK if t.accepted else EXIT_REJECTED

    jobs = [(params, strategy, sparams, i) for i in range(trials)]
    workers = int(cfg.get("workers") or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial, jobs, chunksize=max(1, trials // (4 * workers))))
    else:
        results = [_run_trial(job) for job in jobs]
    accepted = sum(r["accepted"] for r in results)
    low, high = wilson_interval(accepted, trials)
    summary = {
        "protocol": params.to_dict()["protocol"],
        "params": params.to_dict(),
        "trials": trials,
        "accepted": accepted,
        "acceptance_rate": accepted / trials,
        "wilson_low": low,
        "wilson_high": high,
        "runs": results,
    }
    fields = ["trial", "accepted", "first_failure", "blocks_played", "bell_blocks_played", "box_uses",
              "shannon_bits", "raw_bits_drawn"]
    _write(out / "runs.csv", rows_to_csv(results, fields))
    _write(out / "runs.json", dumps(_envelope(cfg, "protocol-runs", summary)))
    log.info("accepted %d of %d runs", accepted, trials)
    return EXIT_OK if accepted == trials else EXIT_REJECTED


# --------------------------------------------------------------------- guess


def cmd_guess(cfg: dict) -> int:
    p = cfg["params"]
    sparams = cfg["strategy"].get("params") or {}
    pair = make_pair(cfg["strategy"]["name"], sparams, GameKind.CHSH)
    b0 = p.get("b0")
    if isinstance(b0, str):
        b0 = tuple(int(v) for v in hex_to_bits(b0, int(p["k"])))
    config = GuessingGameConfig(
        k=int(p["k"]),
        trials=int(cfg["trials"]),
        b0=b0,
        calibration_samples=int(p["calibration_samples"]),
        decision_radius=float(p["decision_radius"]),
    )
    bound = lemma3_bound(float(sparams.get("gamma", 0.0)), 0.0) if pair.signaling else None
    result = run_guessing_game(pair, config, substream(cfg["seed"], "guess", 0), bound=bound)
    payload = {
        "strategy": pair.name,
        "signaling": pair.signaling,
        "trials": result.trials,
        "successes": result.successes,
        "estimate": result.estimate,
        "wilson_ci": list(result.wilson_ci),
        "bound": result.bound,
        "b0": bits_to_hex(result.b0),
    }
    out = _out_dir(cfg)
    if cfg["format"] == "csv":
        fields = ["strategy", "signaling", "trials", "successes", "estimate", "bound"]
        _write(out / "guess.csv", rows_to_csv([payload], fields))
    else:
        _write(out / "guess.json", dumps(_envelope(cfg, "guessing-game", payload)))
    return EXIT_OK


# ------------------------------------------------------------------- entropy


def _load_distribution(spec) -> Distribution:
    if isinstance(spec, str):
        spec = read_json(Path(spec))
    if isinstance(spec, dict) and "support" in spec:
        return Distribution(spec["support"], spec["probabilities"])
    if isinstance(spec, dict):
        return Distribution.from_mapping(spec)
    raise ConfigError("distribution must be a path or a {support, probabilities} record")


def cmd_entropy(cfg: dict) -> int:
    p = cfg["params"]
    out = _out_dir(cfg)
    if p.get("transcript"):
        t = transcript_from_dict(read_json(Path(p["transcript"])))
        stats = transcript_stats(t)
        if cfg["format"] == "csv":
            fields = ["bell", "x", "y", "blocks", "blocks_passed", "rounds", "mismatches",
                      "mismatch_rate", "wilson_low", "wilson_high"]
            _write(out / "stats.csv", rows_to_csv(stats["per_input_pair"], fields))
        else:
            _write(out / "stats.json", dumps(_envelope(cfg, "transcript-stats", stats)))
        return EXIT_OK
    if p.get("distribution") is None:
        raise ConfigError("entropy needs --distribution or --transcript")
    d = _load_distribution(p["distribution"])
    eps = float(p.get("eps") or 0.0)
    payload = {
        "support_size": len(d),
        "min_entropy": min_entropy(d),
        "eps": eps,
        "smooth_min_entropy": smooth_min_entropy(d, eps),
    }
    if p.get("alpha") is not None:
        witness = smoothcap_witness(d, eps, float(p["alpha"]))
        payload["alpha"] = float(p["alpha"])
        payload["witness"] = None if witness is None else {"set": witness[0], "mass": witness[1]}
    if cfg["format"] == "csv":
        _write(out / "entropy.csv", rows_to_csv([payload], ["support_size", "min_entropy", "eps", "smooth_min_entropy"]))
    else:
        _write(out / "entropy.json", dumps(_envelope(cfg, "entropy", payload)))
    return EXIT_OK


# -------------------------------------------------------------------- design


def cmd_design(cfg: dict) -> int:
    p = cfg["params"]
    design = build_weak_design(int(p["r"]), int(p["set_size"]), float(p["rho"]), None if p.get("s") is None else int(p["s"]))
    out = _out_dir(cfg)
    _write(out / "design.json", dumps(_envelope(cfg, "weak-design", {"design": design.to_dict()})))
    return EXIT_OK


# ------------------------------------------------------------------- extract


def _largest_power_of_two(n: int) -> int:
    if n < 2:
        raise ConfigError("need at least 2 input bits")
    return 1 << (n.bit_length() - 1)


def cmd_extract(cfg: dict) -> int:
    p = cfg["params"]
    if p.get("input") is not None:
        m = int(p["m"]) if p.get("m") else 4 * len(p["input"].strip().removeprefix("0x"))
        x = hex_to_bits(p["input"], m)
    elif p.get("transcript"):
        t = transcript_from_dict(read_json(Path(p["transcript"])))
        raw = t.output_bits("B")
        m = int(p["m"]) if p.get("m") else _largest_power_of_two(len(raw))
        if m > len(raw):
            raise ConfigError(f"transcript holds {len(raw)} output bits, fewer than m = {m}")
        x = raw[:m]
    else:
        raise ConfigError("extract needs --input or --transcript")
    if p.get("design"):
        design = WeakDesign.from_dict(read_json(Path(p["design"]))["design"])
        problems = design_violations(design)
        if problems:
            raise ConfigError("design file fails verification: " + "; ".join(problems))
        params = ExtractorParams(m, int(p["t"]), design.r, design)
    else:
        params = ExtractorParams.build(m, int(p["t"]), int(p["r"]), float(p["rho"]),
                                       None if p.get("s") is None else int(p["s"]))
    if p.get("seed_hex"):
        seed_bits = hex_to_bits(p["seed_hex"], params.s)
    else:
        seed_bits = substream(cfg["seed"], "extractor-seed", 0).integers(0, 2, params.s, dtype=np.uint8)
    z = extract(x, seed_bits, params)
    payload = {
        "m": params.m,
        "t": params.t,
        "r": params.r,
        "s": params.s,
        "seed_bits": bits_to_hex(seed_bits),
        "output": bits_to_hex(z),
        "output_bits": "".join(str(int(v)) for v in z),
        "design": params.design.to_dict(),
    }
    out = _out_dir(cfg)
    _write(out / "extract.json", dumps(_envelope(cfg, "extraction", payload)))
    return EXIT_OK


# -------------------------------------------------------------------- verify


def verify_document(doc: dict) -> tuple[str, list[str]]:
    if doc.get("format") == "direx-transcript":
        return "transcript", verify_transcript(transcript_from_dict(doc))
    if doc.get("kind") == "weak-design" or "design" in doc:
        return "design", design_violations(WeakDesign.from_dict(doc["design"]))
    raise ConfigError("unrecognized document")


def cmd_verify(cfg: dict) -> int:
    path = cfg["params"].get("path")
    if not path:
        raise ConfigError("verify needs a file path")
    kind, problems = verify_document(read_json(Path(path)))
    payload = {"path": str(path), "document": kind, "ok": not problems, "problems": problems}
    sys.stdout.write(dumps(payload))
    return EXIT_OK if not problems else EXIT_ERROR


COMMANDS = {
    "chsh-stats": cmd_chsh_stats,
    "run": cmd_run,
    "guess": cmd_guess,
    "entropy": cmd_entropy,
    "design": cmd_design,
    "extract": cmd_extract,
    "verify": cmd_verify,
}


class _Overrides(argparse.Action):
    """Collect a subcommand flag into ``namespace.overrides``."""

    def __call__(self, parser, namespace, values, option_string=None):
        overrides = dict(getattr(namespace, "overrides", None) or {})
        overrides[self.dest] = values
        namespace.overrides = overrides


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="64-bit master seed")
    common.add_argument("--trials", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--workers", type=int, help="worker processes for multi-trial runs")
    common.add_argument("-v", "--verbose", action="store_true")

    strat = argparse.ArgumentParser(add_help=False)
    strat.add_argument("--strategy", choices=STRATEGIES + ("honest-chsh", "honest-extended"))
    strat.add_argument("--strategy-params", help="JSON object of strategy parameters")

    parser = argparse.ArgumentParser(prog="direx", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"direx {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("chsh-stats", parents=[common, strat], help="per-input CHSH success table")

    run = sub.add_parser("run", parents=[common, strat], help="run Protocol A or B")
    run.add_argument("--protocol", choices=("A", "B"))
    run.add_argument("--ell", type=int)
    run.add_argument("--delta", type=int)
    run.add_argument("--C", type=int)
    run.add_argument("--k", type=int, help="block length override")
    run.add_argument("--m", type=int, help="block count override (Protocol B)")
    run.add_argument("--bell-probability", type=float)
    run.add_argument("--threshold", type=float, help="mismatch threshold fraction")
    run.add_argument("--window-low", type=float)
    run.add_argument("--window-high", type=float)

    guess = sub.add_parser("guess", parents=[common, strat], help="play the guessing game")
    guess.add_argument("--k", type=int, action=_Overrides)
    guess.add_argument("--calibration-samples", dest="calibration_samples", type=int, action=_Overrides)
    guess.add_argument("--decision-radius", dest="decision_radius", type=float, action=_Overrides)
    guess.add_argument("--b0", action=_Overrides, help="hex block; calibrated when omitted")

    ent = sub.add_parser("entropy", parents=[common], help="entropy of a distribution or transcript stats")
    ent.add_argument("--distribution", action=_Overrides, help="JSON distribution file")
    ent.add_argument("--transcript", action=_Overrides, help="transcript JSON file")
    ent.add_argument("--eps", type=float, action=_Overrides)
    ent.add_argument("--alpha", type=float, action=_Overrides)

    des = sub.add_parser("design", parents=[common], help="build a weak design")
    des.add_argument("--r", type=int, action=_Overrides)
    des.add_argument("--set-size", dest="set_size", type=int, action=_Overrides)
    des.add_argument("--rho", type=float, action=_Overrides)
    des.add_argument("--s", type=int, action=_Overrides, help="seed-length budget")

    ext = sub.add_parser("extract", parents=[common], help="run the t-XOR extractor")
    ext.add_argument("--input", action=_Overrides, help="input bits as hex")
    ext.add_argument("--transcript", action=_Overrides, help="use box B's output from a transcript")
    ext.add_argument("--m", type=int, action=_Overrides)
    ext.add_argument("--t", type=int, action=_Overrides)
    ext.add_argument("--r", type=int, action=_Overrides)
    ext.add_argument("--rho", type=float, action=_Overrides)
    ext.add_argument("--s", type=int, action=_Overrides)
    ext.add_argument("--design", action=_Overrides, help="design JSON file")
    ext.add_argument("--seed-hex", dest="seed_hex", action=_Overrides, help="extractor seed bits as hex")

    ver = sub.add_parser("verify", parents=[common], help="re-validate a transcript or design file")
    ver.add_argument("path", action=_Overrides)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "verify" and args.seed is None and not args.config:
        args.seed = 0  # verification draws no randomness
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, ParameterError, DesignError, DistributionError, ValueError, OSError) as exc:
        print(f"direx {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
