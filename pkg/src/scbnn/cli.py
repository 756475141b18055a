"""Batch experiment runner.

Subcommands: fit, eval, sweep, bound, convert, energy. Every command is
deterministic given its seed; every output file embeds a metadata header
(tool version, config hash, seed, RNG family). Exit codes: 0 success,
1 validation-check failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bitstream import (
    EncodingRangeError,
    GENERATOR_FAMILY,
    StreamFormatError,
    StreamKey,
    StreamMismatchError,
    from_hex_line,
    to_hex_line,
)
from .bnn import (
    BinaryVector,
    binarize_network,
    binary_network_from_dict,
    binary_network_to_dict,
    forward_bnn,
)
from .energy import bnn_layer_energy, layer_energy
from .netcore import (
    Activation,
    SchemaError,
    fit_reference,
    forward_reference,
    load_network,
    make_target,
    network_to_dict,
    unit_grid,
)
from .scgates import AccumulationMode
from .scnn import ScnnConfig, forward_scnn
from .theory import (
    BoundQuery,
    InfeasibleBoundError,
    bound_validation,
    convergence_sweep,
    m_min_bound,
)
from .transform import (
    ChunkError,
    ScnnStreamBundle,
    chunk_network,
    preactivation_equivalence_check,
    scnn_to_bnn,
)

_CONFIG_ERRORS = (
    SchemaError,
    StreamFormatError,
    StreamMismatchError,
    EncodingRangeError,
    ChunkError,
    InfeasibleBoundError,
    ValueError,
    OSError,
)


def _config_hash(resolved: dict) -> str:
    blob = json.dumps(resolved, sort_keys=True, default=str).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _metadata(resolved: dict, seed: int) -> dict:
    return {
        "tool": f"scbnn {__version__}",
        "config_hash": _config_hash(resolved),
        "seed": seed,
        "rng": GENERATOR_FAMILY,
    }


def _write_json(path: Path, payload: dict, meta: dict) -> None:
    doc = {"meta": meta, **payload}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header: list[str], rows: list[list], meta: dict) -> None:
    lines = [f"# {k}={v}" for k, v in meta.items()]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return doc


def _resolve(args_value, config: dict, key: str, default):
    """Flag > config > default."""
    if args_value is not None:
        return args_value
    if key in config:
        return config[key]
    return default


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_target(name: str, n: int, params: list[str]):
    kwargs = {}
    for item in params:
        if "=" not in item:
            raise ValueError(f"target param {item!r} must look like name=value")
        k, v = item.split("=", 1)
        kwargs[k] = float(v)
    return make_target(name, n, **kwargs)


# ---------------------------------------------------------------------------
# Subcommands

def _cmd_fit(args) -> int:
    config = _load_config(args.config)
    seed = _resolve(args.seed, config, "seed", 0)
    fit_cfg = config.get("fit", {})
    target_cfg = config.get("target", {})
    target_name = _resolve(args.target, target_cfg, "name", None)
    if target_name is None:
        raise ValueError("no target function given (use --target or config)")
    n = int(_resolve(args.n, target_cfg, "n", 1))
    N = int(_resolve(args.N, fit_cfg, "N", 32))
    grid_points = int(_resolve(args.grid_points, fit_cfg, "grid", 0)) or None
    activation = Activation(_resolve(args.activation, fit_cfg, "activation", "tanh"))
    edge_fraction = float(_resolve(args.edge_fraction, fit_cfg, "edge_fraction", 0.5))
    noise_penalty = float(_resolve(args.noise_penalty, fit_cfg, "noise_penalty", 1e-3))
    ridge = float(_resolve(args.ridge, fit_cfg, "ridge", 1e-8))
    f = _parse_target(target_name, n, args.target_param or target_cfg.get("params", []))
    grid = unit_grid(n, grid_points)
    net = fit_reference(
        f,
        N,
        grid,
        StreamKey(seed),
        activation=activation,
        ridge=ridge,
        noise_penalty=noise_penalty,
        edge_fraction=edge_fraction,
    )
    if args.name:
        net.name = args.name
    resolved = {
        "command": "fit",
        "target": target_name,
        "n": n,
        "N": N,
        "grid": grid.shape[0],
        "activation": activation.value,
        "edge_fraction": edge_fraction,
        "noise_penalty": noise_penalty,
        "ridge": ridge,
        "seed": seed,
    }
    out = _out_dir(args.out_dir)
    meta = _metadata(resolved, seed)
    _write_json(out / "network.json", network_to_dict(net), meta)
    _write_json(
        out / "fit_report.json",
        {
            "network": net.name,
            "target": target_name,
            "n": n,
            "N": N,
            "grid_points": grid.shape[0],
            "sup_error": net.fit_sup_error,
            "alpha_sum": net.alpha_sum,
        },
        meta,
    )
    print(f"fit {net.name}: grid sup-error {net.fit_sup_error!r}")
    print(f"wrote {out / 'network.json'} and {out / 'fit_report.json'}")
    return 0


def _load_any_network(path: str):
    """Returns ('reference'|'binary'|'bundle', object)."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    if doc.get("form") == "scnn-streams":
        return "bundle", _bundle_from_dict(doc, path)
    if doc.get("binary") is True:
        return "binary", binary_network_from_dict(doc, where=path)
    from .netcore import network_from_dict

    return "reference", network_from_dict(doc, where=path)


def _cmd_eval(args) -> int:
    kind, net = _load_any_network(args.network)
    seed = args.seed if args.seed is not None else 0
    if kind == "binary":
        if not args.x_bits:
            raise ValueError("binary networks need --x-bits (e.g. 1011 for +,-,+,+)")
        x = BinaryVector.from_bits(args.x_bits)
        print(f"bnn {forward_bnn(net, x)!r}")
        return 0
    if kind == "bundle":
        raise ValueError("eval expects a reference or binary network file")
    if not args.x:
        raise ValueError("reference networks need --x (comma-separated reals)")
    point = [float(v) for v in args.x.split(",")]
    print(f"reference {forward_reference(net, point)!r}")
    if args.scnn:
        cfg = ScnnConfig(args.M or 4096, StreamKey(seed), AccumulationMode(args.mode or "apc"))
        print(f"scnn {forward_scnn(net, point, cfg)!r} (M={cfg.M}, mode={cfg.mode.value})")
    return 0


def _cmd_sweep(args) -> int:
    config = _load_config(args.config)
    sweep_cfg = config.get("sweep", {})
    target_cfg = config.get("target", {})
    seed = _resolve(args.seed, config, "seed", 0)
    net = load_network(args.network)
    target_name = _resolve(args.target, target_cfg, "name", None)
    if target_name is None:
        raise ValueError("no target function given (use --target or config)")
    f = _parse_target(target_name, net.n, args.target_param or target_cfg.get("params", []))
    Ms = args.Ms or sweep_cfg.get("Ms")
    if isinstance(Ms, str):
        Ms = [int(v) for v in Ms.split(",")]
    if not Ms:
        raise ValueError("no stream lengths given (use --Ms or config sweep.Ms)")
    trials = int(_resolve(args.trials, sweep_cfg, "trials", 200))
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    epsilon = float(_resolve(args.epsilon, sweep_cfg, "epsilon", 0.15))
    grid_points = int(_resolve(args.grid_points, sweep_cfg, "grid", 17))
    mode = AccumulationMode(_resolve(args.mode, config, "mode", "apc"))
    jobs = args.jobs or 1
    grid = unit_grid(net.n, grid_points)
    report = convergence_sweep(
        net, f, list(Ms), trials, grid, mode, StreamKey(seed), epsilon, jobs=jobs
    )
    resolved = {
        "command": "sweep",
        "network": net.name,
        "target": target_name,
        "Ms": list(Ms),
        "trials": trials,
        "epsilon": epsilon,
        "grid": grid_points,
        "mode": mode.value,
        "seed": seed,
    }
    meta = _metadata(resolved, seed)
    out = _out_dir(args.out_dir)
    header = [
        "M",
        "trials",
        "grid_size",
        "median_vs_reference",
        "max_vs_reference",
        "rms_vs_reference",
        "median_vs_target",
        "max_vs_target",
        "rms_vs_target",
        "failure_rate",
    ]
    rows = [
        [
            r.M,
            r.trials,
            r.grid_size,
            r.median_vs_reference,
            r.max_vs_reference,
            r.rms_vs_reference,
            r.median_vs_target,
            r.max_vs_target,
            r.rms_vs_target,
            r.failure_rate,
        ]
        for r in report.rows
    ]
    _write_csv(out / "sweep.csv", header, rows, meta)
    plot_header = ["M", "median_vs_reference", "rms_vs_reference", "median_vs_target", "rms_vs_target", "failure_rate"]
    plot_rows = [
        [r.M, r.median_vs_reference, r.rms_vs_reference, r.median_vs_target, r.rms_vs_target, r.failure_rate]
        for r in report.rows
    ]
    _write_csv(out / "sweep_plot.csv", plot_header, plot_rows, meta)
    _write_json(out / "sweep_summary.json", report.to_dict(), meta)
    print(f"sweep {net.name} vs {target_name}: slope_median {report.slope_median!r}")
    for r in report.rows:
        print(
            f"  M={r.M}: median|G_SC-G|={r.median_vs_reference!r} "
            f"failure_rate={r.failure_rate!r}"
        )
    print(f"wrote {out / 'sweep.csv'}, {out / 'sweep_plot.csv'}, {out / 'sweep_summary.json'}")
    return 0


def _cmd_bound(args) -> int:
    q = BoundQuery(args.n, args.N, args.epsilon, args.delta, alpha_sum=args.alpha_sum)
    M = m_min_bound(q)
    print(f"M_min = {M}")
    if not args.validate:
        return 0
    if not args.network or not args.target:
        raise ValueError("--validate needs --network and --target")
    net = load_network(args.network)
    f = _parse_target(args.target, net.n, args.target_param or [])
    seed = args.seed if args.seed is not None else 0
    grid = unit_grid(net.n, args.grid_points or 9)
    report = bound_validation(
        q, net, f, args.trials or 40, StreamKey(seed), grid=grid,
        mode=AccumulationMode(args.mode or "apc"),
    )
    status = "PASS" if report.passed else "FAIL"
    print(
        f"validation: M={report.M} samples={report.samples} "
        f"failure_rate={report.failure_rate!r} <= delta+2se={report.threshold!r} [{status}]"
    )
    if args.out_dir:
        resolved = {
            "command": "bound",
            "n": args.n,
            "N": args.N,
            "epsilon": args.epsilon,
            "delta": args.delta,
            "alpha_sum": args.alpha_sum,
            "trials": args.trials or 40,
            "grid": args.grid_points or 9,
            "seed": seed,
        }
        _write_json(_out_dir(args.out_dir) / "bound_report.json", vars(report), _metadata(resolved, seed))
    return 0 if report.passed else 1


def _bundle_to_dict(bundle: ScnnStreamBundle) -> dict:
    return {
        "form": "scnn-streams",
        "name": bundle.name,
        "M": bundle.M,
        "n": bundle.n,
        "N": bundle.N,
        "activation": bundle.activation.value,
        "output_weights": [float(a) for a in bundle.output_weights],
        "weight_streams": [[to_hex_line(s) for s in unit] for unit in bundle.weight_streams],
        "bias_streams": [to_hex_line(s) for s in bundle.bias_streams],
    }


def _bundle_from_dict(doc: dict, where: str) -> ScnnStreamBundle:
    try:
        return ScnnStreamBundle(
            M=int(doc["M"]),
            weight_streams=[[from_hex_line(s) for s in unit] for unit in doc["weight_streams"]],
            bias_streams=[from_hex_line(s) for s in doc["bias_streams"]],
            output_weights=np.array(doc["output_weights"], dtype=float),
            activation=Activation(doc["activation"]),
            name=doc.get("name", "scnn-streams"),
        )
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{where}: malformed stream bundle ({exc})") from None


def _cmd_convert(args) -> int:
    kind, net = _load_any_network(args.network)
    seed = args.seed if args.seed is not None else 0
    out = _out_dir(args.out_dir)
    resolved = {"command": "convert", "input": os.path.basename(args.network), "seed": seed}
    if args.binarize:
        if kind != "reference":
            raise ValueError("--binarize expects a reference network file")
        bnet = binarize_network(net, StreamKey(seed))
        meta = _metadata({**resolved, "mode": "binarize"}, seed)
        _write_json(out / "binary_network.json", binary_network_to_dict(bnet), meta)
        _write_json(
            out / "conversion_report.json",
            {"conversion": "binarize", "m": bnet.m, "N": bnet.N},
            meta,
        )
        print(f"binarized {net.name}: m={bnet.m} N={bnet.N}")
        print(f"wrote {out / 'binary_network.json'}")
        return 0
    if args.to_scnn is not None:
        if kind != "binary":
            raise ValueError("--to-scnn expects a binary network file")
        M = args.to_scnn
        bundle = chunk_network(net, M)
        doc = _bundle_to_dict(bundle)
        path = out / "scnn_streams.json"
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"meta": _metadata({**resolved, "mode": "to-scnn", "M": M}, seed), **doc},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")
        # equivalence check on a keyed random input vector
        gen = StreamKey(seed).substream("convert-input").generator()
        x = BinaryVector.from_bits((gen.random(net.m) < 0.5).astype(np.uint8))
        report = preactivation_equivalence_check(net, x, M)
        for u in report.units:
            status = "PASS" if u.passed else "FAIL"
            print(f"unit {u.unit}: bnn={u.bnn_preactivation} sc_total={u.sc_total} [{status}]")
        print(f"wrote {path}")
        if not report.all_passed:
            print("equivalence check FAILED", file=sys.stderr)
            return 1
        return 0
    if args.to_bnn:
        if kind != "bundle":
            raise ValueError("--to-bnn expects an scnn-streams bundle file")
        bnet, _ = scnn_to_bnn(net)
        _write_json(
            out / "binary_network.json",
            binary_network_to_dict(bnet),
            _metadata({**resolved, "mode": "to-bnn"}, seed),
        )
        print(f"joined {net.name}: m={bnet.m} N={bnet.N}")
        print(f"wrote {out / 'binary_network.json'}")
        return 0
    raise ValueError("convert needs one of --binarize, --to-scnn M, --to-bnn")


def _cmd_energy(args) -> int:
    mode = AccumulationMode(args.mode or "apc")
    if args.bnn:
        if args.m is None or args.N is None:
            raise ValueError("--bnn needs --m and --N")
        report = bnn_layer_energy(args.m, args.N, mode)
        resolved = {"command": "energy", "bnn": True, "m": args.m, "N": args.N, "mode": mode.value}
    else:
        if args.n is None or args.M is None or args.N is None:
            raise ValueError("energy needs --n, --M and --N (or --bnn --m --N)")
        report = layer_energy(args.n, args.M, args.N, mode)
        resolved = {"command": "energy", "n": args.n, "M": args.M, "N": args.N, "mode": mode.value}
    for name, value in report.classes().items():
        print(f"{name}: {value}")
    print(f"total: {report.total} ({report.asymptotic_label})")
    if args.out_dir:
        out = _out_dir(args.out_dir)
        meta = _metadata(resolved, 0)
        _write_json(out / "energy.json", report.to_dict(), meta)
        classes = report.classes()
        _write_csv(
            out / "energy.csv",
            ["class", "count"],
            [[k, v] for k, v in classes.items()] + [["total", report.total]],
            meta,
        )
        print(f"wrote {out / 'energy.json'} and {out / 'energy.csv'}")
    return 0


# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scbnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a reference network to a target function")
    p.add_argument("--target")
    p.add_argument("--target-param", action="append", metavar="K=V")
    p.add_argument("--n", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--grid-points", type=int)
    p.add_argument("--activation", choices=[a.value for a in Activation])
    p.add_argument("--edge-fraction", type=float)
    p.add_argument("--noise-penalty", type=float)
    p.add_argument("--ridge", type=float)
    p.add_argument("--name")
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("eval", help="single forward pass of a network at a point")
    p.add_argument("--network", required=True)
    p.add_argument("--x", help="comma-separated reals (reference/scnn)")
    p.add_argument("--x-bits", help="bit string, 1 = +1 (binary networks)")
    p.add_argument("--scnn", action="store_true", help="also evaluate the stochastic pass")
    p.add_argument("--M", type=int)
    p.add_argument("--mode", choices=["mux", "apc"])
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="Monte-Carlo convergence sweep over stream lengths")
    p.add_argument("--network", required=True)
    p.add_argument("--target")
    p.add_argument("--target-param", action="append", metavar="K=V")
    p.add_argument("--Ms", help="comma-separated ascending stream lengths")
    p.add_argument("--trials", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--grid-points", type=int)
    p.add_argument("--mode", choices=["mux", "apc"])
    p.add_argument("--jobs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--config")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("bound", help="bit-length bound, optionally validated by simulation")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--alpha-sum", type=float)
    p.add_argument("--validate", action="store_true")
    p.add_argument("--network")
    p.add_argument("--target")
    p.add_argument("--target-param", action="append", metavar="K=V")
    p.add_argument("--trials", type=int)
    p.add_argument("--grid-points", type=int)
    p.add_argument("--mode", choices=["mux", "apc"])
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_bound)

    p = sub.add_parser("convert", help="binarize, or transform BNN <-> SCNN streams")
    p.add_argument("--network", required=True)
    p.add_argument("--binarize", action="store_true")
    p.add_argument("--to-scnn", type=int, metavar="M")
    p.add_argument("--to-bnn", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("energy", help="closed-form gate-operation counts")
    p.add_argument("--n", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--N", type=int)
    p.add_argument("--bnn", action="store_true")
    p.add_argument("--m", type=int)
    p.add_argument("--mode", choices=["mux", "apc"])
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_energy)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
