"""Command-line pipeline: each subcommand reads artifacts and writes a
directory containing its outputs plus a run manifest.

Exit codes: 0 success, 1 usage error, 2 data or convergence error.  Every
run is deterministic given --seed, and manifests contain content hashes
only (no timestamps or absolute paths), so rerunning a command with the
same inputs reproduces every output byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ShotmixError
from .evaluation import (
    PipelineSettings,
    build_stability_report,
    save_report_csv,
    save_report_json,
    save_sensitivity,
    sensitivity_grid,
)
from .geometry import DEFAULT_FRAME
from .metrics import (
    compose_period_key,
    fit_period_weights,
    load_metric_table,
    parse_period_key,
    player_table,
    save_metric_table,
)
from .mixture import (
    GridSpec,
    fit_mixture,
    load_model,
    model_hash,
    prune_and_refit,
    save_model,
)
from .players import (
    HierarchyConfig,
    check_model_hash,
    load_player_weights,
    save_player_weights,
)
from .preprocess import (
    PipelineConfig,
    preprocess_file,
    read_canonical,
    shots_array,
    write_canonical,
    write_log,
)
from .simulate import (
    SimulationSpec,
    default_generator,
    save_ground_truth,
    simulate_corpus,
)
from .valuation import (
    component_values,
    fit_postxg,
    load_postxg,
    load_values,
    save_postxg,
    save_values,
)


class _Parser(argparse.ArgumentParser):
    """argparse defaults to exit code 2 on usage errors; we reserve 2 for
    data errors, so usage problems exit 1 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(outdir: Path, command: str, seed, config_path, inputs: dict,
                    artifact_names: list[str]) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": seed,
        "config_sha256": None if config_path is None else _sha256_file(Path(config_path)),
        "inputs": {role: {"name": Path(p).name, "sha256": _sha256_file(Path(p))}
                   for role, p in inputs.items()},
        "artifacts": {name: _sha256_file(outdir / name) for name in sorted(artifact_names)},
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _outdir(args) -> Path:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args) -> PipelineConfig:
    if getattr(args, "config", None) is None:
        return PipelineConfig()
    with open(args.config) as fh:
        return PipelineConfig.from_dict(json.load(fh))


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip() != ""]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip() != ""]


def _shots_per_player(text: str):
    if ":" in text:
        lo, hi = text.split(":", 1)
        return (int(lo), int(hi))
    return int(text)


# ---------------------------------------------------------------------------
# subcommand bodies


def _cmd_preprocess(args) -> int:
    out = _outdir(args)
    config = _load_config(args)
    result = preprocess_file(args.input, config)
    write_canonical(out / "shots.jsonl", result.shots)
    write_log(out / "rejections.csv", result.rejections)
    write_log(out / "anomalies.csv", result.anomalies, label="code")
    _write_manifest(out, "preprocess", None, args.config, {"input": args.input},
                    ["shots.jsonl", "rejections.csv", "anomalies.csv"])
    print(f"kept {len(result.shots)} shots, rejected {len(result.rejections)}, "
          f"{len(result.anomalies)} anomalies")
    return 0


def _cmd_simulate(args) -> int:
    out = _outdir(args)
    inputs = {}
    if args.model is not None:
        model = load_model(args.model)
        post = load_postxg(args.postxg)
        inputs = {"model": args.model, "postxg": args.postxg}
    else:
        if args.postxg is not None:
            raise ShotmixError("--postxg requires --model")
        model, post = default_generator()
    spec = SimulationSpec(
        model=model,
        postxg_model=post,
        n_players=args.players,
        shots_per_player=_shots_per_player(args.shots_per_player),
        alpha=args.alpha,
        seed=args.seed,
        season_id=args.season,
    )
    shots, truth = simulate_corpus(spec)
    write_canonical(out / "shots.jsonl", shots)
    save_ground_truth(out / "ground_truth.json", truth)
    _write_manifest(out, "simulate", args.seed, None, inputs,
                    ["shots.jsonl", "ground_truth.json"])
    print(f"simulated {len(shots)} shots for {spec.n_players} players")
    return 0


def _cmd_fit_global(args) -> int:
    out = _outdir(args)
    shots = read_canonical(args.input)
    spec = GridSpec(n_y=args.grid_ny, n_z=args.grid_nz, lambdas=tuple(_float_list(args.lambdas)))
    model = fit_mixture(shots_array(shots), spec, DEFAULT_FRAME, args.prior_alpha)
    save_model(out / "model.json", model)
    _write_manifest(out, "fit-global", None, None, {"input": args.input}, ["model.json"])
    live = int(np.sum(model.weights > 0))
    print(f"fit {model.n_components} components on {len(shots)} shots "
          f"({live} with nonzero weight, {model.diagnostics.iterations} iterations)")
    return 0


def _cmd_prune(args) -> int:
    out = _outdir(args)
    model = load_model(args.input)
    shots = read_canonical(args.shots)
    trimmed = prune_and_refit(model, shots_array(shots), args.threshold, args.prior_alpha)
    save_model(out / "model.json", trimmed)
    _write_manifest(out, "prune", None, None,
                    {"model": args.input, "shots": args.shots}, ["model.json"])
    print(f"kept {trimmed.n_components} of {model.n_components} components")
    return 0


def _cmd_fit_players(args) -> int:
    out = _outdir(args)
    shots = read_canonical(args.input)
    model = load_model(args.model)
    weights = fit_period_weights(shots, model, HierarchyConfig(alpha=args.alpha))
    named = {compose_period_key(key): pw for key, pw in weights.items()}
    save_player_weights(out / "players.json", named, model, args.alpha)
    _write_manifest(out, "fit-players", None, None,
                    {"input": args.input, "model": args.model}, ["players.json"])
    print(f"fit weights for {len(named)} player periods")
    return 0


def _cmd_fit_postxg(args) -> int:
    out = _outdir(args)
    shots = read_canonical(args.input)
    frame = DEFAULT_FRAME
    on_frame = [s for s in shots
                if abs(s.end_point.y) <= frame.width / 2.0
                and 0.0 <= s.end_point.z <= frame.height]
    model = fit_postxg(
        shots_array(on_frame),
        np.array([s.is_goal for s in on_frame], dtype=float),
        args.ridge,
    )
    save_postxg(out / "postxg.json", model)
    _write_manifest(out, "fit-postxg", None, None, {"input": args.input}, ["postxg.json"])
    print(f"fit goal-probability model on {len(on_frame)} on-frame shots")
    return 0


def _cmd_values(args) -> int:
    out = _outdir(args)
    model = load_model(args.model)
    post = load_postxg(args.postxg)
    values = component_values(model.components, post, model.frame,
                              n_samples=args.n_samples, base_seed=args.seed)
    save_values(out / "values.json", values, model, args.n_samples, args.seed)
    _write_manifest(out, "values", args.seed, None,
                    {"model": args.model, "postxg": args.postxg}, ["values.json"])
    print(f"valued {len(values)} components at {args.n_samples} draws each")
    return 0


def _cmd_metrics(args) -> int:
    out = _outdir(args)
    shots = read_canonical(args.input)
    model = load_model(args.model)
    values, values_hash = load_values(args.values)
    check_model_hash(values_hash, model, "values file")
    named, players_hash, _alpha = load_player_weights(args.players)
    check_model_hash(players_hash, model, "players file")
    weights = {parse_period_key(key): pw for key, pw in named.items()}
    table = player_table(shots, weights, model, values)
    save_metric_table(out / "metrics.csv", table)
    _write_manifest(out, "metrics", None, None,
                    {"input": args.input, "model": args.model,
                     "values": args.values, "players": args.players},
                    ["metrics.csv"])
    print(f"wrote {len(table.rows)} metric rows")
    return 0


def _cmd_evaluate(args) -> int:
    out = _outdir(args)
    table = load_metric_table(args.input)
    report = build_stability_report(
        table, _int_list(args.thresholds), n_bootstrap=args.bootstrap,
        seed=args.seed, method=args.method,
    )
    save_report_json(out / "stability.json", report)
    save_report_csv(out / "stability.csv", report)
    _write_manifest(out, "evaluate", args.seed, None, {"input": args.input},
                    ["stability.json", "stability.csv"])
    populated = sum(1 for t in report.thresholds if t.correlations is not None)
    print(f"evaluated {populated} of {len(report.thresholds)} thresholds")
    return 0


def _cmd_sensitivity(args) -> int:
    out = _outdir(args)
    config = _load_config(args)
    from .preprocess import _iter_raw_rows, parse_record

    records = []
    skipped = 0
    for raw in _iter_raw_rows(Path(args.input)):
        try:
            records.append(parse_record(raw))
        except (ValueError, KeyError):
            skipped += 1
    settings = PipelineSettings(
        n_value_samples=args.n_samples,
        thresholds=tuple(_int_list(args.thresholds)),
        n_bootstrap=args.bootstrap,
        method=args.method,
    )
    results = sensitivity_grid(
        records, _float_list(args.distance_thresholds), (True, False),
        config, settings, base_seed=args.seed,
    )
    save_sensitivity(out, results)
    artifact_names = ["combined.csv"]
    for path in sorted(out.rglob("*")):
        if path.is_file() and path.name != "manifest.json" and path.name != "combined.csv":
            artifact_names.append(str(path.relative_to(out)))
    _write_manifest(out, "sensitivity", args.seed, args.config,
                    {"input": args.input}, artifact_names)
    ok = sum(1 for r in results.values() if not hasattr(r, "error"))
    print(f"ran {len(results)} cells ({ok} succeeded, {skipped} rows skipped at parse)")
    return 0


# ---------------------------------------------------------------------------
# parser wiring


def build_parser() -> _Parser:
    parser = _Parser(prog="shotmix", description=__doc__)
    parser.add_argument("--version", action="version", version=f"shotmix {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="clean raw pitch events into canonical shots")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("simulate", help="generate a synthetic corpus with ground truth")
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--players", type=int, default=100)
    p.add_argument("--shots-per-player", default="100",
                   help="fixed count or lo:hi range, e.g. 80:120")
    p.add_argument("--alpha", type=float, default=30.0)
    p.add_argument("--season", default="sim")
    p.add_argument("--model", default=None, help="fitted model JSON (default: demo generator)")
    p.add_argument("--postxg", default=None, help="postxg JSON (required with --model)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit-global", help="fit grid weights on a canonical corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--prior-alpha", type=float, default=0.5)
    p.add_argument("--grid-ny", type=int, default=11)
    p.add_argument("--grid-nz", type=int, default=6)
    p.add_argument("--lambdas", default="1.0,3.8")
    p.set_defaults(func=_cmd_fit_global)

    p = sub.add_parser("prune", help="drop low-weight components and refit")
    p.add_argument("--input", required=True, help="model JSON")
    p.add_argument("--shots", required=True, help="canonical corpus for the refit")
    p.add_argument("--output", required=True)
    p.add_argument("--threshold", type=float, default=0.01)
    p.add_argument("--prior-alpha", type=float, default=0.5)
    p.set_defaults(func=_cmd_prune)

    p = sub.add_parser("fit-players", help="fit shrunk per-period player weights")
    p.add_argument("--input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--alpha", type=float, default=30.0)
    p.set_defaults(func=_cmd_fit_players)

    p = sub.add_parser("fit-postxg", help="fit the on-frame goal probability model")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--ridge", type=float, default=1e-4)
    p.set_defaults(func=_cmd_fit_postxg)

    p = sub.add_parser("values", help="Monte Carlo component values")
    p.add_argument("--model", required=True)
    p.add_argument("--postxg", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--n-samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_values)

    p = sub.add_parser("metrics", help="per player-period metric table")
    p.add_argument("--input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--values", required=True)
    p.add_argument("--players", required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("evaluate", help="split-half stability report")
    p.add_argument("--input", required=True, help="metric table CSV")
    p.add_argument("--output", required=True)
    p.add_argument("--thresholds", default="0,10,20,40")
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--method", choices=("pearson", "spearman"), default="pearson")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sensitivity", help="full pipeline over preprocessing variants")
    p.add_argument("--input", required=True, help="raw events file")
    p.add_argument("--output", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--distance-thresholds", default="4,6,8")
    p.add_argument("--thresholds", default="0,10,20,40")
    p.add_argument("--bootstrap", type=int, default=1000)
    p.add_argument("--n-samples", type=int, default=100_000)
    p.add_argument("--method", choices=("pearson", "spearman"), default="pearson")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_sensitivity)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ShotmixError, OSError, json.JSONDecodeError) as exc:
        print(f"shotmix {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
