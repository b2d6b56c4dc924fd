"""Command-line entry point: search, eval, analyze, seed-sweep, synth.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 model-file
mismatch. `DAGEVO_LOG` (error|info|debug) picks the log level; `--jobs N`
evaluates individuals in a process pool with a deterministic merge, so runs
are reproducible for any worker count.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, data as data_io
from .dag import dag_from_obj, node_to_obj, serialize
from .errors import (
    ConfigError,
    DagevoError,
    DegenerateSeriesError,
    DomainError,
    InsufficientDataError,
    MissingValueError,
    ParseError,
)
from .evaluation import SplitEvaluator, final_test, naive_mase, split_and_window
from .evolution import Individual, evolve
from .nn.network import build_network
from .space import SearchSpace

log = logging.getLogger("dagevo")

MODEL_FORMAT_VERSION = 1
HEAD_INDEX = -1  # node_index used for output-head weights in model files


class ModelFileError(DagevoError):
    """Model file violates the export schema."""


def _configure_logging():
    level_name = os.environ.get("DAGEVO_LOG", "info").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level_name not in levels:
        log.warning("unknown DAGEVO_LOG=%r, using info", level_name)
    logging.basicConfig(
        level=levels.get(level_name, logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def export_model(network, valid_mase: float | None = None) -> str:
    """Trained-model text form: the graph schema plus flat weight arrays."""
    weights = []
    for key, var in network.parameters().items():
        node_index = HEAD_INDEX if key[0] == "head" else key[0]
        weights.append(
            {
                "node_index": node_index,
                "name": key[1],
                "shape": list(var.data.shape),
                "values": var.data.ravel().tolist(),
            }
        )
    obj = {
        "format_version": MODEL_FORMAT_VERSION,
        "nodes": [node_to_obj(n) for n in network.dag.hidden],
        "matrix": ["".join("1" if b else "0" for b in row) for row in network.dag.adj.bits],
        "seed": network.seed,
        "lag": network.lag,
        "channels": network.in_channels,
        "horizon": network.horizon,
        "n_outputs": network.n_outputs,
        "weights": weights,
    }
    if valid_mase is not None:
        obj["valid_mase"] = valid_mase
    return json.dumps(obj, indent=2)


def load_model(path, space: SearchSpace | None = None) -> dict:
    """Parse a model file, rebuild its network and verify every weight shape."""
    space = space or SearchSpace.default()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelFileError(f"cannot open model {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"model is not valid JSON: {exc.msg} (line {exc.lineno})") from exc
    if obj.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFileError(f"unsupported format_version {obj.get('format_version')!r}")
    for key in ("nodes", "matrix", "seed", "lag", "channels", "horizon", "n_outputs", "weights"):
        if key not in obj:
            raise ModelFileError(f"model is missing field {key!r}")
    try:
        dag = dag_from_obj(obj, space)
    except ParseError as exc:
        raise ModelFileError(f"bad graph in model: {exc}") from exc
    network = build_network(
        dag, (obj["lag"], obj["channels"]), (obj["horizon"], obj["n_outputs"]), obj["seed"]
    )
    params = network.parameters()
    listed = {}
    for entry in obj["weights"]:
        key = (entry.get("node_index"), entry.get("name"))
        key = ("head", key[1]) if key[0] == HEAD_INDEX else key
        if key not in params:
            raise ModelFileError(f"unexpected weight entry {entry.get('node_index')}/{entry.get('name')}")
        expected = params[key].data
        values = entry.get("values", [])
        if tuple(entry.get("shape", ())) != expected.shape or len(values) != expected.size:
            raise ModelFileError(
                f"weight {key} has shape {entry.get('shape')}/{len(values)} values, "
                f"expected {list(expected.shape)}/{expected.size}"
            )
        listed[key] = np.array(values, dtype=np.float64).reshape(expected.shape)
    missing = set(params) - set(listed)
    if missing:
        raise ModelFileError(f"model is missing weights for {sorted(missing)}")
    for key, arr in listed.items():
        params[key].data = arr
    return {"dag": dag, "network": network, "meta": obj}


def _load_splits(cfg: data_io.RunConfig):
    dataset = cfg.load_dataset()
    return split_and_window(
        dataset,
        cfg.data.lag,
        cfg.data.horizon,
        cfg.data.valid_fraction,
        cfg.data.test_fraction,
    )


def cmd_search(args) -> int:
    cfg = data_io.parse_config(args.config)
    out_dir = Path(args.out) if args.out else Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    splits = _load_splits(cfg)
    evaluator = SplitEvaluator(splits, cfg.train)
    started = time.time()
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            best, logs = evolve(cfg.evolution, evaluator, map_fn=pool.map)
    else:
        best, logs = evolve(cfg.evolution, evaluator)
    elapsed = time.time() - started
    analysis.report(logs, out_dir)
    test_score = final_test(best, splits, cfg.train) if len(splits.test) else float("nan")
    naive_score = naive_mase(splits.test) if len(splits.test) else float("nan")
    channels = splits.train.inputs.shape[-1]
    network = build_network(
        best.dag, (splits.lag, channels), (splits.horizon, splits.train.targets.shape[-1]), best.seed
    )
    (out_dir / "best_model.json").write_text(
        export_model(network, valid_mase=best.fitness), encoding="utf-8"
    )
    with open(out_dir / "result.csv", "w", encoding="utf-8") as fh:
        fh.write("best_valid_mase,test_mase,naive_test_mase,best_nodes,best_seed\n")
        fh.write(
            f"{best.fitness!r},{test_score!r},{naive_score!r},{len(best.dag.hidden)},{best.seed}\n"
        )
        fh.write(f"# meta: elapsed_seconds={elapsed:.3f}\n")
    log.info(
        "search done: valid=%.6g test=%.6g naive=%.6g -> %s",
        best.fitness, test_score, naive_score, out_dir,
    )
    return 0


def cmd_eval(args) -> int:
    cfg = data_io.parse_config(args.config)
    model = load_model(args.model)
    if args.data:
        cfg = replace(cfg, data=replace(cfg.data, kind="csv", path=args.data))
    meta = model["meta"]
    if meta["lag"] != cfg.data.lag or meta["horizon"] != cfg.data.horizon:
        raise ModelFileError(
            f"model was built for lag={meta['lag']}, horizon={meta['horizon']}; "
            f"config asks lag={cfg.data.lag}, horizon={cfg.data.horizon}"
        )
    splits = _load_splits(cfg)
    best = Individual(dag=model["dag"], seed=meta["seed"], fitness=None, id=0)
    score = final_test(best, splits, cfg.train)
    print(f"test_mase,{score!r}")
    if args.naive:
        print(f"naive_test_mase,{naive_mase(splits.test)!r}")
    return 0


def cmd_analyze(args) -> int:
    model = load_model(args.model)
    meta = model["meta"]
    ind = analysis.indicators(model["dag"], meta["channels"], meta["n_outputs"])
    lines = [",".join(analysis.INDICATOR_COLUMNS), ",".join(str(v) for v in ind.row())]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_seed_sweep(args) -> int:
    cfg = data_io.parse_config(args.config)
    model = load_model(args.model)
    meta = model["meta"]
    splits = _load_splits(cfg)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            result = analysis.seed_sweep(
                model["dag"], meta["seed"], splits, cfg.train, args.seeds, map_fn=pool.map
            )
    else:
        result = analysis.seed_sweep(model["dag"], meta["seed"], splits, cfg.train, args.seeds)
    if args.out:
        analysis.write_sweep(result, args.out)
    else:
        print("seed,mase")
        for entry in result.entries:
            print(f"{entry.seed},{entry.score!r}")
    log.info(
        "sweep over %d seeds: min=%.6g median=%.6g max=%.6g",
        args.seeds, result.minimum, result.median, result.maximum,
    )
    return 0


def cmd_synth(args) -> int:
    params = {
        "amplitude": args.amplitude,
        "period": args.period,
        "sigma": args.sigma,
        "phi": args.phi,
        "slope": args.slope,
    }
    dataset = data_io.synth(args.kind, params, args.t, args.seed)
    data_io.write_csv(dataset, args.out)
    log.info("wrote %d rows to %s", dataset.length, args.out)
    return 0


def cmd_export_dag(args) -> int:
    model = load_model(args.model)
    text = serialize(model["dag"])
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text + "\n")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    keys = "\n".join(
        f"  {section}.{name}" for section, names in data_io.config_keys().items() for name in names
    )
    parser = argparse.ArgumentParser(
        prog="dagevo",
        description="Evolve DAG-encoded neural networks for time-series forecasting.",
        epilog="Config keys:\n" + keys,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run an evolutionary search end to end")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="output directory (default: output.dir from config)")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.set_defaults(fn=cmd_search)

    p = sub.add_parser("eval", help="retrain an exported model and report its test error")
    p.add_argument("--model", required=True)
    p.add_argument("--data", default=None, help="CSV path overriding the config dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--naive", action="store_true", help="also print the persistence baseline")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("analyze", help="print structural indicators of an exported model")
    p.add_argument("--model", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("seed-sweep", help="re-train a model under many training seeds")
    p.add_argument("--model", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--out", default=None)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.set_defaults(fn=cmd_seed_sweep)

    p = sub.add_parser("synth", help="write a synthetic series to CSV")
    p.add_argument("--kind", choices=data_io.SYNTH_KINDS, default="sine")
    p.add_argument("--t", type=int, default=600)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--amplitude", type=float, default=1.0)
    p.add_argument("--period", type=float, default=24.0)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--phi", type=float, default=0.8)
    p.add_argument("--slope", type=float, default=0.01)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("export-dag", help="extract the bare graph from a model file")
    p.add_argument("--model", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_export_dag)

    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, MissingValueError, InsufficientDataError, DegenerateSeriesError,
            DomainError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except ModelFileError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
