"""Command-line interface.

Exit codes: 0 on success, 1 when a verification or bound check fails,
2 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__, bounds
from .data import DATA_DIR_ENV, load_dataset_dir, prepare_binary, write_prepared
from .exceptions import QNNStabError
from .exper import (
    FIGURE_DEFAULTS,
    INDEX,
    INIT,
    KNOBS,
    ExperimentConfig,
    ResultTable,
    derive_seed,
    make_datasets,
    stability_experiment,
    sweep,
    verify_suite,
)
from .loss import squared_error
from .qcore import default_observable
from .train import StepSchedule, empirical_risk, init_theta, make_rng, sgd_train, zero_one_error

SIG_DIGITS = 12
THEOREMS = ("kappa", "thm1", "cor1a", "cor1b", "thm2a", "thm2b", "cor2a", "cor2b", "thm3", "lem3")


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), f".{SIG_DIGITS}g")
    return str(value)


def _json_value(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(format(float(value), f".{SIG_DIGITS}g"))
        return v if math.isfinite(v) else str(v)
    return value


def render(table: ResultTable, fmt: str = "csv") -> str:
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue()
    if fmt == "json":
        records = [{k: _json_value(v) for k, v in zip(table.columns, row)} for row in table.rows]
        return json.dumps({"columns": list(table.columns), "records": records}, indent=2) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def emit_results(table: ResultTable, fmt: str = "csv", path=None) -> None:
    """Write ``table`` as CSV or JSON to ``path`` (stdout when ``None`` or ``-``)."""
    text = render(table, fmt)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _banner(command, config_hash, seed):
    print(
        f"# qnnstab {__version__} {command} | config {config_hash} | seed {seed} | "
        f"numpy {np.__version__} scipy {scipy.__version__} python {platform.python_version()}",
        file=sys.stderr,
    )


# ---------------------------------------------------------------- config handling

_CONFIG_FLAGS = {
    "n_qubits": int,
    "layers": int,
    "eta": float,
    "schedule": str,
    "T": int,
    "p": float,
    "m_train": int,
    "m_test": int,
    "class_a": int,
    "class_b": int,
    "label_noise": float,
    "sampling": str,
    "seed": int,
    "data_dir": str,
}


def read_kv_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for number, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise QNNStabError(f"{path}:{number}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _add_config_flags(parser):
    parser.add_argument("--config", help="flat key=value file; explicit flags override it")
    for name, kind in _CONFIG_FLAGS.items():
        flag = "--" + name.replace("_", "-")
        aliases = [flag] + (["--t"] if name == "T" else [])
        parser.add_argument(*aliases, dest=name, type=kind, default=argparse.SUPPRESS)


def _config(args, **defaults) -> ExperimentConfig:
    values = dict(defaults)
    if getattr(args, "config", None):
        values.update(read_kv_file(args.config))
    for name in _CONFIG_FLAGS:
        if name in args:
            values[name] = getattr(args, name)
    return ExperimentConfig.from_mapping(values)


def _output_flags(parser):
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--out", default=None, help="output path (default: stdout)")


# ---------------------------------------------------------------- subcommands


def cmd_verify(args):
    _banner("verify", f"cases={args.cases},kappa_scale={args.kappa_scale}", args.seed)
    report = verify_suite(args.seed, args.cases, args.kappa_scale)
    emit_results(report.table(), args.format, args.out)
    return 0 if report.passed else 1


def _trace(value):
    if value is None:
        return None
    path = Path(value)
    text = path.read_text() if path.exists() else value
    return [float(v) for v in text.replace("\n", ",").split(",") if v.strip()]


_QUERY_KEYS = {
    "alpha": float,
    "nu": float,
    "bigm": float,
    "k": int,
    "kg": int,
    "onorm": float,
    "m": int,
    "t": int,
    "eta": float,
    "c": float,
    "p": float,
    "delta": float,
    "sigma": float,
    "trace": _trace,
    "risk0": float,
    "risk_min": float,
}
_QUERY_DEFAULTS = dict(alpha=4.0, nu=2.0, bigm=4.0, onorm=1.0, p=0.0, delta=0.05)


def _query_values(args):
    values = dict(_QUERY_DEFAULTS)
    if args.query:
        for key, raw in read_kv_file(args.query).items():
            if key not in _QUERY_KEYS:
                raise QNNStabError(f"unknown query key {key!r}")
            values[key] = _QUERY_KEYS[key](raw)
    for key, kind in _QUERY_KEYS.items():
        given = getattr(args, key, None)
        if given is not None:
            values[key] = kind(given) if kind is _trace else given
    for key in ("k", "m", "t"):
        if key not in values:
            raise QNNStabError(f"bounds needs --{key}")
    if ("eta" in values) == ("c" in values):
        raise QNNStabError("give exactly one of --eta (constant steps) or --c (steps c/(t+1))")
    values.setdefault("kg", values["k"])
    return values


def _bound_query(values):
    schedule = StepSchedule.constant(values["eta"]) if "eta" in values else StepSchedule.inverse_decay(values["c"])
    return bounds.BoundQuery(
        alpha=values["alpha"],
        nu=values["nu"],
        big_m=values["bigm"],
        K=values["k"],
        Kg=values["kg"],
        o_norm=values["onorm"],
        m=values["m"],
        T=values["t"],
        schedule=schedule,
        p=values["p"],
        delta=values["delta"],
        sigma=values.get("sigma"),
        grad_norm_trace=values.get("trace"),
    )


def evaluate_bound(thm: str, q: bounds.BoundQuery, values: dict) -> dict:
    """Named results of one calculator; ``epsilon`` entries are certified, ``gen_bound`` entries indicative."""
    if thm == "kappa":
        return {"kappa": bounds.kappa(q)}
    if thm == "thm1":
        return {"epsilon": bounds.stability_general(q)}
    if thm == "cor1a":
        return {"epsilon": bounds.stability_const(q)}
    if thm == "cor1b":
        return {"epsilon": bounds.stability_decay(q)}
    if thm in ("thm2a", "thm2b"):
        mode = "const" if thm == "thm2a" else "decay"
        eps = bounds.stability_const(q) if mode == "const" else bounds.stability_decay(q)
        return {"epsilon": eps, "gen_bound_indicative": bounds.gen_bound(q, mode)}
    if thm in ("cor2a", "cor2b"):
        mode = "const" if thm == "cor2a" else "decay"
        return {"epsilon": bounds.noisy_stability(q, mode), "gen_bound_indicative": bounds.noisy_gen_bound(q, mode)}
    if thm == "thm3":
        return {"onavg_bound": bounds.onavg_bound(q)}
    if "risk0" not in values or "risk_min" not in values:
        raise QNNStabError("lem3 needs --risk0 and --risk-min")
    return {"init_link": bounds.init_link(q, values["risk0"], values["risk_min"])}


def cmd_bounds(args):
    values = _query_values(args)
    q = _bound_query(values)
    results = evaluate_bound(args.thm, q, values)
    for key in sorted(values):
        v = values[key]
        shown = f"[{len(v)} values]" if isinstance(v, list) else _fmt(v)
        print(f"{key} = {shown}")
    print(f"schedule = {q.schedule.kind}")
    for key, v in results.items():
        print(f"{key} = {v!r}")
    return 0


def cmd_train(args):
    config = _config(args)
    _banner("train", config.digest(), config.seed)
    train, test = make_datasets(config, args.replicate)
    circuit = config.circuit()
    obs = default_observable(config.n_qubits)
    spec = squared_error(obs.spectral_norm)
    theta0 = init_theta(circuit.K, make_rng(config.seed, args.replicate, INIT))
    record = sgd_train(
        circuit, theta0, train, config.step_schedule, config.sampling, config.T, config.p, spec,
        seed=derive_seed(config.seed, args.replicate, INDEX), obs=obs,
    )
    summary = {
        "K": circuit.K,
        "Kg": circuit.K_g,
        "train_loss": record.risk_trace[-1],
        "test_loss": empirical_risk(circuit, record.theta, test, obs, config.p, spec),
        "train_err01": zero_one_error(circuit, record.theta, train, obs, config.p),
        "test_err01": zero_one_error(circuit, record.theta, test, obs, config.p),
    }
    for key, v in summary.items():
        print(f"# {key} = {_fmt(v)}", file=sys.stderr)
    rows = tuple(
        (t, int(record.indices[t]) if t < record.T else -1, float(record.step_sizes[t]) if t < record.T else 0.0, record.risk_trace[t])
        for t in range(record.T + 1)
    )
    emit_results(ResultTable(("t", "index", "step_size", "train_risk"), rows), args.format, args.out)
    return 0


def cmd_stability(args):
    config = _config(args, layers=2, eta=1e-4, T=100, m_train=32)
    _banner("stability", config.digest(), config.seed)
    seeds = [derive_seed(config.seed, s) for s in range(args.seeds)]
    result = stability_experiment(config, seeds, replace_index=args.replace_index)
    print(f"# loss_gap_sup = {_fmt(result.loss_gap_sup)}", file=sys.stderr)
    print(f"# thm1_bound = {_fmt(result.thm1_bound)}", file=sys.stderr)
    print(f"# bound_ok = {_fmt(result.bound_ok)} recursion_ok = {_fmt(result.recursion_ok)}", file=sys.stderr)
    ok = np.concatenate([[True], result.per_step_recursion_ok])
    rows = tuple((t, result.delta_trace[t], result.delta_se[t], bool(ok[t])) for t in range(len(result.delta_trace)))
    emit_results(ResultTable(("t", "delta_mean", "delta_se", "recursion_ok"), rows), args.format, args.out)
    return 0 if result.bound_ok and result.recursion_ok else 1


def cmd_sweep(args):
    defaults = FIGURE_DEFAULTS[args.figure]
    config = _config(args, **defaults["config"])
    _banner(f"sweep {args.figure}", config.digest(), config.seed)
    grid = None
    if args.grid:
        kind = int if args.figure == "f1" else float
        grid = [kind(v) for v in args.grid.split(",") if v.strip()]
    result = sweep(args.figure, grid, config, args.replicates, n_jobs=args.jobs)
    emit_results(result.table(), args.format, args.out)
    return 0


def cmd_data_prepare(args):
    data_dir = args.data_dir
    raw = load_dataset_dir(data_dir)
    train, test = prepare_binary(raw, args.class_a, args.class_b, args.d, args.m_train, args.m_test, args.seed)
    write_prepared(args.out, train, test)
    print(f"# wrote {train.m} train and {test.m} test examples to {args.out}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qnnstab", description="QNN stability toolkit")
    parser.add_argument("--version", action="version", version=f"qnnstab {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("verify", help="fuzz-check every inequality of the stability analysis")
    p.add_argument("--cases", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kappa-scale", type=float, default=1.0, help="scale the smoothness constant (negative control)")
    _output_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bounds", help="evaluate a stability or generalization bound")
    p.add_argument("--thm", choices=THEOREMS, required=True)
    p.add_argument("--query", help="key=value file with the constants; flags override it")
    for key, kind in _QUERY_KEYS.items():
        flag = "--" + key.replace("_", "-")
        p.add_argument(flag, dest=key, type=kind if kind is not _trace else str, default=None)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("train", help="one seeded SGD run; emits the risk trajectory")
    _add_config_flags(p)
    p.add_argument("--replicate", type=int, default=0)
    _output_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("stability", help="paired runs on neighbouring datasets")
    _add_config_flags(p)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--replace-index", type=int, default=0)
    _output_flags(p)
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("sweep", help="generalization-gap sweep for one figure protocol")
    p.add_argument("figure", choices=sorted(KNOBS))
    p.add_argument("--grid", help="comma-separated knob values")
    p.add_argument("--replicates", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    _add_config_flags(p)
    _output_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("data", help="dataset utilities")
    data_sub = p.add_subparsers(dest="data_command", metavar="action")
    q = data_sub.add_parser("prepare", help="IDX images -> prepared binary-task CSV")
    q.add_argument("--data-dir", default=None, help=f"IDX directory (default: ${DATA_DIR_ENV} or the bundled sample)")
    q.add_argument("--class-a", type=int, default=0)
    q.add_argument("--class-b", type=int, default=1)
    q.add_argument("--d", type=int, default=4)
    q.add_argument("--m-train", type=int, default=64)
    q.add_argument("--m-test", type=int, default=256)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_data_prepare)
    p.set_defaults(func=None, parser=p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    func = getattr(args, "func", None)
    if func is None:
        (getattr(args, "parser", None) or parser).print_help(sys.stderr)
        return 2
    try:
        return func(args)
    except (QNNStabError, ValueError) as exc:
        print(f"qnnstab: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"qnnstab: I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
