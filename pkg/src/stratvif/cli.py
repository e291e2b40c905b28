"""Command-line front end.

Exit codes: 0 success, 1 verification failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from pathlib import Path

import yaml
from pydantic import ValidationError

from . import __version__, figures
from .design import Design
from .errors import DomainError
from .linmod import Model
from .montecarlo import (
    DEFAULT_REPLICATES,
    ScenarioConfig,
    run_scenario,
    variance_decomposition,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
Z_LIMIT = 4.0
APPROX_REL_LIMIT = 0.20


class UsageError(Exception):
    pass


def content_hash(data: bytes) -> str:
    """Git blob hash of ``data``."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def make_manifest(argv, config, seed, replicates, data: bytes, started: float) -> dict:
    return {
        "command": list(argv),
        "config": config,
        "seed": seed,
        "replicates": replicates,
        "content_hash": content_hash(data),
        "wall_time_s": round(time.perf_counter() - started, 3),
        "version": __version__,
    }


def _csv_bytes(columns, rows) -> bytes:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue().encode()


def _json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


def _emit(data: bytes, manifest: dict, out: str | None, fmt: str):
    if fmt == "json":
        doc = json.loads(data)
        doc["manifest"] = manifest
        payload = _json_bytes(doc)
        if out:
            Path(out).write_bytes(payload)
        else:
            sys.stdout.write(payload.decode())
        return
    if out:
        Path(out).write_bytes(data)
        Path(out + ".manifest.json").write_bytes(_json_bytes(manifest))
    else:
        sys.stdout.write(data.decode())


def _workers(value):
    if value == 0:
        return os.cpu_count() or 1
    return value


def cmd_figure(args, argv) -> int:
    started = time.perf_counter()
    fid = args.id
    params = {}
    if fid == 1:
        params["rhos"] = args.rho
        rows = figures.figure1(args.rho)
    elif fid == 2:
        params["ns"] = args.n
        rows = figures.figure2(args.n)
    elif fid == 3:
        params["ns"] = args.n
        rows = figures.figure3(args.n)
    elif fid == 4:
        params = {
            "ns": args.n, "replicates": args.replicates, "seed": args.seed,
            "block_size": args.block_size, "predicted_median": args.median,
        }
        rows = figures.figure4(workers=_workers(args.workers), **params)
    else:
        params["max_m"] = args.max_m
        rows = figures.figure5(args.max_m)
    config = {"figure": fid, **params}
    if args.format == "json":
        data = _json_bytes({"columns": figures.COLUMNS[fid], "rows": rows})
    else:
        data = _csv_bytes(figures.COLUMNS[fid], rows)
    manifest = make_manifest(argv, config, params.get("seed"), params.get("replicates"), data, started)
    _emit(data, manifest, args.out, args.format)
    return EXIT_OK


def cmd_verify(args, argv) -> int:
    started = time.perf_counter()
    cells = []
    configs = []
    for n in args.n:
        for design in args.design:
            for model in args.model:
                try:
                    configs.append(ScenarioConfig(
                        n=n, design=design, model=model, replicates=args.replicates,
                        seed=args.seed, block_size=args.block_size, predicted_median=args.median,
                    ))
                except ValidationError as exc:
                    raise UsageError(f"cell N={n} {design} {model}: {_first_error(exc)}") from exc
    failed = False
    for cfg in configs:
        rep = run_scenario(cfg, workers=_workers(args.workers))
        cell = {
            "n": cfg.n, "design": cfg.design.value, "model": cfg.model.value,
            "theory": rep.theory_vif, "approximate": rep.theory_is_approximation,
            "mean_vif": rep.mean_vif, "mc_se": rep.mc_se_vif,
            "singular": rep.singular_count, "z": None, "rel_err": None,
        }
        if rep.mean_vif is None or not rep.mc_se_vif:
            ok = False
        elif rep.theory_is_approximation:
            cell["rel_err"] = (rep.mean_vif - 1) / (rep.theory_vif - 1) - 1
            ok = abs(cell["rel_err"]) <= APPROX_REL_LIMIT
        else:
            cell["z"] = (rep.mean_vif - rep.theory_vif) / rep.mc_se_vif
            ok = abs(cell["z"]) <= Z_LIMIT
        cell["pass"] = ok
        failed |= not ok
        cells.append(cell)
    if args.format == "json":
        data = _json_bytes({"cells": cells})
    else:
        data = _csv_bytes(list(cells[0]), cells)
    config = {
        "n": args.n, "design": args.design, "model": args.model, "replicates": args.replicates,
        "seed": args.seed, "block_size": args.block_size, "predicted_median": args.median,
    }
    manifest = make_manifest(argv, config, args.seed, args.replicates, data, started)
    if args.out:
        _emit(data, manifest, args.out, args.format)
    _print_table(cells, sys.stdout)
    return EXIT_FAIL if failed else EXIT_OK


def _print_table(cells, stream):
    head = f"{'N':>5} {'design':<11}{'model':<6}{'theory':>9}{'mean':>10}{'mc_se':>10}{'z':>8}{'relerr':>8}{'sing':>6}  status"
    print(head, file=stream)
    for c in cells:
        z = f"{c['z']:.2f}" if c["z"] is not None else "-"
        rel = f"{c['rel_err']:.3f}" if c["rel_err"] is not None else "-"
        mean = f"{c['mean_vif']:.5f}" if c["mean_vif"] is not None else "-"
        se = f"{c['mc_se']:.5f}" if c["mc_se"] is not None else "-"
        tag = "~" if c["approximate"] else " "
        print(
            f"{c['n']:>5} {c['design']:<11}{c['model']:<6}{c['theory']:>8.5f}{tag}{mean:>10}{se:>10}"
            f"{z:>8}{rel:>8}{c['singular']:>6}  {'PASS' if c['pass'] else 'FAIL'}",
            file=stream,
        )


def load_config_file(path) -> dict:
    text = Path(path).read_text()
    doc = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: expected a mapping at top level")
    # accept a previous run's output or its manifest
    if isinstance(doc.get("manifest"), dict):
        doc = doc["manifest"]
    if "command" in doc and isinstance(doc.get("config"), dict):
        doc = doc["config"]
    return dict(doc)


def _run_config(args) -> dict:
    cfg = load_config_file(args.config) if args.config else {}
    flags = {
        "n": args.n, "design": args.design, "block_size": args.block_size,
        "predicted_median": args.median, "model": args.model,
        "replicates": args.replicates, "seed": args.seed,
    }
    cfg.update({k: v for k, v in flags.items() if v is not None})
    outcome_flags = {
        "rho": args.rho, "link": args.link, "coeffs": args.coeffs,
        "treatment_effect": args.effect,
    }
    given = {k: v for k, v in outcome_flags.items() if v is not None}
    if given:
        outcome = dict(cfg.get("outcome") or {})
        outcome.update(given)
        cfg["outcome"] = outcome
    return cfg


def _first_error(exc: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(p) for p in e['loc']) or 'config'}: {e['msg']}" for e in exc.errors()
    )


def cmd_run(args, argv) -> int:
    started = time.perf_counter()
    raw = _run_config(args)
    try:
        config = ScenarioConfig.model_validate(raw)
    except ValidationError as exc:
        raise UsageError(f"invalid config: {_first_error(exc)}") from exc
    workers = _workers(args.workers)
    body = {}
    if config.outcome is not None:
        dec = variance_decomposition(config, workers=workers)
        body["report"] = dec.scenario.model_dump(mode="json")
        body["decomposition"] = dec.model_dump(mode="json", exclude={"scenario"})
    else:
        body["report"] = run_scenario(config, workers=workers).model_dump(mode="json")
    snapshot = config.model_dump(mode="json")
    if args.format == "csv":
        data = _csv_bytes(list(body["report"]), [body["report"]])
    else:
        data = _json_bytes(body)
    manifest = make_manifest(argv, snapshot, config.seed, config.replicates, data, started)
    _emit(data, manifest, args.out, args.format)
    return EXIT_OK


def _float_list(text):
    return [float(v) for v in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stratvif", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, *, list_n, defaults):
        if list_n:
            sp.add_argument("--n", type=int, nargs="+", default=defaults.get("n"))
        else:
            sp.add_argument("--n", type=int, default=None)
        sp.add_argument("--block-size", type=int, default=defaults.get("block_size"))
        sp.add_argument("--median", type=float, default=defaults.get("median"),
                        help="predicted median used for stratifying")
        sp.add_argument("--replicates", type=int, default=defaults.get("replicates"))
        sp.add_argument("--seed", type=int, default=defaults.get("seed"))
        sp.add_argument("--workers", type=int, default=1, help="processes; 0 = all CPUs")
        sp.add_argument("--out", default=None)
        sp.add_argument("--format", choices=["csv", "json"], default=defaults.get("format", "csv"))

    fdef = {"block_size": 4, "median": 0.0, "replicates": DEFAULT_REPLICATES, "seed": 0}
    f = sub.add_parser("figure", help="write the data behind figure 1-5")
    f.add_argument("id", type=int, choices=[1, 2, 3, 4, 5])
    common(f, list_n=True, defaults=fdef)
    f.add_argument("--rho", type=float, nargs="+", default=None, help="rho grid (figure 1)")
    f.add_argument("--max-m", type=int, default=figures.DEFAULT_MAX_M, help="highest power (figure 5)")

    v = sub.add_parser("verify", help="compare empirical and theoretical VIFs")
    common(v, list_n=True, defaults={**fdef, "n": [20, 50, 100, 200]})
    v.add_argument("--design", nargs="+", choices=[d.value for d in Design],
                   default=[d.value for d in Design])
    v.add_argument("--model", nargs="+", choices=["B", "D"], default=["B", "D"])

    r = sub.add_parser("run", help="run one scenario and print a JSON report")
    r.add_argument("--config", default=None, help="JSON or YAML scenario file")
    common(r, list_n=False, defaults={"format": "json"})
    r.add_argument("--design", choices=[d.value for d in Design], default=None)
    r.add_argument("--model", choices=[m.value for m in Model], default=None)
    r.add_argument("--rho", type=float, default=None)
    r.add_argument("--link", choices=["linear", "poly", "step"], default=None)
    r.add_argument("--coeffs", type=_float_list, default=None,
                   help="polynomial link coefficients, constant first, e.g. 0,1,0,0.5")
    r.add_argument("--effect", type=float, default=None, help="treatment effect")
    return p


COMMANDS = {"figure": cmd_figure, "verify": cmd_verify, "run": cmd_run}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args, ["stratvif", *argv])
    except (UsageError, DomainError, ValidationError) as exc:
        msg = _first_error(exc) if isinstance(exc, ValidationError) else str(exc)
        parser.print_usage(sys.stderr)
        print(f"stratvif {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
