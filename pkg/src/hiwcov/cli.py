"""Command-line front end.

Subcommands
-----------
study     run the risk simulation and write the risks CSV
estimate  estimate a covariance matrix from a CSV data file
chain     dump the per-iteration trace of one chain

Exit codes: 0 success, 2 configuration or input-data error, 3 I/O error,
4 sampler failure. Human messages go to stderr; stdout and files carry
machine output only.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import bayes_estimate_L1, bayes_estimate_L2
from .gibbs import ChainDiverged, QuadratureDegenerate, SamplerConfig, run_chain, write_trace_csv
from .matrix_core import NotPositiveDefinite, write_matrix_csv
from .models import ModelSpec, Variant
from .rand_dist import InvalidParameter, RngStream, scatter_matrix
from .study import MATRIX_IDS, ReplicationError, StudyConfig, run_study

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_CHAIN = 4

CONFIG_KEYS = ("iterations", "burn_in", "seed", "replications", "delta", "dk_bound",
               "matrices", "n_values", "model", "loss", "output")

DEFAULTS = {
    "iterations": 20_000,
    "burn_in": 5_000,
    "seed": 20100101,
    "replications": 100,
    "delta": 2,
    "dk_bound": 1e6,
    "matrices": list(MATRIX_IDS),
    "n_values": [5, 100],
    "model": "model1",
    "loss": "L2",
    "output": None,
}

log = logging.getLogger("hiwcov")


class ConfigError(Exception):
    def __init__(self, field: str, message: str):
        super().__init__(f"config field {field!r}: {message}")
        self.field = field


class DataError(Exception):
    pass


def load_config_file(path: str | os.PathLike) -> dict:
    """Read a JSON config. A metadata file's ``config`` block is accepted too."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"{path} is not valid JSON ({exc})") from None
    if isinstance(data, dict) and isinstance(data.get("config"), dict):
        data = data["config"]
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be an object")
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    return data


def effective_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(load_config_file(args.config))
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return _validate(cfg)


def _as_int(cfg: dict, key: str, minimum: int) -> int:
    value = cfg[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(key, f"must be >= {minimum}")
    return int(value)


def _validate(cfg: dict) -> dict:
    out = dict(cfg)
    out["iterations"] = _as_int(cfg, "iterations", 1)
    out["burn_in"] = _as_int(cfg, "burn_in", 0)
    if out["burn_in"] >= out["iterations"]:
        raise ConfigError("burn_in", "must be smaller than iterations")
    out["seed"] = _as_int(cfg, "seed", 0)
    out["replications"] = _as_int(cfg, "replications", 2)
    out["delta"] = _as_int(cfg, "delta", 2)
    try:
        out["dk_bound"] = float(cfg["dk_bound"])
    except (TypeError, ValueError):
        raise ConfigError("dk_bound", f"expected a number, got {cfg['dk_bound']!r}") from None
    if not out["dk_bound"] > 0 or not math.isfinite(out["dk_bound"]):
        raise ConfigError("dk_bound", "must be a finite positive number")
    matrices = cfg["matrices"]
    if isinstance(matrices, str):
        matrices = [m for m in matrices.split(",") if m]
    if not matrices or any(m not in MATRIX_IDS for m in matrices):
        raise ConfigError("matrices", f"expected a subset of {list(MATRIX_IDS)}, got {cfg['matrices']!r}")
    out["matrices"] = list(matrices)
    n_values = cfg["n_values"]
    if not isinstance(n_values, (list, tuple)) or not n_values:
        raise ConfigError("n_values", "expected a non-empty list of integers")
    out["n_values"] = [_as_int({"n_values": n}, "n_values", 1) for n in n_values]
    try:
        out["model"] = Variant.parse(cfg["model"]).value
    except ValueError:
        raise ConfigError("model", f"expected model1, model2 or dk, got {cfg['model']!r}") from None
    loss = str(cfg["loss"]).upper()
    aliases = {"L1": "L1", "STEIN": "L1", "L2": "L2", "FROBENIUS": "L2"}
    if loss not in aliases:
        raise ConfigError("loss", f"expected L1 or L2, got {cfg['loss']!r}")
    out["loss"] = aliases[loss]
    return out


def sampler_config(cfg: dict) -> SamplerConfig:
    return SamplerConfig(iterations=cfg["iterations"], burn_in=cfg["burn_in"], seed=cfg["seed"])


def model_spec(cfg: dict) -> ModelSpec:
    return ModelSpec(Variant.parse(cfg["model"]), delta=cfg["delta"], b=cfg["dk_bound"])


def read_data_csv(path: str | os.PathLike) -> np.ndarray:
    """Rows are observations, no header; raises ``DataError`` on bad cells or ragged rows."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric cell") from None
            if not all(math.isfinite(v) for v in values):
                raise DataError(f"{path}:{lineno}: non-finite value")
            if rows and len(values) != len(rows[0]):
                raise DataError(f"{path}:{lineno}: expected {len(rows[0])} columns, got {len(values)}")
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no observations")
    return np.array(rows, dtype=float)


def _check_parent(path: Path) -> None:
    if not path.parent.is_dir():
        raise FileNotFoundError(f"output directory {path.parent} does not exist")


def _sidecar(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def beta_summary(beta_draws: np.ndarray, spec: ModelSpec, bins: int = 30) -> dict:
    """Median, quartiles and histogram of the beta draws.

    The mean is left out when the beta prior exponent is below 3: the
    marginal posterior then has no first moment.
    """
    q1, med, q3 = np.quantile(beta_draws, [0.25, 0.5, 0.75])
    counts, edges = np.histogram(beta_draws, bins=bins)
    out = {
        "median": float(med),
        "quartiles": [float(q1), float(q3)],
        "histogram": {"counts": counts.tolist(), "edges": edges.tolist()},
    }
    if spec.variant is Variant.MODEL_DK or spec.delta >= 3:
        out["mean"] = float(np.mean(beta_draws))
    return out


def cmd_study(args: argparse.Namespace) -> int:
    cfg = effective_config(args)
    out = Path(cfg["output"] or "risks.csv")
    _check_parent(out)
    study_cfg = StudyConfig(
        n_values=tuple(cfg["n_values"]),
        replications=cfg["replications"],
        sampler=sampler_config(cfg),
        delta=cfg["delta"],
        dk_bound=cfg["dk_bound"],
        master_seed=cfg["seed"],
        matrices=tuple(cfg["matrices"]),
    )
    t0 = time.perf_counter()

    def progress(done, total):
        log.info("replication %d/%d", done, total)

    report = run_study(study_cfg, threads=args.threads, progress=progress)
    wall = time.perf_counter() - t0
    report.write_csv(out)
    if args.raw:
        report.write_raw_csv(_sidecar(out, ".raw.csv"))
    _write_json(_sidecar(out, ".meta.json"), {
        "command": "study", "version": __version__, "seed": cfg["seed"],
        "config": cfg, "wall_time_s": wall,
    })
    return EXIT_OK


def _run_on_data(args: argparse.Namespace):
    cfg = effective_config(args)
    data = read_data_csv(args.data)
    n, p = data.shape
    spec = model_spec(cfg)
    spec.validate_dim(p)
    s = scatter_matrix(data)
    trace = run_chain(spec, s, n, sampler_config(cfg), RngStream(cfg["seed"]))
    return cfg, spec, n, p, trace


def cmd_estimate(args: argparse.Namespace) -> int:
    cfg, spec, n, p, trace = _run_on_data(args)
    out = Path(cfg["output"] or "estimate.csv")
    _check_parent(out)
    est = bayes_estimate_L1(trace) if cfg["loss"] == "L1" else bayes_estimate_L2(trace)
    write_matrix_csv(out, est)
    _write_json(_sidecar(out, ".diagnostics.json"), {
        "command": "estimate", "version": __version__, "seed": cfg["seed"], "config": cfg,
        "n": n, "p": p, "acceptance_rate": trace.acceptance_rate,
        "beta": beta_summary(trace.beta_draws, spec), "warnings": trace.warnings,
    })
    return EXIT_OK


def cmd_chain(args: argparse.Namespace) -> int:
    cfg, spec, n, p, trace = _run_on_data(args)
    out = Path(cfg["output"] or "trace.csv")
    _check_parent(out)
    write_trace_csv(out, trace)
    _write_json(_sidecar(out, ".meta.json"), {
        "command": "chain", "version": __version__, "seed": cfg["seed"], "config": cfg,
        "n": n, "p": p, "acceptance_rate": trace.acceptance_rate,
    })
    return EXIT_OK


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="JSON configuration file; flags override its values")
    sub.add_argument("--seed", type=int)
    sub.add_argument("--iterations", type=int)
    sub.add_argument("--burn-in", dest="burn_in", type=int)
    sub.add_argument("--delta", type=int)
    sub.add_argument("--dk-bound", dest="dk_bound", type=float)
    sub.add_argument("--output", "-o")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hiwcov", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    subs = parser.add_subparsers(dest="command", required=True)

    study = subs.add_parser("study", help="risk simulation over the test matrices")
    _add_common(study)
    study.add_argument("--replications", type=int)
    study.add_argument("--n", dest="n_values", type=int, action="append",
                       help="sample size; repeat for several")
    study.add_argument("--matrices", help=f"comma-separated subset of {','.join(MATRIX_IDS)}")
    study.add_argument("--threads", type=int, default=None,
                       help="worker processes (default: number of processors)")
    study.add_argument("--raw", action="store_true", help="also write per-replication losses")
    study.set_defaults(func=cmd_study)

    for name, func, helptext in (("estimate", cmd_estimate, "estimate Sigma from a data CSV"),
                                 ("chain", cmd_chain, "dump the chain trace for a data CSV")):
        sub = subs.add_parser(name, help=helptext)
        sub.add_argument("data", help="CSV, one zero-mean observation per row, no header")
        _add_common(sub)
        sub.add_argument("--model", choices=["model1", "model2", "dk"])
        sub.add_argument("--loss", choices=["L1", "L2"])
        sub.set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, InvalidParameter) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ChainDiverged, NotPositiveDefinite, QuadratureDegenerate, ReplicationError) as exc:
        print(f"error: sampler failed: {exc}", file=sys.stderr)
        return EXIT_CHAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
