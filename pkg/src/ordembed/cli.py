"""Command-line harness: instance generation, solving, verification, sweeps.

Every subcommand reads an optional JSON config (strict: unknown keys are
rejected), applies flag overrides, writes its outputs atomically under the
output directory, and drops a manifest.json echoing the resolved
configuration so a run can be reproduced bit for bit.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .constructions import (
    APFreeInstance,
    adversarial_pair,
    apfree_set,
    isosceles_free_search,
    verify_similarity_resistance,
)
from .experiments import (
    SUMMARY_HEADER,
    TRIAL_HEADER,
    ExperimentConfig,
    SummaryRow,
    TrialStore,
    perturbation_probability,
    repeated_embedding_study,
    run_sweep,
    sample_uniform_cube,
)
from .geometry import PointConfig, displacement
from .interval_bound import verify_interval_bound
from .solver import AllRestartsFailedError, SolverParams, solve_embedding, worst_of_restarts
from .svgplot import SeriesPoint, loglog_chart
from .triplets import build_table

__all__ = ["main"]


class ConfigError(ValueError):
    """Invalid or unparseable configuration (exit code 2)."""


# ---------------------------------------------------------------------------
# config plumbing

def _coerce(value, default):
    if isinstance(default, tuple) and isinstance(value, list):
        return tuple(value)
    return value


def _from_dict(cls, data: dict, where: str):
    """Strict dataclass construction: unknown keys are configuration errors."""
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a JSON object")
    field_map = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(field_map))
    if unknown:
        raise ConfigError(f"unknown keys {unknown} in {where}; allowed: {sorted(field_map)}")
    kwargs = {}
    for name, value in data.items():
        if name == "solver" and isinstance(value, dict):
            kwargs[name] = _from_dict(SolverParams, value, f"{where}.solver")
        else:
            default = getattr(cls, name, None)
            if default is None:
                for f in dataclasses.fields(cls):
                    if f.name == name and f.default is not dataclasses.MISSING:
                        default = f.default
            kwargs[name] = _coerce(value, default)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def _load_config(path: Optional[str], cls, where: str):
    if path is None:
        try:
            return cls()
        except TypeError as exc:
            raise ConfigError(f"subcommand requires --config ({exc})") from exc
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {p} is not valid JSON: {exc}") from exc
    return _from_dict(cls, data, where)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_manifest(out: Path, command: str, config_obj, seeds: dict) -> None:
    payload = {
        "command": command,
        "version": __version__,
        "config": dataclasses.asdict(config_obj) if dataclasses.is_dataclass(config_obj) else config_obj,
        "seeds": seeds,
    }
    _atomic_write(out / "manifest.json", json.dumps(payload, indent=2, default=str) + "\n")


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("ORDEMBED_OUT") or "ordembed_out"
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------------------
# subcommand configs

@dataclass(frozen=True)
class SolveConfig:
    n: int = 20
    dim: int = 2
    seed: int = 0
    x_csv: Optional[str] = None
    restarts: int = 10
    solver: SolverParams = field(default_factory=SolverParams)


@dataclass(frozen=True)
class VerifyBoundConfig:
    n: int = 50
    seed: int = 0
    solver: SolverParams = field(default_factory=lambda: SolverParams(dim=1, init="ordinal"))


@dataclass(frozen=True)
class MakeApfreeConfig:
    m_max: int = 60
    k_gap: int = 6
    strategy: str = "exhaustive"
    node_budget: int = 2_000_000


@dataclass(frozen=True)
class AdversarialConfig:
    instance_json: Optional[str] = None
    m_max: int = 60
    k_gap: int = 6
    strategy: str = "exhaustive"
    beta_fraction: float = 0.49  # beta = beta_fraction / M
    search: bool = True


@dataclass(frozen=True)
class PerturbConfig:
    ns: tuple[int, ...] = (10, 20, 40, 80)
    dim: int = 2
    beta_coeff: float = 5.0  # beta = beta_coeff / n
    trials: int = 1000
    seed: int = 0


@dataclass(frozen=True)
class RepeatEmbedConfig:
    n: int = 25
    dim: int = 2
    runs: int = 50
    seed: int = 0
    solver: SolverParams = field(default_factory=SolverParams)


@dataclass(frozen=True)
class IsoscelesConfig:
    grid_side: int = 10
    beta: float = 0.05
    budget: int = 20
    seed: int = 0


@dataclass(frozen=True)
class PlotConfig:
    summary_csv: str = ""
    title: str = "mean displacement vs n"
    value: str = "d_inf"  # "d_inf" | "d_1"


# ---------------------------------------------------------------------------
# subcommand implementations

def _cmd_solve(args) -> int:
    cfg: SolveConfig = _load_config(args.config, SolveConfig, "solve config")
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = _out_dir(args)
    if cfg.x_csv:
        x = PointConfig.from_csv(Path(cfg.x_csv).read_text())
    else:
        x = sample_uniform_cube(cfg.n, cfg.dim, np.random.default_rng(cfg.seed))
    params = replace(cfg.solver, dim=x.dim, restarts=cfg.restarts, rng_seed=cfg.seed)
    try:
        y_worst, records = worst_of_restarts(x, params)
    except AllRestartsFailedError as exc:
        print(f"solve: {exc}", file=sys.stderr)
        return 1
    rep = displacement(x, y_worst)
    _atomic_write(out / "x.csv", x.to_csv())
    _atomic_write(out / "y_worst.csv", y_worst.to_csv())
    report = {
        "n": x.n, "dim": x.dim, "d_inf": rep.d_inf, "d_1": rep.d_1,
        "restarts": [
            {"seed": r.seed, "success": r.report.success, "epochs": r.report.epochs_used,
             "d_inf": r.d_inf, "d_1": r.d_1}
            for r in records
        ],
    }
    _atomic_write(out / "solve_report.json", json.dumps(report, indent=2) + "\n")
    _write_manifest(out, "solve", cfg, {"seed": cfg.seed})
    print(f"solve: n={x.n} d={x.dim} worst d_inf={rep.d_inf:.6g} d_1={rep.d_1:.6g} -> {out}")
    return 0


def _cmd_verify_bound(args) -> int:
    cfg: VerifyBoundConfig = _load_config(args.config, VerifyBoundConfig, "verify-bound config")
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = _out_dir(args)
    rng = np.random.default_rng(cfg.seed)
    interior = rng.random(max(cfg.n - 2, 1))
    x = PointConfig(np.concatenate([[0.0], np.sort(interior), [1.0]]))
    table = build_table(x)
    report = solve_embedding(table, replace(cfg.solver, dim=1, rng_seed=cfg.seed))
    if not report.success:
        print("verify-bound: solver failed to satisfy the table", file=sys.stderr)
        return 1
    achieved, bound, ok = verify_interval_bound(x, report.y)
    payload = {"n": x.n, "seed": cfg.seed, "achieved": achieved, "bound": bound, "ok": ok}
    _atomic_write(out / "verify_bound.json", json.dumps(payload, indent=2) + "\n")
    _write_manifest(out, "verify-bound", cfg, {"seed": cfg.seed})
    print(f"verify-bound: achieved={achieved:.6g} bound={bound:.6g} {'OK' if ok else 'VIOLATED'}")
    return 0 if ok else 1


def _cmd_make_apfree(args) -> int:
    cfg: MakeApfreeConfig = _load_config(args.config, MakeApfreeConfig, "make-apfree config")
    out = _out_dir(args)
    inst = apfree_set(cfg.m_max, cfg.k_gap, cfg.strategy, cfg.node_budget)
    _atomic_write(out / "instance.json", inst.to_json() + "\n")
    _write_manifest(out, "make-apfree", cfg, {})
    import math
    exponent = math.log(1.0 / inst.M) / math.log(inst.alpha)
    print(
        f"make-apfree: M={inst.M} |S|={len(inst.S)} alpha=k_gap/(2M)={inst.alpha:.6g} "
        f"margin=1/M={inst.margin:.6g} exponent log(1/M)/log(alpha)={exponent:.4f}"
    )
    return 0


def _cmd_adversarial(args) -> int:
    cfg: AdversarialConfig = _load_config(args.config, AdversarialConfig, "adversarial config")
    out = _out_dir(args)
    if cfg.instance_json:
        inst = APFreeInstance.from_json(Path(cfg.instance_json).read_text())
    else:
        inst = apfree_set(cfg.m_max, cfg.k_gap, cfg.strategy)
    beta = cfg.beta_fraction / inst.M
    pair = adversarial_pair(inst, beta, search=cfg.search)
    lower = verify_similarity_resistance(pair)
    payload = {
        "instance": json.loads(inst.to_json()),
        "beta": beta,
        "moved_pairs": [list(p) for p in pair.moved_pairs],
        "certified_lower": lower,
        "y": pair.y.points[:, 0].tolist(),
    }
    _atomic_write(out / "adversarial.json", json.dumps(payload, indent=2) + "\n")
    _write_manifest(out, "adversarial", cfg, {})
    print(f"adversarial: M={inst.M} beta={beta:.6g} certified min-alignment lower bound={lower:.6g}")
    return 0


def _summary_to_svg(summary: list[SummaryRow], title: str, value: str = "d_inf") -> str:
    series: dict[str, list[SeriesPoint]] = {}
    for row in summary:
        label = f"d={row.dim}"
        if value == "d_inf":
            pt = SeriesPoint(row.n, row.mean_d_inf, row.ci_lo, row.ci_hi)
        else:
            pt = SeriesPoint(row.n, row.mean_d_1, row.ci_lo1, row.ci_hi1)
        series.setdefault(label, []).append(pt)
    return loglog_chart(series, title, "n", f"mean {value}")


def _cmd_sweep(args) -> int:
    cfg: ExperimentConfig = _load_config(args.config, ExperimentConfig, "sweep config")
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.trials is not None:
        cfg = replace(cfg, trials_per_cell=args.trials)
    out = _out_dir(args)
    store = TrialStore(out / f"trials_{cfg.mode}.csv")
    progress = (lambda msg: print(msg, flush=True)) if args.verbose else None
    records, summary = run_sweep(cfg, store=store, jobs=args.jobs, progress=progress)
    lines = [SUMMARY_HEADER] + [row.to_csv_row() for row in summary]
    _atomic_write(out / f"summary_{cfg.mode}.csv", "\n".join(lines) + "\n")
    _atomic_write(
        out / f"sweep_{cfg.mode}.svg",
        _summary_to_svg(summary, f"worst-of-{cfg.restarts} displacement, {cfg.mode}"),
    )
    _write_manifest(out, "sweep", cfg, {"master_seed": cfg.master_seed})
    print(f"sweep: {len(records)} trials, {len(summary)} cells -> {out}")
    return 0


def _cmd_perturb(args) -> int:
    cfg: PerturbConfig = _load_config(args.config, PerturbConfig, "perturb config")
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.trials is not None:
        cfg = replace(cfg, trials=args.trials)
    out = _out_dir(args)
    rows = ["n,beta,trials,p_hat,ci_lo,ci_hi"]
    for n in cfg.ns:
        ss = np.random.SeedSequence((cfg.seed, n))
        kx, kp = ss.spawn(2)
        x = sample_uniform_cube(n, cfg.dim, np.random.default_rng(kx))
        beta = cfg.beta_coeff / n
        p_hat, (lo, hi) = perturbation_probability(x, beta, cfg.trials, np.random.default_rng(kp))
        rows.append(f"{n},{beta:.17g},{cfg.trials},{p_hat:.17g},{lo:.17g},{hi:.17g}")
        print(f"perturb: n={n} beta={beta:.4g} p_hat={p_hat:.4g} CI=({lo:.4g}, {hi:.4g})")
    _atomic_write(out / "perturb.csv", "\n".join(rows) + "\n")
    _write_manifest(out, "perturb", cfg, {"seed": cfg.seed})
    return 0


def _cmd_repeat_embed(args) -> int:
    cfg: RepeatEmbedConfig = _load_config(args.config, RepeatEmbedConfig, "repeat-embed config")
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = _out_dir(args)
    x = sample_uniform_cube(cfg.n, cfg.dim, np.random.default_rng(cfg.seed))
    result = repeated_embedding_study(x, cfg.runs, replace(cfg.solver, dim=cfg.dim, rng_seed=cfg.seed))
    disp_rows = [",".join(f"{v:.17g}" for v in row) for row in result.displacements]
    _atomic_write(out / "displacements.csv", "\n".join(disp_rows) + "\n")
    _atomic_write(
        out / "argmax_counts.csv",
        "point,count\n" + "\n".join(f"{i},{c}" for i, c in enumerate(result.argmax_counts)) + "\n",
    )
    _atomic_write(
        out / "per_run_max.csv",
        "run,max_displacement\n"
        + "\n".join(f"{i},{v:.17g}" for i, v in enumerate(result.per_run_max)) + "\n",
    )
    _write_manifest(out, "repeat-embed", cfg, {"seed": cfg.seed})
    counts = np.sort(result.argmax_counts)[::-1]
    used = int(result.argmax_counts.sum())
    share = float(counts[:2].sum() / used) if used else 0.0
    print(
        f"repeat-embed: {used} successful runs, {result.failed_runs} failed; "
        f"top-2 argmax share={share:.2f}"
    )
    return 0


def _cmd_isosceles(args) -> int:
    cfg: IsoscelesConfig = _load_config(args.config, IsoscelesConfig, "isosceles-search config")
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = _out_dir(args)
    result = isosceles_free_search(cfg.grid_side, cfg.beta, cfg.budget, cfg.seed)
    _atomic_write(out / "isosceles_points.csv", result.points.to_csv())
    payload = {
        "size": result.points.n,
        "grid_side": cfg.grid_side,
        "beta": cfg.beta,
        "hausdorff": result.hausdorff,
    }
    _atomic_write(out / "isosceles_result.json", json.dumps(payload, indent=2) + "\n")
    _write_manifest(out, "isosceles-search", cfg, {"seed": cfg.seed})
    print(
        f"isosceles-search: grid {cfg.grid_side}x{cfg.grid_side} beta={cfg.beta} -> "
        f"{result.points.n} points, hausdorff={result.hausdorff:.4g}"
    )
    return 0


def _cmd_plot(args) -> int:
    cfg: PlotConfig = _load_config(args.config, PlotConfig, "plot config")
    if not cfg.summary_csv:
        raise ConfigError("plot requires summary_csv in the config")
    path = Path(cfg.summary_csv)
    if not path.exists():
        raise ConfigError(f"summary CSV not found: {path}")
    lines = path.read_text().splitlines()
    if not lines or lines[0] != SUMMARY_HEADER:
        raise ConfigError(f"{path} does not look like a summary CSV")
    summary = [SummaryRow.from_csv_row(line) for line in lines[1:] if line.strip()]
    out = _out_dir(args)
    _atomic_write(out / "plot.svg", _summary_to_svg(summary, cfg.title, cfg.value))
    _write_manifest(out, "plot", cfg, {})
    print(f"plot: {len(summary)} rows -> {out / 'plot.svg'}")
    return 0


_COMMANDS = {
    "solve": _cmd_solve,
    "verify-bound": _cmd_verify_bound,
    "make-apfree": _cmd_make_apfree,
    "adversarial": _cmd_adversarial,
    "sweep": _cmd_sweep,
    "perturb": _cmd_perturb,
    "repeat-embed": _cmd_repeat_embed,
    "isosceles-search": _cmd_isosceles,
    "plot": _cmd_plot,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ordembed",
        description="Ordinal embedding: how precisely do triplet comparisons locate points?",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config path")
        p.add_argument("--out", help="output directory (default $ORDEMBED_OUT or ./ordembed_out)")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
        p.add_argument("--trials", type=int, default=None, help="trial-count override")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
