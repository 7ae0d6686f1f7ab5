"""Run directories: CSV tables, binary parameter files and summaries.

Directory layout, keyed by experiment name and seed (no timestamps)::

    <root>/<name>-seed<seed>/
        config.ini     configuration snapshot (explicit keys only)
        schedule.csv   level, beta, ess, acceptance_rate, stalled, divergent
        energies.csv   level, particle, energy
        params.bin     final particle parameters (see write_params)
        summary.json   best / median final energy, log Z, status, wall time

CSV floats are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import format_config
from .experiments import RunResult
from .particles import QUANTILES
from .policy import MlpPolicy
from .rollout import OpenLoopController

OUTPUT_ROOT_ENV = "TSMC_OUTPUT_ROOT"

PARAMS_MAGIC = b"TSMCPRM\x00"
PARAMS_VERSION = 1
# magic, version, layout id, particle count, parameter dimension, shape-word count
PARAMS_HEADER = struct.Struct("<8sHHQQH")
LAYOUT_FLAT = 0
LAYOUT_OPEN_LOOP = 1  # shape words: horizon, control dim; rows are (T, m) row-major
LAYOUT_MLP = 2  # shape words: layer widths, then 1 if the output layer has a bias

EXIT_SUCCESS = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_PARTIAL = 3


def output_dir(config, root=None) -> Path:
    root = root or config.output_dir or os.environ.get(OUTPUT_ROOT_ENV) or "runs"
    return Path(root) / f"{config.name}-seed{config.seed}"


def _fmt(x) -> str:
    return repr(float(x))


def _finite_or_none(x):
    x = float(x)
    return x if np.isfinite(x) else None


def parameter_layout(task) -> tuple[int, list[int]]:
    ctrl = task.problem.controller if task.is_control else None
    if isinstance(ctrl, OpenLoopController):
        return LAYOUT_OPEN_LOOP, [ctrl.horizon, ctrl.control_dim]
    if isinstance(ctrl, MlpPolicy):
        return LAYOUT_MLP, list(ctrl.layer_sizes) + [int(ctrl.output_bias)]
    return LAYOUT_FLAT, []


def write_params(path, thetas, layout: int = LAYOUT_FLAT, shape_words=()) -> None:
    """Little-endian header followed by ``shape_words`` as uint32 and the
    ``(n, d)`` parameters as float64, particle-major."""
    thetas = np.ascontiguousarray(thetas, dtype="<f8")
    n, d = thetas.shape
    with open(path, "wb") as fh:
        fh.write(PARAMS_HEADER.pack(PARAMS_MAGIC, PARAMS_VERSION, layout, n, d, len(shape_words)))
        fh.write(struct.pack(f"<{len(shape_words)}I", *shape_words))
        fh.write(thetas.tobytes())


def read_params(path) -> tuple[np.ndarray, int, list[int]]:
    data = Path(path).read_bytes()
    magic, version, layout, n, d, k = PARAMS_HEADER.unpack_from(data)
    if magic != PARAMS_MAGIC:
        raise ValueError(f"{path}: not a parameter file")
    if version != PARAMS_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    off = PARAMS_HEADER.size
    words = list(struct.unpack_from(f"<{k}I", data, off))
    off += 4 * k
    thetas = np.frombuffer(data, dtype="<f8", count=n * d, offset=off).reshape(n, d).astype(float)
    return thetas, layout, words


def summary_dict(result: RunResult) -> dict:
    rec, cfg = result.record, result.config
    final = np.asarray(rec.energies[-1], dtype=float)
    finite = final[np.isfinite(final)]
    q = np.quantile(finite, QUANTILES) if finite.size else np.full(len(QUANTILES), np.inf)
    out = {
        "name": cfg.name,
        "environment": cfg.environment,
        "method": cfg.method,
        "seed": cfg.seed,
        "status": rec.status,
        "n_levels": rec.n_levels,
        "n_particles": int(len(final)),
        "param_dim": int(rec.final_population.dim),
        "best_energy": _finite_or_none(q[0]),
        "median_energy": _finite_or_none(q[2]),
        "final_quantiles": [_finite_or_none(v) for v in q],
        "log_z": _finite_or_none(rec.log_z_estimate),
        "divergent_total": int(sum(rec.diagnostics.get("divergent", []))),
        "stalled_levels": int(sum(rec.stalled)),
        "wall_time_s": round(result.wall_time, 3),
    }
    if "mode_membership" in rec.diagnostics:
        out["mode_membership"] = rec.diagnostics["mode_membership"]
    return out


def write_run(result: RunResult, root=None) -> Path:
    cfg, rec = result.config, result.record
    out = output_dir(cfg, root)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(format_config(cfg), encoding="utf-8")
    with open(out / "schedule.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "beta", "ess", "acceptance_rate", "stalled", "divergent"])
        divergent = rec.diagnostics.get("divergent", [0] * len(rec.beta_schedule))
        for level, (b, e, a, s, dv) in enumerate(zip(rec.beta_schedule, rec.ess_trace, rec.acceptance_rates,
                                                     rec.stalled, divergent)):
            w.writerow([level, _fmt(b), _fmt(e), _fmt(a), int(s), dv])
    with open(out / "energies.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "particle", "energy"])
        for level, energies in enumerate(rec.energies):
            for i, e in enumerate(energies):
                w.writerow([level, i, _fmt(e)])
    layout, words = parameter_layout(result.task)
    write_params(out / "params.bin", rec.final_population.thetas, layout, words)
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary_dict(result), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def read_energies(run_dir) -> dict[int, np.ndarray]:
    """Energies per level from ``energies.csv``."""
    levels: dict[int, list[float]] = {}
    with open(Path(run_dir) / "energies.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            levels.setdefault(int(row["level"]), []).append(float(row["energy"]))
    return {k: np.array(v) for k, v in levels.items()}


def read_schedule(run_dir) -> list[dict]:
    with open(Path(run_dir) / "schedule.csv", newline="", encoding="utf-8") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


class SummaryError(ValueError):
    pass


@dataclass
class RunSummary:
    run_dir: str
    environment: str
    method: str
    seed: int
    final_energies: np.ndarray

    @property
    def quantiles(self) -> np.ndarray:
        e = self.final_energies[np.isfinite(self.final_energies)]
        return np.quantile(e, QUANTILES) if e.size else np.full(len(QUANTILES), np.inf)

    @property
    def best(self) -> float:
        return float(self.quantiles[0])


def load_run(run_dir) -> RunSummary:
    run_dir = Path(run_dir)
    with open(run_dir / "summary.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    energies = read_energies(run_dir)
    return RunSummary(str(run_dir), meta["environment"], meta["method"], int(meta["seed"]),
                      energies[max(energies)])


def summarize(run_dirs) -> tuple[list[RunSummary], dict[str, dict]]:
    """Load runs and group them by method.

    Returns the per-run summaries and, per method, the median of the best
    final energies and quantiles of the pooled final energies.  Every
    statistic comes from the run CSVs.
    """
    runs = [load_run(d) for d in run_dirs]
    if not runs:
        raise SummaryError("no run directories given")
    envs = sorted({r.environment for r in runs})
    if len(envs) > 1:
        raise SummaryError(f"runs come from different environments ({', '.join(envs)}); "
                           "costs are not comparable across environments")
    methods: dict[str, dict] = {}
    for r in runs:
        m = methods.setdefault(r.method, {"runs": 0, "best": [], "pooled": []})
        m["runs"] += 1
        m["best"].append(r.best)
        m["pooled"].append(r.final_energies)
    for m in methods.values():
        pooled = np.concatenate(m.pop("pooled"))
        pooled = pooled[np.isfinite(pooled)]
        m["median_best"] = float(np.median(m["best"]))
        m["quantiles"] = np.quantile(pooled, QUANTILES) if pooled.size else np.full(len(QUANTILES), np.inf)
        m["final_energies"] = pooled
    return runs, methods


def format_table(runs: list[RunSummary], methods: dict[str, dict]) -> str:
    head = ["min", "q25", "median", "q75", "max"]
    lines = ["run\tmethod\tseed\t" + "\t".join(head)]
    for r in runs:
        lines.append("\t".join([Path(r.run_dir).name, r.method, str(r.seed)] + [f"{v:.6g}" for v in r.quantiles]))
    lines.append("")
    lines.append("method\truns\tmedian_best\t" + "\t".join(head))
    for name, m in methods.items():
        lines.append("\t".join([name, str(m["runs"]), f"{m['median_best']:.6g}"]
                               + [f"{v:.6g}" for v in m["quantiles"]]))
    return "\n".join(lines) + "\n"


def write_boxplot(methods: dict[str, dict], path, title: str = "") -> None:
    """Static SVG boxplot of pooled final energies, one box per method."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "tsmc", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(1.6 + 1.4 * len(methods), 4.0))
        names = list(methods)
        ax.boxplot([methods[n]["final_energies"] for n in names], showfliers=True)
        ax.set_xticks(range(1, len(names) + 1), names)
        ax.set_ylabel("final-particle energy")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
