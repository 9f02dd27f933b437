"""Suite orchestration, report rendering and the compare table."""

from __future__ import annotations

import csv
import fcntl
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from pathlib import Path

from .. import __version__
from ..errors import EntrolabError, SchemaMismatch
from ..models import build_model
from .config import COUPLING_SUITES, GATING, SUITES, ExperimentConfig
from .suites import CSV_SCHEMAS, SCHEMA_VERSION, SUITE_FUNCTIONS, Context, SuiteResult

EXIT_OK, EXIT_FAIL, EXIT_HYPOTHESIS = 0, 1, 2
LOCK_NAME = ".entrolab.lock"


class OutputBusy(EntrolabError):
    """Another process holds the output directory."""


def render(value):
    """JSON-safe, deterministic rendering (17 significant digits for floats)."""
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, (int,)) and not isinstance(value, bool):
        return value
    if hasattr(value, "item") and not isinstance(value, (list, tuple, dict)):
        return render(value.item())
    if isinstance(value, float):
        if not math.isfinite(value):
            return repr(value)
        return float(f"{value:.17g}")
    if isinstance(value, dict):
        return {str(k): render(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [render(v) for v in value]
    return str(value)


def csv_cell(value) -> str:
    if hasattr(value, "item"):
        value = value.item()
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    if value is None:
        return ""
    return str(value)


def csv_text(result: SuiteResult) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(result.header)
    for row in result.rows:
        wr.writerow([csv_cell(v) for v in row])
    return buf.getvalue()


@contextmanager
def output_lock(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / LOCK_NAME, "w") as fh:
        try:
            fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError as exc:
            raise OutputBusy(f"{out} is in use by another run") from exc
        try:
            yield
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def _run_one(name: str, ctx: Context) -> tuple[SuiteResult, float]:
    start = time.perf_counter()
    try:
        res = SUITE_FUNCTIONS[name](ctx)
    except EntrolabError as exc:
        res = SuiteResult(name, "error", {"error": f"{type(exc).__name__}: {exc}"})
    except (ArithmeticError, ValueError) as exc:
        res = SuiteResult(name, "error", {"error": f"{type(exc).__name__}: {exc}"})
    return res, time.perf_counter() - start


def execute(config: ExperimentConfig, jobs: int = 1) -> tuple[dict, dict, dict]:
    """Run the configured suites; returns (report, csv texts, timings)."""
    model = build_model(config.model)
    ctx = Context(model, config)
    requested = [s for s in SUITES if s in config.suites]
    results: dict[str, SuiteResult] = {}
    timings: dict[str, float] = {}

    # the gating pair always runs so the rest can be trusted
    gates = {}
    for name in GATING:
        res, dt = _run_one(name, ctx)
        gates[name] = res.status == "pass"
        if name in requested:
            results[name], timings[name] = res, dt
    runnable = []
    for name in (s for s in requested if s not in GATING):
        if not gates["reversibility"]:
            results[name] = SuiteResult(name, "gated", {"reason": "reversibility failed"})
        elif name in COUPLING_SUITES and not gates["admissibility"]:
            results[name] = SuiteResult(name, "gated", {"reason": "admissibility failed"})
        else:
            runnable.append(name)
    first = [s for s in runnable if s != "constants"]
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        done = dict(zip(first, pool.map(lambda s: _run_one(s, ctx), first)))
    for name, (res, dt) in done.items():
        results[name], timings[name] = res, dt
    if "decay" in results:
        ctx.decay_fits = results["decay"].summary.get("kappa_decay_fit") or {}
    if "constants" in runnable:
        results["constants"], timings["constants"] = _run_one("constants", ctx)

    kr = model.kappas
    if not kr.hypotheses_ok:
        code = EXIT_HYPOTHESIS
    elif all(r.status == "pass" for r in results.values()):
        code = EXIT_OK
    else:
        code = EXIT_FAIL
    report = {
        "artifact_version": __version__,
        "schema_version": SCHEMA_VERSION,
        "csv_schemas": {name: CSV_SCHEMAS[name] for name in requested},
        "config": config.echo(),
        "model": {
            "family": model.family,
            "params": model.params,
            "n_states": model.generator.n_states,
            "kappas": {"kappa": kr.kappa, "kappa_1": kr.kappa_1, "alpha_slope": kr.alpha_slope,
                       "alpha_offset": kr.alpha_offset, "kappa_bar": kr.kappa_bar,
                       "implied": kr.implied},
            "hypotheses_ok": kr.hypotheses_ok,
            "failed_hypothesis": kr.failed_hypothesis,
        },
        "suites": {name: {"status": results[name].status, "summary": results[name].summary,
                          "witness": results[name].witness, "csv": f"{name}.csv"}
                   for name in requested},
        "exit_code": code,
    }
    csvs = {name: csv_text(results[name]) for name in requested}
    return render(report), csvs, timings


def report_bytes(report: dict) -> bytes:
    return (json.dumps(report, sort_keys=True, indent=2) + "\n").encode()


def run(config: ExperimentConfig, out: Path | None = None, jobs: int = 1) -> tuple[int, dict]:
    out = Path(out or config.output_dir)
    with output_lock(out):
        report, csvs, timings = execute(config, jobs)
        (out / "report.json").write_bytes(report_bytes(report))
        for name, text in csvs.items():
            (out / f"{name}.csv").write_text(text)
        # wall-clock times vary between runs, so they stay out of report.json
        (out / "timings.json").write_text(json.dumps(render(timings), sort_keys=True, indent=2) + "\n")
    return report["exit_code"], report


COMPARE_COLUMNS = ["model", "phi", "kappa_theory", "kappa_best_est", "kappa_decay_fit", "margin"]


def compare(paths, phi: str | None = None) -> list[list]:
    """One row per report, taken from its constants table."""
    if not paths:
        raise SchemaMismatch("need at least one report")
    rows, versions = [], set()
    for path in paths:
        path = Path(path)
        try:
            rep = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaMismatch(f"{path}: unreadable report") from exc
        if not isinstance(rep, dict) or "schema_version" not in rep or "artifact_version" not in rep:
            raise SchemaMismatch(f"{path}: not a report")
        versions.add((rep["artifact_version"], rep["schema_version"]))
        if len(versions) > 1:
            raise SchemaMismatch(f"{path}: mixed versions {sorted(versions)}")
        const = rep.get("suites", {}).get("constants")
        if const is None or const.get("status") in ("gated", "error"):
            raise SchemaMismatch(f"{path}: no constants table")
        with open(path.parent / const["csv"], newline="") as fh:
            table = list(csv.DictReader(fh))
        if not table or list(table[0].keys()) != CSV_SCHEMAS["constants"]:
            raise SchemaMismatch(f"{path}: constants CSV has an unexpected header")
        pick = next((r for r in table if r["phi"] == phi), None) if phi else table[0]
        if pick is None:
            raise SchemaMismatch(f"{path}: no row for phi {phi}")
        rows.append([rep["model"]["family"], pick["phi"], pick["kappa_theory"], pick["kappa_best_est"],
                     pick["kappa_decay_fit"], pick["margin"]])
    return rows
