"""Command-line frontend.

Runs the harness in-process, or with ``--server URL`` acts as a thin client
of the HTTP service. Exit codes: 0 success, 2 configuration error, 3 data
format error, 4 invariant violation, 1 transport failure.
"""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Optional

import click

from . import __version__, harness
from .core import ConfigError, DataFormatError, InvariantError, WinleakError
from .synth import AmbientSynthConfig, BodySynthConfig

EXIT_CODES = {ConfigError: 2, DataFormatError: 3, InvariantError: 4}
HTTP_EXIT = {422: 2, 400: 3, 500: 4}


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guard(fn: Callable[[], Any]) -> Any:
    try:
        return fn()
    except WinleakError as exc:
        code = next((c for t, c in EXIT_CODES.items() if isinstance(exc, t)), 4)
        _fail(code, str(exc))


def _fmt(x: Any) -> str:
    return f"{x:.4f}" if isinstance(x, float) else str(x)


def _post(server: str, path: str, body: dict) -> dict:
    import httpx

    try:
        resp = httpx.post(server.rstrip("/") + path, json=body, timeout=None)
    except httpx.HTTPError as exc:
        _fail(1, f"cannot reach {server}: {exc}")
    if resp.status_code != 200:
        try:
            payload = resp.json()
            detail = payload.get("detail", payload)
        except ValueError:
            detail = resp.text
        _fail(HTTP_EXIT.get(resp.status_code, 1), f"server returned {resp.status_code}: {detail}")
    return resp.json()


def _raw_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        _fail(2, f"config not found: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        _fail(2, f"{p}: invalid JSON: {exc}")


def _execute(op: str, config: str, seed: Optional[int], out: Optional[str], split_index: int, server: Optional[str]) -> dict:
    if server:
        raw = _raw_config(config)
        man = raw.get("dataset", {}).get("manifest") if isinstance(raw.get("dataset"), dict) else None
        if isinstance(man, str) and not Path(man).is_absolute():
            # same resolution as local runs: relative to the config file
            raw["dataset"]["manifest"] = str((Path(config).parent / man).resolve())
        body = {"config": raw, "out": out, "seed": seed, "split_index": split_index}
        return _post(server, f"/{op}", body)

    def local() -> dict:
        cfg = harness.load_config(config)
        if seed is not None:
            cfg = cfg.with_seed(seed)
        if split_index >= len(cfg.splits):
            raise ConfigError(f"split index {split_index} out of range for {len(cfg.splits)} split specs")
        if op == "compare":
            return harness.compare(cfg, out)
        fn = harness.run if op == "run" else harness.audit
        return fn(cfg, out, split_index)

    return _guard(local)


def render(doc: dict) -> str:
    """Plain-text view of a run, compare or audit document."""
    lines: list[str] = []
    if "gap" in doc:
        b, u = doc["biased"], doc["unbiased"]
        lines.append(f"{'':22}{b['scheme']:>24}{u['scheme']:>24}{'gap':>10}")
        for m in harness.GAP_METRICS:
            lines.append(f"{m:22}{_fmt(b['metrics'][m]):>24}{_fmt(u['metrics'][m]):>24}{_fmt(doc['gap'][m]):>10}")
        for c, g in doc["gap"]["per_class_f1"].items():
            bf, uf = b["metrics"]["per_class_f1"][c], u["metrics"]["per_class_f1"][c]
            lines.append(f"{'f1 ' + c:22}{_fmt(bf):>24}{_fmt(uf):>24}{_fmt(g):>10}")
        lk = doc["leakage"]
        lines.append(f"{'leakage_fraction':22}{_fmt(lk['biased']):>24}{_fmt(lk['unbiased']):>24}")
    elif "metrics" in doc:
        lines.append(f"{'scheme':22}{doc['scheme']}")
        for m in harness.GAP_METRICS:
            lines.append(f"{m:22}{_fmt(doc['metrics'][m])}")
        for c, v in doc["metrics"]["per_class_f1"].items():
            lines.append(f"{'f1 ' + c:22}{_fmt(v)}")
        for k, v in doc["audit"].items():
            lines.append(f"{k:22}{_fmt(v)}")
    elif "histogram" in doc:
        lines.append(f"{'scheme':26}{doc['parameters']['scheme']}")
        for k in ("leakage_fraction", "near_duplicate_fraction", "violations"):
            lines.append(f"{k:26}{_fmt(doc[k])}")
        lines.append("overlap histogram (overlap: pairs)")
        for k, v in doc["histogram"].items():
            lines.append(f"  {k:>6}: {v}")
    else:
        lines.append(json.dumps(doc, indent=2))
    if "n_windows" in doc:
        lines.append(f"{'windows':22}{doc['n_windows']}")
    return "\n".join(lines)


def _common(fn: Callable) -> Callable:
    fn = click.option("--server", default=None, metavar="URL", help="Send the request to a running service.")(fn)
    fn = click.option("--quiet", is_flag=True, help="Print nothing on success.")(fn)
    fn = click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Override every seed in the config.")(fn)
    fn = click.option("--config", "config", required=True, type=click.Path(), help="Experiment config JSON.")(fn)
    return fn


@click.group()
@click.version_option(version=__version__, prog_name="winleak")
def main() -> None:
    """Measure how overlapping windows and random splits inflate activity recognition scores."""


@main.command()
@_common
@click.option("--split-index", default=0, show_default=True, help="Which split spec to run.")
def run(config: str, seed: Optional[int], out: Optional[str], quiet: bool, server: Optional[str], split_index: int) -> None:
    """Train and evaluate one split spec."""
    doc = _execute("run", config, seed, out, split_index, server)
    if not quiet:
        click.echo(render(doc))


@main.command()
@_common
def compare(config: str, seed: Optional[int], out: Optional[str], quiet: bool, server: Optional[str]) -> None:
    """Biased vs unbiased split on the same pipeline, with the gap."""
    doc = _execute("compare", config, seed, out, 0, server)
    if not quiet:
        click.echo(render(doc))


@main.command()
@_common
@click.option("--split-index", default=0, show_default=True, help="Which split spec to audit.")
def audit(config: str, seed: Optional[int], out: Optional[str], quiet: bool, server: Optional[str], split_index: int) -> None:
    """Leakage, group integrity and window overlap, without training."""
    doc = _execute("audit", config, seed, out, split_index, server)
    if not quiet:
        click.echo(render(doc))


@main.command()
@click.option("--mode", type=click.Choice(["ambient", "body"]), default="ambient", show_default=True)
@click.option("--config", "config", type=click.Path(), default=None, help="Synth config JSON (overrides --mode).")
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--quiet", is_flag=True)
@click.option("--server", default=None, metavar="URL")
def synth(mode: str, config: Optional[str], seed: Optional[int], out: str, quiet: bool, server: Optional[str]) -> None:
    """Write a synthetic dataset and its manifest."""
    raw = _raw_config(config) if config else {"mode": mode}
    raw.setdefault("mode", mode)
    if server:
        doc = _post(server, "/synth", {"synth": raw, "out": out, "seed": seed})
        manifest = doc["manifest"]
    else:
        def local() -> Path:
            classes = {"ambient": AmbientSynthConfig, "body": BodySynthConfig}
            if raw["mode"] not in classes:
                raise ConfigError(f"unknown synth mode {raw['mode']!r}")
            try:
                cfg = classes[raw["mode"]](**raw)
            except TypeError as exc:
                raise ConfigError(f"bad synth config: {exc}") from None
            if seed is not None:
                cfg = replace(cfg, seed=seed)
            return harness.write_synth(cfg, out)

        manifest = _guard(local)
    if not quiet:
        click.echo(f"wrote {manifest}")


@main.command()
@click.argument("report", type=click.Path())
def inspect(report: str) -> None:
    """Pretty-print a report.json or audit.json."""
    p = Path(report)
    if p.is_dir():
        p = p / "report.json" if (p / "report.json").exists() else p / "audit.json"
    if not p.exists():
        _fail(2, f"report not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        _fail(3, f"{p}: invalid JSON: {exc}")
    click.echo(render(doc))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host: str, port: int) -> None:
    """Start the HTTP service."""
    import uvicorn

    uvicorn.run("winleak.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
