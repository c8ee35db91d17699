"""Thin command-line client for the experiment service.

Subcommands map one-to-one onto service endpoints. By default the service
runs in-process; --server points the same client at a remote instance. The
client owns all file writing (canonical JSON, verbatim CSV bytes), so outputs
are identical either way.

Exit codes: 0 success, 1 configuration error, 2 acceptance-property violation
or runtime lab error.
"""

from __future__ import annotations

import asyncio
import json
import os
import sys
import time
from pathlib import Path
from typing import Optional

import click
import httpx

from .reporting import canonical_json

_SERVER_HELP = "Base URL of a running service; default runs the service in-process."


def _post(server: Optional[str], path: str, payload: dict) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            return client.post(path, json=payload)

    from .service import app

    async def go() -> httpx.Response:
        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(
            transport=transport, base_url="http://service.internal", timeout=None
        ) as client:
            return await client.post(path, json=payload)

    return asyncio.run(go())


def _execute(
    mode: str,
    endpoint: str,
    config_path: str,
    seed: Optional[int],
    workers: Optional[int],
    out_dir: Optional[str],
    server: Optional[str],
) -> int:
    try:
        doc = json.loads(Path(config_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        click.echo(f"config error: invalid JSON at line {e.lineno}: {e.msg}", err=True)
        return 1
    if not isinstance(doc, dict):
        click.echo("config error: the document must be a JSON object", err=True)
        return 1
    doc["mode"] = doc.get("mode", mode)
    if seed is not None:
        doc["master_seed"] = seed
    if out_dir is not None:
        doc["output"] = out_dir
    if workers is None:
        workers = os.cpu_count() or 1

    click.echo(f"[{mode}] seed={doc.get('master_seed')} workers={workers}", err=True)
    started = time.monotonic()
    resp = _post(server, endpoint, {"config": doc, "workers": workers})
    if resp.status_code == 400:
        detail = resp.json().get("detail", "invalid configuration")
        click.echo(f"config error: {detail}", err=True)
        return 1
    resp.raise_for_status()
    body = resp.json()
    if body.get("error"):
        click.echo(body["error"], err=True)

    out = Path(doc.get("output", "out"))
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if body["report"]:
        (out / "report.json").write_text(canonical_json(body["report"]) + "\n", encoding="utf-8")
        written.append("report.json")
    for entry in body["files"]:
        (out / entry["name"]).write_text(entry["content"], encoding="utf-8")
        written.append(entry["name"])
    elapsed = time.monotonic() - started
    click.echo(
        f"[{mode}] exit={body['exit_code']} wrote {', '.join(written) or 'nothing'} "
        f"to {out} in {elapsed:.1f}s",
        err=True,
    )
    return int(body["exit_code"])


def _common(fn):
    fn = click.option(
        "--config",
        "config_path",
        required=True,
        type=click.Path(exists=True, dir_okay=False),
        help="Path to the JSON experiment config.",
    )(fn)
    fn = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Override master_seed.")(fn)
    fn = click.option("--workers", type=click.IntRange(1), default=None, help="Worker count; default: available parallelism.")(fn)
    fn = click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Override the output directory.")(fn)
    fn = click.option("--server", default=None, help=_SERVER_HELP)(fn)
    return fn


@click.group()
def main() -> None:
    """Experiments on normalized sums with coupled time indices."""


def _subcommand(name: str, mode: str, endpoint: str, doc: str) -> None:
    @main.command(name=name, help=doc)
    @_common
    def cmd(config_path, seed, workers, out_dir, server) -> None:
        code = _execute(mode, endpoint, config_path, seed, workers, out_dir, server)
        sys.exit(code)


_subcommand(
    "rate",
    "rate",
    "/v1/rate",
    "Estimate the Kolmogorov distance to the normal across the horizon grid and fit its decay exponent.",
)
_subcommand(
    "variance",
    "variance",
    "/v1/variance",
    "Estimate per-horizon variance ratios and the limiting variance constant.",
)
_subcommand(
    "stein",
    "stein",
    "/v1/stein",
    "Estimate the neighborhood-based error terms of the normal approximation across the grid.",
)
_subcommand(
    "check-inequalities",
    "inequalities",
    "/v1/check-inequalities",
    "Exactly verify the decoupling, correlation, and smoothing inequalities on random instances.",
)
_subcommand(
    "return-times",
    "return-times",
    "/v1/return-times",
    "Count simultaneous returns along coupled indices; compare with the exact expectation.",
)
_subcommand(
    "dump-neighborhoods",
    "dump-neighborhoods",
    "/v1/dump-neighborhoods",
    "Write every dependency neighborhood as merged integer intervals (CSV: n, interval_start, interval_end).",
)


if __name__ == "__main__":
    main()
