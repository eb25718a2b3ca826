"""``gpl`` command line: a thin client over the service.

Every experiment subcommand builds a config, submits it to the service,
polls the job and downloads the output files into --out.  By default the
service app runs in-process (no socket); pass --server to target a running
instance instead.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import httpx


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=None)
    from .service import app

    return httpx.Client(transport=httpx.ASGITransport(app=app), base_url="http://gplab", timeout=None)


def _submit_and_fetch(client: httpx.Client, payload: dict, out: Path, poll_s: float = 0.2) -> dict:
    resp = client.post("/experiments", json=payload)
    if resp.status_code != 200:
        raise click.ClickException(f"config rejected: {resp.json().get('detail', resp.text)}")
    job_id = resp.json()["job_id"]
    while True:
        status = client.get(f"/experiments/{job_id}").json()
        if status["status"] in ("done", "failed"):
            break
        time.sleep(poll_s)
    if status["status"] == "failed":
        raise click.ClickException(f"run failed: {status['error']}")
    out.mkdir(parents=True, exist_ok=True)
    for name in client.get(f"/experiments/{job_id}/files").json()["files"]:
        text = client.get(f"/experiments/{job_id}/files/{name}").text
        (out / name).write_text(text, encoding="utf-8", newline="\n")
    return status["manifest"]


def _experiment_options(fn):
    opts = [
        click.option("--d", "d", type=int, default=2, show_default=True, help="ambient dimension"),
        click.option("--n-grid", default="4096,16384,65536", show_default=True,
                     help="comma-separated strictly increasing n values"),
        click.option("--trials", type=int, default=200, show_default=True),
        click.option("--seed", type=int, default=42, show_default=True),
        click.option("--model", type=click.Choice(["gaussian", "truncated", "poisson"]),
                     default="gaussian", show_default=True),
        click.option("--functional", type=click.Choice(["vol", "f_s", "surface", "prob-content"]),
                     default="vol", show_default=True),
        click.option("--s", "s", type=int, default=0, show_default=True,
                     help="face dimension for the f_s functional"),
        click.option("--c0", "c_0", type=float, default=None, help="truncation exponent constant"),
        click.option("--c", "c", type=float, default=None, help="net-sphere radius constant"),
        click.option("--c1", "c_1", type=float, default=None, help="net separation constant"),
        click.option("--b1", "b_1", type=float, default=None, help="construction net separation"),
        click.option("--b2", "b_2", type=float, default=None, help="simplex homothety factor"),
        click.option("--c2", "c_2", type=float, default=None, help="per-cell point-count constant"),
        click.option("--A", "a_const", type=float, default=None, help="Poisson tail constant"),
        click.option("--out", type=click.Path(), required=True, help="output directory"),
        click.option("--server", default=None, help="remote service URL (default: in-process)"),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _run_experiment(kind: str, **kw) -> None:
    payload = {
        "kind": kind,
        "model": kw["model"],
        "d": kw["d"],
        "n_grid": [int(x) for x in str(kw["n_grid"]).split(",") if x],
        "trials": kw["trials"],
        "seed": kw["seed"],
        "functional": kw["functional"],
        "s": kw["s"],
        "c_0": kw["c_0"],
        "c": kw["c"],
        "c_1": kw["c_1"],
        "b_1": kw["b_1"],
        "b_2": kw["b_2"],
        "c_2": kw["c_2"],
        "A": kw["a_const"],
    }
    payload = {k: v for k, v in payload.items() if v is not None}
    out = Path(kw["out"])
    with _client(kw["server"]) as client:
        manifest = _submit_and_fetch(client, payload, out)
    verdicts = manifest["verdicts"]
    for v in verdicts:
        mark = "PASS" if v["pass"] else "FAIL"
        click.echo(f"[{mark}] {v['metric']}: {v['estimate']} vs {v['threshold']}")
    click.echo(f"outputs written to {out}")
    if any(not v["pass"] for v in verdicts):
        sys.exit(1)


@click.group()
def main() -> None:
    """Gaussian random polytope laboratory."""


def _register(kind: str, help_text: str) -> None:
    @main.command(name=kind.lower(), help=help_text)
    @_experiment_options
    def _cmd(**kw):
        _run_experiment(kind, **kw)

    _cmd.__name__ = f"cmd_{kind.replace('-', '_')}"


_register("clt", "Empirical central limit theorem check for a functional.")
_register("var-scaling", "Variance order fit against powers of log n.")
_register("expectation", "Expectation asymptotics: ratio to the theory curve.")
_register("sandwich", "Inner-ball containment frequency.")
_register("depgraph", "Net, cells and dependency graph degree statistics.")
_register("coupling", "Paired-model coupling estimates.")
_register("event-A", "Frequency of the per-net-point counting event.")
_register("cell-decomp", "Per-cell face accounting and volume decomposition.")


@main.command()
@click.option("--r", type=float, required=True)
@click.option("--d", type=int, default=2, show_default=True)
@click.option("--server", default=None)
def tails(r: float, d: int, server: str | None) -> None:
    """Ball and halfspace tail masses at radius r."""
    with _client(server) as client:
        resp = client.post("/calc/tails", json={"r": r, "d": d})
        click.echo(json.dumps(resp.json(), indent=2))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host: str, port: int) -> None:
    """Run the HTTP service."""
    import uvicorn

    uvicorn.run("gplab.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
