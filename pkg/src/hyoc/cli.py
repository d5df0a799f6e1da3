"""Command-line client for the service.

Every subcommand builds a request from local files and sends it to the
service: a remote one when `--server` is given, otherwise an in-process
instance of the same app, so the CLI works standalone.  Exit codes:
0 success, 2 verification failure (failed solve, false check verdict,
benchmark records that failed re-verification), 3 I/O or input errors.
"""

from __future__ import annotations

import csv as csv_mod
import io
import json
import os
import sys

import click
import httpx

EXIT_VERIFICATION = 2
EXIT_IO = 3


class CliFailure(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _client(server: str | None):
    if server:
        return httpx.Client(base_url=server, timeout=None)
    from fastapi.testclient import TestClient

    from .server import app
    return TestClient(app)


def _call(ctx, path: str, payload: dict) -> dict:
    try:
        with _client(ctx.obj.get("server")) as client:
            resp = client.post(path, json=payload)
    except httpx.HTTPError as err:
        raise CliFailure(f"service unreachable: {err}", EXIT_IO)
    if resp.status_code >= 400:
        try:
            body = resp.json()
            message = body.get("message") or body.get("detail") or resp.text
        except json.JSONDecodeError:
            message = resp.text
        raise CliFailure(f"request failed: {message}", EXIT_IO)
    return resp.json()


def _read_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as err:
        raise CliFailure(f"cannot read {path}: {err}", EXIT_IO)
    except json.JSONDecodeError as err:
        raise CliFailure(f"{path} is not valid JSON: {err}", EXIT_IO)


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        click.echo(text, nl=not text.endswith("\n"))
        return
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as err:
        raise CliFailure(f"cannot write {path}: {err}", EXIT_IO)


def _parse_vector(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise CliFailure(f"cannot parse vector {text!r}", EXIT_IO)


def _tagged_model(path: str) -> dict:
    data = _read_json(path)
    if "kind" not in data:
        raise CliFailure(f"{path} has no 'kind' tag (pwa_dc | lc | sparse_lc)", EXIT_IO)
    return data


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Base URL of a running service; defaults to in-process.")
@click.pass_context
def main(ctx, server):
    """Optimal control toolkit for hybrid systems in complementarity form."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command()
@click.option("--in", "infile", required=True, help="System JSON (pwa_dc).")
@click.option("--form", type=click.Choice(["sparse", "compact"]), default="compact")
@click.option("--eta", type=float, default=0.5)
@click.option("--zeta", type=float, default=0.5)
@click.option("--out", default=None, help="Output model JSON path.")
@click.pass_context
def transform(ctx, infile, form, eta, zeta, out):
    """Turn a difference-of-convex system into a complementarity model."""
    system = _read_json(infile)
    system.setdefault("kind", "pwa_dc")
    body = _call(ctx, "/transform", {"system": system, "form": form,
                                     "eta": eta, "zeta": zeta})
    _write_text(out, json.dumps(body["model"]))


@main.command()
@click.option("--model", "model_path", required=True)
@click.option("--x0", required=True, help="Initial state, e.g. \"0.5,-1\".")
@click.option("--inputs", required=True,
              help="JSON file with a list of input vectors, or inline "
                   "\"u0;u1;...\" with comma-separated components.")
@click.option("--out", default=None)
@click.pass_context
def simulate(ctx, model_path, x0, inputs, out):
    """Roll a model forward under a fixed input sequence."""
    if os.path.exists(inputs):
        seq = _read_json(inputs)
    else:
        seq = [_parse_vector(chunk) for chunk in inputs.split(";") if chunk.strip()]
    body = _call(ctx, "/simulate", {"model": _tagged_model(model_path),
                                    "x0": _parse_vector(x0), "inputs": seq})
    _write_text(out, json.dumps(body))


@main.command()
@click.option("--model", "model_path", required=True)
@click.option("--x0", required=True)
@click.option("--N", "horizon", type=int, required=True)
@click.option("--method", type=click.Choice(["local", "oracle"]), default="local")
@click.option("--starts", type=int, default=1)
@click.option("--seed", type=int, default=0)
@click.option("--time-limit", type=float, default=None)
@click.option("--constrain-to-domain", is_flag=True, default=False)
@click.option("--out", default=None)
@click.pass_context
def solve(ctx, model_path, x0, horizon, method, starts, seed, time_limit,
          constrain_to_domain, out):
    """Solve the finite-horizon optimal control problem."""
    body = _call(ctx, "/solve", {"model": _tagged_model(model_path),
                                 "x0": _parse_vector(x0), "N": horizon,
                                 "method": method, "starts": starts,
                                 "seed": seed, "time_limit_s": time_limit,
                                 "constrain_to_domain": constrain_to_domain})
    report = body["report"]
    _write_text(out, json.dumps(report))
    if report["status"] not in ("s_stationary", "global_optimal"):
        raise CliFailure(f"solve ended with status {report['status']}",
                         EXIT_VERIFICATION)


@main.command()
@click.option("--model", "model_path", required=True)
@click.option("--traj", "traj_path", required=True,
              help="JSON {x0, u, x?, w?}; states/complementarity simulated "
                   "when omitted.")
@click.option("--level", type=click.Choice(["kkt", "s", "m", "global",
                                            "mssosc", "inputs"]), default="s")
@click.option("--constrain-to-domain", is_flag=True, default=False)
@click.option("--out", default=None)
@click.pass_context
def check(ctx, model_path, traj_path, level, constrain_to_domain, out):
    """Certify a trajectory point (exit code 2 when the verdict is negative)."""
    body = _call(ctx, "/check", {"model": _tagged_model(model_path),
                                 "trajectory": _read_json(traj_path),
                                 "level": level,
                                 "constrain_to_domain": constrain_to_domain})
    _write_text(out, json.dumps(body))
    if not body["verdict"]:
        raise CliFailure(f"{level} verdict negative", EXIT_VERIFICATION)


@main.command()
@click.option("--config", "config_path", default=None,
              help="BenchConfig JSON; defaults to the desk-scale setup.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", required=True, help="Records CSV path.")
@click.pass_context
def bench(ctx, config_path, seed, out):
    """Run the randomized benchmark and write one CSV row per solve."""
    config = _read_json(config_path) if config_path else {}
    if seed is not None:
        config["seed"] = seed
    body = _call(ctx, "/bench", {"config": config})
    _write_text(out, body["records_csv"])
    click.echo(f"{body['n_records']} records, {body['n_failed']} failed")
    if body["n_failed"]:
        raise CliFailure(f"{body['n_failed']} records failed re-verification",
                         EXIT_VERIFICATION)


@main.command()
@click.option("--records", "records_path", required=True)
@click.option("--out", default=None, help="Profile CSV (tau + one column per method).")
@click.pass_context
def profile(ctx, records_path, out):
    """Performance profile over a records CSV."""
    with open(records_path) as fh:
        text = fh.read()
    body = _call(ctx, "/profile", {"records_csv": text})
    buf = io.StringIO()
    writer = csv_mod.writer(buf)
    methods = sorted(body["rho"])
    writer.writerow(["tau"] + methods)
    for i, tau in enumerate(body["taus"]):
        writer.writerow([repr(tau)] + [repr(body["rho"][m][i]) for m in methods])
    _write_text(out, buf.getvalue())


@main.command()
@click.option("--records", "records_path", required=True)
@click.option("--out", default=None)
@click.pass_context
def gaps(ctx, records_path, out):
    """Objective-gap summary of local methods against the oracle."""
    with open(records_path) as fh:
        text = fh.read()
    body = _call(ctx, "/gaps", {"records_csv": text})
    _write_text(out, json.dumps(body["summaries"], indent=2))


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .server import app
    uvicorn.run(app, host=host, port=port)


def main_entry():  # pragma: no cover - console-script shim
    try:
        main(standalone_mode=False, obj={})
    except CliFailure as err:
        click.echo(str(err), err=True)
        sys.exit(err.code)
    except click.ClickException as err:
        err.show()
        sys.exit(EXIT_IO)
    except click.exceptions.Exit as err:
        sys.exit(err.exit_code)
    except click.exceptions.Abort:
        sys.exit(130)


if __name__ == "__main__":  # pragma: no cover
    main_entry()
