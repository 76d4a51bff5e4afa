"""Command-line interface: a thin client for the pipeline service.

By default every subcommand talks to an in-process instance of the FastAPI app
over an ASGI transport, so no server needs to be running; pass --server URL to
target a live instance instead (start one with `accent-tts serve`). On failure
a machine-readable error record is printed to stderr and the exit code is
nonzero.
"""

from __future__ import annotations

import json
import sys

import click
import httpx

from .config import parse_override_value


def _post(server: str | None, path: str, payload: dict) -> httpx.Response:
    if server:
        with httpx.Client(base_url=server, timeout=None) as client:
            return client.post(path, json=payload)

    import asyncio

    from .service import create_app

    async def go():
        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://accent-tts.local", timeout=None
        ) as client:
            return await client.post(path, json=payload)

    return asyncio.run(go())


def _payload(config, inline_set) -> dict:
    overrides = {}
    for item in inline_set:
        if "=" not in item:
            raise click.UsageError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        overrides[key] = parse_override_value(raw)
    return {"config_path": config, "overrides": overrides}


def _call(server, path, payload) -> dict:
    try:
        response = _post(server, path, payload)
    except httpx.HTTPError as exc:
        record = {"error": str(exc), "kind": type(exc).__name__, "command": path.strip("/")}
        click.echo(json.dumps(record), err=True)
        sys.exit(2)
    body = response.json()
    if response.status_code >= 400:
        if "error" not in body:  # FastAPI validation errors
            body = {
                "error": json.dumps(body.get("detail", body)),
                "kind": "RequestValidationError",
                "command": path.strip("/"),
            }
        click.echo(json.dumps(body), err=True)
        sys.exit(1)
    click.echo(json.dumps(body, indent=1, sort_keys=True))
    return body


config_option = click.option("--config", "-c", required=True, help="YAML config file")
set_option = click.option(
    "--set", "-s", "inline_set", multiple=True, metavar="KEY=VALUE",
    help="override a config key (dotted path), e.g. -s training.total_steps=100",
)
server_option = click.option(
    "--server", default=None, help="base URL of a running service (default: in-process)"
)


@click.group()
def main():
    """Accented TTS: corpus preparation, training, banking, synthesis, evaluation."""


@main.command("synth-corpus")
@config_option
@set_option
@server_option
def synth_corpus(config, inline_set, server):
    """Generate the synthetic factorized corpus (WAVs + manifest)."""
    _call(server, "/synth-corpus", _payload(config, inline_set))


@main.command()
@config_option
@set_option
@server_option
def prepare(config, inline_set, server):
    """Build manifest ingestion, splits, mel cache, and the symbol table."""
    _call(server, "/prepare", _payload(config, inline_set))


@main.command()
@config_option
@set_option
@server_option
def train(config, inline_set, server):
    """Run the optimization loop and write checkpoints + training log."""
    _call(server, "/train", _payload(config, inline_set))


@main.command()
@config_option
@set_option
@server_option
@click.option("--checkpoint", default=None, help="checkpoint path (default: latest)")
def bank(config, inline_set, server, checkpoint):
    """Average validation posterior means into the embedding bank."""
    payload = _payload(config, inline_set)
    payload["checkpoint"] = checkpoint
    _call(server, "/bank", payload)


@main.command()
@config_option
@set_option
@server_option
@click.option("--text", required=True)
@click.option("--speaker", required=True)
@click.option("--accent", required=True, help="target accent (non-native = conversion)")
@click.option("--checkpoint", default=None)
@click.option("--bank-path", default=None)
@click.option("--out-name", default=None)
@click.option("--save-mel", is_flag=True, default=False)
@click.option("--save-alignment", is_flag=True, default=False)
@click.option("--sampling-seed", default=0, type=int)
def synth(config, inline_set, server, text, speaker, accent, checkpoint, bank_path,
          out_name, save_mel, save_alignment, sampling_seed):
    """Reference-free synthesis of any speaker in any accent."""
    payload = _payload(config, inline_set)
    payload.update(
        text=text, speaker=speaker, accent=accent, checkpoint=checkpoint,
        bank_path=bank_path, out_name=out_name, save_mel=save_mel,
        save_alignment=save_alignment, sampling_seed=sampling_seed,
    )
    _call(server, "/synth", payload)


@main.command("eval")
@config_option
@set_option
@server_option
@click.option("--checkpoint", default=None)
@click.option("--bank-path", default=None)
def eval_cmd(config, inline_set, server, checkpoint, bank_path):
    """Objective metrics (MCD, WER) plus latent-space analysis and t-SNE export."""
    payload = _payload(config, inline_set)
    payload.update(checkpoint=checkpoint, bank_path=bank_path)
    _call(server, "/eval", payload)


@main.command()
@click.option("--input", "input_path", required=True, help="log / tsv / report file")
@click.option(
    "--kind", required=True,
    type=click.Choice(["training_curve", "tsne_scatter", "table"]),
)
@click.option("--output", required=True)
def plot(input_path, kind, output):
    """Render a figure or table artifact from pipeline outputs (local)."""
    from .errors import AccentTtsError
    from .plots import PlotSpec, render

    try:
        meta = render(PlotSpec(input_path=input_path, kind=kind, output_path=output))
    except AccentTtsError as exc:
        click.echo(json.dumps({"error": str(exc), "kind": type(exc).__name__}), err=True)
        sys.exit(1)
    click.echo(json.dumps(meta, indent=1, sort_keys=True))


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8765, type=int)
def serve(host, port):
    """Run the pipeline service with uvicorn."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    main()
