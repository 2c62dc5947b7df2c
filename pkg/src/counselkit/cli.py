"""Command-line interface: serve, ingest, replay, metrics, eval, export."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .analytics import Message, evaluate_transcript
from .clock import ManualClock, format_ts, parse_ts
from .config import EngineConfig, load_config
from .errors import (
    ConfigurationError,
    CorruptLogError,
    CounselkitError,
    IntegrityError,
    NotFoundError,
    ProviderError,
)
from .gateway import CallTrace, LlmGateway, RemoteProvider, ScriptedProvider, ScriptedProviderScript
from .knowledge import ingest as ingest_chapters
from .orchestrator import Engine
from .report import collect_messages, daily_rows, write_report
from .storage import Store

EXIT_CODES = (
    (ConfigurationError, 2),
    (NotFoundError, 3),
    ((IntegrityError, CorruptLogError), 4),
    (ProviderError, 5),
)


def _fail(exc: Exception) -> None:
    code = 1
    for classes, exit_code in EXIT_CODES:
        if isinstance(exc, classes):
            code = exit_code
            break
    line = json.dumps({"error": {"class": type(exc).__name__, "message": str(exc)}})
    click.echo(line, err=True)
    sys.exit(code)


def _provider(provider_name: str, script_path: str | None):
    if provider_name == "scripted":
        if not script_path:
            raise ConfigurationError("scripted provider requires --script")
        return ScriptedProvider(ScriptedProviderScript.from_file(script_path))
    return RemoteProvider()


@click.group()
def main():
    """Counseling-agent engine: serve the API or run offline pipelines."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--store-dir", type=click.Path(), default="./store", show_default=True)
@click.option("--provider", "provider_name", type=click.Choice(["scripted", "remote"]),
              default="remote", show_default=True)
@click.option("--script", "script_path", type=click.Path(exists=True), default=None,
              help="Provider script file (required with --provider scripted).")
@click.option("--port", type=int, default=8470, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--admin-token", default=None, help="Bearer token for /admin endpoints.")
@click.option("--personas", "personas_path", type=click.Path(exists=True), default=None,
              help="Persona definitions file (defaults to the built-in Ellis persona).")
def serve(config_path, store_dir, provider_name, script_path, port, host, admin_token,
          personas_path):
    """Run the HTTP/JSON service."""
    import uvicorn

    from .empathy import load_personas
    from .service import create_app

    try:
        config = load_config(config_path)
        personas = load_personas(personas_path) if personas_path else None
        engine = Engine(Store(store_dir), _provider(provider_name, script_path), config,
                        personas=personas)
        app = create_app(engine, admin_token=admin_token)
    except Exception as exc:
        _fail(exc)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.argument("chapters_file", type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--provider", "provider_name", type=click.Choice(["scripted", "remote"]),
              default="remote", show_default=True)
@click.option("--script", "script_path", type=click.Path(exists=True), default=None)
def ingest(chapters_file, out_path, provider_name, script_path):
    """Distill a chapters file (JSON list of {source, body}) into a knowledge pack."""
    try:
        chapters = json.loads(Path(chapters_file).read_text(encoding="utf-8"))
        gateway = LlmGateway(_provider(provider_name, script_path), CallTrace())
        result = ingest_chapters(gateway, chapters)
        result.pack().save(out_path)
    except Exception as exc:
        _fail(exc)
    for line in result.dropped:
        click.echo(f"dropped: {line}")
    click.echo(f"wrote {len(result.entries)} entries to {out_path} "
               f"({len(result.dropped)} dropped)")


@main.command()
@click.argument("scenario_file", type=click.Path(exists=True))
@click.option("--script", "script_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def replay(scenario_file, script_path, out_dir, config_path):
    """Drive a scripted scenario through the full pipeline, fully offline.

    Identical scenario + script always produce a byte-identical output
    directory: the clock, ids, and tokens are all pinned by the scenario.
    """
    try:
        scenario = json.loads(Path(scenario_file).read_text(encoding="utf-8"))
        config = load_config(config_path)
        clock = ManualClock(parse_ts(scenario.get("start_time", "2025-01-01T00:00:00Z")))
        provider = ScriptedProvider(ScriptedProviderScript.from_file(script_path))
        store = Store(Path(out_dir) / "store")
        engine = Engine(store, provider, config, clock=clock)

        client_spec = scenario.get("client", {})
        client_id = client_spec.get("client_id", "c1")
        engine.create_client(
            client_spec.get("display_name", "Replay Client"),
            client_id=client_id,
            token=f"replay-token-{client_id}",
        )
        interval = float(scenario.get("turn_interval_s", 60))
        live = engine.open_session(
            client_id,
            mode=scenario.get("mode", "ca_plus"),
            persona_id=scenario.get("persona_id", "ellis"),
        )
        for text in scenario.get("turns", []):
            clock.advance(interval)
            engine.handle_message(live.state.session_id, text)
        if scenario.get("close", True):
            clock.advance(interval)
            engine.close_session(live.state.session_id, reason="scenario_end")

        transcript_path = Path(out_dir) / "transcript.txt"
        lines = [f"[{m.ts}] {m.role}: {m.text}" for m in engine.transcript(live.state.session_id)]
        transcript_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except Exception as exc:
        _fail(exc)
    click.echo(f"replayed {len(scenario.get('turns', []))} turns into {out_dir}")


@main.command()
@click.argument("log_dir", type=click.Path(exists=True))
@click.option("--by-day", is_flag=True, default=True, help="Aggregate per client-day.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Output directory (defaults to LOG_DIR/metrics).")
@click.option("--tz", default="UTC", show_default=True)
@click.option("--idle-threshold-min", type=float, default=8.0, show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
def metrics(log_dir, by_day, out_dir, tz, idle_threshold_min, figures):
    """Compute engagement metrics over a store's logs; write reports and figures."""
    try:
        store = Store(log_dir)
        per_client = collect_messages(store)
        rows = daily_rows(per_client, idle_threshold_min=idle_threshold_min, tz=tz)
        artifacts = write_report(rows, out_dir or (Path(log_dir) / "metrics"),
                                 render_figures=figures)
    except Exception as exc:
        _fail(exc)
    click.echo(f"{len(rows)} client-day rows")
    for name, path in artifacts.items():
        click.echo(f"{name}: {path}")


@main.command("eval")
@click.argument("transcript_file", type=click.Path(exists=True))
@click.option("--rubric", "rubric_path", type=click.Path(exists=True), default=None,
              help="JSON list of dimension names (defaults to the built-in 12).")
@click.option("--provider", "provider_name", type=click.Choice(["scripted", "remote"]),
              default="remote", show_default=True)
@click.option("--script", "script_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
def eval_command(transcript_file, rubric_path, provider_name, script_path, out_path):
    """Score a transcript (events.log or JSON message list) against the rubric."""
    try:
        messages = _read_transcript(Path(transcript_file))
        dimensions = None
        if rubric_path:
            dimensions = tuple(json.loads(Path(rubric_path).read_text(encoding="utf-8")))
        gateway = LlmGateway(_provider(provider_name, script_path), CallTrace())
        kwargs = {"dimensions": dimensions} if dimensions else {}
        report = evaluate_transcript(gateway, messages, **kwargs)
        payload = {
            "scores": [
                {"dimension": s.dimension, "score": s.score, "justification": s.justification}
                for s in report.scores
            ],
            "unscored": [{"dimension": d, "error": e} for d, e in report.unscored],
        }
    except Exception as exc:
        _fail(exc)
    text = json.dumps(payload, indent=2, ensure_ascii=False)
    if out_path:
        Path(out_path).write_text(text + "\n", encoding="utf-8")
        click.echo(f"wrote {out_path}")
    else:
        click.echo(text)


def _read_transcript(path: Path) -> list[Message]:
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("["):
        raw = json.loads(text)
        return [
            Message(m["role"], m["text"], m.get("ts", "1970-01-01T00:00:00.000Z"))
            for m in raw
        ]
    messages = []
    for line in text.splitlines():
        if not line.strip():
            continue
        record = json.loads(line)
        if record.get("kind") in ("client_msg", "agent_msg"):
            role = "client" if record["kind"] == "client_msg" else "agent"
            messages.append(Message(role, record["payload"]["text"], record["ts"]))
    return messages


@main.command()
@click.argument("client_id")
@click.option("--store-dir", type=click.Path(exists=True), required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
def export(client_id, store_dir, out_path):
    """Bundle one client's logs and documents into a portable archive."""
    try:
        path = Store(store_dir).export_client(client_id, out_path)
    except Exception as exc:
        _fail(exc)
    click.echo(f"exported {client_id} to {path}")


if __name__ == "__main__":
    main()
