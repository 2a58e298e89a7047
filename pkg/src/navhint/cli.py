"""Command-line entry points: gen-env, gen-data, train, eval, serve, report."""

from __future__ import annotations

import json
import sys
from dataclasses import replace
from pathlib import Path

import click

from . import corpus as corpus_mod
from . import evaluation, grounding, perturb, serialize, service as service_mod
from .envmodel import EnvConfig, generate_environment
from .seeding import derive_seed


def _load_config(ctx: click.Context) -> evaluation.ExperimentConfig:
    config = evaluation.ExperimentConfig(seed=ctx.obj["seed"])
    path = ctx.obj.get("config")
    if path:
        overrides = json.loads(Path(path).read_text(encoding="utf-8"))
        corpus_fields = {k: v for k, v in overrides.items() if k in ("n_envs", "routes_per_env")}
        if "length_range" in overrides:
            corpus_fields["length_range"] = tuple(overrides["length_range"])
        if corpus_fields:
            config.corpus = replace(config.corpus, **corpus_fields)
        for key in (
            "n_detection_pairs",
            "n_type_pairs",
            "n_one_stage_pairs",
            "n_eval_examples",
            "n_suggestion_cases",
            "n_episodes",
            "check_budget",
        ):
            if key in overrides:
                setattr(config, key, overrides[key])
    return config


@click.group()
@click.option("--seed", default=42, show_default=True, help="Master seed for all derived randomness.")
@click.option("--config", type=click.Path(exists=True), default=None, help="JSON config overrides.")
@click.option("--out", type=click.Path(), default=None, help="Default output path.")
@click.pass_context
def main(ctx: click.Context, seed: int, config: str | None, out: str | None) -> None:
    """Instruction generation, hallucination detection, and follower-study tooling."""
    ctx.obj = {"seed": seed, "config": config, "out": out}


@main.command("gen-env")
@click.option("--nodes", default="10-16", show_default=True, help="Node count range, e.g. 8-12.")
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_context
def gen_env(ctx: click.Context, nodes: str, out_path: str | None) -> None:
    """Generate one environment and write it as a versioned env file."""
    lo, hi = (int(p) for p in nodes.split("-"))
    env = generate_environment(ctx.obj["seed"], EnvConfig(node_range=(lo, hi)))
    lines = serialize.env_to_lines(env)
    target = out_path or ctx.obj.get("out")
    if target:
        serialize.write_text(target, lines)
        click.echo(f"wrote {env.id} ({len(env.nodes)} nodes) to {target}")
    else:
        click.echo("\n".join(lines))


@main.command("gen-data")
@click.option("--out", "out_dir", type=click.Path(), required=True, help="Output directory.")
@click.pass_context
def gen_data(ctx: click.Context, out_dir: str) -> None:
    """Emit the corpus splits and every training-pair file."""
    config = _load_config(ctx)
    envs, records = corpus_mod.build_corpus(config.corpus)
    train, dev, test = corpus_mod.split_records(records)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, env in envs.items():
        serialize.write_text(out / f"{name}.env", serialize.env_to_lines(env))
    for split_name, split in (("train", train), ("dev", dev), ("test", test)):
        serialize.write_text(out / f"corpus-{split_name}.jsonl", serialize.corpus_to_lines(split))
    det = perturb.build_detection_pairs(
        train, envs, derive_seed(config.seed, "detpairs"), n_pairs=config.n_detection_pairs
    )
    swap = perturb.build_detection_pairs(
        train,
        envs,
        derive_seed(config.seed, "swappairs"),
        strategy=perturb.SAME_ENV_SWAP,
        n_pairs=config.n_detection_pairs,
    )
    typ = perturb.build_type_pairs(train, envs, derive_seed(config.seed, "typepairs"), n_pairs=config.n_type_pairs)
    one = perturb.build_one_stage_pairs(
        train, envs, derive_seed(config.seed, "onestage"), n_pairs=config.n_one_stage_pairs
    )
    for name, pairs, task in (
        ("pairs-detection", det, "detection"),
        ("pairs-detection-same-env-swap", swap, "detection"),
        ("pairs-type", typ, "type"),
        ("pairs-one-stage", one, "detection"),
    ):
        serialize.write_text(out / f"{name}.jsonl", serialize.pairs_to_lines(pairs, task))
    click.echo(f"wrote corpus ({len(records)} records) and pair files to {out}")


@main.command("train")
@click.option("--task", type=click.Choice(["detection", "type"]), required=True)
@click.option("--pairs", "pairs_path", type=click.Path(exists=True), required=True)
@click.option("--dev", "dev_path", type=click.Path(exists=True), default=None,
              help="Pairs file whose members calibrate the decision threshold.")
@click.option("--envs", "env_dir", type=click.Path(exists=True), required=True,
              help="Directory of .env files the pairs reference.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--epochs", default=500, show_default=True)
@click.option("--learning-rate", default=0.1, show_default=True)
@click.pass_context
def train(
    ctx: click.Context,
    task: str,
    pairs_path: str,
    dev_path: str | None,
    env_dir: str,
    out_path: str,
    epochs: int,
    learning_rate: float,
) -> None:
    """Train a grounding model on a pairs file and write the model file."""
    envs = {}
    for env_file in sorted(Path(env_dir).glob("*.env")):
        env = serialize.env_from_lines(serialize.read_lines(env_file))
        envs[env.id] = env
    pairs, _ = serialize.pairs_from_lines(serialize.read_lines(pairs_path))
    config = grounding.TrainConfig(learning_rate=learning_rate, epochs=epochs, seed=ctx.obj["seed"])
    model = grounding.train_contrastive(pairs, envs, config, task=task)
    if dev_path:
        dev_pairs, _ = serialize.pairs_from_lines(serialize.read_lines(dev_path))
        examples = [p.positive for p in dev_pairs] + [p.negative for p in dev_pairs]
        model = model.with_threshold(grounding.select_threshold_for(model, examples, envs))
    serialize.write_text(out_path, serialize.model_to_lines(model))
    click.echo(f"trained {task} model on {len(pairs)} pairs -> {out_path}")


@main.command("eval")
@click.option("--suite", type=click.Choice(["intrinsic", "extrinsic", "all"]), default="all", show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.pass_context
def eval_cmd(ctx: click.Context, suite: str, out_path: str | None) -> None:
    """Run the standard experiment suite and emit machine-readable reports."""
    config = _load_config(ctx)
    bundle = evaluation.run_experiment(config, suite=suite)
    target = out_path or ctx.obj.get("out")
    if target:
        serialize.write_text(target, serialize.report_to_lines(bundle.to_dict()))
        click.echo(f"wrote report to {target}")
    click.echo(bundle.summary())


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--log-dir", default="study-logs", show_default=True)
@click.option("--tasks", "n_tasks", default=12, show_default=True)
@click.option("--static", "static_dir", type=click.Path(), default=None,
              help="Directory with the built browser UI (served at /).")
@click.pass_context
def serve(ctx: click.Context, host: str, port: int, log_dir: str, n_tasks: int, static_dir: str | None) -> None:
    """Train the systems, then serve the study API (and UI, if built)."""
    import uvicorn

    config = _load_config(ctx)
    click.echo("training systems (seeded, deterministic)...")
    svc = service_mod.build_service(config, log_dir=log_dir, n_tasks=n_tasks)
    app = service_mod.create_app(svc, static_dir=static_dir)
    click.echo(f"serving on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command("report")
@click.option("--log-dir", type=click.Path(exists=True), required=True)
@click.pass_context
def report(ctx: click.Context, log_dir: str) -> None:
    """Summarize exported session logs: SR, DIST, and check counts per condition."""
    del ctx
    lines = []
    for path in sorted(Path(log_dir).glob("events-*.jsonl")):
        lines.extend(path.read_text(encoding="utf-8").splitlines())
    if not lines:
        click.echo("no session logs found")
        sys.exit(1)
    sessions: dict[str, dict] = {}
    for line in lines:
        record = json.loads(line)
        if record.get("schema") == serialize.EVENTS_SCHEMA:
            sessions[record["session"]] = {"condition": record["condition"], "checks": 0, "moves": 0}
        elif record["kind"] == "check":
            sessions[record["session"]]["checks"] += 1
        elif record["kind"] == "move" and not record["payload"].get("rejected"):
            sessions[record["session"]]["moves"] += 1
    by_condition: dict[str, list[dict]] = {}
    for info in sessions.values():
        by_condition.setdefault(info["condition"], []).append(info)
    click.echo(f"{'condition':<22} {'sessions':>8} {'checks':>8} {'moves':>8}")
    for condition, infos in sorted(by_condition.items()):
        checks = sum(i["checks"] for i in infos) / len(infos)
        moves = sum(i["moves"] for i in infos) / len(infos)
        click.echo(f"{condition:<22} {len(infos):>8} {checks:>8.2f} {moves:>8.2f}")


if __name__ == "__main__":
    main()
