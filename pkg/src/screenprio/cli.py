"""Command-line entry point: dataset validation, synthetic embedding,
simulation runs, parameter sweeps, evaluation reports, and serving the
live-session API.

A JSON manifest names the dataset files and defaults; flags override
manifest keys. Exit codes: 0 success, 1 validation/user error, 2 internal
error.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import datastore, evaluation, loop
from .dense import RocchioWeights
from .loop import Datasets, ScreeningRecord, SessionConfig

DEFAULT_WEIGHT_GRID = [(1.0, 1.0, 1.0), (1.0, 0.8, 0.2), (1.0, 0.5, 0.5), (1.0, 1.0, 0.0)]
DEFAULT_K_GRID = [5, 10, 15, 25, 50]


class UserError(click.ClickException):
    exit_code = 1


def _load_manifest(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise UserError(f"manifest not found: {path}")
    except json.JSONDecodeError as exc:
        raise UserError(f"manifest {path} is not valid JSON: {exc}")


def _require(manifest: dict, key: str, override: str | None) -> str:
    value = override or manifest.get(key)
    if not value:
        raise UserError(f"missing {key!r}: set it in the manifest or pass the flag")
    return value


def _open_dataset(manifest: dict, *, corpus=None, topics=None, pools=None,
                  qrels=None, embeddings=None, need_embeddings=True):
    corpus_path = _require(manifest, "corpus", corpus)
    topics_path = _require(manifest, "topics", topics)
    pools_path = _require(manifest, "pools", pools)
    qrels_path = _require(manifest, "qrels", qrels)
    try:
        with open(corpus_path, encoding="utf-8") as fh:
            corpus_records = datastore.parse_corpus(fh)
        with open(topics_path, encoding="utf-8") as tf, open(pools_path, encoding="utf-8") as pf:
            topic_map = datastore.parse_topics(tf, pf)
        with open(qrels_path, encoding="utf-8") as fh:
            qrels_data = datastore.parse_qrels(fh)
    except FileNotFoundError as exc:
        raise UserError(f"cannot read dataset file: {exc.filename}")
    except datastore.DatasetError as exc:
        raise UserError(str(exc))
    emb = None
    emb_path = embeddings or manifest.get("embeddings")
    if emb_path:
        try:
            emb = datastore.load_embeddings(emb_path)
        except (FileNotFoundError, datastore.DatasetError) as exc:
            raise UserError(f"embeddings: {exc}")
    elif need_embeddings:
        raise UserError("missing 'embeddings': set it in the manifest or pass --embeddings")
    return Datasets(corpus=corpus_records, topics=topic_map, embeddings=emb), qrels_data


def _parse_weights(text: str) -> RocchioWeights:
    parts = text.split(",")
    if len(parts) != 3:
        raise UserError(f"--weights expects 'alpha,beta,gamma', got {text!r}")
    try:
        return RocchioWeights(*(float(p) for p in parts))
    except ValueError as exc:
        raise UserError(str(exc))


def _atomic_write(path: Path, content: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(content, encoding="utf-8")
    os.replace(tmp, path)


def _record_filename(config: SessionConfig) -> str:
    if config.weights is not None:
        a, b, g = config.weights.as_tuple()
        wtag = f"a{a:g}-b{b:g}-g{g:g}"
    else:
        wtag = "static"
    return (
        f"{config.collection}__{config.topic_id}__{config.strategy}"
        f"__{wtag}__k{config.k}.json"
    )


@click.group()
def main():
    """Screening prioritisation engine."""


@main.command()
@click.option("--manifest", type=click.Path(), default=None)
@click.option("--corpus", type=click.Path(), default=None)
@click.option("--topics", "topics_path", type=click.Path(), default=None)
@click.option("--pools", type=click.Path(), default=None)
@click.option("--qrels", "qrels_path", type=click.Path(), default=None)
@click.option("--embeddings", type=click.Path(), default=None)
def validate(manifest, corpus, topics_path, pools, qrels_path, embeddings):
    """Cross-check corpus, topics, pools, qrels, and embeddings."""
    m = _load_manifest(manifest)
    datasets, qrels_data = _open_dataset(
        m, corpus=corpus, topics=topics_path, pools=pools, qrels=qrels_path,
        embeddings=embeddings, need_embeddings=False,
    )
    report = datastore.validate_dataset(
        datasets.corpus, datasets.topics, qrels_data, datasets.embeddings
    )
    if report.ok:
        click.echo("OK")
        return
    for line in report.lines():
        click.echo(line)
    sys.exit(1)


@main.command("embed-synthetic")
@click.option("--manifest", type=click.Path(), default=None)
@click.option("--corpus", type=click.Path(), default=None)
@click.option("--topics", "topics_path", type=click.Path(), default=None)
@click.option("--pools", type=click.Path(), default=None)
@click.option("--dim", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def embed_synthetic(manifest, corpus, topics_path, pools, dim, seed, out):
    """Write deterministic hash-projection embeddings for corpus and topics."""
    m = _load_manifest(manifest)
    corpus_path = _require(m, "corpus", corpus)
    tp = _require(m, "topics", topics_path)
    pp = _require(m, "pools", pools)
    try:
        with open(corpus_path, encoding="utf-8") as fh:
            corpus_records = datastore.parse_corpus(fh)
        with open(tp, encoding="utf-8") as tf, open(pp, encoding="utf-8") as pf:
            topic_map = datastore.parse_topics(tf, pf)
        embeddings = datastore.synthetic_embeddings(corpus_records, topic_map, dim, seed)
    except datastore.DatasetError as exc:
        raise UserError(str(exc))
    datastore.save_embeddings(embeddings, out)
    click.echo(f"wrote {len(embeddings)} vectors (dim {dim}) to {out}")


def _run_one(config: SessionConfig, datasets: Datasets, qrels_data, out_dir: Path) -> Path:
    record = loop.run_simulation(config, datasets, qrels_data)
    path = out_dir / _record_filename(config)
    _atomic_write(path, record.to_json())
    return path


@main.command()
@click.option("--manifest", type=click.Path(), default=None)
@click.option("--topics", "topic_filter", default=None,
              help="Comma-separated topic ids (default: all).")
@click.option("--strategy", default="dense_rocchio", show_default=True,
              type=click.Choice(loop.STRATEGIES))
@click.option("--weights", default="1,1,1", show_default=True)
@click.option("--k", type=int, default=loop.DEFAULT_K, show_default=True)
@click.option("--cutoff", type=int, default=None, help="Max feedback iterations.")
@click.option("--feedback-scope", type=click.Choice(loop.FEEDBACK_SCOPES), default="batch",
              show_default=True)
@click.option("--normalize", is_flag=True, help="L2-normalize embeddings at ingestion.")
@click.option("--seed-mode", type=click.Choice(["title", "pos"]), default="title",
              show_default=True, help="TAR seed setting.")
@click.option("--out", type=click.Path(), default=None)
def run(manifest, topic_filter, strategy, weights, k, cutoff, feedback_scope,
        normalize, seed_mode, out):
    """Simulate screening with qrels as the judgment oracle; one record file
    per topic."""
    m = _load_manifest(manifest)
    datasets, qrels_data = _open_dataset(m)
    out_dir = Path(_require(m, "out", out))
    out_dir.mkdir(parents=True, exist_ok=True)
    collection = m.get("collection", "default")
    topic_ids = _select_topics(datasets, topic_filter)
    for tid in topic_ids:
        config = _make_config(
            tid, strategy, _parse_weights(weights), k, cutoff, feedback_scope,
            normalize, seed_mode, collection, datasets, qrels_data,
        )
        path = _run_one(config, datasets, qrels_data, out_dir)
        click.echo(f"wrote {path}")


def _select_topics(datasets: Datasets, topic_filter: str | None) -> list[str]:
    if topic_filter:
        ids = [t.strip() for t in topic_filter.split(",") if t.strip()]
        unknown = [t for t in ids if t not in datasets.topics]
        if unknown:
            raise UserError(f"unknown topics: {', '.join(unknown)}")
        return ids
    return sorted(datasets.topics)


def _make_config(topic_id, strategy, weights, k, cutoff, feedback_scope,
                 normalize, seed_mode, collection, datasets, qrels_data) -> SessionConfig:
    from .tar import SeedConfig

    seed_config = None
    if strategy == "tar_logistic":
        if seed_mode == "pos":
            relevant = sorted(qrels_data.relevant_docs(topic_id))
            pool = set(datasets.topics[topic_id].pool)
            in_pool = [d for d in relevant if d in pool]
            if not in_pool:
                raise UserError(f"topic {topic_id}: no relevant pool doc to seed with")
            seed_config = SeedConfig(mode="pos", pos_doc_id=in_pool[0])
        else:
            seed_config = SeedConfig(mode="title")
    return SessionConfig(
        topic_id=topic_id,
        strategy=strategy,
        k=k,
        weights=weights if strategy == "dense_rocchio" else None,
        seed_config=seed_config,
        max_iterations=cutoff,
        normalize_embeddings=normalize,
        feedback_scope=feedback_scope,
        collection=collection,
    )


@main.command()
@click.option("--manifest", type=click.Path(), default=None)
@click.option("--topics", "topic_filter", default=None)
@click.option("--strategy", "strategies", multiple=True,
              type=click.Choice(loop.STRATEGIES), default=("dense_rocchio",),
              show_default=True)
@click.option("--cutoff", type=int, default=None)
@click.option("--out", type=click.Path(), default=None)
def sweep(manifest, topic_filter, strategies, cutoff, out):
    """Run the full weight-grid x k-grid sweep; resumable (existing record
    files are skipped)."""
    m = _load_manifest(manifest)
    datasets, qrels_data = _open_dataset(m)
    out_dir = Path(_require(m, "out", out))
    out_dir.mkdir(parents=True, exist_ok=True)
    collection = m.get("collection", "default")
    weight_grid = [tuple(w) for w in m.get("weights_grid", DEFAULT_WEIGHT_GRID)]
    k_grid = list(m.get("k_grid", DEFAULT_K_GRID))
    topic_ids = _select_topics(datasets, topic_filter)
    done = skipped = 0
    for strategy in strategies:
        grids = (
            [(RocchioWeights(*w), k) for w in weight_grid for k in k_grid]
            if strategy == "dense_rocchio"
            else [(None, k) for k in k_grid]
        )
        for tid in topic_ids:
            for weights, k in grids:
                config = _make_config(
                    tid, strategy, weights, k, cutoff, "batch", False, "title",
                    collection, datasets, qrels_data,
                )
                path = out_dir / _record_filename(config)
                if path.exists():
                    skipped += 1
                    continue
                _run_one(config, datasets, qrels_data, out_dir)
                done += 1
    click.echo(f"sweep complete: {done} cells written, {skipped} already present")


@main.command("eval")
@click.option("--manifest", type=click.Path(), default=None)
@click.option("--records", "records_dir", type=click.Path(), default=None,
              help="Directory of record files (default: manifest 'out').")
@click.option("--qrels", "qrels_path", type=click.Path(), default=None)
@click.option("--baseline", default=None,
              help="Baseline group: a strategy name or a full group label.")
@click.option("--out", type=click.Path(), default=None,
              help="Directory for report files (default: records dir).")
def eval_cmd(manifest, records_dir, qrels_path, baseline, out):
    """Score record files and emit CSV, aligned-text, and sweep-grid reports."""
    m = _load_manifest(manifest)
    rec_dir = Path(_require(m, "out", records_dir))
    qp = _require(m, "qrels", qrels_path)
    try:
        with open(qp, encoding="utf-8") as fh:
            qrels_data = datastore.parse_qrels(fh)
    except (FileNotFoundError, datastore.DatasetError) as exc:
        raise UserError(f"qrels: {exc}")
    record_paths = sorted(rec_dir.glob("*.json"))
    if not record_paths:
        raise UserError(f"no record files in {rec_dir}")
    records = [ScreeningRecord.from_json(p.read_text(encoding="utf-8")) for p in record_paths]
    try:
        report = evaluation.build_report(records, qrels_data, baseline=baseline)
    except ValueError as exc:
        raise UserError(str(exc))
    out_dir = Path(out) if out else rec_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write(out_dir / "report.csv", report.to_csv())
    _atomic_write(out_dir / "report.txt", report.to_text())
    _atomic_write(out_dir / "sweep_grid.csv", report.to_grid_csv())
    click.echo(report.to_text())


@main.command()
@click.option("--manifest", type=click.Path(), default=None)
@click.option("--bind", default="127.0.0.1:8000", show_default=True)
@click.option("--journal-dir", type=click.Path(), default=None,
              help="Session journal directory (default: <out>/journals).")
def serve(manifest, bind, journal_dir):
    """Serve the live screening-session HTTP API."""
    import uvicorn

    from .service import create_app

    m = _load_manifest(manifest)
    datasets, qrels_data = _open_dataset(m)
    report = datastore.validate_dataset(
        datasets.corpus, datasets.topics, qrels_data, datasets.embeddings
    )
    blocking = report.pool_docs_missing_from_corpus or report.pool_docs_missing_embeddings
    if blocking:
        for line in report.lines():
            click.echo(line, err=True)
        raise UserError("dataset validation failed; refusing to serve")
    if journal_dir is None:
        journal_dir = str(Path(m.get("out", ".")) / "journals")
    host, _, port_s = bind.partition(":")
    try:
        port = int(port_s or "8000")
    except ValueError:
        raise UserError(f"invalid --bind {bind!r}")
    app = create_app(datasets, journal_dir)
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=port, log_level="info")
    except SystemExit as exc:  # uvicorn exits 1 on bind failure
        raise UserError(f"server failed to start on {bind}") from exc


def entrypoint() -> None:
    try:
        main(standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.Abort:
        sys.exit(1)
    except Exception as exc:  # noqa: BLE001 - internal failure
        click.echo(f"internal error: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    entrypoint()
