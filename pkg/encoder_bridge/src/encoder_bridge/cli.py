"""Command-line interface for the encoder bridge."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .encode import EncodeJob, run_job


@click.group()
def main():
    """Encode documents and topics into the engine's embedding format."""


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--topics", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--model", required=True, help="Hugging Face model name or local path.")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--batch-size", default=32, show_default=True, type=int)
@click.option("--max-len", default=512, show_default=True, type=int)
def encode(corpus: Path, topics: Path, model: str, out: Path, batch_size: int, max_len: int):
    """Encode CORPUS documents and TOPICS queries; write OUT plus sidecar."""
    try:
        job = EncodeJob(
            corpus_path=corpus,
            topics_path=topics,
            model_name=model,
            out_path=out,
            batch_size=batch_size,
            max_len=max_len,
        )
        metadata = run_job(job)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    click.echo(
        f"wrote {metadata['documents'] + metadata['topics']} vectors "
        f"(dim {metadata['dim']}) to {out}"
    )


def entrypoint() -> None:
    try:
        main(standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.Abort:
        sys.exit(1)


if __name__ == "__main__":
    entrypoint()
