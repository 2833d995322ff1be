"""Command-line wrapper: ``train`` to a checkpoint, ``predict`` to JSONL."""

from __future__ import annotations

import json
import logging
import sys

import click

from .errors import AdapterError
from .train import AdapterConfig, Checkpoint, finetune, predict


def _emit(obj) -> None:
    click.echo(json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True))


@click.group()
@click.version_option(package_name="graphtext-adapter")
@click.option("--verbose", is_flag=True, help="log per-epoch training loss")
def cli(verbose):
    """Fine-tune a toy seq2seq on an instruction dataset and decode predictions."""
    if verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s")


@cli.command()
@click.option("--dataset", "train_dataset", required=True, type=click.Path(exists=True))
@click.option("--manifest-dir", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path())
@click.option("--model-size", default="tiny", show_default=True)
@click.option("--epochs", type=int, default=4, show_default=True)
@click.option("--batch-size", type=int, default=16, show_default=True)
@click.option("--learning-rate", type=float, default=3e-3, show_default=True)
@click.option("--max-input-tokens", type=int, default=256, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def train(train_dataset, manifest_dir, checkpoint_path, model_size, epochs,
          batch_size, learning_rate, max_input_tokens, seed):
    """Fine-tune on a dataset JSONL and write a checkpoint."""
    config = AdapterConfig(
        train_dataset=str(train_dataset),
        manifest_dir=str(manifest_dir),
        model_size=model_size,
        epochs=epochs,
        batch_size=batch_size,
        learning_rate=learning_rate,
        max_input_tokens=max_input_tokens,
        seed=seed,
    )
    checkpoint = finetune(config)
    checkpoint.save(checkpoint_path)
    _emit(
        {
            "checkpoint": str(checkpoint_path),
            "epochs": epochs,
            "losses": [round(x, 6) for x in checkpoint.history],
            "vocab_size": checkpoint.tokenizer.vocab_size,
            "node_tokens": checkpoint.tokenizer.num_node_tokens,
        }
    )


@cli.command("predict")
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True))
@click.option("--dataset", "eval_dataset", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def predict_cmd(checkpoint_path, eval_dataset, out_path):
    """Greedy-decode an eval JSONL into a predictions file."""
    checkpoint = Checkpoint.load(checkpoint_path)
    records = predict(checkpoint, eval_dataset, out_path)
    _emit({"out": str(out_path), "records": len(records)})


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return 1
    except click.ClickException as e:
        e.show()
        return 1
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    except AdapterError as e:
        click.echo(f"error: {e}", err=True)
        return 1
    except OSError as e:
        click.echo(f"i/o error: {e}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
