"""Command-line interface: synth, index, train, generate, eval, sweep, serve.

Exit codes: 0 success, 1 usage problems, 2 data or model errors.
"""

from __future__ import annotations

import dataclasses
import json
import os
import sys
from pathlib import Path

import click

from .corpus import build_vocabulary, load_corpus, write_corpus
from .errors import ClaraError
from .metrics import load_eval_pairs, text_metrics, write_metrics
from .phenotype import phenotype_eval
from .pipeline import (
    GenerationConfig,
    ModelBundle,
    TrainSettings,
    anchor_sweep,
    check_patient_disjoint,
    config_hash,
    evaluate_split,
    split_corpus,
    sweep_csv,
    train_bundle,
)
from .prototype import build_repository, save_repository
from .synth import synth_corpus


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict):
        raise ClaraError("config file must hold a JSON object")
    return obj


def common_options(fn):
    """--seed/--config on every subcommand, also accepted at group level."""
    fn = click.option("--config", "config_path", type=click.Path(dir_okay=False),
                      default=None, help="JSON file with extra settings.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Random seed.")(fn)
    return fn


def _merge_ctx(ctx, seed, config_path) -> dict:
    obj = dict(ctx.obj or {"seed": 0, "config": {}})
    if config_path:
        obj["config"] = {**obj.get("config", {}), **_load_config(config_path)}
    if seed is not None:
        obj["seed"] = seed
    return obj


def _settings_from(obj: dict, **overrides) -> TrainSettings:
    fields = {f.name for f in dataclasses.fields(TrainSettings)}
    merged = {k: v for k, v in obj.get("config", {}).items() if k in fields}
    merged.update({k: v for k, v in overrides.items() if v is not None})
    merged.setdefault("seed", obj["seed"])
    return TrainSettings(**merged)


def _generation_config(obj: dict, **overrides) -> GenerationConfig:
    fields = {f.name for f in dataclasses.fields(GenerationConfig)}
    merged = {k: v for k, v in obj.get("config", {}).items() if k in fields}
    merged.update({k: v for k, v in overrides.items() if v is not None})
    merged.setdefault("seed", obj["seed"])
    return GenerationConfig(**merged)


def _model_dir_option(value: str | None) -> Path:
    path = value or os.environ.get("CLARA_MODEL_DIR")
    if not path:
        raise click.UsageError("pass --model-dir or set CLARA_MODEL_DIR")
    return Path(path)


def _echo(message: str) -> None:
    click.echo(message)


@click.group()
@click.option("--seed", type=int, default=0, show_default=True, help="Global random seed.")
@click.option("--config", "config_path", type=click.Path(dir_okay=False),
              default=None, help="JSON file with extra settings.")
@click.pass_context
def cli(ctx, seed, config_path):
    """Clinical report auto-completion toolkit."""
    ctx.obj = {"seed": seed, "config": _load_config(config_path)}


@cli.command()
@click.option("--out", required=True, type=click.Path(dir_okay=False, writable=True))
@click.option("--n", "n_reports", type=int, default=500, show_default=True)
@click.option("--modality", type=click.Choice(["xray", "eeg"]), default="eeg",
              show_default=True)
@common_options
@click.pass_context
def synth(ctx, out, n_reports, modality, seed, config_path):
    """Generate a deterministic synthetic corpus."""
    obj = _merge_ctx(ctx, seed, config_path)
    reports = synth_corpus(obj["seed"], n_reports, modality)
    write_corpus(reports, out)
    _echo(f"wrote {len(reports)} reports to {out}")


@cli.command()
@click.option("--corpus", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "repo_out", required=True, type=click.Path(dir_okay=False),
              help="Repository JSONL path.")
@click.option("--vocab-out", default=None, type=click.Path(dir_okay=False),
              help="Vocabulary TSV path (default: <out>.vocab.tsv).")
@click.option("--min-count", type=int, default=3, show_default=True)
@click.option("--section", default=None, help="Section to index (modality default).")
@common_options
@click.pass_context
def index(ctx, corpus, repo_out, vocab_out, min_count, section, seed, config_path):
    """Build the vocabulary and prototype repository from a corpus."""
    _merge_ctx(ctx, seed, config_path)
    vocab_out = vocab_out or str(Path(repo_out).with_suffix(".vocab.tsv"))
    reports = load_corpus(corpus)
    vocab = build_vocabulary(reports, min_count=min_count, section=section)
    vocab.save(vocab_out)
    repo = build_repository(reports, vocab, section=section)
    save_repository(repo, repo_out, vocab_ref=str(vocab_out))
    _echo(f"indexed {len(repo)} prototype sentences over {len(vocab)} tokens")


@cli.command()
@click.argument("which", type=click.Choice(["all", "editor", "anchors", "phenotype"]))
@click.option("--corpus", required=True, type=click.Path(dir_okay=False))
@click.option("--model-dir", default=None, type=click.Path(file_okay=False))
@click.option("--section", default=None)
@click.option("--epochs", type=int, default=None, help="Editor epochs per round.")
@click.option("--rounds", type=int, default=None, help="Editor data-refresh rounds.")
@common_options
@click.pass_context
def train(ctx, which, corpus, model_dir, section, epochs, rounds, seed, config_path):
    """Train models on the train split of a corpus and save the bundle.

    WHICH selects what to (re)train; 'all' builds everything from scratch.
    """
    obj = _merge_ctx(ctx, seed, config_path)
    out = _model_dir_option(model_dir)
    reports = load_corpus(corpus)
    if not reports:
        raise ClaraError("corpus is empty")
    settings = _settings_from(
        obj, section=section, editor_epochs=epochs, editor_rounds=rounds
    )
    train_split, val_split, test_split = split_corpus(reports, seed=settings.seed)
    check_patient_disjoint(train_split, val_split, test_split)
    modality = reports[0].modality

    if which == "all":
        bundle = train_bundle(train_split, modality, settings, progress=_echo)
    else:
        bundle = ModelBundle.load(out)
        if which == "editor":
            from .editor import EditorParams, EditorTrainConfig, train_editor
            from .pipeline import build_editor_pairs

            bundle.editor = EditorParams.init(
                vocab_size=len(bundle.vocab), seed=settings.seed,
                token_dim=settings.token_dim, hidden=settings.hidden,
                feature_dim=settings.embed_dim, max_len=settings.max_len,
            )
            for round_idx in range(settings.editor_rounds):
                pairs = build_editor_pairs(bundle, train_split, settings.max_len)
                train_editor(pairs, bundle.editor, EditorTrainConfig(
                    epochs=settings.editor_epochs, lr=settings.editor_lr,
                    batch_size=settings.editor_batch, seed=settings.seed + round_idx))
                _echo(f"editor round {round_idx + 1}: loss {bundle.editor.loss_history[-1]:.4f}")
        elif which == "anchors":
            import numpy as np

            from .encoder import ClassifierTrainConfig, train_anchor_classifier

            feats = np.stack([bundle.embedding_for_report(r) for r in train_split])
            bundle.anchor_clf = train_anchor_classifier(
                feats, [r.anchors for r in train_split], modality,
                ClassifierTrainConfig(epochs=settings.clf_epochs, lr=settings.clf_lr,
                                      seed=settings.seed))
            _echo(f"anchor classifier loss {bundle.anchor_clf.loss_history[-1]:.4f}")
        else:
            from .phenotype import PhenotypeClassifier, PhenotypeTrainConfig, train_phenotype

            bundle.phenotype_clf = train_phenotype(
                [r.section_text(settings.section) for r in train_split],
                [r.anchors for r in train_split], modality,
                PhenotypeTrainConfig(epochs=settings.phenotype_epochs,
                                     lr=settings.phenotype_lr, seed=settings.seed),
                clf=PhenotypeClassifier.init(modality, max_len=settings.phenotype_max_len,
                                             seed=settings.seed))
            _echo(f"phenotype loss {bundle.phenotype_clf.loss_history[-1]:.4f}")

    bundle.split_ids = {
        "train": [r.id for r in train_split],
        "val": [r.id for r in val_split],
        "test": [r.id for r in test_split],
    }
    bundle.save(out)

    from .plotting import render_loss_figure

    histories = {}
    if bundle.editor is not None:
        histories["editor"] = bundle.editor.loss_history
    if bundle.anchor_clf is not None:
        histories["anchor_clf"] = bundle.anchor_clf.loss_history
    if bundle.phenotype_clf is not None:
        histories["phenotype"] = bundle.phenotype_clf.loss_history
    if histories:
        render_loss_figure(histories, out / "training_loss.png")
    _echo(f"saved model bundle to {out}")


def _select_reports(bundle: ModelBundle, reports, subset: str):
    if subset == "all" or not bundle.split_ids:
        return reports
    wanted = set(bundle.split_ids.get(subset, []))
    chosen = [r for r in reports if r.id in wanted]
    if not chosen:
        raise ClaraError(f"no corpus reports fall in the stored {subset!r} split")
    return chosen


@cli.command()
@click.option("--corpus", required=True, type=click.Path(dir_okay=False))
@click.option("--model-dir", default=None, type=click.Path(file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--mode", type=click.Choice(["full", "retrieve_only"]), default=None)
@click.option("--subset", type=click.Choice(["test", "val", "train", "all"]),
              default="test", show_default=True)
@common_options
@click.pass_context
def generate(ctx, corpus, model_dir, out, mode, subset, seed, config_path):
    """Generate candidates for a corpus subset; writes eval-ready JSONL."""
    obj = _merge_ctx(ctx, seed, config_path)
    bundle = ModelBundle.load(_model_dir_option(model_dir))
    reports = _select_reports(bundle, load_corpus(corpus), subset)
    config = _generation_config(obj, mode=mode)
    outcome = evaluate_split(bundle, reports, config=config)
    with open(out, "w", encoding="utf-8") as fh:
        for row in outcome.eval_rows():
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    _echo(f"wrote {len(outcome.ids)} candidates to {out}")


@cli.command("eval")
@click.option("--corpus", default=None, type=click.Path(dir_okay=False),
              help="Corpus to split and evaluate on (test split).")
@click.option("--pairs", default=None, type=click.Path(dir_okay=False),
              help="Pre-generated eval JSONL instead of a corpus.")
@click.option("--train-corpus", default=None, type=click.Path(dir_okay=False),
              help="Explicit train corpus, to verify split disjointness.")
@click.option("--model-dir", default=None, type=click.Path(file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--mode", type=click.Choice(["full", "retrieve_only"]), default=None)
@click.option("--subset", type=click.Choice(["test", "val", "train", "all"]),
              default="test", show_default=True)
@common_options
@click.pass_context
def eval_cmd(ctx, corpus, pairs, train_corpus, model_dir, out, mode, subset,
             seed, config_path):
    """Evaluate generated reports; writes metrics JSON plus a PNG figure."""
    obj = _merge_ctx(ctx, seed, config_path)
    if (corpus is None) == (pairs is None):
        raise click.UsageError("pass exactly one of --corpus or --pairs")
    bundle = ModelBundle.load(_model_dir_option(model_dir))

    if pairs is not None:
        ids, eval_pairs, gold = load_eval_pairs(pairs)
        metrics = text_metrics(eval_pairs)
        if bundle.phenotype_clf is not None and any(gold):
            texts = [" ".join(p.candidate) for p in eval_pairs]
            accuracy, auc = phenotype_eval(bundle.phenotype_clf, texts, gold)
            metrics["phenotype_accuracy"] = accuracy
            metrics["phenotype_pr_auc"] = auc
    else:
        reports = load_corpus(corpus)
        chosen = _select_reports(bundle, reports, subset)
        if train_corpus is not None:
            check_patient_disjoint(load_corpus(train_corpus), chosen)
        config = _generation_config(obj, mode=mode)
        metrics = evaluate_split(bundle, chosen, config=config).metrics

    write_metrics(metrics, out)
    from .plotting import render_metrics_figure

    figure = Path(out).with_suffix(".png")
    render_metrics_figure(metrics, figure)
    _echo(json.dumps(metrics, indent=2, sort_keys=True))
    _echo(f"wrote {out} and {figure}")


@cli.command()
@click.option("--corpus", required=True, type=click.Path(dir_okay=False))
@click.option("--model-dir", default=None, type=click.Path(file_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@click.option("--counts", default="1,2,3,4,5", show_default=True,
              help="Comma-separated anchor counts.")
@click.option("--mode", type=click.Choice(["full", "retrieve_only"]), default=None)
@click.option("--subset", type=click.Choice(["test", "val", "train", "all"]),
              default="test", show_default=True)
@common_options
@click.pass_context
def sweep(ctx, corpus, model_dir, out_dir, counts, mode, subset, seed, config_path):
    """Evaluate while truncating gold anchors to 1..c; CSV + JSON + figure."""
    obj = _merge_ctx(ctx, seed, config_path)
    try:
        count_list = [int(c) for c in counts.split(",") if c.strip()]
    except ValueError:
        raise click.UsageError(f"bad --counts value {counts!r}")
    if not count_list:
        raise click.UsageError("need at least one anchor count")
    bundle = ModelBundle.load(_model_dir_option(model_dir))
    reports = _select_reports(bundle, load_corpus(corpus), subset)
    config = _generation_config(obj, mode=mode)
    rows = anchor_sweep(bundle, reports, count_list, config=config)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(sweep_csv(rows), encoding="utf-8")
    sidecar = {
        "seed": obj["seed"],
        "config_hash": config_hash({**dataclasses.asdict(config), "counts": count_list}),
        "counts": count_list,
        "mode": config.mode,
        "n_reports": len(reports),
    }
    (out / "sweep.json").write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    from .plotting import render_sweep_figure

    render_sweep_figure(rows, out / "sweep.png")
    for row in rows:
        _echo(f"anchors={row['anchor_count']} cider={row['cider']:.4f} bleu4={row['bleu4']:.4f}")
    _echo(f"wrote sweep.csv, sweep.json, sweep.png to {out}")


@cli.command()
@click.option("--model-dir", default=None, type=click.Path(file_okay=False))
@click.option("--addr", default=None, help="HOST:PORT (default CLARA_ADDR or 127.0.0.1:8787).")
@click.option("--journal", default=None, type=click.Path(dir_okay=False),
              help="Append-only JSONL event log.")
@common_options
@click.pass_context
def serve(ctx, model_dir, addr, journal, seed, config_path):
    """Serve the interactive composition API over HTTP."""
    import uvicorn

    from .service import create_app, resolve_addr

    _merge_ctx(ctx, seed, config_path)
    bundle = ModelBundle.load(_model_dir_option(model_dir))
    host, port = resolve_addr(addr)
    app = create_app(bundle, journal_path=journal)
    _echo(f"serving on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


def main(argv=None) -> int:
    """Entry point with the documented exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except ClaraError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except OSError as exc:
        click.echo(f"io error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
