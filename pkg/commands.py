import logging
import sys
from contextlib import contextmanager
from functools import wraps
from pathlib import Path
from typing import Any, Dict, Iterator, Optional

import click
import pandas as pd

from config import build_train_config, load_config, merge_overrides, validate_split_params
from mrfrec import (
    ConfigError,
    DataError,
    MrfError,
    NumericalError,
    evaluate,
    filter_by_activity,
    format_report,
    load_interactions,
    load_model,
    read_header,
    save_model,
    score_batch,
    split_strong_generalization,
    submatrix_users,
    top_n,
    train,
    user_vectors,
    write_report,
)

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

_log = logging.getLogger(__name__)


class PhaseFailure(Exception):
    def __init__(self, phase: str, error: MrfError):
        super().__init__(f"[{phase}] {error}")
        self.phase = phase
        self.error = error


def _exit_code(error: MrfError) -> int:
    if isinstance(error, ConfigError):
        return EXIT_CONFIG
    if isinstance(error, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_DATA


@contextmanager
def phase(label: str) -> Iterator[None]:
    """Tag domain errors raised inside the block with the pipeline phase."""
    try:
        yield
    except MrfError as exc:
        raise PhaseFailure(exc.phase or label, exc) from exc


def reports_failures(command):
    """Decorator mapping domain errors to messages on stderr and exit codes."""
    @wraps(command)
    def wrapped(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except PhaseFailure as failure:
            click.echo(f"error: {failure}", err=True)
            sys.exit(_exit_code(failure.error))
        except MrfError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(_exit_code(exc))
    return wrapped


def _settings(config_path: Optional[str], overrides: Dict[str, Any]) -> Dict[str, Any]:
    with phase("config"):
        data = load_config(Path(config_path)) if config_path else load_config()
        data = merge_overrides(data, overrides)
        validate_split_params(data)
        return data


def _load(data_path: str, settings: Dict[str, Any]):
    with phase("ingest"):
        mat = load_interactions(
            data_path,
            delimiter=settings["delimiter"],
            binarize=settings["binarize"],
            header=settings["header"],
        )
        return filter_by_activity(mat, int(settings["min_user_count"]), int(settings["min_item_count"]))


def _split(mat, settings: Dict[str, Any]):
    with phase("split"):
        return split_strong_generalization(
            mat,
            val_frac=float(settings["val_frac"]),
            test_frac=float(settings["test_frac"]),
            fold_in_frac=float(settings["fold_in_frac"]),
            seed=int(settings["seed"]),
        )


_DATA_KEYS = ("delimiter", "header", "binarize", "min_user_count", "min_item_count")
_SPLIT_KEYS = ("val_frac", "test_frac", "fold_in_frac", "seed")


def register_commands(cli):
    """Register every subcommand on the click group."""
    _register_train_command(cli)
    _register_evaluate_command(cli)
    _register_recommend_command(cli)
    _register_inspect_command(cli)


def _data_options(func):
    options = [
        click.option("--delimiter", default=None, help="Field delimiter of the interaction file."),
        click.option("--header/--no-header", default=None, help="Skip a header line."),
        click.option("--binarize/--no-binarize", default=None, help="Set every interaction value to 1."),
        click.option("--min-user-count", type=int, default=None, help="Drop users with fewer interactions."),
        click.option("--min-item-count", type=int, default=None, help="Drop items with fewer users."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _split_options(func):
    options = [
        click.option("--val-frac", type=float, default=None),
        click.option("--test-frac", type=float, default=None),
        click.option("--fold-in-frac", type=float, default=None),
        click.option("--seed", type=int, default=None),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _register_train_command(cli):
    @cli.command("train")
    @click.argument("data_path", type=click.Path(dir_okay=False))
    @click.argument("model_path", type=click.Path(dir_okay=False))
    @click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
    @click.option("--lambda", "lam", type=float, default=None, help="Ridge strength.")
    @click.option("--alpha", type=float, default=None, help="Column scaling exponent s_i = std_i ** alpha.")
    @click.option("--center/--no-center", default=None)
    @click.option("--solver", type=click.Choice(["dense", "dense-mean-constrained", "sparse"]), default=None)
    @click.option("--target-density", type=float, default=None)
    @click.option("--cap", type=int, default=None, help="Maximum neighbors per column.")
    @click.option("--r", "r", type=float, default=None, help="Block ratio in [0, 1].")
    @click.option("--threads", type=int, default=None)
    @click.option("--omega", type=float, default=None, help="Exponent of the block cost estimate.")
    @click.option("--holdout/--no-holdout", default=False, help="Train only on the training users of the evaluation split.")
    @_data_options
    @_split_options
    @reports_failures
    def train_command(data_path, model_path, config_path, holdout, **overrides):
        """Train a weight matrix and write MODEL_PATH plus MODEL_PATH.report.json."""
        settings = _settings(config_path, {"lambda" if k == "lam" else k: v for k, v in overrides.items()})
        with phase("config"):
            config = build_train_config(settings)

        mat = _load(data_path, settings)
        if holdout:
            split = _split(mat, settings)
            with phase("ingest"):
                mat = submatrix_users(mat, split.train_users)

        with phase("solve"):
            result = train(mat, config)

        extra = {
            "data": {key: settings[key] for key in _DATA_KEYS},
            "split": {key: settings[key] for key in _SPLIT_KEYS} if holdout else None,
            "ks": list(settings["ks"]),
        }
        with phase("persist"):
            try:
                save_model(model_path, result.weights, result.stats, extra)
                result.report.write(str(model_path) + ".report.json")
            except OSError as exc:
                raise DataError(f"Cannot write {model_path}: {exc}") from exc

        report = result.report
        timings = ", ".join(f"{name} {seconds:.3f}s" for name, seconds in report.timings.items())
        click.echo(f"trained {config.solver} model on {report.n_users} users x {report.n_items} items ({timings})")
        click.echo(f"weights: {report.weight_nnz} nonzero (density {report.weight_density:.4g})")
        if report.block_histogram is not None:
            click.echo(f"blocks: {report.n_seeds} seeds, cost estimate {report.cost_estimate:.4g}")


def _model_settings(model, config_path, overrides):
    """Evaluation defaults come from the model header, then config, then flags."""
    settings = _settings(config_path, {})
    stored = dict(model.extra.get("data") or {})
    stored.update(model.extra.get("split") or {})
    if model.extra.get("ks"):
        stored["ks"] = model.extra["ks"]
    settings = merge_overrides(settings, stored)
    settings = merge_overrides(settings, overrides)
    with phase("config"):
        validate_split_params(settings)
    return settings


def _register_evaluate_command(cli):
    @cli.command("evaluate")
    @click.argument("model_path", type=click.Path(dir_okay=False))
    @click.argument("data_path", type=click.Path(dir_okay=False))
    @click.argument("report_path", type=click.Path(dir_okay=False))
    @click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
    @click.option("--k", "ks", type=int, multiple=True, help="Cutoff; repeat for several.")
    @click.option("--partition", type=click.Choice(["test", "validation"]), default="test")
    @_data_options
    @_split_options
    @reports_failures
    def evaluate_command(model_path, data_path, report_path, config_path, ks, partition, **overrides):
        """Evaluate MODEL_PATH under strong generalization and write REPORT_PATH (CSV)."""
        with phase("load"):
            model = load_model(model_path)
        overrides["ks"] = list(ks) if ks else None
        settings = _model_settings(model, config_path, overrides)

        mat = _load(data_path, settings)
        split = _split(mat, settings)
        with phase("evaluate"):
            report = evaluate(model.weights, split, mat, model.stats, ks=settings["ks"], partition=partition)
            try:
                write_report(report, report_path)
            except OSError as exc:
                raise DataError(f"Cannot write {report_path}: {exc}") from exc
        click.echo(format_report(report))


def _register_recommend_command(cli):
    @cli.command("recommend")
    @click.argument("model_path", type=click.Path(dir_okay=False))
    @click.argument("interactions_path", type=click.Path(dir_okay=False))
    @click.argument("output_path", type=click.Path(dir_okay=False))
    @click.option("--n", "n", type=int, default=100, show_default=True)
    @click.option("--batch-size", type=int, default=1000, show_default=True)
    @click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
    @_data_options
    @reports_failures
    def recommend_command(model_path, interactions_path, output_path, n, batch_size, config_path, **overrides):
        """Write the top-N unseen items per user as user_id,rank,item_id,score rows."""
        if n < 1:
            raise ConfigError(f"--n must be >= 1, got {n}")
        with phase("load"):
            model = load_model(model_path)
        settings = _settings(config_path, {})
        settings = merge_overrides(settings, model.extra.get("data") or {})
        settings = merge_overrides(settings, overrides)
        with phase("ingest"):
            mat = load_interactions(
                interactions_path,
                delimiter=settings["delimiter"],
                binarize=settings["binarize"],
                header=settings["header"],
            )

        weights = model.weights
        with phase("recommend"):
            positions = weights.item_ids.get_indexer(mat.item_index)
            if not (positions >= 0).any():
                raise DataError("Model and data share no items.")
            if not (positions >= 0).all():
                _log.warning("%d items unknown to the model are ignored", int((positions < 0).sum()))

            item_ids = weights.item_ids.to_numpy()
            frames = []
            for start in range(0, mat.n_users, batch_size):
                users = range(start, min(start + batch_size, mat.n_users))
                X = user_vectors(mat, {u: mat.user_items(u) for u in users}, positions, weights.m)
                scores = score_batch(weights, X, model.stats)
                for row, user in enumerate(users):
                    seen = X.indices[X.indptr[row]:X.indptr[row + 1]]
                    ranked = top_n(scores[row], exclude=seen, n=n)
                    frames.append(pd.DataFrame({
                        "user_id": mat.user_index[user],
                        "rank": range(1, len(ranked) + 1),
                        "item_id": item_ids[ranked.items],
                        "score": ranked.scores,
                    }))
            out = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(
                columns=["user_id", "rank", "item_id", "score"]
            )
            try:
                out.to_csv(output_path, index=False, float_format="%.10g", lineterminator="\n")
            except OSError as exc:
                raise DataError(f"Cannot write {output_path}: {exc}") from exc
        click.echo(f"wrote {len(out)} recommendations for {mat.n_users} users to {output_path}")


def _register_inspect_command(cli):
    @cli.command("inspect")
    @click.argument("model_path", type=click.Path(dir_okay=False))
    @reports_failures
    def inspect_command(model_path):
        """Print the model header and, when present, its training report."""
        with phase("load"):
            header = read_header(model_path)
        click.echo(f"format version: {header['format_version']}")
        click.echo(f"items: {header['m']}")
        click.echo(f"storage: {header['storage']} ({header['nnz']} nonzero weights)")
        for key, value in sorted(header["model"].items()):
            click.echo(f"{key}: {value}")
        for key, value in sorted((header.get("extra") or {}).items()):
            click.echo(f"{key}: {value}")

        report_path = Path(str(model_path) + ".report.json")
        if report_path.exists():
            click.echo("training report:")
            click.echo(report_path.read_text(encoding="utf-8"))
