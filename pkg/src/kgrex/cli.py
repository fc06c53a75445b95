"""Command-line entry point.

Subcommands: group, learn, infer, label, justify, pipeline. Flags override
config-file keys. Exit codes: 0 success, 2 validation/config error, 3
data-format error, 4 internal failure.
"""

from __future__ import annotations

import functools
import sys

import click

from . import pipeline
from .errors import (
    CorruptionError,
    FormatError,
    ParseError,
    PipelineError,
    StratificationError,
    ValidationError,
)

_FORMAT_ERRORS = (FormatError, CorruptionError, ParseError, StratificationError)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _FORMAT_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)
        except ValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
        except PipelineError as exc:
            click.echo(f"internal error: {exc}", err=True)
            sys.exit(4)

    return wrapper


def _common_options(fn):
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None, help="JSON config file."),
        click.option("--train", type=click.Path(dir_okay=False), default=None, help="Train feature-map store (.fms)."),
        click.option("--test", type=click.Path(dir_okay=False), default=None, help="Test feature-map store (.fms)."),
        click.option("--seg", type=click.Path(dir_okay=False), default=None, help="Segmentation store (.seg)."),
        click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory for all artifacts."),
        click.option("--threads", type=int, default=1, show_default=True, help="Worker-thread cap for parallel stages."),
        click.option("--seed", type=int, default=None, help="Seed recorded in the config."),
    ]
    for opt in reversed(options):
        fn = opt(fn)
    return fn


def _build_config(config_path, **overrides) -> pipeline.PipelineConfig:
    cfg = pipeline.load_config(config_path) if config_path else pipeline.PipelineConfig()
    return pipeline.apply_overrides(cfg, **overrides)


@click.group()
def main():
    """Extract an interpretable rule-set from CNN feature-map stores."""


@main.command("group")
@_common_options
@_guarded
def group_cmd(config_path, train, test, seg, out, threads, seed):
    """Compute kernel groups from the train store."""
    cfg = _build_config(config_path, train=train, test=test, seg=seg, out=out, seed=seed)
    grouping = pipeline.cmd_group(cfg, threads=threads)
    click.echo(f"grouped {len(grouping.groups)} kernels (theta_s={grouping.theta_s})")


@main.command("learn")
@_common_options
@_guarded
def learn_cmd(config_path, train, test, seg, out, threads, seed):
    """Binarize the train store and induce the rule-set."""
    cfg = _build_config(config_path, train=train, test=test, seg=seg, out=out, seed=seed)
    result, report = pipeline.cmd_learn(cfg, threads=threads)
    click.echo(
        f"learned {report.n_rules} rules ({report.n_unique_predicates} predicates, "
        f"size {report.size}); training accuracy {report.accuracy:.4f}"
    )


@main.command("infer")
@_common_options
@click.option("--ruleset", type=click.Path(dir_okay=False), default=None, help="Rule-set file (.lp); defaults to the learned one.")
@_guarded
def infer_cmd(config_path, train, test, seg, out, threads, seed, ruleset):
    """Classify the test store with the learned rule-set."""
    cfg = _build_config(config_path, train=train, test=test, seg=seg, out=out, seed=seed)
    _, report = pipeline.cmd_infer(cfg, ruleset_path=ruleset)
    fid = "n/a" if report.fidelity is None else f"{report.fidelity:.4f}"
    click.echo(f"accuracy {report.accuracy:.4f}, fidelity {fid}, abstained {report.n_abstain}")


@main.command("label")
@_common_options
@click.option("--ruleset", type=click.Path(dir_okay=False), default=None, help="Rule-set file (.lp); defaults to the learned one.")
@_guarded
def label_cmd(config_path, train, test, seg, out, threads, seed, ruleset):
    """Label rule-set predicates with segmentation concepts."""
    cfg = _build_config(config_path, train=train, test=test, seg=seg, out=out, seed=seed)
    assignment = pipeline.cmd_label(cfg, ruleset_path=ruleset, threads=threads)
    for gid in sorted(assignment):
        click.echo(f"{gid} -> {assignment[gid]}")


@main.command("justify")
@_common_options
@click.option("--ruleset", type=click.Path(dir_okay=False), default=None, help="Rule-set file (.lp); defaults to the learned one.")
@click.option("--image", "image_id", required=True, help="Image id from the test manifest.")
@click.option("--query", "query_class", default=None, help="Restrict the proof to one class.")
@click.option("--full-depth", is_flag=True, default=False, help="Expand abnormality sub-proofs fully.")
@_guarded
def justify_cmd(config_path, train, test, seg, out, threads, seed, ruleset, image_id, query_class, full_depth):
    """Print the proof tree behind one test image's classification."""
    cfg = _build_config(config_path, train=train, test=test, seg=seg, out=out, seed=seed)
    text = pipeline.cmd_justify(
        cfg, image_id, ruleset_path=ruleset, query_class=query_class, full_depth=full_depth
    )
    click.echo(text, nl=False)


@main.command("pipeline")
@_common_options
@_guarded
def pipeline_cmd(config_path, train, test, seg, out, threads, seed):
    """Run group, learn, infer, and label end to end."""
    cfg = _build_config(config_path, train=train, test=test, seg=seg, out=out, seed=seed)
    artifacts = pipeline.cmd_pipeline(cfg, threads=threads)
    for name in sorted(artifacts):
        click.echo(f"{name}: {artifacts[name]}")


if __name__ == "__main__":
    main()
