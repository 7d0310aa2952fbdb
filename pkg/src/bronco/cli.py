"""Command line interface.

Exit codes follow the QA contract: 0 clean, 1 error, 2 QA warning.
``BRONCO_THREADS`` caps internal parallelism (the current kernels run
single-threaded; the value is recorded in the run config).
"""
from __future__ import annotations

import json
import os
import sys

import click

from .errors import BroncoError
from .pipeline import STAGES, PipelineConfig, export_outputs, run_pipeline


@click.group()
def main():
    """Bronchovascular bundle modeling from chest CT volumes."""


@main.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True),
              help="CT volume (.nii, .nii.gz or .mhd)")
@click.option("--lung-mask", "lung_mask", type=click.Path(exists=True), default=None,
              help="Precomputed lung mask; skips the fallback segmentation")
@click.option("--out", "out_dir", required=True, type=click.Path(),
              help="Run directory for artifacts")
@click.option("--stages", default=None,
              help=f"Comma-separated contiguous stage range (canonical order: {','.join(STAGES)})")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config file; command line flags override its values")
@click.option("--binary", is_flag=True, help="Also export the binary vessels+bronchi mask")
@click.option("--labeled", is_flag=True, help="Also export the branch-labeled mask")
@click.option("--regression", "regression", type=click.Path(exists=True), default=None,
              help="Regression model JSON for the QA stage")
@click.option("--seed", type=int, default=None, help="Seed recorded into the GMM model")
@click.option("--gmm-k", type=int, default=None, help="Mixture component count (default 3)")
@click.option("--stop-factor", type=float, default=None,
              help="Fast-marching stop-time factor over the node's longest edge (default 2.0)")
@click.option("--level", type=float, default=None, help="Prediction interval level (default 0.95)")
@click.option("--flip-axial", is_flag=True, default=None,
              help="Flip the axial convention for feet-first volumes")
def run(input_path, lung_mask, out_dir, stages, config_path, binary, labeled,
        regression, seed, gmm_k, stop_factor, level, flip_axial):
    """Run the pipeline (or a contiguous stage range) on one CT volume."""
    file_cfg = {}
    if config_path:
        file_cfg = json.load(open(config_path))
    file_cfg["input"] = input_path
    file_cfg["out"] = out_dir
    if lung_mask is not None:
        file_cfg["lung_mask"] = lung_mask
    if stages is not None:
        file_cfg["stages"] = [s.strip() for s in stages.split(",") if s.strip()]
    if regression is not None:
        file_cfg["regression"] = regression
    if seed is not None:
        file_cfg["seed"] = seed
    if gmm_k is not None:
        file_cfg["gmm_k"] = gmm_k
    if stop_factor is not None:
        file_cfg["stop_factor"] = stop_factor
    if level is not None:
        file_cfg["interval_level"] = level
    if flip_axial is not None:
        file_cfg["flip_axial"] = flip_axial
    file_cfg["threads"] = int(os.environ.get("BRONCO_THREADS", "1"))

    try:
        config = PipelineConfig.from_json_dict(file_cfg)
        report = run_pipeline(config)
        if binary or labeled:
            export_outputs(out_dir, binary=binary, labeled=labeled)
    except BroncoError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    for w in report.warnings:
        click.echo(f"warning: {w}", err=True)
    sys.exit(report.exit_code)


@main.command()
@click.option("--run", "run_dir", required=True, type=click.Path(exists=True),
              help="Completed run directory")
@click.option("--binary", is_flag=True, help="Binary vessels+bronchi mask")
@click.option("--labeled", is_flag=True, help="Branch-labeled uint16 mask")
@click.option("--graph", "graph_format", type=click.Choice(["json", "graphml"]), default=None,
              help="Export the skeleton graph in this format")
def export(run_dir, binary, labeled, graph_format):
    """Export user-facing outputs from a completed run."""
    try:
        written = export_outputs(run_dir, binary=binary, labeled=labeled,
                                 graph_format=graph_format)
    except (BroncoError, FileNotFoundError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    for path in written:
        click.echo(path)


@main.command()
@click.option("--spec", "spec_path", type=click.Path(exists=True), default=None,
              help="PhantomSpec JSON (defaults to the built-in pipeline phantom)")
@click.option("--kind", type=click.Choice(["clean", "consolidation"]), default="clean",
              help="Built-in phantom variant when no spec file is given")
@click.option("--seed", type=int, default=0)
@click.option("--out", "out_dir", required=True, type=click.Path())
def phantom(spec_path, kind, seed, out_dir):
    """Generate a synthetic CT phantom (with ground truth) as NIfTI files."""
    from . import volio
    from .phantom import PhantomSpec, generate, pipeline_phantom

    os.makedirs(out_dir, exist_ok=True)
    if spec_path:
        spec = PhantomSpec.from_json_dict(json.load(open(spec_path)))
    else:
        spec = pipeline_phantom(seed=seed, consolidation=(kind == "consolidation"))
    ct, lung, truth = generate(spec)
    volio.save_volume(os.path.join(out_dir, "ct.nii.gz"), ct)
    volio.save_mask(os.path.join(out_dir, "lung.nii.gz"), lung)
    volio.save_labels(os.path.join(out_dir, "tissue_truth.nii.gz"), truth.tissue)
    volio.save_labels(os.path.join(out_dir, "branch_truth.nii.gz"), truth.branch_labels)
    with open(os.path.join(out_dir, "phantom_spec.json"), "w") as fh:
        json.dump(spec.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(out_dir)


@main.command("fit-regression")
@click.option("--pairs", "pairs_path", required=True, type=click.Path(exists=True),
              help="JSON list of [lung_ml, bundle_ml] pairs")
@click.option("--out", "out_path", required=True, type=click.Path())
def fit_regression_cmd(pairs_path, out_path):
    """Fit the lung-to-bundle volume regression and save it as JSON."""
    from .qa import fit_regression

    try:
        model = fit_regression(json.load(open(pairs_path)))
    except BroncoError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    with open(out_path, "w") as fh:
        fh.write(model.to_json(indent=2) + "\n")
    click.echo(out_path)


if __name__ == "__main__":
    main()
