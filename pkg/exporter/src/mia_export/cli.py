"""mia-export: dump model predictions into the audit CSV formats.

Exit codes: 0 success, 2 usage error, 1 runtime failure (model or data
load problems, export errors).
"""

from __future__ import annotations

import sys

import click

from . import __version__
from .export import ExportError, ExportJob, MixedExportConfig, export_mixed_predictions, export_model_predictions
from .models import ModelLoadError
from .sources import SourceLoadError


@click.command(name="mia-export")
@click.version_option(__version__, prog_name="mia-export")
@click.option(
    "--model",
    required=True,
    help="Model identifier: constant:<C>, json:<path>, or torchvision:<name>.",
)
@click.option("--members", required=True, type=click.Path(exists=True))
@click.option("--nonmembers", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--batch-size", type=int, default=256, show_default=True)
@click.option("--device", default="cpu", show_default=True)
@click.option("--mixed", is_flag=True, help="Also write a mixed-prediction CSV.")
@click.option("--mixed-out", type=click.Path(), default=None)
@click.option(
    "--aux",
    "aux_from",
    type=click.Choice(["member", "nonmember"]),
    default="nonmember",
    show_default=True,
)
@click.option("--aux-size", type=int, default=30, show_default=True)
@click.option("--r", "num_r", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--lambda-low", type=float, default=0.5, show_default=True)
@click.option("--lambda-high", type=float, default=1.0, show_default=True)
def cli(
    model,
    members,
    nonmembers,
    out,
    batch_size,
    device,
    mixed,
    mixed_out,
    aux_from,
    aux_size,
    num_r,
    seed,
    lambda_low,
    lambda_high,
):
    """Export softmax predictions for a member/nonmember pair of sources."""
    if mixed and mixed_out is None:
        raise click.UsageError("--mixed requires --mixed-out")
    if seed < 0:
        raise click.UsageError("--seed must be >= 0")
    job = ExportJob(
        model=model,
        members=members,
        nonmembers=nonmembers,
        out=out,
        batch_size=batch_size,
        device=device,
    )
    if mixed:
        cfg = MixedExportConfig(
            out=mixed_out,
            num_r=num_r,
            aux_from=aux_from,
            aux_size=aux_size,
            seed=seed,
            lambda_low=lambda_low,
            lambda_high=lambda_high,
        )
        rows = export_mixed_predictions(job, cfg)
        click.echo(f"wrote {out} and {rows} mixed rows to {mixed_out}")
    else:
        rows = export_model_predictions(job)
        click.echo(f"wrote {rows} rows to {out}")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        sys.exit(2)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except (ExportError, ModelLoadError, SourceLoadError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    sys.exit(0)


if __name__ == "__main__":
    main()
