"""Single-binary audit workflow: data generation, training, attacks, oracles.

Exit codes: 0 on success, 2 on usage errors, 1 on runtime failures. Every
subcommand is bit-reproducible for fixed seeds; CPM grid parallelism is
capped by the CPM_AUDIT_THREADS environment variable and never changes
results.
"""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

from . import FORMAT_VERSIONS, __version__, cpm, lab, oracle, report, scoring
from .data import load_predictions, make_audit_dataset
from .threshold import run_threshold_attack


def _print_version(ctx, _param, value):
    if not value or ctx.resilient_parsing:
        return
    formats = ", ".join(f"{name} v{v}" for name, v in sorted(FORMAT_VERSIONS.items()))
    click.echo(f"cpm-audit {__version__} ({formats})")
    ctx.exit()


@click.group(name="cpm-audit")
@click.option(
    "--version",
    is_flag=True,
    callback=_print_version,
    expose_value=False,
    is_eager=True,
    help="Print the tool and file-format versions.",
)
def cli():
    """Membership-inference auditing from softmax prediction files."""


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _report_format(path) -> str:
    name = str(path)
    if name.endswith(".csv"):
        return "csv"
    if name.endswith(".md"):
        return "markdown"
    return "json"


def _emit_report(path, results, model_tag: str, metadata: dict, append=False) -> None:
    """Write a report; with append, merge rows into an existing JSON report."""
    fmt = _report_format(path)
    existing_rows = []
    if append and fmt == "json" and os.path.exists(path):
        with open(path, "r", encoding="utf-8") as fh:
            prior = report.report_from_json(fh.read())
        existing_rows = list(prior.rows)
        model_tag = prior.model_tag
        if prior.metadata:
            merged = dict(prior.metadata)
            merged.update(metadata)
            metadata = merged
    fresh = report.build_report(results, model_tag, metadata)
    rows = dict(existing_rows)
    for name, pct in fresh.rows:
        if name in rows:
            raise ValueError(f"duplicate metric {name!r} in report {path}")
        rows[name] = pct
    ordered = tuple(
        (name, rows[name]) for name in report.METRIC_ORDER if name in rows
    )
    final = report.AuditReport(model_tag, ordered, None, metadata)
    _write_text(path, report.render(final, fmt))


def _model_tag(preds_path) -> str:
    base = os.path.basename(str(preds_path))
    return base.rsplit(".", 1)[0] if "." in base else base


def _load_config_defaults(ctx, _param, value):
    """Merge a JSON config file under explicit flags via the default map."""
    if not value or ctx.resilient_parsing:
        return value
    try:
        with open(value, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"cannot read --config {value!r}: {exc}") from exc
    if not isinstance(loaded, dict):
        raise click.UsageError("--config must hold a JSON object of flag values")
    ctx.default_map = {**(ctx.default_map or {}), **loaded}
    return value


def config_option(fn):
    return click.option(
        "--config",
        type=click.Path(exists=True),
        default=None,
        is_eager=True,
        expose_value=False,
        callback=_load_config_defaults,
        help="JSON file of flag defaults (underscored names); explicit flags win.",
    )(fn)


_PATH_PARAMS = frozenset(
    {
        "preds",
        "points",
        "data_path",
        "model_path",
        "mixed_preds",
        "out",
        "out_report",
        "out_polytope",
        "out_csv",
        "out_model",
        "out_preds",
    }
)


def _effective_flags(ctx) -> dict:
    """The run's full parameter set, with paths reduced to basenames."""
    flags = {}
    for name, value in sorted(ctx.params.items()):
        if name in _PATH_PARAMS and value is not None:
            value = os.path.basename(str(value))
        flags[name] = value
    return flags


@cli.command("gen-data")
@config_option
@click.option("--classes", type=int, default=3, show_default=True)
@click.option("--dim", type=int, default=8, show_default=True)
@click.option("--members", type=int, default=500, show_default=True)
@click.option("--nonmembers", type=int, default=3000, show_default=True)
@click.option("--separation", type=float, default=1.5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def cmd_gen_data(classes, dim, members, nonmembers, separation, seed, out):
    """Generate a synthetic raw dataset CSV."""
    if classes < 2:
        raise click.UsageError("--classes must be >= 2")
    if dim < 2 or dim < classes - 1:
        raise click.UsageError("--dim must be >= 2 and >= classes - 1")
    if members < 1 or nonmembers < 1:
        raise click.UsageError("--members and --nonmembers must be positive")
    if seed < 0:
        raise click.UsageError("--seed must be >= 0")
    cfg = lab.GenConfig(
        num_classes=classes,
        dim=dim,
        n_member=members,
        n_nonmember=nonmembers,
        class_separation=separation,
        seed=seed,
    )
    lab.save_raw_dataset(out, lab.gen_synthetic(cfg))
    click.echo(f"wrote {members + nonmembers} rows to {out}")


@cli.command("train")
@config_option
@click.option("--data", "data_path", type=click.Path(exists=True), required=True)
@click.option("--method", type=click.Choice(lab.TRAIN_METHODS), required=True)
@click.option("--alpha", type=float, default=None)
@click.option("--mu", type=float, default=None)
@click.option("--epochs", type=int, default=600, show_default=True)
@click.option("--lr", type=float, default=0.08, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-model", type=click.Path(), required=True)
@click.option("--out-preds", type=click.Path(), required=True)
def cmd_train(data_path, method, alpha, mu, epochs, lr, seed, out_model, out_preds):
    """Train an audit target on the member rows and export its predictions."""
    if method == "relaxloss":
        if alpha is None:
            raise click.UsageError("--alpha is required for --method relaxloss")
        if mu is None:
            raise click.UsageError("--mu is required for --method relaxloss")
    if seed < 0:
        raise click.UsageError("--seed must be >= 0")
    data = lab.load_raw_dataset(data_path)
    cfg = lab.TrainConfig(
        method=method,
        epochs=epochs,
        learning_rate=lr,
        seed=seed,
        relax_alpha=alpha,
        relax_mu=mu,
    )
    model = lab.train_model(data, cfg)
    lab.save_model(out_model, model)
    lab.export_predictions(model, data, out_preds)
    click.echo(f"wrote model to {out_model} and predictions to {out_preds}")


@cli.command("audit")
@config_option
@click.option("--preds", type=click.Path(exists=True), required=True)
@click.option(
    "--scores",
    default="msp,ent,ce,me",
    show_default=True,
    help="Comma-separated subset of msp,ent,ce,me,relaxloss.",
)
@click.option("--alpha", type=float, default=None, help="RelaxLoss score alpha.")
@click.option("--mu", type=float, default=None, help="RelaxLoss score mu.")
@click.option("--split-seed", type=int, default=0, show_default=True)
@click.option("--out-report", type=click.Path(), required=True)
@click.pass_context
def cmd_audit(ctx, preds, scores, alpha, mu, split_seed, out_report):
    """Run threshold attacks against a prediction file."""
    names = [s.strip() for s in scores.split(",") if s.strip()]
    if not names:
        raise click.UsageError("--scores must name at least one score")
    for name in names:
        if name not in scoring.RECORD_SCORES:
            raise click.UsageError(
                f"unknown score {name!r}; expected one of {', '.join(scoring.RECORD_SCORES)}"
            )
    if split_seed < 0:
        raise click.UsageError("--split-seed must be >= 0")
    relax_cfg = None
    if "relaxloss" in names:
        if alpha is None or mu is None:
            raise click.UsageError("--alpha and --mu are required for relaxloss")
        relax_cfg = scoring.RelaxLossScoreConfig(alpha, mu)

    num_classes, records = load_predictions(preds)
    dataset = make_audit_dataset(records, split_seed)
    results = [run_threshold_attack(dataset, name, relax_cfg) for name in names]
    metadata = {"num_classes": num_classes, "flags": _effective_flags(ctx)}
    _emit_report(out_report, results, _model_tag(preds), metadata)
    click.echo(f"wrote report to {out_report}")


def _cpm_config(k, lrs, epochs, batch, restarts, seed):
    try:
        rates = tuple(float(x) for x in lrs.split(",") if x.strip())
    except ValueError:
        raise click.UsageError("--lrs must be comma-separated floats") from None
    if not rates:
        raise click.UsageError("--lrs must name at least one learning rate")
    if seed < 0:
        raise click.UsageError("--seed must be >= 0")
    try:
        return cpm.CpmTrainConfig(
            K=k,
            learning_rates=rates,
            epochs=epochs,
            batch_size=batch,
            restarts=restarts,
            seed=seed,
        )
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None


@cli.command("cpm")
@config_option
@click.option("--preds", type=click.Path(exists=True), required=True)
@click.option("--k", type=int, default=1000, show_default=True)
@click.option("--lrs", default="0.1,0.01,0.001", show_default=True)
@click.option("--epochs", type=int, default=200, show_default=True)
@click.option("--batch", type=int, default=10000, show_default=True)
@click.option("--restarts", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--split-seed", type=int, default=0, show_default=True)
@click.option("--out-report", type=click.Path(), required=True)
@click.option("--out-polytope", type=click.Path(), required=True)
@click.pass_context
def cmd_cpm(
    ctx, preds, k, lrs, epochs, batch, restarts, seed, split_seed, out_report, out_polytope
):
    """Fit the polytope metric and append its row to the report."""
    if split_seed < 0:
        raise click.UsageError("--split-seed must be >= 0")
    cfg = _cpm_config(k, lrs, epochs, batch, restarts, seed)
    _, records = load_predictions(preds)
    dataset = make_audit_dataset(records, split_seed)
    result = cpm.train_cpm(dataset, cfg)
    _write_text(out_polytope, cpm.polytope_to_json(result.polytope) + "\n")
    metadata = {
        "cpm_lr_chosen": result.lr_chosen,
        "cpm_final_objective": result.final_objective,
        "flags": _effective_flags(ctx),
    }
    _emit_report(out_report, [result], _model_tag(preds), metadata, append=True)
    click.echo(f"wrote report to {out_report} and polytope to {out_polytope}")


@cli.command("ablate-k")
@config_option
@click.option("--preds", type=click.Path(exists=True), required=True)
@click.option("--k-list", default="1,4,16,64", show_default=True)
@click.option("--lrs", default="0.1,0.01,0.001", show_default=True)
@click.option("--epochs", type=int, default=200, show_default=True)
@click.option("--batch", type=int, default=10000, show_default=True)
@click.option("--restarts", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--split-seed", type=int, default=0, show_default=True)
@click.option("--out-csv", type=click.Path(), required=True)
def cmd_ablate_k(
    preds, k_list, lrs, epochs, batch, restarts, seed, split_seed, out_csv
):
    """Sweep the facet count and record the advantage curve."""
    try:
        k_values = [int(x) for x in k_list.split(",") if x.strip()]
    except ValueError:
        raise click.UsageError("--k-list must be comma-separated integers") from None
    if not k_values:
        raise click.UsageError("--k-list must name at least one K")
    cfg = _cpm_config(max(k_values), lrs, epochs, batch, restarts, seed)
    if split_seed < 0:
        raise click.UsageError("--split-seed must be >= 0")
    _, records = load_predictions(preds)
    dataset = make_audit_dataset(records, split_seed)
    curve = cpm.k_ablation(dataset, cfg, k_values)
    rows = [(k, res.evaluation_advantage * 100.0) for k, res in curve]
    _write_text(out_csv, report.render_ablation_csv(rows))
    click.echo(f"wrote ablation curve to {out_csv}")


def _load_point_file(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or not lines[0].startswith("split,x_0"):
        raise ValueError("points file must have header split,x_0,...,x_{d-1}")
    dim = len(lines[0].split(",")) - 1
    members, nonmembers = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != dim + 1:
            raise ValueError(f"wrong column count, line {lineno}")
        vec = [float(c) for c in cells[1:]]
        if cells[0] == "member":
            members.append(vec)
        elif cells[0] == "nonmember":
            nonmembers.append(vec)
        else:
            raise ValueError(f"unknown split {cells[0]!r}, line {lineno}")
    return oracle.PointSet(np.array(members), np.array(nonmembers))


@cli.command("cpb-oracle")
@config_option
@click.option("--preds", type=click.Path(exists=True), default=None)
@click.option("--points", type=click.Path(exists=True), default=None)
@click.option(
    "--family",
    type=click.Choice(["convex", "halfspace"]),
    default="convex",
    show_default=True,
)
@click.option("--out", type=click.Path(), required=True)
def cmd_oracle(preds, points, family, out):
    """Exact discrepancy on a tiny instance (enumeration-guarded)."""
    if (preds is None) == (points is None):
        raise click.UsageError("exactly one of --preds or --points is required")
    if preds is not None:
        num_classes, records = load_predictions(preds)
        point_set = oracle.feature_point_set(num_classes, records)
    else:
        point_set = _load_point_file(points)
    if family == "convex":
        result = oracle.exact_convex_discrepancy(point_set)
    else:
        result = oracle.exact_halfspace_discrepancy(point_set)
    payload = {
        "family": family,
        "value": result.value,
        "direction": result.direction,
        "witness": result.witness,
    }
    _write_text(out, json.dumps(payload, sort_keys=True, indent=2) + "\n")
    click.echo(f"{family} discrepancy {result.value:.6f}; wrote {out}")


@cli.command("mixup-score")
@config_option
@click.option("--data", "data_path", type=click.Path(exists=True), default=None)
@click.option("--model", "model_path", type=click.Path(exists=True), default=None)
@click.option(
    "--aux-from",
    type=click.Choice(["member", "nonmember"]),
    default="nonmember",
    show_default=True,
)
@click.option("--aux-size", type=int, default=30, show_default=True)
@click.option("--r", "num_r", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--mixed-preds", type=click.Path(exists=True), default=None)
@click.option("--preds", type=click.Path(exists=True), default=None)
@click.option("--split-seed", type=int, default=0, show_default=True)
@click.option("--out-report", type=click.Path(), required=True)
@click.pass_context
def cmd_mixup_score(
    ctx,
    data_path,
    model_path,
    aux_from,
    aux_size,
    num_r,
    seed,
    mixed_preds,
    preds,
    split_seed,
    out_report,
):
    """Mixup-score attack from a live model or a mixed-prediction file."""
    live = data_path is not None and model_path is not None
    from_file = mixed_preds is not None and preds is not None
    if live == from_file:
        raise click.UsageError(
            "pass either --data with --model (live) or --mixed-preds with --preds"
        )
    if split_seed < 0 or seed < 0:
        raise click.UsageError("seeds must be >= 0")

    if live:
        data = lab.load_raw_dataset(data_path)
        model = lab.load_model(model_path)
        num_classes, records = lab.predict_records(model, data)
        pool = np.flatnonzero(data.is_member == (aux_from == "member"))
        if aux_size < 1 or aux_size > pool.size:
            raise click.UsageError(
                f"--aux-size must be in [1, {pool.size}] for --aux-from {aux_from}"
            )
        rng = np.random.default_rng(seed)
        aux_ids = tuple(int(i) for i in rng.choice(pool, aux_size, replace=False))
        cfg = scoring.MixupScoreConfig(R=num_r, aux_ids=aux_ids, seed=seed)
        aux = [(data.features[i], int(data.labels[i])) for i in aux_ids]
        fn = lab.model_oracle(model)
        scores_arr = np.array(
            [
                scoring.mixup_score(
                    (data.features[i], int(data.labels[i])), aux, fn, cfg, num_classes
                )
                for i in range(data.features.shape[0])
            ]
        )
        metadata = {"mixup_aux_ids": list(aux_ids), "flags": _effective_flags(ctx)}
        tag = _model_tag(data_path)
    else:
        num_classes, records = load_predictions(preds)
        scores_arr = scoring.mixup_scores_from_file(mixed_preds, records)
        metadata = {"flags": _effective_flags(ctx)}
        tag = _model_tag(preds)

    dataset = make_audit_dataset(records, split_seed)
    attack = run_threshold_attack(dataset, "mixup", record_scores=scores_arr)
    _emit_report(out_report, [attack], tag, metadata, append=True)
    click.echo(f"wrote report to {out_report}")


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
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    sys.exit(0)


if __name__ == "__main__":
    main()
