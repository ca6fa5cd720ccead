"""
Verification and reporting commands: gradcheck, params and curves
"""

import csv

import click
import torch

from auformer.commands.common import EXIT_RUNTIME, ablation_option, emit, handle_errors
from auformer.errors import ConfigurationError
from auformer.losses.reference import DEFAULT_CURVE_GAMMAS, gradient_curves
from auformer.models.collaboration import AUFormerModel
from auformer.services.accounting import count_params, flop_breakdown
from auformer.services.gradcheck import LOSS_NAMES, check_loss_gradients, check_model_gradients, summarize
from auformer.utils.config_hash import config_hash
from auformer.utils.run_config import apply_ablation, load_run_config

LOSS_TOLERANCE = 1e-5
MODEL_TOLERANCE = 1e-3


@click.command("gradcheck")
@click.option("--losses", default="all", show_default=True,
              type=click.Choice(["all"] + list(LOSS_NAMES)),
              help="'all' also checks end-to-end model parameter gradients.")
@click.option("--points", default=1000, show_default=True, type=int, help="Random points per loss.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--model-params", default=20, show_default=True, type=int)
@click.option("--negate-analytic", is_flag=True, hidden=True)
@handle_errors
def gradcheck(losses, points, seed, model_params, negate_analytic):
    """Check analytic gradients against central finite differences."""
    if points < 1:
        raise ConfigurationError(f"--points must be >= 1, got {points}")
    names = LOSS_NAMES if losses == "all" else (losses,)
    digest = config_hash({"losses": losses, "points": points, "seed": seed, "model_params": model_params})

    report = check_loss_gradients(names, points=points, seed=seed, negate=negate_analytic)
    summary = {"loss": summarize(report, LOSS_TOLERANCE)}
    passed = summary["loss"]["failures"] == 0
    if losses == "all":
        model_report = check_model_gradients(num_params=model_params, seed=seed, negate=negate_analytic)
        summary["model"] = summarize(model_report, MODEL_TOLERANCE)
        passed = passed and summary["model"]["failures"] == 0
        report = report + model_report

    emit({
        "status": "success" if passed else "failure",
        "config_hash": digest,
        "tolerance": {"loss": LOSS_TOLERANCE, "model": MODEL_TOLERANCE},
        "summary": summary,
        "report": report,
    })
    if not passed:
        raise SystemExit(EXIT_RUNTIME)


@click.command("params")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--num-aus", default=4, show_default=True, type=click.IntRange(min=1))
@ablation_option
@handle_errors
def params(config_path, num_aus, ablation):
    """Report learnable/frozen parameter counts and FLOPs."""
    config = apply_ablation(load_run_config(config_path), ablation)
    model = AUFormerModel(config.vit, config.moke, num_aus, config.ablation, seed=config.train.seed)
    document = {"status": "success", "config_hash": config.digest, "num_aus": num_aus}
    document.update(count_params(model))
    document["flops"] = flop_breakdown(model)
    emit(document)


@click.command("curves")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--margin", default=0.1, show_default=True, type=click.FloatRange(0.0, 1.0))
@click.option("--gamma", "gammas", multiple=True, type=float,
              help="MDWA exponent column (repeatable); defaults to 1, 1.5 and 2.")
@click.option("--points", default=99, show_default=True, type=click.IntRange(min=2))
@handle_errors
def curves(out_path, margin, gammas, points):
    """Write negative-branch gradient curves as CSV."""
    gammas = tuple(gammas) or DEFAULT_CURVE_GAMMAS
    digest = config_hash({"margin": margin, "gammas": list(gammas), "points": points})
    grid = torch.linspace(0.01, 0.99, points, dtype=torch.float64)
    columns = gradient_curves(grid, gammas=gammas, margin=margin)

    with open(out_path, "w", newline="", encoding="utf-8") as f:
        f.write(f"# config_hash: {digest}\n")
        writer = csv.writer(f)
        writer.writerow(list(columns))
        for row in zip(*(values.tolist() for values in columns.values())):
            writer.writerow([repr(v) for v in row])
    emit({"status": "success", "config_hash": digest, "out": out_path, "rows": points,
          "columns": list(columns)})
