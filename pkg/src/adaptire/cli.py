"""Command-line harness: synthesize and fit tire data, run maneuvers, train the thermal model.

Every subcommand writes plain files into ``--out``. Failures print a single
``error: <kind>: <message>`` line to stderr and exit nonzero.
"""

from __future__ import annotations

import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import kvfile
from .esc import EscConfig, esc_config_from_sections, write_decision_log
from .exceptions import AdaptireError
from .fitting.pipeline import fit_with_report
from .fitting.synthetic import (
    SweepGrid,
    calibrated_tree,
    random_tree,
    read_sweep_csv,
    synthesize_sweep_data,
    write_sweep_csv,
)
from .maneuver import (
    COMPARE_AMPLITUDE,
    COMPARE_CONDITIONS,
    ManeuverSpec,
    compare_adaptive_vs_fixed,
    export_results,
    load_maneuver,
    run_maneuver,
)
from .mf_adapt import AdaptedMfCoefficients, load_tree, save_tree
from .rnn import SurfaceTemperatureRNN, save_model
from .thermal import read_training_csv, simulate_drive_cycle, write_training_csv
from .vehicle import VehicleParameters, vehicle_from_sections

ON_OFF = click.Choice(["on", "off"])
SEED = click.IntRange(0, 2**64 - 1)


def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror}") from exc
    return out


def _load_config(path: str | None) -> tuple[VehicleParameters, EscConfig]:
    if path is None:
        return VehicleParameters(), EscConfig()
    sections = kvfile.read(path)
    return vehicle_from_sections(sections), esc_config_from_sections(sections)


def _load_tire(path: str | None) -> AdaptedMfCoefficients:
    return calibrated_tree() if path is None else load_tree(path)


@click.group()
def cli() -> None:
    """Adapted Magic Formula tire model and stability-control simulation."""


@cli.command("synth")
@click.option("--out", "out", required=True, type=click.Path(file_okay=False), help="Output directory.")
@click.option("--seed", type=SEED, default=42, show_default=True)
@click.option("--noise", type=click.FloatRange(0.0, 1.0), default=0.0, show_default=True,
              help="Noise as a fraction of |Fy| (plus a 20 N floor when nonzero).")
@click.option("--random-tree", "use_random", is_flag=True,
              help="Draw a random ground-truth tree from the seed instead of the calibrated one.")
def synth_command(out: str, seed: int, noise: float, use_random: bool) -> None:
    """Generate synthetic slip-sweep data and its ground-truth tree."""
    out_dir = _out_dir(out)
    tree = random_tree(np.random.default_rng(seed)) if use_random else calibrated_tree()
    observations = synthesize_sweep_data(SweepGrid(noise_fraction=noise), seed=seed, tree=tree)
    write_sweep_csv(observations, out_dir / "sweep.csv")
    save_tree(tree, out_dir / "truth_tree.txt")
    click.echo(f"wrote {len(observations)} observations to {out_dir / 'sweep.csv'}")


@cli.command()
@click.argument("data", type=click.Path(dir_okay=False))
@click.option("--out", "out", required=True, type=click.Path(file_okay=False), help="Output directory.")
@click.option("--joint/--no-joint", default=True, show_default=True, help="Run the joint refinement pass.")
@click.option("--seed", type=SEED, default=0, show_default=True, help="Accepted for uniformity; the fit is deterministic.")
def fit(data: str, out: str, joint: bool, seed: int) -> None:
    """Fit an adaptation tree to a slip-sweep CSV."""
    observations = read_sweep_csv(data)
    out_dir = _out_dir(out)
    report = fit_with_report(observations, joint_refinement=joint)
    save_tree(report.best, out_dir / "tree.txt")
    (out_dir / "fit_report.txt").write_text(report.to_text())
    click.echo(f"lateral force rms {min(report.staged_force_rms, report.refined_force_rms if joint else np.inf):.6g} N")


def _maneuver_options(func):
    for option in reversed([
        click.option("--config", type=click.Path(dir_okay=False), help="Vehicle and controller parameter file."),
        click.option("--tire", type=click.Path(dir_okay=False), help="Coefficient tree; default is the calibrated tree."),
        click.option("--maneuver", type=click.Path(dir_okay=False), help="Maneuver specification file."),
        click.option("--out", "out", required=True, type=click.Path(file_okay=False), help="Output directory."),
        click.option("--seed", type=SEED, default=0, show_default=True, help="Accepted for uniformity; runs are deterministic."),
    ]):
        func = option(func)
    return func


@cli.command()
@_maneuver_options
@click.option("--esc", type=ON_OFF, default="on", show_default=True)
@click.option("--adaptive", type=ON_OFF, default="on", show_default=True)
@click.option("--amplitude", type=click.FloatRange(0.0, 330.0), help="Override the hand-wheel amplitude (deg).")
def sim(config, tire, maneuver, out, seed, esc, adaptive, amplitude) -> None:
    """Run a single maneuver."""
    params, esc_config = _load_config(config)
    spec = load_maneuver(maneuver) if maneuver else ManeuverSpec()
    if amplitude is not None:
        spec = spec.with_amplitude(amplitude)
    esc_config = replace(esc_config, adaptive_reference=adaptive == "on")
    out_dir = _out_dir(out)
    log: list = []
    result = run_maneuver(spec, params, _load_tire(tire), esc_config, esc == "on", decision_log=log)
    export_results(result, out_dir, "maneuver")
    write_decision_log(log, out_dir / "esc_decisions.csv")
    s = result.summary
    click.echo(f"spin_out={s.spin_out} peak_sideslip_rad={s.peak_sideslip!r} interventions={s.intervention_count}")
    if result.aborted:
        raise AdaptireError(f"run aborted: {result.message}")


@cli.command()
@_maneuver_options
def compare(config, tire, maneuver, out, seed) -> None:
    """Adaptive versus fixed reference ESC on off-nominal tires.

    Without ``--maneuver`` the built-in scenario is used; a maneuver file
    without a ``[conditions]`` section also falls back to its tire conditions.
    """
    params, esc_config = _load_config(config)
    spec = load_maneuver(maneuver) if maneuver else ManeuverSpec(amplitude=COMPARE_AMPLITUDE)
    conditions = spec.conditions or COMPARE_CONDITIONS
    out_dir = _out_dir(out)
    result = compare_adaptive_vs_fixed(spec, params, _load_tire(tire), conditions, esc_config)
    export_results(result.adaptive, out_dir, "adaptive")
    export_results(result.fixed, out_dir, "fixed")
    (out_dir / "comparison.txt").write_text(result.to_text())
    click.echo(" ".join(f"{k}={v!r}" for k, v in result.deltas.items()))


@cli.command("thermal-train")
@click.option("--out", "out", required=True, type=click.Path(file_okay=False), help="Output directory.")
@click.option("--seed", type=SEED, default=0, show_default=True)
@click.option("--data", type=click.Path(dir_okay=False), help="Training CSV; default generates drive cycles from the seed.")
@click.option("--traces", type=click.IntRange(2, None), default=20, show_default=True, help="Generated training traces.")
@click.option("--epochs", type=click.IntRange(1, None), default=1500, show_default=True)
def thermal_train(out, seed, data, traces, epochs) -> None:
    """Train the surface-temperature network and score it on a held-out trace."""
    out_dir = _out_dir(out)
    rng = np.random.default_rng(seed)
    if data:
        train = read_training_csv(data)
    else:
        train = [simulate_drive_cycle(rng) for _ in range(traces)]
        write_training_csv(train, out_dir / "thermal_training.csv")
    held_out = simulate_drive_cycle(np.random.default_rng([seed, 1]))
    model = SurfaceTemperatureRNN(epochs=epochs, seed=seed % 2**32)
    model.fit([t.features() for t in train], [t.surface for t in train])
    save_model(model, out_dir / "thermal_model.txt")
    pred = model.predict(held_out.features())
    rms = float(np.sqrt(np.mean((pred - held_out.surface) ** 2)))
    report = {"training": {"traces": len(train), "epochs": epochs, "final_loss": model.loss_history_[-1]},
              "held_out": {"rms_c": rms, "steps": len(pred)}}
    kvfile.write(out_dir / "thermal_report.txt", report)
    click.echo(f"held-out rms {rms:.4f} C")


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split()) or exc.__class__.__name__


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, prog_name="adaptire", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("error: aborted", err=True)
        return 1
    except click.ClickException as exc:
        click.echo(f"error: usage: {_one_line(exc.format_message())}", err=True)
        return 2
    except (AdaptireError, ValueError, OSError, KeyError) as exc:
        click.echo(f"error: {exc.__class__.__name__}: {_one_line(exc)}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
