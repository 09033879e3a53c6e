#!/usr/bin/env python3
"""
snnd CLI

Trainiert SNNs mit zeitlicher Selbstdistillation zwischen den Submodellen
der einzelnen Zeitschritte und wertet sie aus (reduzierte Zeitschritte,
früher Ausstieg, Robustheit).

Exit-Codes: 0 ok, 1 Bedienfehler, 2 Konfiguration, 3 Daten/Format, 4 Numerik.
"""

import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import click

from .config import (
    ATTACK_KINDS,
    AttackConfig,
    EarlyExitConfig,
    RunConfig,
    default_log_level,
    setup_logging,
)
from .data import Dataset, load_event_frames, load_table
from .errors import DimensionError, SnndError, UsageError
from .network import Network, load_checkpoint


def parse_t_max(spec: str, timesteps: int) -> List[int]:
    """
    Zerlegt ``all``, ``a..b`` oder ``a,b,c`` in eine Liste von t_max-Werten.

    Raises:
        UsageError: Bei ungültiger Angabe oder Werten außerhalb von [1, T]
    """
    spec = spec.strip()
    try:
        if spec == "all":
            values = list(range(1, timesteps + 1))
        elif ".." in spec:
            low, _, high = spec.partition("..")
            values = list(range(int(low), int(high) + 1))
        else:
            values = [int(part) for part in spec.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"Ungültige --t-max Angabe: '{spec}'")
    if not values or any(not 1 <= t <= timesteps for t in values):
        raise UsageError(f"--t-max muss Werte in [1, {timesteps}] enthalten: '{spec}'")
    return values


def parse_float_list(spec: str, option: str) -> List[float]:
    try:
        values = [float(part) for part in spec.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"Ungültige Zahlenliste für {option}: '{spec}'")
    if not values:
        raise UsageError(f"{option} braucht mindestens einen Wert")
    return values


def _load_run_config(
    ctx: click.Context,
    config_path: Optional[Path],
    overrides: Sequence[str],
    out_dir: Optional[Path] = None,
) -> RunConfig:
    """Lädt die Lauf-Konfiguration und übernimmt deren Log-Level."""
    all_overrides = list(overrides)
    if out_dir is not None:
        all_overrides.append(f"output.dir={out_dir}")
    config = RunConfig.from_file(config_path, all_overrides)

    if not ctx.obj["debug"] and "log.level" in config.explicit_keys:
        ctx.obj["logger"].setLevel(config.get("log.level"))
    return config


def _resolve_dataset(
    ctx: click.Context,
    net: Network,
    config_path: Optional[Path],
    data_path: Optional[Path],
    overrides: Sequence[str],
) -> Dataset:
    """
    Datensatz für eval, attack und export-logits.

    Entweder die Testmenge der Konfiguration oder eine .evf/.csv-Datei.
    """
    from .experiment import ExperimentRunner

    logger = ctx.obj["logger"]
    if (config_path is None) == (data_path is None):
        raise UsageError("Genau eine der Optionen --config oder --data angeben")

    if data_path is not None:
        if data_path.suffix.lower() == ".evf":
            dataset = load_event_frames(data_path, num_classes=net.config.num_classes)
        else:
            dataset = load_table(data_path, net.config.timesteps, net.config.num_classes)
    else:
        config = _load_run_config(ctx, config_path, overrides)
        _, dataset = ExperimentRunner(config, logger).load_data()

    if dataset.timesteps != net.config.timesteps or dataset.features != net.config.layer_sizes[0]:
        raise DimensionError(
            f"Daten [T={dataset.timesteps}, D={dataset.features}] passen nicht zum Netz "
            f"[T={net.config.timesteps}, D={net.config.layer_sizes[0]}]"
        )
    return dataset


def _data_options(func):
    func = click.option(
        "--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Konfigurationswert überschreiben"
    )(func)
    func = click.option(
        "--data",
        "data_path",
        type=click.Path(path_type=Path),
        help="Datendatei (.evf oder .csv)",
    )(func)
    func = click.option(
        "--config",
        "config_path",
        type=click.Path(path_type=Path),
        help="Konfiguration (ausgewertet wird deren Testmenge)",
    )(func)
    func = click.option(
        "--checkpoint",
        type=click.Path(path_type=Path),
        required=True,
        help="Checkpoint (.snnm)",
    )(func)
    return func


@click.group(invoke_without_command=True)
@click.option("--debug", is_flag=True, help="Debug-Ausgaben aktivieren")
@click.option(
    "--env",
    type=click.Path(exists=True, path_type=Path),
    help="Pfad zur .env Datei",
)
@click.pass_context
def cli(ctx: click.Context, debug: bool, env: Optional[Path]) -> None:
    """
    SNN-Training mit zeitlicher Selbstdistillation.

    \b
    Beispiele:
      snnd train --config run.cfg                       # Trainieren
      snnd train --config run.cfg --set distill.scheme=w2s
      snnd eval --checkpoint best.snnm --config run.cfg --t-max 1..5
      snnd eval --checkpoint best.snnm --config run.cfg --exit-threshold 0.95,0.9
      snnd attack --checkpoint best.snnm --config run.cfg --attack fgsm --epsilon 0.05
      snnd sweep --config run.cfg --axis distill.alpha=0.5,1,2,3,5 --seeds 0,1,2
      snnd export-logits --checkpoint best.snnm --config run.cfg
    """
    ctx.ensure_object(dict)

    # .env laden
    from dotenv import load_dotenv

    if env:
        load_dotenv(env)
    else:
        load_dotenv()

    log_level = "DEBUG" if debug else default_log_level()
    ctx.obj["logger"] = setup_logging(log_level)
    ctx.obj["debug"] = debug

    # Wenn kein Subcommand, Hilfe anzeigen
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


@cli.command()
@click.option(
    "--config", "config_path", type=click.Path(path_type=Path), required=True, help="Konfigurationsdatei"
)
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Konfigurationswert überschreiben")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), help="Ausgabeverzeichnis")
@click.pass_context
def train(
    ctx: click.Context, config_path: Path, overrides: Tuple[str, ...], out_dir: Optional[Path]
) -> None:
    """Trainiert ein Netz und schreibt metrics.csv, Checkpoints und resolved-config.txt."""
    from .experiment import ExperimentRunner

    config = _load_run_config(ctx, config_path, overrides, out_dir)
    ExperimentRunner(config, ctx.obj["logger"]).run()


@cli.command(name="eval")
@_data_options
@click.option("--t-max", "t_max_spec", help="Zeitschritte: all, a..b oder a,b,c")
@click.option("--exit-threshold", "exit_spec", help="Exit-Schwellen, z.B. 0.95,0.9,0.8,0.5")
@click.option("--max-timesteps", type=int, help="Spätester Ausstieg (Standard: T)")
@click.option("--batch-size", type=int, default=256, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=Path("."), help="Ausgabeverzeichnis")
@click.pass_context
def eval_command(
    ctx: click.Context,
    checkpoint: Path,
    config_path: Optional[Path],
    data_path: Optional[Path],
    overrides: Tuple[str, ...],
    t_max_spec: Optional[str],
    exit_spec: Optional[str],
    max_timesteps: Optional[int],
    batch_size: int,
    out_dir: Path,
) -> None:
    """Genauigkeit mit reduzierten Zeitschritten oder mit frühem Ausstieg."""
    from .evaluation import EvalRow, eval_at, early_exit
    from .export import ArtifactWriter, print_eval_report

    if t_max_spec is not None and exit_spec is not None:
        raise UsageError("--t-max und --exit-threshold schließen sich gegenseitig aus")

    logger = ctx.obj["logger"]
    net = load_checkpoint(checkpoint)
    dataset = _resolve_dataset(ctx, net, config_path, data_path, overrides)

    rows: List[EvalRow] = []
    if exit_spec is not None:
        for threshold in parse_float_list(exit_spec, "--exit-threshold"):
            result = early_exit(net, dataset, EarlyExitConfig(threshold, max_timesteps), batch_size)
            rows.append(EvalRow("early_exit", threshold, result.accuracy, result.avg_timesteps))
    else:
        for t_max in parse_t_max(t_max_spec or "all", net.config.timesteps):
            accuracy = eval_at(net, dataset, t_max, batch_size)
            rows.append(EvalRow("t_max", float(t_max), accuracy, float(t_max)))

    print_eval_report(rows)
    ArtifactWriter(out_dir, logger).write_eval(rows)


@cli.command()
@_data_options
@click.option("--attack", "kind", type=click.Choice(ATTACK_KINDS), required=True, help="Angriffsart")
@click.option("--epsilon", "epsilon_spec", help="ε-Liste (Standard: 1 für gn, 0.05 sonst)")
@click.option("--sigma", type=float, default=0.1, show_default=True, help="Standardabweichung (gn)")
@click.option("--steps", type=int, default=7, show_default=True, help="PGD-Schritte")
@click.option("--alpha", type=float, default=0.01, show_default=True, help="PGD-Schrittweite")
@click.option("--no-random-start", is_flag=True, help="PGD ohne Zufallsstart (BIM)")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed für Rauschen und Zufallsstart")
@click.option("--batch-size", type=int, default=256, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=Path("."), help="Ausgabeverzeichnis")
@click.pass_context
def attack(
    ctx: click.Context,
    checkpoint: Path,
    config_path: Optional[Path],
    data_path: Optional[Path],
    overrides: Tuple[str, ...],
    kind: str,
    epsilon_spec: Optional[str],
    sigma: float,
    steps: int,
    alpha: float,
    no_random_start: bool,
    seed: int,
    batch_size: int,
    out_dir: Path,
) -> None:
    """Robustheit gegen Gaußsches Rauschen, FGSM und PGD."""
    from .evaluation import robust_eval
    from .export import ArtifactWriter, print_robustness_report

    logger = ctx.obj["logger"]
    default_epsilon = "1" if kind == "gn" else "0.05"
    epsilons = parse_float_list(epsilon_spec or default_epsilon, "--epsilon")
    configs = [
        AttackConfig(
            kind=kind,
            epsilon=epsilon,
            sigma=sigma,
            pgd_steps=steps,
            pgd_alpha=alpha,
            random_start=not no_random_start,
            seed=seed,
        )
        for epsilon in epsilons
    ]

    net = load_checkpoint(checkpoint)
    dataset = _resolve_dataset(ctx, net, config_path, data_path, overrides)
    rows = robust_eval(net, dataset, configs, batch_size)

    print_robustness_report(rows)
    ArtifactWriter(out_dir, logger).write_robustness(rows)


@cli.command()
@click.option(
    "--config", "config_path", type=click.Path(path_type=Path), required=True, help="Basiskonfiguration"
)
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Konfigurationswert überschreiben")
@click.option("--axis", required=True, help="Achse, z.B. distill.alpha=0.5,1,2,3,5")
@click.option("--seeds", default="0", show_default=True, help="Seeds je Wert (überschreiben seed.model)")
@click.option("--jobs", type=int, default=1, show_default=True, help="Parallele Prozesse")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), help="Ausgabeverzeichnis")
@click.pass_context
def sweep(
    ctx: click.Context,
    config_path: Path,
    overrides: Tuple[str, ...],
    axis: str,
    seeds: str,
    jobs: int,
    out_dir: Optional[Path],
) -> None:
    """Trainiert je Achsenwert (und Seed) einen Lauf und schreibt sweep.csv."""
    from .experiment import parse_axis, run_sweep

    config = _load_run_config(ctx, config_path, overrides, out_dir)
    key, values = parse_axis(axis)
    try:
        seed_list = [int(part) for part in seeds.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"Ungültige Seed-Liste: '{seeds}'")
    if not seed_list:
        raise UsageError("--seeds braucht mindestens einen Seed")

    run_sweep(
        config, key, values, seed_list, Path(config.get("output.dir")), jobs, ctx.obj["logger"]
    )


@cli.command(name="export-logits")
@_data_options
@click.option("--batch-size", type=int, default=256, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=Path("."), help="Ausgabeverzeichnis")
@click.pass_context
def export_logits(
    ctx: click.Context,
    checkpoint: Path,
    config_path: Optional[Path],
    data_path: Optional[Path],
    overrides: Tuple[str, ...],
    batch_size: int,
    out_dir: Path,
) -> None:
    """Exportiert die rohen Logits aller Zeitschritte nach logits.csv."""
    from .export import ArtifactWriter

    net = load_checkpoint(checkpoint)
    dataset = _resolve_dataset(ctx, net, config_path, data_path, overrides)
    ArtifactWriter(out_dir, ctx.obj["logger"]).write_logits(net, dataset, batch_size)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Entry point; bildet Fehler auf Exit-Codes ab.

    Args:
        argv: Argumente ohne Programmnamen (Standard: sys.argv[1:])

    Returns:
        Exit-Code
    """
    try:
        result = cli.main(
            args=list(argv) if argv is not None else None,
            prog_name="snnd",
            standalone_mode=False,
            obj={},
        )
    except click.ClickException as e:
        e.show()
        return UsageError.exit_code
    except click.Abort:
        click.secho("Abgebrochen.", fg="red", err=True)
        return UsageError.exit_code
    except SnndError as e:
        logging.getLogger("snnd").debug("Fehlerdetails", exc_info=True)
        click.secho(f"Fehler: {e}", fg="red", err=True)
        return e.exit_code
    except OSError as e:
        click.secho(f"Dateifehler: {e}", fg="red", err=True)
        return SnndError.exit_code
    return result if isinstance(result, int) else 0


if __name__ == "__main__":
    sys.exit(main())
