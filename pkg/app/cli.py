from pathlib import Path
from typing import Optional

import orjson
import pandas as pd
import typer

from app.config import logger, settings, start_logger
from app.errors import IcguardError
from app.harness import export_csv, monte_carlo, run_scenario
from app.scenario import build_scenario, load_scenario, model_report
from app.utils.process_timeseries import write_csv, write_json

app = typer.Typer(help="Detecção de ataques em V2V na interseção com observador por modos deslizantes.")

ConfigOption = typer.Option(None, "--config", "-c", help="Arquivo JSON do cenário; omitido usa o padrão.")


@app.callback()
def main():
    start_logger()


def _fail(exc: IcguardError):
    logger.error(f"{type(exc).__name__}: {exc.message}")
    typer.echo(orjson.dumps(exc.to_dict(), option=orjson.OPT_INDENT_2).decode(), err=True)
    raise typer.Exit(code=exc.exit_code)


def _crash(exc: Exception):
    logger.exception(f"Unexpected failure: {type(exc).__name__}: {exc}")
    payload = {"error": "Falha inesperada", "detalhes": f"{type(exc).__name__}: {exc}"}
    typer.echo(orjson.dumps(payload, option=orjson.OPT_INDENT_2).decode(), err=True)
    raise typer.Exit(code=3)


def _print_report(report: dict):
    parts = report["partitions"]
    typer.echo(f"dim(x_u)={parts['n_unobservable']}  dim(x1)={parts['n1']}  dim(x2)={parts['n2']}")
    for name in ("A11", "A12", "A21", "A22", "E1", "E2", "F1", "F2"):
        typer.echo(f"{name} = {parts[name]}")
    eig = [f"{z['re']:.6g}{z['im']:+.6g}j" for z in report["a11_eigenvalues"]]
    zeros = [f"{z['re']:.6g}{z['im']:+.6g}j" for z in report["invariant_zeros"]]
    modes = [f"{z['re']:.6g}{z['im']:+.6g}j" for z in report["unobservable_modes"]]
    typer.echo(f"eig(A11) = {eig}")
    typer.echo(f"invariant zeros = {zeros or 'none'}")
    typer.echo(f"unobservable modes = {modes}")
    typer.echo(f"matching matrix = {report['matching']['matrix']} (full column rank)")
    typer.echo(f"gain margins = {report['gain_check']['margin']}  passed={report['gain_check']['passed']}")
    typer.echo(f"e2_tilde = {report['bounds']['e2_tilde']}")
    typer.echo(f"rate band = [{report['limits']['lower_inf']}, {report['limits']['upper_inf']}]")
    typer.echo(f"EOI thresholds = {report['limits']['nu_fil_bar']}")
    typer.echo(f"smallest detectable constant attack = {report['detectability']['min_constant_attack']:.4f}")
    typer.echo(f"estimate accuracy = {report['estimation_accuracy']:.4f}")


@app.command("check-model")
def check_model(
        config: Optional[Path] = ConfigOption,
        as_json: bool = typer.Option(False, "--json", help="Imprime o relatório em JSON."),
):
    """Verifica as hipóteses estruturais do modelo e imprime partições, zeros e limites."""
    try:
        report = model_report(build_scenario(load_scenario(config)))
    except IcguardError as exc:
        _fail(exc)
    except Exception as exc:
        _crash(exc)
    if as_json:
        typer.echo(orjson.dumps(report, option=orjson.OPT_INDENT_2).decode())
    else:
        _print_report(report)


@app.command()
def run(
        config: Optional[Path] = ConfigOption,
        seed: int = typer.Option(0, "--seed", help="Semente do ruído de medição."),
        out: Path = typer.Option(None, "--out", help="Diretório de saída."),
):
    """Executa um cenário e grava run_<seed>.csv e run_<seed>.json."""
    out = out or Path(settings.get("RESULTS_DIR", "results"))
    try:
        result = run_scenario(load_scenario(config), seed)
        csv_path = export_csv(result, out / f"run_{seed}.csv")
        metrics = {**result.metrics(), "events": [e.to_dict() for e in result.events]}
        write_json(metrics, out / f"run_{seed}.json")
    except IcguardError as exc:
        _fail(exc)
    except Exception as exc:
        _crash(exc)
    typer.echo(f"{csv_path} novel={metrics['novel_first_persistent']} eoi={metrics['eoi_first_persistent']} "
               f"crash={metrics['crash_time']}")


@app.command("montecarlo")
def montecarlo_cmd(
        config: Optional[Path] = ConfigOption,
        runs: int = typer.Option(None, "--runs", min=1, help="Número de execuções."),
        seed_base: int = typer.Option(0, "--seed-base", help="Semente da primeira execução."),
        out: Path = typer.Option(None, "--out", help="Diretório de saída."),
        workers: int = typer.Option(None, "--workers", min=1, help="Processos paralelos."),
):
    """Varredura Monte Carlo; grava montecarlo.json e montecarlo_runs.csv."""
    out = out or Path(settings.get("RESULTS_DIR", "results"))
    runs = runs or int(settings.get("DEFAULT_RUNS", 100))
    workers = workers or int(settings.get("MONTE_CARLO_WORKERS", 1))
    try:
        summary = monte_carlo(load_scenario(config), runs, seed_base, workers)
        aggregate = summary.to_dict()
        write_json(aggregate, out / "montecarlo.json")
        write_csv(pd.DataFrame(summary.runs), out / "montecarlo_runs.csv")
    except IcguardError as exc:
        _fail(exc)
    except Exception as exc:
        _crash(exc)
    typer.echo(orjson.dumps({k: v for k, v in aggregate.items() if k != "failures"}).decode())


if __name__ == "__main__":
    app()
