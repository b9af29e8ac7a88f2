from fastapi import APIRouter, Body, Query

from app.config import settings
from app.harness import monte_carlo, run_scenario
from app.scenario import scenario_from_dict
from app.utils.capabilities import CAPABILITIES
from app.utils.process_timeseries import run_frame

router = APIRouter()


@router.get("/capabilities")
def get_capabilities():
    return CAPABILITIES


@router.post("/run")
def run(
        config: dict | None = Body(None, description="Cenário parcial; chaves ausentes usam o padrão"),
        seed: int = Query(0, description="Semente do ruído de medição"),
        every: int = Query(0, ge=0, description="Inclui a série decimada a cada N passos (0 = sem série)"),
):
    result = run_scenario(scenario_from_dict(config or {}), seed)
    response = {
        "metrics": result.metrics(),
        "events": [e.to_dict() for e in result.events],
    }
    if every:
        df = run_frame(result, every)
        response["series"] = df.astype(object).where(df.notna(), None).to_dict(orient="list")
    return response


@router.post("/montecarlo")
def run_monte_carlo(
        config: dict | None = Body(None),
        runs: int = Query(None, ge=1, le=1000, description="Número de execuções"),
        seed_base: int = Query(0, description="Semente da primeira execução"),
):
    runs = runs or int(settings.get("DEFAULT_RUNS", 100))
    summary = monte_carlo(scenario_from_dict(config or {}), runs, seed_base)
    return {**summary.to_dict(), "runs": summary.runs}
