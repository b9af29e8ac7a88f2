from fastapi import APIRouter, Body

from app.scenario import build_scenario, model_report, scenario_from_dict

router = APIRouter()


@router.post("/check")
def check_model(config: dict | None = Body(None, description="Cenário parcial; chaves ausentes usam o padrão")):
    bundle = build_scenario(scenario_from_dict(config or {}))
    return model_report(bundle)
