from app.config import logger
from app.scenario import build_scenario, default_scenario


def check_model() -> str:
    try:
        build_scenario(default_scenario())
        return "ok"
    except Exception as e:
        logger.warning(f"Modelo padrão falhou na verificação: {e}")
        return "error"
