import typing
from contextlib import asynccontextmanager

import orjson
from fastapi import FastAPI, status
from fastapi.responses import JSONResponse

from app.api.health_check import check_model
from app.config import logger, start_logger
from app.middleware.exception_handler import register_exception_handlers
from app.router import created_routes


class ORJSONResponse(JSONResponse):
    media_type = "application/json"

    def render(self, content: typing.Any) -> bytes:
        return orjson.dumps(content, option=orjson.OPT_SERIALIZE_NUMPY)


@asynccontextmanager
async def lifespan(app: FastAPI):
    start_logger()
    logger.info("icguard API pronta")
    yield


app = FastAPI(title="icguard", default_response_class=ORJSONResponse, lifespan=lifespan)
register_exception_handlers(app)


@app.get("/", tags=["Root"], include_in_schema=False)
def read_root():
    return {"message": "Bem-vindo ao icguard-API"}


@app.get("/healthz", tags=["Infra"], include_in_schema=False)
def health_check():
    results = {"status": "ok", "model": check_model()}
    if results["model"] != "ok":
        results["status"] = "error"
        return JSONResponse(status_code=status.HTTP_503_SERVICE_UNAVAILABLE, content=results)
    return results


app = created_routes(app)
