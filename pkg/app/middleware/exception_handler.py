from fastapi import FastAPI, Request
from fastapi.exceptions import HTTPException, RequestValidationError
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException

from app.config import logger
from app.errors import IcguardError


def _error_response(status_code: int, error: str, detalhes: str | list | dict | None = None):
    return JSONResponse(
        status_code=status_code,
        content={"error": error, "detalhes": detalhes},
    )


async def validation_exception_handler(request: Request, exc: RequestValidationError):
    logger.warning(f"[VALIDATION] {exc.errors()}")
    details = [{"loc": list(e["loc"]), "msg": e["msg"]} for e in exc.errors()]
    return _error_response(422, "Erro de validação", details)


async def http_exception_handler(request: Request, exc: HTTPException):
    logger.warning(f"[HTTP] {exc.status_code} - {exc.detail}")
    return _error_response(exc.status_code, str(exc.detail))


async def icguard_exception_handler(request: Request, exc: IcguardError):
    if exc.status_code >= 500:
        logger.error(f"[{type(exc).__name__}] {exc.message} {exc.details}")
    else:
        logger.warning(f"[{type(exc).__name__}] {exc.message} {exc.details}")
    return _error_response(exc.status_code, exc.message, exc.details)


async def generic_exception_handler(request: Request, exc: Exception):
    if isinstance(exc, HTTPException):
        return await http_exception_handler(request, exc)

    logger.exception(f"[UNEXPECTED] {exc}")
    return _error_response(500, "Erro interno inesperado")


def register_exception_handlers(app: FastAPI):
    app.add_exception_handler(RequestValidationError, validation_exception_handler)
    app.add_exception_handler(HTTPException, http_exception_handler)
    app.add_exception_handler(StarletteHTTPException, http_exception_handler)
    app.add_exception_handler(IcguardError, icguard_exception_handler)
    app.add_exception_handler(Exception, generic_exception_handler)
