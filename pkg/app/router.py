from .api import model, scenario


def created_routes(app):
    app.include_router(model.router, prefix="/api/model", tags=["Model"])
    app.include_router(scenario.router, prefix="/api/scenario", tags=["Scenario"])
    return app
