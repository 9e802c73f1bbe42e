"""HTTP screening service: upload a handwriting photo, get the model answer.

The loaded model is immutable and shared across requests; POST /reload swaps
in a new artifact atomically, so every request observes exactly one version.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException, Request
from pydantic import BaseModel

from .artifact import ScreeningModel, load_screening_model, run_screening
from .backbone import Backbone
from .errors import DecodeError, InferenceError

ACCEPTED_CONTENT_TYPES = ("image/png", "image/jpeg")


class ScreeningResponse(BaseModel):
    probability: float
    label: str
    model_version: str
    timing_ms: float


class HealthResponse(BaseModel):
    model_version: str


class ReloadRequest(BaseModel):
    path: str | None = None


class ServiceState:
    """Backbone plus the current model; model replacement is a single
    attribute assignment and therefore atomic."""

    def __init__(self, backbone: Backbone, model: ScreeningModel | None,
                 model_path: str | None = None):
        self.backbone = backbone
        self.model = model
        self.model_path = model_path

    def reload(self, path: str | None = None) -> ScreeningModel:
        target = path or self.model_path
        if target is None:
            raise FileNotFoundError("no artifact path configured")
        model = load_screening_model(target)
        self.model = model
        self.model_path = target
        return model


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="sldscreen")
    app.state.service = state

    @app.post("/screen", response_model=ScreeningResponse)
    async def screen(request: Request):
        model = state.model
        if model is None:
            raise HTTPException(status_code=503, detail="no model loaded")
        content_type = request.headers.get("content-type", "")
        if content_type.split(";")[0].strip() not in ACCEPTED_CONTENT_TYPES:
            raise HTTPException(
                status_code=400,
                detail=f"content-type must be one of {ACCEPTED_CONTENT_TYPES}")
        body = await request.body()
        try:
            result = run_screening(body, state.backbone, model)
        except DecodeError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except InferenceError as exc:
            raise HTTPException(status_code=500, detail=str(exc))
        return ScreeningResponse(**result.to_dict())

    @app.get("/healthz", response_model=HealthResponse)
    async def healthz():
        model = state.model
        if model is None:
            raise HTTPException(status_code=503, detail="no model loaded")
        return HealthResponse(model_version=model.version)

    @app.post("/reload", response_model=HealthResponse)
    async def reload(body: ReloadRequest | None = None):
        path = body.path if body else None
        try:
            model = state.reload(path)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return HealthResponse(model_version=model.version)

    return app
