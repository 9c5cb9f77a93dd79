"""HTTP what-if service exposing the mechanistic simulator and the surrogate.

Endpoints (JSON over HTTP/1.1):

    GET  /v1/health        liveness/readiness
    GET  /v1/model         loaded checkpoint specs and training metadata
    GET  /v1/graph         graph summary
    GET  /v1/schema        JSON Schemas for request and response bodies
    POST /v1/run           execute a scenario on either engine
    POST /v1/model/load    admin: load another checkpoint

Responses carry per-day, per-node, per-age, per-state values of shape
horizon x n x 6 x 8. With `Accept: application/octet-stream` the run endpoint
returns a packed binary body instead of JSON.
"""

from __future__ import annotations

import json
import logging
import os
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, field_validator

from .epicore import ContactChangePoint, ContactPolicy, EpiParameters, N_AGE_GROUPS, N_STATES
from .metapop import MetapopGraph, load_graph, simulate_metapopulation
from .scenarios import (
    CHANGE_WINDOW,
    INPUT_DAYS,
    MAX_CHANGES,
    REGIMES,
    encode_spatial,
    sample_initial_state,
)
from .surrogate import GraphOperators, Model, load_checkpoint, predict

logger = logging.getLogger("graphepi.service")

SCHEMA_VERSION = 1
HORIZONS = (30, 60, 90)
BINARY_MAGIC = b"EGR1"


class ChangePointBody(BaseModel):
    day: float = Field(ge=1, le=CHANGE_WINDOW)
    reduction: float = Field(ge=0.0, lt=1.0)


class InitialConditionBody(BaseModel):
    kind: str = Field(pattern="^(regime|explicit)$")
    regime: str | None = None
    seed: int = 0
    states: list | None = None  # explicit: n x 6 x 8 nested lists

    @field_validator("regime")
    @classmethod
    def _known_regime(cls, value):
        if value is not None and value not in REGIMES:
            raise ValueError(f"regime must be one of {REGIMES}")
        return value


class ScenarioRequestBody(BaseModel):
    engine: str = Field(pattern="^(mechanistic|surrogate)$")
    horizon: int
    initial: InitialConditionBody
    change_points: list[ChangePointBody] = Field(default_factory=list, max_length=MAX_CHANGES)
    graph_id: str | None = None
    include_input_days: bool = True

    @field_validator("horizon")
    @classmethod
    def _known_horizon(cls, value):
        if value not in HORIZONS:
            raise ValueError(f"horizon must be one of {HORIZONS}")
        return value

    @field_validator("change_points")
    @classmethod
    def _strictly_increasing(cls, value):
        days = [cp.day for cp in value]
        if any(b - a < 1.0 for a, b in zip(days, days[1:])):
            raise ValueError("change days must increase by at least one day")
        return value


@dataclass
class ServiceConfig:
    graph_path: str | None = None
    checkpoint_paths: list[str] = field(default_factory=list)
    graph_id: str = "default"
    port: int = 8100
    mechanistic_workers: int = os.cpu_count() or 2
    ui_dir: str | None = None

    @classmethod
    def from_file(cls, path) -> "ServiceConfig":
        doc = json.loads(Path(path).read_text())
        return cls(**doc)

    def apply_env_overrides(self) -> "ServiceConfig":
        self.graph_path = os.environ.get("GRAPHEPI_GRAPH", self.graph_path)
        checkpoints = os.environ.get("GRAPHEPI_CHECKPOINTS")
        if checkpoints:
            self.checkpoint_paths = checkpoints.split(":")
        self.port = int(os.environ.get("GRAPHEPI_PORT", self.port))
        self.ui_dir = os.environ.get("GRAPHEPI_UI", self.ui_dir)
        return self


@dataclass
class ServiceState:
    """Immutable-after-load shared state; checkpoints keyed by horizon."""

    graph: MetapopGraph | None = None
    graph_id: str = "default"
    params: EpiParameters = field(default_factory=EpiParameters.covid_wild_type)
    base_policy: ContactPolicy | None = None
    models: dict[int, tuple[Model, dict]] = field(default_factory=dict)
    operators: GraphOperators | None = None

    def load_graph(self, graph: MetapopGraph, graph_id: str = "default"):
        self.graph = graph
        self.graph_id = graph_id
        self.operators = GraphOperators.from_adjacency(graph.adjacency)

    def load_model(self, path) -> dict:
        checkpoint = load_checkpoint(path)
        model = Model(checkpoint.spec, seed=0)
        model.load_weights(checkpoint.weights)
        self.models[checkpoint.spec.horizon] = (model, checkpoint.meta)
        return {"horizon": checkpoint.spec.horizon, "spec": checkpoint.spec.to_dict()}

    @property
    def ready(self) -> bool:
        return self.graph is not None and bool(self.models)


def _error(status: int, message: str, field_path: str | None = None) -> JSONResponse:
    body = {"error": message}
    if field_path:
        body["field"] = field_path
    return JSONResponse(status_code=status, content=body)


def _initial_states(state: ServiceState, initial: InitialConditionBody) -> np.ndarray:
    graph = state.graph
    if initial.kind == "explicit":
        states = np.asarray(initial.states, dtype=float)
        expected = (graph.n_nodes, N_AGE_GROUPS, N_STATES)
        if states.shape != expected:
            raise ValueError(f"initial.states must have shape {expected}, got {states.shape}")
        if np.any(states < 0):
            raise ValueError("initial.states must be nonnegative")
        return states
    regime = initial.regime or "persistent_threat"
    rng = np.random.default_rng(initial.seed)
    states = np.zeros((graph.n_nodes, N_AGE_GROUPS, N_STATES))
    for i in range(graph.n_nodes):
        states[i] = sample_initial_state(regime, rng, graph.populations[i], graph.age_shares[i])
    return states


def _policy_from_request(state: ServiceState, body: ScenarioRequestBody) -> ContactPolicy:
    from .epicore import default_policy

    base = state.base_policy or default_policy()
    changes = tuple(
        ContactChangePoint(day=cp.day, reduction=cp.reduction) for cp in body.change_points
    )
    return ContactPolicy(base.baseline, changes, base.ramp_width)


def _binary_response(header: dict, values: np.ndarray, input_days: np.ndarray | None) -> Response:
    header = dict(header)
    header["values_shape"] = list(values.shape)
    header["input_days_shape"] = list(input_days.shape) if input_days is not None else None
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    blob = bytearray()
    blob += BINARY_MAGIC
    blob += struct.pack("<I", len(header_bytes))
    blob += header_bytes
    blob += np.ascontiguousarray(values, dtype="<f4").tobytes()
    if input_days is not None:
        blob += np.ascontiguousarray(input_days, dtype="<f4").tobytes()
    return Response(content=bytes(blob), media_type="application/octet-stream")


def create_app(state: ServiceState | None = None, ui_dir: str | None = None) -> FastAPI:
    state = state if state is not None else ServiceState()
    app = FastAPI(title="graphepi scenario service")
    app.state.service = state
    pool = ThreadPoolExecutor(max_workers=ServiceConfig().mechanistic_workers)

    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        first = exc.errors()[0]
        path = ".".join(str(p) for p in first.get("loc", []) if p != "body")
        return _error(400, first.get("msg", "invalid request"), path or None)

    @app.middleware("http")
    async def request_logging(request: Request, call_next):
        started = time.perf_counter()
        response = await call_next(request)
        logger.info(
            json.dumps(
                {
                    "method": request.method,
                    "path": request.url.path,
                    "status": response.status_code,
                    "ms": round((time.perf_counter() - started) * 1000, 3),
                }
            )
        )
        return response

    @app.get("/v1/health")
    async def health():
        if not state.ready:
            return _error(503, "graph or model not loaded")
        return {"status": "ok", "graph_id": state.graph_id, "horizons": sorted(state.models)}

    @app.get("/v1/model")
    async def model_info():
        if not state.models:
            return _error(503, "no checkpoint loaded")
        return {
            "models": {
                str(h): {"spec": model.spec.to_dict(), "meta": meta}
                for h, (model, meta) in sorted(state.models.items())
            }
        }

    @app.get("/v1/graph")
    async def graph_info():
        if state.graph is None:
            return _error(503, "no graph loaded")
        return {"graph_id": state.graph_id, **state.graph.summary()}

    @app.get("/v1/schema")
    async def schema():
        return {
            "request": ScenarioRequestBody.model_json_schema(),
            "response": response_json_schema(),
        }

    @app.post("/v1/model/load")
    async def model_load(body: dict):
        path = body.get("path")
        if not path:
            return _error(400, "missing checkpoint path", "path")
        try:
            info = state.load_model(path)
        except FileNotFoundError:
            return _error(400, f"no such checkpoint: {path}", "path")
        except Exception as exc:
            return _error(400, f"cannot load checkpoint: {exc}", "path")
        return {"loaded": info}

    @app.post("/v1/run")
    async def run(body: ScenarioRequestBody, request: Request):
        if not state.ready:
            return _error(503, "graph or model not loaded")
        if body.graph_id is not None and body.graph_id != state.graph_id:
            return _error(409, f"graph {body.graph_id!r} is not loaded (have {state.graph_id!r})")
        if body.engine == "surrogate" and body.horizon not in state.models:
            return _error(
                409,
                f"no checkpoint loaded for horizon {body.horizon} (have {sorted(state.models)})",
            )
        try:
            initial = _initial_states(state, body.initial)
        except ValueError as exc:
            return _error(400, str(exc), "initial.states")
        policy = _policy_from_request(state, body)

        import asyncio

        loop = asyncio.get_running_loop()
        result = await loop.run_in_executor(pool, _execute, state, body, initial, policy)
        response_body, values, input_days = result
        if "application/octet-stream" in request.headers.get("accept", ""):
            return _binary_response(response_body, values, input_days)
        response_body["values"] = values.tolist()
        if input_days is not None:
            response_body["input_days"] = input_days.tolist()
        return response_body

    return app


def _execute(state: ServiceState, body: ScenarioRequestBody, initial, policy):
    """Shared spin-up plus one engine run; returns (meta, values, input_days)."""
    graph = state.graph
    spinup = simulate_metapopulation(graph, initial, state.params, policy, INPUT_DAYS - 1)
    input_days = spinup.values.astype(np.float32)  # (5, n, 6, 8)

    started = time.perf_counter()
    if body.engine == "mechanistic":
        traj = simulate_metapopulation(
            graph, spinup.values[-1], state.params, policy, body.horizon
        )
        values = traj.values[1:].astype(np.float32)  # days 1..horizon after inputs
    else:
        model, _ = state.models[body.horizon]
        features = encode_spatial(input_days, policy)
        predicted = predict(model, features, state.operators)  # (horizon, n, 48)
        values = predicted.reshape(body.horizon, graph.n_nodes, N_AGE_GROUPS, N_STATES).astype(
            np.float32
        )
    latency_ms = (time.perf_counter() - started) * 1000

    response = {
        "schema_version": SCHEMA_VERSION,
        "engine": body.engine,
        "graph_id": state.graph_id,
        "horizon": body.horizon,
        "n_nodes": graph.n_nodes,
        "latency_ms": latency_ms,
        "request": json.loads(body.model_dump_json()),
    }
    return response, values, (input_days if body.include_input_days else None)


def response_json_schema() -> dict:
    """Published schema for the JSON variant of /v1/run responses."""
    day_tensor = {
        "type": "array",
        "items": {
            "type": "array",
            "items": {
                "type": "array",
                "items": {"type": "array", "items": {"type": "number"}},
            },
        },
    }
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "type": "object",
        "required": [
            "schema_version",
            "engine",
            "graph_id",
            "horizon",
            "n_nodes",
            "latency_ms",
            "request",
            "values",
        ],
        "properties": {
            "schema_version": {"const": SCHEMA_VERSION},
            "engine": {"enum": ["mechanistic", "surrogate"]},
            "graph_id": {"type": "string"},
            "horizon": {"enum": list(HORIZONS)},
            "n_nodes": {"type": "integer", "minimum": 2},
            "latency_ms": {"type": "number", "minimum": 0},
            "request": {"type": "object"},
            "values": day_tensor,
            "input_days": day_tensor,
        },
    }


def build_state_from_config(config: ServiceConfig) -> ServiceState:
    state = ServiceState()
    if config.graph_path:
        state.load_graph(load_graph(config.graph_path), config.graph_id)
    for path in config.checkpoint_paths:
        state.load_model(path)
    return state


def serve(config: ServiceConfig):  # pragma: no cover - thin uvicorn wrapper
    import uvicorn

    state = build_state_from_config(config)
    ui_dir = config.ui_dir
    if ui_dir is None and Path("frontend/dist").is_dir():
        ui_dir = "frontend/dist"
    app = create_app(state, ui_dir=ui_dir)
    uvicorn.run(app, host="0.0.0.0", port=config.port)
