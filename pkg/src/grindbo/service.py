"""HTTP service exposing the operator loop.

The service owns no optimization logic: every state transition is a session
engine call, and the stored document is the single source of truth. Writes
take the per-session lock; reads work from the last committed document.
"""

from __future__ import annotations

import uuid

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, Field, field_validator

from . import acquisition as acq
from .cost import CostParams
from .gp import NumericalConditioningError
from .session import Session, SessionConfig
from .store import (
    SessionDocument,
    SessionNotFoundError,
    SessionStore,
    config_from_wire,
    convergence_to_wire,
    document_to_dict,
    ensure_models,
    export_trial_log,
    hyperparams_to_wire,
    params_from_wire,
    proposal_to_wire,
    recommendation_to_wire,
    trial_to_wire,
)
from .types import TrialOutcome

DEFAULT_SURFACE_GRID_N = 101


class DomainBody(BaseModel):
    cutting_speed_mps: tuple[float, float] = (12.0, 30.0)
    feed_rate_mmpm: tuple[float, float] = (10.0, 40.0)


class ConstraintBody(BaseModel):
    name: str
    limit: float
    p_min: float = Field(default=0.5, gt=0.0, lt=1.0)


class SessionCreateBody(BaseModel):
    session_id: str | None = None
    seed: int | None = Field(default=None, ge=0)
    epsilon_U: float = Field(default=0.04, gt=0.0)
    max_trials: int = Field(default=30, ge=2)
    domain: DomainBody = Field(default_factory=DomainBody)
    constraints: list[ConstraintBody] | None = None
    cost_params: dict | None = None

    @field_validator("session_id")
    @classmethod
    def _printable_id(cls, value):
        if value is not None and (not value or "/" in value or "\x00" in value):
            raise ValueError("session_id must be a non-empty string without '/'")
        return value


class ParamsBody(BaseModel):
    cutting_speed_mps: float
    feed_rate_mmpm: float


class OutcomeBody(BaseModel):
    first_side_temp_C: float = Field(gt=0.0)
    max_roughness_nm: float = Field(gt=0.0)
    dressing_interval_inserts: float = Field(gt=0.0)
    censored: bool = False


class TrialBody(BaseModel):
    params: ParamsBody
    outcome: OutcomeBody
    trial_token: str | None = None
    origin: str | None = Field(default=None, pattern="^manual$")


def _session_config_from_body(body: SessionCreateBody, default_seed: int) -> SessionConfig:
    wire = {
        "domain": {
            "cutting_speed_mps": list(body.domain.cutting_speed_mps),
            "feed_rate_mmpm": list(body.domain.feed_rate_mmpm),
        },
        "constraints": [
            {"name": c.name, "limit": c.limit, "p_min": c.p_min}
            for c in (body.constraints or [])
        ]
        or [
            {"name": "temperature", "limit": 585.0, "p_min": 0.5},
            {"name": "roughness", "limit": 230.0, "p_min": 0.5},
        ],
        "cost_params": body.cost_params or {},
        "epsilon_U": body.epsilon_U,
        "seed": body.seed if body.seed is not None else default_seed,
        "max_trials": body.max_trials,
    }
    if not wire["cost_params"]:
        from dataclasses import asdict

        wire["cost_params"] = asdict(CostParams())
    return config_from_wire(wire)


def _advance_response(doc: SessionDocument, trial) -> dict:
    session = doc.session
    summary = session.advance()
    return {
        "trial": trial_to_wire(trial),
        "model_summary": hyperparams_to_wire(session._model_hypers),
        "recommendation": recommendation_to_wire(summary["recommendation"]),
        "convergence": convergence_to_wire(summary["convergence"]),
        "next_proposal": (
            proposal_to_wire(summary["next_proposal"])
            if summary["next_proposal"] is not None
            else None
        ),
        "degraded": session.degraded,
    }


def create_app(store: SessionStore, default_seed: int = 0) -> FastAPI:
    app = FastAPI(title="grindbo", version="0.1.0")

    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ValueError)
    async def _value_error(request, exc):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(NumericalConditioningError)
    async def _conditioning_error(request, exc):
        return JSONResponse(
            status_code=500,
            content={"detail": str(exc), "jitter_levels": list(exc.jitter_levels)},
        )

    def load_or_404(session_id: str) -> SessionDocument:
        try:
            return store.load(session_id)
        except SessionNotFoundError:
            raise HTTPException(status_code=404, detail=f"session {session_id!r} not found")

    @app.post("/sessions", status_code=201)
    def create_session(body: SessionCreateBody):
        config = _session_config_from_body(body, default_seed)
        session_id = body.session_id or uuid.uuid4().hex
        if store.exists(session_id):
            raise HTTPException(status_code=409, detail=f"session {session_id!r} exists")
        session = Session.create(config)
        doc = SessionDocument(session=session, session_id=session_id)
        with store.lock(session_id):
            store.save(doc)
        return {
            "session_id": session_id,
            "initial_proposals": [proposal_to_wire(p) for p in session.pending_proposals],
        }

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return document_to_dict(load_or_404(session_id))

    @app.post("/sessions/{session_id}/trials")
    def post_trial(session_id: str, body: TrialBody):
        with store.lock(session_id):
            doc = load_or_404(session_id)
            session = doc.session

            if body.trial_token is not None and body.trial_token in doc.trial_tokens:
                cached = doc.trial_responses.get(body.trial_token)
                submitted = body.model_dump(exclude={"trial_token"})
                if cached is not None and cached.get("_request") == submitted:
                    return cached["response"]
                raise HTTPException(
                    status_code=409,
                    detail="trial_token was already used with a different payload",
                )

            if session.converged:
                raise HTTPException(status_code=409, detail="session already converged")
            if session.at_trial_cap:
                raise HTTPException(status_code=409, detail="session is at its trial cap")

            params = params_from_wire(body.params.model_dump())
            outcome = TrialOutcome(
                first_side_temperature=body.outcome.first_side_temp_C,
                max_roughness=body.outcome.max_roughness_nm,
                dressing_interval=body.outcome.dressing_interval_inserts,
                censored=body.outcome.censored,
            )
            trial = session.record_trial(params, outcome, origin=body.origin)
            response = _advance_response(doc, trial)

            if body.trial_token is not None:
                doc.trial_tokens[body.trial_token] = trial.index
                doc.trial_responses[body.trial_token] = {
                    "_request": body.model_dump(exclude={"trial_token"}),
                    "response": response,
                }
            store.save(doc)
        return response

    @app.get("/sessions/{session_id}/recommendation")
    def get_recommendation(
        session_id: str,
        pT: float = Query(default=None, gt=0.0, lt=1.0),
        pRa: float = Query(default=None, gt=0.0, lt=1.0),
    ):
        doc = load_or_404(session_id)
        if len(doc.session.trials) < 2:
            return Response(status_code=204)
        ensure_models(doc)
        rec = doc.session.recommend_optimum(pT, pRa)
        if rec is None:
            return Response(status_code=204)
        return recommendation_to_wire(rec)

    @app.get("/sessions/{session_id}/surfaces")
    def get_surfaces(
        session_id: str,
        quantity: str = Query(pattern="^(cost|temperature|roughness)$"),
        n: int = Query(default=DEFAULT_SURFACE_GRID_N, ge=2, le=301),
    ):
        doc = load_or_404(session_id)
        if len(doc.session.trials) < 2:
            raise HTTPException(
                status_code=409, detail="surfaces need at least two recorded trials"
            )
        ensure_models(doc)
        model = doc.session.models[quantity]
        pts = acq.grid_points(doc.session.config.domain, n)
        mean, std = model.predict(pts, return_std=True)
        variance = std**2
        rows = np.column_stack([pts, mean, variance]).tolist()
        return {
            "quantity": quantity,
            "n": n,
            "columns": ["cutting_speed_mps", "feed_rate_mmpm", "mean", "variance"],
            "rows": rows,
        }

    @app.get("/sessions/{session_id}/export")
    def get_export(session_id: str):
        doc = load_or_404(session_id)
        return PlainTextResponse(export_trial_log(doc.session))

    return app
