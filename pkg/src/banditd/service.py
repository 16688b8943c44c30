"""The HTTP surface: decisions and rewards in, reports and promotions out.

Bodies are the same JSON encodings the log channel uses, so the wire format
is identical everywhere. The service is stateless beyond the registry and
the log files: any sequence of requests is reproducible from config + logs.
"""
from __future__ import annotations

import glob
import json
import os
import time
from contextlib import asynccontextmanager
from typing import Optional

from fastapi import FastAPI, Header, HTTPException, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from banditd.config import ServiceConfig
from banditd.core import RewardEvent
from banditd.logchannel import (
    SegmentWriter,
    _candidate_from,
    _fv_from,
    canonical_json,
    segment_name,
)
from banditd.pipeline import (
    DecisionPipeline,
    DecisionRequest,
    PolicyRegistry,
    PromotionRejected,
)
from banditd.policy import ColdStartScorer, load_policy
from banditd.ope import EvaluationReport
from banditd.rules import RuleFactory
from banditd.simenv import standard_rules


def _resolve_champion(config: ServiceConfig):
    name = config.champion
    if name.startswith("coldstart"):
        _, _, sources = name.partition(":")
        preferred = tuple(s for s in sources.split(",") if s) or ("dialog",)
        return ColdStartScorer(version=name if ":" in name else "coldstart-v0",
                               rules_version=config.rules_version,
                               preferred_sources=preferred)
    path = os.path.join(config.policy_dir, name)
    if not name.endswith(".bin"):
        path += ".bin"
    return load_policy(path)


def build_registry(config: ServiceConfig) -> PolicyRegistry:
    factory = RuleFactory(config.rules_dir)
    if config.rules_version not in factory.manifest():
        if config.rules_version == "rules-v1":
            factory.publish(standard_rules())
        else:
            raise KeyError(f"rules version {config.rules_version!r} not published")
    champion = _resolve_champion(config)
    os.makedirs(config.log_dir, exist_ok=True)
    return PolicyRegistry(
        champion=champion,
        rule_factory=factory,
        active_rules_version=config.rules_version,
        exploration_config=config.exploration,
        rails=config.rails,
        fallback=config.fallback_candidate(),
        history_path=os.path.join(config.log_dir, "promotions.log"),
    )


def create_app(config: ServiceConfig,
               registry: Optional[PolicyRegistry] = None) -> FastAPI:
    writers: dict[str, SegmentWriter] = {}

    @asynccontextmanager
    async def lifespan(_app):
        yield
        for w in writers.values():
            w.close()

    app = FastAPI(title="banditd", docs_url=None, redoc_url=None, lifespan=lifespan)
    registry = registry or build_registry(config)
    now_ms = lambda: int(time.time() * 1000)

    def writer(kind: str) -> SegmentWriter:
        name = segment_name(kind, now_ms())
        path = os.path.join(config.log_dir, name)
        existing = writers.get(kind)
        if existing is None or existing.path != path:
            if existing is not None:
                existing.close()
            writers[kind] = SegmentWriter(path, kind, durable=True)
        return writers[kind]

    pipeline = DecisionPipeline(registry, None)

    def check_token(authorization: Optional[str]) -> None:
        if not config.auth_token:
            return
        if authorization != f"Bearer {config.auth_token}":
            raise HTTPException(status_code=401, detail="missing or bad bearer token")

    app.state.registry = registry
    app.state.pipeline = pipeline
    app.state.config = config

    @app.get("/v1/health")
    def health():
        return {
            "status": "ok",
            "champion": registry.champion_version,
            "rules_version": registry.active_rules_version,
            "guard": {
                "min_ess_fraction": registry.rails.min_ess_fraction,
                "ci_level": registry.rails.ci_level,
                "required_margin": registry.rails.required_margin,
            },
            "stats": dict(pipeline.stats.__dict__),
        }

    @app.post("/v1/decide")
    async def decide(request: Request):
        try:
            body = json.loads(await request.body())
            decision_request = DecisionRequest(
                user_id=body.get("user_id", ""),
                query=body.get("query", ""),
                context=_fv_from(body["context"]),
                candidates=tuple(_candidate_from(c) for c in body["candidates"]),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise HTTPException(status_code=400, detail=f"malformed request: {exc}")
        try:
            registry.champion()
        except KeyError:
            raise HTTPException(status_code=503, detail="no champion policy loaded")
        pipeline.writer = writer("decision")
        action, event_id, record = pipeline.decide(
            decision_request, arm=body.get("arm", "none"))
        return {"action_id": action.action_id, "event_id": event_id,
                "probability": record.chosen_prob}

    @app.post("/v1/reward", status_code=202)
    async def reward(request: Request):
        try:
            body = json.loads(await request.body())
            event = RewardEvent(
                event_id=body["event_id"],
                signal=body["signal"],
                value=float(body["value"]),
                timestamp_ms=int(body.get("ts", now_ms())),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise HTTPException(status_code=400, detail=f"malformed reward: {exc}")
        problems = event.violations()
        if problems:
            raise HTTPException(status_code=400, detail="; ".join(problems))
        offset = writer("reward").append_reward(event)
        return {"offset": offset}

    @app.get("/v1/reports")
    def reports():
        out = []
        for path in sorted(glob.glob(os.path.join(config.reports_dir, "*.json"))):
            with open(path, encoding="utf-8") as fh:
                payload = json.load(fh)
            if isinstance(payload, list):
                out.extend(payload)
            else:
                out.append(payload)
        return out

    @app.get("/v1/policies")
    def policies():
        champion_version = registry.champion_version
        return [
            {"version": v, "champion": v == champion_version}
            for v in registry.versions()
        ]

    @app.post("/v1/promote")
    def promote(body: dict, authorization: Optional[str] = Header(default=None)):
        check_token(authorization)
        evaluation = None
        if body.get("evaluation"):
            evaluation = EvaluationReport.from_obj(body["evaluation"])
        try:
            entry = registry.promote(
                body["version"],
                evaluation=evaluation,
                mode=body.get("mode", "manual"),
                operator=body.get("operator"),
                champion_estimate=body.get("champion_estimate"),
            )
        except PromotionRejected as exc:
            return JSONResponse(status_code=409, content={"detail": str(exc)})
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return entry.to_obj()

    @app.post("/v1/rollback")
    def rollback(body: dict, authorization: Optional[str] = Header(default=None)):
        check_token(authorization)
        try:
            entry = registry.rollback(body["version"], operator=body.get("operator"))
        except KeyError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return entry.to_obj()

    @app.get("/v1/history")
    def history():
        return [entry.to_obj() for entry in registry.history]

    if config.console_dir and os.path.isdir(config.console_dir):
        app.mount("/console", StaticFiles(directory=config.console_dir, html=True),
                  name="console")

    return app


def serve(config: ServiceConfig) -> None:
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")
