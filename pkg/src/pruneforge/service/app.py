"""FastAPI application wrapping the session engine.

Immutable per-layer records (scores, projections, decisions, metrics) are
served as the exact bytes stored on disk, so responses stay byte-stable
across process restarts.
"""

from __future__ import annotations

import os
from pathlib import Path

from fastapi import FastAPI, HTTPException, Response
from fastapi.staticfiles import StaticFiles

from .. import dataio as D
from .. import metrics as MET
from .. import model as M
from .. import relevance as REL
from ..session import (
    JobNotFound,
    SessionConfig,
    SessionEngine,
    SessionError,
    SessionNotFound,
)
from . import schemas as S

DEFAULT_SESSIONS_ROOT = "./pruneforge-sessions"
SESSIONS_ENV_VAR = "PRUNEFORGE_SESSIONS"


def _raise_http(exc: Exception):
    if isinstance(exc, (SessionNotFound, JobNotFound)):
        raise HTTPException(status_code=404, detail=str(exc))
    if isinstance(exc, SessionError):
        raise HTTPException(status_code=409, detail=str(exc))
    if isinstance(exc, (ValueError, OSError)):
        raise HTTPException(status_code=400, detail=str(exc))
    raise exc


def _json_bytes(data: bytes) -> Response:
    return Response(content=data, media_type="application/json")


def create_app(sessions_root: str | None = None, ui_dir: str | None = None) -> FastAPI:
    root = sessions_root or os.environ.get(SESSIONS_ENV_VAR, DEFAULT_SESSIONS_ROOT)
    engine = SessionEngine(root)
    app = FastAPI(title="pruneforge", version="0.1.0")
    app.state.engine = engine

    @app.get("/api/health")
    def health():
        return {"status": "ok", "sessions_root": str(engine.root)}

    # --- sessions ---------------------------------------------------------
    @app.post("/api/sessions")
    def create_session(req: S.CreateSessionRequest):
        config = SessionConfig(
            method=req.method,
            dataset_manifest=req.dataset.manifest,
            split_index=req.dataset.split_index,
            split_count=req.dataset.split_count,
            train_fraction=req.dataset.train_fraction,
            split_seed=req.dataset.split_seed,
            checkpoint=req.model.checkpoint,
            preset=req.model.preset,
            preset_seed=req.model.preset_seed,
            criterion=req.criterion,
            policy_mode=req.policy.mode,
            policy_fraction=req.policy.fraction,
            policy_threshold=req.policy.threshold,
            score_subsample=req.score_subsample,
            projection_perplexity=req.projection_perplexity,
            projection_iterations=req.projection_iterations,
            retrain=_retrain_config(req.retrain),
        )
        try:
            session = engine.create_session(config, session_id=req.id)
        except Exception as exc:
            _raise_http(exc)
        return session.as_dict()

    @app.get("/api/sessions")
    def list_sessions():
        try:
            return {"sessions": engine.list_sessions()}
        except Exception as exc:
            _raise_http(exc)

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        try:
            return engine.get_session(session_id).as_dict()
        except Exception as exc:
            _raise_http(exc)

    @app.post("/api/sessions/{session_id}/layers/{layer}/prepare")
    def prepare_layer(session_id: str, layer: int):
        try:
            return engine.prepare_layer(session_id, layer)
        except Exception as exc:
            _raise_http(exc)

    @app.get("/api/sessions/{session_id}/layers/{layer}/scores")
    def layer_scores(session_id: str, layer: int):
        try:
            return _json_bytes(engine.layer_record(session_id, layer, "scores.json"))
        except Exception as exc:
            _raise_http(exc)

    @app.get("/api/sessions/{session_id}/layers/{layer}/projection")
    def layer_projection(session_id: str, layer: int):
        try:
            return _json_bytes(engine.layer_record(session_id, layer, "projection.json"))
        except Exception as exc:
            _raise_http(exc)

    @app.get("/api/sessions/{session_id}/layers/{layer}/weight-projection")
    def layer_weight_projection(session_id: str, layer: int):
        try:
            return _json_bytes(engine.weight_projection(session_id, layer))
        except Exception as exc:
            _raise_http(exc)

    @app.put("/api/sessions/{session_id}/layers/{layer}/decisions")
    def put_decisions(session_id: str, layer: int, req: S.DecisionsRequest):
        try:
            return engine.submit_decisions(session_id, layer, req.remove)
        except Exception as exc:
            _raise_http(exc)

    @app.get("/api/sessions/{session_id}/layers/{layer}/decisions")
    def get_decisions(session_id: str, layer: int):
        try:
            return _json_bytes(engine.layer_record(session_id, layer, "decisions.json"))
        except Exception as exc:
            _raise_http(exc)

    @app.get("/api/sessions/{session_id}/layers/{layer}/record")
    def get_record(session_id: str, layer: int):
        try:
            return _json_bytes(engine.layer_record(session_id, layer, "record.json"))
        except Exception as exc:
            _raise_http(exc)

    @app.post("/api/sessions/{session_id}/layers/{layer}/commit")
    def commit_layer(session_id: str, layer: int):
        try:
            return engine.commit_layer(session_id, layer).as_dict()
        except Exception as exc:
            _raise_http(exc)

    @app.post("/api/sessions/{session_id}/finalize")
    def finalize(session_id: str):
        try:
            return engine.finalize(session_id).as_dict()
        except Exception as exc:
            _raise_http(exc)

    @app.get("/api/sessions/{session_id}/metrics")
    def session_metrics(session_id: str):
        try:
            return _json_bytes(engine.metrics(session_id))
        except Exception as exc:
            _raise_http(exc)

    @app.get("/api/sessions/{session_id}/jobs/{job_id}", response_model=S.JobView)
    def session_job(session_id: str, job_id: str):
        try:
            return engine.get_job(job_id, session_id=session_id).as_dict()
        except Exception as exc:
            _raise_http(exc)

    @app.get("/api/jobs/{job_id}", response_model=S.JobView)
    def get_job(job_id: str):
        try:
            return engine.get_job(job_id).as_dict()
        except Exception as exc:
            _raise_http(exc)

    # --- one-shot tools -----------------------------------------------------
    @app.post("/api/tools/train", response_model=S.JobView)
    def tool_train(req: S.TrainRequest):
        try:
            job = engine.train_job(
                manifest=req.dataset.manifest,
                out_path=req.out,
                preset=req.preset,
                checkpoint=req.checkpoint,
                epochs=req.epochs,
                learning_rate=req.learning_rate,
                batch_size=req.batch_size,
                seed=req.seed,
                split_count=req.dataset.split_count,
                train_fraction=req.dataset.train_fraction,
                split_index=req.dataset.split_index,
                split_seed=req.dataset.split_seed,
            )
        except Exception as exc:
            _raise_http(exc)
        return job.as_dict()

    @app.post("/api/tools/eval")
    def tool_eval(req: S.EvalRequest):
        try:
            model = M.load_checkpoint(req.checkpoint)
            ds = D.load_dataset(req.dataset.manifest)
            plan = D.make_splits(
                ds, req.dataset.split_count, req.dataset.train_fraction, req.dataset.split_seed
            )
            tr, te = plan.train_test(req.dataset.split_index)
            record = D.normalization_stats(ds.images[tr])
            cm = MET.evaluate_model(
                model, D.apply_normalization(ds.images[te], record), ds.labels[te]
            )
            return {
                "checkpoint": req.checkpoint,
                "split_index": req.dataset.split_index,
                "test_samples": int(te.size),
                "accuracy": MET.accuracy(cm),
                "cohen_kappa": MET.cohen_kappa(cm),
                "confusion": cm.counts.tolist(),
            }
        except Exception as exc:
            _raise_http(exc)

    @app.post("/api/tools/flops")
    def tool_flops(req: S.FlopsRequest):
        try:
            if req.checkpoint:
                spec = M.load_checkpoint(req.checkpoint).spec
            elif req.preset:
                spec = M.preset_spec(req.preset, tuple(req.resolution), req.class_count)
            else:
                raise HTTPException(status_code=400, detail="need a preset or a checkpoint")
            out = {"flops": M.flops(spec).as_dict(), "kernel_counts": spec.kernel_counts()}
            if req.prune_fraction is not None:
                pruned = M.uniformly_pruned_spec(spec, req.prune_fraction)
                kernel_red, gflops_red = MET.reduction_percentages(spec, pruned)
                out["pruned"] = {
                    "fraction": req.prune_fraction,
                    "flops": M.flops(pruned).as_dict(),
                    "kernel_reduction_pct": kernel_red,
                    "gflops_reduction_pct": gflops_red,
                }
            return out
        except HTTPException:
            raise
        except Exception as exc:
            _raise_http(exc)

    @app.post("/api/tools/score")
    def tool_score(req: S.ScoreRequest):
        try:
            model = M.load_checkpoint(req.checkpoint)
            ds = D.load_dataset(req.dataset.manifest)
            plan = D.make_splits(
                ds, req.dataset.split_count, req.dataset.train_fraction, req.dataset.split_seed
            )
            tr, _ = plan.train_test(req.dataset.split_index)
            record = D.normalization_stats(ds.images[tr])
            images = D.apply_normalization(ds.images[tr], record)
            labels = ds.labels[tr]
            if req.subsample is not None and req.subsample < images.shape[0]:
                import numpy as np

                rng = np.random.default_rng([0, 777])
                idx = np.sort(rng.choice(images.shape[0], size=req.subsample, replace=False))
                images, labels = images[idx], labels[idx]
            if req.criterion == REL.OBJECTIVE:
                scores = REL.score_objective(model, req.layer, images, labels)
            elif req.criterion == REL.L1_NORM:
                scores = REL.score_l1(model, req.layer)
            else:
                scores = REL.score_apoz(model, req.layer, images)
            return {
                "layer": req.layer,
                "criterion": req.criterion,
                "scores": REL.scores_to_records(scores),
            }
        except Exception as exc:
            _raise_http(exc)

    ui = Path(ui_dir or os.environ.get("PRUNEFORGE_UI", "frontend/dist"))
    if ui.is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui), html=True), name="ui")

    return app


def _retrain_config(req: S.RetrainSettings):
    from ..retraining import RetrainConfig

    return RetrainConfig(
        progressive_epochs=req.progressive_epochs,
        final_epochs=req.final_epochs,
        final_learning_rate=req.final_learning_rate,
        complete_learning_rate=req.complete_learning_rate,
        per_layer_learning_rates=dict(req.per_layer_learning_rates),
        batch_size=req.batch_size,
        seed=req.seed,
    )
