"""Layer-by-layer pruning campaigns as a directory-backed state machine.

A session is a directory: a manifest (``session.json``), per-layer record
files, and model checkpoints. Every state transition rewrites the manifest
atomically; per-layer records and checkpoints are written once and never
touched again, so their bytes are stable across restarts and a fresh engine
pointed at the same root reconstructs an equivalent session from disk alone.

Layers commit strictly in order 1..L. Commits and finalization run as
background jobs (they retrain for minutes at full scale); everything else is
synchronous. One mutating job per session at a time.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis as A
from . import dataio as D
from . import metrics as MET
from . import model as M
from . import relevance as REL
from . import retraining as R

METHODS = ("oPPR", "sPPR", "oPCR", "sPCR")
OBJECTIVE_METHODS = ("oPPR", "oPCR")
PROGRESSIVE_METHODS = ("oPPR", "sPPR")

IDLE = "idle"
SCORING = "scoring"
PROJECTING = "projecting"
AWAITING_DECISIONS = "awaiting_decisions"
RETRAINING = "retraining"
FINALIZING = "finalizing"
DONE = "done"
FAILED = "failed"
_VOLATILE = {SCORING, PROJECTING, RETRAINING, FINALIZING}


class SessionError(ValueError):
    """Request conflicts with the session state machine."""


class SessionNotFound(KeyError):
    pass


class JobNotFound(KeyError):
    pass


@dataclass
class SessionConfig:
    method: str
    dataset_manifest: str
    split_index: int = 0
    split_count: int = 5
    train_fraction: float = 0.5
    split_seed: int = 0
    checkpoint: str | None = None      # baseline model; copied into the session
    preset: str | None = None          # alternative: fresh preset (untrained)
    preset_seed: int = 0
    criterion: str = REL.OBJECTIVE     # scoring criterion for objective methods
    policy_mode: str = "fixed_fraction"
    policy_fraction: float | None = 0.5
    policy_threshold: float | None = None
    score_subsample: int | None = None
    projection_perplexity: float = 30.0
    projection_iterations: int = 1000
    retrain: R.RetrainConfig = field(default_factory=R.RetrainConfig)

    def validate(self) -> None:
        if self.method not in METHODS:
            raise SessionError(f"unknown method '{self.method}' (expected one of {METHODS})")
        if self.checkpoint is None and self.preset is None:
            raise SessionError("a baseline checkpoint or a preset name is required")
        if self.criterion not in REL.CRITERIA:
            raise SessionError(f"unknown criterion '{self.criterion}'")
        if self.method in OBJECTIVE_METHODS:
            self.policy()  # raises on bad policy parameters
        self.retrain.validate()

    def policy(self) -> REL.SelectionPolicy:
        return REL.SelectionPolicy(
            mode=self.policy_mode,
            fraction=self.policy_fraction,
            threshold=self.policy_threshold,
        )

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "dataset_manifest": self.dataset_manifest,
            "split_index": self.split_index,
            "split_count": self.split_count,
            "train_fraction": self.train_fraction,
            "split_seed": self.split_seed,
            "checkpoint": self.checkpoint,
            "preset": self.preset,
            "preset_seed": self.preset_seed,
            "criterion": self.criterion,
            "policy_mode": self.policy_mode,
            "policy_fraction": self.policy_fraction,
            "policy_threshold": self.policy_threshold,
            "score_subsample": self.score_subsample,
            "projection_perplexity": self.projection_perplexity,
            "projection_iterations": self.projection_iterations,
            "retrain": {
                "progressive_epochs": self.retrain.progressive_epochs,
                "final_epochs": self.retrain.final_epochs,
                "final_learning_rate": self.retrain.final_learning_rate,
                "complete_learning_rate": self.retrain.complete_learning_rate,
                "per_layer_learning_rates": {
                    str(k): v for k, v in self.retrain.per_layer_learning_rates.items()
                },
                "batch_size": self.retrain.batch_size,
                "seed": self.retrain.seed,
            },
        }

    @staticmethod
    def from_dict(doc: dict) -> "SessionConfig":
        rt = doc.get("retrain", {})
        retrain = R.RetrainConfig(
            progressive_epochs=rt.get("progressive_epochs", 40),
            final_epochs=rt.get("final_epochs", 50),
            final_learning_rate=rt.get("final_learning_rate", 1e-5),
            complete_learning_rate=rt.get("complete_learning_rate", 1e-5),
            per_layer_learning_rates={
                int(k): float(v) for k, v in rt.get("per_layer_learning_rates", {}).items()
            },
            batch_size=rt.get("batch_size", 8),
            seed=rt.get("seed", 0),
        )
        return SessionConfig(
            method=doc["method"],
            dataset_manifest=doc["dataset_manifest"],
            split_index=doc.get("split_index", 0),
            split_count=doc.get("split_count", 5),
            train_fraction=doc.get("train_fraction", 0.5),
            split_seed=doc.get("split_seed", 0),
            checkpoint=doc.get("checkpoint"),
            preset=doc.get("preset"),
            preset_seed=doc.get("preset_seed", 0),
            criterion=doc.get("criterion", REL.OBJECTIVE),
            policy_mode=doc.get("policy_mode", "fixed_fraction"),
            policy_fraction=doc.get("policy_fraction", 0.5),
            policy_threshold=doc.get("policy_threshold"),
            score_subsample=doc.get("score_subsample"),
            projection_perplexity=doc.get("projection_perplexity", 30.0),
            projection_iterations=doc.get("projection_iterations", 1000),
            retrain=retrain,
        )


@dataclass
class Job:
    id: str
    kind: str
    session_id: str | None = None
    status: str = "running"            # running | succeeded | failed
    progress: float = 0.0              # monotone nondecreasing in [0, 1]
    epoch: int = 0
    total_epochs: int = 0
    message: str = ""
    error: str | None = None
    result: dict | None = None
    trace: list[float] = field(default_factory=list)  # per-epoch loss, grows live
    created_at: float = field(default_factory=time.time)

    def update(self, progress: float | None = None, epoch: int | None = None,
               total: int | None = None, message: str | None = None,
               loss: float | None = None) -> None:
        if progress is not None:
            self.progress = max(self.progress, min(1.0, progress))
        if epoch is not None:
            self.epoch = epoch
        if total is not None:
            self.total_epochs = total
        if message is not None:
            self.message = message
        if loss is not None:
            self.trace.append(float(loss))

    def as_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "session_id": self.session_id,
            "status": self.status,
            "progress": self.progress,
            "epoch": self.epoch,
            "total_epochs": self.total_epochs,
            "message": self.message,
            "error": self.error,
            "result": self.result,
            "trace": list(self.trace),
        }


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _write_json(path: Path, doc: dict) -> None:
    _atomic_write(path, json.dumps(doc, indent=1, sort_keys=True).encode("utf-8"))


@dataclass
class _SessionData:
    """Loaded dataset slice shared by every phase of one session."""
    train_images: np.ndarray
    train_labels: np.ndarray
    test_images: np.ndarray
    test_labels: np.ndarray
    normalization: D.NormalizationRecord
    class_count: int


class Session:
    """In-memory face of one session directory."""

    def __init__(self, root: Path, doc: dict):
        self.root = root
        self.id = doc["id"]
        self.config = SessionConfig.from_dict(doc["config"])
        self.current_layer = doc["current_layer"]
        self.status = doc["status"]
        self.layer_count = doc["layer_count"]
        self.created_at = doc.get("created_at", 0.0)
        self.failure: str | None = doc.get("failure")
        self.lock = threading.Lock()
        self.active_job: str | None = None
        self.data: _SessionData | None = None

    # --- paths ------------------------------------------------------------
    def layer_dir(self, l: int) -> Path:
        return self.root / "layers" / f"{l:03d}"

    def checkpoint_path(self, l: int) -> Path:
        if l == 0:
            return self.root / "checkpoints" / "base.cnnp"
        return self.root / "checkpoints" / f"layer_{l:03d}.cnnp"

    def record_path(self, l: int, name: str) -> Path:
        return self.layer_dir(l) / name

    # --- persistence --------------------------------------------------------
    def manifest(self) -> dict:
        return {
            "id": self.id,
            "config": self.config.as_dict(),
            "current_layer": self.current_layer,
            "status": self.status,
            "layer_count": self.layer_count,
            "created_at": self.created_at,
            "failure": self.failure,
        }

    def save(self) -> None:
        _write_json(self.root / "session.json", self.manifest())

    def set_status(self, status: str, failure: str | None = None) -> None:
        self.status = status
        self.failure = failure
        self.save()

    def committed_layers(self) -> list[int]:
        out = []
        for l in range(1, self.layer_count + 1):
            if self.record_path(l, "record.json").exists():
                out.append(l)
        return out

    def latest_model_path(self) -> Path:
        committed = self.committed_layers()
        return self.checkpoint_path(committed[-1] if committed else 0)

    def as_dict(self) -> dict:
        doc = self.manifest()
        doc["committed_layers"] = self.committed_layers()
        doc["finalized"] = (self.root / "final" / "report.json").exists()
        return doc


class SessionEngine:
    """Owns the sessions root directory, the job registry, and the workers."""

    def __init__(self, root, max_workers: int = 4):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.jobs: dict[str, Job] = {}
        self.sessions: dict[str, Session] = {}
        self.executor = ThreadPoolExecutor(max_workers=max_workers)
        self.registry_lock = threading.Lock()
        self.dataset_cache: dict[tuple, D.Dataset] = {}

    # --- session lifecycle --------------------------------------------------
    def create_session(self, config: SessionConfig, session_id: str | None = None) -> Session:
        config.validate()
        session_id = session_id or uuid.uuid4().hex[:12]
        sdir = self.root / session_id
        if sdir.exists():
            raise SessionError(f"session id '{session_id}' already exists")
        baseline = self._resolve_baseline(config)
        (sdir / "checkpoints").mkdir(parents=True)
        (sdir / "layers").mkdir()
        M.save_checkpoint(baseline, sdir / "checkpoints" / "base.cnnp")
        doc = {
            "id": session_id,
            "config": config.as_dict(),
            "current_layer": 1,
            "status": IDLE,
            "layer_count": baseline.spec.layer_count,
            "created_at": time.time(),
            "failure": None,
        }
        session = Session(sdir, doc)
        session.save()
        with self.registry_lock:
            self.sessions[session_id] = session
        return session

    def _resolve_baseline(self, config: SessionConfig) -> M.ModelState:
        ds = self._dataset(config)
        resolution = ds.resolution
        if config.checkpoint:
            model = M.load_checkpoint(config.checkpoint)
            if model.spec.input_resolution != resolution:
                raise SessionError(
                    f"checkpoint expects input {model.spec.input_resolution}, dataset is {resolution}"
                )
            if model.spec.classifier.class_count != ds.class_count:
                raise SessionError("checkpoint class count disagrees with dataset")
            return model
        return M.build_preset(config.preset, resolution, ds.class_count, seed=config.preset_seed)

    def get_session(self, session_id: str) -> Session:
        with self.registry_lock:
            if session_id in self.sessions:
                return self.sessions[session_id]
        sdir = self.root / session_id
        manifest = sdir / "session.json"
        if not manifest.exists():
            raise SessionNotFound(session_id)
        session = Session(sdir, json.loads(manifest.read_text()))
        self._recover(session)
        with self.registry_lock:
            self.sessions.setdefault(session_id, session)
            return self.sessions[session_id]

    def list_sessions(self) -> list[dict]:
        found = []
        for manifest in sorted(self.root.glob("*/session.json")):
            found.append(self.get_session(manifest.parent.name).as_dict())
        return found

    def _recover(self, session: Session) -> None:
        """After a restart the persisted records are the source of truth.

        A manifest caught in a volatile status (the process died mid-job)
        rolls back to the state its records imply; committed layers and their
        checkpoints are always kept.
        """
        committed = session.committed_layers()
        expected_layer = (committed[-1] + 1) if committed else 1
        changed = False
        if session.current_layer != expected_layer and session.status != DONE:
            session.current_layer = expected_layer
            changed = True
        if session.status in _VOLATILE:
            if (session.root / "final" / "report.json").exists():
                session.status = DONE
            elif (
                session.config.method not in OBJECTIVE_METHODS
                and session.current_layer <= session.layer_count
                and session.record_path(session.current_layer, "decisions.json").exists()
            ):
                session.status = AWAITING_DECISIONS
            else:
                session.status = IDLE
            changed = True
        if changed:
            session.save()

    # --- data ---------------------------------------------------------------
    def _dataset(self, config: SessionConfig) -> D.Dataset:
        key = (os.path.abspath(config.dataset_manifest),)
        with self.registry_lock:
            if key in self.dataset_cache:
                return self.dataset_cache[key]
        ds = D.load_dataset(config.dataset_manifest)
        with self.registry_lock:
            self.dataset_cache[key] = ds
        return ds

    def session_data(self, session: Session) -> _SessionData:
        if session.data is not None:
            return session.data
        cfg = session.config
        ds = self._dataset(cfg)
        plan = D.make_splits(ds, cfg.split_count, cfg.train_fraction, cfg.split_seed)
        tr, te = plan.train_test(cfg.split_index)
        record = D.normalization_stats(ds.images[tr])
        session.data = _SessionData(
            train_images=D.apply_normalization(ds.images[tr], record),
            train_labels=ds.labels[tr],
            test_images=D.apply_normalization(ds.images[te], record),
            test_labels=ds.labels[te],
            normalization=record,
            class_count=ds.class_count,
        )
        return session.data

    def _scoring_subset(self, session: Session) -> tuple[np.ndarray, np.ndarray]:
        data = self.session_data(session)
        sub = session.config.score_subsample
        if sub is None or sub >= data.train_images.shape[0]:
            return data.train_images, data.train_labels
        rng = np.random.default_rng([session.config.retrain.seed, 777])
        idx = np.sort(rng.choice(data.train_images.shape[0], size=sub, replace=False))
        return data.train_images[idx], data.train_labels[idx]

    # --- layer preparation ----------------------------------------------------
    def _require_layer(self, session: Session, l: int) -> None:
        if session.status == FAILED:
            raise SessionError(f"session failed: {session.failure}")
        if not 1 <= l <= session.layer_count:
            raise SessionError(f"layer {l} out of range 1..{session.layer_count}")
        if l != session.current_layer:
            raise SessionError(
                f"layers commit in order; layer {session.current_layer} is current, got {l}"
            )
        if session.current_layer > session.layer_count:
            raise SessionError("all layers are committed; only finalize remains")

    def prepare_layer(self, session_id: str, l: int) -> dict:
        session = self.get_session(session_id)
        with session.lock:
            self._require_layer(session, l)
            if session.active_job:
                raise SessionError("a job is already running for this session")
            objective = session.config.method in OBJECTIVE_METHODS
            marker = "scores.json" if objective else "projection.json"
            cached = session.record_path(l, marker)
            if cached.exists():
                return json.loads(cached.read_text())
            session.set_status(SCORING if objective else PROJECTING)
        try:
            result = self._compute_preparation(session, l, objective)
        except Exception as exc:
            with session.lock:
                session.set_status(FAILED, failure=f"prepare layer {l}: {exc}")
            raise
        with session.lock:
            session.set_status(AWAITING_DECISIONS if not objective else IDLE)
        return result

    def _compute_preparation(self, session: Session, l: int, objective: bool) -> dict:
        model = M.load_checkpoint(session.latest_model_path())
        session.layer_dir(l).mkdir(parents=True, exist_ok=True)
        if objective:
            images, labels = self._scoring_subset(session)
            crit = session.config.criterion
            if crit == REL.OBJECTIVE:
                scores = REL.score_objective(model, l, images, labels)
            elif crit == REL.L1_NORM:
                scores = REL.score_l1(model, l)
            else:
                scores = REL.score_apoz(model, l, images)
            doc = {"layer": l, "criterion": crit, "scores": REL.scores_to_records(scores)}
            _write_json(session.record_path(l, "scores.json"), doc)
            return doc
        data = self.session_data(session)
        projection = A.project_layer(
            model,
            data.train_images,
            data.train_labels,
            l,
            perplexity=session.config.projection_perplexity,
            iterations=session.config.projection_iterations,
            seed=session.config.retrain.seed,
        )
        hints = A.separation_hints(projection)
        doc = projection.to_payload()
        doc["hints"] = [{"kernel": k, "hint": hints[k]} for k in sorted(hints)]
        _write_json(session.record_path(l, "projection.json"), doc)
        return doc

    def layer_record(self, session_id: str, l: int, name: str) -> bytes:
        session = self.get_session(session_id)
        path = session.record_path(l, name)
        if not path.exists():
            raise SessionError(f"layer {l} has no {name.removesuffix('.json')} record yet")
        return path.read_bytes()

    def weight_projection(self, session_id: str, l: int) -> bytes:
        session = self.get_session(session_id)
        with session.lock:
            if not 1 <= l <= session.layer_count:
                raise SessionError(f"layer {l} out of range 1..{session.layer_count}")
            path = session.record_path(l, "weight_projection.json")
            if path.exists():
                return path.read_bytes()
            if l > session.current_layer:
                raise SessionError(f"layer {l} is not reachable yet")
            model = M.load_checkpoint(session.latest_model_path())
            session.layer_dir(l).mkdir(parents=True, exist_ok=True)
            proj = A.project_kernel_weights(
                model, l,
                perplexity=session.config.projection_perplexity,
                seed=session.config.retrain.seed,
            )
            _write_json(path, proj.to_payload())
            return path.read_bytes()

    # --- decisions ------------------------------------------------------------
    def submit_decisions(self, session_id: str, l: int, remove: list[int]) -> dict:
        session = self.get_session(session_id)
        with session.lock:
            if session.config.method in OBJECTIVE_METHODS:
                raise SessionError("objective methods take no manual decisions")
            self._require_layer(session, l)
            if session.active_job:
                raise SessionError("a job is already running for this session")
            model = M.load_checkpoint(session.latest_model_path())
            k_l = model.spec.conv_layers[l - 1].out_channels
            remove = sorted(set(int(k) for k in remove))
            if remove and (remove[0] < 0 or remove[-1] >= k_l):
                raise SessionError(f"kernel index out of range for layer {l} with {k_l} kernels")
            if len(remove) >= k_l:
                raise SessionError("cannot remove every kernel of a layer")
            session.layer_dir(l).mkdir(parents=True, exist_ok=True)
            doc = {"layer": l, "remove": remove}
            # decisions stay revisable until the commit; last write wins
            _write_json(session.record_path(l, "decisions.json"), doc)
            if session.status != AWAITING_DECISIONS:
                session.set_status(AWAITING_DECISIONS)
            return doc

    # --- jobs -------------------------------------------------------------------
    def _start_job(self, session: Session | None, kind: str, fn) -> Job:
        job = Job(id=uuid.uuid4().hex[:12], kind=kind, session_id=session.id if session else None)
        with self.registry_lock:
            self.jobs[job.id] = job

        def run():
            try:
                job.result = fn(job)
                job.progress = 1.0
                job.status = "succeeded"
            except Exception as exc:  # job outcome is the API surface for errors
                job.status = "failed"
                job.error = str(exc)
                if session is not None:
                    with session.lock:
                        session.active_job = None
                        session.set_status(FAILED, failure=f"{kind}: {exc}")
            finally:
                if session is not None and job.status == "succeeded":
                    with session.lock:
                        session.active_job = None

        self.executor.submit(run)
        return job

    def get_job(self, job_id: str, session_id: str | None = None) -> Job:
        with self.registry_lock:
            job = self.jobs.get(job_id)
        if job is None or (session_id is not None and job.session_id != session_id):
            raise JobNotFound(job_id)
        return job

    # --- commit ---------------------------------------------------------------
    def commit_layer(self, session_id: str, l: int) -> Job:
        session = self.get_session(session_id)
        with session.lock:
            self._require_layer(session, l)
            if session.active_job:
                raise SessionError("a job is already running for this session")
            removal = self._resolve_removal(session, l)
            session.set_status(RETRAINING)
            job = self._start_job(session, "commit", lambda j: self._run_commit(session, l, removal, j))
            session.active_job = job.id
            return job

    def _resolve_removal(self, session: Session, l: int) -> list[int]:
        if session.config.method in OBJECTIVE_METHODS:
            scores_path = session.record_path(l, "scores.json")
            if not scores_path.exists():
                raise SessionError(f"layer {l} has no scores; call prepare first")
            doc = json.loads(scores_path.read_text())
            scores = [
                REL.KernelScore(s["layer"], s["kernel"], s["value"], s["criterion"])
                for s in doc["scores"]
            ]
            return list(REL.select(scores, session.config.policy()).kernels)
        decisions_path = session.record_path(l, "decisions.json")
        if not decisions_path.exists():
            raise SessionError(f"layer {l} has no submitted decisions")
        return list(json.loads(decisions_path.read_text())["remove"])

    def _run_commit(self, session: Session, l: int, removal: list[int], job: Job) -> dict:
        cfg = session.config
        data = self.session_data(session)
        model = M.load_checkpoint(session.latest_model_path())
        trace_doc = None
        if removal:
            pruned = M.prune_layer(model, l, removal)
            if cfg.method in PROGRESSIVE_METHODS:
                job.update(message=f"progressive retraining of layer {l}", total=cfg.retrain.progressive_epochs)

                def on_epoch(epoch, total, dbar):
                    job.update(progress=epoch / total, epoch=epoch, total=total,
                               message=f"epoch {epoch}/{total} distance {dbar:.5f}", loss=dbar)

                refined, report = R.progressive_retrain(
                    model, pruned, l, data.train_images, cfg.retrain, progress=on_epoch
                )
                trace_doc = report.as_dict()
            else:
                job.update(message=f"complete retraining after layer {l}", total=1)
                refined = R.complete_retrain_epoch(
                    pruned,
                    data.train_images,
                    data.train_labels,
                    learning_rate=cfg.retrain.complete_learning_rate,
                    batch_size=cfg.retrain.batch_size,
                    seed=cfg.retrain.seed + l,
                )
                job.update(progress=1.0, epoch=1)
        else:
            # keeping every kernel: nothing to reconstruct, only the cursor moves
            refined = model
        M.save_checkpoint(refined, session.checkpoint_path(l))
        record = {
            "layer": l,
            "method": cfg.method,
            "removal": removal,
            "kept": refined.spec.conv_layers[l - 1].out_channels,
            "loss_trace": trace_doc,
            "checkpoint": str(session.checkpoint_path(l).relative_to(session.root)),
            "committed_at": time.time(),
        }
        session.layer_dir(l).mkdir(parents=True, exist_ok=True)
        _write_json(session.record_path(l, "record.json"), record)
        with session.lock:
            session.current_layer = l + 1
            session.set_status(IDLE)
        return {"layer": l, "removed": len(removal)}

    # --- finalize ----------------------------------------------------------------
    def finalize(self, session_id: str) -> Job:
        session = self.get_session(session_id)
        with session.lock:
            if session.status == FAILED:
                raise SessionError(f"session failed: {session.failure}")
            if session.current_layer <= session.layer_count:
                raise SessionError(
                    f"layers {session.current_layer}..{session.layer_count} are not committed yet"
                )
            if (session.root / "final" / "report.json").exists():
                raise SessionError("session is already finalized")
            if session.active_job:
                raise SessionError("a job is already running for this session")
            session.set_status(FINALIZING)
            job = self._start_job(session, "finalize", lambda j: self._run_finalize(session, j))
            session.active_job = job.id
            return job

    def _run_finalize(self, session: Session, job: Job) -> dict:
        cfg = session.config
        data = self.session_data(session)
        model = M.load_checkpoint(session.latest_model_path())
        baseline = M.load_checkpoint(session.checkpoint_path(0))
        job.update(message="final retraining", total=cfg.retrain.final_epochs)

        def on_epoch(epoch, total, loss):
            job.update(progress=epoch / max(total, 1), epoch=epoch, total=total,
                       message=f"epoch {epoch}/{total} loss {loss:.5f}", loss=loss)

        final_model, losses = R.final_retrain(
            model, data.train_images, data.train_labels, cfg.retrain, progress=on_epoch
        )
        cm = MET.evaluate_model(final_model, data.test_images, data.test_labels)
        base_cm = MET.evaluate_model(baseline, data.test_images, data.test_labels)
        kernel_red, gflops_red = MET.reduction_percentages(baseline.spec, final_model.spec)
        (session.root / "final").mkdir(exist_ok=True)
        M.save_checkpoint(final_model, session.root / "final" / "model.cnnp")
        report = {
            "session": session.id,
            "method": cfg.method,
            "split_index": cfg.split_index,
            "seed": cfg.retrain.seed,
            "baseline": {
                "accuracy": MET.accuracy(base_cm),
                "cohen_kappa": MET.cohen_kappa(base_cm),
            },
            "final": {
                "accuracy": MET.accuracy(cm),
                "cohen_kappa": MET.cohen_kappa(cm),
                "confusion": cm.counts.tolist(),
            },
            "kernel_reduction_pct": kernel_red,
            "gflops_reduction_pct": gflops_red,
            "final_train_loss": losses[-1] if losses else None,
            "per_layer": [
                json.loads(session.record_path(l, "record.json").read_text())
                for l in session.committed_layers()
            ],
        }
        _write_json(session.root / "final" / "report.json", report)
        with session.lock:
            session.set_status(DONE)
        return {"accuracy": report["final"]["accuracy"]}

    def metrics(self, session_id: str) -> bytes:
        session = self.get_session(session_id)
        path = session.root / "final" / "report.json"
        if not path.exists():
            raise SessionError("session has no metrics yet; finalize it first")
        return path.read_bytes()

    # --- standalone tool jobs -------------------------------------------------
    def train_job(
        self,
        manifest: str,
        out_path: str,
        preset: str = "tinyvgg",
        checkpoint: str | None = None,
        epochs: int = 20,
        learning_rate: float = 0.05,
        batch_size: int = 16,
        seed: int = 0,
        split_count: int = 5,
        train_fraction: float = 0.5,
        split_index: int = 0,
        split_seed: int = 0,
    ) -> Job:
        def run(job: Job) -> dict:
            ds = D.load_dataset(manifest)
            plan = D.make_splits(ds, split_count, train_fraction, split_seed)
            tr, te = plan.train_test(split_index)
            record = D.normalization_stats(ds.images[tr])
            xtr = D.apply_normalization(ds.images[tr], record)
            xte = D.apply_normalization(ds.images[te], record)
            if checkpoint:
                model = M.load_checkpoint(checkpoint)
            else:
                model = M.build_preset(preset, ds.resolution, ds.class_count, seed=seed)
            job.update(message="cross-entropy training", total=epochs)

            def on_epoch(epoch, total, loss):
                job.update(progress=epoch / total, epoch=epoch, total=total,
                           message=f"epoch {epoch}/{total} loss {loss:.4f}", loss=loss)

            model, losses = R.train_cross_entropy(
                model, xtr, ds.labels[tr], epochs, learning_rate, batch_size, seed, on_epoch
            )
            Path(out_path).parent.mkdir(parents=True, exist_ok=True)
            M.save_checkpoint(model, out_path)
            cm = MET.evaluate_model(model, xte, ds.labels[te])
            return {
                "checkpoint": str(out_path),
                "train_loss": losses[-1] if losses else None,
                "test_accuracy": MET.accuracy(cm),
                "test_cohen_kappa": MET.cohen_kappa(cm),
            }

        return self._start_job(None, "train", run)
