"""HTTP annotation service: sessions wrap the active-learning loop, serve
each round's selected batch as displayable questions, accept orderings, and
retrain in the background.

All mutations of one session are serialized through its lock, so concurrent
requests observe some sequential ordering. Batch serving is idempotent per
round; answers are idempotent per (round, triplet). A session answered by a
simulated oracle over HTTP reproduces the in-process loop bit for bit,
because batch selection, oracle flips, and retraining all derive their
randomness from (seed, tag, round) streams rather than from call order.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import loop as alc
from .data import TripletDataset
from .strategies import STRATEGY_NAMES, BatchTooLarge

_SESSION_KEYS = {
    "dataset", "strategy", "batch_size", "seed", "n_passes", "dropout_p",
    "lam", "min_norm", "init_pool", "noise_rate", "candidate_cap",
    "hidden_layers", "embed_dim", "epochs", "pretrain_epochs", "sgd_batch", "lr",
}

IDLE = "idle"
AWAITING = "awaiting_annotations"
TRAINING = "training"


def _err(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse({"error": message, "code": code}, status_code=status)


@dataclass
class _Held:
    """One live session plus its annotation round in progress."""

    sid: str
    dataset: TripletDataset
    dataset_name: str
    strategy: str
    settings: alc.RoundSettings
    session: alc.ActiveLearningSession
    config_echo: dict
    lock: threading.Lock = field(default_factory=threading.Lock)
    status: str = IDLE
    pending: alc.PendingBatch | None = None
    batch_payload: dict | None = None
    answers: dict[int, str] = field(default_factory=dict)
    error: str | None = None

    def descriptor(self) -> dict:
        s = self.session
        out = {
            "id": self.sid,
            "dataset": self.dataset_name,
            "strategy": self.strategy,
            "round": s.round_index,
            "labeled": len(s.labeled_ids),
            "unlabeled": len(s.unlabeled_ids),
            "status": self.status,
            "config": self.config_echo,
        }
        if self.error:
            out["error"] = self.error
        return out

    def records_json(self) -> list[dict]:
        return [
            {
                "round": r.round_index,
                "strategy": r.strategy,
                "chosen_ids": list(r.chosen_ids),
                "batch_entropy": r.batch_entropy,
                "accuracy": r.accuracy,
                "select_ms": r.select_ms,
                "train_ms": r.train_ms,
            }
            for r in self.session.history
        ]


def _default_ui_dir() -> Path | None:
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return candidate if candidate.is_dir() else None


def create_app(datasets: dict[str, TripletDataset], ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="batchent annotation service")
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    sessions: dict[str, _Held] = {}
    registry_lock = threading.Lock()

    def _get(sid: str) -> _Held | None:
        with registry_lock:
            return sessions.get(sid)

    @app.post("/sessions")
    def create_session(body: dict):
        for key in body:
            if key not in _SESSION_KEYS:
                return _err(400, "invalid_config", f"unknown key {key!r}")
        for key in ("dataset", "strategy", "batch_size"):
            if key not in body:
                return _err(400, "invalid_config", f"missing required key {key!r}")
        name = body["dataset"]
        dataset = datasets.get(name)
        if dataset is None:
            return _err(404, "unknown_dataset", f"no dataset named {name!r}")
        strategy = body["strategy"]
        if strategy not in STRATEGY_NAMES:
            return _err(400, "invalid_config", f"unknown strategy {strategy!r}")
        try:
            batch_size = int(body["batch_size"])
            seed = int(body.get("seed", 0))
            init_pool = int(body.get("init_pool", 0))
            noise_rate = float(body.get("noise_rate", 0.0))
            settings = alc.RoundSettings(
                batch_size=batch_size,
                n_passes=int(body.get("n_passes", 70)),
                dropout_p=float(body.get("dropout_p", 0.02)),
                lam=None if body.get("lam") is None else float(body["lam"]),
                min_norm=float(body.get("min_norm", 1e-8)),
                candidate_cap=(
                    None if body.get("candidate_cap", 5000) is None
                    else int(body.get("candidate_cap", 5000))
                ),
            )
            train_config = alc.TrainConfig(
                epochs=int(body.get("epochs", 200)),
                sgd_batch=int(body.get("sgd_batch", 500)),
                lr=float(body.get("lr", 1e-3)),
            )
            hidden = [int(h) for h in body.get("hidden_layers", [32, 16])]
            embed_dim = int(body.get("embed_dim", 8))
            pretrain = int(body.get("pretrain_epochs", 300))
        except (TypeError, ValueError) as exc:
            return _err(400, "invalid_config", str(exc))
        if batch_size < 1:
            return _err(400, "invalid_config", "batch_size must be >= 1")
        if batch_size > len(dataset.train_pool) - init_pool:
            return _err(400, "batch_too_large", "batch too large")
        oracle = alc.Oracle(dataset.ground_truth, flip_rate=noise_rate, seed=seed)
        try:
            session = alc.init_session(
                dataset,
                oracle,
                init_pool_size=init_pool,
                seed=seed,
                train_config=train_config,
                pretrain_epochs=pretrain,
                hidden_layers=hidden,
                embed_dim=embed_dim,
                strategy_label=strategy,
            )
        except alc.PoolTooSmall as exc:
            return _err(400, "invalid_config", str(exc))
        sid = uuid.uuid4().hex[:12]
        held = _Held(
            sid=sid,
            dataset=dataset,
            dataset_name=name,
            strategy=strategy,
            settings=settings,
            session=session,
            config_echo=dict(body),
        )
        with registry_lock:
            sessions[sid] = held
        return JSONResponse(held.descriptor(), status_code=201)

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        held = _get(sid)
        if held is None:
            return _err(404, "unknown_session", f"no session {sid!r}")
        with held.lock:
            return held.descriptor()

    @app.get("/sessions/{sid}/batch")
    def get_batch(sid: str):
        held = _get(sid)
        if held is None:
            return _err(404, "unknown_session", f"no session {sid!r}")
        with held.lock:
            if held.status == TRAINING:
                return _err(409, "wrong_status", "session is training; poll until idle")
            if held.status == AWAITING:
                return held.batch_payload  # idempotent per round
            try:
                pending = alc.propose_batch(held.session, held.strategy, held.settings)
            except BatchTooLarge as exc:
                return _err(400, "batch_too_large", str(exc))
            features = held.dataset.features.rows
            labels = held.dataset.manifest.get("labels")
            images = held.dataset.manifest.get("images")
            items = []
            for cid, trip in zip(pending.selection.chosen, pending.served):
                item = {
                    "triplet_id": cid,
                    "i": trip.i,
                    "j": trip.j,
                    "k": trip.k,
                    "payloads": {
                        "i": [float(v) for v in features[trip.i]],
                        "j": [float(v) for v in features[trip.j]],
                        "k": [float(v) for v in features[trip.k]],
                    },
                }
                if labels:
                    item["labels"] = {r: labels[getattr(trip, r)] for r in ("i", "j", "k")}
                if images:
                    item["images"] = {r: images[getattr(trip, r)] for r in ("i", "j", "k")}
                items.append(item)
            held.pending = pending
            held.answers = {}
            held.batch_payload = {"round": held.session.round_index + 1, "items": items}
            held.status = AWAITING
            return held.batch_payload

    def _commit_async(held: _Held) -> None:
        pending = held.pending
        annotated = []
        for cid, trip in zip(pending.selection.chosen, pending.served):
            closer = held.answers[cid]
            annotated.append(trip if closer == "j" else trip.swapped())
        try:
            alc.commit_round(held.session, pending, annotated)
            failure = None
        except Exception as exc:  # surfaced via the descriptor, not a crashed thread
            failure = f"{type(exc).__name__}: {exc}"
        with held.lock:
            held.pending = None
            held.batch_payload = None
            held.answers = {}
            held.error = failure
            held.status = IDLE

    @app.post("/sessions/{sid}/annotations")
    def post_annotations(sid: str, body: dict):
        held = _get(sid)
        if held is None:
            return _err(404, "unknown_session", f"no session {sid!r}")
        with held.lock:
            if held.status != AWAITING:
                return _err(409, "wrong_status", f"session is {held.status}, not {AWAITING}")
            for key in body:
                if key not in {"session", "round", "answers"}:
                    return _err(422, "invalid_submission", f"unknown key {key!r}")
            if "session" in body and body["session"] != sid:
                return _err(422, "invalid_submission", "session id mismatch")
            expected_round = held.session.round_index + 1
            if body.get("round") != expected_round:
                return _err(422, "bad_round", f"expected round {expected_round}, got {body.get('round')}")
            answers = body.get("answers")
            if not isinstance(answers, list) or not answers:
                return _err(422, "invalid_submission", "answers must be a nonempty list")
            served_ids = set(held.pending.selection.chosen)
            seen_now = set()
            parsed = []
            for ans in answers:
                if not isinstance(ans, dict) or set(ans) != {"triplet_id", "closer"}:
                    return _err(422, "invalid_submission", f"malformed answer {ans!r}")
                tid, closer = ans["triplet_id"], ans["closer"]
                if closer not in ("j", "k"):
                    return _err(422, "invalid_submission", f"closer must be 'j' or 'k', got {closer!r}")
                if tid not in served_ids:
                    return _err(422, "unknown_triplet", f"triplet {tid!r} is not in this round's batch")
                if tid in seen_now:
                    return _err(422, "duplicate_answer", f"triplet {tid!r} answered twice in one submission")
                seen_now.add(tid)
                parsed.append((tid, closer))
            for tid, closer in parsed:
                held.answers[tid] = closer  # resubmission overwrites
            remaining = len(served_ids) - len(held.answers)
            if remaining == 0:
                held.status = TRAINING
                threading.Thread(target=_commit_async, args=(held,), daemon=True).start()
            return {"accepted": len(parsed), "remaining": remaining, "status": held.status}

    @app.get("/sessions/{sid}/metrics")
    def get_metrics(sid: str):
        held = _get(sid)
        if held is None:
            return _err(404, "unknown_session", f"no session {sid!r}")
        with held.lock:
            out = {
                "records": held.records_json(),
                "status": held.status,
                "round": held.session.round_index,
            }
            if held.error:
                out["error"] = held.error
            return out

    resolved_ui = Path(ui_dir) if ui_dir else _default_ui_dir()
    if resolved_ui and resolved_ui.is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(resolved_ui), html=True), name="ui")

    return app
