"""HTTP chat service over a trained checkpoint.

Sessions are held in memory, one lock each, so concurrent asks against the
same session serialize while different sessions proceed independently. The
turn log keeps everything a client needs to re-render a conversation,
including per-turn selection diagnostics.

Routes:
    GET    /healthz                 service and model info
    POST   /sessions                201 {"session_id": ...}
    GET    /sessions/{id}           session state with full turn log
    DELETE /sessions/{id}           204
    POST   /sessions/{id}/ask       answer one question
"""

from __future__ import annotations

import json
import threading
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .checkpoint import load_checkpoint
from .encoding import InputConfig
from .errors import ConvqaError
from .metrics import predict_turn
from .model import ModelConfig
from .quac import MAX_TURNS, UNANSWERABLE, AnswerSpan, Dialogue, Turn
from .selector import most_recent_turns, select_turns
from .tokenizer import Vocabulary, load_vocab


@dataclass
class QAEngine:
    params: dict
    model_cfg: ModelConfig
    input_cfg: InputConfig
    vocab: Vocabulary
    threshold: float = 0.5
    max_k: int = 11
    selection_mode: str = "relevance"

    @classmethod
    def from_checkpoint(
        cls,
        checkpoint_path: str | Path,
        vocab_path: str | Path,
        threshold: float = 0.5,
        max_k: int = 11,
        selection_mode: str = "relevance",
    ) -> "QAEngine":
        params, model_cfg, input_cfg, _ = load_checkpoint(checkpoint_path)
        vocab = load_vocab(vocab_path)
        return cls(
            params=params,
            model_cfg=model_cfg,
            input_cfg=input_cfg,
            vocab=vocab,
            threshold=threshold,
            max_k=max_k,
            selection_mode=selection_mode,
        )

    def answer(
        self, passage: str, history: list[dict[str, Any]], question: str
    ) -> dict[str, Any]:
        """Answer one question given the session's passage and prior turns."""
        pairs = [(t["question"], t["answer"]) for t in history]
        if self.selection_mode == "relevance":
            selection = select_turns(
                pairs,
                question,
                self.vocab,
                self.params["selector_emb"].data,
                threshold=self.threshold,
                max_k=self.max_k,
            )
        else:
            selection = most_recent_turns(len(pairs), self.max_k)

        turns = []
        for i, t in enumerate(history):
            span = t.get("char_span")
            if span is None:
                gold = AnswerSpan(UNANSWERABLE, -1)
            else:
                gold = AnswerSpan(t["answer"], span[0])
            turns.append(
                Turn(
                    turn_index=i,
                    question=t["question"],
                    gold_answers=(gold,),
                    is_unanswerable=span is None,
                )
            )
        turn_index = len(turns)
        turns.append(
            Turn(
                turn_index=turn_index,
                question=question,
                gold_answers=(AnswerSpan("", 0),),
                is_unanswerable=False,
            )
        )
        dialogue = Dialogue(
            id="live", title="", section_title="", passage=passage, turns=tuple(turns)
        )
        pred = predict_turn(
            self.params, self.model_cfg, self.input_cfg, self.vocab,
            dialogue, turn_index, selection,
        )
        return {
            "question": question,
            "answer": pred.text,
            "char_span": list(pred.char_span) if pred.char_span else None,
            "turn_index": turn_index,
            "cannot_answer": pred.cannot_answer,
            "selection": selection.to_dict(),
            "window_scores": [list(p) for p in pred.per_window_scores],
        }


@dataclass
class _Session:
    session_id: str
    passage: str
    title: str
    created_at: str
    turns: list[dict[str, Any]] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def public_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "passage": self.passage,
            "title": self.title,
            "created_at": self.created_at,
            "turns": list(self.turns),
        }


class CreateSessionRequest(BaseModel):
    passage: str
    title: str = ""


class AskRequest(BaseModel):
    question: str


def create_app(engine: QAEngine, persist_path: str | Path | None = None) -> FastAPI:
    """Build the app; persist_path, when set, saves sessions across restarts."""
    sessions: dict[str, _Session] = {}
    registry_lock = threading.Lock()

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        if persist_path is not None and Path(persist_path).exists():
            stored = json.loads(Path(persist_path).read_text(encoding="utf-8"))
            for item in stored:
                sessions[item["session_id"]] = _Session(
                    session_id=item["session_id"],
                    passage=item["passage"],
                    title=item["title"],
                    created_at=item["created_at"],
                    turns=list(item["turns"]),
                )
        yield
        if persist_path is not None:
            Path(persist_path).parent.mkdir(parents=True, exist_ok=True)
            with registry_lock:
                payload = [s.public_dict() for s in sessions.values()]
            Path(persist_path).write_text(
                json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
            )

    app = FastAPI(title="convqa service", lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def _get(session_id: str) -> _Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id!r}")
        return session

    @app.get("/healthz")
    def healthz() -> dict[str, Any]:
        return {
            "status": "ok",
            "vocab_size": len(engine.vocab),
            "max_seq_len": engine.input_cfg.max_seq_len,
            "selection_mode": engine.selection_mode,
            "threshold": engine.threshold,
            "max_k": engine.max_k,
            "max_turns": MAX_TURNS,
        }

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionRequest) -> dict[str, str]:
        if not body.passage.strip():
            raise HTTPException(status_code=400, detail="passage must be non-empty")
        session = _Session(
            session_id=uuid.uuid4().hex,
            passage=body.passage,
            title=body.title,
            created_at=datetime.now(timezone.utc).isoformat(),
        )
        with registry_lock:
            sessions[session.session_id] = session
        return {"session_id": session.session_id}

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict[str, Any]:
        return _get(session_id).public_dict()

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str) -> None:
        with registry_lock:
            if session_id not in sessions:
                raise HTTPException(status_code=404, detail=f"no session {session_id!r}")
            del sessions[session_id]

    @app.post("/sessions/{session_id}/ask")
    def ask(session_id: str, body: AskRequest) -> dict[str, Any]:
        if not body.question.strip():
            raise HTTPException(status_code=422, detail="question must be non-empty")
        session = _get(session_id)
        with session.lock:
            if len(session.turns) >= MAX_TURNS:
                raise HTTPException(
                    status_code=409,
                    detail=f"session already has {MAX_TURNS} turns",
                )
            try:
                payload = engine.answer(session.passage, session.turns, body.question)
            except ConvqaError as e:
                raise HTTPException(status_code=400, detail=str(e)) from e
            session.turns.append(
                {
                    "turn_index": payload["turn_index"],
                    "question": payload["question"],
                    "answer": payload["answer"],
                    "char_span": payload["char_span"],
                    "cannot_answer": payload["cannot_answer"],
                    "selection": payload["selection"],
                }
            )
        return payload

    return app
