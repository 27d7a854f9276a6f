"""HTTP service for interactive report composition.

Sessions hold an input embedding, the working anchor list, accepted sentences,
and the running context vector. Suggestions are pure reads: the same session
state and request always produce the same bytes. Mutations (accept, finalize)
are guarded by an optimistic revision counter.
"""

from __future__ import annotations

import datetime as _dt
import json
import threading
import uuid
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI, HTTPException, Query as QueryParam
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .anchors import MODALITIES, anchor_vocabulary
from .corpus import UNK_ID, tokenize
from .editor import EditInput, edit_sentence, encode_template
from .errors import ClaraError, CorpusError, EmptyQueryError, FormatError
from .metrics import EvalPair, text_metrics
from .pipeline import GenerationConfig, ModelBundle, resolve_anchors
from .prototype import make_query, retrieve

API_VERSION = "1"


@dataclass
class Session:
    id: str
    modality: str
    embedding: np.ndarray
    anchors: list[str]
    anchors_predicted: bool
    accepted: list[str] = dataclass_field(default_factory=list)
    context: np.ndarray | None = None
    revision: int = 0
    finalized: bool = False
    created_at: str = ""
    updated_at: str = ""
    lock: threading.Lock = dataclass_field(default_factory=threading.Lock)


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat()


def create_app(bundle: ModelBundle | None = None,
               config: GenerationConfig | None = None,
               journal_path: str | Path | None = None) -> FastAPI:
    """Build the API app around one loaded model bundle (or none, degraded)."""
    app = FastAPI(title="clara report composer", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    default_config = config or GenerationConfig()
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()

    def journal(event: str, payload: dict) -> None:
        if journal_path is None:
            return
        record = {"at": _now(), "event": event, **payload}
        with open(journal_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    @app.middleware("http")
    async def version_header(request, call_next):
        response = await call_next(request)
        response.headers["x-api-version"] = API_VERSION
        return response

    def need_bundle() -> ModelBundle:
        if bundle is None:
            raise HTTPException(status_code=503, detail="no model bundle is loaded")
        return bundle

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return session

    def check_revision(session: Session, revision: int | None) -> None:
        if revision is not None and revision != session.revision:
            raise HTTPException(
                status_code=409,
                detail=f"stale revision {revision}, session is at {session.revision}",
            )

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "models_loaded": bundle is not None}

    @app.get("/v1/anchors")
    def anchors_endpoint(modality: str = QueryParam(...)):
        if modality not in MODALITIES:
            raise HTTPException(status_code=400, detail=f"unknown modality {modality!r}")
        return {"modality": modality, "anchors": list(anchor_vocabulary(modality))}

    @app.get("/v1/retrieve")
    def retrieve_endpoint(q: str = QueryParam(...), k: int = QueryParam(5, ge=1, le=50)):
        b = need_bundle()
        try:
            query = make_query([], q, b.vocab)
            hits = retrieve(b.repo, query, k=k)
        except EmptyQueryError:
            return {"query": q, "results": []}
        return {
            "query": q,
            "results": [
                {
                    "sentence_id": h.sentence_id,
                    "sentence": h.entry.raw,
                    "weight": h.entry.weight,
                    "score": h.score,
                }
                for h in hits
            ],
        }

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: dict = Body(default={})):
        b = need_bundle()
        modality = body.get("modality") or b.modality
        if modality != b.modality:
            raise HTTPException(
                status_code=400,
                detail=f"bundle serves modality {b.modality!r}, not {modality!r}",
            )
        embedding = body.get("embedding")
        signal_ref = body.get("signal_ref")
        if embedding is not None:
            feats = np.asarray(embedding, dtype=np.float64)
            if feats.ndim != 1 or feats.shape[0] != b.embed_dim:
                raise HTTPException(
                    status_code=400,
                    detail=f"embedding must be a flat list of {b.embed_dim} numbers",
                )
            if not np.all(np.isfinite(feats)):
                raise HTTPException(status_code=400, detail="embedding has non-finite values")
        elif signal_ref:
            if b.encoder is None:
                raise HTTPException(status_code=503, detail="no signal encoder is loaded")
            try:
                feats = b.embedding_from_signal(signal_ref)
            except (FormatError, CorpusError, OSError) as exc:
                raise HTTPException(status_code=400, detail=f"unreadable signal: {exc}")
        else:
            raise HTTPException(status_code=400, detail="need embedding or signal_ref")

        raw_anchors = body.get("anchors")
        predicted = not raw_anchors
        try:
            anchors = resolve_anchors(b, feats, raw_anchors, default_config)
        except CorpusError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        except ClaraError as exc:
            raise HTTPException(status_code=503, detail=str(exc))

        session = Session(
            id=uuid.uuid4().hex,
            modality=modality,
            embedding=feats,
            anchors=anchors,
            anchors_predicted=predicted,
            created_at=_now(),
            updated_at=_now(),
        )
        with registry_lock:
            sessions[session.id] = session
        journal("create", {"session": session.id, "anchors": anchors})
        return {
            "session_id": session.id,
            "modality": modality,
            "anchors": anchors,
            "anchors_predicted": predicted,
            "revision": session.revision,
        }

    @app.get("/v1/sessions/{session_id}")
    def read_session(session_id: str):
        session = get_session(session_id)
        return {
            "session_id": session.id,
            "modality": session.modality,
            "anchors": session.anchors,
            "anchors_predicted": session.anchors_predicted,
            "sentences": list(session.accepted),
            "step": len(session.accepted),
            "revision": session.revision,
            "finalized": session.finalized,
            "created_at": session.created_at,
            "updated_at": session.updated_at,
        }

    @app.post("/v1/sessions/{session_id}/suggest")
    def suggest(session_id: str, body: dict = Body(default={})):
        b = need_bundle()
        session = get_session(session_id)
        prefix = body.get("prefix") or None
        mode = body.get("mode") or default_config.mode
        if mode not in ("full", "retrieve_only"):
            raise HTTPException(status_code=400, detail=f"unknown mode {mode!r}")
        if mode == "full" and b.editor is None:
            raise HTTPException(status_code=503, detail="no edit model is loaded")
        anchor = body.get("anchor")
        if anchor is not None and anchor not in anchor_vocabulary(session.modality):
            raise HTTPException(status_code=400, detail=f"unknown anchor {anchor!r}")
        if anchor is None:
            step = len(session.accepted)
            anchor = session.anchors[step % len(session.anchors)]

        try:
            query = make_query([anchor], prefix, b.vocab)
            hits = retrieve(b.repo, query, k=default_config.k_retrieve)
        except EmptyQueryError:
            hits = []
        if not hits:
            return {
                "anchor": anchor,
                "sentence": None,
                "template_id": None,
                "template": None,
                "score": None,
                "edited": False,
                "step": len(session.accepted),
                "note": "no-template",
            }
        top = hits[0]
        if mode == "retrieve_only":
            sentence = top.entry.raw
            edited = False
        else:
            prefix_ids = None
            if prefix:
                prefix_ids = [t for t in b.vocab.encode_text(prefix) if t != UNK_ID]
            edit = EditInput(
                template=top.entry.tokens,
                embedding=session.embedding,
                prev_context=session.context,
                prefix=prefix_ids or None,
                max_len=default_config.max_len,
            )
            tokens, _ = edit_sentence(edit, b.editor)
            from .corpus import detokenize

            sentence = detokenize(b.vocab.decode(tokens))
            edited = True
        return {
            "anchor": anchor,
            "sentence": sentence,
            "template_id": top.sentence_id,
            "template": top.entry.raw,
            "score": top.score,
            "edited": edited,
            "step": len(session.accepted),
        }

    @app.post("/v1/sessions/{session_id}/accept")
    def accept(session_id: str, body: dict = Body(...)):
        b = need_bundle()
        session = get_session(session_id)
        sentence = (body.get("sentence") or "").strip()
        if not sentence:
            raise HTTPException(status_code=400, detail="sentence must be nonempty")
        with session.lock:
            if session.finalized:
                raise HTTPException(status_code=409, detail="session is finalized")
            check_revision(session, body.get("revision"))
            tokens = [t for t in b.vocab.encode_text(sentence)]
            if b.editor is not None and tokens:
                edit = EditInput(template=tokens, embedding=session.embedding,
                                 prev_context=session.context)
                session.context = encode_template(edit, b.editor)
            session.accepted.append(sentence)
            session.revision += 1
            session.updated_at = _now()
            journal("accept", {"session": session.id, "sentence": sentence,
                               "revision": session.revision})
            return {
                "session_id": session.id,
                "step": len(session.accepted),
                "revision": session.revision,
            }

    @app.post("/v1/sessions/{session_id}/finalize")
    def finalize(session_id: str, body: dict = Body(default={})):
        session = get_session(session_id)
        with session.lock:
            if not session.accepted:
                raise HTTPException(status_code=409, detail="nothing accepted to finalize")
            check_revision(session, body.get("revision"))
            report_text = " ".join(session.accepted)
            response = {
                "session_id": session.id,
                "report": report_text,
                "sentences": list(session.accepted),
                "revision": session.revision,
                "finalized": True,
            }
            references = body.get("references") or []
            if references:
                pair = EvalPair(
                    candidate=tuple(tokenize(report_text)),
                    references=tuple(tuple(tokenize(r)) for r in references),
                )
                response["metrics"] = text_metrics([pair])
            if not session.finalized:
                session.finalized = True
                session.updated_at = _now()
                journal("finalize", {"session": session.id,
                                     "sentences": len(session.accepted)})
            return response

    @app.exception_handler(ClaraError)
    async def clara_error_handler(_request, exc: ClaraError):
        return JSONResponse(status_code=500, content={"detail": str(exc)})

    return app


def resolve_addr(addr: str | None = None) -> tuple[str, int]:
    """Split HOST:PORT, defaulting to the service's standard local address."""
    import os

    value = addr or os.environ.get("CLARA_ADDR") or "127.0.0.1:8787"
    host, _, port_s = value.rpartition(":")
    if not host or not port_s.isdigit():
        raise ClaraError(f"bad address {value!r}, expected HOST:PORT")
    return host, int(port_s)
