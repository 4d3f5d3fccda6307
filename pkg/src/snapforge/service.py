"""HTTP business layer: crawl registration, text search, item lookup,
click-to-similar, image-upload similarity search, and system status.

Responses are JSON; errors use {"error_code", "message"}. Items are
serialized identically for text search and similarity search (plus a score
or distance when the endpoint ranks). The service itself is stateless: every
response is a pure function of the shared store state and the request.
"""

from __future__ import annotations

import email.parser
import email.policy
import json
import logging
from dataclasses import dataclass, field as dataclass_field
from typing import Any

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from snapforge.crawl import CrawlRequest, RegistrationError
from snapforge.gan.embed import EmbeddingError, extract_embedding

logger = logging.getLogger(__name__)

MAX_IMAGE_BYTES = 10 * 1024 * 1024


@dataclass
class AppState:
    text_index: Any
    collection: Any
    scheduler: Any
    engine: Any
    message_log: Any
    embed_params: Any = None
    detector: Any = None
    extra: dict = dataclass_field(default_factory=dict)


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse({"error_code": code, "message": message}, status_code=status)


def _api_item(record: dict, score: float | None = None, distance: float | None = None) -> dict:
    item = {
        "doc_id": record["doc_id"],
        "name": record.get("name"),
        "price": record.get("price"),
        "currency": record.get("currency"),
        "brand": record.get("brand"),
        "site_name": record.get("site_name"),
        "url": record.get("url"),
        "image_urls": record.get("image_urls") or [],
    }
    if score is not None:
        item["score"] = score
    if distance is not None:
        item["distance"] = distance
    return item


def parse_multipart(content_type: str, body: bytes) -> dict[str, tuple[str, bytes]]:
    """{field name: (filename, payload)} via the stdlib email machinery."""
    header = f"Content-Type: {content_type}\r\n\r\n".encode()
    msg = email.parser.BytesParser(policy=email.policy.HTTP).parsebytes(header + body)
    out: dict[str, tuple[str, bytes]] = {}
    if not msg.is_multipart():
        return out
    for part in msg.iter_parts():
        name = part.get_param("name", header="content-disposition")
        if not name:
            continue
        payload = part.get_payload(decode=True) or b""
        out[str(name)] = (part.get_filename() or "", payload)
    return out


def _doc_distances(state: AppState, query_vector, k: int, exclude_doc: str | None = None):
    """Nearest documents by min entry distance, ascending."""
    margin = k + 16
    hits = state.collection.search_flat(query_vector, k=min(len(state.collection), margin) or 1)
    best: dict[str, float] = {}
    for h in hits:
        if exclude_doc is not None and h.doc_id == exclude_doc:
            continue
        if h.doc_id not in best or h.distance < best[h.doc_id]:
            best[h.doc_id] = h.distance
    ranked = sorted(best.items(), key=lambda kv: (kv[1], kv[0]))[:k]
    return ranked


def create_app(state: AppState, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="snapforge", version="0.1.0")
    app.state.snapforge = state

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request: Request, exc: RequestValidationError):
        return _error(400, "invalid_request", str(exc))

    @app.post("/crawl-requests", status_code=202)
    async def register_crawl(request: Request):
        try:
            payload = json.loads(await request.body())
            crawl_request = CrawlRequest.from_dict(payload)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            return _error(400, "invalid_schema", f"bad crawl request: {e}")
        try:
            request_id = state.scheduler.register_crawl_request(crawl_request)
        except RegistrationError as e:
            message = str(e)
            if "already has an active crawl" in message:
                return _error(409, "duplicate_site", message)
            return _error(400, "invalid_request", message)
        handle = state.scheduler.handles[request_id]
        return {"request_id": request_id, "state": handle.state.value}

    @app.get("/search")
    async def search(q: str = "", site: str | None = None, limit: int = 20):
        if not q.strip():
            return _error(400, "empty_query", "q must be non-empty")
        if not 1 <= limit <= 100:
            return _error(400, "bad_limit", "limit must be in 1..100")
        filters = None
        if site is not None:
            if site not in state.text_index.known_values("site_name"):
                return _error(400, "unknown_site", f"no indexed documents for site {site!r}")
            filters = {"site_name": site}
        hits = state.text_index.search(q, filters=filters, limit=limit)
        items = []
        for doc_id, score in hits:
            record = state.text_index.get(doc_id)
            if record is not None:
                items.append(_api_item(record, score=score))
        return {"items": items, "query": q, "count": len(items)}

    @app.get("/items/{doc_id}")
    async def get_item(doc_id: str):
        record = state.text_index.get(doc_id)
        if record is None:
            return _error(404, "unknown_item", f"no document {doc_id!r}")
        return _api_item(record)

    @app.get("/items/{doc_id}/similar")
    async def similar(doc_id: str, k: int = 10):
        if k < 1:
            return _error(400, "bad_k", "k must be >= 1")
        record = state.text_index.get(doc_id)
        if record is None:
            return _error(404, "unknown_item", f"no document {doc_id!r}")
        entries = state.collection.entries_for_doc(doc_id)
        if not entries:
            return _error(409, "not_embedded", "document has no embedding yet")
        ranked = _doc_distances(state, entries[0].vector, k, exclude_doc=doc_id)
        items = []
        for other_id, distance in ranked:
            other = state.text_index.get(other_id)
            if other is not None:
                items.append(_api_item(other, distance=distance))
        return {"items": items, "doc_id": doc_id, "count": len(items)}

    @app.post("/search/image")
    async def image_search(request: Request, k: int = 10):
        if k < 1:
            return _error(400, "bad_k", "k must be >= 1")
        if state.embed_params is None:
            return _error(409, "no_model", "no embedding model loaded")
        body = await request.body()
        if len(body) > MAX_IMAGE_BYTES:
            return _error(413, "too_large", "image exceeds 10 MB")
        content_type = request.headers.get("content-type", "")
        image_bytes = body
        filename = ""
        if content_type.startswith("multipart/"):
            parts = parse_multipart(content_type, body)
            blob = parts.get("image") or parts.get("file")
            if blob is None and parts:
                blob = next(iter(parts.values()))
            if blob is None:
                return _error(400, "no_image_part", "multipart body carries no image part")
            filename, image_bytes = blob
        if len(image_bytes) > MAX_IMAGE_BYTES:
            return _error(413, "too_large", "image exceeds 10 MB")
        try:
            embeddings = extract_embedding(
                state.embed_params, image_bytes, state.detector, key=filename
            )
        except EmbeddingError as e:
            return _error(400, "undecodable_image", str(e))
        best: dict[str, float] = {}
        for emb in embeddings:
            for other_id, distance in _doc_distances(state, emb.vector, k):
                if other_id not in best or distance < best[other_id]:
                    best[other_id] = distance
        ranked = sorted(best.items(), key=lambda kv: (kv[1], kv[0]))[:k]
        items = []
        for other_id, distance in ranked:
            record = state.text_index.get(other_id)
            if record is not None:
                items.append(_api_item(record, distance=distance))
        return {"items": items, "regions": len(embeddings), "count": len(items)}

    @app.get("/status")
    async def status():
        topologies = {}
        pending_roots = 0
        for handle in state.engine.handles():
            roots = handle.metrics()["_roots"]
            pending_roots += roots["pending"]
            topologies[handle.name] = {
                "run_id": handle.run_id,
                "state": handle.state.value,
                "roots": roots,
            }
        topics = {
            name: state.message_log.end_offsets(name) for name in state.message_log.topics()
        }
        return {
            "topologies": topologies,
            "topics": topics,
            "indexed_docs": state.text_index.count(),
            "embeddings": len(state.collection),
            "pending_roots": pending_roots,
            "crawl_requests": state.scheduler.status(),
        }

    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="webapp")
    return app
