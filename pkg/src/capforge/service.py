"""HTTP service.  The catalogue is shared read-only; sessions are in-memory,
locked per id and evicted after ``session_ttl`` seconds of inactivity."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Any

from fastapi import Body, FastAPI, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse

from . import payloads
from .catalogue import Catalogue
from .errors import CapforgeError, MissingPrerequisite, UnknownNsf, UnknownSession
from .fixtures import data_path, default_catalogue
from .landscape import Hlp, Landscape, load_hlps, load_landscape
from .recipes import Recipe, load_recipe_book
from .refine import STRATEGIES, RefinementMapping, RefinementResult, load_mapping, refine


@dataclass
class SessionState:
    hlps: list[Hlp] | None = None
    landscape: Landscape | None = None
    result: RefinementResult | None = None
    touched: float = field(default_factory=time.monotonic)
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionStore:
    def __init__(self, ttl: float) -> None:
        self.ttl = ttl
        self._sessions: dict[str, SessionState] = {}
        self._lock = threading.Lock()

    def _evict(self, now: float) -> None:
        for sid in [s for s, st in self._sessions.items() if now - st.touched > self.ttl]:
            del self._sessions[sid]

    def get(self, sid: str, create: bool = False) -> SessionState:
        now = time.monotonic()
        with self._lock:
            self._evict(now)
            state = self._sessions.get(sid)
            if state is None:
                if not create:
                    raise UnknownSession(f"unknown session {sid!r}", session=sid)
                state = self._sessions[sid] = SessionState()
            state.touched = now
            return state


def _strategy(raw: str) -> str:
    strategy = raw.replace("-", "_")
    if strategy == "interactive":
        raise CapforgeError("interactive refinement is available on the command line only", strategy=raw)
    if strategy not in STRATEGIES:
        raise CapforgeError(f"unknown strategy {raw!r}", strategy=raw)
    return strategy


def create_app(
    catalogue: Catalogue | None = None,
    recipe_book: list[Recipe] | None = None,
    mapping: RefinementMapping | None = None,
    landscape: Landscape | None = None,
    session_ttl: float = 3600.0,
) -> FastAPI:
    catalogue = catalogue or default_catalogue()
    book = recipe_book if recipe_book is not None else load_recipe_book(data_path("recipes.json"))
    mapping = mapping or load_mapping(data_path("mapping.json"))
    remediation_landscape = landscape or load_landscape(data_path("landscape_remediation.json"), catalogue)
    sessions = SessionStore(session_ttl)
    app = FastAPI(title="capforge")

    @app.exception_handler(CapforgeError)
    async def _domain_error(request: Request, exc: CapforgeError) -> JSONResponse:
        return JSONResponse(exc.as_payload(), status_code=payloads.http_status(exc))

    @app.exception_handler(RequestValidationError)
    async def _malformed(request: Request, exc: RequestValidationError) -> JSONResponse:
        errors = [{"loc": [str(x) for x in e.get("loc", ())], "msg": e.get("msg", "")} for e in exc.errors()]
        body = {"code": "malformed-request", "message": "request could not be parsed", "detail": {"errors": errors}}
        return JSONResponse(body, status_code=400)

    @app.get("/nsfs")
    def nsfs() -> dict:
        return payloads.nsfs_payload(catalogue)

    @app.get("/compare")
    def compare(a: str = Query(...), b: str = Query(...)) -> dict:
        return payloads.compare_payload(catalogue, a, b)

    @app.get("/substitute")
    def substitute(nsf: str = Query(...)) -> dict:
        return payloads.substitute_payload(catalogue, nsf)

    @app.get("/search")
    def search(caps: list[str] = Query(...)) -> dict:
        return payloads.search_payload(catalogue, caps)

    @app.post("/enforcers")
    def enforcers(mlp: dict[str, Any] = Body(...)) -> dict:
        return payloads.enforcers_payload(catalogue, mlp)

    @app.post("/translate", response_class=PlainTextResponse)
    def translate(
        nsf: str = Query(...),
        mlp: dict[str, Any] = Body(...),
        attr: list[str] = Query(default=[]),
        auto_satisfy: bool = Query(default=False, alias="autoSatisfy"),
    ) -> PlainTextResponse:
        attributes = {}
        for pair in attr:
            key, sep, value = pair.partition("=")
            if not sep:
                raise CapforgeError(f"attr expects k=v, got {pair!r}")
            attributes[key] = value
        return PlainTextResponse(payloads.translate_text(catalogue, nsf, mlp, attributes, auto_satisfy))

    @app.post("/sessions/{sid}/hlp")
    def upload_hlp(sid: str, document: Any = Body(...)) -> dict:
        hlps = load_hlps(document)
        state = sessions.get(sid, create=True)
        with state.lock:
            state.hlps = hlps
            state.result = None
        return {"session": sid, "hlps": len(hlps)}

    @app.post("/sessions/{sid}/landscape")
    def upload_landscape(sid: str, document: dict[str, Any] = Body(...)) -> dict:
        land = load_landscape(document, catalogue)
        state = sessions.get(sid, create=True)
        with state.lock:
            state.landscape = land
            state.result = None
        return {"session": sid, "nodes": len(land.nodes)}

    @app.post("/sessions/{sid}/refine")
    def run_refine(sid: str, strategy: str = Query(default="min_controls")) -> dict:
        chosen = _strategy(strategy)
        state = sessions.get(sid)
        with state.lock:
            if state.hlps is None or state.landscape is None:
                missing = [n for n, v in (("hlp", state.hlps), ("landscape", state.landscape)) if v is None]
                raise MissingPrerequisite(f"upload {' and '.join(missing)} before refining", missing=missing)
            state.result = refine(state.hlps, state.landscape, catalogue, mapping, chosen)
            return payloads.refine_payload(state.result, catalogue)

    @app.get("/sessions/{sid}/mlp")
    def download_mlp(sid: str, nsf: str | None = Query(default=None)) -> dict:
        state = sessions.get(sid)
        with state.lock:
            if state.result is None:
                raise MissingPrerequisite("refine the session before downloading MLPs", missing=["refine"])
            mlps = state.result.mlps
            keys = sorted(k for k in mlps if nsf is None or k == nsf or mlps[k].nsf_name == nsf)
            if nsf is not None and not keys:
                raise UnknownNsf(f"no MLP for {nsf!r} in this session", nsf=nsf)
            return {"mlps": {k: mlps[k].to_doc() for k in keys}}

    @app.post("/remediate")
    def remediate(
        report: dict[str, Any] = Body(...),
        recipe: str | None = Query(default=None),
        strategy: str = Query(default="min_controls"),
    ) -> dict:
        return payloads.remediate_payload(report, book, remediation_landscape, catalogue, mapping, recipe, _strategy(strategy))

    return app
