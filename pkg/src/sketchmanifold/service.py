"""Interactive sketching service: sessions with a mutable canvas, blend
sliders, live shadow and synthesis over HTTP plus a WebSocket push feed.

One asyncio lock per session serializes mutations, so every response is a
consistent (canvas, weights, revision) snapshot and the revision counter
increases by exactly 1 per accepted mutation.  The manifold store is
shared read-only across sessions.

Rasters travel as base64-encoded binary P5; synthesis can additionally
carry the raw float64 pre-clamp values for tolerance-level comparison.
"""

from __future__ import annotations

import asyncio
import base64
import secrets
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .components import ComponentKind, ComponentLayout, decompose
from .draw import draw_polyline, erase_polyline
from .errors import SketchManifoldError
from .fusion import FusedCanvas, fuse_latents, render_preview
from .manifold import ManifoldStore, blend, project
from .pca import LatentVector
from .raster import SketchRaster, pgm_bytes, quantize_ink, raw_pgm_bytes, write_pgm
from .shadow import ShadowOverlay, compute_shadow, shadow_report

PROVENANCE_STEP = 50
MAX_PUSHED_NEIGHBORS = 16


class SessionConfigBody(BaseModel):
    k: int | None = None
    tag_filter: str | None = None
    auto_update: bool = True


class StrokeBody(BaseModel):
    points: list[tuple[float, float]]
    width: float = 1.5
    erase: bool = False


class WeightsBody(BaseModel):
    weights: dict[str, float]


class ExportBody(BaseModel):
    path: str


@dataclass
class Session:
    id: str
    canvas: np.ndarray
    weights: dict[ComponentKind, float]
    k: int
    tag_filter: str | None
    auto_update: bool
    revision: int = 0
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)
    watchers: list[WebSocket] = field(default_factory=list)


def _b64(blob: bytes) -> str:
    return base64.b64encode(blob).decode("ascii")


class SketchService:
    """Store + layout shared by all sessions, plus the session table."""

    def __init__(self, store: ManifoldStore, layout: ComponentLayout, channels: int = 8):
        if store.embedder is None:
            raise SketchManifoldError("service needs a store with an attached embedder")
        if store.crop_bank is None:
            raise SketchManifoldError("service needs a store with an attached crop bank")
        self.store = store
        self.layout = layout
        self.channels = channels
        self.sessions: dict[str, Session] = {}

    def session(self, session_id: str) -> Session:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")

    def create_session(self, config: SessionConfigBody) -> Session:
        k = self.store.default_k if config.k is None else config.k
        smallest = min(fs.size for fs in self.store.feature_sets.values())
        if not (1 <= k <= smallest):
            raise HTTPException(status_code=400, detail=f"k={k} out of range [1, {smallest}]")
        if config.tag_filter is not None:
            fs = self.store.features(ComponentKind.REMAINDER)
            if fs.tags is None or config.tag_filter not in fs.tags:
                raise HTTPException(
                    status_code=400, detail=f"unknown tag {config.tag_filter!r}"
                )
        session = Session(
            id=secrets.token_hex(8),
            canvas=np.zeros((self.layout.height, self.layout.width)),
            weights={kind: 0.0 for kind in ComponentKind},
            k=k,
            tag_filter=config.tag_filter,
            auto_update=config.auto_update,
        )
        self.sessions[session.id] = session
        return session

    # -- model evaluation ---------------------------------------------------

    def compute_shadow(self, session: Session) -> ShadowOverlay:
        return compute_shadow(
            self.store,
            self.store.embedder,
            SketchRaster(session.canvas),
            self.layout,
            k=session.k,
            tag_filter=session.tag_filter,
        )

    def compute_synthesis(self, session: Session) -> FusedCanvas:
        decomp = decompose(SketchRaster(session.canvas), self.layout)
        latents: dict[ComponentKind, LatentVector] = {}
        for kind in ComponentKind:
            f_query = self.store.embedder.encode(kind, decomp.crop(kind))
            wb = session.weights[kind]
            if wb == 1.0:
                latents[kind] = f_query  # full use of the input sketch
                continue
            f_proj = project(
                self.store, kind, f_query, k=session.k, tag_filter=session.tag_filter
            )
            latents[kind] = blend(f_query, f_proj, wb)
        return fuse_latents(self.store.embedder, latents, self.layout, self.channels)

    # -- payload builders ----------------------------------------------------

    def shadow_payload(self, session: Session) -> dict:
        overlay = self.compute_shadow(session)
        components = {}
        for kind in ComponentKind:
            shadow = overlay.component(kind)
            order = np.argsort(-shadow.weights, kind="stable")[:MAX_PUSHED_NEIGHBORS]
            components[kind.slug] = {
                "pgm": _b64(pgm_bytes(shadow.raster)),
                "blank": shadow.blank,
                "entropy": shadow.entropy,
                "neighbors": [
                    {"id": shadow.neighbor_ids[i], "weight": float(shadow.weights[i])}
                    for i in order
                ],
            }
        return {
            "k": overlay.k,
            "composite_pgm": _b64(pgm_bytes(overlay.composite)),
            "components": components,
        }

    def synthesis_payload(self, session: Session, precision: str = "pgm") -> dict:
        fused = self.compute_synthesis(session)
        preview = render_preview(fused)
        payload = {
            "width": preview.width,
            "height": preview.height,
            "pgm": _b64(pgm_bytes(preview)),
            "provenance_pgm": _b64(
                raw_pgm_bytes(fused.provenance * np.uint8(PROVENANCE_STEP))
            ),
        }
        if precision == "float":
            payload["preclamp_f64"] = _b64(
                np.ascontiguousarray(fused.data[0], dtype="<f8").tobytes()
            )
        return payload

    async def push(self, session: Session) -> None:
        """Fan the current state out to this session's websockets."""
        if session.watchers:
            payload = {"revision": session.revision}
            if session.auto_update:
                payload["shadow"] = self.shadow_payload(session)
                payload["synthesis"] = self.synthesis_payload(session)
            stale = []
            for ws in session.watchers:
                try:
                    await ws.send_json(payload)
                except Exception:
                    stale.append(ws)
            for ws in stale:
                session.watchers.remove(ws)


def _session_info(session: Session, layout: ComponentLayout) -> dict:
    return {
        "session_id": session.id,
        "revision": session.revision,
        "k": session.k,
        "tag_filter": session.tag_filter,
        "auto_update": session.auto_update,
        "weights": {kind.slug: session.weights[kind] for kind in ComponentKind},
        "canvas": {"width": layout.width, "height": layout.height},
    }


def create_app(store: ManifoldStore, layout: ComponentLayout, channels: int = 8) -> FastAPI:
    service = SketchService(store, layout, channels=channels)
    app = FastAPI(title="sketchmanifold service")
    app.state.service = service
    # the browser client is served from a different origin than the API
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.post("/sessions")
    async def create_session(config: SessionConfigBody | None = None):
        session = service.create_session(config or SessionConfigBody())
        return _session_info(session, service.layout)

    @app.post("/sessions/{session_id}/strokes")
    async def apply_stroke(session_id: str, stroke: StrokeBody):
        session = service.session(session_id)
        if len(stroke.points) < 2:
            raise HTTPException(status_code=400, detail="a stroke needs >= 2 points")
        if stroke.width <= 0:
            raise HTTPException(status_code=400, detail="stroke width must be positive")
        for x, y in stroke.points:
            if not (0 <= x < service.layout.width and 0 <= y < service.layout.height):
                raise HTTPException(
                    status_code=400, detail=f"point ({x}, {y}) outside the canvas"
                )
        async with session.lock:
            if stroke.erase:
                updated = erase_polyline(session.canvas, stroke.points, stroke.width)
            else:
                updated = draw_polyline(session.canvas, stroke.points, stroke.width)
            session.canvas = quantize_ink(updated)
            session.revision += 1
            await service.push(session)
            return {"revision": session.revision, "ink_mass": float(session.canvas.sum())}

    @app.put("/sessions/{session_id}/weights")
    async def set_weights(session_id: str, body: WeightsBody):
        session = service.session(session_id)
        slugs = {kind.slug: kind for kind in ComponentKind}
        updates: dict[ComponentKind, float] = {}
        for name, value in body.weights.items():
            if name not in slugs:
                raise HTTPException(status_code=400, detail=f"unknown component {name!r}")
            if not (0.0 <= value <= 1.0):
                raise HTTPException(
                    status_code=400, detail=f"weight {value} for {name} outside [0, 1]"
                )
            updates[slugs[name]] = float(value)
        async with session.lock:
            session.weights.update(updates)
            session.revision += 1
            await service.push(session)
            return {
                "revision": session.revision,
                "weights": {kind.slug: session.weights[kind] for kind in ComponentKind},
            }

    @app.get("/sessions/{session_id}")
    async def get_session(session_id: str):
        session = service.session(session_id)
        async with session.lock:
            return _session_info(session, service.layout)

    @app.get("/sessions/{session_id}/shadow")
    async def get_shadow(session_id: str):
        session = service.session(session_id)
        async with session.lock:
            return {"revision": session.revision, **service.shadow_payload(session)}

    @app.get("/sessions/{session_id}/synthesis")
    async def get_synthesis(session_id: str, precision: str = "pgm"):
        if precision not in ("pgm", "float"):
            raise HTTPException(status_code=400, detail="precision must be pgm or float")
        session = service.session(session_id)
        async with session.lock:
            return {
                "revision": session.revision,
                **service.synthesis_payload(session, precision),
            }

    @app.get("/sessions/{session_id}/canvas")
    async def get_canvas(session_id: str):
        session = service.session(session_id)
        async with session.lock:
            return {
                "revision": session.revision,
                "pgm": _b64(pgm_bytes(SketchRaster(session.canvas))),
            }

    @app.post("/sessions/{session_id}/export")
    async def export_result(session_id: str, body: ExportBody):
        session = service.session(session_id)
        async with session.lock:
            out = Path(body.path)
            out.mkdir(parents=True, exist_ok=True)
            canvas = SketchRaster(session.canvas)
            overlay = service.compute_shadow(session)
            fused = service.compute_synthesis(session)
            files = []

            def _note(path: Path) -> None:
                files.append(str(path))

            canvas_path = out / "canvas.pgm"
            write_pgm(canvas, canvas_path)
            _note(canvas_path)
            synthesis_path = out / "synthesis.pgm"
            write_pgm(render_preview(fused), synthesis_path)
            _note(synthesis_path)
            shadow_path = out / "shadow.pgm"
            write_pgm(overlay.composite, shadow_path)
            _note(shadow_path)
            report_path = out / "session.txt"
            lines = [
                f"session={session.id}",
                f"revision={session.revision}",
                f"k={session.k}",
                f"tag_filter={session.tag_filter or ''}",
            ]
            for kind in ComponentKind:
                lines.append(f"weight.{kind.slug}={session.weights[kind]:.9g}")
            report_path.write_text(
                "\n".join(lines) + "\n" + shadow_report(overlay), encoding="utf-8"
            )
            _note(report_path)
            return {"revision": session.revision, "files": files}

    @app.websocket("/sessions/{session_id}/live")
    async def live(websocket: WebSocket, session_id: str):
        session = service.sessions.get(session_id)
        if session is None:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        async with session.lock:
            session.watchers.append(websocket)
            initial = {
                "revision": session.revision,
                "shadow": service.shadow_payload(session),
                "synthesis": service.synthesis_payload(session),
            }
        try:
            await websocket.send_json(initial)
            while True:
                # Inbound messages are ignored; the socket exists to push.
                await websocket.receive_text()
        except WebSocketDisconnect:
            pass
        finally:
            if websocket in session.watchers:
                session.watchers.remove(websocket)

    return app
