"""Local HTTP service behind the correspondence-picker UI.

JSON endpoints under /api expose the pair catalog, picked points, the live
fit, and projected annotation previews; mutations carry the client's revision
and are rejected with 409 when it is stale.  Static frontend assets, when
built, are served from the same process.
"""

from __future__ import annotations

import math
import mimetypes
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .errors import StaleRevision, UnknownPair
from .geometry import Correspondence, Point2
from .workspace import PairSnapshot, Workspace


def _scrub(value):
    # NaN/Infinity in a rejected payload must not break the 422 response
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {k: _scrub(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_scrub(v) for v in value]
    if isinstance(value, (str, int, bool)) or value is None:
        return value
    return repr(value)


class PointPayload(BaseModel):
    sx: float = Field(allow_inf_nan=False)
    sy: float = Field(allow_inf_nan=False)
    tx: float = Field(allow_inf_nan=False)
    ty: float = Field(allow_inf_nan=False)
    revision: int


def _pair_summary(snap: PairSnapshot) -> dict:
    pair = snap.pair
    return {
        "pair_id": pair.pair_id,
        "source_image": pair.source_image,
        "target_image": pair.target_image,
        "target_width": pair.target_width,
        "target_height": pair.target_height,
        "point_count": len(snap.points),
        "revision": snap.revision,
        "fitted": snap.fit is not None,
    }


def _fit_fields(snap: PairSnapshot) -> dict:
    if snap.fit is None:
        return {
            "matrix": None,
            "rmse": None,
            "max_error": None,
            "per_point": None,
            "reason": snap.fit_error,
            "revision": snap.revision,
        }
    assert snap.diagnostics is not None
    return {
        "matrix": [list(row) for row in snap.fit.m],
        "rmse": snap.diagnostics.rmse,
        "max_error": snap.diagnostics.max_error,
        "per_point": list(snap.diagnostics.per_point),
        "reason": None,
        "revision": snap.revision,
    }


def _points_fields(snap: PairSnapshot) -> dict:
    return {
        "pair_id": snap.pair.pair_id,
        "points": [
            {"sx": c.source.x, "sy": c.source.y, "tx": c.target.x, "ty": c.target.y}
            for c in snap.points
        ],
        "revision": snap.revision,
    }


def create_app(workspace_dir: Path | str, frontend_dir: Path | str | None = None) -> FastAPI:
    ws = Workspace(workspace_dir)
    app = FastAPI(title="xspec correspondence service")
    app.state.workspace = ws

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request, exc):
        return JSONResponse(status_code=422, content={"detail": _scrub(exc.errors())})

    def snapshot_or_404(pair_id: str) -> PairSnapshot:
        try:
            return ws.snapshot(pair_id)
        except UnknownPair as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.get("/api/pairs")
    def list_pairs():
        return [_pair_summary(ws.snapshot(pid)) for pid in ws.pair_ids()]

    @app.get("/api/pairs/{pair_id}")
    def pair_detail(pair_id: str):
        return _pair_summary(snapshot_or_404(pair_id))

    @app.get("/api/pairs/{pair_id}/image/{which}")
    def pair_image(pair_id: str, which: str):
        if which not in ("source", "target"):
            raise HTTPException(status_code=404, detail="image must be 'source' or 'target'")
        snapshot_or_404(pair_id)
        path = ws.image_path(pair_id, which)
        if not path.is_file():
            raise HTTPException(status_code=404, detail=f"image file not found: {path.name}")
        media_type = mimetypes.guess_type(path.name)[0] or "application/octet-stream"
        return FileResponse(path, media_type=media_type)

    @app.get("/api/pairs/{pair_id}/correspondences")
    def get_points(pair_id: str):
        return _points_fields(snapshot_or_404(pair_id))

    @app.post("/api/pairs/{pair_id}/correspondences")
    def add_point(pair_id: str, payload: PointPayload):
        snapshot_or_404(pair_id)
        point = Correspondence(
            Point2(payload.sx, payload.sy), Point2(payload.tx, payload.ty)
        )
        try:
            snap = ws.add_point(pair_id, point, payload.revision)
        except StaleRevision as exc:
            raise HTTPException(
                status_code=409,
                detail={"error": "stale_revision", "revision": exc.expected},
            ) from exc
        return {**_points_fields(snap), **_fit_fields(snap)}

    @app.delete("/api/pairs/{pair_id}/correspondences/{index}")
    def delete_point(pair_id: str, index: int, revision: int):
        snapshot_or_404(pair_id)
        try:
            snap = ws.delete_point(pair_id, index, revision)
        except StaleRevision as exc:
            raise HTTPException(
                status_code=409,
                detail={"error": "stale_revision", "revision": exc.expected},
            ) from exc
        except IndexError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {**_points_fields(snap), **_fit_fields(snap)}

    @app.get("/api/pairs/{pair_id}/homography")
    def get_homography(pair_id: str):
        snap = snapshot_or_404(pair_id)
        return {"pair_id": pair_id, **_fit_fields(snap)}

    @app.get("/api/pairs/{pair_id}/preview")
    def get_preview(pair_id: str):
        snap = snapshot_or_404(pair_id)
        boxes = ws.preview_boxes(pair_id)
        return {
            "pair_id": pair_id,
            "revision": snap.revision,
            "boxes": boxes,
            "reason": snap.fit_error if boxes is None else None,
        }

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="frontend")
    else:

        @app.get("/")
        def index():
            return {"service": "xspec correspondence service", "pairs": len(ws.pairs)}

    return app


def default_frontend_dir() -> Path | None:
    """dist/ of the bundled frontend when running from a source checkout."""
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return candidate if candidate.is_dir() else None
