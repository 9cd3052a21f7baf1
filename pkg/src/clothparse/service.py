"""REST backend for the interactive annotation tool.

A project is a plain directory of ``<id>.png`` images with optional
``<id>_mask.png`` annotations, so datasets stay inspectable with ordinary
tools. Mask writes go through a temp file and an atomic rename; readers
never observe a torn file and concurrent writers are last-write-wins.
"""

from __future__ import annotations

import os
import tempfile
import threading
from collections import defaultdict
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from PIL import Image

from .core import (FormatError, Palette, load_palette, mask_from_png_bytes,
                   mask_to_png_bytes)

_MASK_SUFFIX = "_mask"


class ProjectStore:
    """Filesystem access for one annotation project."""

    def __init__(self, root, palette: Palette, serve_empty_masks: bool = False):
        self.root = Path(root)
        if not self.root.is_dir():
            raise FileNotFoundError(f"project directory {self.root} does not exist")
        self.palette = palette
        self.serve_empty_masks = serve_empty_masks
        self._locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._locks_guard = threading.Lock()

    def _lock(self, image_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks[image_id]

    def image_path(self, image_id: str) -> Path:
        return self.root / f"{image_id}.png"

    def mask_path(self, image_id: str) -> Path:
        return self.root / f"{image_id}{_MASK_SUFFIX}.png"

    def list_images(self) -> list[dict]:
        items = []
        for p in sorted(self.root.glob("*.png")):
            if p.stem.endswith(_MASK_SUFFIX):
                continue
            with Image.open(p) as img:
                width, height = img.size
            items.append({"id": p.stem, "width": width, "height": height,
                          "has_mask": self.mask_path(p.stem).exists()})
        return items

    def has_image(self, image_id: str) -> bool:
        return self.image_path(image_id).exists()

    def read_image(self, image_id: str) -> bytes:
        return self.image_path(image_id).read_bytes()

    def read_mask(self, image_id: str) -> bytes | None:
        """Stored mask bytes, a synthesized empty mask, or None."""
        path = self.mask_path(image_id)
        if path.exists():
            return path.read_bytes()
        if self.serve_empty_masks:
            with Image.open(self.image_path(image_id)) as img:
                width, height = img.size
            return mask_to_png_bytes(np.zeros((height, width), dtype=np.uint8))
        return None

    def write_mask(self, image_id: str, png_bytes: bytes) -> None:
        """Validate against the image and palette, then atomically replace."""
        mask = mask_from_png_bytes(png_bytes, self.palette.num_labels)
        with Image.open(self.image_path(image_id)) as img:
            width, height = img.size
        if mask.shape != (height, width):
            raise FormatError(f"mask is {mask.shape[1]}x{mask.shape[0]}, "
                              f"image is {width}x{height}")
        target = self.mask_path(image_id)
        with self._lock(image_id):
            fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
            try:
                with os.fdopen(fd, "wb") as fh:
                    fh.write(png_bytes)
                    fh.flush()
                    os.fsync(fh.fileno())
                os.replace(tmp, target)
            except BaseException:
                if os.path.exists(tmp):
                    os.unlink(tmp)
                raise


def create_app(project_dir, palette_path_or_palette, serve_empty_masks: bool = False,
               ui_dir=None) -> FastAPI:
    """Build the FastAPI app. Raises immediately on a malformed palette."""
    palette = (palette_path_or_palette
               if isinstance(palette_path_or_palette, Palette)
               else load_palette(palette_path_or_palette))
    store = ProjectStore(project_dir, palette, serve_empty_masks)

    app = FastAPI(title="clothparse annotation service")
    app.state.store = store

    @app.get("/api/palette")
    def get_palette():
        return palette.to_dict()

    @app.get("/api/images")
    def list_images():
        return store.list_images()

    @app.get("/api/images/{image_id}")
    def get_image(image_id: str):
        if not store.has_image(image_id):
            raise HTTPException(404, f"unknown image {image_id!r}")
        return Response(store.read_image(image_id), media_type="image/png")

    @app.get("/api/masks/{image_id}")
    def get_mask(image_id: str):
        if not store.has_image(image_id):
            raise HTTPException(404, f"unknown image {image_id!r}")
        data = store.read_mask(image_id)
        if data is None:
            raise HTTPException(404, f"no mask for {image_id!r}")
        try:
            # served masks must satisfy the palette's invariants even when
            # the file predates this service
            mask_from_png_bytes(data, palette.num_labels)
        except FormatError as exc:
            raise HTTPException(500, f"stored mask for {image_id!r} is "
                                     f"invalid: {exc}") from exc
        return Response(data, media_type="image/png")

    @app.put("/api/masks/{image_id}")
    async def put_mask(image_id: str, request: Request):
        if not store.has_image(image_id):
            raise HTTPException(404, f"unknown image {image_id!r}")
        body = await request.body()
        try:
            store.write_mask(image_id, body)
        except FormatError as exc:
            raise HTTPException(422, str(exc)) from exc
        except Exception as exc:  # undecodable payload
            raise HTTPException(422, f"invalid mask PNG: {exc}") from exc
        return {"ok": True, "id": image_id}

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    else:
        @app.get("/")
        def index():
            return Response(
                "<html><body><h1>clothparse annotation service</h1>"
                "<p>No UI bundle configured. API lives under /api/.</p>"
                "</body></html>", media_type="text/html")

    return app


def run_server(project_dir, palette_path, port: int = 8000, host: str = "127.0.0.1",
               serve_empty_masks: bool = False, ui_dir=None) -> None:
    import uvicorn

    app = create_app(project_dir, palette_path, serve_empty_masks, ui_dir)
    uvicorn.run(app, host=host, port=port)
