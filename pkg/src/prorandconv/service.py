"""HTTP augmentation service wrapping the core package.

Array-in/array-out endpoints for external training pipelines: tensors travel
as base64-encoded little-endian float32 (row-major), so a round trip is
bit-exact. POST /augment under a given (config, seed) produces exactly the
bytes the CLI writes for its first input file's first variant, which is the
parity contract external bindings test against.
"""

from __future__ import annotations

import base64
import binascii

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .augment import progressive_augment
from .config import ConfigError, resolve_augment_section
from .core import Batch, RngStream
from .sampler import sample_grf

app = FastAPI(title="prorandconv", version=__version__)


class AugmentRequest(BaseModel):
    shape: list[int] = Field(description="batch shape [N, C, H, W]")
    data_b64: str = Field(description="base64 of little-endian float32, row-major")
    config: dict = Field(default_factory=dict, description="augment config section")
    seed: int = 0
    reps: int | None = Field(default=None, description="pin the repetition count")


class AugmentResponse(BaseModel):
    shape: list[int]
    data_b64: str
    l_used: int


class GrfRequest(BaseModel):
    height: int
    width: int
    alpha: float = 10.0
    seed: int = 0


class GrfResponse(BaseModel):
    shape: list[int]
    data_b64: str


def _decode_batch(req: AugmentRequest) -> np.ndarray:
    if len(req.shape) != 4:
        raise HTTPException(400, detail=f"shape must be [N, C, H, W], got {req.shape}")
    if any(d < 1 for d in req.shape):
        raise HTTPException(400, detail=f"batch must be nonempty with positive dims, got {req.shape}")
    try:
        raw = base64.b64decode(req.data_b64, validate=True)
    except (binascii.Error, ValueError) as e:
        raise HTTPException(400, detail=f"data_b64 is not valid base64: {e}") from e
    count = int(np.prod(req.shape))
    if len(raw) != count * 4:
        raise HTTPException(
            400, detail=f"payload is {len(raw)} bytes, shape {req.shape} requires {count * 4}"
        )
    x = np.frombuffer(raw, dtype="<f4").reshape(req.shape)
    if not np.isfinite(x).all():
        raise HTTPException(400, detail="batch contains non-finite values")
    return x


def _encode(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f4").tobytes()).decode("ascii")


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}


@app.get("/version")
def version() -> dict:
    return {"name": "prorandconv", "version": __version__}


@app.post("/augment", response_model=AugmentResponse)
def augment(req: AugmentRequest) -> AugmentResponse:
    x = _decode_batch(req)
    try:
        cfg = resolve_augment_section(req.config)
    except ConfigError as e:
        raise HTTPException(400, detail=str(e)) from e
    # Same stream discipline as the CLI's first file, first variant.
    rng = RngStream(req.seed).split(0).split(0)
    try:
        out, l_used = progressive_augment(Batch(x.copy()), cfg, rng, reps=req.reps)
    except ValueError as e:
        raise HTTPException(400, detail=str(e)) from e
    return AugmentResponse(shape=list(out.stack().shape), data_b64=_encode(out.stack()),
                           l_used=l_used)


@app.post("/grf", response_model=GrfResponse)
def grf(req: GrfRequest) -> GrfResponse:
    try:
        field = sample_grf(req.height, req.width, req.alpha, RngStream(req.seed))
    except ValueError as e:
        raise HTTPException(400, detail=str(e)) from e
    return GrfResponse(shape=list(field.shape), data_b64=_encode(field))
