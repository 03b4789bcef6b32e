"""FastAPI service exposing the reconstruction library.

Endpoints mirror the CLI verbs: synthesize, reconstruct, denoise,
register, bench.  All computation is synchronous and deterministic in the
request's seeds; the service holds no state between requests.
"""

from __future__ import annotations

import base64
import binascii
import dataclasses

from fastapi import FastAPI, HTTPException

from .. import __version__
from ..bench import parse_config, run_bench
from ..denoisers import Denoiser, decode_weights, from_spec
from ..images import PgmError, decode_pgm, encode_pgm, psnr, register
from ..operators import decode_measurements, encode_measurements, synthesize
from ..rng import RngStream
from ..solvers import AplsConfig, HioConfig, LangevinConfig, reconstruct
from . import schemas

app = FastAPI(title="phaseforge", version=__version__,
              description="Phase retrieval from noisy Fourier magnitudes.")


def _b64decode(payload: str, what: str) -> bytes:
    try:
        return base64.b64decode(payload, validate=True)
    except (binascii.Error, ValueError):
        raise HTTPException(status_code=400, detail=f"{what}: invalid base64") from None


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _decode_image(payload: str, what: str):
    try:
        return decode_pgm(_b64decode(payload, what))
    except PgmError as exc:
        raise HTTPException(status_code=400, detail=f"{what}: {exc}") from None


def _resolve_denoiser(spec: str, cnn_weights: str | None) -> Denoiser:
    if spec.strip().lower() == "cnn:uploaded":
        if cnn_weights is None:
            raise HTTPException(status_code=400,
                                detail="denoiser 'cnn:uploaded' needs the cnn_weights payload")
        return decode_weights(_b64decode(cnn_weights, "cnn_weights"))
    return from_spec(spec)


@app.get("/health", response_model=schemas.HealthResponse)
def health() -> schemas.HealthResponse:
    return schemas.HealthResponse(status="ok", version=__version__)


@app.post("/synthesize", response_model=schemas.SynthesizeResponse)
def synthesize_endpoint(req: schemas.SynthesizeRequest) -> schemas.SynthesizeResponse:
    image = _decode_image(req.image_pgm, "image_pgm")
    try:
        problem = synthesize(image, alpha=req.alpha, rng=RngStream(req.seed, stream=1),
                             oversample=req.oversample, noise_mode=req.noise_mode)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None
    op = problem.operator
    return schemas.SynthesizeResponse(
        measurements_prm=_b64(encode_measurements(problem)),
        support_height=op.in_shape[0], support_width=op.in_shape[1],
        frame_height=op.frame_shape[0], frame_width=op.frame_shape[1],
        amplitude_count=problem.b.size)


@app.post("/reconstruct", response_model=schemas.ReconstructResponse)
def reconstruct_endpoint(req: schemas.ReconstructRequest) -> schemas.ReconstructResponse:
    try:
        problem = decode_measurements(_b64decode(req.measurements_prm, "measurements_prm"))
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=f"measurements_prm: {exc}") from None
    reference = _decode_image(req.reference_pgm, "reference_pgm") if req.reference_pgm else None
    try:
        denoiser = _resolve_denoiser(req.denoiser, req.cnn_weights) if req.method == "apls" else None
        report = reconstruct(
            problem, req.method, RngStream(req.seed, stream=2),
            denoiser=denoiser,
            hio_config=HioConfig(**req.hio.model_dump()),
            apls_config=AplsConfig(langevin=LangevinConfig(**req.langevin.model_dump()), t2=req.t2),
            altmin_iterations=req.altmin_iterations,
            reference=reference)
    except HTTPException:
        raise
    except (ValueError, RuntimeError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None
    raw_db = reg_db = None
    if reference is not None:
        import numpy as np

        clamped = np.clip(report.final_image, 0.0, 255.0)
        raw_db = psnr(clamped, reference)
        reg_db = register(clamped, reference)[1]
    return schemas.ReconstructResponse(
        image_pgm=_b64(encode_pgm(report.final_image)),
        method=report.method, seed=report.seed, iterations=len(report.residuals),
        final_residual=report.final_residual, wall_seconds=report.wall_seconds,
        raw_psnr=raw_db, registered_psnr=reg_db, report_csv=report.to_csv())


@app.post("/denoise", response_model=schemas.DenoiseResponse)
def denoise_endpoint(req: schemas.DenoiseRequest) -> schemas.DenoiseResponse:
    import numpy as np

    image = _decode_image(req.image_pgm, "image_pgm")
    try:
        denoiser = _resolve_denoiser(req.denoiser, req.cnn_weights)
        residual = denoiser.residual(image)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None
    return schemas.DenoiseResponse(image_pgm=_b64(encode_pgm(image + residual)),
                                   residual_norm=float(np.linalg.norm(residual)))


@app.post("/register", response_model=schemas.RegisterResponse)
def register_endpoint(req: schemas.RegisterRequest) -> schemas.RegisterResponse:
    image = _decode_image(req.image_pgm, "image_pgm")
    reference = _decode_image(req.reference_pgm, "reference_pgm")
    try:
        registered, reg_db = register(image, reference)
        raw_db = psnr(image, reference)
    except ValueError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None
    return schemas.RegisterResponse(registered_pgm=_b64(encode_pgm(registered)),
                                    raw_psnr=raw_db, registered_psnr=reg_db)


@app.post("/bench", response_model=schemas.BenchResponse)
def bench_endpoint(req: schemas.BenchRequest) -> schemas.BenchResponse:
    try:
        config = parse_config(req.config_ini)
    except Exception as exc:  # configparser raises a small zoo of error types
        raise HTTPException(status_code=400, detail=f"config_ini: {exc}") from None
    images = None
    if req.images:
        images = {entry.image_id: (_decode_image(entry.pgm, f"images[{entry.image_id}]"), entry.group)
                  for entry in req.images}
    elif not config.images:
        raise HTTPException(status_code=400, detail="no images: supply inline images or config [images] paths")
    try:
        result = run_bench(config, images=images, threads=req.threads)
    except (ValueError, FileNotFoundError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None
    return schemas.BenchResponse(
        rows=[schemas.ResultRowModel(**dataclasses.asdict(row)) for row in result.rows],
        results_csv=result.results_csv, summary=result.summary, timings_csv=result.timings_csv,
        reconstructions=[schemas.BenchReconstruction(name=name, pgm=_b64(encode_pgm(img)))
                         for name, img in sorted(result.reconstructions.items())])
