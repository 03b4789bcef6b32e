"""Request/response models for the reconstruction service.

Binary artifacts travel as base64 strings of the package's own on-disk
formats: PGM (P5) for images, PRM1 for measurements, BFC1 for denoiser
weights.  A client can therefore save any payload verbatim and reload it
with the library or the CLI.
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class SynthesizeRequest(BaseModel):
    image_pgm: str = Field(description="base64 P5 image, the ground truth")
    alpha: float = Field(default=0.0, ge=0.0, description="noise level on squared magnitudes")
    seed: int = 0
    oversample: int = Field(default=2, ge=1, description="frame size per axis, in multiples of the support")
    noise_mode: Literal["intensity", "amplitude"] = "intensity"


class SynthesizeResponse(BaseModel):
    measurements_prm: str = Field(description="base64 PRM1 payload")
    support_height: int
    support_width: int
    frame_height: int
    frame_width: int
    amplitude_count: int


class HioOptions(BaseModel):
    beta: float = 0.9
    iterations: int = 1000
    nonnegativity: bool = True
    restarts: int = 50
    restart_iterations: int = 50
    select_best: bool = True


class LangevinOptions(BaseModel):
    h0: float = 0.1
    beta: float = 0.0001
    t1: int = 1
    mode: Literal["strict", "relaxed"] = "relaxed"
    lam: float = 1.0


class ReconstructRequest(BaseModel):
    measurements_prm: str = Field(description="base64 PRM1 payload")
    method: Literal["hio", "altmin", "apls"] = "apls"
    denoiser: str = "smooth:strength=0.1"
    cnn_weights: Optional[str] = Field(
        default=None, description="base64 BFC1 payload backing the 'cnn:uploaded' denoiser spec")
    seed: int = 0
    hio: HioOptions = Field(default_factory=HioOptions)
    langevin: LangevinOptions = Field(default_factory=LangevinOptions)
    t2: int = 500
    altmin_iterations: int = 500
    reference_pgm: Optional[str] = Field(
        default=None, description="optional base64 P5 ground truth for PSNR reporting")


class ReconstructResponse(BaseModel):
    image_pgm: str
    method: str
    seed: int
    iterations: int
    final_residual: float
    wall_seconds: float
    raw_psnr: Optional[float] = None
    registered_psnr: Optional[float] = None
    report_csv: str = Field(description="per-iteration diagnostics: iter,residual,sigma,h,gamma,psnr")


class DenoiseRequest(BaseModel):
    image_pgm: str
    denoiser: str = "smooth:strength=0.1"
    cnn_weights: Optional[str] = None


class DenoiseResponse(BaseModel):
    image_pgm: str
    residual_norm: float


class RegisterRequest(BaseModel):
    image_pgm: str
    reference_pgm: str


class RegisterResponse(BaseModel):
    registered_pgm: str
    raw_psnr: float
    registered_psnr: float


class BenchImage(BaseModel):
    image_id: str
    pgm: str
    group: str = "default"


class BenchRequest(BaseModel):
    config_ini: str = Field(description="experiment config in the documented INI schema")
    images: list[BenchImage] = Field(
        default_factory=list,
        description="inline images; when given, the config's [images] paths are ignored")
    threads: Optional[int] = None


class ResultRowModel(BaseModel):
    image_id: str
    method: str
    alpha: float
    trial: int
    seed: int
    status: str
    raw_psnr: float
    registered_psnr: float
    residual: float
    group: str
    wall_seconds: float


class BenchReconstruction(BaseModel):
    name: str
    pgm: str


class BenchResponse(BaseModel):
    rows: list[ResultRowModel]
    results_csv: str
    summary: str
    timings_csv: str
    reconstructions: list[BenchReconstruction]
