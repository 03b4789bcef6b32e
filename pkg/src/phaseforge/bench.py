"""Seeded benchmark matrices over images, noise levels, and methods.

A benchmark enumerates (image, alpha, method, trial) cells.  Every cell
derives its own seed from the base seed and a stable hash of the cell key,
so any single cell can be reproduced in isolation and the whole matrix is
byte-reproducible regardless of execution order or thread count.  Cells
run the measurement synthesis, the HIO initialization protocol, and the
requested method, then register the reconstruction against the ground
truth.

Outputs: ``results.csv`` (deterministic), ``summary.txt`` (deterministic
mean registered PSNR per group/method/alpha), ``timings.csv`` (wall-clock,
inherently run-dependent), and one PGM reconstruction per cell.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .denoisers import from_spec
from .images import as_image, load_pgm, psnr, register, save_pgm
from .operators import residual_norm, synthesize
from .rng import RngStream
from .solvers import AplsConfig, HioConfig, LangevinConfig, reconstruct

METHODS = ("hio", "altmin", "apls")

RESULTS_HEADER = "image,method,alpha,trial,seed,status,raw_psnr,registered_psnr,residual"
TIMINGS_HEADER = "image,method,alpha,trial,wall_seconds"


@dataclass
class ImageEntry:
    image_id: str
    path: str
    group: str = "default"


@dataclass
class ExperimentConfig:
    images: list[ImageEntry] = field(default_factory=list)
    oversample: int = 2
    alphas: list[float] = field(default_factory=lambda: [2.0, 3.0, 4.0])
    methods: list[str] = field(default_factory=lambda: ["hio", "altmin", "apls"])
    denoiser: str = "smooth:strength=0.1"
    trials: int = 1
    base_seed: int = 0
    noise_mode: str = "intensity"
    outdir: str = "bench_out"
    hio: HioConfig = field(default_factory=HioConfig)
    langevin: LangevinConfig = field(default_factory=LangevinConfig)
    t2: int = 500
    altmin_iterations: int = 500

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if any(a < 0 for a in self.alphas):
            raise ValueError("alphas must be nonnegative")
        for m in self.methods:
            if m not in METHODS:
                raise ValueError(f"unknown method {m!r}; choose from {METHODS}")


@dataclass
class ResultRow:
    image_id: str
    method: str
    alpha: float
    trial: int
    seed: int
    status: str
    raw_psnr: float
    registered_psnr: float
    residual: float
    group: str = "default"
    wall_seconds: float = 0.0


def cell_seed(base_seed: int, image_id: str, method: str, alpha: float, trial: int) -> int:
    """Stable per-cell seed: base XOR blake2b of the cell key."""
    key = f"{image_id}|{method}|{alpha:g}|{trial}".encode("utf-8")
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return (base_seed ^ int.from_bytes(digest, "little")) & 0xFFFFFFFFFFFFFFFF


# ---------------------------------------------------------------------------
# Config file round trip (flat key-value text with sections)
# ---------------------------------------------------------------------------

def dump_config(config: ExperimentConfig) -> str:
    cp = configparser.ConfigParser()
    cp["experiment"] = {
        "oversample": str(config.oversample),
        "alphas": ", ".join(f"{a:g}" for a in config.alphas),
        "methods": ", ".join(config.methods),
        "denoiser": config.denoiser,
        "trials": str(config.trials),
        "base_seed": str(config.base_seed),
        "noise_mode": config.noise_mode,
        "outdir": config.outdir,
    }
    cp["hio"] = {k: str(v).lower() if isinstance(v, bool) else str(v)
                 for k, v in asdict(config.hio).items()}
    cp["langevin"] = {k: str(v) for k, v in asdict(config.langevin).items()}
    cp["apls"] = {"t2": str(config.t2)}
    cp["altmin"] = {"iterations": str(config.altmin_iterations)}
    cp["images"] = {e.image_id: (f"{e.path}, {e.group}" if e.group != "default" else e.path)
                    for e in config.images}
    out = io.StringIO()
    cp.write(out)
    return out.getvalue()


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    exp = cp["experiment"]
    images = []
    if cp.has_section("images"):
        for image_id, value in cp["images"].items():
            parts = [p.strip() for p in value.split(",")]
            path = parts[0]
            group = parts[1] if len(parts) > 1 else "default"
            images.append(ImageEntry(image_id=image_id, path=path, group=group))
    hio_kwargs = {}
    if cp.has_section("hio"):
        sec = cp["hio"]
        hio_kwargs = dict(
            beta=sec.getfloat("beta", 0.9),
            iterations=sec.getint("iterations", 1000),
            nonnegativity=sec.getboolean("nonnegativity", True),
            restarts=sec.getint("restarts", 50),
            restart_iterations=sec.getint("restart_iterations", 50),
            select_best=sec.getboolean("select_best", True),
        )
    lang_kwargs = {}
    if cp.has_section("langevin"):
        sec = cp["langevin"]
        lang_kwargs = dict(
            h0=sec.getfloat("h0", 0.1),
            beta=sec.getfloat("beta", 0.0001),
            t1=sec.getint("t1", 1),
            mode=sec.get("mode", "relaxed"),
            lam=sec.getfloat("lam", 1.0),
        )
    return ExperimentConfig(
        images=images,
        oversample=exp.getint("oversample", 2),
        alphas=[float(a) for a in exp.get("alphas", "2, 3, 4").split(",")],
        methods=[m.strip() for m in exp.get("methods", "hio, altmin, apls").split(",")],
        denoiser=exp.get("denoiser", "smooth:strength=0.1"),
        trials=exp.getint("trials", 1),
        base_seed=exp.getint("base_seed", 0),
        noise_mode=exp.get("noise_mode", "intensity"),
        outdir=exp.get("outdir", "bench_out"),
        hio=HioConfig(**hio_kwargs),
        langevin=LangevinConfig(**lang_kwargs),
        t2=cp.getint("apls", "t2", fallback=500),
        altmin_iterations=cp.getint("altmin", "iterations", fallback=500),
    )


def load_config(path) -> ExperimentConfig:
    config = parse_config(Path(path).read_text())
    missing = [e.path for e in config.images if not Path(e.path).exists()]
    if missing:
        raise FileNotFoundError(f"missing image files: {missing}")
    return config


def resolve_images(config: ExperimentConfig) -> dict[str, tuple[np.ndarray, str]]:
    """Load every referenced image; returns id -> (pixels, group)."""
    return {e.image_id: (load_pgm(e.path), e.group) for e in config.images}


# ---------------------------------------------------------------------------
# Matrix execution
# ---------------------------------------------------------------------------

def _worker_count(requested: int | None) -> int:
    count = requested if requested is not None else min(4, os.cpu_count() or 1)
    cap = os.environ.get("PHASEFORGE_THREADS")
    if cap is not None:
        count = min(count, max(1, int(cap)))
    return max(1, count)


def run_cell(config: ExperimentConfig, image_id: str, image: np.ndarray, group: str,
             method: str, alpha: float, trial: int) -> tuple[ResultRow, np.ndarray | None]:
    """One benchmark cell; failures are captured in the row, never raised."""
    seed = cell_seed(config.base_seed, image_id, method, alpha, trial)
    start = time.perf_counter()
    try:
        rng = RngStream(seed)
        problem = synthesize(image, alpha=alpha, rng=rng.child(1),
                             oversample=config.oversample, noise_mode=config.noise_mode)
        report = reconstruct(
            problem, method, rng.child(2),
            denoiser=from_spec(config.denoiser) if method == "apls" else None,
            hio_config=config.hio,
            apls_config=AplsConfig(langevin=config.langevin, t2=config.t2),
            altmin_iterations=config.altmin_iterations)
        final = np.clip(report.final_image, 0.0, 255.0)
        raw_db = psnr(final, image)
        _, reg_db = register(final, image)
        row = ResultRow(image_id=image_id, method=method, alpha=alpha, trial=trial,
                        seed=seed, status="ok", raw_psnr=raw_db, registered_psnr=reg_db,
                        residual=residual_norm(problem, report.final_image), group=group,
                        wall_seconds=time.perf_counter() - start)
        return row, final
    except Exception as exc:  # noqa: BLE001 - cell failures must not abort the matrix
        row = ResultRow(image_id=image_id, method=method, alpha=alpha, trial=trial,
                        seed=seed, status=f"error: {exc}", raw_psnr=0.0,
                        registered_psnr=0.0, residual=0.0, group=group,
                        wall_seconds=time.perf_counter() - start)
        return row, None


@dataclass
class BenchResult:
    rows: list[ResultRow]
    results_csv: str
    summary: str
    timings_csv: str
    reconstructions: dict[str, np.ndarray]


def cell_output_name(image_id: str, method: str, alpha: float, seed: int) -> str:
    return f"{image_id}_{method}_a{alpha:g}_s{seed}.pgm"


def format_results_csv(rows: list[ResultRow]) -> str:
    lines = [RESULTS_HEADER]
    for r in rows:
        lines.append(f"{r.image_id},{r.method},{r.alpha:g},{r.trial},{r.seed},"
                     f"{r.status},{r.raw_psnr:.4f},{r.registered_psnr:.4f},{r.residual:.8g}")
    return "\n".join(lines) + "\n"


def format_summary(rows: list[ResultRow]) -> str:
    """Mean registered PSNR per (group, method) across noise levels, as a grid."""
    alphas = sorted({r.alpha for r in rows})
    keys = sorted({(r.group, r.method) for r in rows})
    lines = ["Mean registered PSNR (dB) over ok cells", ""]
    header = f"{'group':<12}{'method':<10}" + "".join(f"{'alpha=' + format(a, 'g'):>12}" for a in alphas)
    lines.append(header)
    for group, method in keys:
        cells = []
        for a in alphas:
            vals = [r.registered_psnr for r in rows
                    if r.group == group and r.method == method and r.alpha == a and r.status == "ok"]
            cells.append(f"{np.mean(vals):>12.2f}" if vals else f"{'-':>12}")
        lines.append(f"{group:<12}{method:<10}" + "".join(cells))
    return "\n".join(lines) + "\n"


def run_bench(config: ExperimentConfig, images: dict[str, tuple[np.ndarray, str]] | None = None,
              threads: int | None = None) -> BenchResult:
    """Run the full matrix; deterministic given the config and base seed.

    ``images`` maps id -> (pixels, group); when omitted the config's image
    paths are loaded from disk.  Rows come back in canonical order (image,
    method, alpha, trial) no matter how cells were scheduled.
    """
    if images is None:
        images = resolve_images(config)
    cells = [(image_id, as_image(pixels), group, method, alpha, trial)
             for image_id, (pixels, group) in sorted(images.items())
             for method in config.methods
             for alpha in config.alphas
             for trial in range(config.trials)]
    workers = _worker_count(threads)
    if workers == 1:
        outcomes = [run_cell(config, *cell) for cell in cells]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(lambda c: run_cell(config, *c), cells))
    rows = [row for row, _ in outcomes]
    recon = {cell_output_name(r.image_id, r.method, r.alpha, r.seed): img
             for r, img in outcomes if img is not None}
    rows.sort(key=lambda r: (r.image_id, r.method, r.alpha, r.trial))
    timing_lines = [TIMINGS_HEADER] + [
        f"{r.image_id},{r.method},{r.alpha:g},{r.trial},{r.wall_seconds:.3f}" for r in rows]
    return BenchResult(rows=rows, results_csv=format_results_csv(rows),
                       summary=format_summary(rows),
                       timings_csv="\n".join(timing_lines) + "\n",
                       reconstructions=recon)


def write_outputs(result: BenchResult, outdir) -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "results.csv").write_text(result.results_csv)
    (out / "summary.txt").write_text(result.summary)
    (out / "timings.csv").write_text(result.timings_csv)
    for name, image in result.reconstructions.items():
        save_pgm(out / name, image)
