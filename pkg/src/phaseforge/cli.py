"""Command-line front end.

Each verb is a thin client of the HTTP service: flags are validated
locally, files are read and written locally, and the work itself runs
through the service API -- against an in-process application instance by
default, or against a remote server when ``--server`` is given.  Runtime
failures print a machine-readable JSON error on stderr and exit 1; usage
errors exit 2.
"""

from __future__ import annotations

import base64
import json
import sys
import warnings
from pathlib import Path

import click

from .phantoms import KINDS, phantom


def _b64_file(path) -> str:
    return base64.b64encode(Path(path).read_bytes()).decode("ascii")


def _write_b64(path, payload: str) -> None:
    Path(path).write_bytes(base64.b64decode(payload))


class ServiceClient:
    """POSTs to a remote server or to the in-process application."""

    def __init__(self, server: str | None):
        if server:
            import httpx

            self._client = httpx.Client(base_url=server, timeout=None)
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .service import app

            self._client = TestClient(app)

    def post(self, path: str, payload: dict) -> dict:
        response = self._client.post(path, json=payload)
        if response.status_code != 200:
            try:
                detail = response.json().get("detail", response.text)
            except ValueError:
                detail = response.text
            raise RuntimeError(f"{path}: {detail}")
        return response.json()


def _fail(exc: BaseException) -> None:
    print(json.dumps({"error": str(exc)}), file=sys.stderr)
    sys.exit(1)


def _denoiser_payload(spec: str) -> dict:
    """Client-side handling of cnn weight files: upload them with the request."""
    name, _, argstr = spec.partition(":")
    if name.strip().lower() != "cnn":
        return {"denoiser": spec}
    for part in argstr.split(","):
        key, _, val = part.partition("=")
        if key.strip() == "weights":
            return {"denoiser": "cnn:uploaded", "cnn_weights": _b64_file(val.strip())}
    raise click.UsageError("cnn denoiser needs weights=<path>")


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Base URL of a running service; defaults to an in-process instance.")
@click.pass_context
def main(ctx, server):
    """Phase retrieval from noisy Fourier magnitudes."""
    ctx.obj = server


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--alpha", type=float, default=0.0, show_default=True, help="Noise level.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--oversample", type=int, default=2, show_default=True,
              help="Frame size per axis in multiples of the support.")
@click.option("--noise-mode", type=click.Choice(["intensity", "amplitude"]), default="intensity",
              show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_obj
def synthesize(server, image_path, alpha, seed, oversample, noise_mode, out_path):
    """Simulate magnitude measurements of an image (writes a PRM1 file)."""
    try:
        reply = ServiceClient(server).post("/synthesize", {
            "image_pgm": _b64_file(image_path), "alpha": alpha, "seed": seed,
            "oversample": oversample, "noise_mode": noise_mode})
        _write_b64(out_path, reply["measurements_prm"])
        click.echo(f"wrote {out_path}: {reply['amplitude_count']} amplitudes, "
                   f"support {reply['support_height']}x{reply['support_width']}, "
                   f"frame {reply['frame_height']}x{reply['frame_width']}")
    except Exception as exc:  # noqa: BLE001
        _fail(exc)


@main.command()
@click.option("--meas", "meas_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(["hio", "altmin", "apls"]), default="apls",
              show_default=True)
@click.option("--denoiser", default="smooth:strength=0.1", show_default=True,
              help="identity | gaussian:tau2=... | smooth:strength=... | cnn:weights=file.bfc")
@click.option("--h0", type=float, default=0.1, show_default=True)
@click.option("--beta", type=float, default=0.0001, show_default=True)
@click.option("--t1", type=int, default=1, show_default=True)
@click.option("--t2", type=int, default=500, show_default=True)
@click.option("--mode", type=click.Choice(["strict", "relaxed"]), default="relaxed", show_default=True)
@click.option("--lam", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--hio-beta", type=float, default=0.9, show_default=True)
@click.option("--hio-iterations", type=int, default=1000, show_default=True)
@click.option("--restarts", type=int, default=50, show_default=True)
@click.option("--restart-iterations", type=int, default=50, show_default=True)
@click.option("--altmin-iterations", type=int, default=500, show_default=True)
@click.option("--ref", "ref_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Ground truth for PSNR reporting.")
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None,
              help="Write per-iteration diagnostics CSV here.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_obj
def reconstruct(server, meas_path, method, denoiser, h0, beta, t1, t2, mode, lam, seed,
                hio_beta, hio_iterations, restarts, restart_iterations, altmin_iterations,
                ref_path, report_path, out_path):
    """Reconstruct an image from a PRM1 measurement file."""
    try:
        payload = {
            "measurements_prm": _b64_file(meas_path), "method": method, "seed": seed,
            "hio": {"beta": hio_beta, "iterations": hio_iterations, "restarts": restarts,
                    "restart_iterations": restart_iterations},
            "langevin": {"h0": h0, "beta": beta, "t1": t1, "mode": mode, "lam": lam},
            "t2": t2, "altmin_iterations": altmin_iterations,
            **_denoiser_payload(denoiser),
        }
        if ref_path:
            payload["reference_pgm"] = _b64_file(ref_path)
        reply = ServiceClient(server).post("/reconstruct", payload)
        _write_b64(out_path, reply["image_pgm"])
        if report_path:
            Path(report_path).write_text(reply["report_csv"])
        line = (f"{reply['method']}: residual {reply['final_residual']:.6g} "
                f"after {reply['iterations']} iterations ({reply['wall_seconds']:.1f}s)")
        if reply.get("registered_psnr") is not None:
            line += f", registered PSNR {reply['registered_psnr']:.2f} dB"
        click.echo(line)
    except click.UsageError:
        raise
    except Exception as exc:  # noqa: BLE001
        _fail(exc)


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--denoiser", default="smooth:strength=0.1", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_obj
def denoise(server, in_path, denoiser, out_path):
    """Apply a denoiser to an image."""
    try:
        payload = {"image_pgm": _b64_file(in_path), **_denoiser_payload(denoiser)}
        reply = ServiceClient(server).post("/denoise", payload)
        _write_b64(out_path, reply["image_pgm"])
        click.echo(f"wrote {out_path} (residual norm {reply['residual_norm']:.6g})")
    except click.UsageError:
        raise
    except Exception as exc:  # noqa: BLE001
        _fail(exc)


@main.command()
@click.option("--ref", "ref_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Write the registered image here.")
@click.pass_obj
def register(server, ref_path, in_path, out_path):
    """Align an image with a reference over the flip/shift ambiguity group."""
    try:
        reply = ServiceClient(server).post("/register", {
            "image_pgm": _b64_file(in_path), "reference_pgm": _b64_file(ref_path)})
        if out_path:
            _write_b64(out_path, reply["registered_pgm"])
        click.echo(f"raw PSNR: {reply['raw_psnr']:.2f} dB")
        click.echo(f"registered PSNR: {reply['registered_psnr']:.2f} dB")
    except Exception as exc:  # noqa: BLE001
        _fail(exc)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "outdir", default=None, type=click.Path(file_okay=False),
              help="Output directory; defaults to the config's outdir.")
@click.option("--threads", type=int, default=None, help="Parallel cells (capped by PHASEFORGE_THREADS).")
@click.pass_obj
def bench(server, config_path, outdir, threads):
    """Run a benchmark matrix from a config file; writes CSV, summary, and PGMs."""
    from .bench import load_config

    try:
        config = load_config(config_path)
        images = [{"image_id": e.image_id, "pgm": _b64_file(e.path), "group": e.group}
                  for e in config.images]
        reply = ServiceClient(server).post("/bench", {
            "config_ini": Path(config_path).read_text(), "images": images, "threads": threads})
        out = Path(outdir or config.outdir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.csv").write_text(reply["results_csv"])
        (out / "summary.txt").write_text(reply["summary"])
        (out / "timings.csv").write_text(reply["timings_csv"])
        for item in reply["reconstructions"]:
            _write_b64(out / item["name"], item["pgm"])
        click.echo(reply["summary"])
        click.echo(f"wrote {len(reply['reconstructions'])} reconstructions to {out}")
    except Exception as exc:  # noqa: BLE001
        _fail(exc)


@main.command("phantom")
@click.option("--kind", type=click.Choice(list(KINDS)), default="clouds", show_default=True)
@click.option("--size", type=int, default=64, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def phantom_cmd(kind, size, seed, out_path):
    """Generate a procedural test image (runs locally)."""
    from .images import save_pgm

    try:
        save_pgm(out_path, phantom(kind, size, seed))
        click.echo(f"wrote {out_path}")
    except Exception as exc:  # noqa: BLE001
        _fail(exc)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
