"""Operator CLI: scene simulation, DOA, beamforming, evaluation, ingest,
queries, and the HTTP service.

Exit codes: 0 success, 1 user error (bad usage, bad input, unknown
session), 2 internal failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .audio import MultichannelAudio, read_wav, stft, write_wav
from .beamform import (
    beam_pattern,
    estimate_covariance,
    mvdr_weights,
    separate_streams,
    steering_for_bins,
)
from .config import load_config
from .doa import srp_phat
from .errors import BadConfig, BeamrecallError, RateMismatch
from .geometry import uma8_geometry
from .metrics import compare_streams
from .recall import answer_query
from .session import SessionStore
from .simulate import SceneSource, SceneSpec, simulate_scene


def _load_scene_spec(path) -> tuple[SceneSpec, list[str]]:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise BadConfig(f"cannot load scene spec {path}: {exc}") from exc
    if not data.get("sources"):
        raise BadConfig("scene spec needs a sources array")
    rate = None
    sources = []
    names = []
    for entry in data["sources"]:
        audio = read_wav(entry["path"])
        if audio.n_channels != 1:
            raise BadConfig(f"{entry['path']}: scene sources must be mono")
        if rate is None:
            rate = audio.sample_rate_hz
        elif audio.sample_rate_hz != rate:
            raise RateMismatch(
                f"{entry['path']}: {audio.sample_rate_hz} Hz vs {rate} Hz"
            )
        sources.append(SceneSource(
            azimuth_deg=float(entry["azimuth_deg"]),
            samples=audio.samples[0],
            gain=float(entry.get("gain", 1.0)),
        ))
        names.append(str(entry.get("label", Path(entry["path"]).stem)))
    spec = SceneSpec(
        sources=sources,
        sample_rate_hz=rate,
        noise_snr_db=data.get("noise_snr_db"),
        seed=int(data.get("seed", 0)),
    )
    return spec, names


def _parse_directions(pairs: tuple[str, ...]) -> dict[str, float]:
    azimuths = {}
    for pair in pairs:
        if "=" not in pair:
            raise BadConfig(f"direction {pair!r} is not label=azimuth")
        label, _, value = pair.partition("=")
        try:
            azimuths[label.strip()] = float(value)
        except ValueError as exc:
            raise BadConfig(f"bad azimuth in {pair!r}") from exc
    if not azimuths:
        raise BadConfig("at least one --direction label=azimuth is required")
    return azimuths


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="TOML service configuration.")
@click.pass_context
def cli(ctx, config_path):
    ctx.obj = load_config(config_path)


@cli.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--refs-dir", type=click.Path(), default=None,
              help="Also write per-source clean references here.")
@click.option("--json", "as_json", is_flag=True)
def simulate(spec_path, out_path, refs_dir, as_json):
    """Render a multichannel mixture from a scene spec JSON."""
    spec, names = _load_scene_spec(spec_path)
    mixture, references = simulate_scene(spec)
    write_wav(mixture, out_path, bit_depth="float32")
    ref_paths = []
    if refs_dir:
        Path(refs_dir).mkdir(parents=True, exist_ok=True)
        for name, ref in zip(names, references):
            path = Path(refs_dir) / f"{name}.wav"
            write_wav(MultichannelAudio(ref[np.newaxis, :], spec.sample_rate_hz),
                      path, bit_depth="float32")
            ref_paths.append(str(path))
    info = {"out": str(out_path), "channels": mixture.n_channels,
            "samples": mixture.n_samples, "sample_rate_hz": mixture.sample_rate_hz,
            "references": ref_paths}
    click.echo(json.dumps(info) if as_json
               else f"wrote {info['channels']}-channel mixture to {out_path}")


@cli.command()
@click.option("--wav", "wav_path", required=True, type=click.Path(exists=True))
@click.option("--grid", type=float, default=1.0, show_default=True)
@click.option("--max-peaks", type=int, default=4, show_default=True)
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="Write the full spatial spectrum as azimuth_deg,value rows.")
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def doa(config, wav_path, grid, max_peaks, csv_path, as_json):
    """Estimate directions of arrival from a multichannel WAV."""
    audio = read_wav(wav_path)
    tensor = stft(audio, config.dsp.window_size, config.dsp.hop_size)
    estimate = srp_phat(tensor, uma8_geometry(), grid_resolution_deg=grid,
                        max_peaks=max_peaks,
                        min_separation_deg=config.dsp.min_separation_deg,
                        speed_of_sound=config.dsp.speed_of_sound)
    if csv_path:
        with open(csv_path, "w") as handle:
            handle.write("azimuth_deg,value\n")
            for azimuth, value in zip(estimate.azimuth_grid_deg,
                                      estimate.spatial_spectrum):
                handle.write(f"{azimuth:.1f},{value:.6f}\n")
    payload = {"peaks": [{"azimuth_deg": a, "score": s} for a, s in estimate.peaks]}
    if as_json:
        click.echo(json.dumps(payload))
    else:
        for peak in payload["peaks"]:
            click.echo(f"{peak['azimuth_deg']:7.1f} deg  score {peak['score']:.3f}")


@cli.command()
@click.option("--wav", "wav_path", required=True, type=click.Path(exists=True))
@click.option("--direction", "-d", "directions", multiple=True,
              help="label=azimuth, repeatable.")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def beamform(config, wav_path, directions, out_dir, as_json):
    """Extract labeled directional streams as mono WAV files."""
    azimuths = _parse_directions(directions)
    audio = read_wav(wav_path)
    streams = separate_streams(
        audio, uma8_geometry(), azimuths,
        window_size=config.dsp.window_size, hop_size=config.dsp.hop_size,
        loading_factor=config.dsp.loading_factor,
        min_separation_deg=config.dsp.min_separation_deg,
        speed_of_sound=config.dsp.speed_of_sound)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    written = {}
    for stream in streams:
        path = Path(out_dir) / f"{stream.label}.wav"
        write_wav(stream.as_audio(), path, bit_depth=16)
        written[stream.label] = str(path)
    click.echo(json.dumps(written) if as_json else
               "\n".join(f"{label}: {path}" for label, path in written.items()))


@cli.command()
@click.option("--wav", "wav_path", required=True, type=click.Path(exists=True))
@click.option("--azimuth", type=float, required=True)
@click.option("--freq", type=float, default=1000.0, show_default=True)
@click.option("--csv", "csv_path", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def beampattern(config, wav_path, azimuth, freq, csv_path, as_json):
    """Beam pattern of the MVDR filter steered at an azimuth."""
    audio = read_wav(wav_path)
    geometry = uma8_geometry()
    tensor = stft(audio, config.dsp.window_size, config.dsp.hop_size)
    covariances = estimate_covariance(tensor, config.dsp.loading_factor)
    steering = steering_for_bins(geometry, azimuth, tensor.n_bins,
                                 config.dsp.window_size, audio.sample_rate_hz,
                                 config.dsp.speed_of_sound)
    weights = mvdr_weights(covariances, steering, azimuth)
    pattern = beam_pattern(weights, geometry, freq,
                           grid_resolution_deg=config.dsp.grid_resolution_deg,
                           window_size=config.dsp.window_size,
                           sample_rate_hz=audio.sample_rate_hz,
                           speed_of_sound=config.dsp.speed_of_sound)
    if csv_path:
        with open(csv_path, "w") as handle:
            handle.write("azimuth_deg,value\n")
            for grid_azimuth, gain in pattern:
                handle.write(f"{grid_azimuth:.1f},{gain:.6f}\n")
    if as_json:
        click.echo(json.dumps({"pattern": [[a, g] for a, g in pattern]}))
    else:
        peak_gain = max(g for _, g in pattern)
        click.echo(f"{len(pattern)} points, unit gain at {azimuth} deg, "
                   f"max gain {peak_gain:.3f}")


@cli.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def evaluate(config, spec_path, as_json):
    """Simulate, beamform at the true azimuths, and report STOI/SI-SDR."""
    spec, names = _load_scene_spec(spec_path)
    mixture, references = simulate_scene(spec)
    azimuths = {name: source.azimuth_deg
                for name, source in zip(names, spec.sources)}
    streams = separate_streams(
        mixture, spec.geometry, azimuths,
        window_size=config.dsp.window_size, hop_size=config.dsp.hop_size,
        loading_factor=config.dsp.loading_factor,
        min_separation_deg=config.dsp.min_separation_deg,
        speed_of_sound=config.dsp.speed_of_sound)
    center = mixture.samples[spec.geometry.center_mic_index()]
    report = compare_streams(
        references={n: r for n, r in zip(names, references)},
        before={n: center for n in names},
        after={s.label: s.samples for s in streams},
        sample_rate_hz=spec.sample_rate_hz,
    )
    if as_json:
        click.echo(json.dumps(report.to_dict()))
    else:
        for row in report.streams:
            click.echo(
                f"{row.label}: stoi {row.stoi_before:.3f} -> {row.stoi_after:.3f}, "
                f"si-sdr {row.si_sdr_before_db:.2f} -> {row.si_sdr_after_db:.2f} dB"
            )


@cli.command()
@click.option("--wav", "wav_path", required=True, type=click.Path(exists=True))
@click.option("--direction", "-d", "directions", multiple=True,
              help="label=azimuth, repeatable.")
@click.option("--auto-doa", is_flag=True, help="Derive azimuths from DOA peaks.")
@click.option("--sources", type=int, default=2, show_default=True,
              help="Peak count for auto DOA.")
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
def ingest(config, wav_path, directions, auto_doa, sources, as_json):
    """Build a queryable session from a multichannel capture."""
    store = SessionStore(config.sessions_root, config)
    azimuths = _parse_directions(directions) if directions else None
    if not azimuths and not auto_doa:
        raise BadConfig("provide --direction pairs or --auto-doa")
    session_id = store.ingest(wav_path, azimuths, auto_doa, sources)
    manifest = store.manifest(session_id)
    if as_json:
        click.echo(json.dumps(manifest.to_dict()))
    else:
        click.echo(session_id)


@cli.command()
@click.option("--session", "session_id", required=True)
@click.option("--q", "query_text", required=True)
@click.option("--top-k", type=int, default=None)
@click.option("--window-k", type=int, default=None)
@click.option("--min-overlap-s", type=float, default=None)
@click.option("--relevance-threshold", type=float, default=None)
@click.pass_obj
def query(config, session_id, query_text, top_k, window_k, min_overlap_s,
          relevance_threshold):
    """Answer a what-did-I-miss query; prints the result JSON."""
    from .config import build_embedding_provider, build_llm_backend

    overrides = {k: v for k, v in (
        ("top_k", top_k), ("window_k", window_k),
        ("min_overlap_s", min_overlap_s),
        ("relevance_threshold", relevance_threshold),
    ) if v is not None}
    recall_config = config.recall.with_overrides(overrides)
    store = SessionStore(config.sessions_root, config)
    _, index, chunk_store = store.load_session(session_id)
    result = answer_query(index, chunk_store, query_text, recall_config,
                          build_llm_backend(config), build_embedding_provider(config))
    click.echo(result.to_json())


@cli.command()
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.pass_obj
def serve(config, host, port):
    """Run the HTTP service."""
    from .server import serve as run_server

    if host:
        config.listen_host = host
    if port:
        config.listen_port = port
    run_server(config)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except BeamrecallError as exc:
        click.echo(f"error [{exc.code}]: {exc}", err=True)
        return 1
    except Exception as exc:  # pragma: no cover - internal failures
        click.echo(f"internal error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
