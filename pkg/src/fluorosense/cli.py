"""Command-line orchestration: synth | scan | analyze | report.

Each command loads the layered config (defaults <- file <- flags), runs
its slice of the pipeline, and emits CSV artifacts plus a JSON manifest
with per-output checksums. CSV is the contract; SVG plots are optional
conveniences carrying no extra data.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time

import numpy as np
import yaml

from . import __version__
from .analysis import (build_ratio_map, classify, confusion_at, region_split,
                       roc, spearman, spectral_ratio, write_ratiomap_csv,
                       write_roc_csv, write_summary, youden_threshold)
from .config import (ExperimentConfig, apply_no_noise, build_experiment,
                     load_config)
from .errors import ConfigError, DataError
from .optics import apply_filter, apply_window
from .phantom import emission_at, generate_phantom, write_field_csv
from .scanner import (NOMINAL_EXCITATION_NW, STREAM_PHANTOM, line_scan,
                      raster_scan, read_oracle_dir, read_scanmap_csv,
                      substream, write_oracle_dir, write_scanmap_csv)
from .spectral import synthesize_emission, write_spectrum_csv

ORACLE_DIRNAME = "oracle"


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _config_hash(resolved: dict) -> str:
    canon = yaml.safe_dump(resolved, sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()


def _write_manifest(outdir: str, resolved: dict, outputs: list[str],
                    started: float) -> str:
    manifest = {
        "config_sha256": _config_hash(resolved),
        "seed": resolved["seed"],
        "version": __version__,
        "outputs": {os.path.relpath(p, outdir): _sha256(p) for p in outputs},
        "wall_clock_s": round(time.monotonic() - started, 3),
    }
    path = os.path.join(outdir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def _healthy_reference_point(cfg: ExperimentConfig) -> tuple[float, float]:
    """Field corner (1 mm inset) farthest from the tumour."""
    w, h = cfg.phantom.width, cfg.phantom.height
    cx, cy = cfg.phantom.tumor_center
    corners = [(1.0, 1.0), (w - 1.0, 1.0), (1.0, h - 1.0), (w - 1.0, h - 1.0)]
    return max(corners, key=lambda p: (p[0] - cx) ** 2 + (p[1] - cy) ** 2)


def cmd_synth(cfg: ExperimentConfig, outdir: str) -> list[str]:
    """Emit representative detected spectra: healthy, margin, tumour center.

    Spectra are noiseless by construction (heterogeneity suppressed): this
    command documents the optical chain, the scan commands carry the noise.
    """
    quiet = dataclasses.replace(cfg.phantom, autofluor_heterogeneity=0.0)
    field = generate_phantom(quiet, rng=None)
    cx, cy = quiet.tumor_center
    points = {
        "healthy": _healthy_reference_point(cfg),
        "margin": (cx + quiet.tumor_radius, cy),
        "tumour_center": (cx, cy),
    }
    scale = cfg.scan.excitation_power / NOMINAL_EXCITATION_NW
    written = []
    for name, (x, y) in points.items():
        a_amp, p_amp = emission_at(field, x, y)
        s = synthesize_emission(a_amp * scale, p_amp * scale, cfg.emission,
                                cfg.grid)
        s = apply_window(s, cfg.window)
        s = apply_filter(s, cfg.emission_longpass)
        path = os.path.join(outdir, f"{name}.csv")
        write_spectrum_csv(s, path)
        written.append(path)
    return written


def cmd_scan(cfg: ExperimentConfig, outdir: str) -> list[str]:
    """Generate the phantom and scan it; emit field, scan CSV, oracle dir."""
    field = generate_phantom(cfg.phantom, substream(cfg.seed, STREAM_PHANTOM))
    if cfg.scan_mode == "line":
        scan_map = line_scan(field, cfg.line_start, cfg.line_end, cfg.line_step,
                             cfg.scan, cfg.ch514, cfg.ch635, cfg.detector,
                             cfg.emission, cfg.seed, cfg.grid)
    else:
        scan_map = raster_scan(field, cfg.scan, cfg.ch514, cfg.ch635,
                               cfg.detector, cfg.emission, cfg.seed, cfg.grid)
    written = []
    field_path = os.path.join(outdir, "field.csv")
    write_field_csv(field, field_path)
    written.append(field_path)
    scan_path = os.path.join(outdir, "scan.csv")
    write_scanmap_csv(scan_map, scan_path)
    written.append(scan_path)
    if cfg.scan.record_oracle:
        oracle_dir = os.path.join(outdir, ORACLE_DIRNAME)
        written.extend(write_oracle_dir(scan_map, oracle_dir))
    return written


def _plot_ratio_map(m, path: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "fluorosense"
    import matplotlib.pyplot as plt

    xs = np.unique(m.x)
    ys = np.unique(m.y)
    fig, ax = plt.subplots(figsize=(5, 4))
    if len(xs) * len(ys) == len(m):
        img = np.full((len(ys), len(xs)), np.nan)
        img[np.searchsorted(ys, m.y), np.searchsorted(xs, m.x)] = m.normalized_ratio
        dx = xs[1] - xs[0] if len(xs) > 1 else 1.0
        dy = ys[1] - ys[0] if len(ys) > 1 else 1.0
        extent = (xs[0] - dx / 2, xs[-1] + dx / 2, ys[-1] + dy / 2, ys[0] - dy / 2)
        im = ax.imshow(img, extent=extent, aspect="equal", cmap="viridis")
        fig.colorbar(im, ax=ax, label="normalized ratio")
        ax.set_xlabel("x (mm)")
        ax.set_ylabel("y (mm)")
    else:
        d = np.concatenate(([0.0], np.cumsum(np.hypot(np.diff(m.x),
                                                      np.diff(m.y)))))
        ax.plot(d, m.normalized_ratio, marker="o", ms=3)
        ax.set_xlabel("displacement (mm)")
        ax.set_ylabel("normalized ratio")
    ax.set_title("sensor ratio map")
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _plot_roc(curve, path: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "fluorosense"
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(curve.fpr, curve.tpr, drawstyle="steps-post")
    ax.plot([0, 1], [0, 1], ls=":", c="gray")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(f"ROC (AUC = {curve.auc:.3f})")
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_analyze(scan_csv: str, cfg: ExperimentConfig, outdir: str,
                plots: bool = False) -> list[str]:
    """Ratio map, classification, ROC, correlation report from a scan CSV."""
    try:
        table = read_scanmap_csv(scan_csv)
    except OSError as exc:
        raise DataError(f"cannot read scan data: {exc}") from exc
    params = cfg.analysis
    ratio_map = build_ratio_map(table.x, table.y, table.counts_514,
                                table.counts_635, table.truth,
                                alpha=params.alpha)
    predicted = classify(ratio_map, params.threshold,
                         normalized=params.normalized)
    written = []
    map_path = os.path.join(outdir, "ratio_map.csv")
    write_ratiomap_csv(ratio_map, predicted, map_path)
    written.append(map_path)

    scores = (ratio_map.normalized_ratio if params.normalized
              else ratio_map.raw_ratio)
    curve = roc(scores, ratio_map.truth)
    roc_path = os.path.join(outdir, "roc.csv")
    write_roc_csv(curve, roc_path)
    written.append(roc_path)

    best = youden_threshold(curve)
    counts = confusion_at(scores, ratio_map.truth, best)
    summary = {
        "auc": float(curve.auc),
        "sensitivity": float(counts.sensitivity),
        "specificity": float(counts.specificity),
        "optimum_threshold": float(best),
        "classify_threshold": float(params.threshold),
        "alpha": float(params.alpha),
    }

    oracle_dir = os.path.join(os.path.dirname(os.path.abspath(scan_csv)),
                              ORACLE_DIRNAME)
    if os.path.isdir(oracle_dir):
        spectra = read_oracle_dir(oracle_dir, len(table))
        oracle_scores = np.array([spectral_ratio(s) if s is not None else np.nan
                                  for s in spectra])
        have = ~np.isnan(oracle_scores)
        tumour, healthy = region_split(table.x, table.y, table.truth,
                                       radius=params.region_radius)
        summary["r_s_tumour"] = float(spearman(
            ratio_map.raw_ratio[tumour & have], oracle_scores[tumour & have]))
        summary["r_s_healthy"] = float(spearman(
            ratio_map.raw_ratio[healthy & have], oracle_scores[healthy & have]))

    summary_path = os.path.join(outdir, "summary.yaml")
    write_summary(summary, summary_path)
    written.append(summary_path)

    if plots:
        map_svg = os.path.join(outdir, "ratio_map.svg")
        _plot_ratio_map(ratio_map, map_svg)
        written.append(map_svg)
        roc_svg = os.path.join(outdir, "roc.svg")
        _plot_roc(curve, roc_svg)
        written.append(roc_svg)
    return written


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluorosense",
        description="Simulate and analyze a two-channel ratiometric "
                    "fluorescence scanning experiment.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, plots: bool = False):
        p.add_argument("--config", metavar="PATH",
                       help="YAML experiment config (defaults used if omitted)")
        p.add_argument("--seed", type=int, metavar="N",
                       help="override the config seed")
        p.add_argument("--out", metavar="DIR",
                       help="output directory (default from config)")
        p.add_argument("--no-noise", action="store_true",
                       help="disable detector noise, oracle noise, fouling, "
                            "and tissue heterogeneity")
        if plots:
            p.add_argument("--plots", action="store_true",
                           help="also write SVG figures")

    common(sub.add_parser("synth", help="emit representative spectra"))
    common(sub.add_parser("scan", help="generate a phantom and scan it"))
    p_analyze = sub.add_parser("analyze", help="analyze a scan CSV")
    p_analyze.add_argument("scan_csv", help="scan CSV produced by the scan command")
    common(p_analyze, plots=True)
    common(sub.add_parser("report", help="full pipeline: synth, scan, analyze"),
           plots=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    started = time.monotonic()
    try:
        resolved = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            resolved["seed"] = args.seed
        if args.out is not None:
            resolved["out"] = args.out
        if args.no_noise:
            resolved = apply_no_noise(resolved)
        cfg = build_experiment(resolved)
        outdir = resolved["out"]
        os.makedirs(outdir, exist_ok=True)

        if args.command == "synth":
            cmd_synth(cfg, outdir)
        elif args.command == "scan":
            outputs = cmd_scan(cfg, outdir)
            _write_manifest(outdir, resolved, outputs, started)
        elif args.command == "analyze":
            outputs = cmd_analyze(args.scan_csv, cfg, outdir,
                                  plots=getattr(args, "plots", False))
            _write_manifest(outdir, resolved, outputs, started)
        else:  # report
            outputs = cmd_synth(cfg, outdir)
            outputs += cmd_scan(cfg, outdir)
            outputs += cmd_analyze(os.path.join(outdir, "scan.csv"), cfg,
                                   outdir, plots=getattr(args, "plots", False))
            _write_manifest(outdir, resolved, outputs, started)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
