"""Command-line pipeline: synth, tokenize, score, evaluate, pipeline.

Exit codes: 0 success, 2 validation error (bad flags, missing inputs),
1 runtime error. Every subcommand writes a run_manifest.json into its
output directory echoing the configuration, seeds, per-stage wall-clock
seconds, and a peak-memory estimate. Timings live only in the manifest so
scores.json and report.json stay byte-reproducible across runs.
"""

from __future__ import annotations

import argparse
import csv
import json
import resource
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from voxtok import kernels, metrics, store
from voxtok.container import read_meta, write_container, write_meta
from voxtok.mapping import build_anomaly_map
from voxtok.model import AXES, EXCLUSION_POLICIES, ScoreConfig
from voxtok.scorer import score_in_chunks
from voxtok.synth import SynthSpec, generate_dataset, mock_extract
from voxtok.tokenizer import build_projection, tokenize_volume


class CliValidationError(ValueError):
    pass


class Stages:
    """Wall-clock accounting for the manifest."""

    def __init__(self):
        self.times: dict[str, float] = {}
        self._t0 = time.perf_counter()

    @contextmanager
    def stage(self, name: str):
        t = time.perf_counter()
        yield
        self.times[name] = self.times.get(name, 0.0) + (time.perf_counter() - t)

    def total(self) -> float:
        return time.perf_counter() - self._t0


def _peak_mem_mb() -> float:
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


@dataclass
class RunManifest:
    config: dict
    volumes: list[dict] = field(default_factory=list)
    stages_s: dict[str, float] = field(default_factory=dict)
    total_s: float = 0.0
    peak_mem_mb: float = 0.0

    def write(self, out_dir: Path) -> Path:
        path = Path(out_dir) / "run_manifest.json"
        payload = {
            "config": self.config,
            "volumes": self.volumes,
            "stages_s": self.stages_s,
            "total_s": self.total_s,
            "peak_mem_mb": self.peak_mem_mb,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, sort_keys=True, indent=2)
            fh.write("\n")
        return path


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _parse_layers(text: str) -> tuple[int, ...]:
    try:
        layers = tuple(int(tok) for tok in text.replace(",", " ").split())
    except ValueError:
        raise CliValidationError(f"cannot parse layer list {text!r}")
    if not layers:
        raise CliValidationError("layer list is empty")
    return layers


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def run_synth(
    out_dir: Path,
    spec: SynthSpec,
    layers: tuple[int, ...],
    feature_dim: int = 64,
    stages: Stages | None = None,
) -> list[str]:
    """Generate phantoms and their mock slice features; emits the same files
    a real extractor would."""
    stages = stages or Stages()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vids = []
    with stages.stage("ingest"):
        for sv in generate_dataset(spec):
            vid = sv.meta.volume_id
            vids.append(vid)
            write_container(sv.mask, store.mask_path(out_dir, vid))
            write_container(sv.gt, store.gt_path(out_dir, vid))
            write_meta(sv.meta, out_dir)
            for axis in AXES:
                for layer in layers:
                    stack = mock_extract(
                        sv.volume,
                        axis,
                        layer,
                        volume_id=vid,
                        D=feature_dim,
                        encoder_seed=spec.encoder_seed,
                    )
                    write_container(stack.data, store.feature_path(out_dir, vid, axis, layer))
    return vids


def cmd_synth(args) -> int:
    stages = Stages()
    spec = SynthSpec(
        H=args.edge,
        n_normal=args.n_normal,
        n_anomalous=args.n_anomalous,
        lesion_radius=tuple(args.lesion_radius),
        lesion_delta=args.lesion_delta,
        texture_seed=args.texture_seed,
        encoder_seed=args.encoder_seed,
        voxel_spacing_mm=args.spacing,
    )
    layers = _parse_layers(args.layers)
    vids = run_synth(Path(args.out), spec, layers, feature_dim=args.feature_dim, stages=stages)
    manifest = RunManifest(
        config={
            "command": "synth",
            "out": str(args.out),
            "spec": spec.__dict__ | {"lesion_radius": list(spec.lesion_radius)},
            "layers": list(layers),
            "feature_dim": args.feature_dim,
        },
        volumes=[{"id": v, "label": "anomalous" if v.startswith("a") else "normal"} for v in vids],
        stages_s=stages.times,
        total_s=stages.total(),
        peak_mem_mb=_peak_mem_mb(),
    )
    manifest.write(Path(args.out))
    print(f"synth: wrote {len(vids)} volumes x {len(layers)} layers to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# tokenize
# ---------------------------------------------------------------------------


def run_tokenize(
    features_dir: Path,
    masks_dir: Path,
    out_dir: Path,
    patch_size: int,
    proj_dim: int,
    seed: int,
    layers: tuple[int, ...],
    keep_threshold: float = 0.0,
    stages: Stages | None = None,
) -> list[str]:
    stages = stages or Stages()
    features_dir, masks_dir, out_dir = Path(features_dir), Path(masks_dir), Path(out_dir)
    vids = store.discover_volumes(masks_dir)
    if not vids:
        raise CliValidationError(f"no *_mask.vxtk files in {masks_dir}")
    missing = [
        str(store.feature_path(features_dir, vid, axis, layer))
        for vid in vids
        for axis in AXES
        for layer in layers
        if not store.feature_path(features_dir, vid, axis, layer).exists()
    ]
    if missing:
        raise CliValidationError(
            f"{len(missing)} missing feature file(s):\n  " + "\n  ".join(missing)
        )

    out_dir.mkdir(parents=True, exist_ok=True)
    with stages.stage("tokenize"):
        probe = store.load_stack(features_dir, vids[0], "axial", layers[0])
        if probe.patch != patch_size:
            raise CliValidationError(
                f"feature grids imply patch size {probe.patch}, --patch-size says {patch_size}"
            )
        config = ScoreConfig(
            layers=layers, k=proj_dim, seed=seed, mask_keep_threshold=keep_threshold
        )
        projection = build_projection(probe.D, proj_dim, seed)
        for vid in vids:
            mask = store.load_mask(masks_dir, vid)
            for layer in layers:
                stacks = {a: store.load_stack(features_dir, vid, a, layer) for a in AXES}
                coll = tokenize_volume(stacks, mask, config, projection=projection)
                store.save_collection(out_dir, coll)
    return vids


def cmd_tokenize(args) -> int:
    stages = Stages()
    layers = _parse_layers(args.layers)
    vids = run_tokenize(
        args.features_dir,
        args.masks_dir,
        args.out,
        patch_size=args.patch_size,
        proj_dim=args.proj_dim,
        seed=args.seed,
        layers=layers,
        keep_threshold=args.keep_threshold,
        stages=stages,
    )
    manifest = RunManifest(
        config={
            "command": "tokenize",
            "features_dir": str(args.features_dir),
            "masks_dir": str(args.masks_dir),
            "out": str(args.out),
            "patch_size": args.patch_size,
            "proj_dim": args.proj_dim,
            "seed": args.seed,
            "layers": list(layers),
            "keep_threshold": args.keep_threshold,
        },
        volumes=[{"id": v} for v in vids],
        stages_s=stages.times,
        total_s=stages.total(),
        peak_mem_mb=_peak_mem_mb(),
    )
    manifest.write(Path(args.out))
    print(f"tokenize: {len(vids)} volumes x {len(layers)} layers -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------


def run_score(
    tokens_dir: Path,
    masks_dir: Path,
    out_dir: Path,
    layers: tuple[int, ...] | None,
    k_frac: float,
    chunk_size: int | None,
    policy: str,
    chunk_tokens: int,
    threads: int = 1,
    backend: str | None = None,
    stages: Stages | None = None,
) -> dict:
    stages = stages or Stages()
    tokens_dir, masks_dir, out_dir = Path(tokens_dir), Path(masks_dir), Path(out_dir)
    vids = store.discover_volumes(tokens_dir, suffix="_keep.vxtk")
    if len(vids) < 2:
        raise CliValidationError(f"need at least 2 tokenized volumes in {tokens_dir}, found {len(vids)}")
    if layers is None:
        layers = tuple(store.discover_layers(tokens_dir, vids[0]))
        if not layers:
            raise CliValidationError(f"no token files for {vids[0]} in {tokens_dir}")
    missing = [
        str(store.tokens_path(tokens_dir, vid, layer))
        for vid in vids
        for layer in layers
        if not store.tokens_path(tokens_dir, vid, layer).exists()
    ]
    if missing:
        raise CliValidationError(
            f"{len(missing)} missing token file(s):\n  " + "\n  ".join(missing)
        )

    out_dir.mkdir(parents=True, exist_ok=True)
    config = ScoreConfig(
        layers=layers,
        K_fraction=k_frac,
        chunk_tokens=chunk_tokens,
        exclusion_policy=policy,
    )
    with stages.stage("score"):
        per_layer = {
            layer: [store.load_collection(tokens_dir, vid, layer) for vid in vids]
            for layer in layers
        }
        chunk = chunk_size if chunk_size else len(vids)
        results = score_in_chunks(per_layer, config, chunk, backend=backend, threads=threads)

    patient: dict[str, float] = {}
    exclusions: dict[str, dict] = {}
    chunks_meta = []
    with stages.stage("upsample"):
        for res in results:
            chunks_meta.append({"volumes": res.volume_ids, "K": res.K})
            for vid in res.volume_ids:
                patient[vid] = float(res.patient[vid])
                exclusions[vid] = {
                    "collections": res.excluded_collections[vid],
                    "tokens": res.excluded_tokens[vid],
                }
                for layer in layers:
                    write_container(
                        res.layer_maps[layer][vid],
                        store.layer_scores_path(out_dir, vid, layer),
                    )
                write_container(res.final_maps[vid], store.coarse_path(out_dir, vid))
                mask = store.load_mask(masks_dir, vid)
                amap = build_anomaly_map(vid, res.final_maps[vid], mask)
                write_container(amap.full, store.map_path(out_dir, vid))

    # configuration and timings are echoed in the manifest, not here, so the
    # file is byte-identical across runs that produce equal scores
    scores = {
        "chunks": chunks_meta,
        "patient_scores": patient,
        "exclusions": exclusions,
    }
    _write_json(out_dir / "scores.json", scores)
    return scores


def cmd_score(args) -> int:
    stages = Stages()
    layers = _parse_layers(args.layers) if args.layers else None
    scores = run_score(
        args.tokens_dir,
        args.masks_dir,
        args.out,
        layers=layers,
        k_frac=args.k_frac,
        chunk_size=args.chunk_size,
        policy=args.policy,
        chunk_tokens=args.chunk_tokens,
        threads=args.threads,
        backend=args.backend,
        stages=stages,
    )
    manifest = RunManifest(
        config={
            "command": "score",
            "tokens_dir": str(args.tokens_dir),
            "masks_dir": str(args.masks_dir),
            "out": str(args.out),
            "k_frac": args.k_frac,
            "chunk_size": args.chunk_size,
            "policy": args.policy,
            "chunk_tokens": args.chunk_tokens,
            "threads": args.threads,
            "backend": args.backend or kernels.default_backend(),
        },
        volumes=[{"id": v} for v in scores["patient_scores"]],
        stages_s=stages.times,
        total_s=stages.total(),
        peak_mem_mb=_peak_mem_mb(),
    )
    manifest.write(Path(args.out))
    print(f"score: {len(scores['patient_scores'])} volumes in {len(scores['chunks'])} chunk(s) -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def _volume_label(vid: str, gt: np.ndarray, *dirs: Path) -> int:
    for d in dirs:
        p = store.meta_path(d, vid)
        if p.exists():
            return 1 if read_meta(p).label == "anomalous" else 0
    return int(gt.any())


def run_evaluate(
    maps_dir: Path,
    gt_dir: Path,
    masks_dir: Path,
    out_dir: Path,
    spacing: float | None = None,
    n_thresholds: int = 200,
    include_background: bool = False,
    ltpr_threshold: float | None = None,
    overlays: bool = False,
    stages: Stages | None = None,
) -> metrics.EvalReport:
    stages = stages or Stages()
    maps_dir, gt_dir, masks_dir, out_dir = map(Path, (maps_dir, gt_dir, masks_dir, out_dir))
    vids = store.discover_volumes(maps_dir, suffix="_map.vxtk")
    if not vids:
        raise CliValidationError(f"no *_map.vxtk files in {maps_dir}")
    scores_file = maps_dir / "scores.json"
    if not scores_file.exists():
        raise CliValidationError(f"missing {scores_file} (run `voxtok score` first)")
    patient_scores = json.loads(scores_file.read_text())["patient_scores"]

    full_maps, gts, masks, labels = {}, {}, {}, {}
    problems = []
    with stages.stage("evaluate"):
        for vid in vids:
            full = store.read_container(store.map_path(maps_dir, vid))
            gt_file = store.gt_path(gt_dir, vid)
            if not gt_file.exists():
                problems.append(f"{vid}: missing GT {gt_file}")
                continue
            gt = store.read_container(gt_file)
            mask = store.load_mask(masks_dir, vid)
            if gt.shape != full.shape or mask.shape != full.shape:
                problems.append(
                    f"{vid}: dims mismatch map={full.shape} gt={gt.shape} mask={mask.shape}"
                )
                continue
            full_maps[vid], gts[vid], masks[vid] = full, gt, mask
            labels[vid] = _volume_label(vid, gt, gt_dir, masks_dir, maps_dir)
        if problems:
            raise CliValidationError("evaluation input problems:\n  " + "\n  ".join(problems))
        if spacing is None:
            meta_file = next(
                (store.meta_path(d, vids[0]) for d in (gt_dir, masks_dir) if store.meta_path(d, vids[0]).exists()),
                None,
            )
            spacing = read_meta(meta_file).voxel_spacing_mm if meta_file else 0.7

        report = metrics.evaluate(
            patient_scores,
            labels,
            full_maps,
            gts,
            masks,
            spacing_mm=spacing,
            n_thresholds=n_thresholds,
            include_background=include_background,
            ltpr_threshold=ltpr_threshold,
        )

    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "report.json", report.to_dict())
    with open(out_dir / "lesions.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lesion_id", "volume_id", "voxel_count", "volume_mm3", "detected"])
        for les in report.lesions:
            writer.writerow(
                [les.lesion_id, les.volume_id, les.voxel_count, f"{les.volume_mm3:.6g}", int(les.detected)]
            )
    if overlays:
        _write_overlays(out_dir / "overlays", full_maps, gts, report.dice_threshold)
    return report


def _write_overlays(out_dir: Path, full_maps, gts, threshold: float) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir.mkdir(parents=True, exist_ok=True)
    for vid, full in full_maps.items():
        mid = full.shape[0] // 2
        fig, ax = plt.subplots(figsize=(4, 4))
        ax.imshow(full[mid], cmap="magma")
        if gts[vid][mid].any():
            ax.contour(gts[vid][mid], levels=[0.5], colors="yellow", linewidths=1.0)
        pred = full[mid] >= threshold
        if pred.any():
            ax.contour(pred, levels=[0.5], colors="deepskyblue", linewidths=0.8)
        ax.set_title(vid)
        ax.axis("off")
        fig.savefig(out_dir / f"{vid}.png", dpi=120, bbox_inches="tight")
        plt.close(fig)


def _print_report(report: metrics.EvalReport) -> None:
    rows = [
        ("patient AUROC", report.patient_auroc),
        ("patient AP", report.patient_ap),
        ("voxel AUROC", report.voxel_auroc),
        ("voxel AP", report.voxel_ap),
        ("Dice-max", report.dice_max),
        ("IoU @ Dice-max", report.iou_at_dice_max),
        ("Dice threshold", report.dice_threshold),
    ]
    width = max(len(name) for name, _ in rows)
    print("-" * (width + 10))
    for name, value in rows:
        print(f"{name:<{width}}  {value:8.4f}")
    for b in report.ltpr:
        hi = "inf" if b.hi_mm3 == float("inf") else f"{b.hi_mm3:g}"
        ltpr = "n/a" if b.ltpr is None else f"{b.ltpr:.2f}"
        print(f"LTPR [{b.lo_mm3:g}, {hi}) mm3: {b.detected}/{b.lesions} ({ltpr})")
    print("-" * (width + 10))


def cmd_evaluate(args) -> int:
    stages = Stages()
    report = run_evaluate(
        args.maps_dir,
        args.gt_dir,
        args.masks_dir,
        args.out,
        spacing=args.spacing,
        n_thresholds=args.n_thresholds,
        include_background=args.include_background,
        ltpr_threshold=args.ltpr_threshold,
        overlays=args.overlays,
        stages=stages,
    )
    manifest = RunManifest(
        config={
            "command": "evaluate",
            "maps_dir": str(args.maps_dir),
            "gt_dir": str(args.gt_dir),
            "masks_dir": str(args.masks_dir),
            "out": str(args.out),
            "spacing": args.spacing,
            "n_thresholds": args.n_thresholds,
            "include_background": args.include_background,
        },
        stages_s=stages.times,
        total_s=stages.total(),
        peak_mem_mb=_peak_mem_mb(),
    )
    manifest.write(Path(args.out))
    _print_report(report)
    return 0


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

_PIPELINE_DEFAULTS = {
    "workdir": None,
    "features_dir": None,
    "masks_dir": None,
    "gt_dir": None,
    "edge": 56,
    "n_normal": 12,
    "n_anomalous": 6,
    "lesion_radius": "6,10",
    "lesion_delta": 0.8,
    "texture_seed": 11,
    "encoder_seed": 7,
    "feature_dim": 64,
    "spacing": 0.7,
    "layers": "6,12,18,24",
    "patch_size": 14,
    "proj_dim": 128,
    "seed": 0,
    "keep_threshold": 0.0,
    "k_frac": 0.3,
    "chunk_size": 0,
    "policy": "consistent-anomaly",
    "chunk_tokens": 4096,
    "n_thresholds": 200,
    "overlays": False,
    "threads": 1,
    "backend": None,
}

_PIPELINE_CASTS = {
    "edge": int,
    "n_normal": int,
    "n_anomalous": int,
    "lesion_delta": float,
    "texture_seed": int,
    "encoder_seed": int,
    "feature_dim": int,
    "spacing": float,
    "patch_size": int,
    "proj_dim": int,
    "seed": int,
    "keep_threshold": float,
    "k_frac": float,
    "chunk_size": int,
    "chunk_tokens": int,
    "n_thresholds": int,
    "overlays": lambda v: str(v).lower() in ("1", "true", "yes"),
    "threads": int,
}


def parse_config_file(path: Path) -> dict:
    """`key = value` lines, `#` comments; unknown keys are a validation error."""
    values = {}
    errors = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected `key = value`, got {raw!r}")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _PIPELINE_DEFAULTS:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        values[key] = value
    if errors:
        raise CliValidationError(f"bad config file {path}:\n  " + "\n  ".join(errors))
    return values


def resolve_pipeline_config(args) -> dict:
    cfg = dict(_PIPELINE_DEFAULTS)
    if args.config:
        if not Path(args.config).exists():
            raise CliValidationError(f"config file not found: {args.config}")
        cfg.update(parse_config_file(Path(args.config)))
    for key in _PIPELINE_DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    errors = []
    for key, cast in _PIPELINE_CASTS.items():
        if cfg[key] is None:
            continue
        try:
            cfg[key] = cast(cfg[key])
        except (TypeError, ValueError):
            errors.append(f"{key}: cannot parse {cfg[key]!r}")
    if not cfg["workdir"]:
        errors.append("workdir: required (set in config file or via --workdir)")
    ingest_keys = ("features_dir", "masks_dir", "gt_dir")
    given = [k for k in ingest_keys if cfg[k]]
    if given and len(given) != len(ingest_keys):
        errors.append(
            f"ingest mode needs all of {', '.join(ingest_keys)}; got only {', '.join(given)}"
        )
    if cfg["policy"] not in EXCLUSION_POLICIES:
        errors.append(f"policy: must be one of {EXCLUSION_POLICIES}")
    if errors:
        raise CliValidationError("invalid pipeline config:\n  " + "\n  ".join(errors))
    return cfg


def cmd_pipeline(args) -> int:
    cfg = resolve_pipeline_config(args)
    stages = Stages()
    workdir = Path(cfg["workdir"])
    layers = _parse_layers(cfg["layers"])
    synthetic = not cfg["features_dir"]

    if synthetic:
        data_dir = workdir / "data"
        radius = tuple(int(r) for r in str(cfg["lesion_radius"]).replace(",", " ").split())
        spec = SynthSpec(
            H=cfg["edge"],
            n_normal=cfg["n_normal"],
            n_anomalous=cfg["n_anomalous"],
            lesion_radius=radius,
            lesion_delta=cfg["lesion_delta"],
            texture_seed=cfg["texture_seed"],
            encoder_seed=cfg["encoder_seed"],
            voxel_spacing_mm=cfg["spacing"],
        )
        vids = run_synth(data_dir, spec, layers, feature_dim=cfg["feature_dim"], stages=stages)
        features_dir = masks_dir = gt_dir = data_dir
        if cfg["proj_dim"] > cfg["feature_dim"]:
            # mock features are narrower than the real encoder's
            print(f"pipeline: clamping proj_dim {cfg['proj_dim']} -> {cfg['feature_dim']}")
            cfg["proj_dim"] = cfg["feature_dim"]
    else:
        features_dir = Path(cfg["features_dir"])
        masks_dir = Path(cfg["masks_dir"])
        gt_dir = Path(cfg["gt_dir"])
        with stages.stage("ingest"):
            vids = store.discover_volumes(masks_dir)

    tokens_dir = workdir / "tokens"
    maps_dir = workdir / "maps"
    report_dir = workdir / "report"
    run_tokenize(
        features_dir,
        masks_dir,
        tokens_dir,
        patch_size=cfg["patch_size"],
        proj_dim=cfg["proj_dim"],
        seed=cfg["seed"],
        layers=layers,
        keep_threshold=cfg["keep_threshold"],
        stages=stages,
    )
    run_score(
        tokens_dir,
        masks_dir,
        maps_dir,
        layers=layers,
        k_frac=cfg["k_frac"],
        chunk_size=cfg["chunk_size"] or None,
        policy=cfg["policy"],
        chunk_tokens=cfg["chunk_tokens"],
        threads=cfg["threads"],
        backend=cfg["backend"],
        stages=stages,
    )
    report = run_evaluate(
        maps_dir,
        gt_dir,
        masks_dir,
        report_dir,
        spacing=cfg["spacing"],
        n_thresholds=cfg["n_thresholds"],
        overlays=cfg["overlays"],
        stages=stages,
    )

    manifest = RunManifest(
        config={"command": "pipeline", **{k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()}},
        volumes=[{"id": v, "label": "anomalous" if v.startswith("a") else "normal"} for v in vids]
        if synthetic
        else [{"id": v} for v in vids],
        stages_s=stages.times,
        total_s=stages.total(),
        peak_mem_mb=_peak_mem_mb(),
    )
    manifest.write(workdir)
    _print_report(report)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxtok",
        description="Training-free volumetric zero-shot anomaly detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic desk-scale dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--edge", type=int, default=56)
    p.add_argument("--n-normal", type=int, default=12)
    p.add_argument("--n-anomalous", type=int, default=6)
    p.add_argument("--lesion-radius", type=int, nargs=2, default=(6, 10), metavar=("LO", "HI"))
    p.add_argument("--lesion-delta", type=float, default=0.8)
    p.add_argument("--texture-seed", type=int, default=11)
    p.add_argument("--encoder-seed", type=int, default=7)
    p.add_argument("--feature-dim", type=int, default=64)
    p.add_argument("--spacing", type=float, default=0.7)
    p.add_argument("--layers", default="6,12,18,24")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("tokenize", help="slice features -> fused 3D token collections")
    p.add_argument("--features-dir", required=True)
    p.add_argument("--masks-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--patch-size", type=int, default=14)
    p.add_argument("--proj-dim", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--layers", default="6,12,18,24")
    p.add_argument("--keep-threshold", type=float, default=0.0)
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("score", help="batch mutual-similarity scoring")
    p.add_argument("--tokens-dir", required=True)
    p.add_argument("--masks-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--layers", default=None)
    p.add_argument("--k-frac", type=float, default=0.3)
    p.add_argument("--chunk-size", type=int, default=None, help="volumes per chunk (default: full batch)")
    p.add_argument("--policy", choices=EXCLUSION_POLICIES, default="consistent-anomaly")
    p.add_argument("--chunk-tokens", type=int, default=4096)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--backend", choices=("native", "numpy"), default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help="metrics report from maps + ground truth")
    p.add_argument("--maps-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--masks-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--spacing", type=float, default=None)
    p.add_argument("--n-thresholds", type=int, default=200)
    p.add_argument("--include-background", action="store_true")
    p.add_argument("--ltpr-threshold", type=float, default=None)
    p.add_argument("--overlays", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="synth-or-ingest -> tokenize -> score -> evaluate")
    p.add_argument("--config", default=None, help="key = value config file")
    p.add_argument("--workdir", default=None)
    p.add_argument("--features-dir", dest="features_dir", default=None)
    p.add_argument("--masks-dir", dest="masks_dir", default=None)
    p.add_argument("--gt-dir", dest="gt_dir", default=None)
    p.add_argument("--edge", type=int, default=None)
    p.add_argument("--n-normal", dest="n_normal", type=int, default=None)
    p.add_argument("--n-anomalous", dest="n_anomalous", type=int, default=None)
    p.add_argument("--lesion-radius", dest="lesion_radius", default=None)
    p.add_argument("--lesion-delta", dest="lesion_delta", type=float, default=None)
    p.add_argument("--texture-seed", dest="texture_seed", type=int, default=None)
    p.add_argument("--encoder-seed", dest="encoder_seed", type=int, default=None)
    p.add_argument("--feature-dim", dest="feature_dim", type=int, default=None)
    p.add_argument("--spacing", type=float, default=None)
    p.add_argument("--layers", default=None)
    p.add_argument("--patch-size", dest="patch_size", type=int, default=None)
    p.add_argument("--proj-dim", dest="proj_dim", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--keep-threshold", dest="keep_threshold", type=float, default=None)
    p.add_argument("--k-frac", dest="k_frac", type=float, default=None)
    p.add_argument("--chunk-size", dest="chunk_size", type=int, default=None)
    p.add_argument("--policy", choices=EXCLUSION_POLICIES, default=None)
    p.add_argument("--chunk-tokens", dest="chunk_tokens", type=int, default=None)
    p.add_argument("--n-thresholds", dest="n_thresholds", type=int, default=None)
    p.add_argument("--overlays", action="store_const", const=True, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--backend", choices=("native", "numpy"), default=None)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except CliValidationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # noqa: BLE001 - boundary of the CLI
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
