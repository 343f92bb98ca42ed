"""Cross-sample mutual-similarity scoring of token collections.

Every kept token is scored by the mean of the K smallest nearest-token
distances to the other collections in the batch (its Mutual Similarity
Vector). Background tokens score 0. The consistent-anomaly policy is a
documented stand-in heuristic: collections whose top-scoring tokens are
mutual nearest neighbors get excluded from each other's MSVs for those top
tokens only, so anomalies recurring across samples cannot vouch for each
other.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from voxtok import kernels
from voxtok.model import ScoreConfig, TokenCollection

log = logging.getLogger(__name__)


class EmptyForegroundError(ValueError):
    """A collection has no kept tokens and cannot take part in scoring."""


def choose_K(B: int, K_fraction: float) -> int:
    """K = max(1, round(K_fraction * (B - 1))), rounding half up."""
    if B < 2:
        raise ValueError(f"batch size must be >= 2, got {B}")
    return max(1, int(math.floor(K_fraction * (B - 1) + 0.5)))


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class MutualSimilarityVector:
    """Sorted cross-collection nearest-token distances for one token."""

    token_ref: tuple[str, int, int, int]  # (volume_id, x, y, z)
    distances: np.ndarray  # ascending, length B - 1 - len(excluded)
    excluded: tuple[str, ...]


@dataclass
class LayerScoreMap:
    layer_id: int
    volume_id: str
    scores: np.ndarray  # [N_p, N_p, N_p] float32, 0 on background


@dataclass(frozen=True)
class PatientScore:
    volume_id: str
    score: float


@dataclass
class ExclusionMap:
    """Per-volume collections excluded from MSVs, and the tokens affected.

    ``token_indices`` holds flat (x-major) grid indices; exclusions apply
    only to those tokens, all other tokens keep their full MSV.
    """

    excluded: dict[str, tuple[str, ...]] = field(default_factory=dict)
    token_indices: dict[str, np.ndarray] = field(default_factory=dict)

    def count_for(self, volume_id: str) -> int:
        return len(self.excluded.get(volume_id, ()))


def nearest_distance(
    token: np.ndarray,
    collection: TokenCollection,
    backend: str | None = None,
    threads: int = 1,
) -> float:
    """Euclidean distance from ``token`` to its nearest kept token of ``collection``."""
    kept = collection.kept_tokens()
    if kept.shape[0] == 0:
        raise EmptyForegroundError(f"{collection.volume_id}: no kept tokens")
    token = np.asarray(token, dtype=np.float32).reshape(1, -1)
    if not np.isfinite(token).all():
        raise ValueError("query token is not finite")
    sq = kernels.min_sqdist(token, kept, backend=backend, threads=threads)
    return float(np.sqrt(sq[0]))


def compute_msv(
    token: np.ndarray,
    batch: list[TokenCollection],
    owner: int,
    excluded_ids: tuple[str, ...] = (),
    token_ref: tuple[str, int, int, int] | None = None,
    backend: str | None = None,
    threads: int = 1,
) -> MutualSimilarityVector:
    """One nearest-token distance per non-owner, non-excluded collection, sorted."""
    B = len(batch)
    if B < 2:
        raise ValueError(f"batch size must be >= 2, got {B}")
    if not 0 <= owner < B:
        raise ValueError(f"owner index {owner} out of range for batch of {B}")
    dists = []
    for j, coll in enumerate(batch):
        if j == owner or coll.volume_id in excluded_ids:
            continue
        dists.append(nearest_distance(token, coll, backend=backend, threads=threads))
    if not dists:
        raise ValueError("all collections excluded from MSV")
    if token_ref is None:
        token_ref = (batch[owner].volume_id, -1, -1, -1)
    return MutualSimilarityVector(
        token_ref=token_ref,
        distances=np.sort(np.asarray(dists, dtype=np.float32)),
        excluded=tuple(excluded_ids),
    )


def musc_score(msv: MutualSimilarityVector | np.ndarray, K: int) -> float:
    """Mean of the K smallest MSV entries.

    K larger than the (possibly exclusion-shortened) MSV is clamped to its
    length with a warning rather than failing the volume.
    """
    distances = msv.distances if isinstance(msv, MutualSimilarityVector) else np.asarray(msv)
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if K > len(distances):
        log.warning("K=%d exceeds MSV length %d; clamping", K, len(distances))
        K = len(distances)
    return float(np.sort(distances)[:K].mean(dtype=np.float32))


# ---------------------------------------------------------------------------
# batch scoring
# ---------------------------------------------------------------------------


@dataclass
class _Prepared:
    volume_id: str
    n_p: int
    kept_idx: np.ndarray  # flat x-major indices of kept tokens
    tokens: np.ndarray  # [n_kept, dim] float32 contiguous
    sqnorms: np.ndarray


def _prepare(batch: list[TokenCollection], backend: str | None) -> list[_Prepared]:
    if len(batch) < 2:
        raise ValueError(f"batch size must be >= 2, got {len(batch)}")
    layer = batch[0].layer_id
    dim = batch[0].fused_dim
    n_p = batch[0].n_p
    prepped = []
    for coll in batch:
        if coll.layer_id != layer:
            raise ValueError(
                f"layer mismatch in batch: {coll.volume_id} has {coll.layer_id}, expected {layer}"
            )
        if coll.fused_dim != dim or coll.n_p != n_p:
            raise ValueError(
                f"token shape mismatch in batch: {coll.volume_id} is "
                f"N_p={coll.n_p} dim={coll.fused_dim}, expected N_p={n_p} dim={dim}"
            )
        kept_idx = coll.kept_flat_indices()
        if kept_idx.size == 0:
            raise EmptyForegroundError(f"{coll.volume_id}: no kept tokens")
        tokens = coll.kept_tokens()
        prepped.append(
            _Prepared(
                volume_id=coll.volume_id,
                n_p=n_p,
                kept_idx=kept_idx,
                tokens=tokens,
                sqnorms=kernels.row_sqnorms(tokens, backend=backend),
            )
        )
    return prepped


def _cross_min_dists(
    queries: np.ndarray,
    target: _Prepared,
    chunk_tokens: int,
    backend: str | None,
    threads: int,
) -> np.ndarray:
    """Distance from every query token to its nearest token in ``target``."""
    out = np.empty(queries.shape[0], dtype=np.float32)
    for start in range(0, queries.shape[0], chunk_tokens):
        stop = min(start + chunk_tokens, queries.shape[0])
        out[start:stop] = kernels.min_sqdist(
            queries[start:stop],
            target.tokens,
            cand_sqnorms=target.sqnorms,
            backend=backend,
            threads=threads,
        )
    return np.sqrt(out, out=out)


def _distance_table(
    prepped: list[_Prepared],
    chunk_tokens: int,
    backend: str | None,
    threads: int,
) -> tuple[list[np.ndarray], list[list[int]]]:
    """For each collection i: [n_i, B-1] distances, columns = other js ascending."""
    B = len(prepped)
    tables, col_ids = [], []
    for i in range(B):
        others = [j for j in range(B) if j != i]
        cols = [
            _cross_min_dists(prepped[i].tokens, prepped[j], chunk_tokens, backend, threads)
            for j in others
        ]
        tables.append(np.stack(cols, axis=1))
        col_ids.append(others)
    return tables, col_ids


def _prefix_mean(table: np.ndarray, K: int) -> np.ndarray:
    """MuSc scores for every row of a distance table: mean of K smallest."""
    K = min(K, table.shape[1])
    part = np.sort(table, axis=1)[:, :K]
    return part.mean(axis=1, dtype=np.float32)


def _top_token_rows(prep: _Prepared, scores: np.ndarray, top_fraction: float) -> np.ndarray:
    """Rows of the highest-provisional-score tokens; ties break on (x, y, z)."""
    n_top = max(1, _round_half_up(top_fraction * len(scores)))
    order = np.lexsort((prep.kept_idx, -scores.astype(np.float64)))
    return order[:n_top]


def _build_exclusions(
    prepped: list[_Prepared],
    tables: list[np.ndarray],
    col_ids: list[list[int]],
    provisional: list[np.ndarray],
    config: ScoreConfig,
) -> ExclusionMap:
    B = len(prepped)
    top_rows = [
        _top_token_rows(prepped[i], provisional[i], config.exclusion_top_fraction)
        for i in range(B)
    ]
    # directed link weight: fraction of i's top tokens whose single nearest
    # cross-collection neighbor lies in j
    w = np.zeros((B, B), dtype=np.float64)
    for i in range(B):
        nearest_cols = np.argmin(tables[i][top_rows[i]], axis=1)
        for pos in nearest_cols:
            w[i, col_ids[i][pos]] += 1.0
        w[i] /= len(top_rows[i])
    w = w + w.T

    e = max(1, _round_half_up(config.exclusion_edge_fraction * B))
    e = min(e, B - 2)  # always leave at least one collection in the MSV
    excl = ExclusionMap()
    for i in range(B):
        others = sorted((j for j in range(B) if j != i), key=lambda j: (-w[i, j], j))
        chosen = others[:e]
        excl.excluded[prepped[i].volume_id] = tuple(prepped[j].volume_id for j in chosen)
        excl.token_indices[prepped[i].volume_id] = np.sort(prepped[i].kept_idx[top_rows[i]])
    return excl


def consistent_anomaly_exclusion(
    batch: list[TokenCollection],
    config: ScoreConfig,
    backend: str | None = None,
    threads: int = 1,
) -> ExclusionMap:
    """Stand-in consistent-anomaly detector (the reference graph algorithm is
    external); returns which collections each volume skips for its suspicious
    tokens. Degenerates to a no-op for policy "none" or B < 3.
    """
    if config.exclusion_policy == "none" or len(batch) < 3:
        return ExclusionMap()
    prepped = _prepare(batch, backend)
    tables, col_ids = _distance_table(prepped, config.chunk_tokens, backend, threads)
    K = choose_K(len(batch), config.K_fraction)
    provisional = [_prefix_mean(t, K) for t in tables]
    return _build_exclusions(prepped, tables, col_ids, provisional, config)


@dataclass
class LayerScoreResult:
    layer_id: int
    maps: list[LayerScoreMap]
    K: int
    exclusions: ExclusionMap


def score_layer(
    batch: list[TokenCollection],
    config: ScoreConfig,
    backend: str | None = None,
    threads: int = 1,
) -> LayerScoreResult:
    """Score every kept token of every collection for one layer."""
    prepped = _prepare(batch, backend)
    B = len(prepped)
    tables, col_ids = _distance_table(prepped, config.chunk_tokens, backend, threads)
    K = choose_K(B, config.K_fraction)
    scores = [_prefix_mean(t, K) for t in tables]

    if config.exclusion_policy == "consistent-anomaly" and B >= 3:
        excl = _build_exclusions(prepped, tables, col_ids, scores, config)
        vid_to_j = {p.volume_id: j for j, p in enumerate(prepped)}
        for i in range(B):
            vid = prepped[i].volume_id
            dropped = {vid_to_j[v] for v in excl.excluded[vid]}
            if not dropped:
                continue
            keep_cols = [c for c, j in enumerate(col_ids[i]) if j not in dropped]
            rows = np.searchsorted(prepped[i].kept_idx, excl.token_indices[vid])
            if K > len(keep_cols):
                log.warning(
                    "%s: exclusions shrink MSV to %d < K=%d; using all remaining entries",
                    vid,
                    len(keep_cols),
                    K,
                )
            scores[i][rows] = _prefix_mean(tables[i][rows][:, keep_cols], K)
    else:
        excl = ExclusionMap()

    maps = []
    for i in range(B):
        n_p = prepped[i].n_p
        flat = np.zeros(n_p**3, dtype=np.float32)
        flat[prepped[i].kept_idx] = scores[i]
        maps.append(
            LayerScoreMap(
                layer_id=batch[0].layer_id,
                volume_id=prepped[i].volume_id,
                scores=flat.reshape(n_p, n_p, n_p),
            )
        )
    return LayerScoreResult(layer_id=batch[0].layer_id, maps=maps, K=K, exclusions=excl)


def aggregate_layers(maps: list[np.ndarray]) -> np.ndarray:
    """Element-wise mean across layers, accumulated in the given fixed order."""
    if not maps:
        raise ValueError("no layer maps to aggregate")
    shape = maps[0].shape
    for m in maps[1:]:
        if m.shape != shape:
            raise ValueError(f"layer map shape mismatch: {m.shape} vs {shape}")
    acc = np.add.reduce(np.stack(maps).astype(np.float32), axis=0)
    return (acc / np.float32(len(maps))).astype(np.float32)


def patient_score(final_map: np.ndarray, keep: np.ndarray, volume_id: str) -> PatientScore:
    """Maximum token score over the kept (foreground) tokens."""
    kept = keep.astype(bool)
    if not kept.any():
        raise EmptyForegroundError(f"{volume_id}: no kept tokens")
    return PatientScore(volume_id=volume_id, score=float(final_map[kept].max()))


# ---------------------------------------------------------------------------
# multi-layer orchestration and chunking
# ---------------------------------------------------------------------------


@dataclass
class BatchScores:
    volume_ids: list[str]
    K: int
    layer_maps: dict[int, dict[str, np.ndarray]]  # layer -> vid -> coarse map
    final_maps: dict[str, np.ndarray]  # vid -> coarse map (layer mean)
    keeps: dict[str, np.ndarray]
    patient: dict[str, float]
    excluded_collections: dict[str, int]  # vid -> exclusion events across layers
    excluded_tokens: dict[str, int]


def score_batch(
    per_layer: dict[int, list[TokenCollection]],
    config: ScoreConfig,
    backend: str | None = None,
    threads: int = 1,
) -> BatchScores:
    """Per-layer scoring, fixed-order layer averaging, patient max scores."""
    if not per_layer:
        raise ValueError("empty batch: no layers")
    layers = list(per_layer)
    vids = [c.volume_id for c in per_layer[layers[0]]]
    for layer in layers:
        if [c.volume_id for c in per_layer[layer]] != vids:
            raise ValueError(f"layer {layer}: volume list disagrees with layer {layers[0]}")

    layer_maps: dict[int, dict[str, np.ndarray]] = {}
    excl_coll = dict.fromkeys(vids, 0)
    excl_tok = dict.fromkeys(vids, 0)
    K = choose_K(len(vids), config.K_fraction)
    for layer in layers:
        result = score_layer(per_layer[layer], config, backend=backend, threads=threads)
        layer_maps[layer] = {m.volume_id: m.scores for m in result.maps}
        for vid in vids:
            excl_coll[vid] += result.exclusions.count_for(vid)
            excl_tok[vid] += len(result.exclusions.token_indices.get(vid, ()))

    keeps = {c.volume_id: c.keep for c in per_layer[layers[0]]}
    final_maps = {
        vid: aggregate_layers([layer_maps[layer][vid] for layer in layers]) for vid in vids
    }
    patient = {
        vid: patient_score(final_maps[vid], keeps[vid], vid).score for vid in vids
    }
    return BatchScores(
        volume_ids=vids,
        K=K,
        layer_maps=layer_maps,
        final_maps=final_maps,
        keeps=keeps,
        patient=patient,
        excluded_collections=excl_coll,
        excluded_tokens=excl_tok,
    )


def chunk_partition(B: int, chunk_size: int) -> list[list[int]]:
    """Non-overlapping index chunks of ``chunk_size``; a trailing singleton is
    merged into the previous chunk so every chunk has >= 2 members."""
    if chunk_size < 2:
        raise ValueError(f"chunk size must be >= 2, got {chunk_size}")
    if B < 2:
        raise ValueError(f"batch size must be >= 2, got {B}")
    chunks = [list(range(s, min(s + chunk_size, B))) for s in range(0, B, chunk_size)]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2].extend(chunks.pop())
    return chunks


def score_in_chunks(
    per_layer: dict[int, list[TokenCollection]],
    config: ScoreConfig,
    chunk_size: int,
    backend: str | None = None,
    threads: int = 1,
) -> list[BatchScores]:
    """Split the batch into chunks scored independently, K recomputed per chunk."""
    layers = list(per_layer)
    B = len(per_layer[layers[0]])
    results = []
    for idx in chunk_partition(B, chunk_size):
        sub = {layer: [per_layer[layer][i] for i in idx] for layer in layers}
        results.append(score_batch(sub, config, backend=backend, threads=threads))
    return results
