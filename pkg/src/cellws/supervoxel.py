"""Region adjacency graph construction and supervoxel merging.

Edges accumulate the probability mass sitting on the faces between two
supervoxels; merging repeatedly fuses the pair with the lowest average
face probability until every remaining edge averages at or above the
threshold.  Ties are broken by the lexicographically smallest label pair,
and a merged group is represented by its smallest member label, so the
merge sequence is deterministic.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .volume import LabelVolume, ScalarVolume

__all__ = [
    "RegionAdjacencyGraph",
    "build_rag",
    "merge_supervoxels",
    "apply_mapping",
]


@dataclass
class RegionAdjacencyGraph:
    """Supervoxel adjacency with per-edge face statistics.

    node_sizes maps label -> voxel count; edges maps (a, b) with a < b to
    [prob_sum, face_count], where prob_sum totals the mean probability of
    the two voxels on each shared face.
    """

    node_sizes: dict[int, int] = field(default_factory=dict)
    edges: dict[tuple[int, int], list] = field(default_factory=dict)

    def edge_average(self, a: int, b: int) -> float:
        psum, count = self.edges[(min(a, b), max(a, b))]
        return psum / count

    def validate(self) -> "RegionAdjacencyGraph":
        for (a, b), (psum, count) in self.edges.items():
            if not (0 < a < b):
                raise ValueError(f"edge key ({a}, {b}) must satisfy 0 < a < b")
            if a not in self.node_sizes or b not in self.node_sizes:
                raise ValueError(f"edge ({a}, {b}) references unknown node")
            if count <= 0:
                raise ValueError(f"edge ({a}, {b}) has non-positive face count")
        return self


def build_rag(supervoxels: LabelVolume, prob: ScalarVolume) -> RegionAdjacencyGraph:
    """Build the adjacency graph of a total labeling over a probability map.

    Every face-adjacent voxel pair with different labels contributes one
    face to the edge between those labels, carrying the mean of the two
    voxel probabilities.  Accumulation happens in float64.
    """
    if supervoxels.dims != prob.dims:
        raise ValueError(f"dims mismatch: {supervoxels.dims!r} vs {prob.dims!r}")
    lbl = supervoxels.data
    if not lbl.all():
        raise ValueError("supervoxel volume must label every voxel (no zeros)")
    p = prob.data.astype(np.float64)

    keys = []
    means = []
    for axis in range(3):
        a = [slice(None)] * 3
        b = [slice(None)] * 3
        a[axis] = slice(0, -1)
        b[axis] = slice(1, None)
        la, lb = lbl[tuple(a)], lbl[tuple(b)]
        diff = la != lb
        if not diff.any():
            continue
        la, lb = la[diff].astype(np.int64), lb[diff].astype(np.int64)
        lo = np.minimum(la, lb)
        hi = np.maximum(la, lb)
        keys.append((lo << 32) | hi)
        means.append((p[tuple(a)][diff] + p[tuple(b)][diff]) * 0.5)

    rag = RegionAdjacencyGraph()
    counts = np.bincount(lbl.ravel())
    for label in np.flatnonzero(counts):
        if label != 0:
            rag.node_sizes[int(label)] = int(counts[label])

    if keys:
        all_keys = np.concatenate(keys)
        all_means = np.concatenate(means)
        uniq, inverse = np.unique(all_keys, return_inverse=True)
        psums = np.bincount(inverse, weights=all_means)
        fcounts = np.bincount(inverse)
        for k, psum, count in zip(uniq, psums, fcounts):
            pair = (int(k >> 32), int(k & 0xFFFFFFFF))
            rag.edges[pair] = [float(psum), int(count)]
    return rag


def merge_supervoxels(rag: RegionAdjacencyGraph, threshold: float) -> dict[int, int]:
    """Fuse weak-boundary supervoxels; return the label mapping.

    Pops the edge with the smallest average face probability (ties: the
    smaller (a, b) pair) and merges its endpoints while that average is
    strictly below the threshold.  Parallel edges created by a merge add
    their prob_sum/face_count statistics together.  The returned dict maps
    every original label to the smallest label of its merged group.

    The queue uses lazy invalidation: each node carries a version bumped
    on merge, and entries whose endpoint versions are stale are skipped.
    """
    nodes = sorted(rag.node_sizes)
    version = {u: 0 for u in nodes}
    parent = {u: u for u in nodes}
    adj: dict[int, dict[int, list]] = {u: {} for u in nodes}
    for (a, b), (psum, count) in rag.edges.items():
        stats = [psum, count]  # one shared object per undirected edge
        adj[a][b] = stats
        adj[b][a] = stats

    heap: list[tuple[float, int, int, int, int]] = []
    for (a, b), (psum, count) in sorted(rag.edges.items()):
        heapq.heappush(heap, (psum / count, a, b, 0, 0))

    while heap:
        avg, a, b, va, vb = heapq.heappop(heap)
        if version[a] != va or version[b] != vb:
            continue
        if avg >= threshold:
            break
        rep, gone = (a, b) if a < b else (b, a)
        version[rep] += 1
        version[gone] += 1
        parent[gone] = rep
        rep_adj = adj[rep]
        del rep_adj[gone]
        for nb, stats in adj[gone].items():
            if nb == rep:
                continue
            if nb in rep_adj:
                # parallel edges collapse: statistics add exactly
                kept = rep_adj[nb]
                kept[0] += stats[0]
                kept[1] += stats[1]
                del adj[nb][gone]
            else:
                rep_adj[nb] = stats
                del adj[nb][gone]
                adj[nb][rep] = stats
        del adj[gone]
        for nb, (psum, count) in rep_adj.items():
            lo, hi = (rep, nb) if rep < nb else (nb, rep)
            heapq.heappush(
                heap, (psum / count, lo, hi, version[lo], version[hi])
            )

    def find(u: int) -> int:
        while parent[u] != u:
            parent[u] = parent[parent[u]]
            u = parent[u]
        return u

    return {u: find(u) for u in nodes}


def apply_mapping(supervoxels: LabelVolume, mapping: dict[int, int]) -> LabelVolume:
    """Relabel a supervoxel volume through an old->new label mapping.

    Every label present in the volume must appear as a key; the zero label
    is never remapped.
    """
    present = supervoxels.labels()
    missing = [int(l) for l in present if int(l) not in mapping]
    if missing:
        raise ValueError(f"mapping lacks entries for labels {missing[:8]}")
    top = int(present.max()) if present.size else 0
    lut = np.zeros(top + 1, dtype=np.uint32)
    for old in present:
        lut[old] = mapping[int(old)]
    return LabelVolume(supervoxels.dims, lut[supervoxels.data])
