"""Objective metrics: mel-cepstra, DTW, MCD, WER, and latent-space analyses.

MCD convention: (10 / ln 10) * sqrt(2) times the mean, over DTW-aligned frame
pairs, of the euclidean distance between cepstral vectors c_1..c_D (c_0 is
kept in the McepSequence but excluded from the distance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct
from scipy.spatial.distance import cdist

from .dsp import MelSpectrogram
from .errors import AccentTtsError

MCD_CONST = 10.0 / math.log(10.0) * math.sqrt(2.0)


@dataclass
class McepSequence:
    values: np.ndarray  # [n_frames, order + 1], c_0..c_D

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise AccentTtsError("mcep matrix must be [n_frames >= 1, order + 1]")
        if not np.isfinite(self.values).all():
            raise AccentTtsError("mcep matrix contains non-finite values")

    @property
    def order(self) -> int:
        return self.values.shape[1] - 1


def mcep_extract(mel: MelSpectrogram | np.ndarray, order: int = 13) -> McepSequence:
    """Cepstra as the orthonormal DCT-II of each log-mel frame, truncated."""
    values = mel.values if isinstance(mel, MelSpectrogram) else np.asarray(mel)
    cepstra = dct(values.astype(np.float64), type=2, norm="ortho", axis=1)
    return McepSequence(values=cepstra[:, : order + 1])


def dtw_align(seq_a: np.ndarray, seq_b: np.ndarray) -> tuple[list[tuple[int, int]], float]:
    """Minimum-cost monotone alignment with steps {(1,0),(0,1),(1,1)}.

    Returns (path, total cost); cost sums the euclidean frame distance over
    every path cell, both endpoints included.
    """
    a = np.atleast_2d(np.asarray(seq_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(seq_b, dtype=np.float64))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise AccentTtsError("dtw needs non-empty sequences")
    dist = cdist(a, b, metric="euclidean")
    n, m = dist.shape
    acc = np.full((n, m), np.inf)
    acc[0, 0] = dist[0, 0]
    for j in range(1, m):
        acc[0, j] = dist[0, j] + acc[0, j - 1]
    for i in range(1, n):
        acc[i, 0] = dist[i, 0] + acc[i - 1, 0]
        prev_row = acc[i - 1]
        row = acc[i]
        for j in range(1, m):
            row[j] = dist[i, j] + min(prev_row[j - 1], prev_row[j], row[j - 1])
    path = [(n - 1, m - 1)]
    i, j = n - 1, m - 1
    while (i, j) != (0, 0):
        candidates = []
        if i > 0 and j > 0:
            candidates.append((acc[i - 1, j - 1], (i - 1, j - 1)))
        if i > 0:
            candidates.append((acc[i - 1, j], (i - 1, j)))
        if j > 0:
            candidates.append((acc[i, j - 1], (i, j - 1)))
        _, (i, j) = min(candidates, key=lambda c: (c[0], c[1]))
        path.append((i, j))
    path.reverse()
    return path, float(acc[n - 1, m - 1])


def mcd(seq_a: McepSequence, seq_b: McepSequence) -> float:
    """DTW-aligned mel-cepstral distortion in dB, c_0 excluded."""
    a = seq_a.values[:, 1:]
    b = seq_b.values[:, 1:]
    path, _ = dtw_align(a, b)
    dists = [np.linalg.norm(a[i] - b[j]) for i, j in path]
    return MCD_CONST * float(np.mean(dists))


def word_edit_distance(reference: list[str], hypothesis: list[str]) -> int:
    """Levenshtein distance over word lists (substitutions+deletions+insertions)."""
    n, m = len(reference), len(hypothesis)
    prev = list(range(m + 1))
    for i in range(1, n + 1):
        cur = [i] + [0] * m
        for j in range(1, m + 1):
            sub = prev[j - 1] + (reference[i - 1] != hypothesis[j - 1])
            cur[j] = min(sub, prev[j] + 1, cur[j - 1] + 1)
        prev = cur
    return prev[m]


def wer(references: list[str], hypotheses: list[str]) -> float:
    """Corpus word error rate: pooled edit distance over pooled word count."""
    if len(references) != len(hypotheses):
        raise AccentTtsError("reference and hypothesis lists differ in length")
    if not references:
        raise AccentTtsError("empty reference corpus")
    errors = 0
    words = 0
    for ref, hyp in zip(references, hypotheses):
        ref_words = ref.split()
        hyp_words = hyp.split()
        errors += word_edit_distance(ref_words, hyp_words)
        words += len(ref_words)
    if words == 0:
        raise AccentTtsError("reference corpus has no words")
    return errors / words


def separability(embeddings: np.ndarray, labels) -> float:
    """Silhouette score (euclidean) of the labeled embedding cloud."""
    from sklearn.metrics import silhouette_score

    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    uniq, counts = np.unique(labels, return_counts=True)
    if len(uniq) < 2:
        raise AccentTtsError("separability needs at least two distinct labels")
    if counts.min() < 2:
        raise AccentTtsError("separability needs at least two points per label")
    return float(silhouette_score(embeddings, labels, metric="euclidean"))


def nearest_centroid_fit(embeddings: np.ndarray, labels) -> dict:
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    return {
        lab: embeddings[labels == lab].mean(axis=0) for lab in np.unique(labels)
    }


def nearest_centroid_predict(centroids: dict, embeddings: np.ndarray) -> list:
    embeddings = np.asarray(embeddings, dtype=np.float64)
    keys = sorted(centroids)
    mat = np.stack([centroids[k] for k in keys])
    dists = cdist(embeddings, mat)
    return [keys[i] for i in dists.argmin(axis=1)]


def latent_probe(
    train_embeddings, train_labels, test_embeddings, test_labels
) -> float:
    """Nearest-centroid probe accuracy on held-out embeddings."""
    train_labels = np.asarray(train_labels)
    test_labels = np.asarray(test_labels)
    missing = set(np.unique(test_labels)) - set(np.unique(train_labels))
    if missing:
        raise AccentTtsError(f"labels absent from probe training: {sorted(missing)!r}")
    centroids = nearest_centroid_fit(train_embeddings, train_labels)
    pred = nearest_centroid_predict(centroids, test_embeddings)
    return float(np.mean([p == t for p, t in zip(pred, test_labels)]))


def tsne_export(
    embeddings: np.ndarray, seed: int, perplexity: float = 15.0, max_iter: int = 1000
) -> np.ndarray:
    """2-D t-SNE coordinates, deterministic given the seed."""
    from sklearn.manifold import TSNE

    embeddings = np.asarray(embeddings, dtype=np.float64)
    n = embeddings.shape[0]
    if n < 5:
        raise AccentTtsError("t-SNE export needs at least 5 points")
    perplexity = min(perplexity, (n - 1) / 3.0)
    tsne = TSNE(
        n_components=2,
        perplexity=perplexity,
        max_iter=max_iter,
        random_state=seed,
        init="pca",
    )
    return tsne.fit_transform(embeddings)
