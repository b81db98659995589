"""Vendi Score diversity and the asymmetric merge-gain analysis.

The Vendi Score of a set is exp(Shannon entropy) of the eigenvalues of its
normalised similarity matrix K/n: 1 for n identical items, n for n mutually
orthogonal ones. Merging a candidate set into a reference set either adds
non-redundant diversity (positive gain) or mostly overlaps it (negative).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedding import SimilarityMatrix, cosine_kernel, embed_batch
from .objectives import MissingRun, accuracy_gain

EIGENVALUE_SUM_TOL = 1e-9


class DiversityError(Exception):
    pass


class InvalidKernel(DiversityError):
    pass


class EigenFailure(DiversityError):
    pass


@dataclass(frozen=True)
class VendiResult:
    """Score plus the spectrum it came from (eigenvalues of K/n, cleaned)."""

    score: float
    eigenvalues: np.ndarray
    entropy: float
    n: int


def vendi_score(kernel) -> VendiResult:
    """Diversity of a set given its similarity kernel.

    Eigendecomposes K/n symmetrically, clamps small negative eigenvalues to 0
    (cosine kernels are PSD up to roundoff), renormalises the spectrum to sum
    1, and returns exp(-sum lam*ln lam) with 0*ln 0 = 0.
    """
    if not isinstance(kernel, SimilarityMatrix):
        try:
            kernel = SimilarityMatrix(np.asarray(kernel, dtype=np.float64))
        except Exception as exc:
            raise InvalidKernel(str(exc)) from exc
    n = kernel.n
    try:
        lams = np.linalg.eigvalsh(kernel.values / n)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    lams = np.clip(lams, 0.0, None)
    total = float(lams.sum())
    if total <= 0.0:
        raise EigenFailure("eigenvalue mass vanished after clamping")
    lams = lams / total
    entropy = float(-np.sum(np.where(lams > 0.0, lams * np.log(np.where(lams > 0.0, lams, 1.0)), 0.0)))
    return VendiResult(score=float(np.exp(entropy)), eigenvalues=lams, entropy=entropy, n=n)


def vendi_score_texts(texts, provider) -> VendiResult:
    """Vendi Score of a list of texts under the given embedding provider."""
    vectors = embed_batch(provider, list(texts))
    return vendi_score(cosine_kernel(vectors))


def _unique(texts) -> list[str]:
    return list(dict.fromkeys(texts))


def merge_gain(ref_questions, cand_questions, provider) -> float:
    """Normalised diversity gain of augmenting a reference set with a candidate.

    gain = (VS(ref ∪ cand) - VS(ref)) / VS(cand), with the union taken over
    exact-duplicate-free question strings (set semantics), so a candidate
    contained in the reference yields a gain of exactly 0.
    """
    ref = _unique(ref_questions)
    cand = _unique(cand_questions)
    if not ref or not cand:
        raise DiversityError("both question sets must be non-empty")
    ref_set = set(ref)
    union = ref + [q for q in cand if q not in ref_set]

    texts = _unique(ref + cand)
    vectors = {t: v.values for t, v in zip(texts, embed_batch(provider, texts))}
    vs_ref = vendi_score(cosine_kernel(np.stack([vectors[t] for t in ref]))).score
    vs_cand = vendi_score(cosine_kernel(np.stack([vectors[t] for t in cand]))).score
    if len(union) == len(ref):
        return 0.0  # candidate adds no new strings; VS(union) == VS(ref) identically
    vs_union = vendi_score(cosine_kernel(np.stack([vectors[t] for t in union]))).score
    return (vs_union - vs_ref) / vs_cand


@dataclass(frozen=True)
class MergeGainMatrix:
    """Single-set Vendi Scores on the diagonal, pairwise gains off it."""

    dataset_ids: tuple[str, ...]
    diagonal: dict[str, float]
    gains: dict[tuple[str, str], float]

    def value(self, ref: str, cand: str) -> float:
        if ref == cand:
            return self.diagonal[ref]
        return self.gains[(ref, cand)]

    def to_rows(self, float_format: str = "{:.4f}") -> list[list[str]]:
        """Table rows mirroring the published layout: rows = reference set."""
        header = [""] + list(self.dataset_ids)
        rows = [header]
        for ref in self.dataset_ids:
            rows.append(
                [ref] + [float_format.format(self.value(ref, cand)) for cand in self.dataset_ids]
            )
        return rows

    def to_dict(self) -> dict:
        return {
            "dataset_ids": list(self.dataset_ids),
            "diagonal": {k: self.diagonal[k] for k in self.dataset_ids},
            "gains": {f"{r}->{c}": g for (r, c), g in sorted(self.gains.items())},
        }


def merge_gain_matrix(datasets, provider) -> MergeGainMatrix:
    """All pairwise merge gains over community datasets (question texts).

    Embeddings are computed once per distinct question and reused across all
    pairs; rows are the reference dataset, columns the candidate.
    """
    datasets = list(datasets)
    if len(datasets) < 2:
        raise DiversityError("need at least 2 datasets")
    ids = [ds.community_id for ds in datasets]
    if len(set(ids)) != len(ids):
        raise DiversityError(f"duplicate community ids: {ids}")

    questions = {ds.community_id: _unique(ds.questions()) for ds in datasets}
    all_texts = _unique([q for qs in questions.values() for q in qs])
    vectors = {t: v.values for t, v in zip(all_texts, embed_batch(provider, all_texts))}

    def score_of(texts: list[str]) -> float:
        return vendi_score(cosine_kernel(np.stack([vectors[t] for t in texts]))).score

    diagonal = {cid: score_of(questions[cid]) for cid in ids}
    gains: dict[tuple[str, str], float] = {}
    for ref in ids:
        ref_set = set(questions[ref])
        for cand in ids:
            if cand == ref:
                continue
            union = questions[ref] + [q for q in questions[cand] if q not in ref_set]
            if len(union) == len(questions[ref]):
                gains[(ref, cand)] = 0.0
            else:
                gains[(ref, cand)] = (score_of(union) - diagonal[ref]) / diagonal[cand]
    return MergeGainMatrix(tuple(ids), diagonal, gains)


@dataclass(frozen=True)
class GainScatterRow:
    reference: str
    candidate: str
    diversity_gain: float
    accuracy_gain: float
    convention: str


def diversity_gain_vs_accuracy_gain(
    pairs,
    gain_matrix: MergeGainMatrix,
    joint_utilitarian,
    standalone_utilitarian,
    convention: str = "ratio",
) -> list[GainScatterRow]:
    """Rows relating each pair's diversity gain to its accuracy gain.

    ``joint_utilitarian`` maps (reference, candidate) to the joint run's
    utilitarian accuracy; ``standalone_utilitarian`` maps a community to its
    solo run's accuracy. Self-pairs are rejected; absent runs raise MissingRun.
    """
    rows = []
    for ref, cand in pairs:
        if ref == cand:
            raise MissingRun(f"self-pair ({ref!r}, {cand!r}) is not a valid combination")
        if (ref, cand) not in joint_utilitarian:
            raise MissingRun(f"missing joint run for ({ref!r}, {cand!r})")
        if cand not in standalone_utilitarian:
            raise MissingRun(f"missing standalone run for {cand!r}")
        rows.append(
            GainScatterRow(
                reference=ref,
                candidate=cand,
                diversity_gain=gain_matrix.value(ref, cand),
                accuracy_gain=accuracy_gain(
                    joint_utilitarian[(ref, cand)],
                    standalone_utilitarian[cand],
                    convention,
                ),
                convention=convention,
            )
        )
    return rows
