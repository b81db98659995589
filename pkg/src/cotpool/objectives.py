"""Strategic objectives over per-community evaluation results.

Three views of one coalition's outcome: utilitarian (weighted mean accuracy),
altruistic (minimum accuracy, protecting the worst-off community), and greedy
(a community's own-test accuracy change from joining versus training alone).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

WEIGHT_TOLERANCE = 1e-9


class ObjectiveError(Exception):
    pass


class KeyMismatch(ObjectiveError):
    pass


class BadWeights(ObjectiveError):
    pass


class EmptyMap(ObjectiveError):
    pass


class CommunityMismatch(ObjectiveError):
    pass


class DivisionByZeroStandalone(ObjectiveError):
    pass


class MissingRun(ObjectiveError):
    """A required run (joint or standalone baseline) has no recorded result."""


def utilitarian(accs: Mapping[str, float], weights: Mapping[str, float]) -> float:
    """Weighted mean accuracy. Weights must be nonnegative and sum to 1.

    Summation runs over sorted keys, so the value is invariant under any
    consistent reordering of the two maps.
    """
    if not accs:
        raise EmptyMap("no accuracies")
    if set(accs) != set(weights):
        raise KeyMismatch(f"accs keys {sorted(accs)} != weight keys {sorted(weights)}")
    total = 0.0
    for key in sorted(weights):
        if weights[key] < 0.0:
            raise BadWeights(f"negative weight for {key!r}: {weights[key]}")
        total += weights[key]
    if abs(total - 1.0) > WEIGHT_TOLERANCE:
        raise BadWeights(f"weights sum to {total}, expected 1")
    return sum(accs[key] * weights[key] for key in sorted(accs))


def altruistic(accs: Mapping[str, float]) -> float:
    """Minimum accuracy across participating communities."""
    if not accs:
        raise EmptyMap("no accuracies")
    return min(accs.values())


def equal_weights(keys) -> dict[str, float]:
    keys = list(keys)
    if not keys:
        raise EmptyMap("no keys")
    return {k: 1.0 / len(keys) for k in keys}


def size_weights(sizes: Mapping[str, int]) -> dict[str, float]:
    """Weights proportional to evaluation-set sizes (pooled-accuracy weighting)."""
    if not sizes:
        raise EmptyMap("no sizes")
    total = sum(sizes.values())
    if total <= 0:
        raise BadWeights("total evaluation size is zero")
    return {k: sizes[k] / total for k in sizes}


@dataclass(frozen=True)
class ObjectiveReport:
    """Per-community accuracies plus both collective objectives for one run."""

    run_id: str
    per_community_accuracy: dict[str, float]
    weights: dict[str, float]
    utilitarian: float
    altruistic: float


def make_report(
    run_id: str,
    accuracies: Mapping[str, float],
    eval_sizes: Mapping[str, int] | None = None,
    weighting: str = "size",
) -> ObjectiveReport:
    """Aggregate per-community accuracies into an ObjectiveReport.

    ``weighting`` is "size" (eval-set-size proportions; requires eval_sizes)
    or "equal".
    """
    if weighting == "size":
        if eval_sizes is None:
            raise BadWeights("size weighting requires eval_sizes")
        weights = size_weights({k: eval_sizes[k] for k in accuracies})
    elif weighting == "equal":
        weights = equal_weights(accuracies)
    else:
        raise BadWeights(f"unknown weighting {weighting!r}")
    return ObjectiveReport(
        run_id=run_id,
        per_community_accuracy=dict(accuracies),
        weights=weights,
        utilitarian=utilitarian(accuracies, weights),
        altruistic=altruistic(accuracies),
    )


@dataclass(frozen=True)
class GreedyBenefit:
    reference_community: str
    added_community: str
    joint_accuracy: float
    solo_accuracy: float
    benefit: float


def greedy_benefit(joint, solo, added_community: str = "") -> GreedyBenefit:
    """Own-test accuracy change from joint training versus training alone.

    Both results must be evaluations of the same reference community's test
    split; ``benefit = joint.accuracy - solo.accuracy`` (negative means the
    coalition hurt the reference community).
    """
    if joint.community_id != solo.community_id:
        raise CommunityMismatch(
            f"joint is for {joint.community_id!r}, solo for {solo.community_id!r}"
        )
    return GreedyBenefit(
        reference_community=joint.community_id,
        added_community=added_community,
        joint_accuracy=joint.accuracy,
        solo_accuracy=solo.accuracy,
        benefit=joint.accuracy - solo.accuracy,
    )


def accuracy_gain(
    joint_utilitarian: float, standalone_added: float, convention: str = "ratio"
) -> float:
    """Joint utilitarian performance relative to the added community alone.

    "ratio" divides, "difference" subtracts. Callers record the convention
    alongside emitted values so the two are never conflated.
    """
    if convention == "ratio":
        if standalone_added <= 0.0:
            raise DivisionByZeroStandalone(
                f"standalone accuracy {standalone_added} not usable as a ratio base"
            )
        return joint_utilitarian / standalone_added
    if convention == "difference":
        return joint_utilitarian - standalone_added
    raise ValueError(f"unknown convention {convention!r}")


@dataclass(frozen=True)
class BenefitMatrix:
    """Greedy benefits for all ordered community pairs; diagonal is absent."""

    communities: tuple[str, ...]
    cells: dict[tuple[str, str], GreedyBenefit]

    def benefit(self, reference: str, added: str) -> float:
        return self.cells[(reference, added)].benefit


def benefit_matrix(
    communities,
    joint_accuracy: Mapping[tuple[str, str], float],
    solo_accuracy: Mapping[str, float],
) -> BenefitMatrix:
    """Assemble the (reference, added) benefit matrix from run accuracies.

    ``joint_accuracy[(ref, added)]`` is the joint {ref, added} run's accuracy
    on ref's own test split; ``solo_accuracy[ref]`` is ref's standalone run on
    the same split. Missing entries raise MissingRun naming the run.
    """
    communities = tuple(communities)
    cells: dict[tuple[str, str], GreedyBenefit] = {}
    for ref in communities:
        if ref not in solo_accuracy:
            raise MissingRun(f"missing standalone run for {ref!r}")
        for added in communities:
            if added == ref:
                continue
            if (ref, added) not in joint_accuracy:
                raise MissingRun(f"missing joint run for ({ref!r}, {added!r})")
            joint = joint_accuracy[(ref, added)]
            solo = solo_accuracy[ref]
            cells[(ref, added)] = GreedyBenefit(
                reference_community=ref,
                added_community=added,
                joint_accuracy=joint,
                solo_accuracy=solo,
                benefit=joint - solo,
            )
    return BenefitMatrix(communities, cells)
