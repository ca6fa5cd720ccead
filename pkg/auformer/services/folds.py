"""
Subject-exclusive fold assignment
"""

from collections import Counter
from dataclasses import dataclass

from auformer.errors import ConfigurationError
from auformer.ops.prng import SplitMix64, derive_seed


@dataclass(frozen=True)
class FoldSpec:
    """
    Attributes:
        k (int): Number of folds
        assignment (dict): subject id -> fold index
    """

    k: int
    assignment: dict

    def subjects_in(self, fold):
        return sorted(s for s, f in self.assignment.items() if f == fold)

    def split(self, subjects, test_fold):
        """
        Row indices of the training and test folds

        Args:
            subjects (list): Subject id per row
            test_fold (int): Held-out fold

        Returns:
            tuple: (train indices, test indices)
        """
        if not 0 <= test_fold < self.k:
            raise ConfigurationError(f"test_fold {test_fold} out of range for {self.k} folds")
        train, test = [], []
        for index, subject in enumerate(subjects):
            (test if self.assignment[int(subject)] == test_fold else train).append(index)
        return train, test


def subject_folds(manifest, k=3, seed=0):
    """
    Greedy largest-first partition of subjects into k folds balanced by sample count

    Subjects with equal counts are ordered by a seeded shuffle; each subject goes
    to the currently smallest fold (lowest index on ties).

    Args:
        manifest (Manifest): Dataset rows
        k (int): Number of folds
        seed (int): Tie-break seed

    Returns:
        FoldSpec: Subject assignment

    Raises:
        ConfigurationError: If there are fewer subjects than folds
    """
    counts = Counter(manifest.subjects)
    if k < 1 or len(counts) < k:
        raise ConfigurationError(f"Cannot split {len(counts)} subjects into {k} folds")

    subjects = sorted(counts)
    shuffled = [subjects[i] for i in SplitMix64(derive_seed(seed, "folds")).permutation(len(subjects))]
    ordered = sorted(shuffled, key=lambda s: -counts[s])

    sizes = [0] * k
    assignment = {}
    for subject in ordered:
        fold = sizes.index(min(sizes))
        assignment[subject] = fold
        sizes[fold] += counts[subject]
    return FoldSpec(k=k, assignment=assignment)
