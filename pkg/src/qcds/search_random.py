"""
Random search with similarity-capped pools and successive halving.

Every stage retrains the surviving designs from scratch (same per-design
seed) for the stage's epoch count and keeps the best fraction by
validation loss.  Ties go to the earlier pool index.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import spearmanr

from .data import Dataset, Split
from .design import Design, random_design, symmetric_similarity
from .errors import ConfigurationError
from .trainer import TrainConfig, train

log = logging.getLogger(__name__)


@dataclass
class TrialRecord:
    design: Design
    epochs_trained: int
    val_loss: float
    val_acc: float
    rank: int = 0
    seed: int = 0
    test_loss: Optional[float] = None
    test_acc: Optional[float] = None
    pool_index: int = -1
    theta: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass
class StageReport:
    epochs: int
    n_in: int
    n_kept: int
    rank_correlation: Optional[float]


@dataclass
class HalvingResult:
    records: List[TrialRecord]
    stages: List[StageReport]
    stop_reason: str


def trial_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1)[0])


def generate_pool(size: int, max_similarity: float, rng: np.random.Generator,
                  n_qubits: int, n_layers: int, max_attempts: Optional[int] = None) -> List[Design]:
    """Rejection-sample designs whose pairwise similarity stays <= max_similarity."""
    if not 0 < max_similarity <= 1:
        raise ConfigurationError("max_similarity must be in (0, 1]")
    budget = max_attempts if max_attempts is not None else 100 * size
    pool: List[Design] = []
    attempts = 0
    while len(pool) < size and attempts < budget:
        attempts += 1
        cand = random_design(rng, n_qubits, n_layers)
        if max_similarity < 1 and any(symmetric_similarity(cand, d) > max_similarity for d in pool):
            continue
        pool.append(cand)
    if len(pool) < size:
        log.warning("pool underfull: %d of %d designs after %d attempts", len(pool), size, attempts)
    return pool


def _run_trial(args):
    design, dataset, split, config, theta0 = args
    result = train(design, dataset, split, config, theta0=theta0)
    final = result.history.final
    return final.val_loss, final.val_acc, final.test_loss, final.test_acc, result.theta


def run_trials(jobs, workers: int = 1):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_run_trial, jobs))
    return [_run_trial(j) for j in jobs]


def _rank(records: List[TrialRecord]) -> List[TrialRecord]:
    ordered = sorted(records, key=lambda r: (r.val_loss, r.pool_index))
    for k, r in enumerate(ordered, start=1):
        r.rank = k
    return ordered


def halving_search(pool: Sequence[Design], schedule: Sequence[Tuple[int, float]],
                   final_epochs: int, dataset: Dataset, split: Split, config: TrainConfig,
                   master_seed: int = 0, target_survivors: Optional[int] = None,
                   max_epoch_budget: Optional[int] = None,
                   rank_corr_threshold: Optional[float] = 0.9,
                   resume: bool = False, workers: int = 1) -> HalvingResult:
    if not schedule:
        raise ConfigurationError("halving schedule must be non-empty")
    for epochs, keep in schedule:
        if epochs < 1 or not 0 < keep <= 1:
            raise ConfigurationError(f"bad schedule entry ({epochs}, {keep})")
    if len(split.val) == 0:
        raise ConfigurationError("design search needs a validation split")

    alive = [TrialRecord(d, 0, math.inf, 0.0, seed=trial_seed(master_seed, i), pool_index=i)
             for i, d in enumerate(pool)]
    stages: List[StageReport] = []
    prev_loss = None
    spent = 0
    stop_reason = "schedule exhausted"

    def evaluate_all(records, epochs):
        jobs = []
        for r in records:
            cfg = replace(config, epochs=epochs, seed=r.seed)
            jobs.append((r.design, dataset, split, cfg, r.theta if resume else None))
        for r, (vl, va, tl, ta, theta) in zip(records, run_trials(jobs, workers)):
            r.val_loss, r.val_acc, r.test_loss, r.test_acc = vl, va, tl, ta
            r.theta = theta
            r.epochs_trained = r.epochs_trained + epochs if resume else epochs

    for epochs, keep in schedule:
        evaluate_all(alive, epochs)
        spent += epochs
        corr = None
        if prev_loss is not None and len(alive) > 1:
            before = [prev_loss[r.pool_index] for r in alive]
            after = [r.val_loss for r in alive]
            corr = float(spearmanr(before, after).statistic)
        prev_loss = {r.pool_index: r.val_loss for r in alive}
        n_in = len(alive)
        n_keep = min(n_in, max(1, math.ceil(n_in * keep - 1e-9)))
        alive = sorted(_rank(alive)[:n_keep], key=lambda r: r.pool_index)
        stages.append(StageReport(epochs, n_in, n_keep, corr))
        log.info("stage %d epochs: %d -> %d survivors (rank corr %s)", epochs, n_in, n_keep, corr)
        if target_survivors is not None and len(alive) <= target_survivors:
            stop_reason = "target survivor count reached"
            break
        if max_epoch_budget is not None and spent >= max_epoch_budget:
            stop_reason = "epoch budget reached"
            break
        if rank_corr_threshold is not None and corr is not None and corr >= rank_corr_threshold:
            stop_reason = "rankings stable"
            break

    evaluate_all(alive, final_epochs)
    return HalvingResult(_rank(alive), stages, stop_reason)
