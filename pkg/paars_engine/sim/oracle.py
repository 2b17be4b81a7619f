"""
Ground truth from agent positions alone.

Nothing here reads the service: contacts come from a pairwise scan of the
block trajectories, and expected probabilities are recomputed from those
trajectories with the same model functions the server is configured with.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Set, Tuple

import numpy as np

from ..client.device import group_events
from ..contactstore.events import SECONDS_PER_DAY
from ..epi.mechanism import measure_mean_noise_variance, user_probability
from ..epi.models import ExposureModel, SheddingModel, exposure_score, shedding
from ..epi.pipeline import normalize_weights

logger = logging.getLogger(__name__)

RowRef = Tuple[int, int]  # (user, epoch)


@dataclass(frozen=True, order=True)
class Contact:
    epoch: int
    a: int
    b: int
    block: int


def colocations(blocks: np.ndarray) -> List[Contact]:
    """Brute-force scan: every user pair sharing a block in an epoch; blocks is (users, epochs)"""
    n_users = blocks.shape[0]
    contacts = []
    for a in range(n_users):
        for b in range(a + 1, n_users):
            for epoch in np.flatnonzero(blocks[a] == blocks[b]):
                contacts.append(Contact(int(epoch), a, b, int(blocks[a, epoch])))
    return sorted(contacts)


def contact_runs(contacts: Sequence[Contact]) -> Dict[Tuple[int, int], List[Tuple[int, int]]]:
    """(a, b) -> [(start_epoch, length)] over consecutive shared epochs"""
    runs: Dict[Tuple[int, int], List[Tuple[int, int]]] = {}
    for c in sorted(contacts, key=lambda c: (c.a, c.b, c.epoch)):
        pair_runs = runs.setdefault((c.a, c.b), [])
        if pair_runs and pair_runs[-1][0] + pair_runs[-1][1] == c.epoch:
            start, length = pair_runs[-1]
            pair_runs[-1] = (start, length + 1)
        else:
            pair_runs.append((c.epoch, 1))
    return runs


@dataclass
class OracleScores:
    values: Dict[RowRef, float]
    batch_size: Dict[RowRef, int]
    infected: Set[RowRef]

    def involved_users(self) -> Set[int]:
        return {u for u, _ in self.values}


def expected_row_values(
    blocks: np.ndarray,
    reports: Sequence[Tuple[int, int]],
    cell_size_m: float,
    tau_seconds: int,
    exposure: ExposureModel,
    shed: SheddingModel,
) -> OracleScores:
    """
    Noiseless probability of every row touched by the applied reports, in order.

    A report marks all of the reporter's epochs infected; co-located rows of
    other users that are not infected form events over consecutive epochs,
    and a later report overwrites an earlier value.
    """
    n_users, n_epochs = blocks.shape
    values: Dict[RowRef, float] = {}
    batch_size: Dict[RowRef, int] = {}
    infected: Set[RowRef] = set()
    distance_m = cell_size_m / 2

    for reporter, onset in reports:
        for epoch in range(n_epochs):
            infected.add((reporter, epoch))
            values[(reporter, epoch)] = 1.0
            batch_size.pop((reporter, epoch), None)

        peers_by_epoch: Dict[int, List[int]] = {}
        for epoch in range(n_epochs):
            peers = [
                v for v in range(n_users)
                if v != reporter and blocks[v, epoch] == blocks[reporter, epoch] and (v, epoch) not in infected
            ]
            if peers:
                peers_by_epoch[epoch] = peers

        runs: List[List[int]] = []
        for epoch in sorted(peers_by_epoch):
            if runs and runs[-1][-1] + 1 == epoch:
                runs[-1].append(epoch)
            else:
                runs.append([epoch])
        if not runs:
            continue

        weights = []
        for run in runs:
            days = max(0, ((run[0] - onset) * tau_seconds) // SECONDS_PER_DAY)
            weights.append(exposure_score(float(len(run) * tau_seconds), distance_m, exposure) * shedding(int(days), shed))
        raw = normalize_weights(weights)

        for run, p in zip(runs, raw):
            for epoch in run:
                for v in peers_by_epoch[epoch]:
                    values[(v, epoch)] = p
                    batch_size[(v, epoch)] = len(runs)

    return OracleScores(values, batch_size, infected)


def expected_user_probability(scored_epochs: Sequence[Tuple[int, float]], user: int, oracle: OracleScores) -> float:
    """Noiseless counterpart of the device's estimate, over the device's own event grouping"""
    groups = group_events(scored_epochs)
    if not groups:
        return 0.0
    return user_probability([oracle.values.get((user, g[0][0]), 0.0) for g in groups])


def noise_variance(scored_epochs: Sequence[Tuple[int, float]], user: int, oracle: OracleScores, alpha: float,
                   trials: int, rng: np.random.Generator) -> float:
    """Measured variance of (noisy - oracle) for one user: the mean of one Laplace draw per event the device sees"""
    groups = group_events(scored_epochs)
    if not groups or alpha == 0:
        return 0.0
    sizes = [n for n in (oracle.batch_size.get((user, g[0][0])) for g in groups) if n is not None]
    if not sizes:
        return 0.0
    # events the oracle never scored add no noise but still count in the mean
    return measure_mean_noise_variance(alpha, sizes, trials, rng) * (len(sizes) / len(groups)) ** 2
