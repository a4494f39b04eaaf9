import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, TypeVar

import numpy as np

from app.config import settings
from app.models.protocol import MessageKind

logger = logging.getLogger("app.services.subgradient")

T = TypeVar("T")

# (iteration, sender, receiver, kind, scalars)
MessageHook = Callable[[int, str, str, MessageKind, int], None]

MASTER = "master"


def agent_name(s: int) -> str:
    return f"agent{s}"


class SubproblemRunner:
    """Runs the k subproblems of one iteration, in order or on a thread pool

    Results always come back in partition order.
    """

    def __init__(self, parallel: Optional[bool] = None, workers: Optional[int] = None):
        self.parallel = settings.parallel_subproblems if parallel is None else parallel
        self.workers = workers or settings.subproblem_workers

    def map(self, solve: Callable[[int], T], k: int) -> List[T]:
        if not self.parallel or k < 2:
            return [solve(s) for s in range(k)]
        with ThreadPoolExecutor(max_workers=min(self.workers, k)) as pool:
            return list(pool.map(solve, range(k)))


def project_onto_simplex(v: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection of v onto {z >= 0, sum z = total}"""
    if total <= 0:
        return np.zeros_like(v, dtype=float)
    u = np.sort(v)[::-1]
    cumulative = np.cumsum(u) - total
    ranks = np.arange(1, v.shape[0] + 1)
    active = np.nonzero(u - cumulative / ranks > 0)[0]
    rho = active[-1] if active.size else 0
    theta = cumulative[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


def project_shares(shares: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Project every physical-node column of a (k, N_p) share matrix onto its simplex"""
    projected = np.empty_like(shares, dtype=float)
    for i in range(shares.shape[1]):
        projected[:, i] = project_onto_simplex(shares[:, i], float(h[i]))
    return projected


def relative_gap_reached(gap: float, reference: Optional[float], tolerance: float) -> bool:
    if reference is None or not np.isfinite(gap):
        return False
    return gap <= tolerance * max(abs(reference), 1.0)
