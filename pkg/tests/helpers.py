import numpy as np

from app.models.lp import LpProblem
from app.models.request import VirtualLink, VirtualNode, VnRequest


def make_request(demands, links=(), request_id=0, value=None):
    """VN request from a demand list and (source, target, demand) triples"""
    return VnRequest(
        id=request_id,
        vnodes=tuple(VirtualNode(demand=d) for d in demands),
        vlinks=tuple(VirtualLink(source=a, target=b, demand=bw) for a, b, bw in links),
        value=float(sum(demands)) if value is None else value,
    )


def make_problem(c, A=None, b=None, lower=None, upper=None, integer=False):
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    A = np.zeros((0, n)) if A is None else np.asarray(A, dtype=float)
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float)
    return LpProblem(
        c=c,
        A=A,
        b=b,
        lower=np.zeros(n) if lower is None else lower,
        upper=np.ones(n) if upper is None else upper,
        integer=np.full(n, bool(integer)),
    )


def random_lp(rng, n_vars, n_rows, integer=False):
    """Bounded variables and b >= 0, so x = 0 is always feasible"""
    A = rng.integers(-3, 6, size=(n_rows, n_vars)).astype(float)
    b = rng.integers(0, 10, size=n_rows).astype(float)
    c = rng.integers(-4, 10, size=n_vars).astype(float)
    return make_problem(c, A, b, integer=integer)
