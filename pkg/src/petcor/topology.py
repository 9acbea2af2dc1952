"""Communication graph, pinned Laplacian and the observer sampling bound.

Node 0 is the leader, nodes ``1..N`` are followers. ``a[i, j] > 0`` means
follower ``i`` receives from node ``j``.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, SolvabilityError, StructuralError


@dataclass(frozen=True)
class CommGraph:
    """Directed, weighted leader-follower graph with per-pair sampling periods.

    Parameters
    ----------
    adjacency : array_like, shape (N+1, N+1)
        Non-negative weights; row 0 (the leader) must be zero.
    periods : dict[(int, int), float]
        Sampling period of every receiving pair ``(i, j)`` with ``a[i, j] > 0``
        and of every self pair ``(i, i)``, ``i = 1..N``.
    """

    adjacency: np.ndarray
    periods: dict

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 2:
            raise ContractViolation(f"adjacency must be (N+1)x(N+1) with N >= 1, got {a.shape}")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ContractViolation("adjacency weights must be finite and non-negative")
        if np.any(a[0] != 0):
            raise ContractViolation("the leader (node 0) cannot receive")
        if np.any(np.diag(a) != 0):
            raise ContractViolation("self-loops are expressed through self periods, not weights")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

        periods = {(int(i), int(j)): float(T) for (i, j), T in dict(self.periods).items()}
        N = a.shape[0] - 1
        for i in range(1, N + 1):
            needed = [(i, i)] + [(i, j) for j in range(N + 1) if a[i, j] > 0]
            for pair in needed:
                if pair not in periods:
                    raise ContractViolation(f"missing sampling period for pair {pair}")
        for pair, T in periods.items():
            if not (T > 0 and math.isfinite(T)):
                raise ContractViolation(f"sampling period for pair {pair} must be positive")
        object.__setattr__(self, "periods", periods)

    @property
    def N(self):
        return self.adjacency.shape[0] - 1

    def neighbors(self, i):
        """Senders ``j`` (possibly 0) that follower ``i`` listens to."""
        return [j for j in range(self.N + 1) if self.adjacency[i, j] > 0]

    def pairs(self):
        """All receiving pairs ``(i, j)``, self pairs included, in a fixed order."""
        out = []
        for i in range(1, self.N + 1):
            out.append((i, i))
            out.extend((i, j) for j in self.neighbors(i))
        return out

    @classmethod
    def from_edges(cls, N, edges, self_periods):
        """Build a graph from ``(sender, receiver, weight, period)`` tuples."""
        a = np.zeros((N + 1, N + 1))
        periods = {}
        for sender, receiver, weight, period in edges:
            a[receiver, sender] = weight
            periods[(receiver, sender)] = period
        for i, T in self_periods.items():
            periods[(i, i)] = T
        return cls(a, periods)


def has_spanning_tree(g):
    """True iff every follower is reachable from the leader along edges."""
    a = g.adjacency
    seen = {0}
    queue = deque([0])
    while queue:
        j = queue.popleft()
        for i in np.nonzero(a[:, j] > 0)[0]:
            i = int(i)
            if i not in seen:
                seen.add(i)
                queue.append(i)
    return len(seen) == g.N + 1


def h_matrix(g):
    """Pinned follower Laplacian ``H`` (N x N).

    ``H[i, i] = sum_j a[i, j]`` over all nodes including the leader and
    ``H[i, j] = -a[i, j]`` between followers.
    """
    if not has_spanning_tree(g):
        raise StructuralError("graph has no directed spanning tree rooted at the leader")
    a = g.adjacency
    H = -a[1:, 1:].copy()
    H[np.diag_indices(g.N)] = a[1:, :].sum(axis=1)
    return H


def spectral_norm(A, tol=1e-12, max_iter=10_000):
    """Largest singular value by power iteration on ``A^T A``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A.T @ A
    n = B.shape[0]
    if not np.any(B):
        return 0.0
    # deterministic start with no symmetry that could hide a direction
    x = 1.0 + np.arange(n) / (n + 1.0)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = B @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            # start vector in the null space; restart on a basis vector
            x = np.zeros(n)
            x[int(np.argmax(np.abs(B).sum(axis=0)))] = 1.0
            continue
        x = y / ny
        if abs(ny - lam) <= tol * ny:
            lam = ny
            break
        lam = ny
    return math.sqrt(lam)


def lyapunov_Q(H, n_v):
    """Solve ``Q A1 + A1^T Q = 2 I`` with ``A1 = H kron I_{n_v}``.

    The equation is vectorised (column-major) into
    ``(A1^T kron I + I kron A1^T) vec(Q) = vec(2 I)`` and solved densely.
    """
    A1 = np.kron(np.asarray(H, dtype=float), np.eye(n_v))
    eig = np.linalg.eigvals(A1)
    if np.any(eig.real <= 0):
        raise SolvabilityError("A1 is not positively stable; QA1 + A1^T Q = 2I has no PD solution")
    n = A1.shape[0]
    I = np.eye(n)
    L = np.kron(A1.T, I) + np.kron(I, A1.T)
    rhs = (2.0 * I).reshape(-1, order="F")
    Q = np.linalg.solve(L, rhs).reshape(n, n, order="F")
    return 0.5 * (Q + Q.T)


@dataclass(frozen=True)
class SamplingBound:
    M: float
    M1: float
    M2: float
    M3: float


def max_sampling_bound(g, n_v):
    """Observer sampling bound ``M = min(M1, M2, M3)``; the observer is
    guaranteed to converge when ``kappa * T <= M``."""
    H = h_matrix(g)
    N = g.N
    I = np.eye(n_v)
    A1 = np.kron(H, I)
    Q = lyapunov_Q(H, n_v)
    norms_A = []
    norms_QA = []
    for i in range(N):
        Hi = np.zeros_like(H)
        Hi[i] = H[i]
        Ai1 = np.kron(Hi, I)
        norms_A.append(spectral_norm(Ai1) ** 2)
        norms_QA.append(spectral_norm(Q @ Ai1) ** 2)
    M1 = 1.0 / (8 * (2 * N + 5) * spectral_norm(A1) ** 2)
    M2 = 1.0 / (3 * N * sum(norms_QA))
    M3 = math.sqrt(1.0 / (3 * (2 * N + 5) * sum(norms_A)))
    return SamplingBound(min(M1, M2, M3), M1, M2, M3)


def kappa_T(g, kappa1, kappa2):
    """``kappa * T`` with ``kappa = max(kappa1, kappa2)`` and ``T`` the largest
    period among follower pairs (leader links excluded)."""
    T = max(p for (i, j), p in g.periods.items() if j != 0)
    return max(kappa1, kappa2) * T
