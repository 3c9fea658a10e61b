"""Pure-Python graph kernels, used when the compiled extension is unavailable."""

from __future__ import annotations

import heapq
from collections import deque

import numpy as np


def brandes_betweenness(indptr: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Unnormalized undirected betweenness of a CSR graph, each unordered pair counted once."""
    n = len(indptr) - 1
    ptr = indptr.tolist()
    nbr = indices.tolist()
    adj = [nbr[ptr[v] : ptr[v + 1]] for v in range(n)]
    bc = [0.0] * n
    for s in range(n):
        sigma = [0.0] * n
        dist = [-1] * n
        sigma[s] = 1.0
        dist[s] = 0
        stack = []
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            dv = dist[v] + 1
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dv
                    queue.append(w)
                if dist[w] == dv:
                    sigma[w] += sigma[v]
        delta = [0.0] * n
        for w in reversed(stack[1:]):
            coeff = (1.0 + delta[w]) / sigma[w]
            dw = dist[w] - 1
            for v in adj[w]:
                if dist[v] == dw:
                    delta[v] += sigma[v] * coeff
            bc[w] += delta[w]
    return np.array(bc, dtype=np.float64) * 0.5


def avc_order(indptr: np.ndarray, indices: np.ndarray, initial: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Running greedy: take the max-weight node (smallest index on ties), decrement its live neighbours."""
    n = len(indptr) - 1
    ptr = indptr.tolist()
    nbr = indices.tolist()
    weight = [int(w) for w in initial]
    done = [False] * n
    heap = [(-w, v) for v, w in enumerate(weight)]
    heapq.heapify(heap)
    order, score = [], []
    while heap:
        negw, v = heapq.heappop(heap)
        if done[v] or -negw != weight[v]:
            continue
        done[v] = True
        order.append(v)
        score.append(weight[v])
        for u in nbr[ptr[v] : ptr[v + 1]]:
            if not done[u]:
                weight[u] -= 1
                heapq.heappush(heap, (-weight[u], u))
    return np.array(order, dtype=np.int64), np.array(score, dtype=np.int64)
