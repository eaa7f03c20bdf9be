"""Successive-shortest-path min-cost flow on a dense bipartite transport graph.

Flows are integers; costs are float64. Node potentials keep every residual
reduced cost non-negative so each augmenting path comes from a dense
O((n + m)^2) Dijkstra.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def ssp_transport(supply, demand, cost):
    n, m = cost.shape
    flow = np.zeros((n, m), dtype=np.int64)
    pot_s = np.zeros(n)
    pot_t = np.zeros(m)
    rem_s = supply.copy()
    rem_t = demand.copy()
    left = rem_s.sum()

    dist_s = np.empty(n)
    dist_t = np.empty(m)
    done_s = np.empty(n, dtype=np.bool_)
    done_t = np.empty(m, dtype=np.bool_)
    prev_s = np.empty(n, dtype=np.int64)  # sink reached through a backward arc
    prev_t = np.empty(m, dtype=np.int64)  # source feeding this sink

    n_aug = 0
    while left > 0:
        for i in range(n):
            dist_s[i] = 0.0 if rem_s[i] > 0 else np.inf
            done_s[i] = False
            prev_s[i] = -1
        for j in range(m):
            dist_t[j] = np.inf
            done_t[j] = False
            prev_t[j] = -1

        target = -1
        while True:
            best = np.inf
            bi = -1
            is_src = True
            for i in range(n):
                if not done_s[i] and dist_s[i] < best:
                    best = dist_s[i]
                    bi = i
                    is_src = True
            for j in range(m):
                if not done_t[j] and dist_t[j] < best:
                    best = dist_t[j]
                    bi = j
                    is_src = False
            if bi < 0:
                break
            if is_src:
                i = bi
                done_s[i] = True
                base = dist_s[i] + pot_s[i]
                for j in range(m):
                    if done_t[j]:
                        continue
                    rc = cost[i, j] + base - pot_t[j]
                    if rc < best:
                        rc = best
                    if rc < dist_t[j]:
                        dist_t[j] = rc
                        prev_t[j] = i
            else:
                j = bi
                done_t[j] = True
                if rem_t[j] > 0:
                    target = j
                    break
                base = dist_t[j] + pot_t[j]
                for i in range(n):
                    if done_s[i] or flow[i, j] <= 0:
                        continue
                    rc = base - cost[i, j] - pot_s[i]
                    if rc < best:
                        rc = best
                    if rc < dist_s[i]:
                        dist_s[i] = rc
                        prev_s[i] = j

        if target < 0:
            return flow, pot_s, pot_t, -1

        d = dist_t[target]
        for i in range(n):
            pot_s[i] += dist_s[i] if dist_s[i] < d else d
        for j in range(m):
            pot_t[j] += dist_t[j] if dist_t[j] < d else d

        # bottleneck along the path, walking back from the target sink
        amount = rem_t[target]
        j = target
        while True:
            i = prev_t[j]
            jb = prev_s[i]
            if jb < 0:
                if rem_s[i] < amount:
                    amount = rem_s[i]
                break
            if flow[i, jb] < amount:
                amount = flow[i, jb]
            j = jb

        j = target
        while True:
            i = prev_t[j]
            flow[i, j] += amount
            jb = prev_s[i]
            if jb < 0:
                rem_s[i] -= amount
                break
            flow[i, jb] -= amount
            j = jb
        rem_t[target] -= amount
        left -= amount
        n_aug += 1

    return flow, pot_s, pot_t, n_aug
