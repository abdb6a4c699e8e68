"""Graph helpers shared by the automaton and product code."""
from __future__ import annotations

from collections import deque
from typing import Iterable, Optional, Sequence


def tarjan_scc(n: int, succ: Sequence[Iterable[int]]) -> list[list[int]]:
    """Strongly connected components of the graph on 0..n-1.

    Iterative Tarjan; components come out in reverse topological order.
    """
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list[int] = []
    comps: list[list[int]] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, iter(succ[root]))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        while work:
            v, it = work[-1]
            pushed = False
            for w in it:
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, iter(succ[w])))
                    pushed = True
                    break
                if on_stack[w] and index[w] < low[v]:
                    low[v] = index[w]
            if pushed:
                continue
            work.pop()
            if work:
                u = work[-1][0]
                if low[v] < low[u]:
                    low[u] = low[v]
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(comp)
    return comps


def bfs_path(sources: Iterable[int], succ: Sequence[Iterable[int]], goal,
             allowed=None) -> Optional[list[int]]:
    """Shortest path (as a node list) from any source to a node satisfying
    `goal`, staying inside `allowed` when given."""
    parent: dict[int, int] = {}
    queue = deque()
    for s in sources:
        if s not in parent and (allowed is None or s in allowed):
            parent[s] = -1
            queue.append(s)
    while queue:
        v = queue.popleft()
        if goal(v):
            path = [v]
            while parent[path[-1]] != -1:
                path.append(parent[path[-1]])
            return path[::-1]
        for w in succ[v]:
            if w not in parent and (allowed is None or w in allowed):
                parent[w] = v
                queue.append(w)
    return None
