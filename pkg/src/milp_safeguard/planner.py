"""Reachability-guided RRT plus Dijkstra waypoint extraction.

Samples are steered by clipping into the parent's one-step reachable box
(interval propagation of a point state over the whole control set); the
stored child node is the exact model image of the best control witness,
so every tree edge is a dynamically exact one-step transition.  Path
extraction runs Dijkstra over the stored edges with l1 weights.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from milp_safeguard.nn_model import ReluNetwork, forward, forward_batch, \
    output_bounds
from milp_safeguard.sets import Hypercube, UnsafeRegion, inflate, intersect


class PlanFailure(RuntimeError):
    """RRT exhausted its iteration budget without connecting the goal."""


class NoPath(RuntimeError):
    """The requested target is not connected in the tree."""


@dataclass
class PlanTree:
    """Nodes, directed edges with control witnesses, and goal hookup."""

    nodes: list = field(default_factory=list)
    edges: list = field(default_factory=list)   # (i, j, u_witness)
    goal: np.ndarray | None = None
    goal_parent: int = -1                        # node from which goal is reachable
    goal_control: np.ndarray | None = None

    def add_node(self, x) -> int:
        self.nodes.append(np.asarray(x, dtype=float))
        return len(self.nodes) - 1

    def add_edge(self, i: int, j: int, u):
        self.edges.append((i, j, np.asarray(u, dtype=float)))


def reachable_box(net: ReluNetwork, x, U: Hypercube) -> Hypercube:
    """One-step reachable box from the point state x over all of U."""
    x = np.asarray(x, dtype=float)
    lo, hi = output_bounds(net, np.concatenate([x, U.lo]),
                           np.concatenate([x, U.hi]))
    return Hypercube(lo, hi)


def _witness_search(net, x_from, x_to, U: Hypercube, coarse: int = 9,
                    refine_rounds: int = 150):
    """Control minimizing the l1 residual |f(x_from, u) - x_to|.

    Coarse grid over U followed by a shrinking pattern search: each round
    evaluates all single-coordinate steps in one batched forward pass and
    either moves to the best or halves the step.
    """
    x_from = np.asarray(x_from, dtype=float)
    x_to = np.asarray(x_to, dtype=float)

    def residuals(us):
        Z = np.concatenate(
            [np.broadcast_to(x_from, (len(us), x_from.shape[0])), us], axis=1)
        return np.sum(np.abs(forward_batch(net, Z) - x_to), axis=1)

    axes = [np.linspace(U.lo[j], U.hi[j], coarse) for j in range(U.dim)]
    grids = np.meshgrid(*axes, indexing="ij")
    candidates = np.stack([g.ravel() for g in grids], axis=1)
    rs = residuals(candidates)
    best = int(np.argmin(rs))
    best_u, best_r = candidates[best].copy(), float(rs[best])
    span = (U.hi - U.lo) / (coarse - 1)
    steps = np.concatenate([-np.diag(span), np.diag(span)])
    for _ in range(refine_rounds):
        trial = np.clip(best_u + steps, U.lo, U.hi)
        rs = residuals(trial)
        best = int(np.argmin(rs))
        if rs[best] < best_r - 1e-15:
            best_r, best_u = float(rs[best]), trial[best].copy()
        else:
            span *= 0.5
            steps *= 0.5
            if np.max(span) < 1e-12:
                break
    return best_u, best_r


def edge_feasible(net: ReluNetwork, x_from, x_to, X: Hypercube, U: Hypercube,
                  unsafe: UnsafeRegion, residual_tol: float = 1e-6):
    """(feasible, control witness) for a one-step transition.

    x_to must lie inside the reachable box from x_from, inside X and
    outside every obstacle interior, and some control must reproduce it to
    within residual_tol (l1).
    """
    x_from = np.asarray(x_from, dtype=float)
    x_to = np.asarray(x_to, dtype=float)
    if not (X.contains(x_from) and X.contains(x_to)):
        return False, None
    if unsafe.contains_interior(x_to):
        return False, None
    if not reachable_box(net, x_from, U).contains(x_to, tol=1e-9):
        return False, None
    u, r = _witness_search(net, x_from, x_to, U)
    if r > residual_tol:
        return False, None
    return True, u


def rrt_build(net: ReluNetwork, X: Hypercube, U: Hypercube,
              unsafe: UnsafeRegion, x0, xg, seed: int = 0,
              max_iters: int = 10000, goal_bias: float = 0.1,
              clearance: float = 0.0, goal_tol=None) -> PlanTree:
    """Grow a reachability-guided RRT from x0 until xg becomes reachable.

    clearance > 0 additionally rejects candidate nodes closer than that
    distance to any obstacle, keeping waypoints trackable under the
    controller's uncertainty inflation.  goal_tol (componentwise, e.g. the
    model's prediction-error bound) inflates the reachable box in the goal
    test: for learned dynamics the model's exact one-step image almost
    never hits the goal point, but the true system is only guaranteed to
    land within that bound anyway.
    """
    x0 = np.asarray(x0, dtype=float)
    xg = np.asarray(xg, dtype=float)
    for name, x in (("x0", x0), ("xg", xg)):
        if not X.contains(x):
            raise ValueError(f"{name} outside the state feasible set")
        if unsafe.contains_interior(x):
            raise ValueError(f"{name} inside an obstacle")
    clear_vec = np.full(X.dim, clearance)
    inflated = UnsafeRegion(tuple(
        intersect(inflate(b, clear_vec), X) for b in unsafe))
    goal_tol = (np.zeros(X.dim) if goal_tol is None
                else np.atleast_1d(np.asarray(goal_tol, dtype=float)))

    rng = np.random.default_rng(seed)
    tree = PlanTree()
    tree.add_node(x0)
    nodes = [x0]

    def goal_connected(idx, x) -> bool:
        # Termination: the goal lies in the node's one-step reachable box
        # (inflated by the prediction-error allowance).
        if not inflate(reachable_box(net, x, U), goal_tol).contains(xg,
                                                                    tol=1e-9):
            return False
        u, _ = _witness_search(net, x, xg, U)
        tree.goal, tree.goal_parent, tree.goal_control = xg, idx, u
        return True

    # Check the trivial plan first: goal directly reachable from the start.
    if goal_connected(0, x0):
        return tree

    # Nearest-node scans dominate at scale; keep the nodes in a
    # preallocated array grown geometrically.
    node_arr = np.empty((256, X.dim))
    node_arr[0] = x0
    n_nodes = 1

    for _ in range(max_iters):
        x_rand = xg if rng.random() < goal_bias else X.sample(rng)
        dists = np.sum(np.abs(node_arr[:n_nodes] - x_rand), axis=1)
        near_idx = int(np.argmin(dists))
        near = nodes[near_idx]
        rbox = intersect(reachable_box(net, near, U), X)
        if rbox is None:
            continue
        candidate = np.clip(x_rand, rbox.lo, rbox.hi)
        if clearance > 0 and inflated.contains_interior(candidate):
            continue
        u, _ = _witness_search(net, near, candidate, U)
        # Snap the node onto the model image so that every edge is an exact
        # one-step transition; clipping alone would leave residual slack
        # that downstream tracking cannot realize.
        new = forward(net, np.concatenate([near, u]))
        if not X.contains(new):
            continue
        if unsafe.contains_interior(new):
            continue
        if clearance > 0 and inflated.contains_interior(new):
            continue
        new_idx = tree.add_node(new)
        tree.add_edge(near_idx, new_idx, u)
        nodes.append(new)
        if n_nodes == node_arr.shape[0]:
            node_arr = np.vstack([node_arr, np.empty_like(node_arr)])
        node_arr[n_nodes] = new
        n_nodes += 1
        if goal_connected(new_idx, new):
            return tree
    raise PlanFailure(f"no goal connection after {max_iters} iterations")


def shortest_path(tree: PlanTree, x0=None, xg=None) -> list:
    """Dijkstra over tree edges (l1 weights) from the root to the goal.

    Returns the waypoint list root -> ... -> goal-connecting node, with
    the goal appended.
    """
    if tree.goal is None or tree.goal_parent < 0:
        raise NoPath("tree is not goal-connected")
    n = len(tree.nodes)
    adj = [[] for _ in range(n)]
    for i, j, _ in tree.edges:
        w = float(np.sum(np.abs(tree.nodes[i] - tree.nodes[j])))
        adj[i].append((j, w))
    dist = [np.inf] * n
    prev = [-1] * n
    dist[0] = 0.0
    heap = [(0.0, 0)]
    while heap:
        d, i = heapq.heappop(heap)
        if d > dist[i]:
            continue
        for j, w in adj[i]:
            nd = d + w
            if nd < dist[j]:
                dist[j] = nd
                prev[j] = i
                heapq.heappush(heap, (nd, j))
    target = tree.goal_parent
    if not np.isfinite(dist[target]):
        raise NoPath("goal-connecting node unreachable from the root")
    order = []
    i = target
    while i != -1:
        order.append(i)
        i = prev[i]
    order.reverse()
    return [tree.nodes[i] for i in order] + [tree.goal]


def export_tree_csv(tree: PlanTree, nodes_path, edges_path):
    """Plain CSV node and edge lists for plotting."""
    with open(nodes_path, "w") as f:
        dim = tree.nodes[0].shape[0] if tree.nodes else 0
        f.write("node," + ",".join(f"x{j}" for j in range(dim)) + "\n")
        for i, x in enumerate(tree.nodes):
            f.write(f"{i}," + ",".join(f"{v:.17g}" for v in x) + "\n")
    with open(edges_path, "w") as f:
        f.write("from,to\n")
        for i, j, _ in tree.edges:
            f.write(f"{i},{j}\n")
