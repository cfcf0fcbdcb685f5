"""Tree-structured belief roadmap construction.

Two construction procedures share the same sampling stream: the plain one
appends every successful steering attempt, and the rewired one additionally
keeps a sample mirror of the plain tree, picks the cheapest incoming edge
among nearby nodes, and revises neighbor edges whenever routing through the
new node lowers their cost. Run with the same master seed, both produce the
same multiset of node means while the rewired tree's node covariances never
come out larger.
"""

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .beliefs import GaussianBelief
from .lifting import FeedbackPolicy, closed_loop_covariances, open_loop_covariance
from .mathutil import symmetrize

__all__ = [
    "SamplerConfig",
    "SamplingExhausted",
    "BeliefNode",
    "BeliefEdge",
    "RoadmapTree",
    "PlanResult",
    "voronoi_sample",
    "rand_mean_around",
    "near",
    "near_except_ancestors",
    "recompute_descendants",
    "build_baseline",
    "build_revise",
    "try_connect_goal",
    "extract_plan",
    "tree_to_dict",
    "tree_from_dict",
]

ROADMAP_SCHEMA = "beliefroadmap/roadmap-v1"


class SamplingExhausted(RuntimeError):
    """Raised when rejection sampling fails to find an in-bounds mean."""


@dataclass(frozen=True)
class SamplerConfig:
    """Node expansion sampler: annulus radii, velocity bound, workspace box."""

    r_min: float = 0.3
    r_max: float = 1.5
    v_max: float = 1.0
    workspace_lo: tuple = (0.0, 0.0)
    workspace_hi: tuple = (10.0, 10.0)
    r_near: float = 2.0
    max_attempts: int = 100

    def __post_init__(self):
        if not 0 <= self.r_min <= self.r_max:
            raise ValueError("need 0 <= r_min <= r_max")
        if self.r_near <= 0:
            raise ValueError("r_near must be positive")


class CountingRng:
    """Uniform-draw wrapper that records how many scalars were consumed."""

    def __init__(self, generator):
        self.generator = generator
        self.draws = 0

    def uniform(self, lo, hi, size=None):
        self.draws += int(np.prod(size)) if size is not None else 1
        return self.generator.uniform(lo, hi, size=size)


@dataclass
class BeliefNode:
    id: int
    belief: GaussianBelief
    parent_id: int | None = None
    incoming_edge_id: int | None = None
    child_ids: list = dc_field(default_factory=list)

    @property
    def position(self):
        return self.belief.mean[:2]


@dataclass
class BeliefEdge:
    id: int
    from_id: int
    to_id: int
    policy: FeedbackPolicy
    planned_terminal_cov: np.ndarray
    cost: float
    w_mean: np.ndarray
    w_cov: np.ndarray

    @classmethod
    def from_solution(cls, edge_id, from_id, to_id, solution):
        return cls(
            id=edge_id,
            from_id=from_id,
            to_id=to_id,
            policy=solution.policy,
            planned_terminal_cov=np.array(solution.terminal_cov),
            cost=float(solution.cost),
            w_mean=np.array(solution.disturbance.w_mean),
            w_cov=np.array(solution.disturbance.w_cov),
        )


class RoadmapTree:
    """Rooted tree of belief nodes connected by steering policies."""

    def __init__(self, root_belief, master_seed=None, config_echo=None):
        self.nodes = {}
        self.edges = {}
        self.root_id = 0
        self.master_seed = master_seed
        self.config_echo = dict(config_echo or {})
        self.sample_mirror = []
        self.sampling_draws = 0
        self._next_node_id = 0
        self._next_edge_id = 0
        self._add_root(root_belief)

    def _add_root(self, belief):
        node = BeliefNode(id=self._next_node_id, belief=belief)
        self.nodes[node.id] = node
        self._next_node_id += 1

    def add_node(self, belief, parent_id, solution):
        node = BeliefNode(id=self._next_node_id, belief=belief, parent_id=parent_id)
        self._next_node_id += 1
        edge = BeliefEdge.from_solution(self._next_edge_id, parent_id, node.id, solution)
        self._next_edge_id += 1
        node.incoming_edge_id = edge.id
        self.nodes[node.id] = node
        self.edges[edge.id] = edge
        self.nodes[parent_id].child_ids.append(node.id)
        return node.id

    def replace_incoming_edge(self, node_id, new_parent_id, solution):
        node = self.nodes[node_id]
        old_edge = self.edges.pop(node.incoming_edge_id)
        self.nodes[old_edge.from_id].child_ids.remove(node_id)
        edge = BeliefEdge.from_solution(self._next_edge_id, new_parent_id, node_id, solution)
        self._next_edge_id += 1
        self.edges[edge.id] = edge
        node.parent_id = new_parent_id
        node.incoming_edge_id = edge.id
        self.nodes[new_parent_id].child_ids.append(node_id)
        node.belief = GaussianBelief(node.belief.mean, solution.terminal_cov)

    def n_nodes(self):
        return len(self.nodes)

    def ancestors(self, node_id):
        out = []
        current = self.nodes[node_id].parent_id
        while current is not None:
            out.append(current)
            current = self.nodes[current].parent_id
        return out

    def sorted_nodes(self):
        return [self.nodes[i] for i in sorted(self.nodes)]

    def check_tree_invariant(self):
        """Edges form a root-connected acyclic tree with consistent links."""
        if len(self.edges) != len(self.nodes) - 1:
            raise AssertionError("edge count must be node count - 1")
        root = self.nodes[self.root_id]
        if root.parent_id is not None or root.incoming_edge_id is not None:
            raise AssertionError("root must have no parent")
        seen = set()
        stack = [self.root_id]
        while stack:
            nid = stack.pop()
            if nid in seen:
                raise AssertionError("cycle detected")
            seen.add(nid)
            for child in self.nodes[nid].child_ids:
                node = self.nodes[child]
                if node.parent_id != nid:
                    raise AssertionError("parent/child mismatch")
                edge = self.edges[node.incoming_edge_id]
                if edge.from_id != nid or edge.to_id != child:
                    raise AssertionError("edge endpoints inconsistent")
                if abs(edge.cost - float(np.linalg.eigvalsh(edge.planned_terminal_cov)[-1])) > 1e-9:
                    raise AssertionError("edge cost out of sync with planned covariance")
                stack.append(child)
        if seen != set(self.nodes):
            raise AssertionError("tree is not root-connected")


def voronoi_sample(means, rng, sampler):
    """Pick the index whose mean position is nearest a uniform workspace draw.

    Selection frequency follows each mean's Voronoi cell volume; ties go to
    the lowest index.
    """
    if len(means) == 0:
        raise ValueError("cannot sample from an empty node set")
    lo = np.asarray(sampler.workspace_lo)
    hi = np.asarray(sampler.workspace_hi)
    point = np.array([rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1])])
    positions = np.asarray([m[:2] for m in means])
    dists = np.linalg.norm(positions - point, axis=1)
    return int(np.argmin(dists))


def rand_mean_around(mean, rng, sampler):
    """Sample a query mean near a node: position in the annulus, velocities
    uniform in the bound, higher derivatives zero.

    Rejection-samples until the position lands inside the workspace; raises
    SamplingExhausted after ``max_attempts`` rejections.
    """
    mean = np.asarray(mean, dtype=float)
    lo = np.asarray(sampler.workspace_lo)
    hi = np.asarray(sampler.workspace_hi)
    for _ in range(sampler.max_attempts):
        radius = np.sqrt(rng.uniform(sampler.r_min**2, sampler.r_max**2))
        angle = rng.uniform(0.0, 2.0 * np.pi)
        pos = mean[:2] + radius * np.array([np.cos(angle), np.sin(angle)])
        if np.all(pos >= lo) and np.all(pos <= hi):
            out = np.zeros_like(mean)
            out[:2] = pos
            if mean.size >= 4:
                out[2] = rng.uniform(-sampler.v_max, sampler.v_max)
                out[3] = rng.uniform(-sampler.v_max, sampler.v_max)
            return out
    raise SamplingExhausted(f"no in-bounds sample after {sampler.max_attempts} attempts")


def near(tree, mu_q, r_near):
    """Ids of nodes whose mean position lies within r_near of the query."""
    p = np.asarray(mu_q, dtype=float)[:2]
    out = []
    for node in tree.sorted_nodes():
        if np.linalg.norm(node.position - p) <= r_near:
            out.append(node.id)
    return out

def near_except_ancestors(tree, node_id, r_near):
    """NEAR around an existing node, excluding it and its ancestor chain."""
    exclude = set(tree.ancestors(node_id))
    exclude.add(node_id)
    mu = tree.nodes[node_id].belief.mean
    return [i for i in near(tree, mu, r_near) if i not in exclude]


def recompute_descendants(tree, node_id, blk):
    """Propagate an updated node covariance through its subtree.

    Every descendant edge keeps its solved policy; covariances are pushed
    through the closed-loop algebra with the new parent covariance, updating
    node beliefs and edge costs. No structural change.
    """
    for child_id in sorted(tree.nodes[node_id].child_ids):
        child = tree.nodes[child_id]
        edge = tree.edges[child.incoming_edge_id]
        parent_cov = tree.nodes[node_id].belief.cov
        S = open_loop_covariance(blk, parent_cov, edge.w_cov)
        sigma_x, _ = closed_loop_covariances(blk, edge.policy.L, S)
        block = symmetrize(sigma_x[blk.x_slice(blk.N), blk.x_slice(blk.N)])
        edge.planned_terminal_cov = block
        edge.cost = float(np.linalg.eigvalsh(block)[-1])
        child.belief = GaussianBelief(child.belief.mean, block)
        recompute_descendants(tree, child_id, blk)


_WORKER_CONTROLLER = None


def _init_edge_worker(controller):
    # worker processes are forked once per executor; the controller rides
    # along in the initializer instead of being pickled with every task
    global _WORKER_CONTROLLER
    _WORKER_CONTROLLER = controller


def _solve_worker(args):
    mean, cov, goal = args
    return _WORKER_CONTROLLER(GaussianBelief(mean=mean, cov=cov), goal)


def make_edge_executor(controller, n_jobs):
    """Process pool whose workers hold the given edge controller."""
    if n_jobs <= 1:
        return None
    return ProcessPoolExecutor(
        max_workers=n_jobs, initializer=_init_edge_worker, initargs=(controller,)
    )


def _solve_batch(controller, tasks, executor):
    """Solve (belief, goal) steering tasks, preserving task order.

    When an executor is given it must have been created by
    :func:`make_edge_executor` for this same controller.
    """
    if not tasks:
        return []
    if executor is None:
        return [controller(belief, goal) for belief, goal in tasks]
    payload = [(b.mean, b.cov, g) for b, g in tasks]
    return list(executor.map(_solve_worker, payload))


def _sampling_streams(master_seed):
    """Derive the sampling stream and the auxiliary stream from one seed."""
    children = np.random.SeedSequence(master_seed).spawn(2)
    return (
        CountingRng(np.random.default_rng(children[0])),
        np.random.default_rng(children[1]),
    )


DEFAULT_ITERATION_FACTOR = 200


def _iteration_cap(n_nodes):
    return max(1000, DEFAULT_ITERATION_FACTOR * n_nodes)


def build_baseline(pi, initial, n_nodes, seed, sampler=None, on_insert=None, config_echo=None):
    """Grow a roadmap by plain forward expansion.

    Per iteration: pick a node by Voronoi bias, sample a query mean nearby,
    attempt the edge controller, and append node and edge on success, until
    the tree holds ``n_nodes`` nodes.
    """
    sampler = sampler or SamplerConfig()
    rng, _ = _sampling_streams(seed)
    tree = RoadmapTree(initial, master_seed=seed, config_echo=config_echo)
    iterations = 0
    cap = _iteration_cap(n_nodes)
    while tree.n_nodes() < n_nodes:
        iterations += 1
        if iterations > cap:
            raise RuntimeError(f"roadmap stalled after {cap} iterations")
        means = [node.belief.mean for node in tree.sorted_nodes()]
        k = voronoi_sample(means, rng, sampler)
        try:
            mu_q = rand_mean_around(means[k], rng, sampler)
        except SamplingExhausted:
            continue
        solution = pi(tree.nodes[k].belief, mu_q)
        if not solution.success:
            continue
        new_id = tree.add_node(
            GaussianBelief(mu_q, solution.terminal_cov), k, solution
        )
        if on_insert is not None:
            on_insert(tree, new_id)
    tree.sampling_draws = rng.draws
    return tree


def build_revise(
    pi,
    initial,
    n_nodes,
    seed,
    sampler=None,
    on_insert=None,
    config_echo=None,
    n_jobs=1,
    blk=None,
):
    """Grow a roadmap with minimum-cost edge selection and edge rewiring.

    Sampling decisions replay the plain construction exactly: node selection
    and query means are drawn against a mirror of the plain tree, and a probe
    solve from the mirror state gates each insertion. Accepted queries then
    get the cheapest incoming edge over nearby real-tree nodes, and neighbor
    edges are revised through the new node whenever that lowers their cost,
    with costs propagated down their subtrees.

    The probe edge itself stays a valid candidate from the sampled parent
    (its planned covariance only over-approximates when the real parent has
    shrunk), which keeps every inserted node at most as costly as its mirror
    twin regardless of solver noise.
    """
    blk = blk if blk is not None else getattr(pi, "blk", None)
    if blk is None:
        raise ValueError("build_revise needs the lifted block model for rewiring")
    sampler = sampler or SamplerConfig()
    rng, _ = _sampling_streams(seed)
    tree = RoadmapTree(initial, master_seed=seed, config_echo=config_echo)
    tree.sample_mirror = [initial]
    iterations = 0
    cap = _iteration_cap(n_nodes)
    executor = make_edge_executor(pi, n_jobs)
    try:
        while tree.n_nodes() < n_nodes:
            iterations += 1
            if iterations > cap:
                raise RuntimeError(f"roadmap stalled after {cap} iterations")
            mirror_means = [b.mean for b in tree.sample_mirror]
            k = voronoi_sample(mirror_means, rng, sampler)
            try:
                mu_q = rand_mean_around(mirror_means[k], rng, sampler)
            except SamplingExhausted:
                continue
            probe = pi(tree.sample_mirror[k], mu_q)
            if not probe.success:
                continue
            tree.sample_mirror.append(GaussianBelief(mu_q, probe.terminal_cov))

            # candidate parents: the sampled node and everything near the query
            candidate_ids = sorted(set(near(tree, mu_q, sampler.r_near)) | {k})
            options = [(probe.cost, k, probe, k)]
            tasks = []
            task_ids = []
            for cid in candidate_ids:
                belief = tree.nodes[cid].belief
                if cid == k and _same_belief(belief, tree.sample_mirror[k]):
                    continue  # identical to the probe solve
                tasks.append((belief, mu_q))
                task_ids.append(cid)
            for cid, solution in zip(task_ids, _solve_batch(pi, tasks, executor)):
                if solution.success:
                    options.append((solution.cost, cid, solution, cid))
            cost, parent_id, best, _ = min(options, key=lambda o: (o[0], o[1]))
            new_id = tree.add_node(GaussianBelief(mu_q, best.terminal_cov), parent_id, best)

            # neighbor rewiring through the new node
            neighbor_ids = near_except_ancestors(tree, new_id, sampler.r_near)
            new_belief = tree.nodes[new_id].belief
            rewire_tasks = [(new_belief, tree.nodes[i].belief.mean) for i in neighbor_ids]
            rewire_solutions = _solve_batch(pi, rewire_tasks, executor)
            for i, solution in zip(neighbor_ids, rewire_solutions):
                if not solution.success:
                    continue
                current = float(np.linalg.eigvalsh(tree.nodes[i].belief.cov)[-1])
                if solution.cost <= current:
                    tree.replace_incoming_edge(i, new_id, solution)
                    recompute_descendants(tree, i, blk)
            if on_insert is not None:
                on_insert(tree, new_id)
    finally:
        if executor is not None:
            executor.shutdown()
    tree.sampling_draws = rng.draws
    return tree


def _same_belief(a, b):
    return np.array_equal(a.mean, b.mean) and np.array_equal(a.cov, b.cov)


def try_connect_goal(tree, node_id, goal, pi):
    """Attempt a funnel-compatible edge from a node into a goal distribution.

    Accepts only a successful solve whose planned covariance fits inside the
    goal mouth: largest planned eigenvalue at most the goal's smallest
    (inclusive).
    """
    if goal.lambda_min() <= 0:
        raise ValueError("goal covariance must be positive definite")
    solution = pi(tree.nodes[node_id].belief, goal.mean)
    if not solution.success:
        return None
    if solution.cost <= goal.lambda_min():
        return solution
    return None


@dataclass
class PlanResult:
    """Edge chain from the root to a target, in execution order."""

    node_ids: list
    edges: list
    terminal_mean: np.ndarray
    terminal_cov: np.ndarray

    @property
    def total_steps(self):
        n = self.terminal_mean.size
        return sum(edge.policy.x_mean.size // n - 1 for edge in self.edges)

    def __post_init__(self):
        for first, second in zip(self.edges, self.edges[1:]):
            if first.to_id != second.from_id:
                raise ValueError("plan edges do not chain")


def extract_plan(tree, node_id, goal_solution=None):
    """Walk the parent chain to the root and reverse it; optionally append a
    goal-attachment edge solved from the target node."""
    if node_id not in tree.nodes:
        raise ValueError(f"node {node_id} not in tree")
    chain = [node_id]
    chain.extend(tree.ancestors(node_id))
    chain.reverse()
    edges = [
        tree.edges[tree.nodes[nid].incoming_edge_id]
        for nid in chain[1:]
    ]
    if goal_solution is not None:
        edges = edges + [
            BeliefEdge.from_solution(-1, node_id, -1, goal_solution)
        ]
        terminal_mean = np.array(goal_solution.terminal_mean)
        terminal_cov = np.array(goal_solution.terminal_cov)
    elif edges:
        terminal_mean = np.array(tree.nodes[node_id].belief.mean)
        terminal_cov = np.array(tree.nodes[node_id].belief.cov)
    else:
        terminal_mean = np.array(tree.nodes[node_id].belief.mean)
        terminal_cov = np.array(tree.nodes[node_id].belief.cov)
    return PlanResult(
        node_ids=chain,
        edges=edges,
        terminal_mean=terminal_mean,
        terminal_cov=terminal_cov,
    )


def _matrix(rows):
    return np.asarray(rows, dtype=float)


def tree_to_dict(tree):
    """JSON-ready roadmap document; reloading reproduces queries bit for bit."""
    nodes = [
        {
            "id": node.id,
            "mean": node.belief.mean.tolist(),
            "cov": node.belief.cov.reshape(-1).tolist(),
            "parent": node.parent_id,
        }
        for node in tree.sorted_nodes()
    ]
    edges = []
    for eid in sorted(tree.edges):
        edge = tree.edges[eid]
        edges.append(
            {
                "id": edge.id,
                "from": edge.from_id,
                "to": edge.to_id,
                "L": edge.policy.L.reshape(-1).tolist(),
                "V": edge.policy.V.tolist(),
                "x_mean": edge.policy.x_mean.tolist(),
                "cost": edge.cost,
                "planned_terminal_cov": edge.planned_terminal_cov.reshape(-1).tolist(),
                "w_mean": edge.w_mean.tolist(),
                "w_cov": edge.w_cov.reshape(-1).tolist(),
            }
        )
    return {
        "schema": ROADMAP_SCHEMA,
        "master_seed": tree.master_seed,
        "config": tree.config_echo,
        "sampling_draws": tree.sampling_draws,
        "nodes": nodes,
        "edges": edges,
    }


def tree_from_dict(doc, blk):
    """Rebuild a RoadmapTree from its serialized form."""
    if doc.get("schema") != ROADMAP_SCHEMA:
        raise ValueError(f"unsupported roadmap schema {doc.get('schema')!r}")
    from .lifting import gain_from_L

    nodes = sorted(doc["nodes"], key=lambda d: d["id"])
    n = len(nodes[0]["mean"])
    root = [d for d in nodes if d["parent"] is None]
    if len(root) != 1:
        raise ValueError("roadmap must have exactly one root")
    tree = RoadmapTree(
        GaussianBelief(np.array(root[0]["mean"]), _matrix(root[0]["cov"]).reshape(n, n)),
        master_seed=doc.get("master_seed"),
        config_echo=doc.get("config"),
    )
    tree.root_id = root[0]["id"]
    tree.sampling_draws = doc.get("sampling_draws", 0)
    for entry in nodes:
        if entry["parent"] is None:
            continue
        node = BeliefNode(
            id=entry["id"],
            belief=GaussianBelief(np.array(entry["mean"]), _matrix(entry["cov"]).reshape(n, n)),
            parent_id=entry["parent"],
        )
        tree.nodes[node.id] = node
    for entry in sorted(doc["edges"], key=lambda d: d["id"]):
        L = _matrix(entry["L"]).reshape(blk.nu, blk.nx)
        policy = FeedbackPolicy(
            L=L,
            V=np.array(entry["V"]),
            K=gain_from_L(blk, L),
            x_mean=np.array(entry["x_mean"]),
        )
        edge = BeliefEdge(
            id=entry["id"],
            from_id=entry["from"],
            to_id=entry["to"],
            policy=policy,
            planned_terminal_cov=_matrix(entry["planned_terminal_cov"]).reshape(blk.n, blk.n),
            cost=float(entry["cost"]),
            w_mean=np.array(entry["w_mean"]),
            w_cov=_matrix(entry["w_cov"]).reshape(blk.nw, blk.nw),
        )
        tree.edges[edge.id] = edge
        tree.nodes[edge.to_id].incoming_edge_id = edge.id
        tree.nodes[edge.from_id].child_ids.append(edge.to_id)
    tree._next_node_id = max(tree.nodes) + 1
    tree._next_edge_id = max(tree.edges) + 1 if tree.edges else 0
    for node in tree.sorted_nodes():
        node.child_ids.sort()
    return tree


def save_tree(tree, path):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(tree_to_dict(tree), handle)


def load_tree(path, blk):
    with open(path, encoding="utf-8") as handle:
        return tree_from_dict(json.load(handle), blk)
