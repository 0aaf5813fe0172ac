"""Batch execution as a DAG of file-communicating tasks.

Per parity channel and run, the Hermitian stages form a chain
h(1) -> h(2) -> ... -> h(N); each h(i) also feeds the matching
non-Hermitian stage n(i); every n(i) feeds the run's pool node; all pool
nodes of a channel feed that channel's sort node.  Any ready node may be
claimed by any idle worker immediately (scavenger semantics, no barriers).

Pool and sort nodes are gather points: they run in degraded mode when at
least one input артifact exists even if sibling branches failed, so one
broken run never voids a batch.
"""
from __future__ import annotations

import heapq
import threading
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field

KIND_RANK = {"hermitian": 0, "nonhermitian": 1, "pool": 2, "sort": 3}


@dataclass
class TaskNode:
    id: str
    kind: str
    parity: str
    run: int
    index: int
    inputs: list = field(default_factory=list)
    output: str = ""
    gather: bool = False
    status: str = "pending"
    error: str | None = None
    payload: object = field(default=None, repr=False, compare=False)

    def sort_key(self):
        return (self.run, self.index, KIND_RANK[self.kind], self.parity, self.id)


class TaskDag:
    def __init__(self):
        self.nodes: dict[str, TaskNode] = {}
        self.children: dict[str, list[str]] = {}
        self.parents: dict[str, list[str]] = {}

    def add_node(self, node: TaskNode) -> TaskNode:
        if node.id in self.nodes:
            raise ValueError(f"duplicate node id {node.id!r}")
        self.nodes[node.id] = node
        self.children[node.id] = []
        self.parents[node.id] = []
        return node

    def add_edge(self, parent: str, child: str) -> None:
        self.children[parent].append(child)
        self.parents[child].append(parent)

    def edges(self) -> set[tuple[str, str]]:
        return {(p, c) for p, cs in self.children.items() for c in cs}

    def topological_order(self) -> list[str]:
        indegree = {nid: len(ps) for nid, ps in self.parents.items()}
        heap = [self.nodes[nid].sort_key() for nid in indegree if indegree[nid] == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            nid = heapq.heappop(heap)[-1]
            order.append(nid)
            for child in self.children[nid]:
                indegree[child] -= 1
                if indegree[child] == 0:
                    heapq.heappush(heap, self.nodes[child].sort_key())
        if len(order) != len(self.nodes):
            raise ValueError("dependency graph contains a cycle")
        return order


def node_id(parity: str, run: int, kind: str, index: int = 0) -> str:
    if kind == "hermitian":
        return f"{parity}_r{run}_h{index}"
    if kind == "nonhermitian":
        return f"{parity}_r{run}_n{index}"
    if kind == "pool":
        return f"{parity}_r{run}_pool"
    return f"{parity}_sort"


def artifact_path(batch: str, parity: str, run: int, task_id: str) -> str:
    return f"runs/{batch}/{parity}/{run}/{task_id}.json"


def build_dag(
    n_states: dict[str, int],
    batch_size: int,
    parities: tuple[str, ...] = ("even", "odd"),
    batch: str = "batch0",
) -> TaskDag:
    """Fig-of-merit graph: per run a Hermitian chain with non-Hermitian
    branches into one pool node; one sort node per parity channel."""
    dag = TaskDag()
    for parity in parities:
        n = n_states[parity]
        if n < 1 or batch_size < 1:
            raise ValueError("state count and batch size must be at least 1")
        sort_id = node_id(parity, 0, "sort")
        dag.add_node(
            TaskNode(
                id=sort_id, kind="sort", parity=parity, run=0, index=n + 1,
                gather=True,
                output=f"runs/{batch}/{parity}/{sort_id}.json",
            )
        )
        for run in range(batch_size):
            pool_id = node_id(parity, run, "pool")
            dag.add_node(
                TaskNode(
                    id=pool_id, kind="pool", parity=parity, run=run, index=n,
                    gather=True,
                    output=artifact_path(batch, parity, run, pool_id),
                )
            )
            for i in range(1, n + 1):
                h_id = node_id(parity, run, "hermitian", i)
                n_id = node_id(parity, run, "nonhermitian", i)
                dag.add_node(
                    TaskNode(
                        id=h_id, kind="hermitian", parity=parity, run=run, index=i,
                        output=artifact_path(batch, parity, run, h_id),
                    )
                )
                dag.add_node(
                    TaskNode(
                        id=n_id, kind="nonhermitian", parity=parity, run=run, index=i,
                        output=artifact_path(batch, parity, run, n_id),
                    )
                )
                dag.add_edge(h_id, n_id)
                if i > 1:
                    dag.add_edge(node_id(parity, run, "hermitian", i - 1), h_id)
                dag.add_edge(n_id, pool_id)
            dag.add_edge(pool_id, sort_id)
    for child, parents in dag.parents.items():
        dag.nodes[child].inputs = [dag.nodes[p].output for p in parents]
    dag.topological_order()  # acyclicity check
    return dag


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------


def _finish_order(dag: TaskDag):
    """Bookkeeping shared by both executors: readiness and skip propagation."""
    unfinished = {nid: len(ps) for nid, ps in dag.parents.items()}
    return unfinished


def execute(dag: TaskDag, workers: int = 1) -> list[dict]:
    """Run every node payload on a thread pool; returns the execution trace.

    A node starts only after all parents finished; a failed or skipped
    parent skips regular descendants, while gather nodes (pool/sort) run in
    degraded mode if at least one parent succeeded.
    """
    if workers < 1:
        raise ValueError("need at least one worker")
    unfinished = _finish_order(dag)
    ready: list = []
    trace: list[dict] = []
    trace_lock = threading.Lock()

    def push_ready(nid: str):
        heapq.heappush(ready, dag.nodes[nid].sort_key())

    for nid, count in unfinished.items():
        if count == 0:
            push_ready(nid)

    def run_payload(node: TaskNode) -> dict:
        start = time.monotonic()
        worker = threading.current_thread().name
        degraded = [
            p for p in dag.parents[node.id] if dag.nodes[p].status != "done"
        ]
        try:
            if node.payload is not None:
                node.payload(node, degraded)
            status, error = "done", None
        except Exception as exc:  # noqa: BLE001 - failures recorded, not raised
            status, error = "failed", f"{type(exc).__name__}: {exc}"
        end = time.monotonic()
        return {
            "node": node.id,
            "status": status,
            "error": error,
            "start": start,
            "finish": end,
            "worker": worker,
            "degraded_inputs": degraded,
        }

    def finish(node: TaskNode, event: dict):
        node.status = event["status"]
        node.error = event["error"]
        with trace_lock:
            trace.append(event)
        newly_ready = []
        for child_id in dag.children[node.id]:
            unfinished[child_id] -= 1
            if unfinished[child_id] == 0:
                newly_ready.append(child_id)
        for child_id in newly_ready:
            child = dag.nodes[child_id]
            parent_status = [dag.nodes[p].status for p in dag.parents[child_id]]
            runnable = (
                all(s == "done" for s in parent_status)
                or (child.gather and any(s == "done" for s in parent_status))
            )
            if runnable:
                push_ready(child_id)
            else:
                now = time.monotonic()
                finish(
                    child,
                    {
                        "node": child_id,
                        "status": "skipped",
                        "error": "upstream failure",
                        "start": now,
                        "finish": now,
                        "worker": None,
                        "degraded_inputs": [],
                    },
                )

    futures = {}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        while ready or futures:
            while ready:
                nid = heapq.heappop(ready)[-1]
                node = dag.nodes[nid]
                node.status = "running"
                futures[pool.submit(run_payload, node)] = node
            done, _ = wait(futures, return_when=FIRST_COMPLETED)
            for fut in done:
                node = futures.pop(fut)
                finish(node, fut.result())
    return trace


def execute_simulated(
    dag: TaskDag, workers: int, durations: dict[str, float] | float = 1.0
) -> list[dict]:
    """Virtual-clock scheduler for scheduling tests: no payloads run.

    Idle workers claim ready tasks in (run, state index) order; the trace
    carries virtual start/finish times and worker ids.  No worker idles
    while a ready task exists.
    """

    def duration(nid: str) -> float:
        if isinstance(durations, dict):
            return float(durations.get(nid, 1.0))
        return float(durations)

    unfinished = _finish_order(dag)
    ready = [dag.nodes[nid].sort_key() for nid, c in unfinished.items() if c == 0]
    heapq.heapify(ready)
    idle = list(range(workers))
    running: list[tuple[float, int, int, str]] = []  # (finish, seq, worker, node)
    clock = 0.0
    seq = 0
    trace = []
    while ready or running:
        while ready and idle:
            nid = heapq.heappop(ready)[-1]
            worker = idle.pop(0)
            heapq.heappush(running, (clock + duration(nid), seq, worker, nid))
            seq += 1
            trace.append(
                {
                    "node": nid,
                    "status": "done",
                    "start": clock,
                    "finish": clock + duration(nid),
                    "worker": f"sim-{worker}",
                }
            )
        finish_time, _, worker, nid = heapq.heappop(running)
        clock = finish_time
        idle.append(worker)
        idle.sort()
        dag.nodes[nid].status = "done"
        for child in dag.children[nid]:
            unfinished[child] -= 1
            if unfinished[child] == 0:
                heapq.heappush(ready, dag.nodes[child].sort_key())
    return trace


# ---------------------------------------------------------------------------
# DAGMan export
# ---------------------------------------------------------------------------


def export_dagman(
    dag: TaskDag, submit_prefix: str = "submit", cli_args: str = ""
) -> tuple[str, dict[str, str]]:
    """DAGMan description plus stub submit files, one per node.

    Returns (dag file text, {submit path: submit text}).  One JOB line per
    node and one PARENT line per node with children reproduce the edge set
    exactly.
    """
    order = dag.topological_order()
    lines = []
    submits: dict[str, str] = {}
    for nid in order:
        sub_path = f"{submit_prefix}/{nid}.sub"
        lines.append(f"JOB {nid} {sub_path}")
        submits[sub_path] = (
            "universe = vanilla\n"
            "executable = /usr/bin/env\n"
            f'arguments = "qdrive run {cli_args} --single-task {nid}"\n'
            f"output = logs/{nid}.out\n"
            f"error = logs/{nid}.err\n"
            "log = logs/batch.log\n"
            "queue\n"
        )
    for nid in order:
        children = dag.children[nid]
        if children:
            ordered = [c for c in order if c in set(children)]
            lines.append(f"PARENT {nid} CHILD {' '.join(ordered)}")
    return "\n".join(lines) + "\n", submits


def parse_dagman(text: str) -> tuple[set[str], set[tuple[str, str]]]:
    """Inverse of :func:`export_dagman` for round-trip checks."""
    jobs: set[str] = set()
    edges: set[tuple[str, str]] = set()
    for line in text.splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "JOB":
            jobs.add(parts[1])
        elif parts[0] == "PARENT":
            split = parts.index("CHILD")
            for parent in parts[1:split]:
                for child in parts[split + 1 :]:
                    edges.add((parent, child))
    return jobs, edges
