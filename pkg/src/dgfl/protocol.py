"""Synchronous round engine for the decentralized gossip protocol.

Each round has two phases separated by a strict barrier: every client trains
locally and sends its pseudo-gradient to one uniformly chosen neighbor, then
every client scores its inbox by confidence, filters by the round mean,
aggregates, and applies the result. Per-client RNG streams are derived from
(master seed, client id, round) so results are independent of scheduling.
"""
from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import confidence as conf_mod
from . import gin
from .errors import NumericError, TopologyError
from .tudata import Graph, GraphDataset, PartitionPlan, partition

CHECKPOINT_VERSION = 1


@dataclass
class ClientState:
    id: int
    model: gin.GinModel
    opt: gin.AdamState
    shard: list[int]
    neighbors: frozenset[int]
    sender_list: list[tuple[int, gin.GradientVector]] = field(default_factory=list)
    w_before: np.ndarray | None = None
    w_after: np.ndarray | None = None
    current_gradient: gin.GradientVector | None = None


@dataclass
class ClientRoundEntry:
    loss: float
    accuracy: float | None
    receiver: int
    confidences: dict[int, float]
    sample: list[int]
    grad_norm: float


@dataclass
class RoundLog:
    round: int
    entries: dict[int, ClientRoundEntry]
    wall_time_ms: int


def client_rng(seed: int, client_id: int, round_no: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, client_id, round_no)))


def sample_receiver(client: ClientState, rng: np.random.Generator) -> int:
    if not client.neighbors:
        raise TopologyError(f"client {client.id} has no neighbors")
    choices = sorted(client.neighbors)
    return choices[int(rng.integers(len(choices)))]


def init_clients(dataset: GraphDataset, plan: PartitionPlan, dims: gin.GinDims,
                 hyper: gin.AdamHyper, init_seed: int,
                 require_peers: bool = True) -> list[ClientState]:
    """All clients start from identical parameters (shared init seed).

    require_peers enforces the gossip topology's n >= 2; the client-server
    baselines pass False since they never gossip.
    """
    n = len(plan.client_shards)
    if require_peers and n < 2:
        raise TopologyError("the fully connected topology needs at least 2 clients")
    everyone = frozenset(range(n))
    clients = []
    for cid, shard in enumerate(plan.client_shards):
        model = gin.init_model(dims, init_seed)
        clients.append(ClientState(
            id=cid, model=model, opt=gin.init_adam(dims, hyper),
            shard=list(shard), neighbors=everyone - {cid}))
    return clients


def _worker_count() -> int:
    raw = os.environ.get("DGFL_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n <= 0:
        n = os.cpu_count() or 1
    return n


def _map_clients(fn, clients):
    workers = _worker_count()
    if workers == 1 or len(clients) == 1:
        return [fn(c) for c in clients]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, clients))


def phase_send(clients: list[ClientState], graphs: list[Graph], t: int, config
               ) -> dict[int, tuple[gin.GradientVector, int, float]]:
    """Phase 1: local training plus one message per client.

    Returns per client (pseudo-gradient, chosen receiver, mean loss) and
    appends each message to the receiver's sender list.
    """
    def train_one(client: ClientState):
        rng = client_rng(config.seed, client.id, t)
        shard_graphs = [graphs[i] for i in client.shard]
        result = gin.local_train(client.model, client.opt, shard_graphs,
                                 config.epochs, config.batch_size, rng)
        client.model = result.model
        client.opt = result.opt
        client.w_before = result.w_before
        client.w_after = result.w_after
        g = gin.GradientVector(result.pseudo_gradient, source_round=t,
                               source_client=client.id)
        client.current_gradient = g
        receiver = sample_receiver(client, rng)
        return client.id, g, receiver, result.mean_loss

    sends = {}
    for cid, g, receiver, loss in _map_clients(train_one, clients):
        sends[cid] = (g, receiver, loss)
    for cid, (g, receiver, _) in sorted(sends.items()):
        clients[receiver].sender_list.append((cid, g))
    return sends


def round_confidences(g_local: np.ndarray,
                      inbox: list[tuple[int, gin.GradientVector]],
                      opts: conf_mod.DtwOptions, config) -> dict[int, float]:
    """Confidence of the receiving client in each sender this round."""
    if config.similarity == "cosine":
        return {s: conf_mod.cosine_confidence(g_local, g.values) for s, g in inbox}
    raw = {s: conf_mod.dtw_std(g_local, g.values, opts) for s, g in inbox}
    if config.standardization == "minmax_round" and len(raw) > 1:
        lo, hi = min(raw.values()), max(raw.values())
        if hi > lo:
            return {s: 1.0 - (d - lo) / (hi - lo) for s, d in raw.items()}
        return {s: 1.0 for s in raw}
    return {s: 1.0 - d for s, d in raw.items()}


def phase_receive(clients: list[ClientState], t: int, config
                  ) -> dict[int, tuple[dict[int, float], list[int]]]:
    """Phase 2: score, filter, aggregate, apply; clears sender lists."""
    n_params = gin.param_count(clients[0].model.dims)
    opts = config.dtw_options(n_params)

    def receive_one(client: ClientState):
        g_local = client.current_gradient.values
        inbox = sorted(client.sender_list, key=lambda item: item[0])
        confidences = round_confidences(g_local, inbox, opts, config)
        if confidences:
            record = conf_mod.ConfidenceRecord(
                t, confidences, conf_mod.mean_confidence(confidences))
            sample = sorted(conf_mod.filter_senders(record))
            samples = {s: (g.values, confidences[s]) for s, g in inbox if s in sample}
            g_hat = conf_mod.aggregate(g_local, samples)
        else:
            sample = []
            g_hat = g_local
        if config.gradient_application == "adam":
            # Sensitivity variant: feed the aggregated gradient through Adam
            # from the pre-round parameters and optimizer state.
            params, client.opt = gin.adam_step(client.w_before, g_hat, client.opt)
        else:
            params = gin.apply_gradient(client.w_before, client.w_after,
                                        g_local, g_hat)
        client.model = gin.unflatten(params, client.model.dims)
        client.sender_list = []
        return client.id, confidences, sample

    out = {}
    for cid, confidences, sample in _map_clients(receive_one, clients):
        out[cid] = (confidences, sample)
    return out


def run_round(clients: list[ClientState], graphs: list[Graph],
              test_graphs: list[Graph] | None, t: int, config) -> RoundLog:
    """One full protocol round; evaluates on the shared test set if given."""
    start = time.monotonic()
    try:
        sends = phase_send(clients, graphs, t, config)
        received = phase_receive(clients, t, config)
    except NumericError as e:
        raise NumericError(f"round {t} aborted: {e}") from e
    entries = {}
    for client in clients:
        g, receiver, loss = sends[client.id]
        confidences, sample = received[client.id]
        accuracy = gin.evaluate(client.model, test_graphs) if test_graphs else None
        entries[client.id] = ClientRoundEntry(
            loss=loss, accuracy=accuracy, receiver=receiver,
            confidences=confidences, sample=sample,
            grad_norm=float(np.linalg.norm(g.values)))
    wall = int((time.monotonic() - start) * 1000)
    return RoundLog(t, entries, wall)


def run_experiment(config) -> list[RoundLog]:
    """Partition, initialize, and run T rounds of the configured method."""
    if config.method in ("fedavg", "fedprox"):
        from . import baselines
        return baselines.run_cs_experiment(config)

    dataset = config.load_dataset()
    plan = partition(dataset, config.n_clients, config.test_fraction,
                     config.unevenness, config.seed)
    dims = gin.GinDims(dataset.feature_dim, dataset.num_classes,
                       config.hidden, config.layers)
    hyper = gin.AdamHyper(lr=config.lr, weight_decay=config.weight_decay)
    clients = init_clients(dataset, plan, dims, hyper, config.seed)
    test_graphs = [dataset.graphs[i] for i in plan.test_indices]

    logs = []
    for t in range(1, config.rounds + 1):
        evaluate = bool(test_graphs) and t % config.eval_interval == 0
        logs.append(run_round(clients, dataset.graphs,
                              test_graphs if evaluate else None, t, config))
    return logs


def save_checkpoint(path, clients: list[ClientState], t: int, seed: int) -> None:
    """Versioned checkpoint: params and Adam moments per client, plus the round
    counter; RNG streams are re-derivable from (seed, client, round)."""
    arrays = {"round": np.array([t]), "seed": np.array([seed]),
              "version": np.array([CHECKPOINT_VERSION])}
    for c in clients:
        arrays[f"params_{c.id}"] = gin.flatten(c.model)
        arrays[f"m_{c.id}"] = c.opt.first_moment
        arrays[f"v_{c.id}"] = c.opt.second_moment
        arrays[f"step_{c.id}"] = np.array([c.opt.step_count])
    np.savez(path, **arrays)


def load_checkpoint(path, clients: list[ClientState]) -> tuple[int, int]:
    """Restore client parameters and optimizer state; returns (round, seed)."""
    data = np.load(path)
    if int(data["version"][0]) != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data['version'][0]}")
    for c in clients:
        c.model = gin.unflatten(data[f"params_{c.id}"], c.model.dims)
        c.opt = gin.AdamState(data[f"m_{c.id}"], data[f"v_{c.id}"],
                              int(data[f"step_{c.id}"][0]), c.opt.hyper)
    return int(data["round"][0]), int(data["seed"][0])
