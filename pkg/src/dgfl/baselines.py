"""Centralized client-server baselines: FedAvg and FedProx.

Both run in the same harness as the gossip protocol, over identical
partitions, model init, and per-client RNG streams, so curves are directly
comparable. Full client participation every round.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gin
from .errors import ShapeError
from .protocol import (ClientRoundEntry, ClientState, RoundLog, _map_clients,
                       client_rng)
from .tudata import partition

import time


@dataclass
class ServerState:
    global_params: np.ndarray
    round: int
    client_sizes: list[int]


def fedavg_aggregate(client_params: list[np.ndarray], sizes: list[int]) -> np.ndarray:
    """Size-weighted mean of client parameter vectors, reduced in client order."""
    if len(client_params) != len(sizes) or not client_params:
        raise ShapeError("need one size per client parameter vector")
    total = float(sum(sizes))
    out = np.zeros_like(client_params[0])
    for w, size in zip(client_params, sizes):
        if w.shape != out.shape:
            raise ShapeError("client parameter vectors differ in length")
        out += (size / total) * w
    return out


def fedprox_local_objective(w: np.ndarray, w_global: np.ndarray,
                            base_loss: float, mu: float) -> tuple[float, np.ndarray]:
    """Proximal term (mu/2)||w - w_global||^2 and its gradient contribution."""
    if w.shape != w_global.shape:
        raise ShapeError("parameter vectors differ in length")
    diff = w - w_global
    return base_loss + 0.5 * mu * float(diff @ diff), mu * diff


def run_cs_round(server: ServerState, clients: list[ClientState], graphs,
                 test_graphs, t: int, config) -> RoundLog:
    """Broadcast, local training (with proximal term for fedprox), aggregate."""
    start = time.monotonic()
    mu = config.mu if config.method == "fedprox" else 0.0
    w_global = server.global_params

    def train_one(client: ClientState):
        rng = client_rng(config.seed, client.id, t)
        client.model = gin.unflatten(w_global, client.model.dims)
        shard_graphs = [graphs[i] for i in client.shard]
        result = gin.local_train(client.model, client.opt, shard_graphs,
                                 config.epochs, config.batch_size, rng,
                                 prox_mu=mu, prox_center=w_global)
        client.model = result.model
        client.opt = result.opt
        return client.id, result

    results = dict(_map_clients(train_one, clients))
    ordered = [results[c.id] for c in clients]
    server.global_params = fedavg_aggregate(
        [r.w_after for r in ordered], server.client_sizes)
    server.round = t

    accuracy = None
    if test_graphs:
        global_model = gin.unflatten(server.global_params, clients[0].model.dims)
        accuracy = gin.evaluate(global_model, test_graphs)
    entries = {}
    for client in clients:
        r = results[client.id]
        entries[client.id] = ClientRoundEntry(
            loss=r.mean_loss, accuracy=accuracy, receiver=-1,
            confidences={}, sample=[],
            grad_norm=float(np.linalg.norm(r.pseudo_gradient)))
    wall = int((time.monotonic() - start) * 1000)
    return RoundLog(t, entries, wall)


def run_cs_experiment(config) -> list[RoundLog]:
    from .protocol import init_clients

    dataset = config.load_dataset()
    plan = partition(dataset, config.n_clients, config.test_fraction,
                     config.unevenness, config.seed)
    dims = gin.GinDims(dataset.feature_dim, dataset.num_classes,
                       config.hidden, config.layers)
    hyper = gin.AdamHyper(lr=config.lr, weight_decay=config.weight_decay)
    clients = init_clients(dataset, plan, dims, hyper, config.seed,
                           require_peers=False)
    test_graphs = [dataset.graphs[i] for i in plan.test_indices]
    server = ServerState(gin.flatten(clients[0].model), 0,
                         [len(s) for s in plan.client_shards])

    logs = []
    for t in range(1, config.rounds + 1):
        evaluate = bool(test_graphs) and t % config.eval_interval == 0
        logs.append(run_cs_round(server, clients, dataset.graphs,
                                 test_graphs if evaluate else None, t, config))
    return logs
