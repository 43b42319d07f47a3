"""Collective communication: cluster base class, in-process and TCP backends."""

from bqo_struct.comm.base import Cluster, VectorContribution, reduce_scalars, sum_vectors
from bqo_struct.comm.inproc import InProcessCluster, InProcessGroup, solo_cluster, spawn_inproc
from bqo_struct.comm.tcp import TcpCluster, TcpCoordinator, connect, join_cluster

__all__ = [
    "Cluster",
    "VectorContribution",
    "sum_vectors",
    "reduce_scalars",
    "InProcessGroup",
    "InProcessCluster",
    "solo_cluster",
    "spawn_inproc",
    "TcpCluster",
    "TcpCoordinator",
    "connect",
    "join_cluster",
]
