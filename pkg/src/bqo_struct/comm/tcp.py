"""TCP cluster with a star topology: rank 0 aggregates and broadcasts."""

import logging
import socket
import time
from typing import Callable, Dict, List, Optional, Set, Tuple

import numpy as np
import numpy.typing as npt

from bqo_struct.comm.base import (
    Cluster,
    ScalarContribution,
    VectorContribution,
    reduce_scalars,
    sum_vectors,
)
from bqo_struct.comm.wire import (
    HEADER_SIZE,
    Frame,
    MessageType,
    barrier_frame,
    contribution_frame,
    decode_contribution,
    decode_error,
    decode_frame,
    decode_header,
    decode_scalars,
    decode_vector,
    error_frame,
    join_frame,
    payload_size,
    scalar_frame,
    vector_frame,
)
from bqo_struct.core.exceptions import CollectiveError, WireFormatError

logger = logging.getLogger(__name__)

_VECTOR_KINDS = {MessageType.VEC_CONTRIBUTION, MessageType.SPARSE_VEC_CONTRIBUTION}


def _recv_exact(sock: socket.socket, size: int) -> bytes:
    chunks = []
    remaining = size
    while remaining:
        chunk = sock.recv(min(remaining, 1 << 20))
        if not chunk:
            raise ConnectionError("Connection closed by peer")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> Frame:
    """Read one frame from a socket."""
    header = _recv_exact(sock, HEADER_SIZE)
    kind, _, count = decode_header(header)
    return decode_frame(header + _recv_exact(sock, payload_size(kind, count)))


def write_frame(sock: socket.socket, frame: Frame) -> None:
    sock.sendall(frame.encode())


def parse_address(address: str) -> Tuple[str, int]:
    """Split "HOST:PORT"."""
    host, sep, port = address.rpartition(":")
    if not sep or not host or not port.isdigit():
        raise ValueError(f"Expected HOST:PORT, got {address!r}")
    return host, int(port)


class TcpCluster(Cluster):
    """
    Handle of one worker in a TCP cluster.

    Rank 0 holds one connection per peer; every other rank holds its connection to rank 0.
    """

    transport = "tcp"

    def __init__(
        self,
        rank: int,
        size: int,
        timeout: float,
        peers: Optional[Dict[int, socket.socket]] = None,
        coordinator: Optional[socket.socket] = None,
    ):
        super().__init__(rank, size, timeout)
        self._peers = peers or {}
        self._coordinator = coordinator
        self._broken: Optional[str] = None

    def _fail(self, message: str) -> CollectiveError:
        self._broken = message
        for peer in self._peers.values():
            try:
                write_frame(peer, error_frame(self.rank, message))
            except OSError:
                pass
        logger.error("Collective failed: %s", message)
        return CollectiveError(message)

    def _round(
        self,
        outgoing: Frame,
        expected: Set[MessageType],
        reduce: Callable[[List[Frame]], Frame],
    ) -> Frame:
        """Run one gather-reduce-broadcast round and return the reply frame."""
        if self._broken is not None:
            raise CollectiveError(f"Cluster is broken: {self._broken}")

        if self.rank != 0:
            assert self._coordinator is not None
            try:
                write_frame(self._coordinator, outgoing)
                reply = read_frame(self._coordinator)
            except (OSError, WireFormatError) as e:
                self._broken = str(e)
                raise CollectiveError(f"Rank {self.rank}: lost coordinator: {e}") from e
            if reply.kind == MessageType.ERROR:
                self._broken = decode_error(reply)
                raise CollectiveError(self._broken)
            return reply

        frames = [outgoing]
        for rank in range(1, self.size):
            try:
                frame = read_frame(self._peers[rank])
            except (OSError, WireFormatError) as e:
                raise self._fail(f"Rank {rank} failed during collective: {e}") from e
            if frame.kind == MessageType.ERROR:
                raise self._fail(f"Rank {rank} reported: {decode_error(frame)}")
            if frame.kind not in expected or frame.rank != rank:
                raise self._fail(
                    f"Mismatched collective: rank {rank} sent {frame.kind.name}, "
                    f"expected {sorted(k.name for k in expected)}"
                )
            frames.append(frame)
        try:
            reply = reduce(frames)
        except (CollectiveError, WireFormatError) as e:
            raise self._fail(str(e)) from e

        for rank, peer in sorted(self._peers.items()):
            try:
                write_frame(peer, reply)
            except OSError as e:
                raise self._fail(f"Rank {rank} unreachable: {e}") from e
        return reply

    def _exchange_vector(self, contribution: VectorContribution) -> npt.NDArray[np.float64]:
        def reduce(frames: List[Frame]) -> Frame:
            total = sum_vectors([decode_contribution(frame) for frame in frames])
            return vector_frame(MessageType.VEC_REDUCED, 0, total)

        reply = self._round(contribution_frame(contribution), _VECTOR_KINDS, reduce)
        return decode_vector(reply)

    def _exchange_scalars(self, contribution: ScalarContribution) -> npt.NDArray[np.float64]:
        def reduce(frames: List[Frame]) -> Frame:
            total = reduce_scalars([decode_scalars(frame) for frame in frames])
            return vector_frame(MessageType.SCALARS_REDUCED, 0, total)

        reply = self._round(
            scalar_frame(contribution), {MessageType.SCALAR_CONTRIBUTION}, reduce
        )
        return decode_vector(reply)

    def _exchange_barrier(self) -> None:
        self._round(
            barrier_frame(self.rank), {MessageType.BARRIER}, lambda frames: barrier_frame(0)
        )

    def close(self) -> None:
        for peer in self._peers.values():
            peer.close()
        self._peers = {}
        if self._coordinator is not None:
            self._coordinator.close()
            self._coordinator = None


class TcpCoordinator:
    """
    Rank 0's listening endpoint.

    Binding happens on construction, so port 0 picks a free port readable from ``port``.
    """

    def __init__(self, host: str, port: int, size: int, timeout: float = 120.0):
        self.size = size
        self.timeout = timeout
        try:
            self._server = socket.create_server((host, port))
        except OSError as e:
            raise CollectiveError(f"Cannot listen on {host}:{port}: {e}") from e
        self._server.listen(max(size, 1))
        self.host, self.port = self._server.getsockname()[:2]

    def _reject(self, conn: socket.socket, message: str) -> None:
        logger.warning("Rejected join: %s", message)
        try:
            write_frame(conn, error_frame(0, message))
        except OSError:
            pass
        conn.close()

    def accept(self) -> TcpCluster:
        """
        Wait for all K-1 workers to join and release them together.

        Returns:
            Rank 0's cluster handle

        Raises:
            CollectiveError: If not every worker joined within the timeout
        """
        peers: Dict[int, socket.socket] = {}
        deadline = time.monotonic() + self.timeout
        try:
            while len(peers) < self.size - 1:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise socket.timeout()
                self._server.settimeout(remaining)
                conn, addr = self._server.accept()
                conn.settimeout(self.timeout)
                try:
                    frame = read_frame(conn)
                except (OSError, WireFormatError) as e:
                    self._reject(conn, f"bad join from {addr}: {e}")
                    continue
                if frame.kind != MessageType.JOIN:
                    self._reject(conn, f"expected JOIN, got {frame.kind.name}")
                elif frame.count != self.size:
                    self._reject(
                        conn, f"cluster size mismatch: worker expects {frame.count}, "
                        f"coordinator has {self.size}"
                    )
                elif not 0 < frame.rank < self.size or frame.rank in peers:
                    self._reject(conn, f"invalid or duplicate rank {frame.rank}")
                else:
                    peers[frame.rank] = conn
                    logger.info("Rank %d joined from %s:%s", frame.rank, *addr[:2])
        except socket.timeout as e:
            for conn in peers.values():
                conn.close()
            raise CollectiveError(
                f"Only {len(peers) + 1} of {self.size} workers joined within {self.timeout}s"
            ) from e
        finally:
            self._server.close()

        for rank, conn in sorted(peers.items()):
            write_frame(conn, barrier_frame(0))
        return TcpCluster(0, self.size, self.timeout, peers=peers)

    def close(self) -> None:
        self._server.close()


def join_cluster(host: str, port: int, rank: int, size: int, timeout: float = 120.0) -> TcpCluster:
    """
    Connect a worker of rank > 0 to the coordinator and wait for the release.

    Raises:
        CollectiveError: If the coordinator is unreachable or rejects the join
    """
    deadline = time.monotonic() + timeout
    while True:
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
            break
        except OSError as e:
            if time.monotonic() >= deadline:
                raise CollectiveError(f"Cannot reach coordinator {host}:{port}: {e}") from e
            time.sleep(0.05)

    sock.settimeout(timeout)
    try:
        write_frame(sock, join_frame(rank, size))
        reply = read_frame(sock)
    except (OSError, WireFormatError) as e:
        sock.close()
        raise CollectiveError(f"Join failed: {e}") from e
    if reply.kind == MessageType.ERROR:
        sock.close()
        raise CollectiveError(f"Join rejected: {decode_error(reply)}")
    if reply.kind != MessageType.BARRIER:
        sock.close()
        raise CollectiveError(f"Unexpected join reply: {reply.kind.name}")
    return TcpCluster(rank, size, timeout, coordinator=sock)


def connect(address: str, rank: int, size: int, timeout: float = 120.0) -> TcpCluster:
    """Create rank ``rank``'s handle: rank 0 listens on ``address``, others join it."""
    host, port = parse_address(address)
    if rank == 0:
        return TcpCoordinator(host, port, size, timeout).accept()
    return join_cluster(host, port, rank, size, timeout)
