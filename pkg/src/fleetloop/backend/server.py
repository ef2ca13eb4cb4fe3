"""Backend communication module: message dispatch and the TCP service."""

from __future__ import annotations

import logging
import socket
import socketserver
import threading
import time
from typing import Optional

from ..conditions import ConditionKey, SpeedBucket, Weather
from ..predictor import ParameterSet
from ..protocol import (
    ErrorReply,
    Measurement,
    Message,
    OversizedFrame,
    ParamReply,
    ParamRequest,
    ProtocolError,
    StreamDecoder,
    encode,
)
from ..watchdog import MeasurementPackage
from .database import SituationDatabase
from .store import ParameterStore

log = logging.getLogger(__name__)


class Backend:
    """Situation database plus parameter store behind one dispatch point.

    Also usable directly as the in-process backend of a simulation:
    :meth:`submit` and :meth:`request` mirror the network client.
    """

    def __init__(self, db: Optional[SituationDatabase] = None, store: Optional[ParameterStore] = None):
        self.db = db if db is not None else SituationDatabase()
        self.store = store if store is not None else ParameterStore()

    def handle(self, msg: Message, received_at: Optional[float] = None) -> Optional[Message]:
        if isinstance(msg, Measurement):
            try:
                self.db.append(msg.package, received_at)
            except OSError as exc:
                log.error("failed to persist measurement: %s", exc)
                return ErrorReply("rejected", 0, f"persistence failure: {exc}")
            return None
        if isinstance(msg, ParamRequest):
            return ParamReply(self.store.lookup(msg.condition))
        return ErrorReply("unsupported", 0, f"backend does not accept {type(msg).__name__}")

    def submit(self, pkg: MeasurementPackage, received_at: Optional[float] = None) -> None:
        self.db.append(pkg, received_at)

    def request(self, vehicle_id: str, key: ConditionKey) -> Optional[ParameterSet]:
        return self.store.lookup(key)

    def sync(self) -> None:
        pass


class _Session(socketserver.BaseRequestHandler):
    def handle(self):
        backend: Backend = self.server.backend
        decoder = StreamDecoder()
        sock: socket.socket = self.request
        while True:
            try:
                chunk = sock.recv(65536)
            except OSError:
                return
            if not chunk:
                return
            try:
                messages = decoder.feed(chunk)
                error = None
            except ProtocolError as exc:
                messages = exc.decoded
                error = exc
            for msg in messages:
                reply = backend.handle(msg)
                if reply is not None:
                    sock.sendall(encode(reply))
            if error is not None:
                log.info("session %s: %s", self.client_address, error)
                sock.sendall(encode(ErrorReply(error.kind, error.offset, str(error))))
                if isinstance(error, OversizedFrame):
                    return


class BackendServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, backend: Backend):
        self.backend = backend
        super().__init__(address, _Session)

    @property
    def endpoint(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start_background(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, name="fleetloop-backend", daemon=True)
        t.start()
        return t


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep:
        raise ValueError(f"endpoint {endpoint!r} is not host:port")
    try:
        port_num = int(port)
    except ValueError:
        raise ValueError(f"bad port in endpoint {endpoint!r}") from None
    if not 0 <= port_num <= 65535:
        raise ValueError(f"port {port_num} out of range")
    return host or "127.0.0.1", port_num


def serve(endpoint: str, store: ParameterStore, db: SituationDatabase) -> BackendServer:
    """Bind the backend to ``host:port`` (port 0 picks a free one).

    Returns the server; call ``serve_forever()`` or ``start_background()``.
    Raises ``OSError`` if the address cannot be bound.
    """
    return BackendServer(parse_endpoint(endpoint), Backend(db, store))


class BackendClient:
    """Vehicle-side connection speaking the wire protocol."""

    def __init__(self, endpoint: str, timeout: float = 10.0):
        self.endpoint = endpoint
        self._sock = socket.create_connection(parse_endpoint(endpoint), timeout=timeout)
        self._decoder = StreamDecoder()
        self._inbox: list[Message] = []

    def close(self):
        self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def send(self, msg: Message) -> None:
        self._sock.sendall(encode(msg))

    def receive(self) -> Message:
        while not self._inbox:
            chunk = self._sock.recv(65536)
            if not chunk:
                raise ConnectionError("backend closed the connection")
            self._inbox.extend(self._decoder.feed(chunk))
        return self._inbox.pop(0)

    def submit(self, pkg: MeasurementPackage, received_at: Optional[float] = None) -> None:
        self.send(Measurement(pkg))

    def request(self, vehicle_id: str, key: ConditionKey) -> Optional[ParameterSet]:
        self.send(ParamRequest(vehicle_id, key))
        reply = self.receive()
        if isinstance(reply, ErrorReply):
            raise ConnectionError(f"backend error {reply.code}: {reply.detail}")
        return reply.params

    def sync(self) -> None:
        """Round-trip barrier: every frame sent before has been processed."""
        self.request("sync", ConditionKey(Weather.CLEAR, SpeedBucket.URBAN_50))


def wait_for_count(db: SituationDatabase, n: int, timeout: float = 10.0) -> bool:
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if len(db) >= n:
            return True
        time.sleep(0.01)
    return len(db) >= n
