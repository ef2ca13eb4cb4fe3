import socket
import struct
import threading

import pytest

from fleetloop.backend import Backend, BackendClient, ParameterStore, SituationDatabase, serve
from fleetloop.backend.server import wait_for_count
from fleetloop.predictor import ParameterSet, basic_parameters
from fleetloop.protocol import MAX_PAYLOAD, ErrorReply, ParamRequest, StreamDecoder, encode

from .conftest import RAIN, make_package


@pytest.fixture
def server(tmp_path):
    srv = serve("127.0.0.1:0", ParameterStore(tmp_path / "params.json"), SituationDatabase(tmp_path / "db.jsonl"))
    srv.start_background()
    yield srv
    srv.shutdown()
    srv.server_close()


def read_one(sock):
    dec = StreamDecoder()
    while True:
        chunk = sock.recv(65536)
        if not chunk:
            return None
        msgs = dec.feed(chunk)
        if msgs:
            return msgs[0]


class TestServer:
    def test_fresh_store_serves_basic(self, server):
        with BackendClient(server.endpoint) as client:
            assert client.request("veh-1", RAIN) == basic_parameters()

    def test_released_set_served(self, server):
        server.backend.store.record(ParameterSet((0.1, 1.3, 1.2, 0.0), 1, RAIN, 1.0), True, 0, {}, {})
        with BackendClient(server.endpoint) as client:
            assert client.request("veh-1", RAIN).version == 1

    def test_concurrent_clients(self, server):
        errors = []

        def vehicle(v):
            try:
                with BackendClient(server.endpoint) as client:
                    for k in range(100):
                        client.submit(make_package(vehicle=f"veh-{v}", t=k * 0.04))
                    client.sync()
            except Exception as exc:  # pragma: no cover - reported below
                errors.append(exc)

        threads = [threading.Thread(target=vehicle, args=(v,)) for v in range(10)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        assert wait_for_count(server.backend.db, 1000)
        assert len(server.backend.db) == 1000

    def test_garbage_client_is_isolated(self, server):
        good = BackendClient(server.endpoint)
        bad = socket.create_connection(server.server_address[:2])
        payload = b"this is not json"
        bad.sendall(struct.pack(">I", len(payload)) + payload)
        reply = read_one(bad)
        assert isinstance(reply, ErrorReply) and reply.code == "malformed"
        # the session survives a malformed frame
        bad.sendall(encode(ParamRequest("veh-x", RAIN)))
        assert read_one(bad).params == basic_parameters()
        assert good.request("veh-1", RAIN) == basic_parameters()
        good.close()
        bad.close()

    def test_oversized_frame_closes_session(self, server):
        bad = socket.create_connection(server.server_address[:2])
        bad.sendall(struct.pack(">I", MAX_PAYLOAD + 1))
        reply = read_one(bad)
        assert isinstance(reply, ErrorReply) and reply.code == "oversized"
        assert read_one(bad) is None
        bad.close()
        with BackendClient(server.endpoint) as client:
            assert client.request("veh-1", RAIN) == basic_parameters()

    def test_restart_preserves_records(self, tmp_path):
        paths = (tmp_path / "params.json", tmp_path / "db.jsonl")
        srv = serve("127.0.0.1:0", ParameterStore(paths[0]), SituationDatabase(paths[1]))
        srv.start_background()
        with BackendClient(srv.endpoint) as client:
            for k in range(25):
                client.submit(make_package(t=float(k)))
            client.sync()
        srv.shutdown()
        srv.server_close()
        again = Backend(SituationDatabase(paths[1]), ParameterStore(paths[0]))
        assert len(again.db) == 25
