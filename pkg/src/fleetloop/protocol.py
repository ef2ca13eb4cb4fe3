"""Wire codec for vehicle <-> backend messages.

A frame is a 4-byte big-endian payload length followed by a UTF-8 JSON
object with sorted keys. Every payload carries ``"type"`` and the protocol
``"version"``. Message kinds: ``measurement`` (a triggered sample),
``param_request`` and ``param_reply``. The backend may also answer a bad
frame with an ``error`` frame.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import Optional, Union

from .conditions import BASIC, ConditionKey
from .predictor import FeatureSnapshot, ParameterSet
from .watchdog import MeasurementPackage

PROTOCOL_VERSION = 1
MAX_PAYLOAD = 1 << 20
HEADER = struct.Struct(">I")


class ProtocolError(ValueError):
    kind = "protocol"

    def __init__(self, message: str, offset: int):
        super().__init__(f"{self.kind} at offset {offset}: {message}")
        self.offset = offset


class IncompleteFrame(ProtocolError):
    kind = "incomplete"


class OversizedFrame(ProtocolError):
    kind = "oversized"


class UnsupportedMessage(ProtocolError):
    kind = "unsupported"


class MalformedMessage(ProtocolError):
    kind = "malformed"


@dataclass(frozen=True)
class Measurement:
    package: MeasurementPackage


@dataclass(frozen=True)
class ParamRequest:
    vehicle_id: str
    condition: ConditionKey


@dataclass(frozen=True)
class ParamReply:
    """Reply to a request; ``params is None`` is the NOT_FOUND marker."""

    params: Optional[ParameterSet]

    @property
    def not_found(self) -> bool:
        return self.params is None


@dataclass(frozen=True)
class ErrorReply:
    code: str
    offset: int
    detail: str = ""


Message = Union[Measurement, ParamRequest, ParamReply, ErrorReply]


# -- to / from JSON-ready dicts -------------------------------------------------

def features_to_dict(f: FeatureSnapshot) -> dict:
    return {
        "a_lat": float(f.a_lat),
        "a_lon": float(f.a_lon),
        "captured_at": float(f.captured_at),
        "condition": f.condition.to_dict(),
        "d_offset": float(f.d_offset),
        "v_lat": float(f.v_lat),
        "v_lon": float(f.v_lon),
    }


def features_from_dict(d: dict) -> FeatureSnapshot:
    return FeatureSnapshot(
        v_lon=_num(d["v_lon"]),
        v_lat=_num(d["v_lat"]),
        a_lon=_num(d["a_lon"]),
        a_lat=_num(d["a_lat"]),
        d_offset=_num(d["d_offset"]),
        condition=ConditionKey.from_dict(d["condition"]),
        captured_at=_num(d["captured_at"]),
    )


_PKG_FLOATS = (
    "issued_at", "pred_delta_s", "pred_delta_d", "horizon", "pred_s", "pred_d",
    "actual_s", "actual_d", "e_x", "e_y",
)


def package_to_dict(p: MeasurementPackage) -> dict:
    d = {name: float(getattr(p, name)) for name in _PKG_FLOATS}
    d["features"] = features_to_dict(p.features)
    d["param_version"] = int(p.param_version)
    d["target_id"] = str(p.target_id)
    d["vehicle_id"] = str(p.vehicle_id)
    return d


def package_from_dict(d: dict) -> MeasurementPackage:
    kwargs = {name: _num(d[name]) for name in _PKG_FLOATS}
    return MeasurementPackage(
        vehicle_id=_str(d["vehicle_id"]),
        target_id=_str(d["target_id"]),
        features=features_from_dict(d["features"]),
        param_version=_int(d["param_version"]),
        **kwargs,
    )


def params_to_dict(p: ParameterSet) -> dict:
    return {
        "condition": "BASIC" if p.condition is BASIC else p.condition.to_dict(),
        "metadata": p.metadata,
        "released_at": float(p.released_at),
        "version": int(p.version),
        "weights": [float(w) for w in p.weights],
    }


def params_from_dict(d: dict) -> ParameterSet:
    cond = d["condition"]
    return ParameterSet(
        weights=tuple(_num(w) for w in d["weights"]),
        version=_int(d["version"]),
        condition=BASIC if cond == "BASIC" else ConditionKey.from_dict(cond),
        released_at=_num(d["released_at"]),
        metadata=dict(d.get("metadata", {})),
    )


def _reject_constant(name):
    raise ValueError(f"non-finite number {name}")


def _num(x) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise TypeError(f"expected number, got {x!r}")
    return float(x)


def _int(x) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise TypeError(f"expected integer, got {x!r}")
    return x


def _str(x) -> str:
    if not isinstance(x, str):
        raise TypeError(f"expected string, got {x!r}")
    return x


def message_to_dict(msg: Message) -> dict:
    if isinstance(msg, Measurement):
        body = {"type": "measurement", "package": package_to_dict(msg.package)}
    elif isinstance(msg, ParamRequest):
        body = {
            "type": "param_request",
            "vehicle_id": msg.vehicle_id,
            "condition": msg.condition.to_dict(),
        }
    elif isinstance(msg, ParamReply):
        body = {
            "type": "param_reply",
            "params": None if msg.params is None else params_to_dict(msg.params),
        }
    elif isinstance(msg, ErrorReply):
        body = {"type": "error", "code": msg.code, "offset": msg.offset, "detail": msg.detail}
    else:
        raise TypeError(f"not a protocol message: {msg!r}")
    body["version"] = PROTOCOL_VERSION
    return body


def message_from_dict(body: dict) -> Message:
    kind = body["type"]
    if kind == "measurement":
        return Measurement(package_from_dict(body["package"]))
    if kind == "param_request":
        return ParamRequest(_str(body["vehicle_id"]), ConditionKey.from_dict(body["condition"]))
    if kind == "param_reply":
        p = body["params"]
        return ParamReply(None if p is None else params_from_dict(p))
    if kind == "error":
        return ErrorReply(_str(body["code"]), _int(body["offset"]), _str(body.get("detail", "")))
    raise AssertionError(kind)


_KNOWN_TYPES = {"measurement", "param_request", "param_reply", "error"}


# -- framing --------------------------------------------------------------------

def encode_payload(msg: Message) -> bytes:
    return json.dumps(
        message_to_dict(msg), sort_keys=True, separators=(",", ":"),
        ensure_ascii=False, allow_nan=False,
    ).encode("utf-8")


def encode(msg: Message) -> bytes:
    payload = encode_payload(msg)
    if len(payload) > MAX_PAYLOAD:
        raise ValueError("message exceeds maximum payload size")
    return HEADER.pack(len(payload)) + payload


def decode_payload(payload: bytes, base: int = 4) -> Message:
    """Decode a frame body; ``base`` is its offset within the stream (for errors)."""
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MalformedMessage(f"invalid UTF-8: {exc.reason}", base + exc.start) from None
    try:
        body = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise MalformedMessage(exc.msg, base + len(text[: exc.pos].encode("utf-8"))) from None
    except ValueError as exc:
        raise MalformedMessage(str(exc), base) from None
    if not isinstance(body, dict):
        raise MalformedMessage("payload is not a JSON object", base)
    kind = body.get("type")
    if kind not in _KNOWN_TYPES:
        raise UnsupportedMessage(f"unknown message type {kind!r}", base)
    if body.get("version") != PROTOCOL_VERSION:
        raise UnsupportedMessage(f"unsupported protocol version {body.get('version')!r}", base)
    try:
        return message_from_dict(body)
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise MalformedMessage(f"bad {kind} payload: {exc!r}", base) from None


def _check_header(buf, start: int) -> Optional[int]:
    if len(buf) - start < HEADER.size:
        return None
    (length,) = HEADER.unpack_from(buf, start)
    if length > MAX_PAYLOAD:
        raise OversizedFrame(f"declared length {length} > {MAX_PAYLOAD}", start)
    return length


def decode(data: bytes) -> Message:
    """Decode exactly one frame."""
    length = _check_header(data, 0)
    if length is None:
        raise IncompleteFrame(f"need {HEADER.size} header bytes, have {len(data)}", len(data))
    end = HEADER.size + length
    if len(data) < end:
        raise IncompleteFrame(f"declared length {length}, have {len(data) - HEADER.size}", len(data))
    if len(data) > end:
        raise MalformedMessage(f"{len(data) - end} trailing bytes after frame", end)
    return decode_payload(bytes(data[HEADER.size:end]), HEADER.size)


class StreamDecoder:
    """Incremental decoder for a byte stream of concatenated frames."""

    def __init__(self):
        self._buf = bytearray()
        self._consumed = 0  # stream offset of _buf[0]

    def feed(self, chunk: bytes) -> list[Message]:
        """Append bytes and return every message completed so far.

        On a bad frame the error is raised with the messages decoded before
        it attached as ``exc.decoded``. Malformed or unsupported frames are
        skipped, so the stream stays usable; an oversized header is fatal.
        """
        self._buf.extend(chunk)
        out: list[Message] = []
        try:
            while True:
                msg = self._next()
                if msg is None:
                    return out
                out.append(msg)
        except ProtocolError as exc:
            exc.decoded = out
            raise

    def _next(self) -> Optional[Message]:
        try:
            length = _check_header(self._buf, 0)
        except OversizedFrame as exc:
            raise OversizedFrame(str(exc).split(": ", 1)[1], self._consumed) from None
        if length is None or len(self._buf) - HEADER.size < length:
            return None
        end = HEADER.size + length
        payload = bytes(self._buf[HEADER.size:end])
        base = self._consumed + HEADER.size
        del self._buf[:end]
        self._consumed += end
        return decode_payload(payload, base)

    @property
    def pending(self) -> int:
        return len(self._buf)
