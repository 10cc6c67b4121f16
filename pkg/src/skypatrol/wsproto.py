"""Minimal server-side WebSocket support (RFC 6455).

Covers exactly what the telemetry service needs: the HTTP upgrade
handshake, unfragmented text/binary frames with 7/16/64-bit payload
lengths, client-side masking, and the ping/pong/close control frames.
No extensions, no fragmentation, no TLS.
"""

from __future__ import annotations

import base64
import hashlib
import os
import struct
import threading

_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_CONT = 0x0
OP_TEXT = 0x1
OP_BINARY = 0x2
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA

_MAX_HANDSHAKE = 16 * 1024
_MAX_PAYLOAD = 16 * 1024 * 1024


class ProtocolError(ValueError):
    """Peer sent something RFC 6455 does not allow (here, at least)."""


def accept_key(key: str) -> str:
    digest = hashlib.sha1((key + _GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def _parse_headers(blob: bytes):
    try:
        text = blob.decode("latin-1")
    except UnicodeDecodeError as exc:
        raise ProtocolError("undecodable handshake") from exc
    lines = text.split("\r\n")
    parts = lines[0].split(" ")
    if len(parts) != 3 or parts[0] != "GET":
        raise ProtocolError(f"bad request line: {lines[0]!r}")
    headers = {}
    for line in lines[1:]:
        if not line:
            continue
        name, sep, value = line.partition(":")
        if not sep:
            raise ProtocolError(f"bad header line: {line!r}")
        headers[name.strip().lower()] = value.strip()
    return parts[1], headers


def server_handshake(sock) -> str:
    """Read the client's upgrade request and answer 101. Returns the path."""

    blob = b""
    while b"\r\n\r\n" not in blob:
        chunk = sock.recv(4096)
        if not chunk:
            raise ProtocolError("connection closed during handshake")
        blob += chunk
        if len(blob) > _MAX_HANDSHAKE:
            raise ProtocolError("handshake too large")
    head, _, _rest = blob.partition(b"\r\n\r\n")
    path, headers = _parse_headers(head)
    if "websocket" not in headers.get("upgrade", "").lower():
        raise ProtocolError("not a websocket upgrade")
    if headers.get("sec-websocket-version") != "13":
        raise ProtocolError("unsupported websocket version")
    key = headers.get("sec-websocket-key")
    if not key:
        raise ProtocolError("missing Sec-WebSocket-Key")
    response = (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {accept_key(key)}\r\n"
        "\r\n")
    sock.sendall(response.encode("ascii"))
    return path


def client_handshake(sock, host: str, path: str = "/") -> None:
    key = base64.b64encode(os.urandom(16)).decode("ascii")
    request = (
        f"GET {path} HTTP/1.1\r\n"
        f"Host: {host}\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Key: {key}\r\n"
        "Sec-WebSocket-Version: 13\r\n"
        "\r\n")
    sock.sendall(request.encode("ascii"))
    blob = b""
    while b"\r\n\r\n" not in blob:
        chunk = sock.recv(4096)
        if not chunk:
            raise ProtocolError("connection closed during handshake")
        blob += chunk
        if len(blob) > _MAX_HANDSHAKE:
            raise ProtocolError("handshake too large")
    head = blob.partition(b"\r\n\r\n")[0].decode("latin-1")
    status = head.split("\r\n")[0]
    if " 101 " not in status:
        raise ProtocolError(f"upgrade refused: {status!r}")
    for line in head.split("\r\n")[1:]:
        name, _, value = line.partition(":")
        if name.strip().lower() == "sec-websocket-accept":
            if value.strip() != accept_key(key):
                raise ProtocolError("accept key mismatch")
            return
    raise ProtocolError("missing Sec-WebSocket-Accept")


def encode_frame(opcode: int, payload: bytes, mask: bool = False) -> bytes:
    if opcode >= OP_CLOSE and len(payload) > 125:
        raise ProtocolError("control frame payload over 125 bytes")
    head = bytearray([0x80 | opcode])
    n = len(payload)
    mask_bit = 0x80 if mask else 0
    if n < 126:
        head.append(mask_bit | n)
    elif n < 1 << 16:
        head.append(mask_bit | 126)
        head += struct.pack(">H", n)
    else:
        head.append(mask_bit | 127)
        head += struct.pack(">Q", n)
    if not mask:
        return bytes(head) + payload
    key = os.urandom(4)
    body = bytes(b ^ key[i % 4] for i, b in enumerate(payload))
    return bytes(head) + key + body


def decode_frame(buf: bytearray):
    """Pop one complete frame off ``buf``; None if more bytes are needed."""

    if len(buf) < 2:
        return None
    b0, b1 = buf[0], buf[1]
    if b0 & 0x70:
        raise ProtocolError("reserved bits set")
    if not b0 & 0x80:
        raise ProtocolError("fragmented frames not supported")
    opcode = b0 & 0x0F
    masked = bool(b1 & 0x80)
    n = b1 & 0x7F
    offset = 2
    if n == 126:
        if len(buf) < 4:
            return None
        (n,) = struct.unpack(">H", bytes(buf[2:4]))
        offset = 4
    elif n == 127:
        if len(buf) < 10:
            return None
        (n,) = struct.unpack(">Q", bytes(buf[2:10]))
        offset = 10
    if n > _MAX_PAYLOAD:
        raise ProtocolError(f"payload of {n} bytes exceeds limit")
    if opcode >= OP_CLOSE and n > 125:
        raise ProtocolError("control frame payload over 125 bytes")
    total = offset + (4 if masked else 0) + n
    if len(buf) < total:
        return None
    if masked:
        key = bytes(buf[offset:offset + 4])
        raw = buf[offset + 4:total]
        payload = bytes(b ^ key[i % 4] for i, b in enumerate(raw))
    else:
        payload = bytes(buf[offset:total])
    del buf[:total]
    return opcode, payload, masked


class WsConnection:
    """One upgraded socket; thread-safe sends, blocking receive loop."""

    def __init__(self, sock, server_side: bool = True):
        self.sock = sock
        self.server_side = server_side
        self._buf = bytearray()
        self._send_lock = threading.Lock()
        self.closed = False

    def send(self, opcode: int, payload: bytes) -> None:
        frame = encode_frame(opcode, payload, mask=not self.server_side)
        with self._send_lock:
            self.sock.sendall(frame)

    def send_text(self, text: str) -> None:
        self.send(OP_TEXT, text.encode("utf-8"))

    def close(self, code: int = 1000) -> None:
        if not self.closed:
            self.closed = True
            try:
                self.send(OP_CLOSE, struct.pack(">H", code))
            except OSError:
                pass
        try:
            self.sock.close()
        except OSError:
            pass

    def recv_message(self):
        """Next text/binary payload; None once the connection is done.

        Pings are answered inline; a close frame is echoed and ends the
        stream. A server-side connection insists on masked client frames.
        """
        while True:
            frame = decode_frame(self._buf)
            if frame is None:
                try:
                    chunk = self.sock.recv(65536)
                except OSError:
                    return None
                if not chunk:
                    return None
                self._buf += chunk
                continue
            opcode, payload, masked = frame
            if self.server_side and not masked:
                raise ProtocolError("client frames must be masked")
            if opcode == OP_PING:
                self.send(OP_PONG, payload)
            elif opcode == OP_PONG:
                continue
            elif opcode == OP_CLOSE:
                self.close()
                return None
            elif opcode in (OP_TEXT, OP_BINARY):
                return opcode, payload
            else:
                raise ProtocolError(f"unsupported opcode {opcode}")
