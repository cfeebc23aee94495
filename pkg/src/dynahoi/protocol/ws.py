"""Minimal server-side websocket framing adapter.

The wire protocol itself is plain length-prefixed frames over a stream
socket.  Clients that insist on websockets get this shim: it answers the
HTTP upgrade handshake and then tunnels the byte stream through binary
websocket messages, one wire frame per message.  Only what the loop
needs is implemented - no fragmentation, no extensions, no compression;
anything fancier is rejected at the handshake.

Detection is by first bytes: a raw wire client opens with decimal
digits, a websocket client with an HTTP request line, so the server can
serve both on one port.
"""

from __future__ import annotations

import base64
import hashlib
import socket
import struct

WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"
OP_TEXT = 0x1
OP_BINARY = 0x2
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


class WebSocketError(Exception):
    pass


def accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + WS_GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def _read_exact(sock: socket.socket, n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise WebSocketError("connection closed mid-frame")
        buf += chunk
    return buf


def read_frame(sock: socket.socket):
    """Returns (opcode, payload); handles only single-fragment frames."""
    head = _read_exact(sock, 2)
    fin = head[0] & 0x80
    opcode = head[0] & 0x0F
    if not fin:
        raise WebSocketError("fragmented frames are not supported")
    masked = head[1] & 0x80
    length = head[1] & 0x7F
    if length == 126:
        length = struct.unpack(">H", _read_exact(sock, 2))[0]
    elif length == 127:
        length = struct.unpack(">Q", _read_exact(sock, 8))[0]
    mask = _read_exact(sock, 4) if masked else None
    payload = _read_exact(sock, length) if length else b""
    if mask:
        payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    return opcode, payload


def write_frame(sock: socket.socket, opcode: int, payload: bytes) -> None:
    # server frames are unmasked per the RFC
    head = bytes([0x80 | opcode])
    n = len(payload)
    if n < 126:
        head += bytes([n])
    elif n < 1 << 16:
        head += bytes([126]) + struct.pack(">H", n)
    else:
        head += bytes([127]) + struct.pack(">Q", n)
    sock.sendall(head + payload)


def server_handshake(sock: socket.socket, first: bytes) -> None:
    """Complete the upgrade; `first` is whatever was already peeked."""
    data = first
    while b"\r\n\r\n" not in data:
        chunk = sock.recv(4096)
        if not chunk:
            raise WebSocketError("connection closed during handshake")
        data += chunk
        if len(data) > 64 * 1024:
            raise WebSocketError("oversized handshake")
    headers = {}
    lines = data.split(b"\r\n\r\n", 1)[0].decode("latin-1").split("\r\n")
    for line in lines[1:]:
        if ":" in line:
            name, value = line.split(":", 1)
            headers[name.strip().lower()] = value.strip()
    key = headers.get("sec-websocket-key")
    if key is None or "websocket" not in headers.get("upgrade", "").lower():
        raise WebSocketError("not a websocket upgrade request")
    response = (
        "HTTP/1.1 101 Switching Protocols\r\n"
        "Upgrade: websocket\r\n"
        "Connection: Upgrade\r\n"
        f"Sec-WebSocket-Accept: {accept_key(key)}\r\n"
        "\r\n"
    )
    sock.sendall(response.encode("latin-1"))


class WebSocketStream:
    """File-like view over a websocket: read(n)/write/flush/close."""

    def __init__(self, sock: socket.socket) -> None:
        self._sock = sock
        self._buffer = b""
        self._closed = False

    def read(self, n: int) -> bytes:
        while len(self._buffer) < n and not self._closed:
            try:
                opcode, payload = read_frame(self._sock)
            except (WebSocketError, OSError):
                self._closed = True
                break
            if opcode in (OP_BINARY, OP_TEXT):
                self._buffer += payload
            elif opcode == OP_PING:
                write_frame(self._sock, OP_PONG, payload)
            elif opcode == OP_CLOSE:
                self._closed = True
        out, self._buffer = self._buffer[:n], self._buffer[n:]
        return out

    def write(self, data: bytes) -> int:
        write_frame(self._sock, OP_BINARY, data)
        return len(data)

    def flush(self) -> None:
        pass

    def close(self) -> None:
        if not self._closed:
            try:
                write_frame(self._sock, OP_CLOSE, b"")
            except OSError:
                pass
            self._closed = True


def maybe_wrap_websocket(conn: socket.socket):
    """Return a buffered stream for the session, upgrading if needed.

    Peeks the first bytes without consuming: wire frames always start
    with a digit, HTTP requests with a method name.
    """
    first = conn.recv(4, socket.MSG_PEEK)
    if first[:1].isdigit() or not first:
        return conn.makefile("rwb")
    server_handshake(conn, conn.recv(64 * 1024))
    return WebSocketStream(conn)
