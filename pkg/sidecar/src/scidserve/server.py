"""Serial SCID server loop over stdio or TCP.

One response per request, in order. A model failure answers with an error
message and keeps serving; malformed framing (bad magic, truncation) answers
with an error message and ends the connection, since the stream can no longer
be parsed reliably.
"""

import socket
import sys

import numpy as np

from . import protocol


def handle_stream(read, write, model, log=None):
    """Serve one byte stream until end-of-stream or a framing error."""
    while True:
        try:
            request = protocol.read_request(read)
        except protocol.BadMagic:
            write(protocol.encode_error(protocol.ERR_BAD_MAGIC, "bad magic"))
            return
        except protocol.Truncated:
            write(protocol.encode_error(protocol.ERR_TRUNCATED, "truncated"))
            return
        except protocol.BadHeader as exc:
            write(protocol.encode_error(protocol.ERR_BAD_HEADER, str(exc)))
            return
        if request is None:
            return
        arr, sigma, color = request
        try:
            out = model(arr, sigma, color)
            out = np.asarray(out, dtype=np.float64)
            if out.shape != arr.shape or not np.all(np.isfinite(out)):
                raise ValueError("model produced wrong shape or non-finite values")
        except Exception as exc:
            if log is not None:
                log(f"model failure: {exc}")
            write(protocol.encode_error(protocol.ERR_MODEL_FAILURE, str(exc)))
            continue
        write(protocol.encode_ok(out, sigma, color))


def serve_stdio(model, log=None):
    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer

    def write(blob):
        stdout.write(blob)
        stdout.flush()

    handle_stream(stdin.read1 if hasattr(stdin, "read1") else stdin.read,
                  write, model, log)


def serve_tcp(model, port, host="127.0.0.1", log=None, ready=None):
    """Accept connections one at a time; returns only on socket shutdown."""
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as server:
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind((host, port))
        server.listen(1)
        if ready is not None:
            ready(server.getsockname()[1])
        while True:
            try:
                conn, _addr = server.accept()
            except OSError:
                return
            with conn:
                try:
                    handle_stream(conn.recv, conn.sendall, model, log)
                except OSError:
                    pass
