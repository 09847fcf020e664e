"""Byte-level conformance against golden request/response fixtures.

The golden directory holds `<case>_request.bin` / `<case>_response.bin`
pairs plus stored error responses. Each request is replayed through the
server loop; the produced bytes must match the stored response bitwise for
the identity model, while neural models only have to echo dims and stay
finite and in range. Malformed-traffic cases (truncation, bad magic) are
synthesized from the first request fixture and checked against the stored
error responses.
"""

import glob
import io
import os

import numpy as np

from . import protocol
from .server import handle_stream


def _run_bytes(blob, model):
    out = io.BytesIO()
    handle_stream(io.BytesIO(blob).read, out.write, model)
    return out.getvalue()


def _check_ok_response(blob, request_blob):
    """Neural-model rule: header echoes the request dims; payload finite in [0,1]."""
    req_head = protocol.HEADER.unpack(request_blob[:protocol.HEADER.size])
    head = protocol.HEADER.unpack(blob[:protocol.HEADER.size])
    if head[2] != protocol.MSG_OK:
        return f"response message {head[2]}, want {protocol.MSG_OK}"
    if head[3:9] != req_head[3:9]:
        return f"dims not echoed: {head[3:9]} vs {req_head[3:9]}"
    flat = np.frombuffer(blob[protocol.HEADER.size:], dtype="<f4")
    if flat.size != head[10]:
        return f"payload holds {flat.size} elements, header says {head[10]}"
    if not np.all(np.isfinite(flat)) or flat.min() < 0 or flat.max() > 1:
        return "payload not finite in [0, 1]"
    return None


def run_conformance(golden_dir, model, bitwise=True):
    """Returns (passed, failures). `bitwise` applies the identity-model rule."""
    failures = []
    requests = sorted(glob.glob(os.path.join(golden_dir, "*_request.bin")))
    if not requests:
        return False, [f"no request fixtures in {golden_dir}"]
    for req_path in requests:
        case = os.path.basename(req_path)[:-len("_request.bin")]
        resp_path = os.path.join(golden_dir, f"{case}_response.bin")
        with open(req_path, "rb") as fh:
            request = fh.read()
        got = _run_bytes(request, model)
        if bitwise:
            if not os.path.exists(resp_path):
                failures.append(f"{case}: missing response fixture")
                continue
            with open(resp_path, "rb") as fh:
                want = fh.read()
            if got != want:
                failures.append(f"{case}: response differs from golden bytes")
        else:
            problem = _check_ok_response(got, request)
            if problem:
                failures.append(f"{case}: {problem}")

    with open(requests[0], "rb") as fh:
        sample = fh.read()
    synthetic = {
        "error_truncated": sample[:-8],
        "error_bad_magic": b"DICS" + sample[4:],
    }
    for case, blob in synthetic.items():
        golden = os.path.join(golden_dir, f"{case}_response.bin")
        got = _run_bytes(blob, model)
        if os.path.exists(golden):
            with open(golden, "rb") as fh:
                want = fh.read()
            if got != want:
                failures.append(f"{case}: error response differs from golden bytes")
        else:
            failures.append(f"{case}: missing error fixture")
    return not failures, failures
