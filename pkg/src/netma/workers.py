# netma/workers.py
# Framed wire protocol for isolated layer-fit workers, plus the worker main
# loop. A worker owns its layer's raw edges (loaded from a file given on the
# command line) and only ever sends fitted mean values on requested edges,
# so the reply payload is auditable for raw-data leaks.
#
# Frame layout: 4-byte magic "NMA" + version, 1 byte message kind, 8-byte
# big-endian payload length, then a UTF-8 JSON payload in which numpy arrays
# are encoded as {"__nd__": [dtype, shape, base64(little-endian bytes)]}.

from __future__ import annotations

import base64
import json
import selectors
import struct
import sys

import numpy as np

from .core import DispatchError, InvalidInputError

MAGIC = b"NMA1"
KIND_FIT_REQUEST = 1
KIND_FIT_REPLY = 2
KIND_ERROR = 3
KIND_HEARTBEAT = 4

_HEADER = struct.Struct(">4sBQ")


def _encode_obj(obj):
    if isinstance(obj, np.ndarray):
        arr = np.ascontiguousarray(obj)
        data = base64.b64encode(arr.astype(arr.dtype.newbyteorder("<")).tobytes()).decode("ascii")
        return {"__nd__": [arr.dtype.str.lstrip("<>=|"), list(arr.shape), data]}
    if isinstance(obj, dict):
        return {k: _encode_obj(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode_obj(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _decode_obj(obj):
    if isinstance(obj, dict):
        if set(obj.keys()) == {"__nd__"}:
            dtype, shape, data = obj["__nd__"]
            arr = np.frombuffer(base64.b64decode(data), dtype="<" + dtype)
            return arr.reshape(shape).astype(dtype, copy=True)
        return {k: _decode_obj(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode_obj(v) for v in obj]
    return obj


def encode_frame(kind: int, payload: dict) -> bytes:
    body = json.dumps(_encode_obj(payload), sort_keys=True).encode("utf-8")
    return _HEADER.pack(MAGIC, kind, len(body)) + body


def _read_exact(stream, size, timeout=None, layer=None):
    if timeout is not None:
        sel = selectors.DefaultSelector()
        sel.register(stream, selectors.EVENT_READ)
    buf = b""
    try:
        while len(buf) < size:
            if timeout is not None and not sel.select(timeout):
                raise DispatchError("worker read timed out", layer=layer)
            chunk = stream.read(size - len(buf))
            if not chunk:
                raise DispatchError("worker stream closed unexpectedly", layer=layer)
            buf += chunk
    finally:
        if timeout is not None:
            sel.close()
    return buf


def read_frame(stream, timeout=None, layer=None):
    header = _read_exact(stream, _HEADER.size, timeout, layer)
    magic, kind, length = _HEADER.unpack(header)
    if magic != MAGIC:
        raise DispatchError(f"bad frame magic {magic!r}", layer=layer)
    body = _read_exact(stream, length, timeout, layer)
    return kind, _decode_obj(json.loads(body.decode("utf-8")))


def payload_values(payload) -> list[float]:
    """All numeric leaf values in a decoded payload (arrays flattened).

    Used to audit replies for raw-data leaks: scan for sentinel edge values.
    """
    out = []

    def walk(obj):
        if isinstance(obj, np.ndarray):
            out.extend(np.asarray(obj, dtype=float).ravel().tolist())
        elif isinstance(obj, dict):
            for v in obj.values():
                walk(v)
        elif isinstance(obj, (list, tuple)):
            for v in obj:
                walk(v)
        elif isinstance(obj, (int, float)) and not isinstance(obj, bool):
            out.append(float(obj))

    walk(obj=payload)
    return out


def frame_contains_value(frame: bytes, value: float) -> bool:
    """True if the frame's decoded payload contains `value` exactly."""
    kind, payload = read_frame_bytes(frame)
    return any(v == value for v in payload_values(payload))


def read_frame_bytes(frame: bytes):
    import io
    return read_frame(io.BytesIO(frame))


# ---------------------------------------------------------------------------
# Worker side
# ---------------------------------------------------------------------------

def compute_fit_reply(layer, family, payload: dict) -> dict:
    """Run the requested per-dimension fits and build a reply payload.

    The reply carries only fitted mean values on the requested edges plus
    fit metadata; raw layer values never enter it.
    """
    import dataclasses

    from .core import RngStream, canonical_edges
    from .lsm import FitOptions, InitScheme, fit, predict_means

    layer_id = int(payload["layer"])
    dims = [int(d) for d in payload["dims"]]
    edges = canonical_edges(payload["edges"])
    seed = int(payload["seed"])
    o = payload["options"]
    opts_base = FitOptions(
        max_iters=int(o["max_iters"]),
        rel_tol=float(o["rel_tol"]),
        step_init=float(o["step_init"]),
        backtrack_factor=float(o["backtrack_factor"]),
        armijo_c=float(o["armijo_c"]),
        init=InitScheme(o["init"]),
    )
    means = np.empty((len(dims), edges.shape[0]))
    meta = []
    for m, d in enumerate(dims):
        stream = RngStream(seed, f"fit:d={d}", layer=layer_id, fold=0)
        opts = dataclasses.replace(opts_base, rng=stream)
        params = fit(layer, family, d, opts)
        mat = predict_means(params, family)
        means[m] = mat[edges[:, 0], edges[:, 1]]
        meta.append({"d": d, "objective": params.objective,
                     "iterations": params.iterations, "seed": seed})
    return {"layer": layer_id, "dims": dims, "edges": edges, "means": means,
            "meta": meta}


def serve(layer, family, stdin=None, stdout=None):
    """Worker loop: answer heartbeats and fit requests until EOF."""
    stdin = stdin or sys.stdin.buffer
    stdout = stdout or sys.stdout.buffer
    while True:
        try:
            kind, payload = read_frame(stdin)
        except DispatchError:
            return
        if kind == KIND_HEARTBEAT:
            stdout.write(encode_frame(KIND_HEARTBEAT, {"ok": True}))
        elif kind == KIND_FIT_REQUEST:
            try:
                reply = compute_fit_reply(layer, family, payload)
                stdout.write(encode_frame(KIND_FIT_REPLY, reply))
            except Exception as err:  # report, do not crash the stream
                stdout.write(encode_frame(KIND_ERROR, {"error": str(err)}))
        else:
            stdout.write(encode_frame(KIND_ERROR, {"error": f"unknown kind {kind}"}))
        stdout.flush()


def main(argv=None):
    import argparse

    from . import fileio

    parser = argparse.ArgumentParser(prog="netma-worker")
    parser.add_argument("--layer-file", required=True)
    args = parser.parse_args(argv)
    dataset = fileio.read_dataset(args.layer_file)
    if dataset.R != 1:
        raise InvalidInputError("worker layer file must contain exactly one layer")
    serve(dataset.layers[0], dataset.families[0])
    return 0


if __name__ == "__main__":
    sys.exit(main())
