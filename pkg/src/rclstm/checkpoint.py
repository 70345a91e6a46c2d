"""RCLSTM1 checkpoint files.

Layout::

    RCLSTM1\\n
    <one line of JSON: dimensions, STFT settings, hyperparameters, array table>\\n
    <every parameter array as little-endian float64, C order, in the table's order>

The array order is layer1.f1 (input, recurrent, bias), layer1.f2, layer2.f1,
layer2.f2, dense.g1 (weights, bias), dense.g2.
"""

import json
from pathlib import Path

import numpy as np

from rclstm.errors import AudioIOError, ConfigurationError
from rclstm.neuralnet import RclstmNetworkParams, parameter_shapes

MAGIC = b"RCLSTM1"


def save_checkpoint(path, net, metadata=None):
    header = dict(metadata or {})
    header.update(
        num_bins=net.num_bins,
        layer1_units=net.layer1_units,
        layer2_units=net.layer2_units,
        num_parameters=net.num_parameters,
        arrays=[[name, list(a.shape)] for name, a in net.named_arrays()],
    )
    blob = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in net.arrays())
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC + b"\n")
            fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
            fh.write(blob)
    except OSError as exc:
        raise AudioIOError(f"{path}: cannot write checkpoint ({exc})") from exc


def load_checkpoint(path):
    """Return ``(net, header)``; dimensions are validated against the header."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise AudioIOError(f"{path}: cannot read checkpoint ({exc})") from exc
    first = data.find(b"\n")
    second = data.find(b"\n", first + 1)
    if data[:first] != MAGIC or second < 0:
        raise AudioIOError(f"{path}: not an RCLSTM1 checkpoint")
    try:
        header = json.loads(data[first + 1:second])
    except ValueError as exc:
        raise AudioIOError(f"{path}: corrupt checkpoint header ({exc})") from exc
    try:
        k, q1, q2 = header["num_bins"], header["layer1_units"], header["layer2_units"]
    except KeyError as exc:
        raise AudioIOError(f"{path}: checkpoint header lacks {exc}") from exc
    shapes = parameter_shapes(k, q1, q2)
    if [tuple(s) for _, s in header.get("arrays", [])] != shapes:
        raise ConfigurationError(f"{path}: array table does not match dims ({k}, {q1}, {q2})")
    payload = data[second + 1:]
    expected = sum(int(np.prod(s)) for s in shapes)
    if len(payload) != 8 * expected:
        raise AudioIOError(f"{path}: expected {8 * expected} bytes of parameters, found {len(payload)}")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    arrays, pos = [], 0
    for s in shapes:
        size = int(np.prod(s))
        arrays.append(values[pos:pos + size].reshape(s).copy())
        pos += size
    return RclstmNetworkParams.from_arrays(k, q1, q2, arrays), header
