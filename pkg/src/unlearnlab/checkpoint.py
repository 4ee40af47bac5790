"""
Checkpoint persistence for ClassifierParams.

A checkpoint is a JSON document::

    {"format": "unlearnlab-checkpoint", "version": 1, "tag": ...,
     "arch": {"input_dim": .., "hidden_dims": [..], "output_dim": ..},
     "layers": [{"weight": [[..]], "bias": [..]}, ...]}

Reals are written with ``repr`` so loading gives back the same doubles.
"""

import json
import logging

from unlearnlab import utils
from unlearnlab.diffnet import Architecture, ClassifierParams
from unlearnlab.errors import FormatError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "unlearnlab-checkpoint"
CHECKPOINT_VERSION = 1


def _matrix(rows) -> str:
    return "[" + ",".join("[" + ",".join(repr(float(v)) for v in row) + "]" for row in rows) + "]"


def _vector(values) -> str:
    return "[" + ",".join(repr(float(v)) for v in values) + "]"


def dumps_checkpoint(params: ClassifierParams) -> str:
    head = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "tag": params.tag,
        "arch": {
            "input_dim": params.arch.input_dim,
            "hidden_dims": list(params.arch.hidden_dims),
            "output_dim": params.arch.output_dim,
        },
    }
    # json.dumps would also round-trip, this keeps one layer per line
    layers = [
        '{"weight": %s, "bias": %s}' % (_matrix(w), _vector(b))
        for w, b in zip(params.weights, params.biases)
    ]
    body = json.dumps(head)[:-1]
    return body + ', "layers": [\n' + ",\n".join(layers) + "\n]}\n"


def loads_checkpoint(text: str) -> ClassifierParams:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"corrupt checkpoint: {e}") from e
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise FormatError("not an unlearnlab checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise FormatError(
            f"checkpoint version {doc.get('version')!r} is not supported, "
            f"expected {CHECKPOINT_VERSION}"
        )
    try:
        arch = Architecture(
            input_dim=int(doc["arch"]["input_dim"]),
            hidden_dims=tuple(doc["arch"]["hidden_dims"]),
            output_dim=int(doc["arch"]["output_dim"]),
        )
        layers = doc["layers"]
        return ClassifierParams(
            arch,
            tuple(layer["weight"] for layer in layers),
            tuple(layer["bias"] for layer in layers),
            doc.get("tag", "loaded"),
        )
    except (KeyError, TypeError) as e:
        raise FormatError(f"checkpoint is missing a field: {e}") from e
    except ValueError as e:
        raise FormatError(f"checkpoint content is invalid: {e}") from e


def save_checkpoint(filename: str, params: ClassifierParams):
    utils.write_file(filename, dumps_checkpoint(params))
    logger.info("saved checkpoint %s (%s)", filename, params.tag)


def load_checkpoint(filename: str) -> ClassifierParams:
    params = loads_checkpoint(utils.read_file(filename))
    logger.debug("loaded checkpoint %s (%s)", filename, params.tag)
    return params
