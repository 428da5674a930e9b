"""Portable model checkpoints.

Layout::

    LMMCKPT v1\\n
    <metadata: one line of JSON with sorted keys>\\n
    uint32 tensor count
    per tensor: uint32 name length, UTF-8 name, uint32 rank, rank x uint32 dims,
                row-major float32 little-endian payload

All integers are little-endian.  Metadata carries the variant, dimensions,
vocabularies and BPE merges, so a checkpoint is self-contained.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .models import ModelDims, build_model
from .tokenization import BpeModel, Vocab

MAGIC = b"LMMCKPT v1\n"
_U32 = struct.Struct("<I")


class CheckpointError(ValueError):
    pass


def model_metadata(model, seed: int = 0, extra: dict | None = None) -> dict:
    d = model.dims
    meta = {
        "variant": model.variant,
        "dims": {"emb": d.emb, "hidden": d.hidden, "lemma": d.lemma,
                 "features": d.features, "mlp_hidden": d.mlp_hidden},
        "src_vocab": model.src_vocab.itos,
        "src_bpe": [list(m) for m in model.src_bpe.merges],
        "seed": seed,
        "dropout": model.dropout_rate,
    }
    if hasattr(model, "tgt_vocab"):
        meta["tgt_vocab"] = model.tgt_vocab.itos
        meta["tgt_bpe"] = [list(m) for m in model.tgt_bpe.merges]
    else:
        meta["tgt_vocab"] = model.char_vocab.itos
        meta["tgt_bpe"] = []
    if model.variant == "lmm":
        meta["stretch_mean"] = bool(model.stretch_mean)
    if extra:
        meta.update(extra)
    return meta


def dumps(model, seed: int = 0, extra: dict | None = None) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    meta = json.dumps(model_metadata(model, seed, extra), sort_keys=True, ensure_ascii=False)
    buf.write(meta.encode("utf-8") + b"\n")
    params = list(model.named_parameters())
    buf.write(_U32.pack(len(params)))
    for name, t in params:
        raw = name.encode("utf-8")
        buf.write(_U32.pack(len(raw)))
        buf.write(raw)
        buf.write(_U32.pack(t.data.ndim))
        for dim in t.data.shape:
            buf.write(_U32.pack(dim))
        buf.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    return buf.getvalue()


def save(model, path, seed: int = 0, extra: dict | None = None) -> None:
    Path(path).write_bytes(dumps(model, seed, extra))


def _read(buf: io.BytesIO, n: int) -> bytes:
    out = buf.read(n)
    if len(out) != n:
        raise CheckpointError("truncated checkpoint")
    return out


def parse(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    """Split checkpoint bytes into (metadata, {name: float32 array})."""
    if not data.startswith(MAGIC):
        raise CheckpointError("not a checkpoint: bad header (expected 'LMMCKPT v1')")
    buf = io.BytesIO(data)
    buf.seek(len(MAGIC))
    line = buf.readline()
    try:
        meta = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt metadata block: {exc}") from None
    (count,) = _U32.unpack(_read(buf, 4))
    tensors = {}
    for _ in range(count):
        (nlen,) = _U32.unpack(_read(buf, 4))
        name = _read(buf, nlen).decode("utf-8")
        (rank,) = _U32.unpack(_read(buf, 4))
        shape = tuple(_U32.unpack(_read(buf, 4))[0] for _ in range(rank))
        size = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(_read(buf, 4 * size), dtype="<f4").reshape(shape)
        tensors[name] = arr
    if buf.read(1):
        raise CheckpointError("trailing bytes after last tensor")
    return meta, tensors


def build_from_metadata(meta: dict):
    d = meta["dims"]
    dims = ModelDims(d["emb"], d["hidden"], d["lemma"], d["features"], d["mlp_hidden"])
    src_vocab = Vocab.from_list(meta["src_vocab"])
    tgt_vocab = Vocab.from_list(meta["tgt_vocab"])
    src_bpe = BpeModel([tuple(m) for m in meta["src_bpe"]])
    tgt_bpe = BpeModel([tuple(m) for m in meta["tgt_bpe"]])
    rng = np.random.default_rng(0)
    return build_model(meta["variant"], dims, src_vocab, src_bpe, tgt_vocab, rng, tgt_bpe,
                       meta.get("dropout", 0.0), meta.get("stretch_mean", False))


def load_params(model, tensors: dict[str, np.ndarray]) -> None:
    """Copy arrays into the model, checking names and shapes."""
    own = dict(model.named_parameters())
    if set(own) != set(tensors):
        missing = sorted(set(own) - set(tensors))
        extra = sorted(set(tensors) - set(own))
        raise CheckpointError(f"parameter mismatch: missing {missing[:3]}, unexpected {extra[:3]}")
    for name, t in own.items():
        arr = tensors[name]
        if arr.shape != t.data.shape:
            raise CheckpointError(f"{name}: shape {arr.shape} does not match model {t.data.shape}")
        t.data = arr.astype(t.data.dtype)


def loads(data: bytes):
    """Rebuild a model from checkpoint bytes; returns (model, metadata)."""
    meta, tensors = parse(data)
    try:
        model = build_from_metadata(meta)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"metadata does not describe a model: {exc}") from None
    load_params(model, tensors)
    return model, meta


def load(path):
    return loads(Path(path).read_bytes())


def check_vocab(meta: dict, src_vocab: Vocab | None = None, tgt_vocab: Vocab | None = None) -> None:
    """Raise if externally supplied vocabularies disagree with the checkpoint."""
    if src_vocab is not None and src_vocab.itos != meta["src_vocab"]:
        raise CheckpointError("source vocabulary does not match checkpoint")
    if tgt_vocab is not None and tgt_vocab.itos != meta["tgt_vocab"]:
        raise CheckpointError("target vocabulary does not match checkpoint")
