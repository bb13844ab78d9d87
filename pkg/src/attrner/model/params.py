"""Parameter store, initialization and the checkpoint file format."""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import CheckpointError, ConfigError
from ..injection import InjectionMode
from .config import ModelConfig

MAGIC = b"ATTRNER-CKPT 1\n"

def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every tensor exists regardless of injection mode; unused ones get zero gradient."""
    d, k, s = cfg.d_model, cfg.tag_vocab, cfg.label_vocab
    shapes = {
        "tok_emb": (cfg.token_vocab, d),
        "posn_emb": (cfg.num_positions, d),
        "cls_emb": (d,),
        "label_emb": (s, d),
        "posattr_emb": (cfg.pos_vocab, d),
        "proj_w": (3 * d, d),
        "proj_b": (d,),
        "emb_ln_g": (d,),
        "emb_ln_b": (d,),
    }
    for layer in range(cfg.n_layers):
        p = f"layer{layer}."
        shapes.update({
            p + "q_w": (d, d), p + "q_b": (d,),
            p + "k_w": (d, d), p + "k_b": (d,),
            p + "v_w": (d, d), p + "v_b": (d,),
            p + "o_w": (d, d), p + "o_b": (d,),
            p + "ln1_g": (d,), p + "ln1_b": (d,),
            p + "ff1_w": (d, cfg.d_ff), p + "ff1_b": (cfg.d_ff,),
            p + "ff2_w": (cfg.d_ff, d), p + "ff2_b": (d,),
            p + "ln2_g": (d,), p + "ln2_b": (d,),
            p + "ws_q": (d, d), p + "wp_q": (d, d),
            p + "ws_k": (d, d), p + "wp_k": (d, d),
        })
    shapes.update({
        "ner_w": (d, k),
        "ner_b": (k,),
        "cls_ws": (d, k),
        "cls_wp": (d, k),
        "crf_trans": (k, k),
        "crf_start": (k,),
        "crf_end": (k,),
        "sent_w": (d, s),
        "sent_b": (s,),
        "ent_w": (d, 1),
        "ent_b": (1,),
    })
    return shapes


def _is_bias(name: str) -> bool:
    return name.endswith("_b") or name in ("crf_start", "crf_end", "crf_trans")


@dataclass
class Parameters:
    """Named float64 tensors plus the config that determined their shapes."""

    config: ModelConfig
    mode: InjectionMode
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name):
        return self.tensors[name]

    def __setitem__(self, name, value):
        self.tensors[name] = value

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def copy(self) -> "Parameters":
        return Parameters(self.config, self.mode, {k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}

    def num_scalars(self) -> int:
        return sum(v.size for v in self.tensors.values())

    def attribute_tensors(self) -> list[str]:
        """Tensors owned by the active injection site (zeroing them gives the baseline)."""
        site = self.mode.site
        out = []
        if site == "embedding":
            out = ["proj_w[label]" if self.mode.use_label else None,
                   "proj_w[pos]" if self.mode.use_pos else None]
        elif site == "attention":
            for layer in range(self.config.n_layers):
                if self.mode.use_label:
                    out += [f"layer{layer}.ws_q", f"layer{layer}.ws_k"]
                if self.mode.use_pos:
                    out += [f"layer{layer}.wp_q", f"layer{layer}.wp_k"]
            out += ["label_emb" if self.mode.use_label else None,
                    "posattr_emb" if self.mode.use_pos else None]
        elif site == "classifier":
            out = ["cls_ws" if self.mode.use_label else None, "cls_wp" if self.mode.use_pos else None]
        return [o for o in out if o]

    def zero_attributes(self) -> "Parameters":
        """Copy with every attribute-specific weight of the active site set to zero."""
        out = self.copy()
        d = self.config.d_model
        for name in self.attribute_tensors():
            if name == "proj_w[label]":
                out["proj_w"][d:2 * d] = 0.0
            elif name == "proj_w[pos]":
                out["proj_w"][2 * d:] = 0.0
            else:
                out[name][...] = 0.0
        return out


def init_params(cfg: ModelConfig, seed: int, mode: InjectionMode | None = None) -> Parameters:
    """Seeded initialization.

    Weights and embeddings ~ U(-1/sqrt(d_model), 1/sqrt(d_model)); biases and
    CRF scores zero; layer-norm gains one; the embedding-site projection
    starts as ``[I; 0; 0]`` so the attribute blocks contribute nothing.
    """
    if not isinstance(cfg, ModelConfig):
        raise ConfigError("init_params needs a ModelConfig")
    mode = mode or InjectionMode()
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(cfg.d_model)
    d = cfg.d_model
    tensors = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.split(".")[-1]
        if leaf.endswith("_g"):
            t = np.ones(shape)
        elif _is_bias(name):
            t = np.zeros(shape)
        elif name == "proj_w":
            t = np.zeros(shape)
            t[:d] = np.eye(d)
        else:
            t = rng.uniform(-bound, bound, size=shape)
        tensors[name] = t
    return Parameters(cfg, mode, tensors)


def decays(name: str) -> bool:
    """Weight decay skips biases, layer-norm tensors and CRF scores."""
    return not (_is_bias(name) or name.endswith("_g"))


def save_checkpoint(params: Parameters, path, meta: dict | None = None):
    """Write ``params`` in the documented binary checkpoint format."""
    names = list(params.tensors)
    header = {
        "config": params.config.to_dict(),
        "mode": {"site": params.mode.site, "use_label": params.mode.use_label,
                 "use_pos": params.mode.use_pos},
        "tensors": [{"name": n, "shape": list(params[n].shape)} for n in names],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(params[n], dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[Parameters, dict]:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    off = len(MAGIC)
    try:
        (hlen,) = struct.unpack_from("<Q", data, off)
        off += 8
        header = json.loads(data[off:off + hlen].decode("utf-8"))
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from None
    off += hlen
    cfg = ModelConfig.from_dict(header["config"])
    mode = InjectionMode(**header["mode"])
    expected = param_shapes(cfg)
    tensors = {}
    for entry in header["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if expected.get(name) != shape:
            raise CheckpointError(f"{path}: tensor {name} has shape {shape}, config implies {expected.get(name)}")
        count = int(np.prod(shape, dtype=np.int64))
        if off + 8 * count > len(data):
            raise CheckpointError(f"{path}: truncated while reading tensor {name}")
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).astype(np.float64)
        tensors[name] = arr.reshape(shape)
        off += 8 * count
    if off != len(data):
        raise CheckpointError(f"{path}: {len(data) - off} trailing bytes")
    if set(tensors) != set(expected):
        raise CheckpointError(f"{path}: missing tensors {sorted(set(expected) - set(tensors))}")
    return Parameters(cfg, mode, tensors), header.get("meta", {})
