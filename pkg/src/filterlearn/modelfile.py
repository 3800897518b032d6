"""Self-describing JSON model files.

Layout::

    {"format": "filterlearn-model", "version": 1, "kind": ..., "encoding": "binary" | "text",
     "params": {...hyperparameters...},
     "arrays": {name: {"rows": r, "cols": c, "ndim": 1 | 2, "data": ...}}}

Arrays are row-major 64-bit floats. ``binary`` stores them as base64 of
little-endian IEEE-754 doubles and round-trips bit-exactly; ``text`` stores
shortest round-trip decimal literals. Keys are sorted and nothing
time-dependent is written, so identical inputs give identical files.
"""

from __future__ import annotations

import base64
import json
import os
from pathlib import Path

import numpy as np

from .decoder import FilterSet
from .iqa import MsUniqueModel, UniqueModel
from .texture import IndexEntry, RetrievalIndex, TextureModel
from .whitening import WhiteningChain, WhiteningTransform

FORMAT = "filterlearn-model"
VERSION = 1
KINDS = ("filterset", "unique", "msunique", "texture", "index")


class ModelFormatError(ValueError):
    pass


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def encode_array(a, binary: bool) -> dict:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim not in (1, 2):
        raise ValueError("only 1-d and 2-d arrays are stored")
    rows, cols = (1, a.shape[0]) if a.ndim == 1 else a.shape
    flat = np.ascontiguousarray(a).ravel()
    if binary:
        data = base64.b64encode(flat.astype("<f8").tobytes()).decode("ascii")
    else:
        data = [float(v) for v in flat]
    return {"rows": int(rows), "cols": int(cols), "ndim": int(a.ndim), "data": data}


def decode_array(rec: dict, binary: bool) -> np.ndarray:
    try:
        rows, cols, ndim, data = rec["rows"], rec["cols"], rec.get("ndim", 2), rec["data"]
    except KeyError as exc:
        raise ModelFormatError(f"array record missing {exc}") from None
    if binary:
        flat = np.frombuffer(base64.b64decode(data), dtype="<f8").astype(np.float64)
    else:
        flat = np.array(data, dtype=np.float64)
    if flat.size != rows * cols:
        raise ModelFormatError(f"array declares {rows}x{cols} but holds {flat.size} values")
    return flat.reshape(cols) if ndim == 1 else flat.reshape(rows, cols)


# -- per-type packing ---------------------------------------------------------

def _put_filterset(arrays, prefix, fs: FilterSet):
    for name in ("w1", "b1", "w2", "b2"):
        arrays[prefix + name] = getattr(fs, name)
    return _jsonable(fs.provenance)


def _get_filterset(arrays, prefix, provenance) -> FilterSet:
    return FilterSet(*(arrays[prefix + n] for n in ("w1", "b1", "w2", "b2")), provenance=provenance or {})


def _put_chain(arrays, chain: WhiteningChain | None):
    if chain is None:
        return None
    arrays["chain_base_mean"] = chain.base_mean
    eps = []
    for i, t in enumerate(chain.stages):
        for name in ("w", "mean", "eigvals", "eigvecs"):
            arrays[f"chain{i}_{name}"] = getattr(t, name)
        eps.append(t.epsilon)
    return {"k": chain.k, "epsilon": eps}


def _get_chain(arrays, meta) -> WhiteningChain | None:
    if meta is None:
        return None
    stages = tuple(WhiteningTransform(arrays[f"chain{i}_w"], meta["epsilon"][i], arrays[f"chain{i}_mean"],
                                      arrays[f"chain{i}_eigvals"], arrays[f"chain{i}_eigvecs"])
                   for i in range(meta["k"]))
    return WhiteningChain(arrays["chain_base_mean"], stages)


def _pack(obj):
    arrays: dict = {}
    if isinstance(obj, FilterSet):
        return "filterset", {"provenance": _put_filterset(arrays, "", obj)}, arrays
    if isinstance(obj, UniqueModel):
        params = {"provenance": _put_filterset(arrays, "", obj.filter_set),
                  "whitening": obj.whitening, "activation_threshold": obj.activation_threshold,
                  "k": obj.k, "epsilon": obj.epsilon, "chain": _put_chain(arrays, obj.training_chain)}
        return "unique", params, arrays
    if isinstance(obj, MsUniqueModel):
        prov = []
        for i, (fs, mask) in enumerate(zip(obj.filter_sets, obj.edge_masks)):
            prov.append(_put_filterset(arrays, f"fs{i}_", fs))
            arrays[f"fs{i}_edge"] = np.asarray(mask, dtype=np.float64)
        params = {"provenance": prov, "h_values": list(obj.h_values), "edge_weight": obj.edge_weight,
                  "whitening": obj.whitening, "k": obj.k, "epsilon": obj.epsilon,
                  "chain": _put_chain(arrays, obj.training_chain)}
        return "msunique", params, arrays
    if isinstance(obj, TextureModel):
        prov = {layer: _put_filterset(arrays, layer + "_", getattr(obj, layer + "_filters"))
                for layer in ("color", "p2", "p3", "final")}
        for name in ("color_mean", "p3_mean", "final_mean"):
            arrays[name] = getattr(obj, name)
        params = {"provenance": prov, "pool_size": obj.pool_size, "dims": list(obj.dims),
                  "structure_whitening": obj.structure_whitening, "k_structure": obj.k_structure,
                  "epsilon": obj.epsilon, "pooling": obj.pooling,
                  "p3_scale": obj.p3_scale, "final_scale": obj.final_scale}
        return "texture", params, arrays
    if isinstance(obj, RetrievalIndex):
        arrays["color"] = np.stack([e.color for e in obj.entries])
        arrays["structure"] = np.stack([e.structure for e in obj.entries])
        params = {"ids": [str(e.image_id) for e in obj.entries],
                  "labels": [_jsonable(e.label) for e in obj.entries]}
        return "index", params, arrays
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _unpack(kind, params, arrays):
    if kind == "filterset":
        return _get_filterset(arrays, "", params.get("provenance"))
    if kind == "unique":
        return UniqueModel(_get_filterset(arrays, "", params.get("provenance")), params["whitening"],
                           params["activation_threshold"], params["k"], params["epsilon"],
                           _get_chain(arrays, params.get("chain")))
    if kind == "msunique":
        sets = tuple(_get_filterset(arrays, f"fs{i}_", p) for i, p in enumerate(params["provenance"]))
        masks = tuple(arrays[f"fs{i}_edge"].astype(bool) for i in range(len(sets)))
        return MsUniqueModel(sets, masks, params["edge_weight"], params["whitening"], params["k"],
                             params["epsilon"], _get_chain(arrays, params.get("chain")))
    if kind == "texture":
        prov = params["provenance"]
        return TextureModel(*(_get_filterset(arrays, layer + "_", prov.get(layer))
                              for layer in ("color", "p2", "p3", "final")),
                            arrays["color_mean"], arrays["p3_mean"], arrays["final_mean"],
                            params["pool_size"], params["structure_whitening"], params["k_structure"],
                            params["epsilon"], params.get("pooling", "order"),
                            params.get("p3_scale", 1.0), params.get("final_scale", 1.0))
    if kind == "index":
        return RetrievalIndex(tuple(IndexEntry(i, lab, c, s) for i, lab, c, s in
                                    zip(params["ids"], params["labels"], arrays["color"], arrays["structure"])))
    raise ModelFormatError(f"unknown model kind {kind!r}")


def dumps(obj, binary: bool = True) -> str:
    kind, params, arrays = _pack(obj)
    doc = {"format": FORMAT, "version": VERSION, "kind": kind,
           "encoding": "binary" if binary else "text", "params": _jsonable(params),
           "arrays": {k: encode_array(v, binary) for k, v in arrays.items()}}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def loads(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not a model file: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ModelFormatError("not a filterlearn model file")
    if doc.get("version") != VERSION:
        raise ModelFormatError(f"unsupported model file version {doc.get('version')!r}")
    binary = doc.get("encoding") == "binary"
    if doc.get("encoding") not in ("binary", "text"):
        raise ModelFormatError(f"unknown encoding {doc.get('encoding')!r}")
    arrays = {k: decode_array(v, binary) for k, v in doc.get("arrays", {}).items()}
    try:
        return _unpack(doc.get("kind"), doc.get("params", {}), arrays)
    except KeyError as exc:
        raise ModelFormatError(f"model file missing field {exc}") from None


def save(path, obj, binary: bool = True) -> None:
    text = dumps(obj, binary)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def load(path):
    return loads(Path(path).read_text())


def kind_of(path) -> str:
    return json.loads(Path(path).read_text()).get("kind")
