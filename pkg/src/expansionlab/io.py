"""JSON reading and deterministic JSON writing.

Floats are written with 17 significant digits (``%.16e``) so that equal
inputs give byte-identical reports; non-finite values become the strings
``"inf"``, ``"-inf"`` and ``"nan"``.
"""

from __future__ import annotations

import dataclasses
import json
import math

import numpy as np

from .errors import LabError, SchemaError
from .group_actions import ChainLevel, FiniteAction, GeneratorSet, gen_schreier_chain
from .markov_core import FiniteMeasureSpace, MarkovKernel
from .warped_cone import FiniteMetric

SCHEMA_VERSION = 1


# -- writing -----------------------------------------------------------------

def _plain(obj):
    """Convert dataclasses, numpy values and tuples into JSON-ready values."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)
                if not f.name.startswith("_")}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def _fmt_float(x):
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return "%.16e" % x


def _emit(v, indent, level, out):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(v, dict):
        if not v:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, x) in enumerate(v.items()):
            out.append(pad + json.dumps(k) + ": ")
            _emit(x, indent, level + 1, out)
            out.append(",\n" if i < len(v) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(v, list):
        if not v:
            out.append("[]")
            return
        if all(not isinstance(x, (dict, list)) for x in v):
            out.append("[" + ", ".join(_scalar(x) for x in v) + "]")
            return
        out.append("[\n")
        for i, x in enumerate(v):
            out.append(pad)
            _emit(x, indent, level + 1, out)
            out.append(",\n" if i < len(v) - 1 else "\n")
        out.append(end + "]")
    else:
        out.append(_scalar(v))


def _scalar(x):
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, float):
        return _fmt_float(x)
    if isinstance(x, int):
        return str(x)
    return json.dumps(x)


def dumps(obj, indent=2):
    """Deterministic JSON text; adds ``schema_version`` to top-level objects."""
    v = _plain(obj)
    if isinstance(v, dict) and "schema_version" not in v:
        v = {"schema_version": SCHEMA_VERSION, **v}
    out = []
    _emit(v, indent, 0, out)
    return "".join(out) + "\n"


# -- reading -----------------------------------------------------------------

def loads(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(exc.msg, exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object", 1, 1)
    ver = doc.get("schema_version", SCHEMA_VERSION)
    if ver != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {ver!r}", path="$.schema_version")
    return doc


def _need(doc, key, path, kind=None):
    if key not in doc:
        raise SchemaError(f"missing field {key!r}", path=path)
    v = doc[key]
    if kind is not None and not isinstance(v, kind):
        raise SchemaError(f"field {key!r} has the wrong type", path=f"{path}.{key}")
    return v


def _numbers(v, path):
    try:
        a = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise SchemaError("expected numbers", path=path) from None
    return a


def _wrap(fn, path):
    try:
        return fn()
    except LabError:
        raise
    except (ValueError, KeyError, TypeError, IndexError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        raise SchemaError(str(msg), path=path) from None


def _space(doc, path="$"):
    pts = _need(doc, "points", path, list)
    w = _numbers(_need(doc, "weights", path, list), f"{path}.weights")
    ids = tuple(tuple(p) if isinstance(p, list) else p for p in pts)
    return _wrap(lambda: FiniteMeasureSpace(ids, w), path)


def kernel_from_doc(doc):
    space = _space(doc)
    P = _numbers(_need(doc, "transition", "$", list), "$.transition")
    m = doc.get("reversing_measure")
    m = None if m is None else _numbers(m, "$.reversing_measure")
    return _wrap(lambda: MarkovKernel(space, P, m), "$")


def _generators(doc, path, with_perm=True):
    gens = _need(doc, "generators", path, list)
    syms, inv, ln, perm = [], {}, {}, {}
    identity = doc.get("identity")
    for i, g in enumerate(gens):
        gp = f"{path}.generators[{i}]"
        if not isinstance(g, dict):
            raise SchemaError("generator entries must be objects", path=gp)
        s = str(_need(g, "symbol", gp))
        syms.append(s)
        inv[s] = str(g.get("inverse", s))
        ln[s] = int(g.get("length", 1))
        if with_perm:
            perm[s] = _need(g, "perm", gp, list)
        if identity is None and ln[s] == 0:
            identity = s
    gset = _wrap(lambda: GeneratorSet(tuple(syms), inv, ln, identity), f"{path}.generators")
    return gset, perm


def action_from_doc(doc):
    space = _space(doc)
    gens, perm = _generators(doc, "$")
    return _wrap(lambda: FiniteAction(space, gens, perm), "$.generators")


def metric_from_doc(doc, space):
    if "metric" not in doc or doc["metric"] is None:
        return None
    D = _numbers(doc["metric"], "$.metric")
    return _wrap(lambda: FiniteMetric(space, D), "$.metric")


def chain_from_doc(doc):
    gens, _ = _generators(doc, "$", with_perm=False)
    levels = []
    for i, lev in enumerate(_need(doc, "levels", "$", list)):
        lp = f"$.levels[{i}]"
        perms = _need(lev, "perms", lp, dict)
        n = len(next(iter(perms.values()))) if perms else 0
        proj = lev.get("project_to_previous")
        levels.append(ChainLevel(n, perms, proj))
    return _wrap(lambda: gen_schreier_chain(gens, levels), "$.levels")


def kind_of(doc):
    if "transition" in doc:
        return "kernel"
    if "levels" in doc:
        return "chain"
    if "generators" in doc:
        return "action"
    raise SchemaError("cannot tell the document kind: expected 'transition', "
                      "'generators' or 'levels'", path="$")


# -- documents from objects --------------------------------------------------

def kernel_doc(kernel):
    m = kernel.reversing_measure
    return {
        "schema_version": SCHEMA_VERSION,
        "points": list(kernel.space.point_ids),
        "weights": kernel.space.weights,
        "transition": kernel.transition,
        "reversing_measure": None if m is None else m,
    }


def action_doc(action, metric=None):
    gens = []
    for s in action.gens.symbols:
        gens.append({
            "symbol": s,
            "inverse": action.gens.inverse_of[s],
            "length": action.gens.length[s],
            "perm": action.perm[s],
        })
    doc = {
        "schema_version": SCHEMA_VERSION,
        "points": list(action.space.point_ids),
        "weights": action.space.weights,
        "identity": action.gens.identity,
        "generators": gens,
    }
    if metric is not None:
        doc["metric"] = metric.dist
    return doc


def chain_doc(gens, levels):
    out = []
    for lev in levels:
        proj = lev.project_to_previous
        out.append({
            "perms": {s: lev.perms[s] for s in gens.symbols},
            "project_to_previous": None if proj is None else proj,
        })
    return {
        "schema_version": SCHEMA_VERSION,
        "identity": gens.identity,
        "generators": [{"symbol": s, "inverse": gens.inverse_of[s], "length": gens.length[s]}
                       for s in gens.symbols],
        "levels": out,
    }
