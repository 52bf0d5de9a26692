"""Reading and writing networks, alignments and fitted models.

Edge lists are UTF-8 text with one undirected edge per line given as two
whitespace-separated node labels. Anything after ``#`` is a comment and
blank lines are ignored. An optional node file lists one label per line
and fixes the node order; without it the nodes are the edge endpoints in
sorted order.

An alignment file maps target labels to source labels, one
``target_label source_label`` pair per line.

Model files are JSON objects with the keys ``k``, ``labels``, ``alpha``,
``z`` and ``provenance``.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .core import Graph, _theta
from .errors import AmbiguousAlignment, DuplicateNode, MissingNode, ParseError, SelfLoop
from .transfer import TransferProblem

MODEL_FORMAT = "lsmtransfer-model/1"


def _records(path) -> Iterator[Tuple[int, List[str]]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            fields = raw.split("#", 1)[0].split()
            if fields:
                yield lineno, fields


def read_labels(path) -> List[str]:
    """Node labels from a node file, in file order."""
    labels, seen = [], {}
    for lineno, fields in _records(path):
        if len(fields) != 1:
            raise ParseError(f"expected one label, found {len(fields)} fields", path, lineno)
        label = fields[0]
        if label in seen:
            raise DuplicateNode(f"{path}:{lineno}: node {label!r} already listed on line {seen[label]}")
        seen[label] = lineno
        labels.append(label)
    return labels


def read_pairs(path) -> List[Tuple[int, str, str]]:
    """``(line, u, v)`` for every two-label record of ``path``."""
    out = []
    for lineno, fields in _records(path):
        if len(fields) != 2:
            raise ParseError(f"expected two labels, found {len(fields)} fields", path, lineno)
        out.append((lineno, fields[0], fields[1]))
    return out


def load_graph(path, node_path=None, name: Optional[str] = None) -> Graph:
    """Read an undirected graph from an edge list.

    Repeated edges, in either orientation, collapse to one.

    Raises
    ------
    ParseError
        Malformed line, or an edge naming a node absent from ``node_path``.
    SelfLoop
        An edge from a node to itself.
    DuplicateNode
        A label listed twice in ``node_path``.
    """
    edges = read_pairs(path)
    for lineno, u, v in edges:
        if u == v:
            raise SelfLoop(f"{path}:{lineno}: self-loop on node {u!r}")
    if node_path is not None:
        labels = read_labels(node_path)
    else:
        labels = sorted({x for _, u, v in edges for x in (u, v)})
    index = {lab: i for i, lab in enumerate(labels)}
    n = len(labels)
    if n < 2:
        raise ParseError("a graph needs at least 2 nodes", path)
    adj = np.zeros((n, n))
    for lineno, u, v in edges:
        try:
            i, j = index[u], index[v]
        except KeyError as exc:
            raise ParseError(f"node {exc.args[0]!r} is not in the node file", path, lineno) from None
        adj[i, j] = adj[j, i] = 1.0
    if name is None:
        name = os.path.splitext(os.path.basename(str(path)))[0]
    return Graph(adj, tuple(labels), name)


def save_graph(graph: Graph, path, node_path=None) -> None:
    """Write ``graph`` as an edge list, and its node order to ``node_path`` if given.

    Without a node file, isolated nodes and a non-sorted node order are
    not recoverable from the edge list alone.
    """
    iu, ju = np.nonzero(np.triu(graph.adj, 1))
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in zip(iu, ju):
            fh.write(f"{graph.labels[i]} {graph.labels[j]}\n")
    if node_path is not None:
        with open(node_path, "w", encoding="utf-8") as fh:
            fh.writelines(f"{lab}\n" for lab in graph.labels)


def read_alignment(path) -> Dict[str, str]:
    """Target-to-source label map; each side may appear only once."""
    mapping: Dict[str, str] = {}
    used: Dict[str, str] = {}
    for lineno, t, s in read_pairs(path):
        if t in mapping:
            raise AmbiguousAlignment(f"{path}:{lineno}: target node {t!r} is mapped twice")
        if s in used:
            raise AmbiguousAlignment(
                f"{path}:{lineno}: source node {s!r} is already matched to {used[s]!r}")
        mapping[t] = s
        used[s] = t
    return mapping


def align(target: Graph, source: Graph, mapping: Optional[Dict[str, str]] = None) -> np.ndarray:
    """Index in ``source`` of every target node, matched by label or through ``mapping``."""
    where = {lab: i for i, lab in enumerate(source.labels)}
    out = np.empty(target.n, dtype=int)
    for i, lab in enumerate(target.labels):
        key = lab if mapping is None else mapping.get(lab)
        if key is None or key not in where:
            raise MissingNode(lab, source.name)
        out[i] = where[key]
    return out


def load_problem(target_path, source_paths: Sequence, alignment_paths: Optional[Sequence] = None,
                 target_nodes=None, source_nodes: Optional[Sequence] = None) -> TransferProblem:
    """Read a target and its sources and align them.

    Parameters
    ----------
    target_path, source_paths
        Edge-list files.
    alignment_paths : sequence, optional
        One alignment file (or ``None``) per source; sources without one
        are matched on shared labels.
    target_nodes, source_nodes : optional
        Node files for the target and for each source.
    """
    target = load_graph(target_path, target_nodes, name="target")
    source_paths = list(source_paths)
    L = len(source_paths)
    alignment_paths = [None] * L if alignment_paths is None else list(alignment_paths)
    source_nodes = [None] * L if source_nodes is None else list(source_nodes)
    if len(alignment_paths) != L or len(source_nodes) != L:
        raise ValueError("alignment and node files must be given per source")
    sources, maps = [], []
    for path, apath, npath in zip(source_paths, alignment_paths, source_nodes):
        src = load_graph(path, npath)
        mapping = read_alignment(apath) if apath is not None else None
        sources.append(src)
        maps.append(align(target, src, mapping))
    return TransferProblem(target, sources, maps)


def config_hash(config) -> str:
    """Short SHA-256 digest of a JSON-serializable configuration."""
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Model:
    labels: List[str]
    alpha: np.ndarray
    z: np.ndarray
    provenance: Dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.z.shape[1]

    @property
    def theta(self) -> np.ndarray:
        return _theta(self.alpha, self.z)


def dump_model(model: Model) -> str:
    """JSON text of a fitted model; floats keep full precision."""
    doc = {
        "format": MODEL_FORMAT,
        "k": int(model.k),
        "labels": list(model.labels),
        "alpha": [float(x) for x in model.alpha],
        "z": [[float(x) for x in row] for row in model.z],
        "provenance": model.provenance,
    }
    return json.dumps(doc, indent=1) + "\n"


def save_model(model: Model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_model(model))


def load_model(path) -> Model:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", path, exc.lineno) from None
    try:
        labels = [str(x) for x in doc["labels"]]
        alpha = np.asarray(doc["alpha"], dtype=float)
        k = int(doc["k"])
        z = np.asarray(doc["z"], dtype=float).reshape(len(labels), k)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed model file ({exc})", path) from None
    if alpha.shape != (len(labels),):
        raise ParseError("alpha length does not match labels", path)
    return Model(labels, alpha, z, doc.get("provenance", {}))
