"""Synthetic structural causal models with exactly enumerable ground
truth, used to validate the ACE and CMI estimators at desk scale.

Ground truth comes from full enumeration of the (possibly mutilated)
joint distribution, never from sampling, so acceptance tolerances carry
no Monte Carlo error on the oracle side.

Sampling is ancestral in topological order from a documented, portable
generator: a Philox 4x64 counter-based bit generator keyed by the seed
produces one row of uniforms per sample (columns: nodes in topological
order, then continuous-effect emitters in sorted node order); each
categorical value is the inverse CDF of its conditional distribution at
the row's uniform, and emitter noise maps a uniform through the inverse
normal CDF.  Identical (spec, seed) therefore reproduces identical rows,
and rows could be sharded by index without changing output.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtri

from .causal import CausalGraph, ConditionalTable, DiscreteDataset
from .errors import (
    InvalidSpecError,
    NotNormalizedError,
    SchemaError,
    StateExplosionError,
    UnknownLevelError,
)
from .ingest import GraphSpec, parse_graph_spec, write_graph_spec

_STATE_LIMIT = 10 ** 7


@dataclass(frozen=True)
class EffectEmitter:
    """Continuous outcome attached to a categorical error node:
    value = means[category] + spread * standard normal noise."""

    means: tuple[float, ...]
    spread: float


@dataclass
class ScmSpec:
    """Fully specified discrete SCM: graph, exact tables, seed, size."""

    graph: CausalGraph
    tables: dict[str, ConditionalTable]
    seed: int
    n: int
    emitters: dict[str, EffectEmitter] = field(default_factory=dict)

    def validate(self) -> "ScmSpec":
        if self.n < 0:
            raise InvalidSpecError(f"sample count {self.n} is negative")
        for node in self.graph.nodes:
            if node not in self.tables:
                raise InvalidSpecError(f"no table for node {node!r}")
            table = self.tables[node]
            if tuple(table.parents) != tuple(self.graph.parents(node)):
                raise InvalidSpecError(
                    f"table for {node!r} disagrees with graph parents")
            try:
                table.validate_normalized()
            except NotNormalizedError as exc:
                raise InvalidSpecError(str(exc)) from None
        for node, emitter in self.emitters.items():
            if node not in self.graph.nodes:
                raise InvalidSpecError(f"emitter for unknown node {node!r}")
            if len(emitter.means) != len(self.graph.categories[node]):
                raise InvalidSpecError(
                    f"emitter for {node!r}: need one mean per category")
            if emitter.spread < 0:
                raise InvalidSpecError(f"emitter for {node!r}: spread < 0")
        return self


def exact_table(graph: CausalGraph, node: str,
                probs: Mapping[tuple[str, ...], Sequence[float]]
                ) -> ConditionalTable:
    """Build a ConditionalTable from explicitly given probabilities."""
    parents = tuple(graph.parents(node))
    table = ConditionalTable(
        node, parents, graph.categories[node],
        tuple(graph.categories[p] for p in parents),
        probs={cfg: np.asarray(vec, dtype=np.float64)
               for cfg, vec in probs.items()})
    for config in table.parent_configs():
        if config not in table.probs:
            raise InvalidSpecError(
                f"table for {node!r}: no probabilities for config {config}")
    return table


def generate(spec: ScmSpec, n: int | None = None, seed: int | None = None
             ) -> DiscreteDataset:
    """Ancestral sampling; a pure function of (spec, seed)."""
    spec.validate()
    graph = spec.graph
    n = spec.n if n is None else n
    seed = spec.seed if seed is None else seed
    if n < 0:
        raise InvalidSpecError(f"sample count {n} is negative")
    emitter_nodes = sorted(spec.emitters)
    rng = np.random.Generator(np.random.Philox(key=seed))
    u = rng.random((n, len(graph.topo_order) + len(emitter_nodes)))

    code_of: dict[str, np.ndarray] = {}
    for j, node in enumerate(graph.topo_order):
        table = spec.tables[node]
        k = len(graph.categories[node])
        parent_cats = [graph.categories[p] for p in table.parents]
        n_cfg = 1
        for cats in parent_cats:
            n_cfg *= len(cats)
        cum = np.empty((n_cfg, k))
        for idx, config in enumerate(itertools.product(*parent_cats)):
            cum[idx] = np.cumsum(table.dist(config))
        if table.parents:
            cfg_idx = np.zeros(n, dtype=np.int64)
            for p, cats in zip(table.parents, parent_cats):
                cfg_idx = cfg_idx * len(cats) + code_of[p]
            rows = cum[cfg_idx]
        else:
            rows = np.broadcast_to(cum[0], (n, k))
        codes = (u[:, j][:, None] >= rows).sum(axis=1)
        code_of[node] = np.minimum(codes, k - 1).astype(np.int64)

    continuous = {}
    for m, node in enumerate(emitter_nodes):
        emitter = spec.emitters[node]
        noise = ndtri(np.clip(u[:, len(graph.topo_order) + m], 1e-12, 1 - 1e-12))
        means = np.asarray(emitter.means, dtype=np.float64)
        continuous[node] = means[code_of[node]] + emitter.spread * noise

    codes = (np.stack([code_of[v] for v in graph.nodes], axis=1)
             if n else np.zeros((0, len(graph.nodes)), dtype=np.int64))
    return DiscreteDataset(graph.nodes, graph.categories, codes, continuous)


# --- exact enumeration oracles -----------------------------------------------

def _joint_array(spec: ScmSpec, do: Mapping[str, str] | None = None
                 ) -> np.ndarray:
    """Full joint distribution as an array with one axis per node
    (declaration order), optionally under do-surgery on some nodes."""
    graph = spec.graph
    if graph.state_space() > _STATE_LIMIT:
        raise StateExplosionError(
            f"state space {graph.state_space()} exceeds {_STATE_LIMIT}")
    axis = {node: i for i, node in enumerate(graph.nodes)}
    shape = tuple(len(graph.categories[n]) for n in graph.nodes)
    joint = np.ones(shape)
    for node in graph.nodes:
        k = len(graph.categories[node])
        if do is not None and node in do:
            level = do[node]
            if level not in graph.categories[node]:
                raise UnknownLevelError(
                    f"{level!r} is not a category of {node!r}")
            small = np.zeros(k)
            small[graph.categories[node].index(level)] = 1.0
            participating = (node,)
        else:
            table = spec.tables[node]
            parent_cats = [graph.categories[p] for p in table.parents]
            small = np.empty(tuple(len(c) for c in parent_cats) + (k,))
            for idx, config in enumerate(itertools.product(*parent_cats)):
                small[np.unravel_index(idx, small.shape[:-1]) if parent_cats
                      else ()] = table.dist(config)
            participating = table.parents + (node,)
        positions = [axis[v] for v in participating]
        order = np.argsort(positions)
        small = np.transpose(small, order)
        dims = [1] * len(shape)
        for v in participating:
            dims[axis[v]] = len(graph.categories[v])
        joint = joint * small.reshape(dims)
    return joint


def _marginal(spec: ScmSpec, joint: np.ndarray, keep: Sequence[str]
              ) -> np.ndarray:
    axis = {node: i for i, node in enumerate(spec.graph.nodes)}
    drop = tuple(i for n, i in axis.items() if n not in keep)
    return joint.sum(axis=drop)


def _entropy_of(p: np.ndarray) -> float:
    flat = p.ravel()
    nz = flat[flat > 0]
    return float(-np.sum(nz * np.log(nz)))


def _outcome_values(spec: ScmSpec, effect: str) -> np.ndarray:
    """Expected outcome per effect category: emitter means when declared
    (noise is zero-mean), else the ordinal category index."""
    if effect in spec.emitters:
        return np.asarray(spec.emitters[effect].means, dtype=np.float64)
    return np.arange(len(spec.graph.categories[effect]), dtype=np.float64)


def true_ace(spec: ScmSpec, treatment: str, effect: str,
             level_lo: str | None = None, level_hi: str | None = None, *,
             normalized: bool = False) -> float:
    """Exact ACE by enumerating the two mutilated models do(X=hi), do(X=lo)."""
    graph = spec.graph
    cats = graph.categories[treatment]
    lo = cats[0] if level_lo is None else level_lo
    hi = cats[-1] if level_hi is None else level_hi
    outcome = _outcome_values(spec, effect)
    arms = []
    for level in (hi, lo):
        joint = _joint_array(spec, do={treatment: level})
        pe = _marginal(spec, joint, [effect])
        arms.append(float(np.dot(pe, outcome)))
    value = arms[0] - arms[1]
    if normalized:
        value /= len(cats) - 1
    return value


def true_cmi(spec: ScmSpec, x: str, y: str, z: Sequence[str] = ()) -> float:
    """Exact I(X; Y | Z) from the enumerated joint distribution.

    Computed through the entropy identity
    I = H(X,Z) + H(Y,Z) - H(Z) - H(X,Y,Z); exactly zero (after clearing
    enumeration round-off below 1e-12) for d-separated triples.
    """
    z = list(z)
    joint = _joint_array(spec)
    h_xz = _entropy_of(_marginal(spec, joint, [x] + z))
    h_yz = _entropy_of(_marginal(spec, joint, [y] + z))
    h_z = _entropy_of(_marginal(spec, joint, z)) if z else 0.0
    h_xyz = _entropy_of(_marginal(spec, joint, [x, y] + z))
    value = h_xz + h_yz - h_z - h_xyz
    if abs(value) < 1e-12:
        return 0.0
    return max(0.0, value)


# --- built-in fixtures ---------------------------------------------------------

def _softmax_levels(eta: float, k: int, floor: float) -> list[float]:
    """P(level j) proportional to exp(j * eta), floored and renormalized
    so every level keeps sampleable mass."""
    raw = [math.exp(j * eta) for j in range(k)]
    total = sum(raw)
    probs = [max(p / total, floor) for p in raw]
    total = sum(probs)
    return [p / total for p in probs]


# Declared effect coefficients of the nine-node fixture, one row per
# error node: (intercept, age, girl, vocab, gop, snr, words).
_ERROR_COEFFS = {
    "SubsErr": (-0.20, -0.45, 0.06, 0.35, -0.30, -0.25, -0.60),
    "DelErr": (-0.80, -0.10, 0.03, 0.10, -0.08, 0.06, 0.10),
    "InsErr": (-0.40, -0.35, 0.08, 0.15, -0.15, -0.20, -0.45),
}

_EMITTERS = {
    "SubsErr": EffectEmitter((0.05, 0.18, 0.40), 0.02),
    "DelErr": EffectEmitter((0.01, 0.04, 0.10), 0.01),
    "InsErr": EffectEmitter((0.03, 0.12, 0.30), 0.02),
}


def paper_shaped_spec(n: int = 200_000, seed: int = 1732) -> ScmSpec:
    """Nine-node fixture shaped like the default analysis graph.

    Eleven age levels, three-category covariates, the full twenty-edge
    rule set, and continuous error emitters in rate units.  Small enough
    (48,114 joint states) for exact enumeration.
    """
    graph = CausalGraph.builtin("paper-default")
    tables: dict[str, ConditionalTable] = {}
    tables["Age"] = exact_table(graph, "Age", {(): [1 / 11] * 11})
    tables["Gender"] = exact_table(graph, "Gender", {(): [0.52, 0.48]})
    tables["SNR"] = exact_table(graph, "SNR", {(): [0.25, 0.50, 0.25]})
    tables["VocabDiff"] = exact_table(graph, "VocabDiff",
                                      {(): [0.30, 0.45, 0.25]})
    tables["NoWords"] = exact_table(graph, "NoWords", {(): [0.35, 0.40, 0.25]})

    def index_of(node, label):
        return graph.categories[node].index(label)

    def configs(node):
        parents = graph.parents(node)
        for combo in itertools.product(*(graph.categories[p] for p in parents)):
            yield combo, dict(zip(parents, combo))

    gop_probs = {}
    for config, value in configs("GoP"):
        eta = (0.35 * (index_of("Age", value["Age"]) - 5) / 3
               - 0.55 * (index_of("VocabDiff", value["VocabDiff"]) - 1))
        gop_probs[config] = _softmax_levels(eta, 3, floor=0.06)
    tables["GoP"] = exact_table(graph, "GoP", gop_probs)

    for err, (c0, c_age, c_girl, c_vocab, c_gop, c_snr, c_words) in \
            _ERROR_COEFFS.items():
        probs = {}
        for config, value in configs(err):
            eta = (c0
                   + c_age * (index_of("Age", value["Age"]) - 5) / 3
                   + c_girl * index_of("Gender", value["Gender"])
                   + c_vocab * (index_of("VocabDiff", value["VocabDiff"]) - 1)
                   + c_gop * (index_of("GoP", value["GoP"]) - 1)
                   + c_snr * (index_of("SNR", value["SNR"]) - 1)
                   + c_words * (index_of("NoWords", value["NoWords"]) - 1))
            probs[config] = _softmax_levels(eta, 3, floor=0.02)
        tables[err] = exact_table(graph, err, probs)
    return ScmSpec(graph, tables, seed=seed, n=n,
                   emitters=dict(_EMITTERS)).validate()


def copy_chain_spec(n: int = 200_000, seed: int = 97) -> ScmSpec:
    """Two-node fixture where Y deterministically copies X, so
    I(X; Y) equals H(X) exactly."""
    from .ingest import NodeSpec

    spec = GraphSpec(
        nodes=(NodeSpec("X", "exogenous", ("a", "b", "c")),
               NodeSpec("Y", "endogenous", ("a", "b", "c"))),
        edges=(("X", "Y"),),
    )
    graph = CausalGraph(spec)
    tables = {
        "X": exact_table(graph, "X", {(): [0.2, 0.5, 0.3]}),
        "Y": exact_table(graph, "Y", {("a",): [1.0, 0.0, 0.0],
                                      ("b",): [0.0, 1.0, 0.0],
                                      ("c",): [0.0, 0.0, 1.0]}),
    }
    return ScmSpec(graph, tables, seed=seed, n=n).validate()


_BUILTIN_SPECS = {"paper-shaped": paper_shaped_spec,
                  "copy-chain": copy_chain_spec}


def builtin_scm_spec(name: str, n: int | None = None,
                     seed: int | None = None) -> ScmSpec:
    if name not in _BUILTIN_SPECS:
        raise InvalidSpecError(f"no builtin SCM named {name!r}; "
                               f"choices: {sorted(_BUILTIN_SPECS)}")
    spec = _BUILTIN_SPECS[name]()
    if n is not None:
        spec.n = n
    if seed is not None:
        spec.seed = seed
    return spec


# --- document form --------------------------------------------------------------

_CFG_SEP = "|"


def write_scm_spec(spec: ScmSpec) -> str:
    spec.validate()
    tables_doc = {}
    for node, table in spec.tables.items():
        entries = {}
        for config in table.parent_configs():
            for label in config:
                if _CFG_SEP in label:
                    raise InvalidSpecError(
                        f"category label {label!r} contains {_CFG_SEP!r}")
            entries[_CFG_SEP.join(config)] = [float(p)
                                              for p in table.dist(config)]
        tables_doc[node] = entries
    doc = {
        "graph": json.loads(write_graph_spec(spec.graph.spec)),
        "seed": spec.seed,
        "n": spec.n,
        "tables": tables_doc,
        "emitters": {node: {"means": list(e.means), "spread": e.spread}
                     for node, e in sorted(spec.emitters.items())},
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def parse_scm_spec(text: str) -> ScmSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc.msg}") from None
    for key in ("graph", "seed", "n", "tables"):
        if key not in doc:
            raise InvalidSpecError(f"SCM spec missing {key!r}")
    graph = CausalGraph(parse_graph_spec(json.dumps(doc["graph"])))
    tables = {}
    for node in graph.nodes:
        if node not in doc["tables"]:
            raise InvalidSpecError(f"no table for node {node!r}")
        entries = doc["tables"][node]
        probs = {}
        for key, vec in entries.items():
            config = tuple(key.split(_CFG_SEP)) if key else ()
            probs[config] = vec
        tables[node] = exact_table(graph, node, probs)
    emitters = {}
    for node, entry in doc.get("emitters", {}).items():
        emitters[node] = EffectEmitter(tuple(entry["means"]),
                                       float(entry["spread"]))
    return ScmSpec(graph, tables, seed=int(doc["seed"]), n=int(doc["n"]),
                   emitters=emitters).validate()
