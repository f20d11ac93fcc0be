"""Tournament selection and the three genetic operators.

Operators apply per tree index (crossover only between trees at the same
index of the two parents) and never mutate shared structure: offspring are
fresh trees. Depth-7 violations from crossover are repaired by rejecting
the swap at that index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gp_core import (
    ARITY,
    FUNCTION_SET,
    AutoencoderMultiTree,
    MultiTree,
    Node,
    Tree,
    constant,
    depth,
    grow_tree,
    variable,
)

MAX_DEPTH = 7


@dataclass(frozen=True)
class VariationConfig:
    p_c: float = 0.8
    p_s: float = 0.2
    p_o: float = 0.2
    tournament_size: int = 7
    elitism: int = 1
    function_set: tuple = FUNCTION_SET

    def __post_init__(self):
        for r in (self.p_c, self.p_s, self.p_o):
            if not 0.0 <= r <= 1.0:
                raise ValueError(f"rate {r} outside [0, 1]")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be >= 1")


def tournament_select(pop: Sequence, fitnesses, size: int, rng: np.random.Generator):
    """Minimum-fitness winner among ``size`` uniform draws with replacement.

    Ties resolve to the lowest sampled index, so selection is deterministic
    given the random draws.
    """
    n = len(pop)
    draws = np.sort(rng.integers(n, size=size))
    best = draws[0]
    for i in draws[1:]:
        if fitnesses[i] < fitnesses[best]:
            best = i
    return pop[best]


def _nodes_preorder(root: Node) -> list[tuple[Node, int]]:
    """All (node, depth) pairs in preorder."""
    out = []

    def rec(n: Node, d: int):
        out.append((n, d))
        for c in n.children:
            rec(c, d + 1)

    rec(root, 0)
    return out


def _replace_at(root: Node, index: int, replacement: Node) -> Node:
    """Rebuild the tree with the node at the given preorder index replaced.

    Index-based (not identity-based) so duplicated subtree objects, which
    self-crossover can produce, never cause double replacement.
    """
    counter = [0]

    def rec(n: Node) -> Node:
        i = counter[0]
        counter[0] += 1
        if i == index:
            # advance the counter past the replaced subtree
            counter[0] += sum(1 for _ in _iter_nodes(n)) - 1
            return replacement
        if not n.children:
            return n
        return Node(n.op, n.value, tuple(rec(c) for c in n.children))

    return rec(root)


def _iter_nodes(root: Node):
    stack = [root]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(n.children)


def same_index_crossover(
    a: MultiTree,
    b: MultiTree,
    p_c: float,
    rng: np.random.Generator,
) -> tuple[MultiTree, MultiTree]:
    """Per index j, with probability p_c swap uniformly chosen subtrees
    between a.trees[j] and b.trees[j]. Swaps that would exceed MAX_DEPTH
    are rejected at that index; parents are untouched.
    """
    if a.k != b.k or a.input_arity != b.input_arity:
        raise ValueError("parents must share tree count and arity")
    out_a, out_b = [], []
    for ta, tb in zip(a.trees, b.trees):
        if rng.random() >= p_c:
            out_a.append(ta)
            out_b.append(tb)
            continue
        nodes_a = _nodes_preorder(ta.root)
        nodes_b = _nodes_preorder(tb.root)
        ia = int(rng.integers(len(nodes_a)))
        ib = int(rng.integers(len(nodes_b)))
        na, _ = nodes_a[ia]
        nb, _ = nodes_b[ib]
        child_a = Tree(_replace_at(ta.root, ia, nb), ta.input_arity)
        child_b = Tree(_replace_at(tb.root, ib, na), tb.input_arity)
        if depth(child_a) > MAX_DEPTH or depth(child_b) > MAX_DEPTH:
            out_a.append(ta)
            out_b.append(tb)
        else:
            out_a.append(child_a)
            out_b.append(child_b)
    return MultiTree(tuple(out_a)), MultiTree(tuple(out_b))


def subtree_mutation(
    mt: MultiTree,
    p_s: float,
    rng: np.random.Generator,
    function_set: Sequence[str] = FUNCTION_SET,
) -> MultiTree:
    """Per tree with probability p_s, replace a uniformly chosen node's
    subtree by a fresh grow subtree bounded to the remaining depth budget.
    """
    out = []
    for t in mt.trees:
        if rng.random() >= p_s:
            out.append(t)
            continue
        nodes = _nodes_preorder(t.root)
        idx = int(rng.integers(len(nodes)))
        _, d = nodes[idx]
        fresh = grow_tree(t.input_arity, MAX_DEPTH - d, rng, function_set)
        out.append(Tree(_replace_at(t.root, idx, fresh), t.input_arity))
    return MultiTree(tuple(out))


def _mutate_symbol(
    node: Node, input_arity: int, rng: np.random.Generator,
    function_set: Sequence[str],
) -> Node:
    if node.is_terminal():
        if rng.random() < 0.9:
            return variable(int(rng.integers(input_arity)))
        return constant(float(rng.normal()))
    choices = [f for f in function_set if ARITY[f] == ARITY[node.op]]
    name = choices[int(rng.integers(len(choices)))]
    return Node(name, None, node.children)


def one_point_mutation(
    mt: MultiTree,
    p_o: float,
    rng: np.random.Generator,
    function_set: Sequence[str] = FUNCTION_SET,
) -> MultiTree:
    """Per tree with probability p_o, swap one node's symbol for another of
    identical arity; tree shape is unchanged.
    """
    out = []
    for t in mt.trees:
        if rng.random() >= p_o:
            out.append(t)
            continue
        nodes = _nodes_preorder(t.root)
        idx = int(rng.integers(len(nodes)))
        target, _ = nodes[idx]
        replacement = _mutate_symbol(target, t.input_arity, rng, function_set)
        out.append(Tree(_replace_at(t.root, idx, replacement), t.input_arity))
    return MultiTree(tuple(out))


def _vary_pair(pa, pb, cfg: VariationConfig, rng: np.random.Generator):
    """Crossover -> subtree mutation -> one-point mutation on one parent pair.

    AMT genomes vary encoder-with-encoder and decoder-with-decoder.
    """
    if isinstance(pa, AutoencoderMultiTree):
        ea, eb = same_index_crossover(pa.encoder, pb.encoder, cfg.p_c, rng)
        da, db = same_index_crossover(pa.decoder, pb.decoder, cfg.p_c, rng)
        parts = []
        for enc, dec in ((ea, da), (eb, db)):
            enc = subtree_mutation(enc, cfg.p_s, rng, cfg.function_set)
            dec = subtree_mutation(dec, cfg.p_s, rng, cfg.function_set)
            enc = one_point_mutation(enc, cfg.p_o, rng, cfg.function_set)
            dec = one_point_mutation(dec, cfg.p_o, rng, cfg.function_set)
            parts.append(AutoencoderMultiTree(enc, dec))
        return parts
    ca, cb = same_index_crossover(pa, pb, cfg.p_c, rng)
    out = []
    for c in (ca, cb):
        c = subtree_mutation(c, cfg.p_s, rng, cfg.function_set)
        c = one_point_mutation(c, cfg.p_o, rng, cfg.function_set)
        out.append(c)
    return out


def next_generation(
    pop: Sequence,
    fitnesses,
    cfg: VariationConfig,
    rng: np.random.Generator,
) -> list:
    """Elites copied verbatim, the rest filled by varied tournament parents.

    Population size is preserved exactly.
    """
    n = len(pop)
    if n < 2:
        raise ValueError("population must have at least 2 genomes")
    order = np.argsort(fitnesses, kind="stable")
    new_pop = [pop[i] for i in order[: cfg.elitism]]
    while len(new_pop) < n:
        pa = tournament_select(pop, fitnesses, cfg.tournament_size, rng)
        pb = tournament_select(pop, fitnesses, cfg.tournament_size, rng)
        for child in _vary_pair(pa, pb, cfg, rng):
            if len(new_pop) < n:
                new_pop.append(child)
    return new_pop
