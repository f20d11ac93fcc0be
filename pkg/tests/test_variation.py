import numpy as np
import pytest

from gpdr.gp_core import (
    AutoencoderMultiTree,
    MultiTree,
    Tree,
    constant,
    depth,
    full_tree,
    grow_tree,
    node_count,
    op,
    ramped_autoencoders,
    ramped_half_and_half,
    variable,
)
from gpdr.variation import (
    MAX_DEPTH,
    VariationConfig,
    _nodes_preorder,
    _replace_at,
    next_generation,
    one_point_mutation,
    same_index_crossover,
    subtree_mutation,
    tournament_select,
)


def _mt(rng, arity=3, k=2, dmax=4):
    trees = tuple(Tree(grow_tree(arity, dmax, rng), arity) for _ in range(k))
    return MultiTree(trees)


def test_variation_config_validation():
    with pytest.raises(ValueError):
        VariationConfig(p_c=1.5)
    with pytest.raises(ValueError):
        VariationConfig(tournament_size=0)


def test_tournament_select_prefers_low_fitness():
    pop = list("abcdef")
    fits = [5.0, 1.0, 3.0, 0.5, 2.0, 4.0]
    rng = np.random.default_rng(0)
    # with tournament size equal to the population, the best always wins
    for _ in range(10):
        assert tournament_select(pop, fits, 50, rng) == "d"


def test_tournament_select_tie_breaks_to_lowest_index():
    pop = ["first", "second"]
    rng = np.random.default_rng(1)
    for _ in range(20):
        assert tournament_select(pop, [1.0, 1.0], 10, rng) == "first"


def test_replace_at_is_index_based():
    # a tree whose two children are the same object: replacing preorder
    # index 1 must not touch index 2
    shared = variable(0)
    root = op("+", shared, shared)
    out = _replace_at(root, 1, constant(9.0))
    assert out.children[0] == constant(9.0)
    assert out.children[1] == variable(0)
    # replacing the root returns the replacement itself
    assert _replace_at(root, 0, constant(1.0)) == constant(1.0)


def test_nodes_preorder_depths():
    root = op("+", variable(0), op("*", variable(1), constant(1.0)))
    nodes = _nodes_preorder(root)
    assert [d for _, d in nodes] == [0, 1, 1, 2, 2]


def test_crossover_swaps_only_same_index():
    rng = np.random.default_rng(2)
    a = MultiTree((Tree(variable(0), 2), Tree(variable(0), 2)))
    b = MultiTree((Tree(variable(1), 2), Tree(variable(1), 2)))
    ca, cb = same_index_crossover(a, b, p_c=1.0, rng=rng)
    # single-node trees: the only possible swap exchanges whole trees
    assert ca.trees[0].root == variable(1)
    assert cb.trees[0].root == variable(0)


def test_crossover_zero_rate_copies_parents():
    rng = np.random.default_rng(3)
    a, b = _mt(rng), _mt(rng)
    ca, cb = same_index_crossover(a, b, p_c=0.0, rng=rng)
    assert ca == a and cb == b


def test_crossover_never_exceeds_depth_limit():
    rng = np.random.default_rng(4)
    for _ in range(100):
        a = MultiTree((Tree(full_tree(2, MAX_DEPTH, rng), 2),))
        b = MultiTree((Tree(full_tree(2, MAX_DEPTH, rng), 2),))
        ca, cb = same_index_crossover(a, b, p_c=1.0, rng=rng)
        assert depth(ca.trees[0]) <= MAX_DEPTH
        assert depth(cb.trees[0]) <= MAX_DEPTH


def test_crossover_rejects_mismatched_parents():
    rng = np.random.default_rng(5)
    with pytest.raises(ValueError):
        same_index_crossover(_mt(rng, k=2), _mt(rng, k=3), 1.0, rng)


def test_subtree_mutation_respects_depth_budget():
    rng = np.random.default_rng(6)
    for _ in range(100):
        mt = MultiTree((Tree(full_tree(3, MAX_DEPTH, rng), 3),))
        out = subtree_mutation(mt, p_s=1.0, rng=rng)
        assert depth(out.trees[0]) <= MAX_DEPTH
    mt = _mt(rng)
    assert subtree_mutation(mt, p_s=0.0, rng=rng) == mt


def test_one_point_mutation_preserves_shape():
    rng = np.random.default_rng(7)
    for _ in range(50):
        mt = _mt(rng)
        out = one_point_mutation(mt, p_o=1.0, rng=rng)
        for t_in, t_out in zip(mt.trees, out.trees):
            assert node_count(t_in) == node_count(t_out)
            assert depth(t_in) == depth(t_out)


def test_next_generation_size_and_elitism():
    rng = np.random.default_rng(8)
    pop = ramped_half_and_half(30, input_arity=3, k_trees=2, rng=rng)
    fits = list(rng.normal(size=30))
    cfg = VariationConfig()
    new = next_generation(pop, fits, cfg, rng)
    assert len(new) == 30
    assert new[0] == pop[int(np.argmin(fits))]  # elite survives verbatim
    for mt in new:
        assert all(depth(t) <= MAX_DEPTH for t in mt.trees)


def test_next_generation_autoencoder_genomes():
    rng = np.random.default_rng(9)
    pop = ramped_autoencoders(20, input_arity=4, k_trees=2,
                              decoder_outputs=3, rng=rng)
    fits = list(rng.normal(size=20))
    new = next_generation(pop, fits, VariationConfig(), rng)
    assert len(new) == 20
    for amt in new:
        assert isinstance(amt, AutoencoderMultiTree)
        assert amt.encoder.k == 2 and amt.decoder.k == 3
        trees = amt.encoder.trees + amt.decoder.trees
        assert all(depth(t) <= MAX_DEPTH for t in trees)
