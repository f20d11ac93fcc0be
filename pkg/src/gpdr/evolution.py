"""The generational loop: sample a mini-batch, score the population,
produce the next generation, and keep an archive of batch-best genomes for
the final full-split re-scoring.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dataset import BatchSampler
from .distances import pairwise_euclidean
from .fitness import (
    WORST_FITNESS,
    FitnessSpec,
    gp_autoencoder_fitness,
    prepare_batch,
    rank_fitness_many,
    sammon_stress,
    score,
    teacher_fitness,
)
from .gp_core import (
    AutoencoderMultiTree,
    MultiTree,
    autoencode,
    depth,
    encode,
    export_lines,
    ramped_autoencoders,
    ramped_half_and_half,
)
from .variation import MAX_DEPTH, VariationConfig, next_generation


def _full_split_fitness(candidates, spec: FitnessSpec) -> list[float]:
    """Fitness of every candidate on the whole DR-train split.

    The objectives depend on the genome only through its output on the
    split, so candidates with identical outputs (converged populations are
    full of them) are scored once. This matters most for the rank
    objective, whose full-split evaluation is O(n^3) per distinct output.
    """
    if spec.objective == "gp_autoencoder":
        outputs = [autoencode(g, spec.inputs)[1] for g in candidates]
    else:
        outputs = [encode(g, spec.inputs) for g in candidates]
    rep_index: dict = {}
    rep_outputs: list = []
    positions = []
    for out in outputs:
        key = out.tobytes()
        if key not in rep_index:
            rep_index[key] = len(rep_outputs)
            rep_outputs.append(out)
        positions.append(rep_index[key])

    if spec.objective == "rank":
        rep_fits = rank_fitness_many(
            spec.full_distance_matrix(), rep_outputs, spec.weight_scheme
        )
    elif spec.objective == "dist":
        D = spec.full_distance_matrix()
        rep_fits = [
            sammon_stress(D, pairwise_euclidean(out)) for out in rep_outputs
        ]
    elif spec.objective == "teacher":
        rep_fits = [
            teacher_fitness(spec.teacher_latent, out) for out in rep_outputs
        ]
    else:
        rep_fits = [
            gp_autoencoder_fitness(spec.target, out) for out in rep_outputs
        ]
    rep_fits = [f if np.isfinite(f) else WORST_FITNESS for f in rep_fits]
    return [rep_fits[i] for i in positions]


@dataclass
class GpRunConfig:
    population: int = 1000
    generations: int = 100
    k: int = 2
    batch_size: int = 100
    seed: int = 0
    depth_min: int = 2
    depth_max: int = 7
    representation: str = "multi_tree"  # or "autoencoder"
    variation: VariationConfig = field(default_factory=VariationConfig)

    def __post_init__(self):
        if self.population < 2 or self.generations < 1:
            raise ValueError("population >= 2 and generations >= 1 required")
        if self.representation not in ("multi_tree", "autoencoder"):
            raise ValueError(f"unknown representation {self.representation!r}")


@dataclass
class RunResult:
    best_genome: object
    best_fitness: float            # re-evaluated on the full DR-train split
    history: list[float]           # per-generation best-of-batch fitness
    wall_time: float
    seed: int
    expressions: list[str]

    def fitness_curve(self) -> list[float]:
        return list(self.history)


def _audit(pop, fitnesses, expected_size: int):
    """Debug-mode invariants: size, depth bound, finite-or-sentinel fitness."""
    assert len(pop) == expected_size, "population size changed"
    for g in pop:
        trees = (
            g.encoder.trees + g.decoder.trees
            if isinstance(g, AutoencoderMultiTree)
            else g.trees
        )
        assert max(depth(t) for t in trees) <= MAX_DEPTH, "depth bound violated"
    for f in fitnesses:
        assert not np.isnan(f), "NaN fitness stored"


def evolve(
    spec: FitnessSpec,
    cfg: GpRunConfig,
    audit_hook=None,
    debug_audit: bool = False,
) -> RunResult:
    """Run ``cfg.generations`` of score-all -> next_generation on fresh
    mini-batches; the winner is the best full-split fitness over the final
    population plus the archive of per-generation batch-best genomes.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    n = spec.inputs.shape[0]
    p = spec.inputs.shape[1]

    if cfg.representation == "autoencoder":
        pop = ramped_autoencoders(
            cfg.population, p, cfg.k, spec.target.shape[1],
            cfg.depth_min, cfg.depth_max, cfg.variation.function_set, rng,
        )
    else:
        pop = ramped_half_and_half(
            cfg.population, p, cfg.k,
            cfg.depth_min, cfg.depth_max, cfg.variation.function_set, rng,
        )

    sampler = BatchSampler(batch_size=cfg.batch_size, seed=int(rng.integers(2**63)))
    history: list[float] = []
    archive: list = []

    for gen in range(cfg.generations):
        batch = sampler.next_batch(n)
        ctx = prepare_batch(spec, batch)
        fits = [score(g, spec, ctx) for g in pop]
        best_idx = int(np.argmin(fits))
        history.append(fits[best_idx])
        archive.append(pop[best_idx])
        if debug_audit:
            _audit(pop, fits, cfg.population)
        if audit_hook is not None:
            audit_hook(gen, pop, fits)
        pop = next_generation(pop, fits, cfg.variation, rng)

    # final winner: full DR-train re-scoring of archive + final population
    candidates = archive + pop
    full_fits = _full_split_fitness(candidates, spec)
    winner_idx = int(np.argmin(full_fits))
    winner = candidates[winner_idx]

    if isinstance(winner, AutoencoderMultiTree):
        expressions = export_lines(winner.encoder, constant_precision=None)
        expressions += [
            line.replace("X~", "Xrec~", 1)
            for line in export_lines(winner.decoder, constant_precision=None)
        ]
    else:
        expressions = export_lines(winner, constant_precision=None)

    return RunResult(
        best_genome=winner,
        best_fitness=float(full_fits[winner_idx]),
        history=history,
        wall_time=time.perf_counter() - t0,
        seed=cfg.seed,
        expressions=expressions,
    )
