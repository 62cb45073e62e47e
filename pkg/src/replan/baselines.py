"""Comparison methods over the same region and reward system.

Every baseline decodes a full vacant-plot assignment and scores it with
the exact scoring path the trainer uses, so numbers are directly
comparable across methods.
"""

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .advisor import Advisor, AdvisorError, build_plot_context
from .domain import FuncType, N_FUNC, Region, apply_action, region_stats
from .rewards import (
    Demands,
    SchemeReport,
    compose_report,
    satisfaction_score,
    summarize_scheme,
)

Chromosome = Tuple[int, ...]  # one type index per vacant plot, in vacant_order


@dataclass
class SearchConfig:
    # genetic algorithm
    population: int = 50
    generations: int = 200
    crossover_rate: float = 0.8
    mutation_rate: float = 0.05
    tournament: int = 3
    elitism: int = 1
    # simulated annealing
    initial_temp: float = 1.0
    cooling: float = 0.995
    proposals_per_temp: int = 10
    floor_temp: float = 1e-3

    def __post_init__(self):
        for name in ("crossover_rate", "mutation_rate"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be in [0,1], got {v}")
        if self.initial_temp <= 0 or self.floor_temp <= 0:
            raise ValueError("temperatures must be > 0")


def decode_scheme(region: Region, chrom: Chromosome) -> Region:
    """Apply a full assignment to a fresh clone of the region."""
    if len(chrom) != len(region.vacant_order):
        raise ValueError(
            f"chromosome length {len(chrom)} != {len(region.vacant_order)} vacant plots"
        )
    scheme = region.clone()
    for idx, gene in zip(scheme.vacant_order, chrom):
        apply_action(scheme, idx, FuncType(gene))
    return scheme


def _score(region: Region, demands: Demands, sat_advisor: Optional[Advisor]) -> SchemeReport:
    summary = summarize_scheme(region, demands)
    if sat_advisor is None:
        return compose_report(summary.metrics, 0.0)
    stakeholders = sat_advisor.score_satisfaction(summary)
    return compose_report(summary.metrics, satisfaction_score(stakeholders), stakeholders)


def evaluate_chromosome(
    region: Region,
    chrom: Chromosome,
    demands: Demands,
    sat_advisor: Optional[Advisor] = None,
) -> float:
    """Fitness of one assignment: obj score, plus satisfaction when an advisor rates it."""
    report = _score(decode_scheme(region, chrom), demands, sat_advisor)
    return report.obj_score if sat_advisor is None else report.total


def random_scheme(region: Region, rng: np.random.Generator,
                  sat_advisor: Optional[Advisor] = None) -> Tuple[Region, SchemeReport]:
    """Uniform random type per vacant plot."""
    demands = _demands_of(region)
    chrom = tuple(int(g) for g in rng.integers(0, N_FUNC, size=len(region.vacant_order)))
    scheme = decode_scheme(region, chrom)
    return scheme, _score(scheme, demands, sat_advisor)


def _demands_of(region: Region) -> Demands:
    if region.demands is None:
        raise ValueError("region carries no demands")
    return region.demands


class _FitnessCache:
    """Memo for the pure chromosome->fitness map, bounded for big instances."""

    def __init__(self, fn: Callable[[Chromosome], float], max_size: int = 1 << 16):
        self.fn = fn
        self.max_size = max_size
        self.hits = 0
        self._memo: Dict[Chromosome, float] = {}

    def __call__(self, chrom: Chromosome) -> float:
        got = self._memo.get(chrom)
        if got is not None:
            self.hits += 1
            return got
        value = self.fn(chrom)
        if len(self._memo) < self.max_size:
            self._memo[chrom] = value
        return value


def ga_optimize(
    region: Region,
    demands: Demands,
    cfg: SearchConfig,
    rng: np.random.Generator,
    sat_advisor: Optional[Advisor] = None,
) -> Tuple[Region, SchemeReport, List[float]]:
    """Tournament GA with one-point crossover, per-gene mutation and elitism.

    Returns the best-ever scheme, its report and the per-generation
    best-ever fitness trace (monotone nondecreasing by construction).
    """
    n = len(region.vacant_order)
    fitness = _FitnessCache(lambda c: evaluate_chromosome(region, c, demands, sat_advisor))

    pop = [tuple(int(g) for g in rng.integers(0, N_FUNC, size=n)) for _ in range(cfg.population)]
    scores = [fitness(c) for c in pop]
    best_idx = int(np.argmax(scores))
    best, best_score = pop[best_idx], scores[best_idx]
    trace = [best_score]

    def tournament() -> Chromosome:
        picks = rng.integers(0, cfg.population, size=cfg.tournament)
        winner = max(picks, key=lambda i: (scores[i], -i))
        return pop[winner]

    for _ in range(cfg.generations):
        nxt: List[Chromosome] = [best] * cfg.elitism
        while len(nxt) < cfg.population:
            a, b = tournament(), tournament()
            if rng.random() < cfg.crossover_rate and n > 1:
                cut = int(rng.integers(1, n))
                child = a[:cut] + b[cut:]
            else:
                child = a
            genes = list(child)
            for i in range(n):
                if rng.random() < cfg.mutation_rate:
                    genes[i] = int(rng.integers(0, N_FUNC))
            nxt.append(tuple(genes))
        pop = nxt
        scores = [fitness(c) for c in pop]
        gen_best = int(np.argmax(scores))
        if scores[gen_best] > best_score:
            best, best_score = pop[gen_best], scores[gen_best]
        trace.append(best_score)

    scheme = decode_scheme(region, best)
    return scheme, _score(scheme, demands, sat_advisor), trace


def sa_optimize(
    region: Region,
    demands: Demands,
    cfg: SearchConfig,
    rng: np.random.Generator,
    sat_advisor: Optional[Advisor] = None,
) -> Tuple[Region, SchemeReport, List[float]]:
    """Single-gene-move simulated annealing with geometric cooling."""
    n = len(region.vacant_order)
    fitness = _FitnessCache(lambda c: evaluate_chromosome(region, c, demands, sat_advisor))

    current = tuple(int(g) for g in rng.integers(0, N_FUNC, size=n))
    current_score = fitness(current)
    best, best_score = current, current_score
    trace = [best_score]

    temp = cfg.initial_temp
    while temp > cfg.floor_temp:
        for _ in range(cfg.proposals_per_temp):
            pos = int(rng.integers(0, n))
            genes = list(current)
            genes[pos] = int(rng.integers(0, N_FUNC))
            candidate = tuple(genes)
            cand_score = fitness(candidate)
            delta = cand_score - current_score
            if delta >= 0 or rng.random() < math.exp(delta / temp):
                current, current_score = candidate, cand_score
            if current_score > best_score:
                best, best_score = current, current_score
        temp *= cfg.cooling
        trace.append(best_score)

    scheme = decode_scheme(region, best)
    return scheme, _score(scheme, demands, sat_advisor), trace


def llm_only_plan(
    region: Region,
    demands: Demands,
    advisor: Advisor,
    rng: np.random.Generator,
    sat_advisor: Optional[Advisor] = None,
) -> Tuple[Region, SchemeReport, int]:
    """Greedy advisor-only planner: first recommendation wins, random on abstain.

    Returns the scheme, its report and the number of random fallbacks
    (abstentions plus advisor failures).
    """
    scheme = region.clone()
    scheme.demands = demands
    fallbacks = 0
    for idx in scheme.vacant_order:
        try:
            rec = advisor.recommend_types(
                build_plot_context(scheme, idx),
                region_stats(scheme),
                demands,
                scheme.facility_tally(),
            )
        except AdvisorError:
            rec = None
        if rec is None or rec.is_abstain:
            action = FuncType(int(rng.integers(0, N_FUNC)))
            fallbacks += 1
        else:
            action = rec.types[0]
        apply_action(scheme, idx, action)
    return scheme, _score(scheme, demands, sat_advisor), fallbacks
