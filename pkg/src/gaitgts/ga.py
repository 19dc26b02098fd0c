"""Elitist genetic search for the template mask, plus post-search refinement."""
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from gaitgts.classifier import fit_classifier
from gaitgts.errors import DegenerateData, InsufficientTuningData, SingularScatter
from gaitgts.segmentation import CHROMOSOME_BITS, SplitBounds, build_mask, decode
from gaitgts.templates import Covariate


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 20
    generations: int = 15
    crossover_prob: float = 0.6
    mutation_prob: float = 0.03
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.crossover_prob <= 1.0 or not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        if self.population_size < 2 or self.population_size % 2:
            raise ValueError("population size must be even and at least 2")
        if self.generations < 1:
            raise ValueError("need at least one generation")


def view_seed(seed, view):
    """Independent GA seed for one view, derived from the run seed."""
    return int(np.random.SeedSequence([int(seed), int(view)]).generate_state(1)[0])


def combine_ccrs(ccr_a, ccr_b, ccr_c):
    """Fitness from per-covariate rates: normal weighted 1/2, bag 1/6, coat 1/3, squared."""
    return (ccr_a / 2.0 + ccr_b / 6.0 + ccr_c / 3.0) ** 2


@dataclass(frozen=True)
class FitnessReport:
    ccr_a: float
    ccr_b: float
    ccr_c: float
    fitness: float

    @classmethod
    def from_ccrs(cls, ccr_a, ccr_b, ccr_c):
        return cls(ccr_a, ccr_b, ccr_c, combine_ccrs(ccr_a, ccr_b, ccr_c))


ZERO_REPORT = FitnessReport(0.0, 0.0, 0.0, 0.0)


def masked_rows(rows, mask, downsample=1):
    """Feature rows restricted to a mask.

    Without downsampling only the pixels inside the mask are kept. Otherwise
    pixels outside are zeroed and f x f blocks are averaged.
    """
    rows = np.asarray(rows, dtype=np.float64)
    mask = np.asarray(mask)
    if downsample == 1:
        return rows[:, mask.ravel().astype(bool)]
    f = downsample
    h, w = mask.shape
    imgs = rows.reshape(-1, h, w) * mask
    imgs = imgs[:, :h - h % f, :w - w % f]
    return imgs.reshape(imgs.shape[0], h // f, f, w // f, f).mean(axis=(2, 4)).reshape(imgs.shape[0], -1)


@dataclass
class TuningSet:
    """Templates of the tuning subjects at one view.

    ``gallery`` rows are normal-walk templates (flattened), ``probes`` maps
    each covariate to (rows, labels).
    """

    gallery: np.ndarray
    gallery_labels: np.ndarray
    probes: dict
    shape: tuple = (240, 240)
    variance_target: float = 0.99
    downsample: int = 1

    def __post_init__(self):
        self.gallery = np.asarray(self.gallery, dtype=np.float64)
        self.gallery_labels = np.asarray(self.gallery_labels)
        if self.gallery.shape[0] == 0:
            raise InsufficientTuningData("tuning gallery is empty")
        for cov in (Covariate.NORMAL, Covariate.BAG, Covariate.COAT):
            rows, labels = self.probes.get(cov, (np.zeros((0, 0)), np.zeros(0)))
            if len(labels) == 0:
                raise InsufficientTuningData(f"no tuning probes for covariate {cov.name}")

    def _masked(self, rows, mask):
        return masked_rows(rows, mask, self.downsample)

    def evaluate(self, mask, knn=None):
        """Per-covariate CCR of a classifier trained on the masked gallery."""
        if not mask.any():
            return ZERO_REPORT
        try:
            model = fit_classifier(self._masked(self.gallery, mask), self.gallery_labels,
                                   self.variance_target)
        except (DegenerateData, SingularScatter):
            return ZERO_REPORT
        ccrs = []
        for cov in (Covariate.NORMAL, Covariate.BAG, Covariate.COAT):
            rows, labels = self.probes[cov]
            pred = model.predict(self._masked(rows, mask), knn=knn)
            ccrs.append(float(np.mean(pred == np.asarray(labels))))
        return FitnessReport.from_ccrs(*ccrs)


def mask_key(mask):
    return hashlib.blake2b(np.packbits(mask).tobytes(), digest_size=16).digest()


class HypothesisFitness:
    """Fitness of hypotheses on a tuning set, cached by the mask they produce."""

    def __init__(self, tuning, knn=None):
        self.tuning = tuning
        self.knn = knn
        self.cache = {}
        self.evaluations = 0

    def __call__(self, h):
        mask = build_mask(h)
        key = mask_key(mask)
        if key not in self.cache:
            self.cache[key] = self.tuning.evaluate(mask, knn=self.knn)
            self.evaluations += 1
        return self.cache[key]


def uniform_crossover(a, b, rng, prob=0.6, swap_mask=None):
    """Uniform crossover; with probability ``prob`` each bit swaps with p=0.5.

    The random draws are always consumed in the same order so the stream
    stays aligned whether or not crossover happens. ``swap_mask`` overrides
    the drawn per-bit mask.
    """
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    do_cross = rng.random() < prob
    drawn = rng.random(a.shape[0]) < 0.5
    if swap_mask is not None:
        drawn = np.asarray(swap_mask, dtype=bool)
    if not do_cross:
        return a.copy(), b.copy()
    child_a = np.where(drawn, b, a).astype(np.uint8)
    child_b = np.where(drawn, a, b).astype(np.uint8)
    return child_a, child_b


def mutate(c, rng, prob=0.03):
    c = np.asarray(c, dtype=np.uint8)
    flips = rng.random(c.shape[0]) < prob
    return np.where(flips, 1 - c, c).astype(np.uint8)


def roulette_select(rng, fitness, count=2):
    """Fitness-proportionate selection of ``count`` indices (uniform if all zero)."""
    fitness = np.asarray(fitness, dtype=np.float64)
    total = fitness.sum()
    if total <= 0.0:
        probs = np.full(fitness.size, 1.0 / fitness.size)
    else:
        probs = fitness / total
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return [int(np.searchsorted(cdf, u, side="right")) for u in rng.random(count)]


@dataclass
class GaResult:
    best: np.ndarray
    best_score: float
    history: list = field(default_factory=list)
    populations: list = field(default_factory=list, repr=False)


def run_ga(config, score, n_bits=CHROMOSOME_BITS, map_fn=map):
    """Elitist GA maximising ``score(bits) -> float``.

    ``history`` holds the best score of every generation. ``map_fn`` lets the
    caller evaluate a generation concurrently; it must preserve order.
    """
    rng = np.random.default_rng(config.seed)
    pop = rng.integers(0, 2, size=(config.population_size, n_bits), dtype=np.uint8)
    best, best_score = None, -np.inf
    history, populations = [], []
    for gen in range(config.generations):
        scores = np.array(list(map_fn(score, list(pop))), dtype=np.float64)
        elite = int(np.argmax(scores))
        history.append(float(scores[elite]))
        populations.append(pop.copy())
        if scores[elite] > best_score:
            best, best_score = pop[elite].copy(), float(scores[elite])
        if gen == config.generations - 1:
            break
        nxt = [pop[elite].copy()]
        while len(nxt) < config.population_size:
            i, j = roulette_select(rng, scores, 2)
            ca, cb = uniform_crossover(pop[i], pop[j], rng, config.crossover_prob)
            nxt.append(mutate(ca, rng, config.mutation_prob))
            if len(nxt) < config.population_size:
                nxt.append(mutate(cb, rng, config.mutation_prob))
        pop = np.stack(nxt)
    return GaResult(best, best_score, history, populations)


@dataclass
class EvolutionResult:
    best: object
    best_bits: np.ndarray
    report: FitnessReport
    history: list
    history_bits: list = field(default_factory=list, repr=False)


def evolve(config, tuning, bounds=SplitBounds(), jobs=1, knn=None, fitness=None):
    """Search mask hypotheses on a tuning set.

    Returns the best hypothesis and the per-generation best FitnessReport.
    ``fitness`` may be a callable ``hypothesis -> FitnessReport`` replacing
    the tuning-set evaluation (``tuning`` is then ignored).
    """
    fitness = fitness or HypothesisFitness(tuning, knn=knn)
    reports = {}

    def score(bits):
        rep = fitness(decode(bits, bounds))
        reports[bits.tobytes()] = rep
        return rep.fitness

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            result = run_ga(config, score, map_fn=pool.map)
    else:
        result = run_ga(config, score)
    history, history_bits = [], []
    for pop in result.populations:
        gen_reports = [reports[bits.tobytes()] for bits in pop]
        elite = int(np.argmax([r.fitness for r in gen_reports]))
        history.append(gen_reports[elite])
        history_bits.append(pop[elite].copy())
    best = decode(result.best, bounds)
    return EvolutionResult(best, result.best, reports[result.best.tobytes()], history, history_bits)


def _depends_on(weights_a, weights_b):
    return any(wa != wb for wa in weights_a for wb in weights_b)


def sequential_refine(h, fitness, bounds=SplitBounds()):
    """Grid-scan S_F at fixed S_H, then S_H at the new S_F.

    Each scan keeps the incumbent unless a strictly fitter value exists; among
    equally fit values the lowest wins. A split is scanned only if the mask
    depends on it.
    """
    best = h
    best_fit = fitness(h).fitness
    if _depends_on((h.w_f,), (h.w_l, h.w_r)):
        for s_f in range(max(bounds.f_min, best.s_h + 1), bounds.f_max + 1):
            cand = best.replace(s_f=s_f)
            f = fitness(cand).fitness
            if f > best_fit:
                best, best_fit = cand, f
    if _depends_on((h.w_h,), (h.w_l, h.w_r)):
        for s_h in range(bounds.h_min, min(bounds.h_max, best.s_f - 1) + 1):
            cand = best.replace(s_h=s_h)
            f = fitness(cand).fitness
            if f > best_fit:
                best, best_fit = cand, f
    return best


def log_records(view, result):
    """Line-delimited evolution log records for one view."""
    lines = []
    for gen, (rep, bits) in enumerate(zip(result.history, result.history_bits)):
        lines.append(json.dumps({
            "view": view, "generation": gen, "best_fitness": round(rep.fitness, 10),
            "bits": "".join(str(int(b)) for b in bits),
            "ccr_a": round(rep.ccr_a, 10), "ccr_b": round(rep.ccr_b, 10), "ccr_c": round(rep.ccr_c, 10),
        }, sort_keys=True))
    return lines
