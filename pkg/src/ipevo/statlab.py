"""Estimators, hypothesis tests and the named verification experiments."""

from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .randkit import InvalidInput, RandomStream

P_THRESHOLD = 1e-3
Z_THRESHOLD = 3.0


@dataclass
class TestReport:
    """Outcome of one test.

    ``passed`` is p_value > threshold for p-value tests and |z| < threshold
    for z tests; probes carry ``passed = None``.
    """

    __test__ = False

    id: str
    alpha: float | None
    params: dict
    n: int
    statistic: float
    reference: str
    p_value: float | None = None
    z_score: float | None = None
    threshold: float = P_THRESHOLD
    passed: bool | None = None
    seed: int | None = None
    runtime: float = 0.0
    kind: str = "test"
    holm_pass: bool | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.passed is None and self.kind == "test":
            if self.p_value is not None:
                self.passed = bool(self.p_value > self.threshold)
            elif self.z_score is not None:
                self.passed = bool(abs(self.z_score) < self.threshold)

    def to_dict(self):
        return {k: _plain(v) for k, v in asdict(self).items()}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def line(self):
        mark = {True: "PASS", False: "FAIL", None: "INFO"}[self.passed]
        if self.p_value is not None:
            val = f"p={self.p_value:.4g}"
        elif self.z_score is not None:
            val = f"z={self.z_score:.3g}"
        else:
            val = f"threshold={self.threshold:g}"
        return f"[{mark}] {self.id} alpha={self.alpha} N={self.n} stat={self.statistic:.5g} {val}"


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def _stamp(report, t0, **meta):
    report.runtime = time.perf_counter() - t0
    for k, v in meta.items():
        if v is not None:
            setattr(report, k, v)
    return report


# -- basic tests ----------------------------------------------------------------

def _tie_fraction(x):
    _, counts = np.unique(x, return_counts=True)
    return counts.max() / len(x)


def ks_test(sample, ref, id="ks", alpha=None, params=None, threshold=P_THRESHOLD, seed=None,
            reference=None) -> TestReport:
    """One-sample KS against a CDF, or two-sample KS against another sample.

    Heavily tied samples are split: the most common value is tested as an
    atom with a binomial z-test and the rest by KS; both must pass.
    """
    t0 = time.perf_counter()
    x = np.asarray(sample, dtype=float)
    if len(x) < 20:
        raise InvalidInput("KS test needs at least 20 observations")
    two = not callable(ref)
    y = np.asarray(ref, dtype=float) if two else None
    if two and len(y) < 20:
        raise InvalidInput("KS test needs at least 20 observations")
    ref_name = reference or ("two-sample" if two else getattr(ref, "__name__", "cdf"))
    ties = max(_tie_fraction(x), _tie_fraction(y) if two else 0.0)
    if ties > 0.5:
        warnings.warn(f"{id}: {ties:.0%} ties, testing the atom separately", stacklevel=2)
        vals, counts = np.unique(np.concatenate([x, y]) if two else x, return_counts=True)
        v = vals[np.argmax(counts)]
        if two:
            atom = proportion_test_two((x == v).sum(), len(x), (y == v).sum(), len(y), id=id + ":atom")
            rest = ks_test(x[x != v], y[y != v], id=id + ":rest") if min((x != v).sum(), (y != v).sum()) >= 20 else None
        else:
            p_atom = float(ref(v) - ref(np.nextafter(v, -np.inf)))
            atom = proportion_test((x == v).sum(), len(x), p_atom, id=id + ":atom")
            cont = lambda s: (ref(s) - p_atom * (s >= v)) / (1 - p_atom)
            rest = ks_test(x[x != v], cont, id=id + ":rest") if (x != v).sum() >= 20 else None
        return combine([atom] + ([rest] if rest else []), id, alpha, params, seed, t0)
    res = stats.ks_2samp(x, y) if two else stats.kstest(x, ref)
    rep = TestReport(id, alpha, dict(params or {}), len(x), float(res.statistic), ref_name,
                     p_value=float(res.pvalue), threshold=threshold, seed=seed)
    return _stamp(rep, t0)


def z_test(estimate, se, reference_value, id="z", alpha=None, params=None, n=0, threshold=Z_THRESHOLD,
           seed=None, reference=None) -> TestReport:
    """|estimate - reference| < threshold standard errors."""
    z = (estimate - reference_value) / se if se > 0 else (0.0 if estimate == reference_value else math.inf)
    return TestReport(id, alpha, dict(params or {}), int(n), float(estimate), reference or f"{reference_value:.6g}",
                      z_score=float(z), threshold=threshold, seed=seed)


def proportion_test(successes, n, p0, id="prop", **kw) -> TestReport:
    """Binomial z-test of a success fraction against p0, with the null standard error."""
    if n < 1:
        raise InvalidInput("proportion test needs n >= 1")
    p = successes / n
    se = math.sqrt(max(p0 * (1 - p0), 1e-300) / n)
    return z_test(p, se, p0, id=id, n=n, **kw)


def proportion_test_two(s1, n1, s2, n2, id="prop2", **kw) -> TestReport:
    p1, p2 = s1 / n1, s2 / n2
    pool = (s1 + s2) / (n1 + n2)
    se = math.sqrt(max(pool * (1 - pool), 1e-300) * (1 / n1 + 1 / n2))
    rep = z_test(p1 - p2, se, 0.0, id=id, n=n1, **kw)
    rep.reference = "two-sample"
    return rep


def mean_test(sample, mu, id="mean", **kw) -> TestReport:
    x = np.asarray(sample, dtype=float)
    return z_test(float(x.mean()), float(x.std(ddof=1) / math.sqrt(len(x))), mu, id=id, n=len(x), **kw)


def reference_mean_test(sample, draw, rng, id="mean", reps=5000, **kw) -> TestReport:
    """Mean test for heavy-tailed laws, calibrated on simulated sample means.

    ``draw(rng, n)`` samples the reference law.  The z-score is the normal
    quantile of the observed mean within the simulated means, so |z| < 3
    keeps the coverage of a three-SE band when the variance is infinite.
    """
    x = np.asarray(sample, dtype=float)
    n = len(x)
    means = np.array([draw(rng, n).mean() for _ in range(reps)])
    rank = ((means < x.mean()).sum() + 0.5 * (means == x.mean()).sum() + 0.5) / (reps + 1)
    rep = TestReport(id, None, {"reps": reps}, n, float(x.mean()), "simulated sample means",
                     z_score=float(stats.norm.ppf(rank)), threshold=Z_THRESHOLD)
    for k, v in kw.items():
        setattr(rep, k, v)
    rep.extra["reference_mean_median"] = float(np.median(means))
    return rep


def combine(reports, id, alpha=None, params=None, seed=None, t0=None) -> TestReport:
    """A report that passes when every part passes; p is the smallest part p-value."""
    ps = [r.p_value for r in reports if r.p_value is not None]
    zs = [r.z_score for r in reports if r.z_score is not None]
    rep = TestReport(id, alpha, dict(params or {}), max(r.n for r in reports),
                     reports[0].statistic, "+".join(r.reference for r in reports),
                     p_value=min(ps) if ps else None, z_score=max(zs, key=abs) if zs else None,
                     passed=all(r.passed for r in reports), seed=seed,
                     extra={"parts": [r.to_dict() for r in reports]})
    if t0 is not None:
        rep.runtime = time.perf_counter() - t0
    return rep


# -- estimators -----------------------------------------------------------------

def empirical_laplace(sample, lams):
    """(lambda, mean of exp(-lambda X), jackknife SE) for each lambda."""
    x = np.asarray(sample, dtype=float)
    if np.any(x < 0):
        raise InvalidInput("Laplace transform needs a nonnegative sample")
    n = len(x)
    out = []
    for lam in np.atleast_1d(lams):
        e = np.exp(-lam * x)
        m = e.mean()
        if n > 1:
            loo = (e.sum() - e) / (n - 1)
            se = math.sqrt((n - 1) / n * ((loo - loo.mean()) ** 2).sum())
        else:
            se = 0.0
        out.append((float(lam), float(m), float(se)))
    return out


def holm(reports, level=P_THRESHOLD):
    """Holm step-down over the p-value tests of a suite; sets ``holm_pass``."""
    tests = [r for r in reports if r.kind == "test" and r.p_value is not None]
    order = sorted(range(len(tests)), key=lambda i: tests[i].p_value)
    m = len(tests)
    rejecting = True
    for rank, i in enumerate(order):
        if rejecting and tests[i].p_value <= level / (m - rank):
            tests[i].holm_pass = False
        else:
            rejecting = False
            tests[i].holm_pass = True
    for r in reports:
        if r.kind == "test" and r.p_value is None:
            r.holm_pass = r.passed
    return reports


def _centered(d):
    return d - d.mean(axis=0) - d.mean(axis=1)[:, None] + d.mean()


def distance_correlation(x, y):
    x = np.asarray(x, dtype=float).reshape(len(x), -1)
    y = np.asarray(y, dtype=float).reshape(len(y), -1)
    a = _centered(np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)))
    b = _centered(np.sqrt(((y[:, None, :] - y[None, :, :]) ** 2).sum(-1)))
    dxy, dxx, dyy = (a * b).mean(), (a * a).mean(), (b * b).mean()
    return float(math.sqrt(max(dxy, 0.0) / math.sqrt(dxx * dyy))) if dxx > 0 and dyy > 0 else 0.0


def dcor_permutation_test(x, y, rng, n_perm=1999, max_n=400):
    """Distance correlation and its permutation p-value.

    Pairs beyond ``max_n`` are subsampled to keep the cost quadratic in max_n.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) > max_n:
        idx = rng.choice(len(x), max_n, replace=False)
        x, y = x[idx], y[idx]
    x = x.reshape(len(x), -1)
    y = y.reshape(len(y), -1)
    a = _centered(np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1)))
    b = _centered(np.sqrt(((y[:, None, :] - y[None, :, :]) ** 2).sum(-1)))
    obs = (a * b).mean()
    count = 1
    for _ in range(n_perm):
        p = rng.permutation(len(y))
        count += (a * b[np.ix_(p, p)]).mean() >= obs
    dxx, dyy = (a * a).mean(), (b * b).mean()
    stat = math.sqrt(max(obs, 0.0) / math.sqrt(dxx * dyy)) if dxx > 0 and dyy > 0 else 0.0
    return float(stat), count / (n_perm + 1)


def as_stream(stream) -> RandomStream:
    if isinstance(stream, RandomStream):
        return stream
    return RandomStream(int(stream))


# -- experiments ----------------------------------------------------------------

def _setup(stream, name, alpha, *keys):
    if alpha is not None and not 0 < alpha < 1:
        raise InvalidInput(f"alpha must lie in (0, 1), got {alpha}")
    s = as_stream(stream)
    return s.child(name, repr(alpha), *map(repr, keys)).generator(), s.master_seed


def _finish(reports, t0, seed, alpha, **params):
    for r in reports:
        r.seed = seed
        r.alpha = alpha
        r.params = {**params, **r.params}
        r.runtime = time.perf_counter() - t0
    return reports


def _eps(alpha, eps):
    from .pdip import suggested_eps
    return suggested_eps(alpha) if eps is None else eps


def _evolve(rng, alpha, start, levels, type, method, eps):
    """Final batch of an evolution by the kernel or by the scaffold."""
    from . import kernel, scaffold
    if method == "kernel":
        return kernel.evolve_batch(rng, alpha, start, levels, type, eps, keep_states=False).batches[-1]
    if method == "scaffold":
        run = scaffold.type1_batch if type == 1 else scaffold.type0_batch
        return run(rng, alpha, start, levels, eps=eps).batches[-1]
    raise InvalidInput(f"unknown method {method!r}")


def _stat(batch, name):
    if name == "mass":
        return batch.total_mass()
    if name == "leftmost":
        return batch.leftmost()
    if name == "top":
        return batch.largest()
    if name == "second":
        return batch.ranked(2)
    if name == "count":
        return batch.count_above(0.01).astype(float)
    raise InvalidInput(f"unknown statistic {name!r}")


def experiment_absorption(stream, alpha, N=10_000, z=1.0):
    """Absorption time of BESQ(-2a) from z by an Euler scheme, against InverseGamma(1 + a, z/2)."""
    from . import laws
    from .spindle import euler_absorption
    t0 = time.perf_counter()
    rng, seed = _setup(stream, "absorption", alpha)
    zeta, _ = euler_absorption(rng, -2 * alpha, np.full(N, float(z)))
    reps = [ks_test(zeta, laws.inverse_gamma_cdf(1 + alpha, z / 2), id="absorption:ks",
                    reference=f"InverseGamma({1 + alpha:g}, {z / 2:g})"),
            reference_mean_test(zeta, lambda g, k: z / (2 * g.gamma(1 + alpha, size=k)), rng,
                                id="absorption:mean")]
    return _finish(reps, t0, seed, alpha, N=N, z=z)


def experiment_entrance(stream, alpha, N=10_000, y=0.5, methods=("kernel", "scaffold"), eps=None):
    """Survival of the type-1 evolution from a single unit block."""
    from .batch import PartitionBatch
    t0 = time.perf_counter()
    rng, seed = _setup(stream, "entrance", alpha)
    eps = _eps(alpha, eps)
    target = -math.expm1(-1 / (2 * y))
    reps = []
    for method in methods:
        t1 = time.perf_counter()
        end = _evolve(rng, alpha, PartitionBatch.single_blocks(np.ones(N), alpha), [0, y], 1, method, eps)
        alive = int((end.total_mass() > 0).sum())
        reps.append(_stamp(proportion_test(alive, N, target, id=f"entrance:{method}", params={"method": method}), t1))
    return _finish(reps, t0, seed, alpha, N=N, y=y, eps=eps)


def experiment_total_mass(stream, alpha, N=5000, y1=0.3, y0=0.5, methods=("kernel", "scaffold"), eps=None):
    """Type-1 mass from a unit block (atom plus BESQ(0) density) and type-0 mass from empty (Gamma)."""
    from . import laws
    from .batch import PartitionBatch
    t0 = time.perf_counter()
    rng, seed = _setup(stream, "total_mass", alpha)
    eps = _eps(alpha, eps)
    reps = []
    for method in methods:
        t1 = time.perf_counter()
        m = _evolve(rng, alpha, PartitionBatch.single_blocks(np.ones(N), alpha), [0, y1], 1, method, eps).total_mass()
        atom = proportion_test(int((m == 0).sum()), N, laws.besq0_atom(1.0, y1), id="atom")
        rest = ks_test(m[m > 0], lambda x: laws.besq0_cdf_positive(1.0, y1, x), id="positive",
                       reference="BESQ(0) positive part")
        reps.append(combine([atom, rest], f"total_mass:type1:{method}", params={"method": method, "y": y1}, t0=t1))
        t1 = time.perf_counter()
        m = _evolve(rng, alpha, PartitionBatch.empty(N, alpha), [0, y0], 0, method, eps).total_mass()
        reps.append(_stamp(ks_test(m, laws.gamma_cdf(alpha, 1 / (2 * y0)), id=f"total_mass:type0:{method}",
                                   params={"method": method, "y": y0},
                                   reference=f"Gamma({alpha:g}, {1 / (2 * y0):g})"), t1))
    return _finish(reps, t0, seed, alpha, N=N, eps=eps)


def experiment_method_agreement(stream, alpha, N=5000, y=0.4, eps=None, stats_=("mass", "leftmost", "count")):
    """Kernel against scaffold from independent PDIP(a, 0) starts, two-sample KS per statistic."""
    from .pdip import pdip_batch
    t0 = time.perf_counter()
    rng, seed = _setup(stream, "method_agreement", alpha)
    eps = _eps(alpha, eps)
    k = _evolve(rng, alpha, pdip_batch(rng, alpha, "a0", N, eps), [0, y], 1, "kernel", eps)
    sc = _evolve(rng, alpha, pdip_batch(rng, alpha, "a0", N, eps), [0, y], 1, "scaffold", eps)
    reps = [ks_test(_stat(k, st), _stat(sc, st), id=f"agreement:{st}", reference="kernel vs scaffold")
            for st in stats_]
    return _finish(reps, t0, seed, alpha, N=N, y=y, eps=eps)


def experiment_leftmost_law(stream, alpha, N=10_000, y=0.5, b=1.0, lams=(0.5, 1.0, 2.0)):
    """Scaffold leftmost block from a single block against the series law, and the L sampler's Laplace transform."""
    from . import laws
    from .batch import PartitionBatch
    from .kernel import L_laplace, sample_L
    t0 = time.perf_counter()
    rng, seed = _setup(stream, "leftmost_law", alpha)
    r = 1 / (2 * y)
    end = _evolve(rng, alpha, PartitionBatch.single_blocks(np.full(N, b), alpha), [0, y], 1, "scaffold", 1e-12)
    x = end.leftmost()[end.total_mass() > 0]
    reps = [ks_test(x, lambda c: laws.leftmost_cdf(alpha, b, r, c), id="leftmost:scaffold",
                    reference="Poisson mixture of Gamma(n - a, r)")]
    L = sample_L(rng, alpha, np.full(N, b), r)
    for lam, m, se in empirical_laplace(L, lams):
        reps.append(z_test(m, se, float(L_laplace(alpha, b, r, lam)), id=f"leftmost:laplace:{lam:g}", n=N,
                           params={"lambda": lam}))
    return _finish(reps, t0, seed, alpha, N=N, y=y, b=b)


def experiment_semigroup(stream, alpha, N=5000, y=0.4, c=2.0, eps=None, stats_=("mass", "leftmost", "top", "count")):
    """Split-step agreement of the kernels, and 1-self-similarity of the scaffold evolution."""
    from .pdip import pdip_batch
    t0 = time.perf_counter()
    rng, seed = _setup(stream, "semigroup", alpha)
    eps = _eps(alpha, eps)
    reps = []
    for type, variant in ((1, "a0"), (0, "aa")):
        one = _evolve(rng, alpha, pdip_batch(rng, alpha, variant, N, eps), [0, y], type, "kernel", eps)
        two = _evolve(rng, alpha, pdip_batch(rng, alpha, variant, N, eps), [0, y / 2, y], type, "kernel", eps)
        for st in stats_:
            if type == 0 and st == "leftmost":
                continue
            reps.append(ks_test(_stat(one, st), _stat(two, st), id=f"semigroup:type{type}:{st}",
                                reference="one step vs two steps"))
    big = _evolve(rng, alpha, pdip_batch(rng, alpha, "a0", N, eps).scaled(c), [0, c * y], 1, "scaffold", eps)
    small = _evolve(rng, alpha, pdip_batch(rng, alpha, "a0", N, eps), [0, y], 1, "scaffold", eps).scaled(c)
    for st in ("mass", "leftmost", "top"):
        reps.append(ks_test(_stat(big, st), _stat(small, st), id=f"scaling:{st}",
                            reference="c * beta^y vs evolution from c * beta at c y"))
    return _finish(reps, t0, seed, alpha, N=N, y=y, c=c, eps=eps)


def random_partition(rng, max_blocks=6, alpha=0.5):
    """Small partition with random masses, gaps and diversities; masses are sometimes tied."""
    from .partition import from_masses
    k = int(rng.integers(0, max_blocks + 1))
    if rng.uniform() < 0.3:
        m = rng.integers(1, 4, size=k) / 4.0
    else:
        m = rng.exponential(size=k)
    g = np.where(rng.uniform(size=k + 1) < 0.5, 0.0, rng.exponential(0.2, size=k + 1))
    div = np.cumsum(rng.exponential(size=k))
    end = (div[-1] if k else 0.0) + rng.exponential()
    return from_masses(m, g, div, end, alpha)


def experiment_metric(stream, n_pairs=1000, n_triples=1000, max_blocks=6, tol=1e-9):
    """Fast metric against exhaustive enumeration, then symmetry and the triangle inequality."""
    from .partition import brute_force_distance, metric_distance
    t0 = time.perf_counter()
    rng, seed = _setup(stream, "metric", None)
    worst = 0.0
    for _ in range(n_pairs):
        a, b = random_partition(rng, max_blocks), random_partition(rng, max_blocks)
        worst = max(worst, abs(metric_distance(a, b) - brute_force_distance(a, b)))
    exact = TestReport("metric:brute_force", None, {"pairs": n_pairs, "max_blocks": max_blocks}, n_pairs, worst,
                       "exhaustive enumeration", threshold=0.0, passed=worst == 0.0)
    t1 = time.perf_counter()
    sym, tri = 0.0, 0.0
    for _ in range(n_triples):
        a, b, c = (random_partition(rng, 3 * max_blocks) for _ in range(3))
        ab, ba = metric_distance(a, b), metric_distance(b, a)
        sym = max(sym, abs(ab - ba))
        tri = max(tri, metric_distance(a, c) - ab - metric_distance(b, c))
    axioms = TestReport("metric:axioms", None, {"triples": n_triples, "symmetry": sym}, n_triples, max(sym, tri),
                        "symmetry and triangle inequality", threshold=tol, passed=bool(sym <= tol and tri <= tol))
    _stamp(axioms, t1)
    return _finish([_stamp(exact, t0)], t0, seed, None) + _finish([axioms], t0, seed, None)


def experiment_diversity(stream, alpha=0.5, n=100, h=1e-6, eps=1e-8, variant="aa", rel=0.1, frac=0.9):
    """Tracked local-time diversity against the block-count estimator on PDIP draws."""
    from .partition import estimate_diversity
    from .pdip import pdip_batch
    t0 = time.perf_counter()
    rng, seed = _setup(stream, "diversity", alpha)
    b = pdip_batch(rng, alpha, variant, n, eps)
    ratio = np.array([estimate_diversity(p, p.total_mass, [h], alpha)[0] / p.terminal_diversity()
                      for p in b.partitions()])
    share = float((np.abs(ratio - 1) <= rel).mean())
    rep = TestReport("diversity:estimator", alpha, {"h": h, "rel": rel}, n, share, f">= {frac:g} within {rel:g}",
                     threshold=frac, passed=share >= frac, extra={"median_ratio": float(np.median(ratio))})
    return _finish([rep], t0, seed, alpha, eps=eps, variant=variant)


def experiment_pseudostationarity(stream, alpha, type=1, rho=1.0, y=0.5, N=5000, method="kernel", eps=None):
    """Evolution from the mixtures of PDIP laws that stay in their family."""
    from . import laws
    from .pdip import pdip_batch
    if not (rho > 0 and y > 0):
        raise InvalidInput("rho and y must be positive")
    t0 = time.perf_counter()
    rng, seed = _setup(stream, "pseudostationarity", alpha, type, method)
    eps = _eps(alpha, eps)
    variant = "a0" if type == 1 else "aa"
    mass0 = rng.exponential(1 / rho, size=N) if type == 1 else rng.gamma(alpha, 1 / rho, size=N)
    end = _evolve(rng, alpha, pdip_batch(rng, alpha, variant, N, eps).scaled(mass0), [0, y], type, method, eps)
    m = end.total_mass()
    alive = m > 0
    rate = rho / (2 * y * rho + 1)
    tag = f"pseudostat:type{type}:{method}"
    reps = []
    if type == 1:
        reps.append(proportion_test(int(alive.sum()), N, 1 / (2 * y * rho + 1), id=f"{tag}:survival"))
        reps.append(ks_test(m[alive], laws.gamma_cdf(1.0, rate), id=f"{tag}:mass",
                            reference=f"Exponential({rate:g})"))
    else:
        reps.append(ks_test(m, laws.gamma_cdf(alpha, rate), id=f"{tag}:mass", reference=f"Gamma({alpha:g}, {rate:g})"))
    shape = end.subset(np.flatnonzero(alive)).normalized()
    fresh = pdip_batch(rng, alpha, variant, shape.n, eps)
    names = ("top", "second", "leftmost") if type == 1 else ("top", "second")
    for st in names:
        reps.append(ks_test(_stat(shape, st), _stat(fresh, st), id=f"{tag}:{st}", reference=f"PDIP({variant})"))
    stat, p = dcor_permutation_test(m[alive], shape.largest(), rng)
    reps.append(TestReport(f"{tag}:independence", alpha, {"pair": "mass, top"}, int(alive.sum()), stat,
                           "permutation null", p_value=p))
    return _finish(reps, t0, seed, alpha, type=type, rho=rho, y=y, N=N, method=method, eps=eps)


def experiment_stationarity(stream, alpha, variant="type0", u_list=(0.3,), N=5000, eps=None, du=0.025):
    """De-Poissonized evolution from its stationary law, compared with fresh u = 0 draws."""
    from . import laws
    from .depois import depoissonized_at
    from .pdip import pdip_batch
    type = {"type0": 0, "type1": 1, 0: 0, 1: 1}.get(variant)
    if type is None:
        raise InvalidInput("variant must be 'type0' or 'type1'")
    t0 = time.perf_counter()
    rng, seed = _setup(stream, "stationarity", alpha, type)
    eps = _eps(alpha, eps)
    pv = "a0" if type == 1 else "aa"
    out, _, died = depoissonized_at(rng, alpha, pdip_batch(rng, alpha, pv, N, eps), u_list, type, du, eps)
    ref = pdip_batch(rng, alpha, pv, N, eps)
    reps = []
    half = N // 2
    reps.append(ks_test(ref.subset(np.arange(half)).largest(), ref.subset(np.arange(half, N)).largest(),
                        id=f"stationarity:type{type}:split_half", reference="u=0 vs u=0"))
    for u in u_list:
        b = out[u]
        ok = np.flatnonzero(b.total_mass() > 0)
        b = b.subset(ok)
        tag = f"stationarity:type{type}:u={u:g}"
        reps.append(ks_test(b.largest(), ref.largest(), id=f"{tag}:top", reference="u=0"))
        reps.append(ks_test(_stat(b, "count"), _stat(ref, "count"), id=f"{tag}:count", reference="u=0"))
        if type == 1:
            reps.append(ks_test(b.leftmost(), laws.beta_cdf(1 - alpha, alpha), id=f"{tag}:leftmost",
                                reference=f"Beta({1 - alpha:g}, {alpha:g})"))
        for r in reps[-(3 if type == 1 else 2):]:
            r.extra["dropped_empty"] = int(b.n != N) and int(N - len(ok))
    return _finish(reps, t0, seed, alpha, variant=variant, u_list=list(u_list), N=N, eps=eps, du=du,
                   died=int(died.sum()))


def permutation_calibration(rng, n_rep=200, n=100, n_perm=99, n_power=200, power_perm=1999):
    """Null calibration of the distance-correlation permutation test and a power sanity check."""
    t0 = time.perf_counter()
    ps = np.array([dcor_permutation_test(rng.normal(size=n), rng.exponential(size=n), rng, n_perm)[1]
                   for _ in range(n_rep)])
    null = proportion_test(int((ps < 0.05).sum()), n_rep, 0.05, id="calibration:null",
                           params={"n": n, "n_perm": n_perm})
    null.extra["ks_uniform_p"] = float(stats.kstest(ps, "uniform").pvalue)
    _stamp(null, t0)
    t1 = time.perf_counter()
    x = rng.exponential(size=n_power)
    _, p = dcor_permutation_test(x, x, rng, power_perm)
    power = TestReport("calibration:coupled", None, {"n": n_power, "n_perm": power_perm}, n_power, p,
                       "p < 0.001", p_value=p, passed=p < P_THRESHOLD)
    return [null, _stamp(power, t1)]


def experiment_conjecture_independence(stream, alpha, type=1, N=5000, y_star=0.5, u_star=0.3, eps=None, du=0.01,
                                       calibrate=True):
    """Probe: total mass at level y* against the de-Poissonized top block at u*, same paths.

    Reported without a verdict; the calibration subtests are in ``extra``.
    """
    from .depois import depoissonized_at
    from .pdip import pdip_batch
    t0 = time.perf_counter()
    rng, seed = _setup(stream, "conjecture", alpha, type)
    eps = _eps(alpha, eps)
    start = pdip_batch(rng, alpha, "a0" if type == 1 else "aa", N, eps)
    out, masses, died = depoissonized_at(rng, alpha, start, [u_star], type, du, eps, mass_levels=[y_star])
    top = out[u_star].largest()
    ok = top > 0
    stat, p = dcor_permutation_test(masses[ok, 0], top[ok], rng)
    rep = TestReport(f"conjecture:type{type}", alpha, {"y_star": y_star, "u_star": u_star}, int(ok.sum()), stat,
                     "permutation null", p_value=p, kind="probe",
                     extra={"died": int(died.sum()), "pearson": float(np.corrcoef(masses[ok, 0], top[ok])[0, 1])})
    if calibrate:
        cal = permutation_calibration(rng)
        rep.extra["calibration"] = [c.to_dict() for c in cal]
        rep.extra["calibration_passed"] = all(c.passed for c in cal)
    return _finish([rep], t0, seed, alpha, type=type, N=N, eps=eps, du=du)[0]


def experiment_leftmost_split(stream, alpha, N=10_000, a=1.0, y=0.2, eps=None):
    """Leftmost block of {(0, a)} * beta against BESQ(-2a), the rest against an independent BESQ(2a)."""
    from . import laws
    from .batch import PartitionBatch, concat_batches
    from .pdip import pdip_batch
    from .scaffold import _top, default_cutoff, run_scaffold, skewers
    from .spindle import besq_marginal, besq_neg_density
    t0 = time.perf_counter()
    rng, seed = _setup(stream, "leftmost_split", alpha, a)
    eps = _eps(alpha, eps)
    rest0 = pdip_batch(rng, alpha, "aa", N, eps)
    start = concat_batches([PartitionBatch.single_blocks(np.full(N, float(a)), alpha), rest0])
    zc = default_cutoff(np.array([y]), alpha)
    out = run_scaffold(rng, alpha, [y], zc, _top(np.array([y]), zc), np.zeros(N), start, record=True)
    starts = [r for r in out.jumps if r[0] == "start"]
    ws = np.concatenate([r[1] for r in starts])
    z0 = np.concatenate([r[3] for r in starts])
    _, first = np.unique(ws, return_index=True)
    Y = z0[first]
    end = skewers(out, alpha, zc, eps)[0]
    alive = Y > y
    left = end.leftmost()[alive]
    rest = end.total_mass()[alive] - left
    tag = f"split:a={a:g}"
    reps = [ks_test(Y, laws.inverse_gamma_cdf(1 + alpha, a / 2), id=f"{tag}:death_level",
                    reference=f"InverseGamma({1 + alpha:g}, {a / 2:g})"),
            proportion_test(int(alive.sum()), N, 1 - float(laws.inverse_gamma_cdf(1 + alpha, a / 2)(y)),
                            id=f"{tag}:survival")]
    hi = a + 40 * y + 40 * math.sqrt(a * y + y * y)
    reps.append(ks_test(left, laws.tabulated_cdf(lambda c: besq_neg_density(alpha, a, c, y), 1e-12, hi, 20000),
                        id=f"{tag}:leftmost", reference="BESQ(-2a) marginal given survival"))
    oracle = besq_marginal(rng, 2 * alpha, rest0.total_mass(), y)
    reps.append(ks_test(rest, oracle, id=f"{tag}:rest", reference="independent BESQ(2a) draws"))
    r = float(np.corrcoef(left, rest)[0, 1])
    reps.append(z_test(r, 1 / math.sqrt(alive.sum()), 0.0, id=f"{tag}:correlation", n=int(alive.sum())))
    return _finish(reps, t0, seed, alpha, N=N, a=a, y=y, eps=eps)


# -- suites ---------------------------------------------------------------------

def _clades(stream, alpha, n_scale=1.0):
    from .scaffold import clade_statistics
    ids = ["iii", "iv", "v", "vi", "i", "ii", "a2"]
    return clade_statistics(stream, alpha, {"stats": ids, "n": int(10_000 * n_scale)})


def _n(base, scale):
    return max(int(base * scale), 100)


SUITES = {
    "clades": lambda s, a, k: (experiment_absorption(s, a, _n(10_000, k)) + _clades(s, a, k)
                               + experiment_leftmost_split(s, a, _n(10_000, k))),
    "kernels": lambda s, a, k: (experiment_entrance(s, a, _n(10_000, k)) + experiment_total_mass(s, a, _n(5000, k))
                                + experiment_method_agreement(s, a, _n(5000, k))
                                + experiment_leftmost_law(s, a, _n(10_000, k))
                                + experiment_semigroup(s, a, _n(5000, k))),
    "pseudostat": lambda s, a, k: (experiment_pseudostationarity(s, a, 1, N=_n(5000, k))
                                   + experiment_pseudostationarity(s, a, 0, N=_n(5000, k))),
    "stationarity": lambda s, a, k: (experiment_stationarity(s, a, "type0", N=_n(5000, k))
                                     + experiment_stationarity(s, a, "type1", N=_n(5000, k))),
    "conjecture": lambda s, a, k: [experiment_conjecture_independence(s, a, 1, N=_n(5000, k)),
                                   experiment_conjecture_independence(s, a, 0, N=_n(5000, k))],
    "partitions": lambda s, a, k: (experiment_metric(s, _n(1000, k), _n(1000, k))
                                   + experiment_diversity(s, 0.5)),
}


def run_suite(name, stream, alpha=0.5, n_scale=1.0):
    """Reports of a named suite ('all' runs every suite), with Holm flags set."""
    names = list(SUITES) if name == "all" else [name]
    for nm in names:
        if nm not in SUITES:
            raise InvalidInput(f"unknown suite {nm!r}; choose from {', '.join(['all', *SUITES])}")
    reports = []
    for nm in names:
        reports.extend(SUITES[nm](as_stream(stream), alpha, n_scale))
    return holm(reports)
