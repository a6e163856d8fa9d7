"""Independent reference implementations used as test oracles.

Nothing here imports the package under test. Arithmetic is done with plain
Python integers, ``fractions.Fraction`` or ``mpmath`` so a shared numpy bug
cannot make both sides agree.
"""

from fractions import Fraction
from itertools import combinations

import mpmath


def rates_by_count(labels, selected, abstained=()):
    """(hr, fdr, cov) as Fractions from explicit set counting."""
    n = len(labels)
    hits = {i for i, g in enumerate(labels) if g == 1}
    s, a = set(selected), set(abstained)
    tp = len(s & hits)
    hr = Fraction(tp, len(hits)) if hits else Fraction(0)
    fdr = Fraction(len(s - hits), max(len(s), 1))
    decided = len(s) + len(set(range(n)) - s - a)
    return hr, fdr, Fraction(decided, n)


def bsds_exact(labels, selected, abstained, lam, gamma):
    hr, fdr, cov = rates_by_count(labels, selected, abstained)
    lam, gamma = Fraction(lam), Fraction(gamma)
    return hr - lam * fdr - gamma * (1 - cov)


def best_bsds_within_budget(labels, budget, lam, gamma):
    """Exhaustive maximum of BSDS over non-empty full-coverage selections of at most ``budget`` candidates."""
    return max(
        bsds_exact(labels, c, (), lam, gamma)
        for k in range(1, budget + 1)
        for c in combinations(range(len(labels)), k)
    )


def tanimoto_bits(a, b):
    """Per-bit loop; all-zero vs all-zero is 1."""
    both = sum(1 for x, y in zip(a, b) if x and y)
    either = sum(1 for x, y in zip(a, b) if x or y)
    return 1.0 if either == 0 else both / either


def auroc_pairs(labels, scores):
    """Share of (hit, non-hit) pairs ranked correctly, ties counting one half."""
    pos = [s for s, g in zip(scores, labels) if g == 1]
    neg = [s for s, g in zip(scores, labels) if g == 0]
    wins = Fraction(0)
    for p in pos:
        for q in neg:
            wins += 1 if p > q else Fraction(1, 2) if p == q else 0
    return wins / (len(pos) * len(neg))


def mcc_direct(tp, fp, fn, tn):
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return None
    return float((tp * tn - fp * fn) / mpmath.sqrt(denom))


def top_b_by_sort(scores, budget):
    """Indices of the top ``budget`` by Python's sort on (-score, index)."""
    return [i for _, i in sorted((-s, i) for i, s in enumerate(scores))[:budget]]


def kendall_tau_b_pairs(x, y):
    """Tau-b by counting every pair."""
    n = len(x)
    conc = disc = tie_x = tie_y = 0
    for i in range(n):
        for j in range(i + 1, n):
            dx = (x[i] > x[j]) - (x[i] < x[j])
            dy = (y[i] > y[j]) - (y[i] < y[j])
            if dx == 0 and dy == 0:
                continue
            if dx == 0:
                tie_x += 1
            elif dy == 0:
                tie_y += 1
            elif dx == dy:
                conc += 1
            else:
                disc += 1
    denom = ((conc + disc + tie_x) * (conc + disc + tie_y)) ** 0.5
    return (conc - disc) / denom


def quantile_type7(sorted_values, q):
    """Linear-interpolation quantile in mpmath precision."""
    n = len(sorted_values)
    h = (n - 1) * mpmath.mpf(q)
    lo = int(mpmath.floor(h))
    hi = min(lo + 1, n - 1)
    return sorted_values[lo] + (h - lo) * (sorted_values[hi] - sorted_values[lo])


def bca_reference(replicates, point, jackknife, level, dps=50):
    """BCa endpoints from the textbook formulas evaluated at ``dps`` digits."""
    with mpmath.workdps(dps):
        reps = sorted(mpmath.mpf(v) for v in replicates)
        r = len(reps)
        below = sum(1 for v in reps if v < point)
        share = min(max(mpmath.mpf(below) / r, mpmath.mpf(1) / (r + 1)), mpmath.mpf(r) / (r + 1))
        z0 = mpmath.sqrt(2) * mpmath.erfinv(2 * share - 1)
        jk = [mpmath.mpf(v) for v in jackknife]
        if len(jk) >= 2:
            mean = mpmath.fsum(jk) / len(jk)
            d = [mean - v for v in jk]
            ss = mpmath.fsum(v * v for v in d)
            a = mpmath.fsum(v**3 for v in d) / (6 * ss ** mpmath.mpf(1.5)) if ss else mpmath.mpf(0)
        else:
            a = mpmath.mpf(0)
        tail = (1 - mpmath.mpf(level)) / 2
        out = []
        for alpha in (tail, 1 - tail):
            z = mpmath.sqrt(2) * mpmath.erfinv(2 * alpha - 1)
            adj = mpmath.ncdf(z0 + (z0 + z) / (1 - a * (z0 + z)))
            out.append(quantile_type7(reps, adj))
        return float(out[0]), float(out[1]), float(z0), float(a)


def soft_bsds_reference(scores, labels, fraction, alpha, lam, gamma, dps=40):
    """Sigmoid-gated BSDS with the type-7 threshold, evaluated in mpmath."""
    with mpmath.workdps(dps):
        s = [mpmath.mpf(v) for v in scores]
        t = quantile_type7(sorted(s), 1 - mpmath.mpf(fraction))
        w = [1 / (1 + mpmath.exp(-alpha * (v - t))) for v in s]
        g = list(labels)
        total = mpmath.fsum(w)
        hr = mpmath.fsum(wi for wi, gi in zip(w, g) if gi) / sum(g)
        fdr = mpmath.fsum(wi for wi, gi in zip(w, g) if not gi) / max(total, mpmath.mpf("1e-12"))
        return float(hr - lam * fdr - gamma * (1 - total / len(s)))


def borda_reference(rankings_as_scores):
    """Borda totals: each component gives N - r points to the item at rank r (1-based), mean points on ties."""
    n = len(rankings_as_scores[0])
    totals = [Fraction(0)] * n
    for comp in rankings_as_scores:
        for i in range(n):
            better = sum(1 for v in comp if v > comp[i])
            equal = sum(1 for v in comp if v == comp[i])
            # ranks better+1 .. better+equal share their points
            pts = sum(n - r for r in range(better + 1, better + equal + 1))
            totals[i] += Fraction(pts, equal)
    return totals


def retrieval_greedy_reference(scores, fps, kb_members, budget, weights=(0.5, 0.3, 0.2)):
    """Step-by-step re-simulation of the retrieval greedy loop on bit lists."""
    n = len(scores)
    retr = [max(tanimoto_bits(fps[i], fps[k]) for k in kb_members) for i in range(n)]
    chosen = []
    for _ in range(budget):
        best, best_val = None, None
        for i in range(n):
            if i in chosen:
                continue
            div = -max((tanimoto_bits(fps[i], fps[j]) for j in chosen), default=0.0)
            val = weights[0] * scores[i] + weights[1] * retr[i] + weights[2] * div
            if best_val is None or val > best_val:
                best, best_val = i, val
        chosen.append(best)
    return chosen
