"""Independent reference implementations used as test oracles.

Everything here is deliberately written the slow, literal way (scalar
loops, exhaustive enumeration) and must stay independent of the package
code paths it checks.
"""

from __future__ import annotations

import itertools
import math


def try_parse(value: str):
    try:
        v = float(value)
    except (TypeError, ValueError):
        return None
    return v if math.isfinite(v) else None


def ref_bin_numeric(entries: list[str]):
    """The stated bin rule: last entry wins if parseable, else mean of the
    parseable ones, else no value."""
    parsed = [try_parse(e) for e in entries]
    if parsed and parsed[-1] is not None:
        return parsed[-1]
    earlier = [p for p in parsed if p is not None]
    if earlier:
        return sum(earlier) / len(earlier)
    return None


def ref_bin(records, n_hours: int, numeric_names, categorical_names):
    """Reference binning over (variable, offset, value) triples sorted by offset.

    Returns ({(hour, name): value}, {(hour, name): category}) dicts with only
    observed cells present.
    """
    per_bin: dict[tuple[int, str], list[str]] = {}
    cat_last: dict[tuple[int, str], str] = {}
    for variable, offset, value in records:
        if offset < 0:
            continue
        hour = offset // 60
        if hour >= n_hours:
            continue
        if variable in numeric_names:
            per_bin.setdefault((hour, variable), []).append(value)
        elif variable in categorical_names and value.strip():
            cat_last[(hour, variable)] = value.strip()
    numeric = {}
    for key, entries in per_bin.items():
        value = ref_bin_numeric(entries)
        if value is not None:
            numeric[key] = value
    return numeric, cat_last


def _sig(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def ref_lstm_sequence(x, Wx, Wh, b):
    """Scalar-loop LSTM over one sequence (list of timestep vectors).

    Parameter layout matches the package convention (fused gates ordered
    i, f, o, g) but the arithmetic is plain Python floats.
    """
    T = len(x)
    D = len(x[0])
    H = len(Wh[0])
    h = [0.0] * H
    c = [0.0] * H
    states = []
    for t in range(T):
        z = []
        for r in range(4 * H):
            acc = b[r]
            for d in range(D):
                acc += Wx[r][d] * x[t][d]
            for j in range(H):
                acc += Wh[r][j] * h[j]
            z.append(acc)
        i = [_sig(z[j]) for j in range(H)]
        f = [_sig(z[H + j]) for j in range(H)]
        o = [_sig(z[2 * H + j]) for j in range(H)]
        g = [math.tanh(z[3 * H + j]) for j in range(H)]
        c = [f[j] * c[j] + i[j] * g[j] for j in range(H)]
        h = [o[j] * math.tanh(c[j]) for j in range(H)]
        states.append(list(h))
    return states


def ref_bilstm_summary(x, fwd, bwd):
    """[last forward state ; last state of the reversed-direction pass]."""
    states_f = ref_lstm_sequence(x, fwd["Wx"], fwd["Wh"], fwd["b"])
    states_b = ref_lstm_sequence(list(reversed(x)), bwd["Wx"], bwd["Wh"], bwd["b"])
    return states_f[-1] + states_b[-1]


def ref_auroc_pairs(scores, labels) -> float:
    """O(n^2) positive-negative pair counting with half credit for ties."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                total += 1.0
            elif sp == sn:
                total += 0.5
    return total / (len(pos) * len(neg))


def ref_auprc_rank_enum(scores, labels) -> float:
    """Step-integral average precision by walking distinct score cutoffs."""
    n_pos = sum(labels)
    cutoffs = sorted(set(scores), reverse=True)
    ap = 0.0
    prev_recall = 0.0
    for cutoff in cutoffs:
        tp = sum(1 for s, y in zip(scores, labels) if s >= cutoff and y == 1)
        fp = sum(1 for s, y in zip(scores, labels) if s >= cutoff and y == 0)
        precision = tp / (tp + fp)
        recall = tp / n_pos
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def ref_operating_sweep(scores, labels, target_sens=0.90):
    """Exhaustive threshold sweep; returns (threshold, sens, spec, ppv, npv)."""
    n_pos = sum(labels)
    n_neg = len(labels) - n_pos
    best = None
    for cutoff in sorted(set(scores), reverse=True):
        tp = sum(1 for s, y in zip(scores, labels) if s >= cutoff and y == 1)
        fp = sum(1 for s, y in zip(scores, labels) if s >= cutoff and y == 0)
        sens = tp / n_pos
        if sens >= target_sens:
            tn = n_neg - fp
            fn = n_pos - tp
            ppv = tp / (tp + fp) if tp + fp else float("nan")
            npv = tn / (tn + fn) if tn + fn else float("nan")
            best = (cutoff, sens, tn / n_neg, ppv, npv)
            break  # first (largest) cutoff achieving the target
    return best


def ref_permutation_pvalue(a, b) -> float:
    """Exact two-tailed permutation test on the mean difference."""
    pooled = list(a) + list(b)
    n = len(a)
    observed = abs(sum(a) / len(a) - sum(b) / len(b))
    count = 0
    total = 0
    for combo in itertools.combinations(range(len(pooled)), n):
        group_a = [pooled[i] for i in combo]
        group_b = [pooled[i] for i in range(len(pooled)) if i not in set(combo)]
        stat = abs(sum(group_a) / n - sum(group_b) / len(group_b))
        if stat >= observed - 1e-12:
            count += 1
        total += 1
    return count / total
