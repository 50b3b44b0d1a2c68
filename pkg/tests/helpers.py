"""Reference computations shared by several test modules."""

from collections import Counter


def chain_rule_oracle(models, rows, variables, smoothing):
    """Smoothed frequencies by the chain rule over prefixes of ``variables``.

    Pr(w) = prod_i (n(w_<i, w_i) + s) / (n(w_<i) + k_i s), where k_i counts
    the values of variable i that some model extends the prefix with.
    Written from counts alone, no circuit involved.
    """
    order = list(variables)
    model_bits = [tuple(m[v] for v in order) for m in models]
    row_bits = [tuple(int(b) for b in r) for r in rows]
    counts = Counter()
    for r in row_bits:
        for i in range(len(order) + 1):
            counts[r[:i]] += 1
    ext = {}
    for m in model_bits:
        for i in range(len(order)):
            ext.setdefault(m[:i], set()).add(m[i])
    out = {}
    for m in model_bits:
        pr = 1.0
        for i in range(len(order)):
            k = len(ext[m[:i]])
            if k == 1:
                continue
            if counts[m[:i]] == 0 and smoothing == 0:
                pr = 0.0  # an unseen prefix already contributed a zero factor
                break
            pr *= (counts[m[:i + 1]] + smoothing) / (counts[m[:i]] + k * smoothing)
        out[m] = pr
    return out


def empirical(rows):
    c = Counter(tuple(int(b) for b in r) for r in rows)
    n = sum(c.values())
    return {k: v / n for k, v in c.items()}
