"""Independent reference implementations used by several test files."""


def fuse_by_loops(msgs, T, K):
    """Cluster fusion written as plain loops over Python lists."""
    n = len(msgs)
    hard = [[1 if v >= 0.5 else 0 for v in m] for m in msgs]
    dist = [[sum(a != b for a, b in zip(hard[i], hard[j])) for j in range(n)] for i in range(n)]
    chosen = list(range(n))
    for t in range(T + 1):
        best_i, best_count = 0, -1
        for i in range(n):
            count = sum(1 for j in range(n) if dist[i][j] <= t)
            if count > best_count:
                best_i, best_count = i, count
        if best_count >= K:
            chosen = [j for j in range(n) if dist[best_i][j] <= t]
            break
    length = len(msgs[0])
    mean = [sum(msgs[j][k] for j in chosen) / len(chosen) for k in range(length)]
    return [1 if v >= 0.5 else 0 for v in mean]


def fuse_bitmask(ints, length, t_max=5, k_max=3):
    """Cluster fusion over messages given as ints, for every (T, K) at once.

    Returns {(T, K): fused int}. Bits are averaged by majority with ties to 1,
    which is what averaging 0/1 soft values and thresholding at 0.5 gives.
    """
    n = len(ints)
    dist = [[bin(a ^ b).count("1") for b in ints] for a in ints]

    def majority(chosen):
        fused = 0
        for k in range(length):
            ones = sum((ints[j] >> k) & 1 for j in chosen)
            if 2 * ones >= len(chosen):
                fused |= 1 << k
        return fused

    per_t = []
    for t in range(t_max + 1):
        counts = [sum(1 for d in row if d <= t) for row in dist]
        best = max(range(n), key=counts.__getitem__)  # first maximum wins
        per_t.append((counts[best], majority([j for j in range(n) if dist[best][j] <= t])))
    fallback = majority(range(n))
    out = {}
    for K in range(1, k_max + 1):
        first = next((t for t in range(t_max + 1) if per_t[t][0] >= K), None)
        for T in range(t_max + 1):
            out[(T, K)] = per_t[first][1] if first is not None and first <= T else fallback
    return out
