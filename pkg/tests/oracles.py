"""Reference implementations the test suite trusts.

Everything in this file is written straight from the defining formula, in
plain Python, with no imports from phrasecraft and no shared helpers. The
point is independence: a bug in the library should disagree with these, not
co-occur in them. Keep them naive; do not optimize or refactor them to
match production code.
"""

import math


# --- optimizer ------------------------------------------------------------------


def adam_path(grad_seqs, lrs, beta1=0.9, beta2=0.999, eps=1e-8, theta0=0.0):
    """Run the published Adam recurrence on one coordinate.

    grad_seqs is the gradient this coordinate sees at each optimizer call;
    lrs the step size at each call. The timestep is shared by the whole
    parameter vector, so it advances on every call; a gradient of exactly
    0.0 leaves the coordinate itself untouched (no moment decay, no
    update), and the bias correction for later updates uses the shared
    count. Returns the final parameter value.
    """
    theta = theta0
    m = 0.0
    v = 0.0
    t = 0
    for g, lr in zip(grad_seqs, lrs):
        t += 1
        if g == 0.0:
            continue
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        theta = theta - lr * m_hat / (math.sqrt(v_hat) + eps)
    return theta


# --- edit distance ---------------------------------------------------------------


def lev_recursive(a, b):
    """Edit distance by the defining recursion. Exponential; only for tiny
    inputs."""
    a, b = tuple(a), tuple(b)
    if not a:
        return len(b)
    if not b:
        return len(a)
    head = 0 if a[0] == b[0] else 1
    return min(
        lev_recursive(a[1:], b) + 1,
        lev_recursive(a, b[1:]) + 1,
        lev_recursive(a[1:], b[1:]) + head,
    )


def lev_recursive_shared(a, b, memo):
    """The same recursion evaluated with sharing across suffix pairs.

    Computes the identical function as lev_recursive (the two are compared
    directly in the suite); the shared table is what makes sweeping every
    sequence pair of a small domain affordable.
    """
    key = (a, b)
    hit = memo.get(key)
    if hit is not None:
        return hit
    if not a:
        val = len(b)
    elif not b:
        val = len(a)
    else:
        head = 0 if a[0] == b[0] else 1
        val = min(
            lev_recursive_shared(a[1:], b, memo) + 1,
            lev_recursive_shared(a, b[1:], memo) + 1,
            lev_recursive_shared(a[1:], b[1:], memo) + head,
        )
    memo[key] = val
    return val


def lcs_brute(a, b):
    """Longest contiguous common run, by trying every window of a against
    every position of b."""
    a, b = list(a), list(b)
    best = 0
    for i in range(len(a)):
        for j in range(i + 1, len(a) + 1):
            window = a[i:j]
            width = j - i
            for k in range(len(b) - width + 1):
                if b[k : k + width] == window:
                    best = max(best, width)
                    break
    return best


# --- ranking ---------------------------------------------------------------------


def rank_full_sort(scores, descending, exclude_rows=()):
    """Total neighbor ranking by sorting every row.

    Ties break toward the lower row id. Returns the ranked row ids with the
    excluded rows removed before ranking.
    """
    rows = [i for i in range(len(scores)) if i not in set(exclude_rows)]
    if descending:
        return sorted(rows, key=lambda i: (-scores[i], i))
    return sorted(rows, key=lambda i: (scores[i], i))


# --- correlation -------------------------------------------------------------------


def pearson_naive(xs, ys):
    """Pearson r from the textbook two-pass formula in plain floats."""
    n = len(xs)
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    cov = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sx = math.sqrt(math.fsum((x - mx) ** 2 for x in xs))
    sy = math.sqrt(math.fsum((y - my) ** 2 for y in ys))
    return cov / (sx * sy)


# --- topic model -------------------------------------------------------------------


def ortho_double_loop(R):
    """Frobenius norm of R R^T - I with explicit index loops."""
    k = len(R)
    total = 0.0
    for i in range(k):
        for j in range(k):
            dot = math.fsum(R[i][d] * R[j][d] for d in range(len(R[i])))
            delta = 1.0 if i == j else 0.0
            total += (dot - delta) ** 2
    return math.sqrt(total)


def interpret_double_loop(R, L):
    """Per-topic, per-vocabulary-row inner products, one dot at a time."""
    return [
        [math.fsum(R[k][d] * L[v][d] for d in range(len(R[k]))) for v in range(len(L))]
        for k in range(len(R))
    ]
